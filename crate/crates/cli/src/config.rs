//! Flat config files, flag/config/default resolution and run manifests.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::Serialize;

/// Failure of a CLI run, carrying its exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(genbench::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) if e.is_numerical() => 1,
            CliError::Core(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<genbench::Error> for CliError {
    fn from(e: genbench::Error) -> Self {
        CliError::Core(e)
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Debug, Clone, Serialize)]
pub struct Conflict {
    pub key: String,
    pub flag: String,
    pub config: String,
}

/// Resolves each setting as flag, else config file entry, else default,
/// remembering what was chosen and where the two sources disagreed.
#[derive(Debug, Default)]
pub struct Resolver {
    file: Option<PathBuf>,
    entries: BTreeMap<String, String>,
    consumed: BTreeSet<String>,
    resolved: BTreeMap<String, String>,
    conflicts: Vec<Conflict>,
}

fn flatten(value: &toml::Value) -> Option<String> {
    match value {
        toml::Value::String(s) => Some(s.clone()),
        toml::Value::Integer(i) => Some(i.to_string()),
        toml::Value::Float(x) => Some(x.to_string()),
        toml::Value::Boolean(b) => Some(b.to_string()),
        toml::Value::Array(items) => items.iter().map(flatten).collect::<Option<Vec<_>>>().map(|v| v.join(",")),
        _ => None,
    }
}

impl Resolver {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read config file {}: {e}", path.display())))?;
        let table: toml::Table =
            toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        let mut entries = BTreeMap::new();
        for (k, v) in &table {
            let s = flatten(v).ok_or_else(|| {
                usage(format!("{}: '{k}' must be a plain value, not a table", path.display()))
            })?;
            entries.insert(k.replace('_', "-"), s);
        }
        Ok(Self {
            file: Some(path.to_path_buf()),
            entries,
            ..Self::default()
        })
    }

    /// Flag if given, else the config entry; parsed with `parse`.
    pub fn get<T>(
        &mut self,
        key: &str,
        flag: Option<&str>,
        parse: impl Fn(&str) -> Result<T, String>,
    ) -> CliResult<Option<T>> {
        self.consumed.insert(key.to_string());
        let from_file = self.entries.get(key).cloned();
        if let (Some(f), Some(c)) = (flag, &from_file) {
            if f != c {
                self.conflicts.push(Conflict {
                    key: key.into(),
                    flag: f.into(),
                    config: c.clone(),
                });
            }
        }
        let Some(raw) = flag.map(str::to_string).or(from_file) else {
            return Ok(None);
        };
        let value = parse(&raw).map_err(|e| usage(format!("invalid value '{raw}' for {key}: {e}")))?;
        self.resolved.insert(key.into(), raw);
        Ok(Some(value))
    }

    pub fn or<T: fmt::Display>(
        &mut self,
        key: &str,
        flag: Option<&str>,
        default: T,
        parse: impl Fn(&str) -> Result<T, String>,
    ) -> CliResult<T> {
        match self.get(key, flag, parse)? {
            Some(v) => Ok(v),
            None => {
                self.resolved.insert(key.into(), default.to_string());
                Ok(default)
            }
        }
    }

    /// Rejects config entries that no setting of this subcommand read.
    pub fn finish(&self) -> CliResult<()> {
        let unknown: Vec<&String> = self.entries.keys().filter(|k| !self.consumed.contains(*k)).collect();
        if let (Some(first), Some(file)) = (unknown.first(), &self.file) {
            return Err(usage(format!(
                "{}: unknown key '{first}' for this subcommand",
                file.display()
            )));
        }
        Ok(())
    }

    pub fn manifest(&self, command: &str) -> RunManifest {
        RunManifest {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            revision: genbench::REVISION.into(),
            rng: genbench::rng::RNG_NAME.into(),
            config_file: self.file.as_ref().map(|p| p.display().to_string()),
            resolved: self.resolved.clone(),
            conflicts: self.conflicts.clone(),
            train: None,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub revision: String,
    pub rng: String,
    pub config_file: Option<String>,
    pub resolved: BTreeMap<String, String>,
    pub conflicts: Vec<Conflict>,
    pub train: Option<genbench::models::TrainConfig>,
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> CliResult<()> {
        let text = toml::to_string(self).map_err(|e| usage(format!("cannot render manifest: {e}")))?;
        write_file(&dir.join("run.toml"), &text)
    }
}

pub fn write_file(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| usage(format!("cannot write {}: {e}", path.display())))
}

/// Creates a fresh output directory. An existing non-empty one is replaced
/// only with `force`.
pub fn prepare_out(dir: &Path, force: bool) -> CliResult<()> {
    if dir.exists() {
        let occupied = !dir.is_dir()
            || std::fs::read_dir(dir)
                .map_err(|e| usage(format!("cannot read {}: {e}", dir.display())))?
                .next()
                .is_some();
        if occupied {
            if !force {
                return Err(usage(format!(
                    "{} already exists; pass --force to overwrite it",
                    dir.display()
                )));
            }
            let removed = if dir.is_dir() {
                std::fs::remove_dir_all(dir)
            } else {
                std::fs::remove_file(dir)
            };
            removed.map_err(|e| usage(format!("cannot clear {}: {e}", dir.display())))?;
        }
    }
    std::fs::create_dir_all(dir).map_err(|e| usage(format!("cannot create {}: {e}", dir.display())))
}

pub fn parse_from<T: std::str::FromStr>(s: &str) -> Result<T, String>
where
    T::Err: fmt::Display,
{
    s.trim().parse::<T>().map_err(|e| e.to_string())
}

pub fn parse_bool(s: &str) -> Result<bool, String> {
    match s.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(format!("expected true or false, got '{other}'")),
    }
}

pub fn parse_n_grid(s: &str) -> Result<usize, String> {
    let n: usize = parse_from(s)?;
    if n < 2 {
        return Err("n-grid must be at least 2".into());
    }
    Ok(n)
}

pub fn parse_positive(s: &str) -> Result<usize, String> {
    let n: usize = parse_from(s)?;
    if n == 0 {
        return Err("must be at least 1".into());
    }
    Ok(n)
}

pub fn parse_positive_f64(s: &str) -> Result<f64, String> {
    let x: f64 = parse_from(s)?;
    if !(x > 0.0) || !x.is_finite() {
        return Err("must be a positive number".into());
    }
    Ok(x)
}

/// Comma-separated integers and inclusive ranges: `1..8`, `0,1,2`, `1..3,7`.
pub fn parse_list(s: &str) -> Result<Vec<u64>, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let a: u64 = parse_from(a)?;
            let b: u64 = parse_from(b.trim_start_matches('='))?;
            if a > b {
                return Err(format!("empty range {part}"));
            }
            out.extend(a..=b);
        } else {
            out.push(parse_from(part)?);
        }
    }
    if out.is_empty() {
        return Err("empty list".into());
    }
    Ok(out)
}

pub fn parse_usize_list(s: &str) -> Result<Vec<usize>, String> {
    Ok(parse_list(s)?.into_iter().map(|v| v as usize).collect())
}
