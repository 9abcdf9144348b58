use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use super::crosseval::{contained, EvalGrid};
use crate::error::{Error, Result};

/// Fixed log10 limits of the heatmap color scale.
pub const COLOR_LIMITS: (f64, f64) = (-14.0, 2.0);

const CELL: usize = 20;
const MARGIN: usize = 70;

/// Perceptually ordered anchors, dark (low error) to bright (high error).
const RAMP: [(f64, f64, f64); 5] = [
    (13.0, 8.0, 135.0),
    (126.0, 3.0, 168.0),
    (204.0, 71.0, 120.0),
    (248.0, 149.0, 64.0),
    (240.0, 249.0, 33.0),
];

fn color(value: f64) -> String {
    let (lo, hi) = COLOR_LIMITS;
    let l = if value > 0.0 { value.log10() } else { lo };
    let t = ((l - lo) / (hi - lo)).clamp(0.0, 1.0) * (RAMP.len() - 1) as f64;
    let i = (t.floor() as usize).min(RAMP.len() - 2);
    let s = t - i as f64;
    let (a, b) = (RAMP[i], RAMP[i + 1]);
    let mix = |x: f64, y: f64| (x + (y - x) * s).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Self-contained SVG heatmap of log10 MSE, rows = training family, columns =
/// test family, with lines between family blocks.
pub fn emit_heatmap(grid: &EvalGrid, path: &Path) -> Result<()> {
    let n = grid.len();
    let size = MARGIN + n * CELL;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = size + 10,
        h = size + 10
    );
    let _ = writeln!(
        s,
        "<title>{} test MSE, log10 scale [{}, {}]</title>",
        grid.kind, COLOR_LIMITS.0, COLOR_LIMITS.1
    );
    for (i, c) in grid.classes.iter().enumerate() {
        let mid = MARGIN + i * CELL + CELL / 2;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="9" text-anchor="end" dominant-baseline="middle">{}</text>"#,
            MARGIN - 4,
            mid,
            escape(&c.to_string())
        );
        let _ = writeln!(
            s,
            r#"<text x="{mid}" y="{}" font-size="9" text-anchor="start" transform="rotate(-90 {mid} {})">{}</text>"#,
            MARGIN - 4,
            MARGIN - 4,
            escape(&c.to_string())
        );
    }
    for i in 0..n {
        for j in 0..n {
            let v = grid.mse[(i, j)];
            let _ = writeln!(
                s,
                r#"<rect class="cell" x="{}" y="{}" width="{CELL}" height="{CELL}" fill="{}"><title>{} -> {}: {:e}</title></rect>"#,
                MARGIN + j * CELL,
                MARGIN + i * CELL,
                color(v),
                grid.classes[i],
                grid.classes[j],
                v
            );
        }
    }
    let end = MARGIN + n * CELL;
    for b in 1..n {
        if grid.classes[b].family == grid.classes[b - 1].family {
            continue;
        }
        let at = MARGIN + b * CELL;
        let _ = writeln!(
            s,
            r#"<line class="separator" x1="{at}" y1="{MARGIN}" x2="{at}" y2="{end}" stroke="white" stroke-width="1.5"/>"#
        );
        let _ = writeln!(
            s,
            r#"<line class="separator" x1="{MARGIN}" y1="{at}" x2="{end}" y2="{at}" stroke="white" stroke-width="1.5"/>"#
        );
    }
    s.push_str("</svg>\n");
    write_text(path, &s)
}

/// Full-precision CSV with the family names as header row and column.
pub fn emit_csv(grid: &EvalGrid, path: &Path) -> Result<()> {
    let mut s = String::from("train\\test");
    for c in &grid.classes {
        let _ = write!(s, ",{c}");
    }
    s.push('\n');
    for (i, c) in grid.classes.iter().enumerate() {
        let _ = write!(s, "{c}");
        for j in 0..grid.len() {
            let _ = write!(s, ",{:e}", grid.mse[(i, j)]);
        }
        s.push('\n');
    }
    write_text(path, &s)
}

/// A cell whose test family is nested in its training family but whose
/// error exceeds the training error by more than the allowed factor.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub train: String,
    pub test: String,
    pub ratio: f64,
}

pub fn subspace_violations(grid: &EvalGrid, wiggle: f64) -> Vec<Violation> {
    let mut out = Vec::new();
    for i in 0..grid.len() {
        for j in 0..grid.len() {
            if i == j || !contained(grid.classes[j], grid.classes[i]) {
                continue;
            }
            let train = grid.rows[i].train_mse;
            let ratio = grid.mse[(i, j)] / train;
            if grid.mse[(i, j)] > wiggle * train {
                out.push(Violation {
                    train: grid.classes[i].to_string(),
                    test: grid.classes[j].to_string(),
                    ratio,
                });
            }
        }
    }
    out
}

#[derive(Serialize)]
struct RowSummary {
    train: String,
    seed: u64,
    train_mse: f64,
    diverged_seeds: Vec<u64>,
    worst_test: String,
    worst_mse: f64,
}

#[derive(Serialize)]
struct Summary {
    model: String,
    wiggle_room: f64,
    rows: Vec<RowSummary>,
    violations: Vec<Violation>,
}

/// Text table of the selected runs plus a TOML summary at `path` with the
/// extension `toml`.
pub fn emit_report(grid: &EvalGrid, wiggle: f64, path: &Path) -> Result<()> {
    let violations = subspace_violations(grid, wiggle);
    let mut rows = Vec::new();
    let mut s = String::new();
    let _ = writeln!(s, "model: {}", grid.kind);
    let _ = writeln!(s, "families: {}", grid.len());
    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "{:<10} {:>6} {:>14} {:>10} {:>14}  diverged",
        "train", "seed", "train_mse", "worst", "worst_mse"
    );
    for (i, r) in grid.rows.iter().enumerate() {
        let (wj, wv) = (0..grid.len())
            .map(|j| (j, grid.mse[(i, j)]))
            .fold((i, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
        let diverged: Vec<u64> = r.diverged.iter().map(|d| d.0).collect();
        let _ = writeln!(
            s,
            "{:<10} {:>6} {:>14.6e} {:>10} {:>14.6e}  {:?}",
            r.train.to_string(),
            r.seed,
            r.train_mse,
            grid.classes[wj].to_string(),
            wv,
            diverged
        );
        for (seed, why) in &r.diverged {
            let _ = writeln!(s, "    seed {seed}: {why}");
        }
        rows.push(RowSummary {
            train: r.train.to_string(),
            seed: r.seed,
            train_mse: r.train_mse,
            diverged_seeds: diverged,
            worst_test: grid.classes[wj].to_string(),
            worst_mse: wv,
        });
    }
    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "nested-span cells above {wiggle}x train MSE: {}",
        violations.len()
    );
    for v in &violations {
        let _ = writeln!(s, "    {} -> {}: {:.3e}x", v.train, v.test, v.ratio);
    }
    write_text(path, &s)?;
    let summary = Summary {
        model: grid.kind.to_string(),
        wiggle_room: wiggle,
        rows,
        violations,
    };
    let text = toml::to_string(&summary).map_err(|e| Error::format(path, e.to_string()))?;
    write_text(&path.with_extension("toml"), &text)
}
