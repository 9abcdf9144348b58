use std::fmt::Write as _;

use genbench::datasets::{generate_dataset, make_grid, read_dataset, write_dataset, FunctionClass};
use genbench::harness::{
    cross_eval, emit_csv, emit_heatmap, emit_report, fd_grid_sweep, fit_convergence_order, mse, probe_greens,
    theory_comparison, FamilyGrid, TheorySetup, WIGGLE_ROOM,
};
use genbench::matrix_io::write_matrix;
use genbench::models::{
    read_checkpoint, train as train_model, write_checkpoint, Checkpoint, InitScheme, Length, LrSchedule, ModelKind,
    Optimizer, TrainConfig,
};
use genbench::oracle::{assemble_green_matrix, OperatorMatrix, PsiBasis, Role};

use crate::config::{
    parse_bool, parse_from, parse_list, parse_n_grid, parse_positive, parse_positive_f64, parse_usize_list,
    prepare_out, usage, write_file, CliResult, Resolver,
};
use crate::{Common, CrossArgs, GenArgs, ProbeArgs, SweepArgs, TheoryArgs, TrainArgs, TrainFlags};

fn parse_kind(s: &str) -> Result<ModelKind, String> {
    parse_from(s)
}

fn parse_class(s: &str) -> Result<FunctionClass, String> {
    parse_from(s)
}

fn parse_classes(s: &str) -> Result<Vec<FunctionClass>, String> {
    s.split(',').filter(|t| !t.trim().is_empty()).map(parse_class).collect()
}

fn parse_optimizer(s: &str) -> Result<bool, String> {
    match s.trim().to_ascii_lowercase().as_str() {
        "adamw" => Ok(true),
        "gd" => Ok(false),
        other => Err(format!("expected adamw or gd, got '{other}'")),
    }
}

fn parse_init(s: &str) -> Result<InitScheme, String> {
    match s.trim().to_ascii_lowercase().as_str() {
        "zeros" | "zero" => Ok(InitScheme::Zeros),
        "fan-in" | "fan-in-uniform" | "uniform" => Ok(InitScheme::FanInUniform),
        other => Err(format!("expected zeros or fan-in, got '{other}'")),
    }
}

fn parse_batch(s: &str) -> Result<Option<usize>, String> {
    if s.trim() == "full" {
        Ok(None)
    } else {
        parse_positive(s).map(Some)
    }
}

fn parse_nonneg_f64(s: &str) -> Result<f64, String> {
    let x: f64 = parse_from(s)?;
    if !(x >= 0.0) || !x.is_finite() {
        return Err("must be a non-negative number".into());
    }
    Ok(x)
}

/// Per-model defaults, or theorem mode, with the given overrides applied.
fn train_config(res: &mut Resolver, kind: ModelKind, f: &TrainFlags, seed: u64) -> CliResult<TrainConfig> {
    let theorem = res.or("theorem", f.theorem.then_some("true"), false, parse_bool)?;
    let mut cfg = if theorem {
        TrainConfig {
            hidden: kind.default_hidden(),
            ..TrainConfig::theorem()
        }
    } else {
        TrainConfig::defaults_for(kind)
    };
    cfg.seed = seed;

    let adamw = res.get("optimizer", f.optimizer.as_deref(), parse_optimizer)?;
    let decay = res.get("weight-decay", f.weight_decay.as_deref(), parse_nonneg_f64)?;
    match (adamw, decay) {
        (Some(false), Some(_)) => return Err(usage("weight-decay applies only to adamw")),
        (Some(false), None) => cfg.optimizer = Optimizer::Gd,
        (Some(true), d) => cfg.optimizer = Optimizer::adamw(d.unwrap_or(0.01)),
        (None, Some(d)) => match cfg.optimizer {
            Optimizer::AdamW { .. } => cfg.optimizer = Optimizer::adamw(d),
            Optimizer::Gd => return Err(usage("weight-decay applies only to adamw")),
        },
        (None, None) => {}
    }

    let lr = res.get("lr", f.lr.as_deref(), parse_positive_f64)?;
    let start = res.get("lr-start", f.lr_start.as_deref(), parse_positive_f64)?;
    let end = res.get("lr-end", f.lr_end.as_deref(), parse_positive_f64)?;
    if lr.is_some() && (start.is_some() || end.is_some()) {
        return Err(usage("lr conflicts with lr-start/lr-end"));
    }
    if let Some(lr) = lr {
        cfg.schedule = LrSchedule::Constant { lr };
    } else if start.is_some() || end.is_some() {
        cfg.schedule = match cfg.schedule {
            LrSchedule::Linear { start: s, end: e } => LrSchedule::Linear {
                start: start.unwrap_or(s),
                end: end.unwrap_or(e),
            },
            LrSchedule::Step { start: s, factor, every } if end.is_none() => LrSchedule::Step {
                start: start.unwrap_or(s),
                factor,
                every,
            },
            _ => match (start, end) {
                (Some(start), Some(end)) => LrSchedule::Linear { start, end },
                _ => return Err(usage("a linear schedule needs both lr-start and lr-end here")),
            },
        };
    }

    let epochs = res.get("epochs", f.epochs.as_deref(), parse_positive)?;
    let steps = res.get("steps", f.steps.as_deref(), parse_positive)?;
    match (epochs, steps) {
        (Some(_), Some(_)) => return Err(usage("epochs conflicts with steps")),
        (Some(e), None) => cfg.length = Length::Epochs(e),
        (None, Some(s)) => cfg.length = Length::Steps(s),
        (None, None) => {}
    }
    if let Some(b) = res.get("batch-size", f.batch_size.as_deref(), parse_batch)? {
        cfg.batch_size = b;
    }
    if let Some(h) = res.get("hidden", f.hidden.as_deref(), parse_positive)? {
        cfg.hidden = h;
    }
    if let Some(i) = res.get("init", f.init.as_deref(), parse_init)? {
        cfg.init = i;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn gen(common: &Common, a: GenArgs) -> CliResult<()> {
    let mut res = Resolver::load(common.config.as_deref())?;
    let class = res
        .get("family", a.family.as_deref(), parse_class)?
        .ok_or_else(|| usage("--family is required"))?;
    let n_grid = res.or("n-grid", a.n_grid.as_deref(), 22, parse_n_grid)?;
    let n = res.or("n-examples", a.n_examples.as_deref(), 1000, parse_positive)?;
    let seed = res.or("seed", a.seed.as_deref(), 0u64, parse_from)?;
    let k = res.or("k", a.k.as_deref(), 1.0, parse_positive_f64)?;
    res.finish()?;
    prepare_out(&a.out, common.force)?;
    res.manifest("gen").write(&a.out)?;
    let d = generate_dataset(class, n_grid, n, seed, k)?;
    write_dataset(&d, &a.out)?;
    println!("{} samples of {class} on n_grid = {n_grid} -> {}", d.len(), a.out.display());
    Ok(())
}

pub fn train(common: &Common, a: TrainArgs) -> CliResult<()> {
    let mut res = Resolver::load(common.config.as_deref())?;
    let kind = res.or("model", a.model.as_deref(), ModelKind::Linear, parse_kind)?;
    let seed = res.or("seed", a.seed.as_deref(), 0u64, parse_from)?;
    let cfg = train_config(&mut res, kind, &a.train, seed)?;
    res.finish()?;
    let data = read_dataset(&a.data)?;
    prepare_out(&a.out, common.force)?;
    let mut manifest = res.manifest("train");
    manifest.resolved.insert("data".into(), a.data.display().to_string());
    manifest.train = Some(cfg.clone());
    manifest.write(&a.out)?;

    let (params, history) = train_model(kind, &data, &cfg)?;
    let ckpt = Checkpoint {
        params,
        n_grid: data.grid.n_grid(),
        k: data.k,
        seed,
        config_hash: cfg.hash(),
    };
    write_checkpoint(&ckpt, &a.out)?;
    let text = toml::to_string(&history).map_err(|e| usage(format!("cannot render history: {e}")))?;
    write_file(&a.out.join("history.toml"), &text)?;
    println!(
        "{kind} on {}: train MSE {:.6e} (best epoch {}) -> {}",
        data.class,
        mse(&ckpt.params, &data)?,
        history.best_epoch,
        a.out.display()
    );
    Ok(())
}

pub fn crosseval(common: &Common, a: CrossArgs) -> CliResult<()> {
    let mut res = Resolver::load(common.config.as_deref())?;
    let kind = res.or("model", a.model.as_deref(), ModelKind::Linear, parse_kind)?;
    let n_grid = res.or("n-grid", a.n_grid.as_deref(), 22, parse_n_grid)?;
    let seeds = res.get("seeds", a.seeds.as_deref(), parse_list)?.unwrap_or_else(|| (0..5).collect());
    let n = res.or("n-examples", a.n_examples.as_deref(), 1000, parse_positive)?;
    let families = res.get("families", a.families.as_deref(), parse_classes)?;
    let data_seed = res.or("data-seed", a.data_seed.as_deref(), 0u64, parse_from)?;
    let k = res.or("k", a.k.as_deref(), 1.0, parse_positive_f64)?;
    let wiggle = res.or("wiggle", a.wiggle.as_deref(), WIGGLE_ROOM, parse_positive_f64)?;
    let cfg = train_config(&mut res, kind, &a.train, 0)?;
    res.finish()?;

    let mut grid = FamilyGrid::new(n_grid, n).with_seeds(seeds);
    grid.data_seed = data_seed;
    grid.k = k;
    if let Some(f) = families {
        grid = grid.with_classes(&f)?;
    }
    grid.validate()?;
    prepare_out(&a.out, common.force)?;
    let mut manifest = res.manifest("crosseval");
    manifest.train = Some(cfg.clone());
    manifest.resolved.insert(
        "seeds".into(),
        grid.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(","),
    );
    manifest.resolved.insert(
        "families".into(),
        grid.classes.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(","),
    );
    manifest.write(&a.out)?;

    let eval = cross_eval(kind, &grid, &cfg)?;
    emit_csv(&eval, &a.out.join("evalgrid.csv"))?;
    emit_heatmap(&eval, &a.out.join("evalgrid.svg"))?;
    emit_report(&eval, wiggle, &a.out.join("report.txt"))?;
    println!("{kind}: {}x{} grid -> {}", eval.len(), eval.len(), a.out.display());
    Ok(())
}

pub fn probe(common: &Common, a: ProbeArgs) -> CliResult<()> {
    let mut res = Resolver::load(common.config.as_deref())?;
    let basis = res.or("basis", a.basis.as_deref(), "hat".to_string(), parse_from)?;
    res.finish()?;
    let basis = match basis.as_str() {
        "hat" | "linear" => PsiBasis::HatLinear,
        "constant" | "piecewise-constant" => PsiBasis::PiecewiseConstant,
        other => return Err(usage(format!("unknown basis '{other}'; expected hat or constant"))),
    };
    let ckpt = read_checkpoint(&a.ckpt)?;
    prepare_out(&a.out, common.force)?;
    let mut manifest = res.manifest("probe");
    manifest.resolved.insert("ckpt".into(), a.ckpt.display().to_string());
    manifest.write(&a.out)?;

    let grid = make_grid(ckpt.n_grid)?;
    let reference = assemble_green_matrix(&grid, basis, ckpt.k)?;
    let r = probe_greens(&ckpt.params, &grid, &reference)?;
    write_matrix(&OperatorMatrix::new(Role::WeightsW, r.debiased.clone())?, &a.out, "probe")?;
    write_matrix(&OperatorMatrix::new(Role::WeightsW, r.raw.clone())?, &a.out, "probe_raw")?;
    write_matrix(&reference, &a.out, "reference")?;
    if let Some(inv) = &r.inversion.inverse {
        write_matrix(&OperatorMatrix::new(Role::StencilL, inv.clone())?, &a.out, "stencil")?;
    }
    let mut s = String::new();
    let _ = writeln!(s, "model: {}", ckpt.params.kind());
    let _ = writeln!(s, "n_grid: {}", ckpt.n_grid);
    let _ = writeln!(s, "relative error vs reference: {:.6e}", r.rel_error);
    let _ = writeln!(s, "condition number: {:.6e}", r.inversion.condition);
    match r.inversion.bandedness {
        Some(b) => {
            let _ = writeln!(s, "invertible: yes\nbandedness of inverse: {b:.6}");
        }
        None => {
            let _ = writeln!(s, "invertible: no (condition above limit)");
        }
    }
    write_file(&a.out.join("report.txt"), &s)?;
    print!("{s}");
    Ok(())
}

pub fn sweep(common: &Common, a: SweepArgs) -> CliResult<()> {
    let mut res = Resolver::load(common.config.as_deref())?;
    let model = res.or("model", a.model.as_deref(), "fd".to_string(), parse_from)?;
    if !model.starts_with("fd") {
        return Err(usage(format!("sweep supports the fd model only, got '{model}'")));
    }
    let q = res.get("q", a.q.as_deref(), parse_usize_list)?.unwrap_or_else(|| vec![2, 4]);
    let grids = res
        .get("grids", a.grids.as_deref(), parse_usize_list)?
        .unwrap_or_else(|| vec![8, 16, 32, 64]);
    let p = res.get("p", a.p.as_deref(), parse_usize_list)?.unwrap_or_else(|| (1..=8).collect());
    let setup = TheorySetup {
        n_examples: res.or("n-examples", a.n_examples.as_deref(), 1000, parse_positive)?,
        seed: res.or("seed", a.seed.as_deref(), 0u64, parse_from)?,
        k: res.or("k", a.k.as_deref(), 1.0, parse_positive_f64)?,
    };
    res.finish()?;
    if let Some(&g) = grids.iter().find(|&&g| g < 2) {
        return Err(usage(format!("grid size {g} is below 2")));
    }
    prepare_out(&a.out, common.force)?;
    res.manifest("sweep").write(&a.out)?;

    let rows = fd_grid_sweep(&q, &grids, &p, &setup)?;
    let mut csv = String::from("q,n_grid,p,w,train_mse,rel_error\n");
    for r in &rows {
        let _ = writeln!(csv, "{},{},{},{:e},{:e},{:e}", r.q, r.n_grid, r.p, r.w, r.train_mse, r.rel_error);
    }
    write_file(&a.out.join("sweep.csv"), &csv)?;
    let mut report = String::from("convergence order of |w - k| / k in dx\n");
    for &qq in &q {
        for &pp in &p {
            let pts: Vec<(f64, f64)> = rows
                .iter()
                .filter(|r| r.q == qq && r.p == pp)
                .map(|r| (1.0 / r.n_grid as f64, r.rel_error))
                .collect();
            let (dx, err): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
            let slope = match fit_convergence_order(&dx, &err) {
                Ok(s) => format!("{s:.3}"),
                Err(_) => "n/a".into(),
            };
            let _ = writeln!(report, "q = {qq}, p = {pp}: {slope}");
        }
    }
    write_file(&a.out.join("report.txt"), &report)?;
    print!("{report}");
    Ok(())
}

pub fn theory(common: &Common, a: TheoryArgs) -> CliResult<()> {
    let mut res = Resolver::load(common.config.as_deref())?;
    let p = res.get("p", a.p.as_deref(), parse_usize_list)?.unwrap_or_else(|| (1..=8).collect());
    let n_grid = res.or("n-grid", a.n_grid.as_deref(), 22, parse_n_grid)?;
    let q = res.or("q", a.q.as_deref(), 2usize, parse_from)?;
    let setup = TheorySetup {
        n_examples: res.or("n-examples", a.n_examples.as_deref(), 1000, parse_positive)?,
        seed: res.or("seed", a.seed.as_deref(), 0u64, parse_from)?,
        k: res.or("k", a.k.as_deref(), 1.0, parse_positive_f64)?,
    };
    res.finish()?;
    prepare_out(&a.out, common.force)?;
    res.manifest("theory").write(&a.out)?;

    let rows = theory_comparison(&p, n_grid, q, &setup)?;
    let mut csv = String::from("p,linear_empirical,linear_predicted,linear_fixed_point,fd_empirical,fd_predicted\n");
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{:e},{:e},{:e},{:e},{:e}",
            r.p, r.linear_empirical, r.linear_predicted, r.linear_fixed_point, r.fd_empirical, r.fd_predicted
        );
    }
    write_file(&a.out.join("theory.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}

