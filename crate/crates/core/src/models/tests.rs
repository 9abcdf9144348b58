use super::*;
use crate::datasets::{generate_dataset, make_grid, FunctionClass};
use crate::oracle::{
    assemble_basis, assemble_green_matrix, orthonormal_range, predict_w_star, projected_green_operator, PsiBasis,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_batch(m: usize, b: usize, seed: u64) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = DMatrix::from_fn(m, b, |_, _| rng.random_range(-1.0..1.0));
    let u = DMatrix::from_fn(m, b, |_, _| rng.random_range(-0.2..0.2));
    (f, u)
}

fn jitter(params: &mut ModelParams, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for s in params.slices_mut() {
        for v in s.iter_mut() {
            *v += rng.random_range(-0.05..0.05);
        }
    }
}

/// Largest relative mismatch between analytic and central-difference
/// gradients over `coords` random parameter coordinates.
fn gradient_mismatch(params: &ModelParams, f: &DMatrix<f64>, u: &DMatrix<f64>, grid: &Grid, seed: u64, coords: usize) -> f64 {
    let c = check_gradients(params, f, u, grid, coords, seed).unwrap();
    assert!(c.checked > 0, "every coordinate sat on a kink");
    c.worst
}

#[test]
fn kinds_parse_and_print() {
    for kind in ModelKind::all_default().into_iter().chain([ModelKind::FdFit(4)]) {
        assert_eq!(kind.to_string().parse::<ModelKind>().unwrap(), kind);
    }
    assert_eq!("fd".parse::<ModelKind>().unwrap(), ModelKind::FdFit(2));
    assert!("fno".parse::<ModelKind>().is_err());
}

#[test]
fn initialization() {
    match init_model(ModelKind::Linear, 9, 0, InitScheme::Zeros) {
        ModelParams::Linear { w } => assert_eq!(w, DMatrix::zeros(9, 9)),
        _ => unreachable!(),
    }
    let mlp = init_model(ModelKind::Mlp, 21, 5, InitScheme::FanInUniform);
    let ModelParams::Mlp(d) = &mlp else { unreachable!() };
    assert_eq!(d.w1.shape(), (1024, 21));
    assert_eq!(d.w2.shape(), (21, 1024));
    assert!(d.b1.iter().all(|&b| b == 0.0));
    assert!(d.w1.iter().all(|w| w.abs() <= 1.0 / 21f64.sqrt()));
    assert_eq!(mlp, init_model(ModelKind::Mlp, 21, 5, InitScheme::FanInUniform));
    assert_ne!(mlp, init_model(ModelKind::Mlp, 21, 6, InitScheme::FanInUniform));

    let onet = init_model(ModelKind::DeepOnet, 21, 1, InitScheme::FanInUniform);
    let ModelParams::DeepOnet(o) = &onet else { unreachable!() };
    assert_eq!(o.branch.w1.shape(), (256, 21));
    assert_eq!(o.branch.w2.shape(), (256, 256));
    assert_eq!(o.trunk.w1.shape(), (256, 1));
    assert_eq!(o.trunk.w2.shape(), (256, 256));
    let ModelParams::DeepLinear(dl) = init_model(ModelKind::DeepLinear, 21, 1, InitScheme::FanInUniform) else {
        unreachable!()
    };
    assert_eq!(dl.w1.shape(), (100, 21));
}

#[test]
fn linear_forward_is_green_matrix_product() {
    let grid = make_grid(10).unwrap();
    let a = assemble_green_matrix(&grid, PsiBasis::HatLinear, 1.0).unwrap().data;
    let p = ModelParams::Linear { w: a.clone() };
    let f = DVector::from_fn(9, |i, _| (i as f64 * 0.7).cos());
    assert_eq!(forward(&p, &f, &grid).unwrap(), &a * &f);
}

#[test]
fn deep_linear_composition() {
    let grid = make_grid(8).unwrap();
    let m = grid.m();
    let a = assemble_green_matrix(&grid, PsiBasis::HatLinear, 1.0).unwrap().data;
    let d = Dense2 {
        w1: DMatrix::identity(m, m),
        b1: DVector::zeros(m),
        w2: a.clone(),
        b2: DVector::zeros(m),
    };
    let p = ModelParams::DeepLinear(d);
    let f = DVector::from_fn(m, |i, _| i as f64 - 3.0);
    assert!((forward(&p, &f, &grid).unwrap() - &a * &f).amax() < 1e-15);
}

#[test]
fn mlp_at_zero_input() {
    let grid = make_grid(6).unwrap();
    let mut p = init_model_sized(ModelKind::Mlp, 5, 16, 2, InitScheme::FanInUniform);
    let ModelParams::Mlp(d) = &mut p else { unreachable!() };
    d.b1 = DVector::from_fn(16, |i, _| i as f64 - 8.0);
    d.b2 = DVector::from_fn(5, |i, _| 0.1 * i as f64);
    let expect = &d.w2 * d.b1.map(|z| if z > 0.0 { z } else { 0.01 * z }) + &d.b2;
    let got = forward(&p, &DVector::zeros(5), &grid).unwrap();
    assert!((got - expect).amax() < 1e-14);
}

#[test]
fn deeponet_is_a_dot_product_of_towers() {
    let grid = make_grid(7).unwrap();
    let p = init_model_sized(ModelKind::DeepOnet, 6, 12, 4, InitScheme::FanInUniform);
    let ModelParams::DeepOnet(o) = &p else { unreachable!() };
    let f = DVector::from_fn(6, |i, _| (i as f64).sin());
    let relu = |v: DVector<f64>| v.map(|z| z.max(0.0));
    let branch = &o.branch.w2 * relu(&o.branch.w1 * &f + &o.branch.b1) + &o.branch.b2;
    let got = forward(&p, &f, &grid).unwrap();
    for (j, &x) in grid.nodes().iter().enumerate() {
        let h = relu(&o.trunk.w1 * DVector::from_element(1, x) + &o.trunk.b1);
        let trunk = relu(&o.trunk.w2 * h + &o.trunk.b2);
        assert!((got[j] - trunk.dot(&branch)).abs() < 1e-13);
    }
}

#[test]
fn fd_model_forward_solves_its_operator() {
    let grid = make_grid(22).unwrap();
    let d = generate_dataset(FunctionClass::poly(1), 22, 5, 0, 1.0).unwrap();
    let p = ModelParams::FdFit { q: 2, w: 1.0 };
    // FD2 is exact on cubic solutions, so the discrete solve reproduces u.
    let u = forward_batch(&p, &d.f, &grid).unwrap();
    assert!((u - &d.u).amax() < 1e-12);
}

#[test]
fn shape_errors() {
    let grid = make_grid(8).unwrap();
    let p = init_model(ModelKind::Linear, 5, 0, InitScheme::Zeros);
    assert!(matches!(forward(&p, &DVector::zeros(7), &grid), Err(Error::Incompatible(_))));
    let p = init_model(ModelKind::Linear, 7, 0, InitScheme::Zeros);
    assert!(matches!(forward(&p, &DVector::zeros(6), &grid), Err(Error::ShapeMismatch(_))));
}

#[test]
fn linear_gradient_single_sample() {
    let grid = make_grid(5).unwrap();
    let f = DMatrix::from_column_slice(4, 1, &[1.0, -2.0, 0.5, 3.0]);
    let u = DMatrix::from_column_slice(4, 1, &[0.3, 0.1, -0.2, 0.4]);
    let p = init_model(ModelKind::Linear, 4, 0, InitScheme::Zeros);
    let (_, g) = loss_and_grads(&p, &f, &u, &grid).unwrap();
    let ModelParams::Linear { w } = g else { unreachable!() };
    // MSE over M nodes: d/dW mean((Wf - u)^2) = (2/M)(Wf - u) f^T.
    let expect = -(&u * f.transpose()) * (2.0 / 4.0);
    assert!((w - expect).amax() < 1e-16);
}

#[test]
fn duplicated_batch_has_single_sample_gradient() {
    let grid = make_grid(9).unwrap();
    let (f, u) = random_batch(8, 1, 3);
    let f2 = DMatrix::from_fn(8, 4, |i, _| f[(i, 0)]);
    let u2 = DMatrix::from_fn(8, 4, |i, _| u[(i, 0)]);
    for kind in ModelKind::all_default() {
        let p = init_model_sized(kind, 8, 10, 1, InitScheme::FanInUniform);
        let (l1, g1) = loss_and_grads(&p, &f, &u, &grid).unwrap();
        let (l2, g2) = loss_and_grads(&p, &f2, &u2, &grid).unwrap();
        assert!((l1 - l2).abs() <= 1e-14 * l1.abs());
        for (a, b) in g1.tensors().iter().zip(g2.tensors()) {
            for (x, y) in a.data.iter().zip(b.data) {
                assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()), "{kind} {}", a.name);
            }
        }
    }
}

#[test]
fn gradients_match_finite_differences_at_full_size() {
    let grid = make_grid(22).unwrap();
    let d = generate_dataset(FunctionClass::sine(3), 22, 16, 1, 1.0).unwrap();
    for kind in ModelKind::all_default() {
        let mut p = init_model(kind, 21, 7, InitScheme::FanInUniform);
        if let ModelParams::FdFit { w, .. } = &mut p {
            *w = 0.3;
        }
        let worst = gradient_mismatch(&p, &d.f, &d.u, &grid, 11, 20);
        assert!(worst < 1e-5, "{kind}: {worst}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gradients_match_finite_differences(seed in any::<u64>(), kind_ix in 0usize..5, hidden in 2usize..24, batch in 1usize..9) {
        let grid = make_grid(9).unwrap();
        let kind = ModelKind::all_default()[kind_ix];
        let (f, u) = random_batch(8, batch, seed);
        let mut p = init_model_sized(kind, 8, hidden, seed, InitScheme::FanInUniform);
        if let ModelParams::FdFit { w, .. } = &mut p {
            *w = 0.5;
        }
        // Zero biases can leave a whole ReLU layer dead with outputs sitting
        // exactly on the kink; check at a generic point instead.
        jitter(&mut p, seed ^ 2);
        let worst = gradient_mismatch(&p, &f, &u, &grid, seed ^ 1, 20);
        prop_assert!(worst < 1e-5, "{} {}", kind, worst);
    }

    #[test]
    fn linear_models_are_linear_in_f(seed in any::<u64>()) {
        let grid = make_grid(9).unwrap();
        let (f, _) = random_batch(8, 2, seed);
        let f1 = f.column(0).into_owned();
        let f2 = f.column(1).into_owned();
        let zero = DVector::zeros(8);
        let mut deep = init_model_sized(ModelKind::DeepLinear, 8, 12, seed, InitScheme::FanInUniform);
        if let ModelParams::DeepLinear(d) = &mut deep {
            d.b1.fill(0.0);
            d.b2.fill(0.0);
        }
        for p in [init_model(ModelKind::Linear, 8, seed, InitScheme::FanInUniform), deep] {
            let lhs = forward(&p, &(&f1 + &f2), &grid).unwrap();
            let rhs = forward(&p, &f1, &grid).unwrap() + forward(&p, &f2, &grid).unwrap() - forward(&p, &zero, &grid).unwrap();
            prop_assert!((lhs - rhs).amax() < 1e-10);
        }
    }
}

#[test]
fn small_steps_decrease_every_loss() {
    let d = generate_dataset(FunctionClass::cosine(2), 12, 64, 3, 1.0).unwrap();
    for kind in ModelKind::all_default() {
        let mut p = init_model_sized(kind, 11, 32, 2, InitScheme::FanInUniform);
        let mut state = OptimizerState::new(Optimizer::Gd, &p);
        let mut prev = f64::INFINITY;
        for _ in 0..10 {
            let (loss, g) = loss_and_grads(&p, &d.f, &d.u, &d.grid).unwrap();
            assert!(loss < prev, "{kind}: {loss} >= {prev}");
            prev = loss;
            state.step(&mut p, &g, 1e-4);
        }
    }
}

fn theorem_setup(class: FunctionClass, n: usize) -> (crate::datasets::Dataset, DMatrix<f64>, DMatrix<f64>) {
    let d = generate_dataset(class, 22, n, 1, 1.0).unwrap();
    let grid = d.grid.clone();
    let ap = projected_green_operator(class.family, class.p, &grid, 1.0).unwrap().data;
    let u = orthonormal_range(&assemble_basis(class.family, class.p, &grid)).unwrap();
    (d, ap, u.projector())
}

#[test]
fn closed_loop_gd_matches_step_by_step_gd() {
    let (d, _, _) = theorem_setup(FunctionClass::poly(3), 200);
    let w0 = match init_model(ModelKind::Linear, 21, 4, InitScheme::FanInUniform) {
        ModelParams::Linear { w } => w,
        _ => unreachable!(),
    };
    let lr = 0.05;
    let mut cfg = TrainConfig::theorem();
    cfg.schedule = LrSchedule::Constant { lr };
    cfg.length = Length::Steps(37);
    let (fast, _) = train_from(ModelParams::Linear { w: w0.clone() }, &d, &cfg).unwrap();
    let mut slow = ModelParams::Linear { w: w0 };
    for _ in 0..37 {
        let (_, g) = loss_and_grads(&slow, &d.f, &d.u, &d.grid).unwrap();
        OptimizerState::new(Optimizer::Gd, &slow).step(&mut slow, &g, lr);
    }
    let (ModelParams::Linear { w: a }, ModelParams::Linear { w: b }) = (fast, slow) else { unreachable!() };
    assert!((&a - &b).norm() / b.norm() < 1e-12);
}

#[test]
fn theorem_mode_reaches_fixed_point() {
    let (d, ap, _) = theorem_setup(FunctionClass::poly(3), 400);
    let (p, h) = train(ModelKind::Linear, &d, &TrainConfig::theorem()).unwrap();
    let ModelParams::Linear { w } = p else { unreachable!() };
    let a = assemble_green_matrix(&d.grid, PsiBasis::HatLinear, 1.0).unwrap().data;
    assert!((&w - &ap).norm() / a.norm() < 1e-6);
    assert!(h.final_mse < 1e-25, "{}", h.final_mse);
}

#[test]
fn plain_gd_never_touches_the_orthogonal_complement() {
    let (d, _, proj) = theorem_setup(FunctionClass::sine(3), 300);
    let w0 = match init_model(ModelKind::Linear, 21, 9, InitScheme::FanInUniform) {
        ModelParams::Linear { w } => w,
        _ => unreachable!(),
    };
    let complement = DMatrix::identity(21, 21) - proj;
    let mut decaying = TrainConfig::theorem();
    decaying.schedule = LrSchedule::Linear { start: 0.02, end: 0.001 };
    decaying.length = Length::Epochs(300);
    for cfg in [TrainConfig::theorem(), decaying] {
        let (p, _) = train_from(ModelParams::Linear { w: w0.clone() }, &d, &cfg).unwrap();
        let ModelParams::Linear { w } = p else { unreachable!() };
        assert!(((&w - &w0) * &complement).norm() < 1e-8);
    }
}

#[test]
fn theorem_fixed_point_with_random_start() {
    let (d, ap, proj) = theorem_setup(FunctionClass::cosine(4), 300);
    let w0 = match init_model(ModelKind::Linear, 21, 2, InitScheme::FanInUniform) {
        ModelParams::Linear { w } => w,
        _ => unreachable!(),
    };
    let (p, _) = train_from(ModelParams::Linear { w: w0.clone() }, &d, &TrainConfig::theorem()).unwrap();
    let ModelParams::Linear { w } = p else { unreachable!() };
    let u = crate::oracle::OperatorMatrix::new(crate::oracle::Role::WeightsW, ap.clone()).unwrap();
    let ortho = orthonormal_range(&assemble_basis(crate::datasets::Family::Cosine, 4, &d.grid)).unwrap();
    let star = predict_w_star(&u, &ortho, &w0).unwrap().data;
    assert!((&w - &star).norm() / ap.norm() < 1e-8);
    assert!((&ap * &proj - &ap).amax() < 1e-10);
}

#[test]
fn default_linear_training_fits_sine_data() {
    let d = generate_dataset(FunctionClass::sine(5), 22, 1000, 2, 1.0).unwrap();
    let (_, h) = train(ModelKind::Linear, &d, &TrainConfig::defaults_for(ModelKind::Linear)).unwrap();
    assert!(h.final_mse < 1e-10, "{}", h.final_mse);
    assert_eq!(h.epoch_mse.len(), 2001);
}

#[test]
fn training_is_deterministic() {
    let d = generate_dataset(FunctionClass::sine(2), 10, 100, 2, 1.0).unwrap();
    let mut cfg = TrainConfig::defaults_for(ModelKind::Mlp).with_seed(3);
    cfg.hidden = 16;
    cfg.batch_size = Some(32);
    cfg.length = Length::Epochs(5);
    let (a, ha) = train(ModelKind::Mlp, &d, &cfg).unwrap();
    let (b, hb) = train(ModelKind::Mlp, &d, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(ha.epoch_mse, hb.epoch_mse);
    assert_eq!(ha.steps, 20);
    assert_eq!(ha.final_mse, ha.epoch_mse[ha.best_epoch]);
}

#[test]
fn step_budget_spans_partial_epochs() {
    let d = generate_dataset(FunctionClass::sine(2), 10, 100, 2, 1.0).unwrap();
    let mut cfg = TrainConfig::defaults_for(ModelKind::DeepOnet);
    cfg.hidden = 8;
    cfg.batch_size = Some(30);
    cfg.length = Length::Steps(10);
    let (_, h) = train(ModelKind::DeepOnet, &d, &cfg).unwrap();
    assert_eq!(h.steps, 10);
    assert_eq!(h.epoch_mse.len(), 3);
}

#[test]
fn divergence_is_reported() {
    let d = generate_dataset(FunctionClass::sine(2), 10, 50, 2, 1.0).unwrap();
    let mut cfg = TrainConfig::theorem();
    cfg.schedule = LrSchedule::Constant { lr: 1e6 };
    cfg.length = Length::Steps(1 << 12);
    assert!(matches!(train(ModelKind::Linear, &d, &cfg), Err(Error::Divergence { .. })));

    let mut cfg = TrainConfig::defaults_for(ModelKind::DeepLinear);
    cfg.optimizer = Optimizer::Gd;
    cfg.schedule = LrSchedule::Constant { lr: 1e4 };
    cfg.hidden = 8;
    cfg.length = Length::Epochs(200);
    match train(ModelKind::DeepLinear, &d, &cfg) {
        Err(Error::Divergence { lr, .. }) => assert_eq!(lr, 1e4),
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn fd_training_is_the_closed_form_fit() {
    let d = generate_dataset(FunctionClass::poly(1), 22, 50, 2, 3.0).unwrap();
    let (p, h) = train(ModelKind::FdFit(2), &d, &TrainConfig::defaults_for(ModelKind::FdFit(2))).unwrap();
    let ModelParams::FdFit { w, .. } = p else { unreachable!() };
    assert!((w - 3.0).abs() < 1e-11);
    assert!(h.final_mse < 1e-20);
}





