//! Central-difference check of `loss_and_grads`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{loss_and_grads, ModelParams};
use crate::datasets::Grid;
use crate::error::Result;

/// Outcome of checking random coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    /// Largest relative mismatch over the checked coordinates, after
    /// discounting the rounding error of the difference quotient.
    pub worst: f64,
    /// Same without the discount.
    pub worst_raw: f64,
    pub checked: usize,
    /// Coordinates left out because every step size straddled a kink.
    pub at_kinks: usize,
}

const STEPS: [f64; 4] = [1e-5, 1e-6, 1e-7, 1e-8];

/// Rounding error carried by a central difference of two loss values.
fn rounding(up: f64, down: f64, h: f64) -> f64 {
    16.0 * f64::EPSILON * (up.abs() + down.abs()) / (2.0 * h)
}

/// Relative gap between `a` and `b` after discounting `noise`.
fn gap(a: f64, b: f64, noise: f64) -> f64 {
    let excess = (a - b).abs() - noise;
    if excess <= 0.0 || a == b {
        0.0
    } else {
        excess / a.abs().max(b.abs())
    }
}

/// Compares analytic gradients with central differences on `coords`
/// coordinates drawn with `seed`.
///
/// Each difference is taken at step `h` and `h/2`. A ReLU kink inside the
/// step makes the two central differences disagree; a kink at the point
/// itself keeps them equal but leaves the gap between the one-sided slopes
/// from shrinking with `h`. Either way `h` shrinks, and a coordinate where no
/// step is kink-free is counted in `at_kinks` rather than compared.
pub fn check_gradients(
    params: &ModelParams,
    f: &DMatrix<f64>,
    u: &DMatrix<f64>,
    grid: &Grid,
    coords: usize,
    seed: u64,
) -> Result<GradCheck> {
    let (_, grads) = loss_and_grads(params, f, u, grid)?;
    let flat: Vec<f64> = grads.tensors().iter().flat_map(|t| t.data.to_vec()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = GradCheck {
        worst: 0.0,
        worst_raw: 0.0,
        checked: 0,
        at_kinks: 0,
    };
    for _ in 0..coords {
        let idx = rng.random_range(0..flat.len());
        let loss_at = |delta: f64| -> Result<f64> {
            let mut p = params.clone();
            let mut offset = 0;
            for s in p.slices_mut() {
                if idx < offset + s.len() {
                    s[idx - offset] += delta;
                    break;
                }
                offset += s.len();
            }
            Ok(loss_and_grads(&p, f, u, grid)?.0)
        };
        let here = loss_at(0.0)?;
        // Central difference, its rounding error, and the one-sided slope gap.
        let probe = |h: f64| -> Result<(f64, f64, f64)> {
            let (up, down) = (loss_at(h)?, loss_at(-h)?);
            let noise = rounding(up, down, h);
            Ok(((up - down) / (2.0 * h), noise, (up - 2.0 * here + down).abs() / h))
        };
        let mut smooth = None;
        for h in STEPS {
            let (full, noise_full, jump_full) = probe(h)?;
            let (half, noise_half, jump_half) = probe(h / 2.0)?;
            let settled = gap(full, half, noise_full + noise_half) < 1e-6;
            let shrinking = jump_half <= 0.75 * jump_full + 4.0 * noise_half;
            if settled && shrinking {
                smooth = Some((full, noise_full));
                break;
            }
        }
        match smooth {
            Some((numeric, noise)) => {
                out.worst = out.worst.max(gap(flat[idx], numeric, noise));
                out.worst_raw = out.worst_raw.max(gap(flat[idx], numeric, 0.0));
                out.checked += 1;
            }
            None => out.at_kinks += 1,
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::make_grid;
    use crate::models::{init_model_sized, InitScheme, ModelKind};

    #[test]
    fn kinks_are_set_aside() {
        // Zero first layer: every hidden pre-activation sits on the kink.
        let grid = make_grid(6).unwrap();
        let mut p = init_model_sized(ModelKind::Mlp, 5, 4, 1, InitScheme::FanInUniform);
        if let ModelParams::Mlp(d) = &mut p {
            d.w1.fill(0.0);
            d.b1.fill(0.0);
        }
        let f = DMatrix::from_fn(5, 3, |i, j| (i as f64 - 2.0) * 0.3 + j as f64 * 0.1);
        let u = DMatrix::from_fn(5, 3, |i, j| 0.05 * (i + j) as f64);
        let c = check_gradients(&p, &f, &u, &grid, 200, 5).unwrap();
        assert!(c.at_kinks > 0 && c.checked > 0, "{c:?}");
        assert!(c.worst < 1e-6, "{c:?}");
    }

    #[test]
    fn smooth_model_checks_every_coordinate() {
        let grid = make_grid(6).unwrap();
        let p = init_model_sized(ModelKind::DeepLinear, 5, 4, 2, InitScheme::FanInUniform);
        let f = DMatrix::from_fn(5, 2, |i, j| (i * 3 + j) as f64 * 0.1 - 0.4);
        let u = DMatrix::from_fn(5, 2, |i, j| (i + 2 * j) as f64 * 0.02);
        let c = check_gradients(&p, &f, &u, &grid, 50, 9).unwrap();
        assert_eq!((c.checked, c.at_kinks), (50, 0));
        assert!(c.worst < 1e-6, "{c:?}");
    }
}
