//! Seeded local search used where no convex formulation is available.
//!
//! Each start runs an adaptive random-perturbation hill climb with its own
//! ChaCha stream derived from (seed, start index). Starts run in parallel;
//! the winner is the best value, ties going to the lowest index, so the
//! result does not depend on scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

/// Per-start RNG stream.
pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Maximizes `f` from each start; returns (value, point) of the best run.
pub fn maximize<F>(f: &F, starts: Vec<Vec<f64>>, seed: u64, iterations: usize) -> (f64, Vec<f64>)
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let runs: Vec<(f64, Vec<f64>)> = starts
        .into_par_iter()
        .enumerate()
        .map(|(i, x0)| climb(f, x0, &mut stream(seed, i as u64), iterations))
        .collect();
    let mut best: (f64, Vec<f64>) = (f64::NEG_INFINITY, vec![]);
    for r in runs {
        if r.0 > best.0 {
            best = r;
        }
    }
    best
}

fn climb<F>(f: &F, mut x: Vec<f64>, rng: &mut ChaCha8Rng, iterations: usize) -> (f64, Vec<f64>)
where
    F: Fn(&[f64]) -> f64,
{
    let mut fx = f(&x);
    if !fx.is_finite() {
        fx = f64::NEG_INFINITY;
    }
    let scale = x.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-3);
    let mut step = 0.3 * scale;
    let n = x.len();
    if n == 0 {
        return (fx, x);
    }
    for _ in 0..iterations {
        let mut y = x.clone();
        if rng.random::<f64>() < 0.5 {
            let j = rng.random_range(0..n);
            y[j] += step * rng.sample::<f64, _>(StandardNormal);
        } else {
            let d = gaussian_vec(rng, n);
            let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
            for (yi, di) in y.iter_mut().zip(&d) {
                *yi += step * di / norm;
            }
        }
        let fy = f(&y);
        if fy.is_finite() && fy > fx {
            x = y;
            fx = fy;
            step = (step * 1.5).min(10.0 * scale);
        } else {
            step *= 0.92;
            if step < 1e-10 * scale {
                break;
            }
        }
    }
    (fx, x)
}
