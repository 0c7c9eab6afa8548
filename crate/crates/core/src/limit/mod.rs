//! The canonical limit process `Y_k`, its invelope `H_k`, the scaling that
//! connects them to the estimators, and Monte Carlo rate experiments.
//!
//! `Y_k(t)` is the `(k-1)`-fold integral of two-sided Brownian motion,
//! integrated outward from zero, plus the drift `(-1)^k k!/(2k)! t^{2k}`.
//! Paths are simulated exactly in law on a uniform grid: the vector
//! `(W, int W, ..., (k-1)-fold int W)` is a Gaussian Markov chain, and each
//! step draws its transition from the closed-form covariance.

mod experiments;
mod invelope;
mod local;
mod scaling;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::mixture::check_k;
use crate::par::{map_indexed, ExecPolicy};
use crate::poly::factorial;

pub use experiments::{
    gap_experiment, rate_experiment, GapConfig, GapReport, GapRow, RateConfig, RateReport, RateRow, RateSummary,
    TruthSpec,
};
pub use invelope::{invelope_hk, lcm_oracle, Invelope, InvelopeCertificate, InvelopeOptions};
pub use local::{localized_processes, LocalDiagnostics};
pub use scaling::{scaling_constants, scaling_identity_check, ScalingConstants};

/// A simulated path of `Y_k` on the grid `-c + i * delta`, `i = 0..=2c/delta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitPath {
    pub k: usize,
    pub half_width: f64,
    /// Grid step actually used: `c / m` for the smallest integer `m` with
    /// `c / m` not above the requested step.
    pub delta: f64,
    pub seed: u64,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

impl LimitPath {
    /// Index of `t = 0` on the grid.
    pub fn origin(&self) -> usize {
        (self.grid.len() - 1) / 2
    }
}

/// `(-1)^k k!/(2k)! t^{2k}`.
pub fn drift(k: usize, t: f64) -> f64 {
    let sign = if k.is_multiple_of(2) { 1.0 } else { -1.0 };
    sign * factorial(k) / factorial(2 * k) * t.powi(2 * k as i32)
}

/// `Var Y_k(t) = |t|^{2k-1} / ((2k - 1) ((k-1)!)^2)`.
pub fn yk_variance(k: usize, t: f64) -> f64 {
    t.abs().powi(2 * k as i32 - 1) / ((2 * k - 1) as f64 * factorial(k - 1).powi(2))
}

/// Lower Cholesky factor of `1 / (i! j! (i + j + 1))`, `i, j < k`: the
/// covariance of the state increments over a unit step.
fn step_factor(k: usize) -> DMatrix<f64> {
    let m = DMatrix::from_fn(k, k, |i, j| 1.0 / (factorial(i) * factorial(j) * (i + j + 1) as f64));
    m.cholesky().expect("increment covariance is positive definite").l()
}

/// One side of the path: `I_{k-1}` at `delta, 2 delta, ..., steps * delta`.
fn one_side(k: usize, delta: f64, steps: usize, factor: &DMatrix<f64>, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let scale: Vec<f64> = (0..k).map(|j| delta.powf(j as f64 + 0.5)).collect();
    let mut state = vec![0.0; k];
    let mut next = vec![0.0; k];
    let mut out = Vec::with_capacity(steps);
    let mut eta = DVector::<f64>::zeros(k);
    for _ in 0..steps {
        for e in eta.iter_mut() {
            *e = StandardNormal.sample(rng);
        }
        let xi = factor * &eta;
        for j in 0..k {
            let mut v = 0.0;
            let mut pow = 1.0;
            for m in (0..=j).rev() {
                v += pow * state[m];
                pow *= delta / (j - m + 1) as f64;
            }
            next[j] = v + scale[j] * xi[j];
        }
        std::mem::swap(&mut state, &mut next);
        out.push(state[k - 1]);
    }
    out
}

fn check_window(k: usize, c: f64, delta: f64) -> Result<usize> {
    check_k(k)?;
    if !(c > 0.0) || !c.is_finite() {
        return domain(format!("half width must be positive, got {c}"));
    }
    if !(delta > 0.0) || delta > c / 64.0 {
        return domain(format!("grid step must lie in (0, c/64], got {delta}"));
    }
    Ok((c / delta * (1.0 - 1e-12)).ceil() as usize)
}

/// Simulates `Y_k` on `[-c, c]` with step at most `delta`. The two sides
/// are independent and each is generated from zero outward.
pub fn simulate_yk(k: usize, c: f64, delta: f64, seed: u64) -> Result<LimitPath> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    simulate_with(k, c, delta, seed, &mut rng)
}

fn simulate_with(k: usize, c: f64, delta: f64, seed: u64, rng: &mut ChaCha8Rng) -> Result<LimitPath> {
    let m = check_window(k, c, delta)?;
    let delta = c / m as f64;
    let factor = step_factor(k);
    let right = one_side(k, delta, m, &factor, rng);
    let left = one_side(k, delta, m, &factor, rng);
    let grid: Vec<f64> = (0..=2 * m).map(|i| (i as f64 - m as f64) * delta).collect();
    let mut values = Vec::with_capacity(2 * m + 1);
    values.extend(left.iter().rev().copied());
    values.push(0.0);
    values.extend_from_slice(&right);
    for (v, &t) in values.iter_mut().zip(&grid) {
        *v += drift(k, t);
    }
    Ok(LimitPath {
        k,
        half_width: c,
        delta,
        seed,
        grid,
        values,
    })
}

/// `paths` independent paths; path `i` uses stream `i` of the seed.
pub fn simulate_many(
    k: usize,
    c: f64,
    delta: f64,
    seed: u64,
    paths: usize,
    policy: ExecPolicy,
) -> Result<Vec<LimitPath>> {
    check_window(k, c, delta)?;
    map_indexed(policy, paths, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        simulate_with(k, c, delta, seed, &mut rng)
    })
    .into_iter()
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_shape_and_origin() {
        let p = simulate_yk(3, 2.0, 2.0 / 1024.0, 1).unwrap();
        assert_eq!(p.grid.len(), 2049);
        assert_eq!(p.values[p.origin()], 0.0);
        assert_eq!(p.grid[p.origin()], 0.0);
        assert!(simulate_yk(3, 1.0, 0.1, 1).is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        let a = simulate_yk(2, 1.0, 1.0 / 128.0, 9).unwrap();
        let b = simulate_yk(2, 1.0, 1.0 / 128.0, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn step_is_rounded_down_to_divide_the_window() {
        let p = simulate_yk(1, 1.0, 0.01, 3).unwrap();
        assert!((p.delta - 0.01).abs() < 1e-15);
        let p = simulate_yk(1, 1.0, 0.0151, 3).unwrap();
        assert!((p.delta - 1.0 / 67.0).abs() < 1e-15);
    }

    #[test]
    fn variance_law_for_brownian_motion() {
        let paths = simulate_many(1, 1.0, 1.0 / 64.0, 5, 4000, ExecPolicy::Parallel).unwrap();
        let vals: Vec<f64> = paths.iter().map(|p| p.values[p.grid.len() - 1] + 1.0 / 2.0).collect();
        let v = crate::stats::variance(&vals);
        assert!((v - 1.0).abs() < 4.0 * (2.0f64 / 4000.0).sqrt());
    }
}
