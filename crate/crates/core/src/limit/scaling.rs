//! Constants that map the canonical process `Y_k` to the local limit of
//! the estimators at a point where the true density is `g` with `k`-th
//! derivative `g^{(k)}`.

use serde::{Deserialize, Serialize};

use super::drift;
use crate::error::{domain, Result};
use crate::mixture::check_k;
use crate::poly::{binomial, factorial};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingConstants {
    pub k: usize,
    /// `c[j] = (g^{k-j} a^{2j+1})^{1/(2k+1)}` with `a = (-1)^k g^{(k)} / k!`;
    /// `n^{(k-j)/(2k+1)} (g_n^{(j)} - g^{(j)})` converges to
    /// `c[j] H_k^{(k+j)}(0)`.
    pub c: Vec<f64>,
    /// Space and time factors with `Y_{a,sigma}(t) = Y_{1,1}(t / s2) / s1`
    /// in law, for `sigma = sqrt(g)`.
    pub s1: f64,
    pub s2: f64,
}

fn space_time(a: f64, sigma: f64, k: usize) -> (f64, f64) {
    let kk = k as f64;
    let s1 = (a / sigma).powf((2.0 * kk - 1.0) / (2.0 * kk + 1.0)) / sigma;
    let s2 = (sigma / a).powf(2.0 / (2.0 * kk + 1.0));
    (s1, s2)
}

pub fn scaling_constants(g0: f64, gk_signed: f64, k: usize) -> Result<ScalingConstants> {
    check_k(k)?;
    let sign = if k.is_multiple_of(2) { 1.0 } else { -1.0 };
    let a = sign * gk_signed / factorial(k);
    if !(g0 > 0.0) || !g0.is_finite() {
        return domain(format!("density value must be positive, got {g0}"));
    }
    if !(a > 0.0) || !a.is_finite() {
        return domain(format!("(-1)^k g^(k) must be positive, got {}", sign * gk_signed));
    }
    let p = 1.0 / (2 * k + 1) as f64;
    let c = (0..k)
        .map(|j| (g0.powi((k - j) as i32) * a.powi(2 * j as i32 + 1)).powf(p))
        .collect();
    let (s1, s2) = space_time(a, g0.sqrt(), k);
    Ok(ScalingConstants { k, c, s1, s2 })
}

/// `Cov(Y(s), Y(t))` for the Gaussian part of `Y_k` with unit noise level:
/// zero across the origin, otherwise
/// `int_0^{min} (|s| - u)^{k-1} (|t| - u)^{k-1} du / ((k-1)!)^2`.
pub(crate) fn yk_covariance(k: usize, s: f64, t: f64) -> f64 {
    if s * t <= 0.0 {
        return 0.0;
    }
    let (lo, hi) = if s.abs() <= t.abs() {
        (s.abs(), t.abs())
    } else {
        (t.abs(), s.abs())
    };
    let gap = hi - lo;
    let mut acc = 0.0;
    for m in 0..k {
        acc += binomial(k - 1, m) * gap.powi((k - 1 - m) as i32) * lo.powi((k + m) as i32) / (k + m) as f64;
    }
    acc / factorial(k - 1).powi(2)
}

/// Largest discrepancy, over pairs of grid points, between the mean and
/// covariance of `Y_{a,sigma}` and those of `Y_{1,1}(t / s2) / s1`. The
/// discrepancy of each entry is taken relative to `max(1, |entry|)`.
pub fn scaling_identity_check(a: f64, sigma: f64, k: usize, grid: &[f64]) -> Result<f64> {
    check_k(k)?;
    if !(a > 0.0) || !(sigma > 0.0) {
        return domain(format!("a and sigma must be positive, got {a} and {sigma}"));
    }
    let (s1, s2) = space_time(a, sigma, k);
    let rel = |x: f64, y: f64| (x - y).abs() / 1f64.max(x.abs()).max(y.abs());
    let mut worst: f64 = 0.0;
    for (i, &s) in grid.iter().enumerate() {
        let mean_lhs = a * drift(k, s);
        let mean_rhs = drift(k, s / s2) / s1;
        worst = worst.max(rel(mean_lhs, mean_rhs));
        for &t in &grid[i..] {
            let lhs = sigma * sigma * yk_covariance(k, s, t);
            let rhs = yk_covariance(k, s / s2, t / s2) / (s1 * s1);
            worst = worst.max(rel(lhs, rhs));
        }
    }
    Ok(worst)
}
