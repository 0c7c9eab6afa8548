use serde::{Deserialize, Serialize};

use super::{eval_extended, integrated_estimate, Estimator, FitResult};
use crate::error::Result;
use crate::poly::{factorial, PiecewisePoly};
use crate::process::{eval_sorted, weighted_integrated_empirical, yn_poly};
use crate::sample::Sample;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CertifyOptions {
    /// Relative tolerance on the inequality part.
    pub tol_ineq: f64,
    /// Relative tolerance on the equalities at the knots.
    pub tol_eq: f64,
    /// Number of uniformly spaced grid points (data points and points close
    /// to every knot are always added).
    pub grid_density: usize,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            tol_ineq: 1e-7,
            tol_eq: 1e-6,
            grid_density: 2000,
        }
    }
}

/// Numerical check of the optimality conditions of a fit.
///
/// For the LSE: `H~_n >= Y_n` everywhere with equality, and equal first
/// derivatives, at the knots. For the MLE: `H^_n <= 1` everywhere with
/// equality at the knots, plus the vanishing derivative of the rescaled
/// residual at the knots.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CharacterizationReport {
    pub estimator: Estimator,
    /// Smallest value of `H~_n - Y_n` (LSE) or `1 - H^_n` (MLE) on the grid.
    pub min_slack: f64,
    /// Where the smallest slack occurs.
    pub argmin_slack: f64,
    /// Largest equality violation at the knots (values and, for the LSE with
    /// `k >= 2`, first derivatives).
    pub max_knot_residual: f64,
    /// MLE with `k >= 2`: largest relative residual of the derivative
    /// condition at the knots. Zero otherwise.
    pub max_derivative_residual: f64,
    /// Magnitude used to make the tolerances relative.
    pub scale: f64,
    /// Absolute tolerances actually applied.
    pub tol_ineq: f64,
    pub tol_eq: f64,
    #[serde(skip)]
    pub grid: Vec<f64>,
    pub passed: bool,
}

impl CharacterizationReport {
    pub(crate) fn failed(estimator: Estimator) -> Self {
        Self {
            estimator,
            min_slack: f64::NEG_INFINITY,
            argmin_slack: 0.0,
            max_knot_residual: f64::INFINITY,
            max_derivative_residual: f64::INFINITY,
            scale: 1.0,
            tol_ineq: 0.0,
            tol_eq: 0.0,
            grid: Vec::new(),
            passed: false,
        }
    }
}

pub(crate) fn certificate_grid(sample: &Sample, knots: &[f64], upper: f64, density: usize) -> Vec<f64> {
    let density = density.max(16);
    let mut grid: Vec<f64> = (1..=density).map(|i| upper * i as f64 / density as f64).collect();
    let (xs, _) = sample.distinct();
    grid.extend_from_slice(&xs);
    for w in xs.windows(2) {
        grid.push(0.5 * (w[0] + w[1]));
    }
    for &t in knots {
        grid.push(t);
        for d in [1e-6, 1e-4, 1e-2] {
            grid.push(t * (1.0 - d));
            grid.push(t * (1.0 + d));
        }
    }
    grid.retain(|&x| x > 0.0 && x <= upper);
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

/// Checks the optimality conditions of `which` for `fit` on `sample`.
pub fn certify(
    fit: &FitResult,
    sample: &Sample,
    which: Estimator,
    opts: &CertifyOptions,
) -> Result<CharacterizationReport> {
    let upper = fit.upper.max(1.5 * sample.max());
    let grid = certificate_grid(sample, &fit.knots, upper, opts.grid_density);
    match which {
        Estimator::Lse => certify_lse(fit, sample, grid, upper, opts),
        Estimator::Mle => certify_mle(fit, sample, grid, upper, opts),
    }
}

fn certify_lse(
    fit: &FitResult,
    sample: &Sample,
    grid: Vec<f64>,
    upper: f64,
    opts: &CertifyOptions,
) -> Result<CharacterizationReport> {
    let k = fit.k;
    let y = yn_poly(sample, k, upper)?;
    let h = integrated_estimate(fit)?;
    let yv = eval_sorted(&y, &grid, 0);
    // the scale covers the data and the knots, which may lie beyond the data
    let xmax = fit.knots.iter().copied().fold(sample.max(), f64::max).min(upper);
    let mut min_slack = f64::INFINITY;
    let mut argmin = 0.0;
    let mut scale: f64 = 0.0;
    for (i, &x) in grid.iter().enumerate() {
        let hv = eval_extended(&h, x, 0);
        if x <= xmax {
            scale = scale.max(hv.abs());
        }
        let s = hv - yv[i];
        if s < min_slack {
            min_slack = s;
            argmin = x;
        }
    }
    let scale = scale.max(f64::MIN_POSITIVE);
    let mut resid: f64 = 0.0;
    for &t in &fit.knots {
        let t = t.min(upper);
        resid = resid.max((eval_extended(&h, t, 0) - y.eval_unchecked(t, 0)).abs());
        if k >= 2 {
            resid = resid.max((eval_extended(&h, t, 1) - y.eval_unchecked(t, 1)).abs());
        }
    }
    let tol_ineq = opts.tol_ineq * (1.0 + scale);
    let tol_eq = opts.tol_eq * scale;
    Ok(CharacterizationReport {
        estimator: Estimator::Lse,
        min_slack,
        argmin_slack: argmin,
        max_knot_residual: resid,
        max_derivative_residual: 0.0,
        scale,
        tol_ineq,
        tol_eq,
        grid,
        passed: min_slack >= -tol_ineq && resid <= tol_eq,
    })
}

/// `Y_v` with `v_i = c_i / (n g(X_i))` for the distinct data values, or
/// `None` if the density vanishes at a data point.
pub(crate) fn mle_weighted_process(
    g: &PiecewisePoly,
    sample: &Sample,
    k: usize,
    upper: f64,
) -> Result<Option<PiecewisePoly>> {
    let (xs, counts) = sample.distinct();
    let n = sample.n() as f64;
    let mut v = Vec::with_capacity(xs.len());
    for (&x, &c) in xs.iter().zip(&counts) {
        let gx = if x > g.end() { 0.0 } else { g.eval_left(x, 0)? };
        if !(gx > 0.0) {
            return Ok(None);
        }
        v.push(c as f64 / (n * gx));
    }
    Ok(Some(weighted_integrated_empirical(&xs, &v, k, upper)?))
}

fn certify_mle(
    fit: &FitResult,
    sample: &Sample,
    grid: Vec<f64>,
    upper: f64,
    opts: &CertifyOptions,
) -> Result<CharacterizationReport> {
    let k = fit.k;
    let Some(yv) = mle_weighted_process(&fit.estimate, sample, k, upper)? else {
        return Ok(CharacterizationReport::failed(Estimator::Mle));
    };
    let kf = factorial(k);
    let vals = eval_sorted(&yv, &grid, 0);
    let mut min_slack = f64::INFINITY;
    let mut argmin = 0.0;
    for (i, &x) in grid.iter().enumerate() {
        let hhat = kf / x.powi(k as i32) * vals[i];
        let s = 1.0 - hhat;
        if s < min_slack {
            min_slack = s;
            argmin = x;
        }
    }
    let mut resid: f64 = 0.0;
    let mut dresid: f64 = 0.0;
    for &t in &fit.knots {
        let t = t.min(upper);
        let hhat = kf / t.powi(k as i32) * yv.eval_unchecked(t, 0);
        resid = resid.max((hhat - 1.0).abs());
        if k >= 2 {
            let r = 1.0 - factorial(k - 1) * yv.eval_unchecked(t, 1) / t.powi(k as i32 - 1);
            dresid = dresid.max(r.abs());
        }
    }
    Ok(CharacterizationReport {
        estimator: Estimator::Mle,
        min_slack,
        argmin_slack: argmin,
        max_knot_residual: resid,
        max_derivative_residual: dresid,
        scale: 1.0,
        tol_ineq: opts.tol_ineq,
        tol_eq: opts.tol_eq,
        grid,
        passed: min_slack >= -opts.tol_ineq && resid <= opts.tol_eq && dresid <= opts.tol_eq,
    })
}
