//! Localized versions of the characterising processes around a point `x0`,
//! on the scale `n^{-1/(2k+1)}` where the estimators fluctuate.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::estimate::{integrated_estimate, mle_weighted_process, Estimator, FitResult};
use crate::poly::{factorial, PiecewisePoly};
use crate::process::yn_poly;
use crate::sample::Sample;
use crate::truth::Truth;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocalDiagnostics {
    pub estimator: Estimator,
    pub k: usize,
    pub n: usize,
    pub x0: f64,
    pub t_grid: Vec<f64>,
    pub y_loc: Vec<f64>,
    pub h_loc: Vec<f64>,
    /// Coefficients of the polynomial correction in `H_loc`, `j = 0..k`.
    pub a_coeffs: Vec<f64>,
    /// Knots of the fit mapped to `t = (tau - x0) n^{1/(2k+1)}`, restricted
    /// to the range of the grid.
    pub knot_images: Vec<f64>,
    /// `|H_loc - Y_loc|` at each knot image.
    pub knot_residuals: Vec<f64>,
    /// Smallest `H_loc - Y_loc` on the grid.
    pub min_gap: f64,
    /// Largest `|Y_loc|` on the grid.
    pub scale: f64,
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    for i in 0..m.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=m {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = m as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[m - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[m - 1 - i] = w;
    }
    (nodes, weights)
}

struct Quadrature {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Quadrature {
    fn new() -> Self {
        let (nodes, weights) = gauss_legendre(24);
        Self { nodes, weights }
    }

    /// Oriented `int_a^b f`, splitting at the `cuts` that fall inside.
    fn integrate(&self, a: f64, b: f64, cuts: &[f64], f: impl Fn(f64) -> f64) -> f64 {
        if a == b {
            return 0.0;
        }
        let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
        let mut pts = vec![lo];
        pts.extend(cuts.iter().copied().filter(|&c| c > lo && c < hi));
        pts.push(hi);
        let mut acc = 0.0;
        for w in pts.windows(2) {
            let (mid, half) = (0.5 * (w[0] + w[1]), 0.5 * (w[1] - w[0]));
            for (u, wt) in self.nodes.iter().zip(&self.weights) {
                acc += wt * half * f(mid + half * u);
            }
        }
        sign * acc
    }
}

/// `sum_j d_j (x - x0)^{j + m} / (j + m)!`: the `m`-fold integral from `x0`
/// of the Taylor polynomial with derivatives `d`.
fn integrated_taylor(d: &[f64], x0: f64, x: f64, m: usize) -> f64 {
    d.iter()
        .enumerate()
        .map(|(j, dj)| dj * (x - x0).powi((j + m) as i32) / factorial(j + m))
        .sum()
}

fn taylor_part(p: &PiecewisePoly, x0: f64, x: f64, k: usize) -> f64 {
    let d = p.eval_all(x0, k - 1);
    integrated_taylor(&d, x0, x, 0)
}

/// Evaluates the localized processes of `fit` at `x0` on `t_grid`, with the
/// true density `truth` supplying the Taylor centring.
pub fn localized_processes(
    sample: &Sample,
    fit: &FitResult,
    truth: &Truth,
    x0: f64,
    t_grid: &[f64],
) -> Result<LocalDiagnostics> {
    let k = fit.k;
    let n = sample.n();
    if !(x0 > sample.min() && x0 < sample.max()) {
        return domain(format!("x0 = {x0} must lie inside the data range"));
    }
    let nf = n as f64;
    let r = 1.0 / (2 * k + 1) as f64;
    let outer = nf.powf(2.0 * k as f64 * r);
    let local = nf.powf(-r);
    let g0d = truth.derivatives(x0, k - 1);
    let upper = fit
        .upper
        .max(1.5 * sample.max())
        .max(x0 + t_grid.iter().fold(0.0f64, |m, t| m.max(*t)) * local + 1.0);
    let xs: Vec<f64> = t_grid.iter().map(|t| x0 + t * local).collect();
    if xs.iter().any(|&x| x <= 0.0) {
        return domain("the local grid reaches below zero");
    }

    let lo = t_grid.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = t_grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let knots_in: Vec<f64> = fit
        .knots
        .iter()
        .copied()
        .filter(|&tau| (tau - x0) / local >= lo && (tau - x0) / local <= hi)
        .collect();
    let (y_loc, h_loc, a_coeffs, knot_gaps): (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) = match fit.estimator {
        Estimator::Lse => {
            let y = yn_poly(sample, k, upper)?;
            let h = integrated_estimate(fit)?;
            let yd = y.eval_all(x0, k - 1);
            let hd = h.eval_all(x0, k - 1);
            let a: Vec<f64> = (0..k)
                .map(|j| nf.powf((2 * k - j) as f64 * r) / factorial(j) * (hd[j] - yd[j]))
                .collect();
            let yl = |x: f64| {
                outer * (y.eval_unchecked(x, 0) - taylor_part(&y, x0, x, k) - integrated_taylor(&g0d, x0, x, k))
            };
            let hl = |x: f64, t: f64| {
                let poly: f64 = a.iter().enumerate().map(|(j, aj)| aj * t.powi(j as i32)).sum();
                outer * (h.eval_unchecked(x, 0) - taylor_part(&h, x0, x, k) - integrated_taylor(&g0d, x0, x, k)) + poly
            };
            let yv: Vec<f64> = xs.iter().map(|&x| yl(x)).collect();
            let hv: Vec<f64> = xs.iter().zip(t_grid).map(|(&x, &t)| hl(x, t)).collect();
            let kg = knots_in
                .iter()
                .map(|&tau| hl(tau, (tau - x0) / local) - yl(tau))
                .collect();
            (yv, hv, a, kg)
        }
        Estimator::Mle => {
            let g = &fit.estimate;
            let yv_proc = mle_weighted_process(g, sample, k, upper)?
                .ok_or_else(|| Error::Degenerate("fitted density vanishes at a data point".into()))?;
            let g0 = g0d[0];
            // Y_v^{(j)}(x0) is H^_n^{(j)}(x0) / (k-1)!
            let vd = yv_proc.eval_all(x0, k - 1);
            let a: Vec<f64> = (0..k)
                .map(|j| {
                    let target = x0.powi((k - j) as i32) / factorial(k - j);
                    -nf.powf((2 * k - j) as f64 * r) / factorial(j) * g0 * (vd[j] - target)
                })
                .collect();
            let ghat = |v: f64| -> f64 {
                if v > g.end() {
                    0.0
                } else {
                    g.eval_unchecked(v, 0)
                }
            };
            for &x in &xs {
                if !(ghat(x) > 0.0) || !(ghat(x0) > 0.0) {
                    return Err(Error::Degenerate("fitted density vanishes on the local window".into()));
                }
            }
            let quad = Quadrature::new();
            let cuts = g.breaks().to_vec();
            let kern = move |x: f64, v: f64| (x - v).powi(k as i32 - 1) / factorial(k - 1);
            let taylor0 = move |v: f64| integrated_taylor(&g0d, x0, v, 0);
            let data = sample.values().to_vec();
            let n_inv = 1.0 / nf;
            let empirical = move |x: f64| -> f64 {
                // oriented int_{x0}^{x} kern(x, v) / g(v) dG_n(v)
                let (lo, hi, sign) = if x >= x0 { (x0, x, 1.0) } else { (x, x0, -1.0) };
                let start = data.partition_point(|&d| d <= lo);
                let stop = data.partition_point(|&d| d <= hi);
                sign * n_inv * data[start..stop].iter().map(|&d| kern(x, d) / ghat(d)).sum::<f64>()
            };
            let y_at = |x: f64| -> f64 {
                let first = quad.integrate(x0, x, &cuts, |v| kern(x, v) * (truth.density(v) - taylor0(v)) / ghat(v));
                let smooth = quad.integrate(x0, x, &cuts, |v| kern(x, v) * truth.density(v) / ghat(v));
                g0 * outer * (first + empirical(x) - smooth)
            };
            let h_at = |x: f64, t: f64| -> f64 {
                let first = quad.integrate(x0, x, &cuts, |v| kern(x, v) * (ghat(v) - taylor0(v)) / ghat(v));
                let poly: f64 = a.iter().enumerate().map(|(j, aj)| aj * t.powi(j as i32)).sum();
                g0 * outer * first + poly
            };
            let yv: Vec<f64> = xs.iter().map(|&x| y_at(x)).collect();
            let hv: Vec<f64> = xs.iter().zip(t_grid).map(|(&x, &t)| h_at(x, t)).collect();
            let kg = knots_in
                .iter()
                .map(|&tau| h_at(tau, (tau - x0) / local) - y_at(tau))
                .collect();
            (yv, hv, a, kg)
        }
    };

    let knot_images: Vec<f64> = knots_in.iter().map(|tau| (tau - x0) / local).collect();
    let knot_residuals: Vec<f64> = knot_gaps.iter().map(|g| g.abs()).collect();
    let min_gap = h_loc
        .iter()
        .zip(&y_loc)
        .map(|(h, y)| h - y)
        .fold(f64::INFINITY, f64::min);
    let scale = y_loc.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(LocalDiagnostics {
        estimator: fit.estimator,
        k,
        n,
        x0,
        t_grid: t_grid.to_vec(),
        y_loc,
        h_loc,
        a_coeffs,
        knot_images,
        knot_residuals,
        min_gap,
        scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(24);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(46)).sum();
        assert!((s - 2.0 / 47.0).abs() < 1e-14);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn oriented_integral() {
        let q = Quadrature::new();
        let v = q.integrate(1.0, 0.0, &[0.5], |x| x * x);
        assert!((v + 1.0 / 3.0).abs() < 1e-15);
    }
}
