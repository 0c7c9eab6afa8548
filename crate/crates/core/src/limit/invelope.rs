//! The invelope `H_k` of a simulated `Y_k` path.
//!
//! On the grid the problem is a cone-constrained least squares fit: with
//! `z` the `k`-th backward difference quotient of `Y_k`, minimise
//! `sum (phi - z)^2 delta` over `phi` whose `k`-th forward differences have
//! sign `(-1)^k`. Every feasible `phi` is a polynomial of degree below `k`
//! plus a nonnegative combination of the `k`-fold reverse sums of unit
//! impulses, so the fit is a nonnegative least squares problem with `k`
//! free columns, solved by an active-set method. `H` is then `Y_k` plus the
//! `k`-fold discrete integral of `phi - z` started at the left edge, which
//! makes `H` agree with `Y_k` on the first and last `k` grid nodes.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::LimitPath;
use crate::error::{Error, Result};
use crate::poly::binomial;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct InvelopeOptions {
    /// `H - Y_k >= -tol_ineq * scale` on the central half of the window.
    pub tol_ineq: f64,
    /// Complementary slackness residual at most `tol_eq * scale`.
    pub tol_eq: f64,
    /// Cap on active-set iterations; `None` means ten times the grid size.
    pub max_iter: Option<usize>,
}

impl Default for InvelopeOptions {
    fn default() -> Self {
        Self {
            tol_ineq: 1e-8,
            tol_eq: 1e-6,
            max_iter: None,
        }
    }
}

/// Checks of the invelope conditions on `|t| <= c/2`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InvelopeCertificate {
    /// Smallest `H - Y_k`.
    pub min_gap: f64,
    pub argmin_gap: f64,
    /// `|sum (H - Y_k) dH^{(2k-1)}|` in its discrete form.
    pub slackness_residual: f64,
    /// Largest `|Y_k|` or `|H|`, used to make tolerances relative.
    pub scale: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Invelope {
    pub k: usize,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    /// `derivatives[j][m]` approximates `H^{(j)}` at grid node `m + j` by a
    /// backward difference quotient, `j = 0..2k`.
    pub derivatives: Vec<Vec<f64>>,
    /// Grid points where a constraint is active; `H^{(2k-1)}` jumps there
    /// and `H` touches `Y_k`.
    pub knots: Vec<f64>,
    /// Multipliers of the active constraints, in the order of `knots`.
    pub multipliers: Vec<f64>,
    pub iterations: usize,
    pub certificate: InvelopeCertificate,
}

/// Backward difference quotients of order `order`; entry `m` sits at
/// node `m + order`.
fn backward_quotients(v: &[f64], order: usize, delta: f64) -> Vec<f64> {
    let mut cur = v.to_vec();
    for _ in 0..order {
        cur = cur.windows(2).map(|w| (w[1] - w[0]) / delta).collect();
    }
    cur
}

fn cumsum_k(v: &[f64], k: usize) -> Vec<f64> {
    let mut cur = v.to_vec();
    for _ in 0..k {
        let mut acc = 0.0;
        for x in cur.iter_mut() {
            acc += *x;
            *x = acc;
        }
    }
    cur
}

struct Columns {
    rows: usize,
    k: usize,
}

impl Columns {
    fn poly(&self, d: usize, r: usize) -> f64 {
        let u = if self.rows > 1 {
            2.0 * r as f64 / (self.rows - 1) as f64 - 1.0
        } else {
            0.0
        };
        u.powi(d as i32)
    }

    /// Reverse `k`-fold sum of the impulse at `a`, evaluated at row `r`.
    fn cone(&self, a: usize, r: usize) -> f64 {
        if r > a {
            0.0
        } else {
            binomial(a - r + self.k - 1, self.k - 1)
        }
    }

    fn matrix(&self, active: &[usize]) -> (DMatrix<f64>, Vec<f64>) {
        let ncol = self.k + active.len();
        let mut m = DMatrix::<f64>::zeros(self.rows, ncol);
        for d in 0..self.k {
            for r in 0..self.rows {
                m[(r, d)] = self.poly(d, r);
            }
        }
        for (c, &a) in active.iter().enumerate() {
            for r in 0..=a {
                m[(r, self.k + c)] = self.cone(a, r);
            }
        }
        let mut norms = Vec::with_capacity(ncol);
        for c in 0..ncol {
            let nrm = m.column(c).norm().max(f64::MIN_POSITIVE);
            m.column_mut(c).scale_mut(1.0 / nrm);
            norms.push(nrm);
        }
        (m, norms)
    }

    /// Least squares coefficients (in the unnormalised basis) of `z` on the
    /// polynomial columns and the `active` cone columns.
    fn solve(&self, active: &[usize], z: &DVector<f64>) -> Result<Vec<f64>> {
        let (m, norms) = self.matrix(active);
        let qr = m.qr();
        let rhs = qr.q().transpose() * z;
        let sol = qr.r().solve_upper_triangular(&rhs).ok_or(Error::IllConditioned {
            condition: f64::INFINITY,
        })?;
        Ok(sol.iter().zip(&norms).map(|(s, n)| s / n).collect())
    }

    fn combine(&self, active: &[usize], coef: &[f64]) -> Vec<f64> {
        let mut phi = vec![0.0; self.rows];
        for (r, p) in phi.iter_mut().enumerate() {
            *p = (0..self.k).map(|d| coef[d] * self.poly(d, r)).sum();
        }
        for (c, &a) in active.iter().enumerate() {
            let w = coef[self.k + c];
            for (r, p) in phi.iter_mut().enumerate().take(a + 1) {
                *p += w * self.cone(a, r);
            }
        }
        phi
    }
}

/// Computes the invelope of `path` and certifies it on the central half
/// of the window.
pub fn invelope_hk(path: &LimitPath, opts: &InvelopeOptions) -> Result<Invelope> {
    let k = path.k;
    let delta = path.delta;
    let y = &path.values;
    let nodes = y.len();
    let rows = nodes - k;
    let dk = delta.powi(k as i32);
    let z = DVector::from_vec(backward_quotients(y, k, delta));
    let cols = Columns { rows, k };
    // constraint index a has its impulse at forward difference a, a <= rows - 1 - k
    let last_a = rows - 1 - k;
    let scale_y = y.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let tol_add = 1e-13 * scale_y;
    let max_iter = opts.max_iter.unwrap_or(10 * nodes);

    let mut active: Vec<usize> = Vec::new();
    let mut coef = cols.solve(&active, &z)?;
    let mut iterations = 0;
    let residual_e = |phi: &[f64]| -> Vec<f64> {
        let v: Vec<f64> = phi.iter().zip(z.iter()).map(|(p, z)| p - z).collect();
        cumsum_k(&v, k).into_iter().map(|s| s * dk).collect()
    };
    loop {
        let phi = cols.combine(&active, &coef);
        let e = residual_e(&phi);
        let mut worst: Option<(usize, f64)> = None;
        for (a, &ea) in e.iter().enumerate().take(last_a + 1) {
            if ea < -tol_add && !active.contains(&a) && worst.is_none_or(|(_, w)| ea < w) {
                worst = Some((a, ea));
            }
        }
        let Some((add, _)) = worst else { break };
        iterations += 1;
        if iterations > max_iter {
            let viol = e.iter().take(last_a + 1).fold(0.0f64, |m, &v| m.max(-v));
            return Err(Error::NotConverged {
                what: "invelope active set",
                iterations,
                residual: viol,
            });
        }
        let pos = active.partition_point(|&a| a < add);
        active.insert(pos, add);
        let mut lam: Vec<f64> = coef[k..].to_vec();
        lam.insert(pos, 0.0);
        // Lawson-Hanson inner loop: step back towards feasibility until the
        // unconstrained solution on the active set is nonnegative.
        loop {
            let trial = cols.solve(&active, &z)?;
            let tl = &trial[k..];
            if tl.iter().all(|&v| v > 0.0) {
                coef = trial;
                break;
            }
            let mut alpha = f64::INFINITY;
            let mut hit = 0;
            for (i, (l, t)) in lam.iter().zip(tl).enumerate() {
                if *t <= 0.0 {
                    let ratio = l / (l - t);
                    if ratio < alpha {
                        alpha = ratio;
                        hit = i;
                    }
                }
            }
            for (l, t) in lam.iter_mut().zip(tl) {
                *l += alpha * (t - *l);
            }
            lam[hit] = 0.0;
            let mut na = Vec::with_capacity(active.len());
            let mut nl = Vec::with_capacity(active.len());
            for (a, l) in active.iter().zip(&lam) {
                if *l > 0.0 {
                    na.push(*a);
                    nl.push(*l);
                }
            }
            active = na;
            lam = nl;
            if active.is_empty() {
                coef = cols.solve(&active, &z)?;
                break;
            }
        }
    }

    let phi = cols.combine(&active, &coef);
    let e = residual_e(&phi);
    let mut h = y.clone();
    for (i, ev) in e.iter().enumerate() {
        h[i + k] += ev;
    }
    let mut derivatives = Vec::with_capacity(2 * k);
    for j in 0..=k {
        derivatives.push(backward_quotients(&h, j, delta));
    }
    for m in 1..k {
        derivatives.push(backward_quotients(&phi, m, delta));
    }
    let knots: Vec<f64> = active.iter().map(|&a| path.grid[a + k]).collect();
    let multipliers: Vec<f64> = coef[k..].to_vec();
    let certificate = certify(path, &h, &active, &multipliers, opts);
    Ok(Invelope {
        k,
        grid: path.grid.clone(),
        values: h,
        derivatives,
        knots,
        multipliers,
        iterations,
        certificate,
    })
}

fn certify(path: &LimitPath, h: &[f64], active: &[usize], lam: &[f64], opts: &InvelopeOptions) -> InvelopeCertificate {
    let k = path.k;
    let half = 0.5 * path.half_width * (1.0 + 1e-12);
    let central = |i: usize| path.grid[i].abs() <= half;
    let mut scale: f64 = 0.0;
    let mut min_gap = f64::INFINITY;
    let mut argmin = 0.0;
    for i in 0..h.len() {
        if !central(i) {
            continue;
        }
        scale = scale.max(h[i].abs()).max(path.values[i].abs());
        let gap = h[i] - path.values[i];
        if gap < min_gap {
            min_gap = gap;
            argmin = path.grid[i];
        }
    }
    let scale = scale.max(f64::MIN_POSITIVE);
    // A multiplier is the jump of the (2k-1)-st difference quotient times
    // delta^{k-1}, paired with the gap at the node where H touches Y_k.
    let mut slack = 0.0;
    for (&a, &l) in active.iter().zip(lam) {
        let node = a + k;
        if central(node) {
            slack += (h[node] - path.values[node]) * l;
        }
    }
    let slackness_residual = (slack / path.delta.powi(k as i32 - 1)).abs();
    InvelopeCertificate {
        min_gap,
        argmin_gap: argmin,
        slackness_residual,
        scale,
        passed: min_gap >= -opts.tol_ineq * scale && slackness_residual <= opts.tol_eq * scale,
    }
}

/// Least concave majorant of the path values, evaluated on the grid, by a
/// monotone-chain upper hull.
pub fn lcm_oracle(grid: &[f64], values: &[f64]) -> Vec<f64> {
    let mut hull: Vec<usize> = Vec::new();
    for i in 0..grid.len() {
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let cross = (grid[b] - grid[a]) * (values[i] - values[a]) - (values[b] - values[a]) * (grid[i] - grid[a]);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }
    let mut out = vec![0.0; grid.len()];
    for w in hull.windows(2) {
        let (a, b) = (w[0], w[1]);
        for (i, o) in out.iter_mut().enumerate().take(b + 1).skip(a) {
            let s = (grid[i] - grid[a]) / (grid[b] - grid[a]);
            *o = values[a] + s * (values[b] - values[a]);
        }
    }
    if hull.len() == 1 {
        out[0] = values[0];
    }
    out
}
