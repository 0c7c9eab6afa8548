//! Odd-degree spline interpolation: the Hermite problem whose interior
//! sites double as knots, the complete spline, the error monospline of
//! `x^{2k} / (2k)!`, perfect splines and the Chebyshev comparison polynomial.

use serde::{Deserialize, Serialize};

use crate::bspline::{collocate, Condition, SplineSpace};
use crate::error::{invalid, Error, Result};
use crate::mixture::check_k;
use crate::poly::{binomial, factorial, taylor_shift, PiecewisePoly};

/// Values and first derivatives of a function at `2k - 2` increasing sites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HermiteData {
    k: usize,
    sites: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl HermiteData {
    pub fn new(k: usize, sites: Vec<f64>, values: Vec<f64>, slopes: Vec<f64>) -> Result<Self> {
        check_k(k)?;
        if k < 2 {
            return invalid("Hermite interpolation needs k >= 2");
        }
        let m = 2 * k - 2;
        if sites.len() != m || values.len() != m || slopes.len() != m {
            return invalid(format!("expected {m} sites, values and slopes"));
        }
        if sites.iter().chain(&values).chain(&slopes).any(|v| !v.is_finite()) {
            return invalid("Hermite data must be finite");
        }
        let span = sites[m - 1] - sites[0];
        if !(span > 0.0) {
            return invalid("sites must be strictly increasing");
        }
        let min_gap = sites.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        if !(min_gap >= 1e-10 * span) {
            return Err(Error::IllConditioned {
                condition: span / min_gap.max(f64::MIN_POSITIVE),
            });
        }
        Ok(Self {
            k,
            sites,
            values,
            slopes,
        })
    }

    /// Samples `f` and `f'` at the sites.
    pub fn from_fn(k: usize, sites: &[f64], f: impl Fn(f64) -> (f64, f64)) -> Result<Self> {
        let (values, slopes) = sites.iter().map(|&x| f(x)).unzip();
        Self::new(k, sites.to_vec(), values, slopes)
    }

    /// Samples a piecewise polynomial (right-limit convention).
    pub fn from_poly(k: usize, sites: &[f64], p: &PiecewisePoly) -> Result<Self> {
        Self::from_fn(k, sites, |x| (p.eval_unchecked(x, 0), p.eval_unchecked(x, 1)))
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn sites(&self) -> &[f64] {
        &self.sites
    }
}

/// An interpolating spline together with the condition estimate of the
/// collocation system that produced it.
#[derive(Debug, Clone)]
pub struct Interpolant {
    pub spline: PiecewisePoly,
    pub condition: f64,
}

/// Solves the Hermite problem: the degree `2k - 1` spline with simple knots
/// at the interior sites matching values and slopes at every site.
pub fn hermite_interpolant(data: &HermiteData) -> Result<PiecewisePoly> {
    hermite_solve(data).map(|i| i.spline)
}

/// [`hermite_interpolant`] that also reports the condition estimate.
pub fn hermite_solve(data: &HermiteData) -> Result<Interpolant> {
    let k = data.k;
    let m = data.sites.len();
    let a = data.sites[0];
    let len = data.sites[m - 1] - a;
    let unit: Vec<f64> = data.sites.iter().map(|&y| (y - a) / len).collect();
    let interior = &unit[1..m - 1];
    let space = SplineSpace::clamped(2 * k - 1, 0.0, 1.0, interior);
    let mut conds = Vec::with_capacity(2 * m);
    for i in 0..m {
        let u = if i == m - 1 { 1.0 } else { unit[i] };
        conds.push(Condition {
            x: u,
            deriv: 0,
            value: data.values[i],
        });
        conds.push(Condition {
            x: u,
            deriv: 1,
            value: data.slopes[i] * len,
        });
    }
    let (coef, condition) = collocate(&space, &conds)?;
    let spline = space.to_piecewise(&coef, 2 * k as i32 - 2)?.affine(a, len, 1.0)?;
    Ok(Interpolant { spline, condition })
}

/// The complete spline of degree `2k - 1` on `[a, b]` with simple interior
/// knots: it matches `values` at the interior knots and derivatives of
/// orders `0..k` at both end points.
pub fn complete_interpolant(
    k: usize,
    a: f64,
    b: f64,
    interior_knots: &[f64],
    values: &[f64],
    left_derivs: &[f64],
    right_derivs: &[f64],
) -> Result<Interpolant> {
    check_k(k)?;
    if interior_knots.is_empty() {
        return invalid("the complete spline needs at least one interior knot");
    }
    if values.len() != interior_knots.len() || left_derivs.len() != k || right_derivs.len() != k {
        return invalid("complete interpolation data has the wrong shape");
    }
    if !(a < b)
        || interior_knots.first().is_some_and(|&y| y <= a)
        || interior_knots.last().is_some_and(|&y| y >= b)
        || interior_knots.windows(2).any(|w| w[1] <= w[0])
    {
        return invalid("interior knots must be strictly increasing inside (a, b)");
    }
    let len = b - a;
    let interior: Vec<f64> = interior_knots.iter().map(|&y| (y - a) / len).collect();
    let space = SplineSpace::clamped(2 * k - 1, 0.0, 1.0, &interior);
    let mut conds = Vec::with_capacity(2 * k + interior.len());
    for d in 0..k {
        let s = len.powi(d as i32);
        conds.push(Condition {
            x: 0.0,
            deriv: d,
            value: left_derivs[d] * s,
        });
        conds.push(Condition {
            x: 1.0,
            deriv: d,
            value: right_derivs[d] * s,
        });
    }
    for (&u, &v) in interior.iter().zip(values) {
        conds.push(Condition {
            x: u,
            deriv: 0,
            value: v,
        });
    }
    let (coef, condition) = collocate(&space, &conds)?;
    let spline = space.to_piecewise(&coef, 2 * k as i32 - 2)?.affine(a, len, 1.0)?;
    Ok(Interpolant { spline, condition })
}

/// `x^{2k} / (2k)!` on `[0, 1]`.
fn scaled_power(k: usize) -> PiecewisePoly {
    let mut c = vec![0.0; 2 * k + 1];
    c[2 * k] = 1.0 / factorial(2 * k);
    PiecewisePoly::polynomial(0.0, 1.0, c).expect("unit interval")
}

/// The Hermite interpolation error of `x^{2k} / (2k)!` for the given
/// `2k - 2` sites, as a degree `2k` piecewise polynomial on the site span.
pub fn error_monospline(k: usize, knots: &[f64]) -> Result<PiecewisePoly> {
    Ok(error_monospline_solve(k, knots)?.spline)
}

/// [`error_monospline`] with the condition estimate of the underlying
/// Hermite system.
pub fn error_monospline_solve(k: usize, knots: &[f64]) -> Result<Interpolant> {
    check_k(k)?;
    if knots.len() != 2 * k - 2 || k < 2 {
        return invalid(format!("expected {} knots", 2 * k - 2));
    }
    let a = knots[0];
    let len = knots[knots.len() - 1] - a;
    if !(len > 0.0) {
        return invalid("knots must be strictly increasing");
    }
    // The monospline is invariant under translation up to a polynomial the
    // interpolant reproduces, so work with (x - a)^{2k} on the unit interval
    // and rescale.
    let unit: Vec<f64> = knots.iter().map(|&y| (y - a) / len).collect();
    let f = scaled_power(k);
    let data = HermiteData::from_poly(k, &unit, &f)?;
    let h = hermite_solve(&data)?;
    let err = f.combine(1.0, &h.spline, -1.0)?;
    let spline = err.affine(a, len, len.powi(2 * k as i32))?;
    Ok(Interpolant {
        spline: PiecewisePoly::new(spline.breaks().to_vec(), spline.coeffs().to_vec(), 2 * k as i32 - 2)?,
        condition: h.condition,
    })
}

/// The perfect spline `(t^{2k} + 2 sum_i (-1)^i (t - tau_i)_+^{2k}) / (2k)!`
/// on `[0, 1]`, whose `2k`-th derivative alternates between `+1` and `-1`
/// across the interior knots.
pub fn perfect_spline(k: usize, interior_knots: &[f64]) -> Result<PiecewisePoly> {
    check_k(k)?;
    if k < 2 || interior_knots.len() != 2 * k - 4 {
        return invalid(format!("expected {} interior knots", (2 * k).saturating_sub(4)));
    }
    if interior_knots.iter().any(|&t| !(t > 0.0 && t < 1.0)) || interior_knots.windows(2).any(|w| w[1] <= w[0]) {
        return invalid("interior knots must be strictly increasing inside (0, 1)");
    }
    let deg = 2 * k;
    let scale = 1.0 / factorial(deg);
    let mut breaks = vec![0.0];
    breaks.extend_from_slice(interior_knots);
    breaks.push(1.0);
    // Build piece by piece: on piece j the top coefficient is (-1)^j / (2k)!,
    // and lower coefficients follow from continuity of derivatives 0..2k-1.
    let mut coeffs: Vec<Vec<f64>> = Vec::with_capacity(breaks.len() - 1);
    let mut first = vec![0.0; deg + 1];
    first[deg] = scale;
    coeffs.push(first);
    for j in 1..breaks.len() - 1 {
        let h = breaks[j] - breaks[j - 1];
        let mut c = taylor_shift(&coeffs[j - 1], h);
        c[deg] = if j % 2 == 0 { scale } else { -scale };
        coeffs.push(c);
    }
    PiecewisePoly::new(breaks, coeffs, deg as i32 - 1)
}

/// Chebyshev polynomial `T_n` in the monomial basis.
fn chebyshev_t(n: usize) -> Vec<f64> {
    let mut prev = vec![1.0];
    if n == 0 {
        return prev;
    }
    let mut cur = vec![0.0, 1.0];
    for _ in 1..n {
        let mut next = vec![0.0; cur.len() + 1];
        for (i, &c) in cur.iter().enumerate() {
            next[i + 1] += 2.0 * c;
        }
        for (i, &c) in prev.iter().enumerate() {
            next[i] -= c;
        }
        prev = cur;
        cur = next;
    }
    cur
}

/// Best uniform approximation of `x^{2k}` on `[a, b]` by polynomials of
/// degree at most `2k - 1`: `x^{2k} - ((b - a)/2)^{2k} 2^{1-2k} T_{2k}(v)`
/// with `v` the affine map of `[a, b]` onto `[-1, 1]`. The sup error is
/// `((b - a)/2)^{2k} 2^{1-2k}`.
pub fn chebyshev_best_poly(k: usize, a: f64, b: f64) -> Result<PiecewisePoly> {
    if k == 0 {
        return invalid("k must be positive");
    }
    if !(a < b) {
        return invalid("chebyshev_best_poly needs a < b");
    }
    let n = 2 * k;
    let half = (b - a) / 2.0;
    let amp = half.powi(n as i32) * 2f64.powi(1 - n as i32);
    // T_n(alpha u - 1) with u = x - a
    let alpha = 1.0 / half;
    let t = taylor_shift(&chebyshev_t(n), -1.0);
    let mut c: Vec<f64> = (0..=n)
        .map(|m| binomial(n, m) * a.powi((n - m) as i32) - amp * t[m] * alpha.powi(m as i32))
        .collect();
    c[n] = 0.0;
    c.truncate(n);
    PiecewisePoly::polynomial(a, b, c)
}

/// Largest `|p|` over the domain: a uniform grid of `per_piece` points in
/// every piece, followed by golden-section refinement around the grid
/// maximiser. Returns the value and its location.
pub fn sup_abs(p: &PiecewisePoly, per_piece: usize) -> (f64, f64) {
    let per_piece = per_piece.max(3);
    let breaks = p.breaks();
    let mut best = (f64::NEG_INFINITY, breaks[0], 0usize, 0usize);
    for (i, c) in p.coeffs().iter().enumerate() {
        let h = breaks[i + 1] - breaks[i];
        for j in 0..per_piece {
            let u = h * j as f64 / (per_piece - 1) as f64;
            let v = crate::poly::horner(c, u).abs();
            if v > best.0 {
                best = (v, breaks[i] + u, i, j);
            }
        }
    }
    let (mut val, mut arg, i, j) = best;
    let c = &p.coeffs()[i];
    let h = breaks[i + 1] - breaks[i];
    let step = h / (per_piece - 1) as f64;
    let lo = (j as f64 - 1.0).max(0.0) * step;
    let hi = ((j + 1) as f64 * step).min(h);
    let (u, v) = golden_max(|u| crate::poly::horner(c, u).abs(), lo, hi, 1e-14 * h.max(1e-300));
    if v > val {
        val = v;
        arg = breaks[i] + u;
    }
    (val, arg)
}

fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..200 {
        if b - a <= tol {
            break;
        }
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = f(x1);
        }
    }
    if f1 > f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}
