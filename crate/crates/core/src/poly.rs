//! Piecewise polynomials in a local power basis.
//!
//! Each piece `[b_i, b_{i+1}]` stores coefficients `c_0, ..., c_d` of
//! `sum_m c_m (x - b_i)^m`. Evaluation at an interior breakpoint takes the
//! right limit; at the final breakpoint the left limit is used.

use serde::{Deserialize, Serialize};

use crate::error::{domain, invalid, Result};

/// Largest degree accepted by the constructors that build polynomials from
/// k-monotone kernels (`k <= 8` means degree at most `2k = 16`).
pub const MAX_K: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewisePoly {
    breaks: Vec<f64>,
    coeffs: Vec<Vec<f64>>,
    degree: usize,
    /// Derivatives `0..=smoothness` agree at interior breakpoints; `-1` means
    /// no continuity is claimed.
    smoothness: i32,
}

impl PiecewisePoly {
    /// Builds a piecewise polynomial from breakpoints and per-piece local
    /// coefficients. Coefficient vectors shorter than `degree + 1` are padded
    /// with zeros; the degree is the longest vector length minus one.
    pub fn new(breaks: Vec<f64>, coeffs: Vec<Vec<f64>>, smoothness: i32) -> Result<Self> {
        if breaks.len() < 2 {
            return invalid("a piecewise polynomial needs at least two breakpoints");
        }
        if breaks.iter().any(|b| !b.is_finite()) {
            return invalid("breakpoints must be finite");
        }
        if breaks.windows(2).any(|w| w[1] <= w[0]) {
            return invalid("breakpoints must be strictly increasing");
        }
        if coeffs.len() != breaks.len() - 1 {
            return invalid(format!(
                "expected {} coefficient vectors, got {}",
                breaks.len() - 1,
                coeffs.len()
            ));
        }
        let degree = coeffs.iter().map(|c| c.len()).max().unwrap_or(1).max(1) - 1;
        let coeffs = coeffs
            .into_iter()
            .map(|mut c| {
                c.resize(degree + 1, 0.0);
                c
            })
            .collect();
        Ok(Self {
            breaks,
            coeffs,
            degree,
            smoothness,
        })
    }

    /// A single polynomial on `[a, b]` with coefficients about `a`.
    pub fn polynomial(a: f64, b: f64, coeffs_about_a: Vec<f64>) -> Result<Self> {
        Self::new(vec![a, b], vec![coeffs_about_a], i32::MAX)
    }

    /// Monomial-basis polynomial `sum_m c_m x^m` restricted to `[a, b]`.
    pub fn from_monomial(a: f64, b: f64, monomial: &[f64]) -> Result<Self> {
        Self::polynomial(a, b, taylor_shift(monomial, a))
    }

    /// The truncated power `(x - knot)_+^degree` on `[a, b]`.
    pub fn truncated_power(knot: f64, degree: usize, a: f64, b: f64) -> Result<Self> {
        if !(a < b) {
            return invalid("truncated power needs a < b");
        }
        let mut unit = vec![0.0; degree + 1];
        unit[degree] = 1.0;
        if knot <= a {
            return Self::polynomial(a, b, taylor_shift(&unit, a - knot));
        }
        if knot >= b {
            return Self::new(vec![a, b], vec![vec![0.0; degree + 1]], i32::MAX);
        }
        Self::new(vec![a, knot, b], vec![vec![0.0; degree + 1], unit], degree as i32 - 1)
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn coeffs(&self) -> &[Vec<f64>] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn smoothness(&self) -> i32 {
        self.smoothness
    }

    pub fn num_pieces(&self) -> usize {
        self.coeffs.len()
    }

    pub fn start(&self) -> f64 {
        self.breaks[0]
    }

    pub fn end(&self) -> f64 {
        *self.breaks.last().unwrap()
    }

    /// Piece containing `x` under the right-limit convention.
    pub fn piece_index(&self, x: f64) -> usize {
        let last = self.coeffs.len() - 1;
        // partition_point gives the count of breaks <= x
        let p = self.breaks.partition_point(|&b| b <= x);
        p.saturating_sub(1).min(last)
    }

    /// Piece containing `x` under the left-limit convention.
    pub fn piece_index_left(&self, x: f64) -> usize {
        let last = self.coeffs.len() - 1;
        let p = self.breaks.partition_point(|&b| b < x);
        p.saturating_sub(1).min(last)
    }

    fn check_domain(&self, x: f64) -> Result<()> {
        if !(x >= self.start() && x <= self.end()) {
            return domain(format!("x = {x} outside [{}, {}]", self.start(), self.end()));
        }
        Ok(())
    }

    /// Value of the `deriv`-th derivative at `x` (right limit at interior
    /// breakpoints, left limit at the final one).
    pub fn eval(&self, x: f64, deriv: usize) -> Result<f64> {
        self.check_domain(x)?;
        Ok(self.eval_unchecked(x, deriv))
    }

    /// Left-limit evaluation (right limit at the first breakpoint).
    pub fn eval_left(&self, x: f64, deriv: usize) -> Result<f64> {
        self.check_domain(x)?;
        let i = self.piece_index_left(x);
        Ok(poly_deriv(&self.coeffs[i], x - self.breaks[i], deriv))
    }

    /// Same as [`eval`](Self::eval) without the domain check; points outside
    /// the domain are extrapolated from the end pieces.
    pub fn eval_unchecked(&self, x: f64, deriv: usize) -> f64 {
        let i = self.piece_index(x);
        poly_deriv(&self.coeffs[i], x - self.breaks[i], deriv)
    }

    /// All derivatives `0..=max_deriv` at `x` (right-limit convention).
    pub fn eval_all(&self, x: f64, max_deriv: usize) -> Vec<f64> {
        let i = self.piece_index(x);
        let u = x - self.breaks[i];
        (0..=max_deriv).map(|d| poly_deriv(&self.coeffs[i], u, d)).collect()
    }

    /// The `order`-th derivative as a new piecewise polynomial.
    pub fn derivative(&self, order: usize) -> Self {
        if order == 0 {
            return self.clone();
        }
        let coeffs: Vec<Vec<f64>> = self
            .coeffs
            .iter()
            .map(|c| {
                if order > self.degree {
                    return vec![0.0];
                }
                (order..=self.degree).map(|m| c[m] * falling(m, order)).collect()
            })
            .collect();
        Self {
            breaks: self.breaks.clone(),
            coeffs,
            degree: self.degree.saturating_sub(order),
            smoothness: self.smoothness.saturating_sub(order as i32).max(-1),
        }
    }

    /// The `order`-fold antiderivative whose value and first `order - 1`
    /// derivatives vanish at `anchor`.
    pub fn antiderivative(&self, order: usize, anchor: f64) -> Result<Self> {
        self.check_domain(anchor)?;
        let mut out = self.clone();
        for _ in 0..order {
            out = out.integrate_once(anchor);
        }
        Ok(out)
    }

    fn integrate_once(&self, anchor: f64) -> Self {
        let deg = self.degree + 1;
        let mut coeffs = Vec::with_capacity(self.coeffs.len());
        let mut carry = 0.0;
        for (i, c) in self.coeffs.iter().enumerate() {
            let mut ci = vec![0.0; deg + 1];
            ci[0] = carry;
            for (m, &cm) in c.iter().enumerate() {
                ci[m + 1] = cm / (m + 1) as f64;
            }
            let h = self.breaks[i + 1] - self.breaks[i];
            carry = horner(&ci, h);
            coeffs.push(ci);
        }
        let mut out = Self {
            breaks: self.breaks.clone(),
            coeffs,
            degree: deg,
            smoothness: self.smoothness.saturating_add(1).max(0),
        };
        let shift = out.eval_unchecked(anchor, 0);
        for c in &mut out.coeffs {
            c[0] -= shift;
        }
        out
    }

    /// Re-expresses the polynomial on a finer breakpoint set. Every existing
    /// breakpoint must appear in `breaks` and the end points must agree.
    pub fn refine(&self, breaks: &[f64]) -> Result<Self> {
        if breaks.first() != self.breaks.first() || breaks.last() != self.breaks.last() {
            return invalid("refinement must keep the same end points");
        }
        let mut coeffs = Vec::with_capacity(breaks.len() - 1);
        for w in breaks.windows(2) {
            if w[1] <= w[0] {
                return invalid("refined breakpoints must be strictly increasing");
            }
            let i = self.piece_index(w[0]);
            if self.breaks[i + 1] < w[1] {
                return invalid("refinement drops an existing breakpoint");
            }
            coeffs.push(taylor_shift(&self.coeffs[i], w[0] - self.breaks[i]));
        }
        Ok(Self {
            breaks: breaks.to_vec(),
            coeffs,
            degree: self.degree,
            smoothness: self.smoothness,
        })
    }

    /// Linear combination `alpha * self + beta * other` over the union of
    /// both breakpoint sets. Both operands must share the same domain.
    pub fn combine(&self, alpha: f64, other: &Self, beta: f64) -> Result<Self> {
        if self.start() != other.start() || self.end() != other.end() {
            return invalid("operands live on different domains");
        }
        let mut breaks: Vec<f64> = self.breaks.iter().chain(other.breaks.iter()).copied().collect();
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let a = self.refine(&breaks)?;
        let b = other.refine(&breaks)?;
        let degree = a.degree.max(b.degree);
        let coeffs = a
            .coeffs
            .iter()
            .zip(&b.coeffs)
            .map(|(ca, cb)| {
                (0..=degree)
                    .map(|m| alpha * ca.get(m).copied().unwrap_or(0.0) + beta * cb.get(m).copied().unwrap_or(0.0))
                    .collect()
            })
            .collect();
        Ok(Self {
            breaks,
            coeffs,
            degree,
            smoothness: self.smoothness.min(other.smoothness),
        })
    }

    /// Maps the polynomial through `x = offset + scale * u` and multiplies
    /// values by `value_scale`. `self` is read as a function of `u`.
    pub fn affine(&self, offset: f64, scale: f64, value_scale: f64) -> Result<Self> {
        if !(scale > 0.0) {
            return invalid("affine map needs a positive scale");
        }
        let breaks = self.breaks.iter().map(|&u| offset + scale * u).collect();
        let coeffs = self
            .coeffs
            .iter()
            .map(|c| {
                c.iter()
                    .enumerate()
                    .map(|(m, &cm)| value_scale * cm / scale.powi(m as i32))
                    .collect()
            })
            .collect();
        Self::new(breaks, coeffs, self.smoothness)
    }

    /// Largest relative mismatch of derivatives `0..=smoothness` across the
    /// interior breakpoints. Each derivative order is normalised by
    /// `1 + max |p^{(d)}|` over all breakpoints.
    pub fn smoothness_defect(&self) -> f64 {
        if self.smoothness < 0 || self.coeffs.len() < 2 {
            return 0.0;
        }
        let top = (self.smoothness as usize).min(self.degree);
        let mut worst: f64 = 0.0;
        for d in 0..=top {
            let mut scale: f64 = 0.0;
            let mut jumps = Vec::with_capacity(self.coeffs.len() - 1);
            for i in 1..self.coeffs.len() {
                let h = self.breaks[i] - self.breaks[i - 1];
                let left = poly_deriv(&self.coeffs[i - 1], h, d);
                let right = poly_deriv(&self.coeffs[i], 0.0, d);
                scale = scale.max(left.abs()).max(right.abs());
                jumps.push((left - right).abs());
            }
            for j in jumps {
                worst = worst.max(j / (1.0 + scale));
            }
        }
        worst
    }

    /// Maximum of `|self|` over a uniform grid with `per_piece` points in each
    /// piece (endpoints included).
    pub fn sup_norm_on_grid(&self, per_piece: usize) -> f64 {
        let per_piece = per_piece.max(2);
        let mut best: f64 = 0.0;
        for (i, c) in self.coeffs.iter().enumerate() {
            let h = self.breaks[i + 1] - self.breaks[i];
            for j in 0..per_piece {
                let u = h * j as f64 / (per_piece - 1) as f64;
                best = best.max(horner(c, u).abs());
            }
        }
        best
    }
}

/// `m (m-1) ... (m-order+1)`.
pub(crate) fn falling(m: usize, order: usize) -> f64 {
    (0..order).fold(1.0, |acc, i| acc * (m - i) as f64)
}

pub(crate) fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, i| acc * i as f64)
}

pub(crate) fn binomial(n: usize, r: usize) -> f64 {
    if r > n {
        return 0.0;
    }
    let r = r.min(n - r);
    (0..r).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

pub(crate) fn horner(c: &[f64], u: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &cm| acc * u + cm)
}

/// Derivative of order `d` of `sum_m c_m u^m` at `u`.
pub(crate) fn poly_deriv(c: &[f64], u: f64, d: usize) -> f64 {
    if d == 0 {
        return horner(c, u);
    }
    if d >= c.len() {
        return 0.0;
    }
    let mut acc = 0.0;
    for m in (d..c.len()).rev() {
        acc = acc * u + c[m] * falling(m, d);
    }
    acc
}

/// Coefficients of `p(u + h)` given the coefficients of `p(u)`.
pub(crate) fn taylor_shift(c: &[f64], h: f64) -> Vec<f64> {
    let n = c.len();
    let mut out = c.to_vec();
    if h == 0.0 {
        return out;
    }
    // repeated synthetic division
    for i in 0..n {
        for j in (i..n - 1).rev() {
            out[j] += h * out[j + 1];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn constant_piece_has_zero_slope() {
        let p = PiecewisePoly::polynomial(0.0, 1.0, vec![3.0]).unwrap();
        assert_eq!(p.eval(0.3, 1).unwrap(), 0.0);
    }

    #[test]
    fn cube_second_derivative() {
        let p = PiecewisePoly::from_monomial(0.0, 2.0, &[0.0, 0.0, 0.0, 1.0]).unwrap();
        assert_relative_eq!(p.eval(1.0, 2).unwrap(), 6.0, epsilon = 1e-14);
    }

    #[test]
    fn outside_domain_is_an_error() {
        let p = PiecewisePoly::polynomial(0.0, 1.0, vec![1.0]).unwrap();
        assert!(p.eval(1.5, 0).is_err());
        assert!(p.eval(-0.1, 0).is_err());
    }

    #[test]
    fn breakpoint_conventions() {
        let p = PiecewisePoly::new(vec![0.0, 1.0, 2.0], vec![vec![1.0], vec![2.0]], -1).unwrap();
        assert_eq!(p.eval(1.0, 0).unwrap(), 2.0);
        assert_eq!(p.eval_left(1.0, 0).unwrap(), 1.0);
        assert_eq!(p.eval(2.0, 0).unwrap(), 2.0);
        assert_eq!(p.eval(0.0, 0).unwrap(), 1.0);
    }

    #[test]
    fn antiderivative_examples() {
        let one = PiecewisePoly::polynomial(0.0, 1.0, vec![1.0]).unwrap();
        let h = one.antiderivative(2, 0.0).unwrap();
        for &x in &[0.0, 0.25, 0.7, 1.0] {
            assert_relative_eq!(h.eval(x, 0).unwrap(), x * x / 2.0, epsilon = 1e-15);
        }
        let t = PiecewisePoly::polynomial(0.0, 1.0, vec![0.0, 1.0]).unwrap();
        let h = t.antiderivative(3, 0.0).unwrap();
        for &x in &[0.0, 0.3, 0.9] {
            assert_relative_eq!(h.eval(x, 0).unwrap(), x.powi(4) / 24.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn antiderivative_is_anchored() {
        let p = PiecewisePoly::new(vec![0.0, 0.5, 1.5], vec![vec![1.0, -2.0, 0.5], vec![0.0, 1.0, 3.0]], -1).unwrap();
        let h = p.antiderivative(3, 0.7).unwrap();
        for d in 0..3 {
            assert!(h.eval(0.7, d).unwrap().abs() < 1e-14);
        }
        let back = h.derivative(3);
        for &x in &[0.1, 0.4, 0.6, 1.2] {
            assert_relative_eq!(back.eval(x, 0).unwrap(), p.eval(x, 0).unwrap(), epsilon = 1e-12);
        }
        assert!(h.smoothness() >= 2);
        assert!(h.smoothness_defect() < 1e-12);
    }

    #[test]
    fn taylor_shift_matches_direct_evaluation() {
        let c = [1.0, -3.0, 0.5, 2.0, -0.25];
        let s = taylor_shift(&c, 0.7);
        for &u in &[0.0, 0.3, -1.1] {
            assert_relative_eq!(horner(&s, u), horner(&c, u + 0.7), epsilon = 1e-12);
        }
    }

    #[test]
    fn truncated_power_constructor() {
        let p = PiecewisePoly::truncated_power(0.4, 3, 0.0, 1.0).unwrap();
        assert_eq!(p.eval(0.2, 0).unwrap(), 0.0);
        assert_relative_eq!(p.eval(0.9, 0).unwrap(), 0.5f64.powi(3), epsilon = 1e-15);
        assert!(p.smoothness_defect() < 1e-15);
    }

    #[test]
    fn combine_over_union_of_breaks() {
        let a = PiecewisePoly::truncated_power(0.3, 2, 0.0, 1.0).unwrap();
        let b = PiecewisePoly::truncated_power(0.6, 2, 0.0, 1.0).unwrap();
        let c = a.combine(1.0, &b, -2.0).unwrap();
        assert_eq!(c.breaks(), &[0.0, 0.3, 0.6, 1.0]);
        let x = 0.8;
        let want = (x - 0.3f64).powi(2) - 2.0 * (x - 0.6f64).powi(2);
        assert_relative_eq!(c.eval(x, 0).unwrap(), want, epsilon = 1e-14);
    }

    #[test]
    fn affine_map_rescales_derivatives() {
        let p = PiecewisePoly::from_monomial(0.0, 1.0, &[0.0, 0.0, 1.0]).unwrap();
        // q(x) = 3 p((x - 2) / 4) on [2, 6]
        let q = p.affine(2.0, 4.0, 3.0).unwrap();
        assert_relative_eq!(q.eval(4.0, 0).unwrap(), 3.0 * 0.25, epsilon = 1e-15);
        assert_relative_eq!(q.eval(4.0, 1).unwrap(), 3.0 * 2.0 * 0.5 / 4.0, epsilon = 1e-15);
    }
}
