//! Scale mixtures of Beta(1, k) kernels.
//!
//! Every integrable k-monotone function on `(0, inf)` is a nonnegative
//! mixture `g(x) = sum_i w_i k (t_i - x)_+^{k-1} / t_i^k`. This module holds
//! the kernel, the finite mixing measure, and the exact conversion of a
//! mixture into a [`PiecewisePoly`].

use serde::{Deserialize, Serialize};

use crate::error::{domain, invalid, Result};
use crate::poly::{binomial, PiecewisePoly, MAX_K};

/// Whether the weights of a [`MixingMeasure`] are required to sum to one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MassConstraint {
    Unit,
    Free,
}

pub(crate) fn check_k(k: usize) -> Result<()> {
    if k == 0 || k > MAX_K {
        return invalid(format!("k must lie in 1..={MAX_K}, got {k}"));
    }
    Ok(())
}

/// The Beta(1, k) kernel rescaled to `[0, y]`: `k (y - x)^{k-1} / y^k`.
///
/// For `k = 1` the support is the closed interval `[0, y]`, so the uniform
/// density is `1 / y` at `x = y` (the left-continuous version, which matches
/// the Grenander estimator). For `k >= 2` the kernel vanishes at `x = y`.
pub fn beta_kernel(k: usize, y: f64, x: f64) -> Result<f64> {
    check_k(k)?;
    if !(y > 0.0) || !y.is_finite() {
        return domain(format!("kernel scale must be positive, got {y}"));
    }
    if !(x >= 0.0) {
        return domain(format!("kernel argument must be nonnegative, got {x}"));
    }
    Ok(kernel_unchecked(k, y, x))
}

#[inline]
pub(crate) fn kernel_unchecked(k: usize, y: f64, x: f64) -> f64 {
    if k == 1 {
        return if x <= y { 1.0 / y } else { 0.0 };
    }
    if x >= y {
        return 0.0;
    }
    let r = 1.0 - x / y;
    k as f64 * r.powi(k as i32 - 1) / y
}

/// A finite discrete measure on `(0, inf)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingMeasure {
    atoms: Vec<f64>,
    weights: Vec<f64>,
    mass_constraint: MassConstraint,
}

impl MixingMeasure {
    /// Validates and builds a measure. Atoms must be strictly increasing and
    /// positive, weights nonnegative; with [`MassConstraint::Unit`] the
    /// weights must sum to one within `1e-12`.
    pub fn new(atoms: Vec<f64>, weights: Vec<f64>, mass_constraint: MassConstraint) -> Result<Self> {
        if atoms.len() != weights.len() {
            return invalid("atoms and weights differ in length");
        }
        if atoms.iter().any(|&t| !(t > 0.0) || !t.is_finite()) {
            return invalid("atoms must be positive and finite");
        }
        if atoms.windows(2).any(|w| w[1] <= w[0]) {
            return invalid("atoms must be strictly increasing");
        }
        if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return invalid("weights must be nonnegative and finite");
        }
        if mass_constraint == MassConstraint::Unit {
            let total: f64 = weights.iter().sum();
            if (total - 1.0).abs() > 1e-12 {
                return invalid(format!("unit-mass measure sums to {total}"));
            }
        }
        Ok(Self {
            atoms,
            weights,
            mass_constraint,
        })
    }

    /// Builds a measure from unsorted pairs, merging repeated atoms and
    /// dropping zero weights.
    pub fn from_pairs(pairs: &[(f64, f64)], mass_constraint: MassConstraint) -> Result<Self> {
        let mut pairs: Vec<(f64, f64)> = pairs.iter().copied().filter(|p| p.1 != 0.0).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut atoms: Vec<f64> = Vec::with_capacity(pairs.len());
        let mut weights: Vec<f64> = Vec::with_capacity(pairs.len());
        for (t, w) in pairs {
            if atoms.last() == Some(&t) {
                *weights.last_mut().unwrap() += w;
            } else {
                atoms.push(t);
                weights.push(w);
            }
        }
        Self::new(atoms, weights, mass_constraint)
    }

    pub fn empty() -> Self {
        Self {
            atoms: Vec::new(),
            weights: Vec::new(),
            mass_constraint: MassConstraint::Free,
        }
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mass_constraint(&self) -> MassConstraint {
        self.mass_constraint
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Mass of atoms at or below `t`.
    pub fn cdf(&self, t: f64) -> f64 {
        self.atoms
            .iter()
            .zip(&self.weights)
            .filter(|(&a, _)| a <= t)
            .map(|(_, &w)| w)
            .sum()
    }

    /// The same atoms with weights multiplied by `factor`.
    pub fn scaled_weights(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.atoms.clone(),
            self.weights.iter().map(|w| w * factor).collect(),
            MassConstraint::Free,
        )
    }
}

/// `sum_i w_i beta_kernel(k, t_i, x)`.
pub fn mixture_density(mm: &MixingMeasure, k: usize, x: f64) -> Result<f64> {
    check_k(k)?;
    if !(x >= 0.0) {
        return domain(format!("density argument must be nonnegative, got {x}"));
    }
    Ok(mm
        .atoms
        .iter()
        .zip(&mm.weights)
        .map(|(&t, &w)| w * kernel_unchecked(k, t, x))
        .sum())
}

/// Exact piecewise-polynomial form of a mixture.
///
/// Breakpoints are `0`, the atoms, and `2 * max atom`; the last piece is
/// identically zero so that quantities such as the mixing CDF can be read
/// off past the support. An empty measure gives the zero function on `[0, 1]`.
/// Interior breakpoints evaluate to the right limit, so for `k = 1` use
/// [`PiecewisePoly::eval_left`] to reproduce [`mixture_density`] at atoms.
pub fn mixture_to_piecewise(mm: &MixingMeasure, k: usize) -> Result<PiecewisePoly> {
    check_k(k)?;
    if mm.is_empty() {
        return PiecewisePoly::new(vec![0.0, 1.0], vec![vec![0.0; k]], k as i32 - 2);
    }
    mixture_to_piecewise_on(mm, k, 2.0 * mm.atoms[mm.len() - 1])
}

/// [`mixture_to_piecewise`] on `[0, upper]`, where `upper` is at least the
/// largest atom. When `upper` equals the largest atom there is no trailing
/// zero piece.
pub fn mixture_to_piecewise_on(mm: &MixingMeasure, k: usize, upper: f64) -> Result<PiecewisePoly> {
    check_k(k)?;
    if mm.atoms.last().is_some_and(|&t| t > upper) || !(upper > 0.0) {
        return invalid("upper end must cover every atom");
    }
    let mut breaks = Vec::with_capacity(mm.len() + 2);
    breaks.push(0.0);
    breaks.extend_from_slice(&mm.atoms);
    if mm.atoms.last().is_none_or(|&t| t < upper) {
        breaks.push(upper);
    }
    let kf = k as f64;
    let mut coeffs = Vec::with_capacity(breaks.len() - 1);
    for (i, &left) in breaks[..breaks.len() - 1].iter().enumerate() {
        let mut c = vec![0.0; k];
        // atoms strictly to the right of `left` are active on this piece
        let from = i.min(mm.len());
        for (&t, &w) in mm.atoms[from..].iter().zip(&mm.weights[from..]) {
            if t <= left {
                continue;
            }
            let scale = w * kf / t.powi(k as i32);
            let d = t - left;
            for (m, cm) in c.iter_mut().enumerate() {
                let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                *cm += scale * sign * binomial(k - 1, m) * d.powi((k - 1 - m) as i32);
            }
        }
        coeffs.push(c);
    }
    PiecewisePoly::new(breaks, coeffs, k as i32 - 2)
}
