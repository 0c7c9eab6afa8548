//! Least squares and maximum likelihood estimation of a k-monotone density.
//!
//! Both estimators are finite mixtures of the Beta(1, k) kernels of
//! [`crate::mixture`], computed by support reduction. Each fit carries a
//! [`CharacterizationReport`] that checks the Fenchel optimality conditions
//! on a fine grid; a fit is declared converged exactly when its report
//! passes.

mod certificate;
mod grenander;
mod inversion;
mod lse;
mod mle;

use serde::{Deserialize, Serialize};

use crate::mixture::MixingMeasure;
use crate::poly::PiecewisePoly;

pub(crate) use certificate::mle_weighted_process;
pub use certificate::{certify, CertifyOptions, CharacterizationReport};
pub use grenander::{grenander, StepFunction};
pub use inversion::{invert_hampel, invert_mixing, mixing_cdf_curve};
pub use lse::{fit_lse, lse_objective};
pub use mle::{fit_mle, log_likelihood, process_hhat};

use crate::error::Result;
use crate::process::ProcessTrace;
use crate::sample::Sample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Lse,
    Mle,
}

impl std::str::FromStr for Estimator {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "lse" => Ok(Self::Lse),
            "mle" => Ok(Self::Mle),
            other => Err(format!("unknown estimator {other:?} (expected lse or mle)")),
        }
    }
}

/// Solver settings shared by both estimators.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitOptions {
    /// Cap on support-reduction iterations.
    pub max_iter: usize,
    /// Stopping tolerance on the most negative directional derivative,
    /// relative to the density scale of the data.
    pub tol: f64,
    /// Atoms are searched in `(0, upper_factor * max sample]`; defaults to
    /// `2k`.
    pub upper_factor: Option<f64>,
    pub certify: CertifyOptions,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iter: 400,
            tol: 1e-8,
            upper_factor: None,
            certify: CertifyOptions::default(),
        }
    }
}

impl FitOptions {
    pub(crate) fn upper(&self, sample: &Sample, k: usize) -> f64 {
        self.upper_factor.unwrap_or(2.0 * k as f64).max(1.5) * sample.max()
    }
}

/// A fitted estimator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub k: usize,
    pub estimator: Estimator,
    /// The density as a piecewise polynomial of degree `k - 1`.
    pub estimate: PiecewisePoly,
    pub mixing: MixingMeasure,
    /// Jump points of the `(k-1)`-st derivative (the mixing atoms).
    pub knots: Vec<f64>,
    /// Final criterion value: `Phi_n` for the LSE, `-l_n` for the MLE.
    pub objective: f64,
    /// Criterion after every accepted iterate; nonincreasing.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub certificate: CharacterizationReport,
    /// Upper end of the atom search range.
    pub upper: f64,
    pub warnings: Vec<String>,
}

impl FitResult {
    /// Density value; left limit at breakpoints, zero past the support.
    pub fn density(&self, x: f64) -> f64 {
        if x > self.estimate.end() {
            return 0.0;
        }
        self.estimate.eval_left(x.max(0.0), 0).unwrap_or(0.0)
    }

    pub fn total_mass(&self) -> f64 {
        self.mixing.total_mass()
    }
}

/// Evaluates `H~_n`, the k-fold integral of the estimate from zero.
pub fn process_htilde(fit: &FitResult, grid: &[f64]) -> Result<ProcessTrace> {
    let h = integrated_estimate(fit)?;
    Ok(ProcessTrace {
        name: "H_n".into(),
        grid: grid.to_vec(),
        values: grid.iter().map(|&x| eval_extended(&h, x, 0)).collect(),
    })
}

/// The k-fold integral of the estimate from zero as a piecewise polynomial.
pub fn integrated_estimate(fit: &FitResult) -> Result<PiecewisePoly> {
    fit.estimate.antiderivative(fit.k, 0.0)
}

/// Evaluates past the end of the domain by continuing the last piece; this
/// is exact for integrals of mixtures, whose last piece is a polynomial that
/// stays valid beyond the support.
pub(crate) fn eval_extended(p: &PiecewisePoly, x: f64, d: usize) -> f64 {
    p.eval_unchecked(x, d)
}

/// Global minimiser of `f` given its values on an increasing grid: every
/// discrete local minimum below `margin` is refined by golden section
/// between its grid neighbours, which catches shallow dips between grid
/// points next to the current knots.
pub(crate) fn refined_min(grid: &[f64], vals: &[f64], f: impl Fn(f64) -> f64, margin: f64) -> (f64, f64) {
    let last = grid.len() - 1;
    let mut best = (grid[0], vals[0]);
    for (i, &v) in vals.iter().enumerate() {
        if v < best.1 {
            best = (grid[i], v);
        }
    }
    for i in 0..=last {
        let v = vals[i];
        let left_ok = i == 0 || v <= vals[i - 1];
        let right_ok = i == last || v <= vals[i + 1];
        if v >= margin || !left_ok || !right_ok {
            continue;
        }
        let lo = grid[i.saturating_sub(1)];
        let hi = grid[(i + 1).min(last)];
        if hi <= lo {
            continue;
        }
        let t = lse::golden_min(&f, lo, hi);
        let ft = f(t);
        if ft < best.1 {
            best = (t, ft);
        }
    }
    best
}

/// Smallest value of `f` just beside the atoms, where `f` touches zero and
/// a narrow dip next to an atom falls between any fixed grid points. Each
/// side of every atom is scanned at geometric offsets and the best offset is
/// refined by golden section.
pub(crate) fn near_atom_min(atoms: &[f64], f: impl Fn(f64) -> f64, upper: f64) -> Option<(f64, f64)> {
    const OFFSETS: [f64; 7] = [1e-8, 1e-6, 1e-4, 1e-3, 3e-3, 1e-2, 3e-2];
    let mut best: Option<(f64, f64)> = None;
    for &a in atoms {
        for side in [-1.0, 1.0] {
            let pts: Vec<f64> = std::iter::once(a)
                .chain(OFFSETS.iter().map(|r| a * (1.0 + side * r)))
                .filter(|&t| t > 0.0 && t <= upper)
                .collect();
            if pts.len() < 3 {
                continue;
            }
            let vals: Vec<f64> = pts.iter().map(|&t| f(t)).collect();
            let j = (1..pts.len())
                .min_by(|&x, &y| vals[x].total_cmp(&vals[y]))
                .expect("at least two offsets");
            let (lo, hi) = {
                let l = pts[j - 1];
                let h = pts[(j + 1).min(pts.len() - 1)];
                (l.min(h), l.max(h))
            };
            let t = lse::golden_min(&f, lo, hi);
            let (t, v) = if f(t) < vals[j] { (t, f(t)) } else { (pts[j], vals[j]) };
            if best.is_none_or(|b| v < b.1) {
                best = Some((t, v));
            }
        }
    }
    best
}

/// Merges each adjacent pair of atoms whose slope residuals have the
/// pattern `(-, +)`: the two atoms then bracket a dip and stand in for a
/// single knot between them.
pub(crate) fn merge_bracketing_pairs(atoms: &[f64], w: &[f64], slopes: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut out_t = Vec::with_capacity(atoms.len());
    let mut out_w = Vec::with_capacity(atoms.len());
    let mut i = 0;
    while i < atoms.len() {
        if i + 1 < atoms.len() && slopes[i] < 0.0 && slopes[i + 1] > 0.0 {
            let total = w[i] + w[i + 1];
            out_t.push((atoms[i] * w[i] + atoms[i + 1] * w[i + 1]) / total);
            out_w.push(total);
            i += 2;
        } else {
            out_t.push(atoms[i]);
            out_w.push(w[i]);
            i += 1;
        }
    }
    (out_t, out_w)
}

/// Starting configurations that merge one or two adjacent atom pairs whose
/// relative gap is below `rel`. Merging everything close at once can remove
/// genuine neighbouring knots along with the spurious pairs.
pub(crate) fn pair_merge_starts(atoms: &[f64], w: &[f64], rel: f64) -> Vec<(Vec<f64>, Vec<f64>)> {
    let close: Vec<usize> = (0..atoms.len().saturating_sub(1))
        .filter(|&i| atoms[i + 1] - atoms[i] <= rel * atoms[i + 1])
        .collect();
    let merge = |pairs: &[usize]| {
        let mut t = Vec::with_capacity(atoms.len());
        let mut v = Vec::with_capacity(atoms.len());
        let mut i = 0;
        while i < atoms.len() {
            if pairs.contains(&i) {
                let total = w[i] + w[i + 1];
                t.push((atoms[i] * w[i] + atoms[i + 1] * w[i + 1]) / total);
                v.push(total);
                i += 2;
            } else {
                t.push(atoms[i]);
                v.push(w[i]);
                i += 1;
            }
        }
        (t, v)
    };
    let mut out = Vec::new();
    for (a, &i) in close.iter().enumerate() {
        out.push(merge(&[i]));
        for &j in &close[a + 1..] {
            if j > i + 1 {
                out.push(merge(&[i, j]));
            }
        }
    }
    out
}
