//! The integrated empirical processes against which the estimators are
//! characterised.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::mixture::check_k;
use crate::poly::{factorial, taylor_shift, PiecewisePoly};
use crate::sample::Sample;

/// A process evaluated on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessTrace {
    pub name: String,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

/// `sum_i v_i (x - x_i)_+^{k-1} / (k-1)!` on `[0, upper]` for increasing
/// positive abscissas `xs`. Right-continuous at the `x_i` when `k = 1`.
pub fn weighted_integrated_empirical(xs: &[f64], v: &[f64], k: usize, upper: f64) -> Result<PiecewisePoly> {
    check_k(k)?;
    if xs.is_empty() || xs.len() != v.len() {
        return invalid("abscissas and weights must be nonempty and of equal length");
    }
    if !(xs[0] > 0.0) || !(upper > xs[xs.len() - 1]) {
        return invalid("abscissas must be positive and below the upper end");
    }
    let mut breaks = Vec::with_capacity(xs.len() + 2);
    breaks.push(0.0);
    breaks.extend_from_slice(xs);
    breaks.push(upper);
    let top = 1.0 / factorial(k - 1);
    let mut coeffs = Vec::with_capacity(xs.len() + 1);
    coeffs.push(vec![0.0; k]);
    let mut cur = vec![0.0; k];
    for i in 0..xs.len() {
        if i > 0 {
            cur = taylor_shift(&cur, xs[i] - xs[i - 1]);
        }
        cur[k - 1] += v[i] * top;
        coeffs.push(cur.clone());
    }
    PiecewisePoly::new(breaks, coeffs, k as i32 - 2)
}

/// `Y_n` of a sample as a piecewise polynomial on `[0, upper]`.
pub fn yn_poly(sample: &Sample, k: usize, upper: f64) -> Result<PiecewisePoly> {
    let (xs, counts) = sample.distinct();
    let n = sample.n() as f64;
    let v: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
    weighted_integrated_empirical(&xs, &v, k, upper)
}

/// `Y_n(x) = (1/n) sum_i (x - X_i)_+^{k-1} / (k-1)!` at the grid points,
/// summed directly.
pub fn process_yn(sample: &Sample, k: usize, grid: &[f64]) -> Result<ProcessTrace> {
    check_k(k)?;
    let n = sample.n() as f64;
    let top = factorial(k - 1);
    let values = grid
        .iter()
        .map(|&x| {
            sample
                .values()
                .iter()
                .take_while(|&&xi| xi <= x)
                .map(|&xi| (x - xi).powi(k as i32 - 1) / top)
                .sum::<f64>()
                / n
        })
        .collect();
    Ok(ProcessTrace {
        name: "Y_n".into(),
        grid: grid.to_vec(),
        values,
    })
}

/// Evaluates `p` at increasing abscissas with a single sweep over the pieces.
pub fn eval_sorted(p: &PiecewisePoly, xs: &[f64], deriv: usize) -> Vec<f64> {
    let breaks = p.breaks();
    let last = p.num_pieces() - 1;
    let mut i = 0;
    xs.iter()
        .map(|&x| {
            while i < last && breaks[i + 1] <= x {
                i += 1;
            }
            if i > 0 && x < breaks[i] {
                i = p.piece_index(x);
            }
            crate::poly::poly_deriv(&p.coeffs()[i], x - breaks[i], deriv)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn yn_examples() {
        let s = Sample::new(vec![1.0]).unwrap();
        let t = process_yn(&s, 2, &[0.5, 2.0]).unwrap();
        assert_eq!(t.values, vec![0.0, 1.0]);
        let s = Sample::new(vec![1.0, 3.0]).unwrap();
        let t = process_yn(&s, 3, &[4.0]).unwrap();
        assert_relative_eq!(t.values[0], 2.5);
    }

    #[test]
    fn poly_form_matches_direct_sum() {
        let s = Sample::new(vec![0.3, 0.7, 0.7, 1.1, 2.5, 2.6]).unwrap();
        for k in 1..=5 {
            let p = yn_poly(&s, k, 4.0).unwrap();
            let grid: Vec<f64> = (0..80).map(|i| i as f64 * 0.05).collect();
            let direct = process_yn(&s, k, &grid).unwrap();
            let swept = eval_sorted(&p, &grid, 0);
            for (a, b) in direct.values.iter().zip(&swept) {
                assert!((a - b).abs() < 1e-13 * (1.0 + a.abs()), "k={k}: {a} vs {b}");
            }
        }
    }
}
