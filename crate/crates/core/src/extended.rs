//! Hermite interpolation error in extended precision, for site sets so
//! close together that the double precision collocation system cannot be
//! trusted.
//!
//! Near-coincident sites make the value and slope functionals almost
//! linearly dependent, so the interpolant is sensitive even to the rounding
//! of the data. Here the target is given exactly as a sum of truncated
//! powers with f64 coefficients, the interpolation problem is solved in the
//! truncated power basis with 384-bit floats, and only the final local
//! Taylor coefficients of the error are rounded back to f64. Those are well
//! scaled on every piece, so the error function loses nothing in the
//! conversion.

use dashu_float::round::mode::HalfEven;
use dashu_float::FBig;

use crate::error::{invalid, Error, Result};
use crate::poly::PiecewisePoly;

type Big = FBig<HalfEven, 2>;

const PRECISION: usize = 384;

/// Condition estimates beyond this leave fewer than about 25 correct digits
/// at [`PRECISION`] bits.
const EXTENDED_CONDITION_LIMIT: f64 = 1e90;

/// `(sum_r poly[r] x^r + sum_i coef_i (x - knot_i)_+^{degree_i}) / divisor`
/// with every constant exactly representable.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct PowerSum {
    pub poly: Vec<f64>,
    pub terms: Vec<TruncatedTerm>,
    pub divisor: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct TruncatedTerm {
    pub knot: f64,
    pub degree: usize,
    pub coef: f64,
}

impl PowerSum {
    fn degree(&self) -> usize {
        let p = self.poly.len().saturating_sub(1);
        self.terms.iter().map(|t| t.degree).fold(p, usize::max)
    }
}

fn big(x: f64) -> Big {
    Big::try_from(x)
        .expect("finite input")
        .with_precision(PRECISION)
        .value()
}

fn abs(x: &Big) -> Big {
    if *x < Big::ZERO {
        -x.clone()
    } else {
        x.clone()
    }
}

fn to_f64(x: &Big) -> f64 {
    x.to_f64().value()
}

/// `x^p` for `p >= 0`, with `0^0 = 1`.
fn pow(x: &Big, p: usize) -> Big {
    let mut acc = big(1.0);
    for _ in 0..p {
        acc = &acc * x;
    }
    acc
}

/// `p! / (p - r)!`.
fn falling(p: usize, r: usize) -> f64 {
    ((p - r + 1)..=p).map(|v| v as f64).product()
}

/// `r`-th derivative of `(x - c)^p` at `x`, taken from the right of `c`.
fn power_deriv(x: &Big, c: &Big, p: usize, r: usize) -> Big {
    if r > p {
        return Big::ZERO;
    }
    big(falling(p, r)) * pow(&(x - c), p - r)
}

/// `r`-th derivative at `x` (right limit) of the basis function `j`:
/// monomials `x^j` for `j <= degree`, then `(x - knots[i])_+^degree`.
fn basis_deriv(x: &Big, j: usize, degree: usize, knots: &[Big], r: usize, right_of: impl Fn(usize) -> bool) -> Big {
    if j <= degree {
        power_deriv(x, &Big::ZERO, j, r)
    } else {
        let i = j - degree - 1;
        if right_of(i) {
            power_deriv(x, &knots[i], degree, r)
        } else {
            Big::ZERO
        }
    }
}

fn target_deriv(f: &PowerSum, x: &Big, r: usize, strictly_right: bool) -> Big {
    let mut acc = Big::ZERO;
    for (q, &c) in f.poly.iter().enumerate() {
        if c != 0.0 && r <= q {
            acc += big(c) * power_deriv(x, &Big::ZERO, q, r);
        }
    }
    for t in &f.terms {
        let c = big(t.knot);
        let active = if strictly_right { *x > c } else { *x >= c };
        if active && t.coef != 0.0 {
            acc += big(t.coef) * power_deriv(x, &c, t.degree, r);
        }
    }
    acc / big(f.divisor)
}

/// Solves `a x = b` for every column of `b` by Gaussian elimination with
/// partial pivoting. Returns `None` for a singular matrix.
fn solve(mut a: Vec<Vec<Big>>, mut b: Vec<Vec<Big>>) -> Option<Vec<Vec<Big>>> {
    let n = a.len();
    let cols = b[0].len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| abs(&a[i][col]).partial_cmp(&abs(&a[j][col])).expect("ordered"))?;
        if a[piv][col] == Big::ZERO {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let factor = &a[row][col] / &a[col][col];
            if factor == Big::ZERO {
                continue;
            }
            for c in col..n {
                let v = &factor * &a[col][c];
                a[row][c] -= v;
            }
            for c in 0..cols {
                let v = &factor * &b[col][c];
                b[row][c] -= v;
            }
        }
    }
    let mut x = vec![vec![Big::ZERO; cols]; n];
    for row in (0..n).rev() {
        for c in 0..cols {
            let mut acc = b[row][c].clone();
            for j in row + 1..n {
                acc -= &a[row][j] * &x[j][c];
            }
            x[row][c] = acc / &a[row][row];
        }
    }
    Some(x)
}

/// Error `f - H[f]` of the degree `2k - 1` Hermite spline interpolant at
/// `sites` (values and slopes, simple knots at the interior sites), as a
/// piecewise polynomial with breaks at the sites and at the target's own
/// knots inside the span. Also returns the 1-norm condition estimate of the
/// row-equilibrated system.
pub(crate) fn hermite_error_extended(k: usize, sites: &[f64], f: &PowerSum) -> Result<(PiecewisePoly, f64)> {
    let m = sites.len();
    if m < 2 || sites.windows(2).any(|w| w[1] <= w[0]) {
        return invalid("sites must be strictly increasing");
    }
    let degree = 2 * k - 1;
    let interior: Vec<Big> = sites[1..m - 1].iter().map(|&y| big(y)).collect();
    let dim = degree + 1 + interior.len();
    debug_assert_eq!(dim, 2 * m);

    let mut a = Vec::with_capacity(dim);
    let mut rhs = Vec::with_capacity(dim);
    for (s, &site) in sites.iter().enumerate() {
        let x = big(site);
        for r in 0..2 {
            // Interior knot i sits at site i + 1; its truncated power is
            // active strictly to the right.
            let mut row: Vec<Big> = (0..dim)
                .map(|j| basis_deriv(&x, j, degree, &interior, r, |i| i + 1 < s))
                .collect();
            let scale = row.iter().map(abs).fold(Big::ZERO, |m, v| if v > m { v } else { m });
            if scale == Big::ZERO {
                return Err(Error::IllConditioned {
                    condition: f64::INFINITY,
                });
            }
            for v in row.iter_mut() {
                *v = &*v / &scale;
            }
            a.push(row);
            rhs.push(target_deriv(f, &x, r, true) / scale);
        }
    }

    let mut cols: Vec<Vec<Big>> = (0..dim)
        .map(|i| {
            let mut c = vec![Big::ZERO; dim + 1];
            c[i] = big(1.0);
            c
        })
        .collect();
    for (c, v) in cols.iter_mut().zip(&rhs) {
        c[dim] = v.clone();
    }
    let sol = solve(a.clone(), cols).ok_or(Error::IllConditioned {
        condition: f64::INFINITY,
    })?;
    let norm1 = |col: &dyn Fn(usize, usize) -> Big| {
        (0..dim)
            .map(|j| (0..dim).map(|i| abs(&col(i, j))).fold(Big::ZERO, |s, v| s + v))
            .fold(Big::ZERO, |m, v| if v > m { v } else { m })
    };
    let condition = to_f64(&(norm1(&|i, j| a[i][j].clone()) * norm1(&|i, j| sol[i][j].clone())));
    if !condition.is_finite() || condition > EXTENDED_CONDITION_LIMIT {
        return Err(Error::IllConditioned { condition });
    }
    let coef: Vec<Big> = sol.iter().map(|row| row[dim].clone()).collect();

    let (lo, hi) = (sites[0], sites[m - 1]);
    let mut breaks: Vec<f64> = sites.to_vec();
    breaks.extend(f.terms.iter().map(|t| t.knot).filter(|&c| c > lo && c < hi));
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let top = degree.max(f.degree());
    let mut pieces = Vec::with_capacity(breaks.len() - 1);
    for &b in &breaks[..breaks.len() - 1] {
        let x = big(b);
        let piece: Vec<f64> = (0..=top)
            .map(|r| {
                let mut h = Big::ZERO;
                for (j, cj) in coef.iter().enumerate() {
                    h += cj * basis_deriv(&x, j, degree, &interior, r, |i| sites[i + 1] <= b);
                }
                to_f64(&((target_deriv(f, &x, r, false) - h) / big(crate::poly::factorial(r))))
            })
            .collect();
        pieces.push(piece);
    }
    Ok((PiecewisePoly::new(breaks, pieces, 0)?, condition))
}
