//! B-spline bases used to solve spline interpolation problems by
//! collocation. Internal: results are always handed out as
//! [`PiecewisePoly`].

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::poly::{factorial, PiecewisePoly};

/// Largest acceptable 1-norm condition estimate of an equilibrated
/// collocation matrix.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Spline space of a given degree on a clamped knot vector.
#[derive(Debug, Clone)]
pub(crate) struct SplineSpace {
    degree: usize,
    knots: Vec<f64>,
}

impl SplineSpace {
    /// Clamped knot vector on `[a, b]` with the given interior knots, each
    /// of multiplicity one.
    pub fn clamped(degree: usize, a: f64, b: f64, interior: &[f64]) -> Self {
        let mut knots = Vec::with_capacity(2 * degree + 2 + interior.len());
        knots.extend(std::iter::repeat_n(a, degree + 1));
        knots.extend_from_slice(interior);
        knots.extend(std::iter::repeat_n(b, degree + 1));
        Self { degree, knots }
    }

    pub fn dim(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    fn span(&self, x: f64) -> usize {
        let p = self.degree;
        let n = self.dim() - 1;
        if x >= self.knots[n + 1] {
            // last nonempty span
            let mut s = n;
            while self.knots[s] >= self.knots[n + 1] {
                s -= 1;
            }
            return s;
        }
        if x <= self.knots[p] {
            return p;
        }
        // largest s with knots[s] <= x
        let s = self.knots.partition_point(|&u| u <= x) - 1;
        s.min(n)
    }

    /// Derivatives `0..=nd` of the `degree + 1` nonzero basis functions at
    /// `x` in span `s` (de Boor / Piegl-Tiller recurrence).
    fn basis_derivs(&self, s: usize, x: f64, nd: usize) -> Vec<Vec<f64>> {
        let p = self.degree;
        let u = &self.knots;
        let mut ndu = vec![vec![0.0; p + 1]; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        ndu[0][0] = 1.0;
        for j in 1..=p {
            left[j] = x - u[s + 1 - j];
            right[j] = u[s + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }
        let mut ders = vec![vec![0.0; p + 1]; nd + 1];
        for j in 0..=p {
            ders[0][j] = ndu[j][p];
        }
        let mut a = vec![vec![0.0; p + 1]; 2];
        for r in 0..=p {
            let (mut s1, mut s2) = (0usize, 1usize);
            a[0][0] = 1.0;
            for kk in 1..=nd.min(p) {
                let mut d = 0.0;
                let rk = r as isize - kk as isize;
                let pk = p - kk;
                if r >= kk {
                    a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                    d = a[s2][0] * ndu[rk as usize][pk];
                }
                let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
                let j2 = if r as isize - 1 <= pk as isize { kk - 1 } else { p - r };
                for j in j1..=j2 {
                    let idx = (rk + j as isize) as usize;
                    a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                    d += a[s2][j] * ndu[idx][pk];
                }
                if r <= pk {
                    a[s2][kk] = -a[s1][kk - 1] / ndu[pk + 1][r];
                    d += a[s2][kk] * ndu[r][pk];
                }
                ders[kk][r] = d;
                std::mem::swap(&mut s1, &mut s2);
            }
        }
        let mut fac = p as f64;
        for kk in 1..=nd.min(p) {
            for v in ders[kk].iter_mut() {
                *v *= fac;
            }
            fac *= (p - kk) as f64;
        }
        ders
    }

    /// One collocation row: the `d`-th derivative of every basis function
    /// at `x`.
    pub fn row(&self, x: f64, d: usize) -> Vec<f64> {
        let s = self.span(x);
        let ders = self.basis_derivs(s, x, d);
        let mut row = vec![0.0; self.dim()];
        if d <= self.degree {
            for j in 0..=self.degree {
                row[s - self.degree + j] = ders[d][j];
            }
        }
        row
    }

    /// Converts B-spline coefficients into a piecewise polynomial whose
    /// breakpoints are the distinct knots.
    pub fn to_piecewise(&self, coef: &[f64], smoothness: i32) -> Result<PiecewisePoly> {
        let p = self.degree;
        let mut breaks: Vec<f64> = self.knots.clone();
        breaks.dedup();
        let mut pieces = Vec::with_capacity(breaks.len() - 1);
        for &x in &breaks[..breaks.len() - 1] {
            let s = self.span(x);
            let ders = self.basis_derivs(s, x, p);
            let c: Vec<f64> = (0..=p)
                .map(|d| {
                    let v: f64 = (0..=p).map(|j| ders[d][j] * coef[s - p + j]).sum();
                    v / factorial(d)
                })
                .collect();
            pieces.push(c);
        }
        PiecewisePoly::new(breaks, pieces, smoothness)
    }
}

/// A collocation condition: the `deriv`-th derivative at `x` equals `value`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Condition {
    pub x: f64,
    pub deriv: usize,
    pub value: f64,
}

/// Solves the square collocation system. Rows are equilibrated to unit
/// infinity norm before the LU factorization; the returned condition number
/// is the 1-norm estimate of the equilibrated matrix.
pub(crate) fn collocate(space: &SplineSpace, conds: &[Condition]) -> Result<(Vec<f64>, f64)> {
    let n = space.dim();
    assert_eq!(n, conds.len(), "collocation system must be square");
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    for (i, c) in conds.iter().enumerate() {
        let row = space.row(c.x, c.deriv);
        let scale = row.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return Err(Error::IllConditioned {
                condition: f64::INFINITY,
            });
        }
        for (j, v) in row.iter().enumerate() {
            a[(i, j)] = v / scale;
        }
        rhs[i] = c.value / scale;
    }
    let norm1 = |m: &DMatrix<f64>| {
        (0..m.ncols())
            .map(|j| m.column(j).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    };
    let lu = a.clone().lu();
    let inv = lu.try_inverse().ok_or(Error::IllConditioned {
        condition: f64::INFINITY,
    })?;
    let condition = norm1(&a) * norm1(&inv);
    if !condition.is_finite() || condition > CONDITION_LIMIT {
        return Err(Error::IllConditioned { condition });
    }
    let lu = a.clone().lu();
    let mut sol = lu.solve(&rhs).ok_or(Error::IllConditioned {
        condition: f64::INFINITY,
    })?;
    // Refinement with residuals accumulated in doubled precision recovers
    // digits lost to the conditioning of the basis.
    for _ in 0..3 {
        let resid = DVector::from_fn(n, |i, _| {
            let row: Vec<f64> = (0..n).map(|j| -a[(i, j)]).collect();
            dot2(&row, sol.as_slice(), rhs[i])
        });
        match lu.solve(&resid) {
            Some(d) => sol += d,
            None => break,
        }
    }
    Ok((sol.iter().copied().collect(), condition))
}

/// `c + sum x_i y_i` with error-free transformations (Ogita, Rump and
/// Oishi's `Dot2`), accurate as if computed in twice the working precision.
fn dot2(x: &[f64], y: &[f64], c: f64) -> f64 {
    let mut s = c;
    let mut err = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        let p = a * b;
        let pe = a.mul_add(b, -p);
        let t = s + p;
        let z = t - s;
        let se = (s - (t - z)) + (p - z);
        s = t;
        err += pe + se;
    }
    s + err
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn partition_of_unity_and_derivatives() {
        let sp = SplineSpace::clamped(3, 0.0, 1.0, &[0.2, 0.5, 0.7]);
        assert_eq!(sp.dim(), 7);
        for &x in &[0.0, 0.1, 0.5, 0.65, 1.0] {
            let r0: f64 = sp.row(x, 0).iter().sum();
            let r1: f64 = sp.row(x, 1).iter().sum();
            assert_relative_eq!(r0, 1.0, epsilon = 1e-14);
            assert!(r1.abs() < 1e-12);
        }
    }

    #[test]
    fn interpolates_a_cubic_exactly() {
        let sp = SplineSpace::clamped(3, 0.0, 1.0, &[0.4]);
        let f = |x: f64| 1.0 - 2.0 * x + x.powi(3);
        let df = |x: f64| -2.0 + 3.0 * x * x;
        let conds = vec![
            Condition {
                x: 0.0,
                deriv: 0,
                value: f(0.0),
            },
            Condition {
                x: 0.0,
                deriv: 1,
                value: df(0.0),
            },
            Condition {
                x: 0.4,
                deriv: 0,
                value: f(0.4),
            },
            Condition {
                x: 1.0,
                deriv: 0,
                value: f(1.0),
            },
            Condition {
                x: 1.0,
                deriv: 1,
                value: df(1.0),
            },
        ];
        let (coef, cond) = collocate(&sp, &conds).unwrap();
        assert!(cond < 1e3);
        let pp = sp.to_piecewise(&coef, 2).unwrap();
        for &x in &[0.0, 0.3, 0.4, 0.9, 1.0] {
            assert_relative_eq!(pp.eval(x, 0).unwrap(), f(x), epsilon = 1e-13);
        }
    }
}
