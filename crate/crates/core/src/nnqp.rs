//! Active-set solver for `min 1/2 w'Pw - q'w` subject to `w >= 0`, with `P`
//! symmetric positive definite on every face visited (Lawson-Hanson).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct NnqpSolution {
    pub w: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

pub fn quad_objective(p: &DMatrix<f64>, q: &[f64], w: &[f64]) -> f64 {
    let n = w.len();
    let mut val = 0.0;
    for i in 0..n {
        if w[i] == 0.0 {
            continue;
        }
        let mut row = 0.0;
        for j in 0..n {
            row += p[(i, j)] * w[j];
        }
        val += w[i] * (0.5 * row - q[i]);
    }
    val
}

fn solve_face(p: &DMatrix<f64>, q: &[f64], face: &[usize]) -> Option<Vec<f64>> {
    let m = face.len();
    let sub = DMatrix::from_fn(m, m, |a, b| p[(face[a], face[b])]);
    let rhs = DVector::from_iterator(m, face.iter().map(|&i| q[i]));
    let sol = match sub.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => sub.lu().solve(&rhs)?,
    };
    if sol.iter().all(|v| v.is_finite()) {
        Some(sol.iter().copied().collect())
    } else {
        None
    }
}

/// Solves the nonnegative quadratic program starting from the feasible
/// point `w0` (pass zeros for a cold start). The objective is nonincreasing
/// along the iterates.
pub fn solve_nnqp(p: &DMatrix<f64>, q: &[f64], w0: &[f64], tol: f64, max_iter: usize) -> Result<NnqpSolution> {
    let n = q.len();
    assert_eq!(p.nrows(), n);
    assert_eq!(w0.len(), n);
    let mut w: Vec<f64> = w0.iter().map(|v| v.max(0.0)).collect();
    let mut passive: Vec<bool> = w.iter().map(|&v| v > 0.0).collect();
    let qscale = q.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut iterations = 0;
    let mut need_face_solve = passive.iter().any(|&b| b);
    let mut prev_obj = quad_objective(p, q, &w);
    let mut stagnant = 0;
    loop {
        if iterations >= max_iter {
            let g = gradient(p, q, &w);
            let resid = (0..n).filter(|&j| !passive[j]).map(|j| g[j]).fold(0.0, f64::max);
            return Err(Error::NotConverged {
                what: "nonnegative quadratic program",
                iterations,
                residual: resid,
            });
        }
        iterations += 1;
        if !need_face_solve {
            let g = gradient(p, q, &w);
            let mut best: Option<(usize, f64)> = None;
            for j in 0..n {
                if !passive[j] && g[j] > tol * qscale && best.is_none_or(|(_, b)| g[j] > b) {
                    best = Some((j, g[j]));
                }
            }
            match best {
                None => break,
                Some((j, _)) => passive[j] = true,
            }
        }
        let initial = need_face_solve;
        need_face_solve = false;
        // inner loop: move toward the face minimiser while staying feasible
        loop {
            let face: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
            if face.is_empty() {
                break;
            }
            let z = solve_face(p, q, &face).ok_or(Error::IllConditioned {
                condition: f64::INFINITY,
            })?;
            if z.iter().all(|&v| v > 0.0) {
                for (a, &j) in face.iter().enumerate() {
                    w[j] = z[a];
                }
                for j in 0..n {
                    if !passive[j] {
                        w[j] = 0.0;
                    }
                }
                break;
            }
            let mut alpha = 1.0f64;
            for (a, &j) in face.iter().enumerate() {
                if z[a] <= 0.0 {
                    let denom = w[j] - z[a];
                    if denom > 0.0 {
                        alpha = alpha.min(w[j] / denom);
                    }
                }
            }
            for (a, &j) in face.iter().enumerate() {
                w[j] += alpha * (z[a] - w[j]);
            }
            for (a, &j) in face.iter().enumerate() {
                if z[a] <= 0.0 && w[j] <= 1e-15 * (1.0 + w[j].abs()) || w[j] <= 0.0 {
                    w[j] = 0.0;
                    passive[j] = false;
                }
            }
        }
        // in exact arithmetic every step decreases the objective; repeated
        // failures to do so mean the remaining violation is round-off
        let obj = quad_objective(p, q, &w);
        if !initial && obj >= prev_obj - 1e-15 * prev_obj.abs() {
            stagnant += 1;
            if stagnant >= 3 {
                break;
            }
        } else {
            stagnant = 0;
        }
        prev_obj = prev_obj.min(obj);
    }
    let objective = quad_objective(p, q, &w);
    Ok(NnqpSolution {
        w,
        objective,
        iterations,
    })
}

fn gradient(p: &DMatrix<f64>, q: &[f64], w: &[f64]) -> Vec<f64> {
    // negative gradient q - Pw
    let n = q.len();
    (0..n)
        .map(|i| q[i] - (0..n).map(|j| p[(i, j)] * w[j]).sum::<f64>())
        .collect()
}
