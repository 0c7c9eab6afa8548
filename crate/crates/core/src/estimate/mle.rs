use nalgebra::{DMatrix, DVector};

use super::certificate::{certificate_grid, certify, mle_weighted_process};
use super::lse::{clamp_roundoff, merge_close, search_grid, ROUNDOFF};
use super::{
    merge_bracketing_pairs, near_atom_min, refined_min, CharacterizationReport, Estimator, FitOptions, FitResult,
};
use crate::error::{Error, Result};
use crate::mixture::{check_k, kernel_unchecked, mixture_to_piecewise, MassConstraint, MixingMeasure};
use crate::nnqp::solve_nnqp;
use crate::poly::factorial;
use crate::process::{eval_sorted, weighted_integrated_empirical, ProcessTrace};
use crate::sample::Sample;

/// `l_n(g) = int log g dG_n - int g` for a mixture.
pub fn log_likelihood(mm: &MixingMeasure, k: usize, sample: &Sample) -> Result<f64> {
    check_k(k)?;
    let (xs, counts) = sample.distinct();
    let lik = Likelihood::new(xs, counts, k);
    Ok(-lik.neg_loglik(mm.atoms(), mm.weights()))
}

/// `H^_n(x) = (1/n) sum_{X_i <= x} k (x - X_i)^{k-1} / (x^k g(X_i))` on a
/// grid; zero at `x = 0`.
pub fn process_hhat(sample: &Sample, fit: &FitResult, grid: &[f64]) -> Result<ProcessTrace> {
    let k = fit.k;
    let top = grid.iter().fold(sample.max(), |a, &b| a.max(b)) * 1.5;
    let yv = mle_weighted_process(&fit.estimate, sample, k, top)?
        .ok_or_else(|| Error::Degenerate("estimate vanishes at a data point".into()))?;
    let kf = factorial(k);
    let values = grid
        .iter()
        .map(|&x| {
            if x <= 0.0 {
                0.0
            } else {
                kf / x.powi(k as i32) * yv.eval_unchecked(x, 0)
            }
        })
        .collect();
    Ok(ProcessTrace {
        name: "Hhat_n".into(),
        grid: grid.to_vec(),
        values,
    })
}

struct Likelihood {
    xs: Vec<f64>,
    counts: Vec<f64>,
    n: f64,
    k: usize,
}

impl Likelihood {
    fn new(xs: Vec<f64>, counts: Vec<usize>, k: usize) -> Self {
        let n = counts.iter().sum::<usize>() as f64;
        Self {
            xs,
            counts: counts.into_iter().map(|c| c as f64).collect(),
            n,
            k,
        }
    }

    fn density_at_data(&self, atoms: &[f64], w: &[f64]) -> Vec<f64> {
        self.xs
            .iter()
            .map(|&x| {
                atoms
                    .iter()
                    .zip(w)
                    .map(|(&t, &v)| v * kernel_unchecked(self.k, t, x))
                    .sum()
            })
            .collect()
    }

    /// `-l_n`; infinite when the density vanishes at a data point.
    fn neg_loglik(&self, atoms: &[f64], w: &[f64]) -> f64 {
        let g = self.density_at_data(atoms, w);
        let mut acc = 0.0;
        for (gi, c) in g.iter().zip(&self.counts) {
            if !(*gi > 0.0) {
                return f64::INFINITY;
            }
            acc -= c * gi.ln();
        }
        acc / self.n + w.iter().sum::<f64>()
    }

    fn weighted_process(&self, atoms: &[f64], w: &[f64], upper: f64) -> Option<crate::poly::PiecewisePoly> {
        let g = self.density_at_data(atoms, w);
        if g.iter().any(|v| !(*v > 0.0)) {
            return None;
        }
        let v: Vec<f64> = g.iter().zip(&self.counts).map(|(gi, c)| c / (self.n * gi)).collect();
        weighted_integrated_empirical(&self.xs, &v, self.k, upper).ok()
    }

    /// Residuals `H^(t_j) - 1` and, for `k >= 2`, `t_j H^'(t_j)`.
    fn residuals(&self, atoms: &[f64], w: &[f64], upper: f64) -> Option<Vec<f64>> {
        let yv = self.weighted_process(atoms, w, upper)?;
        let k = self.k;
        let kf = factorial(k);
        let mut r = Vec::with_capacity(2 * atoms.len());
        for &t in atoms {
            let y0 = yv.eval_unchecked(t, 0);
            r.push(kf / t.powi(k as i32) * y0 - 1.0);
            if k >= 2 {
                let y1 = yv.eval_unchecked(t, 1);
                r.push(kf * (y1 / t.powi(k as i32 - 1) - k as f64 * y0 / t.powi(k as i32)));
            }
        }
        Some(r)
    }

    /// `-H^'` at the atoms; a pair of atoms with signs `(-, +)` brackets a
    /// single maximum of `H^`.
    fn descent_slopes(&self, atoms: &[f64], w: &[f64], upper: f64) -> Option<Vec<f64>> {
        let yv = self.weighted_process(atoms, w, upper)?;
        let k = self.k as i32;
        let kf = factorial(self.k);
        Some(
            atoms
                .iter()
                .map(|&t| {
                    let d =
                        kf * (yv.eval_unchecked(t, 1) / t.powi(k) - k as f64 * yv.eval_unchecked(t, 0) / t.powi(k + 1));
                    -d
                })
                .collect(),
        )
    }

    /// Newton iteration on weights (and atom locations when `k >= 2`) for
    /// the equalities at the atoms.
    fn polish(&self, atoms: &[f64], w: &[f64], upper: f64, target: f64, accept: f64) -> Option<(Vec<f64>, Vec<f64>)> {
        let m = atoms.len();
        let move_atoms = self.k >= 2;
        let nv = if move_atoms { 2 * m } else { m };
        let pack = |t: &[f64], v: &[f64]| -> Vec<f64> {
            let mut z = v.to_vec();
            if move_atoms {
                z.extend_from_slice(t);
            }
            z
        };
        let unpack = |z: &[f64]| -> (Vec<f64>, Vec<f64>) {
            let v = z[..m].to_vec();
            let t = if move_atoms { z[m..].to_vec() } else { atoms.to_vec() };
            (t, v)
        };
        let norm = |v: &[f64]| v.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        let mut z = pack(atoms, w);
        let mut r = self.residuals(atoms, w, upper)?;
        for _ in 0..60 {
            if norm(&r) <= target {
                break;
            }
            let mut jac = DMatrix::<f64>::zeros(nv, nv);
            for l in 0..nv {
                let h = 1e-6 * z[l].abs().max(1e-8);
                let mut zp = z.clone();
                zp[l] += h;
                let mut zm = z.clone();
                zm[l] -= h;
                let (tp, vp) = unpack(&zp);
                let (tm, vm) = unpack(&zm);
                let rp = self.residuals(&tp, &vp, upper)?;
                let rm = self.residuals(&tm, &vm, upper)?;
                for j in 0..nv {
                    jac[(j, l)] = (rp[j] - rm[j]) / (2.0 * h);
                }
            }
            let step = jac.lu().solve(&DVector::from_vec(r.clone()))?;
            let mut lambda = 1.0;
            let mut accepted = false;
            while lambda > 1e-6 {
                let cand: Vec<f64> = z.iter().zip(step.iter()).map(|(a, d)| a - lambda * d).collect();
                let (t, v) = unpack(&cand);
                let ok =
                    v.iter().all(|&x| x > 0.0) && t[0] > 0.0 && t.windows(2).all(|p| p[1] > p[0]) && t[m - 1] <= upper;
                if ok {
                    if let Some(r2) = self.residuals(&t, &v, upper) {
                        if norm(&r2) < norm(&r) {
                            z = cand;
                            r = r2;
                            accepted = true;
                            break;
                        }
                    }
                }
                lambda *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        (norm(&r) <= accept).then(|| unpack(&z))
    }
}

fn build_result(
    k: usize,
    atoms: &[f64],
    w: &[f64],
    objective: f64,
    trace: Vec<f64>,
    iterations: usize,
    sample: &Sample,
    opts: &FitOptions,
    upper: f64,
    warnings: Vec<String>,
) -> Result<FitResult> {
    let total: f64 = w.iter().sum();
    let w: Vec<f64> = w.iter().map(|v| v / total).collect();
    // a second pass absorbs the rounding of the first division
    let total: f64 = w.iter().sum();
    let w: Vec<f64> = w.iter().map(|v| v / total).collect();
    let mixing = MixingMeasure::new(atoms.to_vec(), w.clone(), MassConstraint::Unit)
        .or_else(|_| MixingMeasure::new(atoms.to_vec(), w, MassConstraint::Free))?;
    let estimate = mixture_to_piecewise(&mixing, k)?;
    let mut fit = FitResult {
        k,
        estimator: Estimator::Mle,
        estimate,
        knots: atoms.to_vec(),
        mixing,
        objective,
        objective_trace: trace,
        iterations,
        certificate: CharacterizationReport::failed(Estimator::Mle),
        upper,
        warnings,
    };
    fit.certificate = certify(&fit, sample, Estimator::Mle, &opts.certify)?;
    Ok(fit)
}

/// Maximum likelihood estimator over k-monotone densities, computed by
/// support reduction with damped Newton steps on the weights.
pub fn fit_mle(sample: &Sample, k: usize, opts: &FitOptions) -> Result<FitResult> {
    check_k(k)?;
    let mut upper = opts.upper(sample, k);
    // a knot pinned at the end of the search range asks for a wider range
    for _ in 0..MAX_WIDENINGS {
        let result = fit_mle_on(sample, k, opts, upper);
        let fit = match &result {
            Ok(fit) => fit,
            Err(Error::FitNotConverged { best, .. }) => best,
            Err(_) => return result,
        };
        match fit.knots.last() {
            Some(&t) if t >= upper * (1.0 - 1e-9) => upper *= 2.0,
            _ => return result,
        }
    }
    fit_mle_on(sample, k, opts, upper)
}

/// Times the search range may be doubled.
const MAX_WIDENINGS: usize = 6;

/// Rounds in which polished knots are fed back into the support search.
const MAX_REFINEMENTS: usize = 8;

fn fit_mle_on(sample: &Sample, k: usize, opts: &FitOptions, upper: f64) -> Result<FitResult> {
    let mut warnings = Vec::new();
    if sample.n() < k {
        warnings.push(format!(
            "n = {} < k = {k}: the (k-1)-st derivative has at most n jumps",
            sample.n()
        ));
    }
    let lower = sample.min() * 1e-6;
    let (xs, counts) = sample.distinct();
    let xn = xs[xs.len() - 1];
    let lik = Likelihood::new(xs, counts, k);
    let mut grid = search_grid(sample, k, upper);
    if k >= 2 {
        // every point the certificate inspects is also searched
        grid.extend(certificate_grid(sample, &[], upper, opts.certify.grid_density));
        grid.sort_by(f64::total_cmp);
        grid.dedup();
    }
    grid.retain(|&t| t >= lower);
    let kf = factorial(k);

    let mut atoms = vec![if k == 1 { xn } else { xn * (1.0 + 1.0 / k as f64) }];
    let mut w = vec![1.0];
    let mut trace = vec![lik.neg_loglik(&atoms, &w)];
    let mut tol = opts.tol;
    let mut best: Option<FitResult> = None;
    let mut iterations = 0;
    let mut stalled = false;
    let mut refinements = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let yv = lik
            .weighted_process(&atoms, &w, upper)
            .ok_or_else(|| Error::Degenerate("estimate vanishes at a data point".into()))?;
        let hg = eval_sorted(&yv, &grid, 0);
        let hhat = |t: f64| kf / t.powi(k as i32) * yv.eval_unchecked(t, 0);
        // minimise 1 - H^ so that shallow peaks between grid points are found
        let gap: Vec<f64> = grid
            .iter()
            .zip(&hg)
            .map(|(&t, &v)| 1.0 - kf / t.powi(k as i32) * v)
            .collect();
        let (t_new, gmin) = if k == 1 {
            let (i, v) = gap
                .iter()
                .enumerate()
                .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
            (grid[i], v)
        } else {
            let (t, v) = refined_min(&grid, &gap, |t| 1.0 - hhat(t), 1e-5);
            match near_atom_min(&atoms, |t| 1.0 - hhat(t), upper) {
                Some((ta, va)) if va < v && ta >= lower => (ta, va),
                _ => (t, v),
            }
        };
        let hmax = 1.0 - gmin;
        let min_at_atoms = atoms.iter().map(|&t| hhat(t)).fold(f64::INFINITY, f64::min);
        if (hmax <= 1.0 + tol && min_at_atoms >= 1.0 - tol) || stalled {
            stalled = false;
            let last = *trace.last().unwrap();
            let (fit, polished) = finish(
                &lik, sample, &atoms, &w, last, &trace, iterations, opts, upper, &warnings,
            )?;
            if fit.certificate.passed {
                return Ok(fit);
            }
            best = Some(fit);
            let fresh: Vec<f64> = polished.into_iter().filter(|t| !atoms.contains(t)).collect();
            if !fresh.is_empty() && refinements < MAX_REFINEMENTS {
                // offer the polished locations alongside the current support
                refinements += 1;
                for t in fresh {
                    let pos = atoms.partition_point(|&a| a < t);
                    atoms.insert(pos, t);
                    w.insert(pos, 0.0);
                }
            } else {
                if tol <= 1e-15 {
                    break;
                }
                tol *= 1e-2;
                continue;
            }
        } else if hmax > 1.0 + tol {
            let pos = atoms.partition_point(|&a| a < t_new);
            if pos >= atoms.len() || atoms[pos] != t_new {
                atoms.insert(pos, t_new);
                w.insert(pos, 0.0);
            }
        }
        let before = atoms.len();
        // Newton step: quadratic model of -l_n around the current density
        let m = atoms.len();
        let g = lik.density_at_data(&atoms, &w);
        let nd = lik.xs.len();
        let bmat = DMatrix::from_fn(nd, m, |i, j| kernel_unchecked(k, atoms[j], lik.xs[i]) / g[i]);
        let mut p = DMatrix::<f64>::zeros(m, m);
        let mut q = vec![-1.0; m];
        for i in 0..nd {
            let c = lik.counts[i] / lik.n;
            for a in 0..m {
                let ba = bmat[(i, a)];
                if ba == 0.0 {
                    continue;
                }
                q[a] += 2.0 * c * ba;
                for b in a..m {
                    p[(a, b)] += c * ba * bmat[(i, b)];
                }
            }
        }
        for a in 0..m {
            for b in 0..a {
                p[(a, b)] = p[(b, a)];
            }
        }
        let target = solve_nnqp(&p, &q, &w, 1e-14, 10 * m + 50)?.w;
        let f0 = lik.neg_loglik(&atoms, &w);
        let dir: Vec<f64> = target.iter().zip(&w).map(|(a, b)| a - b).collect();
        // directional derivative of -l_n along dir
        let mut slope: f64 = dir.iter().sum();
        for i in 0..nd {
            let c = lik.counts[i] / lik.n;
            let bd: f64 = (0..m).map(|j| bmat[(i, j)] * dir[j]).sum();
            slope -= c * bd;
        }
        let mut lambda = 1.0;
        let mut next = w.clone();
        let mut f_next = f0;
        while lambda > 1e-12 {
            let cand: Vec<f64> = w.iter().zip(&dir).map(|(a, d)| (a + lambda * d).max(0.0)).collect();
            let f = lik.neg_loglik(&atoms, &cand);
            if f <= f0 + 1e-4 * lambda * slope.min(0.0) {
                next = cand;
                f_next = f;
                break;
            }
            lambda *= 0.5;
        }
        let keep: Vec<usize> = (0..m).filter(|&i| next[i] > 0.0).collect();
        // no decrease and the support fell back: the search cannot make progress
        stalled = f_next >= f0 && keep.len() < before;
        atoms = keep.iter().map(|&i| atoms[i]).collect();
        w = keep.iter().map(|&i| next[i]).collect();
        trace.push(clamp_roundoff(f_next.min(f0), trace.last().copied()));
    }
    let best = match best {
        Some(b) => b,
        None => {
            let obj = lik.neg_loglik(&atoms, &w);
            build_result(k, &atoms, &w, obj, trace, iterations, sample, opts, upper, warnings)?
        }
    };
    Err(Error::FitNotConverged {
        iterations,
        best: Box::new(best),
    })
}

#[allow(clippy::too_many_arguments)]
fn finish(
    lik: &Likelihood,
    sample: &Sample,
    atoms: &[f64],
    w: &[f64],
    last_objective: f64,
    trace: &[f64],
    iterations: usize,
    opts: &FitOptions,
    upper: f64,
    warnings: &[String],
) -> Result<(FitResult, Vec<f64>)> {
    let k = lik.k;
    let (target, accept) = (1e-13, 1e-9);
    let mut starts: Vec<(Vec<f64>, Vec<f64>)> = vec![(atoms.to_vec(), w.to_vec())];
    if k >= 2 {
        if let Some(slopes) = lik.descent_slopes(atoms, w, upper) {
            let merged = merge_bracketing_pairs(atoms, w, &slopes);
            if merged.0.len() < atoms.len() {
                starts.push(merged);
            }
        }
    }
    for rel in [1e-6, 1e-4, 1e-3, 1e-2] {
        let merged = merge_close(atoms, w, rel);
        if merged.0.len() < atoms.len() && !starts.iter().any(|s| s.0 == merged.0) {
            starts.push(merged);
        }
    }
    let mut candidates: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    let mut polished = Vec::new();
    for (a, v) in &starts {
        if let Some(p) = lik.polish(a, v, upper, target, accept) {
            polished.extend_from_slice(&p.0);
            candidates.push(p);
        }
    }
    candidates.push((atoms.to_vec(), w.to_vec()));
    let mut fallback = None;
    for (a, v) in candidates {
        let obj = lik.neg_loglik(&a, &v);
        let monotone = obj <= last_objective + ROUNDOFF * last_objective.abs();
        let obj = clamp_roundoff(obj, Some(last_objective));
        let mut tr = trace.to_vec();
        tr.push(obj);
        let fit = build_result(k, &a, &v, obj, tr, iterations, sample, opts, upper, warnings.to_vec())?;
        if fit.certificate.passed && monotone {
            return Ok((fit, polished));
        }
        if fallback.is_none() {
            fallback = Some(fit);
        }
    }
    polished.sort_by(f64::total_cmp);
    polished.dedup();
    Ok((fallback.expect("at least one candidate"), polished))
}
