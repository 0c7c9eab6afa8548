use nalgebra::{DMatrix, DVector};

use super::certificate::{certificate_grid, certify};
use super::{merge_bracketing_pairs, near_atom_min, pair_merge_starts, refined_min, Estimator, FitOptions, FitResult};
use crate::error::{Error, Result};
use crate::mixture::{check_k, mixture_to_piecewise, mixture_to_piecewise_on, MassConstraint, MixingMeasure};
use crate::nnqp::{quad_objective, solve_nnqp};
use crate::poly::{binomial, factorial, PiecewisePoly};
use crate::process::{eval_sorted, yn_poly};
use crate::sample::Sample;

/// `int K_s K_t` for the Beta(1, k) kernels with scales `s` and `t`.
pub(crate) fn gram_entry(k: usize, s: f64, t: f64) -> f64 {
    let (s, t) = if s <= t { (s, t) } else { (t, s) };
    let r = s / t;
    let kf = k as f64;
    let mut acc = 0.0;
    for m in 0..k {
        acc += binomial(k - 1, m) * r.powi(m as i32) * (1.0 - r).powi((k - 1 - m) as i32) / (kf + m as f64);
    }
    kf * kf * acc / t
}

fn gram(k: usize, atoms: &[f64]) -> DMatrix<f64> {
    let m = atoms.len();
    DMatrix::from_fn(m, m, |i, j| gram_entry(k, atoms[i], atoms[j]))
}

/// `int K_t dG_n = k!/t^k Y_n(t)`.
fn linear_term(k: usize, y: &PiecewisePoly, atoms: &[f64]) -> Vec<f64> {
    let kf = factorial(k);
    atoms
        .iter()
        .map(|&t| kf / t.powi(k as i32) * y.eval_unchecked(t, 0))
        .collect()
}

/// `Phi_n(g) = 1/2 int g^2 - int g dG_n` for a mixture.
pub fn lse_objective(mm: &MixingMeasure, k: usize, sample: &Sample) -> Result<f64> {
    check_k(k)?;
    if mm.is_empty() {
        return Ok(0.0);
    }
    let upper = (1.5 * sample.max()).max(mm.atoms()[mm.len() - 1] * 1.01);
    let y = yn_poly(sample, k, upper)?;
    let q = gram(k, mm.atoms());
    let b = linear_term(k, &y, mm.atoms());
    Ok(quad_objective(&q, &b, mm.weights()))
}

/// Candidate atom locations for the support search.
pub(crate) fn search_grid(sample: &Sample, k: usize, upper: f64) -> Vec<f64> {
    let (xs, _) = sample.distinct();
    if k == 1 {
        return xs;
    }
    let x1 = xs[0];
    let xn = xs[xs.len() - 1];
    let mut grid: Vec<f64> = (1..8).map(|i| x1 * i as f64 / 8.0).collect();
    for w in xs.windows(2) {
        grid.push(w[0]);
        grid.push(0.5 * (w[0] + w[1]));
    }
    grid.push(xn);
    let tail = 96;
    grid.extend((1..=tail).map(|i| xn + (upper - xn) * i as f64 / tail as f64));
    grid
}

pub(crate) struct Workspace {
    pub k: usize,
    pub upper: f64,
    pub y: PiecewisePoly,
}

impl Workspace {
    pub fn integrated(&self, atoms: &[f64], w: &[f64]) -> Result<PiecewisePoly> {
        let mm = MixingMeasure::new(atoms.to_vec(), w.to_vec(), MassConstraint::Free)?;
        mixture_to_piecewise_on(&mm, self.k, self.upper)?.antiderivative(self.k, 0.0)
    }

    /// Directional derivative `k!/t^k (H(t) - Y(t))`.
    pub fn direction(&self, h: &PiecewisePoly, t: f64) -> f64 {
        factorial(self.k) / t.powi(self.k as i32) * (h.eval_unchecked(t, 0) - self.y.eval_unchecked(t, 0))
    }

    /// Unconstrained weights for fixed atoms.
    fn free_weights(&self, atoms: &[f64]) -> Option<Vec<f64>> {
        let q = gram(self.k, atoms);
        let b = DVector::from_vec(linear_term(self.k, &self.y, atoms));
        let sol = q.lu().solve(&b)?;
        Some(sol.iter().copied().collect())
    }

    fn slope_residuals(&self, atoms: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
        let w = self.free_weights(atoms)?;
        if w.iter().any(|&v| !(v > 0.0)) {
            return None;
        }
        let h = self.integrated(atoms, &w).ok()?;
        let s = atoms
            .iter()
            .map(|&t| h.eval_unchecked(t, 1) - self.y.eval_unchecked(t, 1))
            .collect();
        Some((s, w))
    }

    /// Newton iteration on the atom locations, solving `H' = Y'` at every
    /// atom with the weights re-solved so that `H = Y` there.
    pub fn polish(&self, atoms: &[f64], target: f64, accept: f64) -> Option<(Vec<f64>, Vec<f64>)> {
        let m = atoms.len();
        let mut t = atoms.to_vec();
        let (mut s, mut w) = self.slope_residuals(&t)?;
        let norm = |v: &[f64]| v.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        for _it in 0..60 {
            if norm(&s) <= target {
                return Some((t, w));
            }
            let mut jac = DMatrix::<f64>::zeros(m, m);
            for l in 0..m {
                let h = 1e-6 * t[l];
                let mut tp = t.clone();
                tp[l] += h;
                let mut tm = t.clone();
                tm[l] -= h;
                let (sp, _) = self.slope_residuals_unchecked(&tp)?;
                let (sm, _) = self.slope_residuals_unchecked(&tm)?;
                for j in 0..m {
                    jac[(j, l)] = (sp[j] - sm[j]) / (2.0 * h);
                }
            }
            let step = jac.lu().solve(&DVector::from_vec(s.clone()))?;
            let mut lambda = 1.0;
            let mut accepted = false;
            while lambda > 1e-6 {
                let cand: Vec<f64> = t.iter().zip(step.iter()).map(|(a, d)| a - lambda * d).collect();
                let ordered = cand.windows(2).all(|p| p[1] > p[0]) && cand[0] > 0.0 && cand[m - 1] <= self.upper;
                if ordered {
                    if let Some((s2, w2)) = self.slope_residuals(&cand) {
                        if norm(&s2) < norm(&s) {
                            t = cand;
                            s = s2;
                            w = w2;
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
        (norm(&s) <= accept).then_some((t, w))
    }

    fn slope_residuals_unchecked(&self, atoms: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
        let w = self.free_weights(atoms)?;
        let h = self.integrated(atoms, &w).ok()?;
        let s = atoms
            .iter()
            .map(|&t| h.eval_unchecked(t, 1) - self.y.eval_unchecked(t, 1))
            .collect();
        Some((s, w))
    }
}

/// Relative gap below which two adjacent atoms may stand for one knot.
pub(crate) const PAIR_GAP: f64 = 0.1;

/// Rounds in which polished knots are fed back into the support search.
const MAX_REFINEMENTS: usize = 8;

/// Relative slack under which an objective increase is treated as round-off.
pub(crate) const ROUNDOFF: f64 = 1e-12;

/// Replaces an increase within round-off of the previous value by the
/// previous value; genuine increases are kept.
pub(crate) fn clamp_roundoff(obj: f64, prev: Option<f64>) -> f64 {
    match prev {
        Some(p) if obj > p && obj - p <= ROUNDOFF * p.abs() => p,
        _ => obj,
    }
}

pub(crate) fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    let tol = 1e-13 * b.abs().max(1e-300);
    for _ in 0..200 {
        if b - a <= tol {
            break;
        }
        if f1 > f2 {
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
    if f1 <= f2 {
        x1
    } else {
        x2
    }
}

/// Merges atoms closer than `rel` (relative to their location) into their
/// weighted mean.
pub(crate) fn merge_close(atoms: &[f64], w: &[f64], rel: f64) -> (Vec<f64>, Vec<f64>) {
    let mut out_t: Vec<f64> = Vec::with_capacity(atoms.len());
    let mut out_w: Vec<f64> = Vec::with_capacity(atoms.len());
    for (&t, &v) in atoms.iter().zip(w) {
        if let (Some(lt), Some(lw)) = (out_t.last_mut(), out_w.last_mut()) {
            if t - *lt <= rel * t {
                let total = *lw + v;
                *lt = (*lt * *lw + t * v) / total;
                *lw = total;
                continue;
            }
        }
        out_t.push(t);
        out_w.push(v);
    }
    (out_t, out_w)
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
    let mixing = MixingMeasure::new(atoms.to_vec(), w.to_vec(), MassConstraint::Free)?;
    let estimate = mixture_to_piecewise(&mixing, k)?;
    let mut fit = FitResult {
        k,
        estimator: Estimator::Lse,
        estimate,
        knots: atoms.to_vec(),
        mixing,
        objective,
        objective_trace: trace,
        iterations,
        certificate: super::CharacterizationReport::failed(Estimator::Lse),
        upper,
        warnings,
    };
    fit.certificate = certify(&fit, sample, Estimator::Lse, &opts.certify)?;
    Ok(fit)
}

/// Least squares estimator over integrable k-monotone functions (total mass
/// left free), computed by support reduction over mixtures of Beta(1, k)
/// kernels.
pub fn fit_lse(sample: &Sample, k: usize, opts: &FitOptions) -> Result<FitResult> {
    check_k(k)?;
    let mut upper = opts.upper(sample, k);
    // a knot pinned at the end of the search range asks for a wider range
    for _ in 0..MAX_WIDENINGS {
        let result = fit_lse_on(sample, k, opts, upper);
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
    fit_lse_on(sample, k, opts, upper)
}

/// Times the search range may be doubled.
const MAX_WIDENINGS: usize = 6;

fn fit_lse_on(sample: &Sample, k: usize, opts: &FitOptions, upper: f64) -> Result<FitResult> {
    let mut warnings = Vec::new();
    if sample.n() < k {
        warnings.push(format!(
            "n = {} < k = {k}: the (k-1)-st derivative has at most n jumps",
            sample.n()
        ));
    }
    let ws = Workspace {
        k,
        upper,
        y: yn_poly(sample, k, upper)?,
    };
    let mut grid = search_grid(sample, k, upper);
    if k >= 2 {
        // every point the certificate inspects is also searched
        grid.extend(certificate_grid(sample, &[], upper, opts.certify.grid_density));
        grid.sort_by(f64::total_cmp);
        grid.dedup();
    }
    let kf = factorial(k);
    let yg = eval_sorted(&ws.y, &grid, 0);
    let bg: Vec<f64> = grid.iter().zip(&yg).map(|(&t, &y)| kf / t.powi(k as i32) * y).collect();
    let dscale = bg.iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(f64::MIN_POSITIVE);

    let mut atoms: Vec<f64> = Vec::new();
    let mut w: Vec<f64> = Vec::new();
    let mut trace: Vec<f64> = Vec::new();
    let mut tol = opts.tol;
    let mut best: Option<FitResult> = None;
    let mut iterations = 0;
    let mut stalled = false;
    let mut refinements = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let h = ws.integrated(&atoms, &w)?;
        let hg = eval_sorted(&h, &grid, 0);
        let dg: Vec<f64> = grid
            .iter()
            .zip(&hg)
            .zip(&bg)
            .map(|((&t, &hv), &b)| kf / t.powi(k as i32) * hv - b)
            .collect();
        let (t_new, dmin) = if k == 1 {
            let (i, v) = dg
                .iter()
                .enumerate()
                .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
            (grid[i], v)
        } else {
            let (t, v) = refined_min(&grid, &dg, |t| ws.direction(&h, t), 1e-5 * dscale);
            match near_atom_min(&atoms, |t| ws.direction(&h, t), upper) {
                Some((ta, va)) if va < v => (ta, va),
                _ => (t, v),
            }
        };
        if dmin >= -tol * dscale || stalled {
            stalled = false;
            let last = trace.last().copied().unwrap_or(0.0);
            let (fit, polished) = finish(&ws, sample, &atoms, &w, last, &trace, iterations, opts, &warnings)?;
            if let Some(fit) = fit {
                if fit.certificate.passed {
                    return Ok(fit);
                }
                best = Some(fit);
            }
            // offer the polished locations to the quadratic program alongside
            // the current support; the objective cannot increase
            let fresh: Vec<f64> = polished.into_iter().filter(|t| !atoms.contains(t)).collect();
            if !fresh.is_empty() && refinements < MAX_REFINEMENTS {
                refinements += 1;
                for t in fresh {
                    let pos = atoms.partition_point(|&a| a < t);
                    atoms.insert(pos, t);
                    w.insert(pos, 0.0);
                }
                let q = gram(k, &atoms);
                let b = linear_term(k, &ws.y, &atoms);
                let sol = solve_nnqp(&q, &b, &w, 1e-14, 10 * atoms.len() + 50)?;
                let keep: Vec<usize> = (0..atoms.len()).filter(|&i| sol.w[i] > 0.0).collect();
                atoms = keep.iter().map(|&i| atoms[i]).collect();
                w = keep.iter().map(|&i| sol.w[i]).collect();
                trace.push(clamp_roundoff(sol.objective, trace.last().copied()));
                continue;
            }
            if tol <= 1e-15 {
                break;
            }
            tol *= 1e-2;
            continue;
        }
        let pos = atoms.partition_point(|&a| a < t_new);
        if pos < atoms.len() && atoms[pos] == t_new {
            // already in the support: the restricted problem is not solved accurately
            tol *= 0.5;
        } else {
            atoms.insert(pos, t_new);
            w.insert(pos, 0.0);
        }
        let q = gram(k, &atoms);
        let b = linear_term(k, &ws.y, &atoms);
        let sol = solve_nnqp(&q, &b, &w, 1e-14, 10 * atoms.len() + 50)?;
        let keep: Vec<usize> = (0..atoms.len()).filter(|&i| sol.w[i] > 0.0).collect();
        // the new atom was rejected outright: the search cannot make progress
        stalled = keep.len() + 1 == atoms.len() && !keep.contains(&pos);
        atoms = keep.iter().map(|&i| atoms[i]).collect();
        w = keep.iter().map(|&i| sol.w[i]).collect();
        trace.push(clamp_roundoff(sol.objective, trace.last().copied()));
    }
    let best = match best {
        Some(b) => b,
        None => {
            let q = gram(k, &atoms);
            let b = linear_term(k, &ws.y, &atoms);
            let obj = quad_objective(&q, &b, &w);
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
    ws: &Workspace,
    sample: &Sample,
    atoms: &[f64],
    w: &[f64],
    last_objective: f64,
    trace: &[f64],
    iterations: usize,
    opts: &FitOptions,
    warnings: &[String],
) -> Result<(Option<FitResult>, Vec<f64>)> {
    let k = ws.k;
    if atoms.is_empty() {
        return Ok((None, Vec::new()));
    }
    let objective_of = |a: &[f64], v: &[f64]| quad_objective(&gram(k, a), &linear_term(k, &ws.y, a), v);
    let mut candidates: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    let mut polished = Vec::new();
    if k >= 2 {
        // Y_n vanishes at the largest observation when all observations coincide
        let at_max = ws.y.eval_unchecked(ws.upper.min(sample.max()), 0).abs();
        let hscale = if at_max > 0.0 {
            at_max
        } else {
            ws.y.eval_unchecked(ws.upper, 0).abs()
        }
        .max(f64::MIN_POSITIVE);
        let (target, accept) = (1e-13 * hscale, 1e-9 * hscale);
        let mut starts: Vec<(Vec<f64>, Vec<f64>)> = vec![(atoms.to_vec(), w.to_vec())];
        if let Some((slopes, _)) = ws.slope_residuals_unchecked(atoms) {
            let merged = merge_bracketing_pairs(atoms, w, &slopes);
            if merged.0.len() < atoms.len() {
                starts.push(merged);
            }
        }
        for rel in [1e-6, 1e-4, 1e-3, 1e-2] {
            let merged = merge_close(atoms, w, rel);
            if merged.0.len() < atoms.len() && !starts.iter().any(|s| s.0 == merged.0) {
                starts.push(merged);
            }
        }
        for start in pair_merge_starts(atoms, w, PAIR_GAP) {
            if !starts.iter().any(|s| s.0 == start.0) {
                starts.push(start);
            }
        }
        for (a, _) in &starts {
            if let Some(p) = ws.polish(a, target, accept) {
                polished.extend_from_slice(&p.0);
                candidates.push(p);
            }
        }
    }
    candidates.push((atoms.to_vec(), w.to_vec()));
    let mut fallback = None;
    for (a, v) in candidates {
        let obj = objective_of(&a, &v);
        let monotone = obj <= last_objective + ROUNDOFF * last_objective.abs();
        let obj = clamp_roundoff(obj, Some(last_objective));
        let mut tr = trace.to_vec();
        tr.push(obj);
        let fit = build_result(
            k,
            &a,
            &v,
            obj,
            tr,
            iterations,
            sample,
            opts,
            ws.upper,
            warnings.to_vec(),
        )?;
        if fit.certificate.passed && monotone {
            return Ok((Some(fit), polished));
        }
        if fallback.is_none() {
            fallback = Some(fit);
        }
    }
    polished.sort_by(f64::total_cmp);
    polished.dedup();
    Ok((fallback, polished))
}
