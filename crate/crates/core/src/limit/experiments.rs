//! Monte Carlo studies of knot spacing and of the local rates of the
//! estimators at a fixed point.
//!
//! Replication `rep` at sample-size level `i` draws from
//! `ChaCha8Rng::seed_from_u64(seed)` on stream `(i << 32) | rep`, so every
//! replication is reproducible on its own and the results do not depend on
//! how the work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, invalid, Error, Result};
use crate::estimate::{fit_lse, fit_mle, grenander, invert_mixing, Estimator, FitOptions, FitResult};
use crate::mixture::{check_k, MassConstraint, MixingMeasure};
use crate::par::{map_indexed, ExecPolicy};
use crate::sample::Sample;
use crate::stats::{ks_distance, median, ols_slope, quantile_sorted, sorted};
use crate::truth::Truth;

/// The data-generating density of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TruthSpec {
    Exponential,
    /// A Beta(1, k) mixture of the experiment's order with unit mass.
    Mixture {
        atoms: Vec<f64>,
        weights: Vec<f64>,
    },
}

impl TruthSpec {
    pub fn build(&self, k: usize) -> Result<Truth> {
        match self {
            TruthSpec::Exponential => Ok(Truth::Exponential),
            TruthSpec::Mixture { atoms, weights } => Ok(Truth::Mixture {
                k,
                measure: MixingMeasure::new(atoms.clone(), weights.clone(), MassConstraint::Unit)?,
            }),
        }
    }
}

fn rng_for(seed: u64, level: usize, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((level as u64) << 32) | rep as u64);
    rng
}

fn check_common(k: usize, truth: &Truth, x0: f64, n_list: &[usize]) -> Result<()> {
    check_k(k)?;
    if !(x0 > 0.0) || !x0.is_finite() {
        return domain(format!("x0 must be positive, got {x0}"));
    }
    if n_list.is_empty() || n_list.iter().any(|&n| n < 2) {
        return invalid("n_list must be nonempty with every n >= 2");
    }
    if !n_list.windows(2).all(|w| w[0] < w[1]) {
        return invalid("n_list must be strictly increasing");
    }
    if !truth.curvature_ok(k, x0) {
        return domain(format!("(-1)^k g^(k)(x0) must be positive at x0 = {x0}"));
    }
    Ok(())
}

/// Fits and reports whether the solver converged; a fit that ran out of
/// iterations is still used through its best iterate.
fn run_fit(sample: &Sample, k: usize, estimator: Estimator, opts: &FitOptions) -> Result<(FitResult, bool)> {
    let res = match estimator {
        Estimator::Lse => fit_lse(sample, k, opts),
        Estimator::Mle => fit_mle(sample, k, opts),
    };
    match res {
        Ok(fit) => Ok((fit, true)),
        Err(Error::FitNotConverged { best, .. }) => Ok((*best, false)),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GapConfig {
    pub k: usize,
    pub truth: TruthSpec,
    pub x0: f64,
    pub n_list: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
    pub estimator: Estimator,
    #[serde(default)]
    pub fit: FitOptions,
    #[serde(default)]
    pub policy: ExecPolicy,
}

/// One replication of the gap study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub n: usize,
    pub rep: usize,
    /// Distance between the outermost knots of the straddling window.
    pub gap: Option<f64>,
    /// The window had to be shifted because one side had too few knots.
    pub flagged: bool,
    /// Not enough knots overall; the replication is left out.
    pub excluded: bool,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapSummary {
    pub n: usize,
    pub used: usize,
    pub flagged: usize,
    pub excluded: usize,
    pub unconverged: usize,
    pub median_gap: f64,
    pub q25: f64,
    pub q75: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GapReport {
    pub rows: Vec<GapRow>,
    pub table: Vec<GapSummary>,
    /// Least squares slope of log median gap against log n.
    pub slope: f64,
}

/// Window of `2 * side` consecutive knots around `x0`, `side` of them at
/// or below it. Returns the gap and whether the window had to be shifted.
fn straddle(knots: &[f64], x0: f64, side: usize) -> Option<(f64, bool)> {
    let width = 2 * side;
    if knots.len() < width {
        return None;
    }
    let below = knots.partition_point(|&t| t <= x0);
    let ideal = below as isize - side as isize;
    let start = ideal.clamp(0, (knots.len() - width) as isize) as usize;
    Some((knots[start + width - 1] - knots[start], start as isize != ideal))
}

/// Gap between the `2k - 2` knots of the estimator straddling `x0` (for
/// `k = 1`, between the Grenander jumps on either side of `x0`), across
/// sample sizes.
pub fn gap_experiment(cfg: &GapConfig) -> Result<GapReport> {
    let k = cfg.k;
    let truth = cfg.truth.build(k)?;
    check_common(k, &truth, cfg.x0, &cfg.n_list)?;
    if cfg.reps == 0 {
        return invalid("reps must be positive");
    }
    let side = (k - 1).max(1);
    let tasks = cfg.n_list.len() * cfg.reps;
    let rows: Vec<Result<GapRow>> = map_indexed(cfg.policy, tasks, |task| {
        let (level, rep) = (task / cfg.reps, task % cfg.reps);
        let n = cfg.n_list[level];
        let mut rng = rng_for(cfg.seed, level, rep);
        let sample = Sample::new(truth.sample(&mut rng, n))?;
        let (knots, converged) = if k == 1 {
            let g = grenander(&sample);
            (g.locations[1..].to_vec(), true)
        } else {
            let (fit, converged) = run_fit(&sample, k, cfg.estimator, &cfg.fit)?;
            (fit.knots, converged)
        };
        let (gap, flagged, excluded) = match straddle(&knots, cfg.x0, side) {
            Some((g, f)) => (Some(g), f, false),
            None => (None, false, true),
        };
        Ok(GapRow {
            n,
            rep,
            gap,
            flagged,
            excluded,
            converged,
        })
    });
    let rows: Vec<GapRow> = rows.into_iter().collect::<Result<_>>()?;
    let mut table = Vec::with_capacity(cfg.n_list.len());
    for &n in &cfg.n_list {
        let these: Vec<&GapRow> = rows.iter().filter(|r| r.n == n).collect();
        let gaps = sorted(&these.iter().filter_map(|r| r.gap).collect::<Vec<_>>());
        table.push(GapSummary {
            n,
            used: gaps.len(),
            flagged: these.iter().filter(|r| r.flagged).count(),
            excluded: these.iter().filter(|r| r.excluded).count(),
            unconverged: these.iter().filter(|r| !r.converged).count(),
            median_gap: quantile_sorted(&gaps, 0.5),
            q25: quantile_sorted(&gaps, 0.25),
            q75: quantile_sorted(&gaps, 0.75),
        });
    }
    let (lx, ly): (Vec<f64>, Vec<f64>) = table
        .iter()
        .filter(|s| s.median_gap > 0.0)
        .map(|s| ((s.n as f64).ln(), s.median_gap.ln()))
        .unzip();
    let slope = if lx.len() >= 2 { ols_slope(&lx, &ly) } else { f64::NAN };
    Ok(GapReport { rows, table, slope })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateConfig {
    pub k: usize,
    pub truth: TruthSpec,
    pub x0: f64,
    /// Derivative orders of the density, each below `k`.
    pub j_list: Vec<usize>,
    pub n_list: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
    pub estimator: Estimator,
    /// Also record the mixing distribution function at `x0`.
    #[serde(default = "yes")]
    pub inverse: bool,
    #[serde(default)]
    pub fit: FitOptions,
    #[serde(default)]
    pub policy: ExecPolicy,
}

fn yes() -> bool {
    true
}

/// One estimated quantity in one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub n: usize,
    pub rep: usize,
    /// `"g0"`, `"g1"`, ... for density derivatives, `"F"` for the mixing CDF.
    pub quantity: String,
    pub estimate: f64,
    pub truth: f64,
    pub error: f64,
    /// Error times `n^{(k-j)/(2k+1)}`, or `n^{1/(2k+1)}` for the mixing CDF.
    pub rescaled: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSummary {
    pub quantity: String,
    pub n: usize,
    pub count: usize,
    pub median_abs_error: f64,
    pub rescaled_q10: f64,
    pub rescaled_median: f64,
    pub rescaled_q90: f64,
    /// Kolmogorov distance between the rescaled errors at this `n` and at
    /// the previous level; `None` at the first level or with one replication.
    pub ks_to_previous: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateReport {
    pub rows: Vec<RateRow>,
    pub table: Vec<RateSummary>,
}

impl RateReport {
    /// Largest Kolmogorov distance between consecutive levels for
    /// `quantity`, or `None` when not applicable.
    pub fn max_ks(&self, quantity: &str) -> Option<f64> {
        self.table
            .iter()
            .filter(|s| s.quantity == quantity)
            .filter_map(|s| s.ks_to_previous)
            .reduce(f64::max)
    }
}

/// Rescaled errors of the estimated density derivatives (and optionally of
/// the recovered mixing CDF) at `x0`, across sample sizes.
pub fn rate_experiment(cfg: &RateConfig) -> Result<RateReport> {
    let k = cfg.k;
    let truth = cfg.truth.build(k)?;
    check_common(k, &truth, cfg.x0, &cfg.n_list)?;
    if cfg.reps == 0 {
        return invalid("reps must be positive");
    }
    if let Some(j) = cfg.j_list.iter().find(|&&j| j >= k) {
        return invalid(format!("derivative order {j} must be below k = {k}"));
    }
    let x0 = cfg.x0;
    let truth_derivs = truth.derivatives(x0, k - 1);
    let truth_cdf = truth.mixing_cdf(k, x0)?;
    let mut quantities: Vec<String> = cfg.j_list.iter().map(|j| format!("g{j}")).collect();
    if cfg.inverse {
        quantities.push("F".into());
    }
    let r = 1.0 / (2 * k + 1) as f64;
    let tasks = cfg.n_list.len() * cfg.reps;
    let per_task: Vec<Result<Vec<RateRow>>> = map_indexed(cfg.policy, tasks, |task| {
        let (level, rep) = (task / cfg.reps, task % cfg.reps);
        let n = cfg.n_list[level];
        let nf = n as f64;
        let mut rng = rng_for(cfg.seed, level, rep);
        let sample = Sample::new(truth.sample(&mut rng, n))?;
        let (fit, converged) = run_fit(&sample, k, cfg.estimator, &cfg.fit)?;
        let mut out = Vec::with_capacity(quantities.len());
        let derivs = if x0 < fit.estimate.end() {
            fit.estimate.eval_all(x0, k - 1)
        } else {
            vec![0.0; k]
        };
        for &j in &cfg.j_list {
            let error = derivs[j] - truth_derivs[j];
            out.push(RateRow {
                n,
                rep,
                quantity: format!("g{j}"),
                estimate: derivs[j],
                truth: truth_derivs[j],
                error,
                rescaled: nf.powf((k - j) as f64 * r) * error,
                converged,
            });
        }
        if cfg.inverse {
            let est = invert_mixing(&fit.estimate, k, x0)?;
            let error = est - truth_cdf;
            out.push(RateRow {
                n,
                rep,
                quantity: "F".into(),
                estimate: est,
                truth: truth_cdf,
                error,
                rescaled: nf.powf(r) * error,
                converged,
            });
        }
        Ok(out)
    });
    let mut rows = Vec::with_capacity(tasks * quantities.len());
    for chunk in per_task {
        rows.extend(chunk?);
    }
    let mut table = Vec::new();
    for q in &quantities {
        let mut previous: Option<Vec<f64>> = None;
        for &n in &cfg.n_list {
            let these: Vec<&RateRow> = rows.iter().filter(|r| r.n == n && &r.quantity == q).collect();
            let rescaled: Vec<f64> = these.iter().map(|r| r.rescaled).collect();
            let abs_err: Vec<f64> = these.iter().map(|r| r.error.abs()).collect();
            let ks = match &previous {
                Some(p) if cfg.reps >= 2 => Some(ks_distance(p, &rescaled)),
                _ => None,
            };
            let s = sorted(&rescaled);
            table.push(RateSummary {
                quantity: q.clone(),
                n,
                count: these.len(),
                median_abs_error: median(&abs_err),
                rescaled_q10: quantile_sorted(&s, 0.1),
                rescaled_median: quantile_sorted(&s, 0.5),
                rescaled_q90: quantile_sorted(&s, 0.9),
                ks_to_previous: ks,
            });
            previous = Some(rescaled);
        }
    }
    Ok(RateReport { rows, table })
}
