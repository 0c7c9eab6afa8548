//! Randomised search for knot configurations that make the Hermite
//! interpolation error large.
//!
//! Sites are `0 = y_0 < y_1 < ... < y_{2k-4} < y_{2k-3} = 1`; every trial
//! draws the interior sites from a [`KnotSampler`], interpolates the target
//! and records the sup-norm of the error.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::extended::{hermite_error_extended, PowerSum, TruncatedTerm};
use crate::interp::{hermite_solve, perfect_spline, sup_abs, HermiteData};
use crate::par::{map_indexed, ExecPolicy};
use crate::poly::{factorial, PiecewisePoly};

/// Distribution of the interior sites.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KnotSampler {
    /// Sorted independent uniforms.
    UniformOrder,
    /// Spacings drawn from a symmetric Dirichlet distribution; small `alpha`
    /// produces very uneven spacings.
    Dirichlet { alpha: f64 },
    /// Three consecutive sites (possibly including an end point) squeezed
    /// into a window of the given width; the rest uniform.
    Clustered { width: f64 },
    /// Cycles through the three samplers above, trial by trial.
    Mixed,
}

/// Function whose Hermite interpolant is tested.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Target {
    /// The perfect spline with knots at the interior sites; bound `2/(2k)!`.
    PerfectSpline,
    /// `(x - t)_+^{k-1} / (k-1)!` with `t` uniform on `(0, 1)` per trial.
    /// The bound is user supplied (no closed form is known).
    TruncatedPower { bound: Option<f64> },
    /// A polynomial in the monomial basis; the bound is
    /// `2/(2k)! * sup |f^{(2k)}|` plus a round-off allowance.
    Polynomial { coeffs: Vec<f64> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConjectureConfig {
    pub k: usize,
    pub trials: usize,
    pub sampler: KnotSampler,
    pub target: Target,
    /// Grid points per polynomial piece for the sup-norm scan.
    pub grid_resolution: usize,
    pub seed: u64,
    pub policy: ExecPolicy,
}

impl ConjectureConfig {
    pub fn new(k: usize, trials: usize, sampler: KnotSampler, target: Target, seed: u64) -> Self {
        Self {
            k,
            trials,
            sampler,
            target,
            grid_resolution: 2048,
            seed,
            policy: ExecPolicy::default(),
        }
    }
}

/// Outcome of a single trial.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub knots: Vec<f64>,
    /// Knot of the truncated power target, if any.
    pub t: Option<f64>,
    pub sup_error: Option<f64>,
    /// Condition estimate of the double precision collocation system.
    pub condition: Option<f64>,
    /// The double precision system was ill-conditioned and the trial was
    /// solved again in extended precision.
    pub extended: bool,
    pub ill_conditioned: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConjectureReport {
    pub k: usize,
    pub trials: usize,
    /// Trials excluded because the collocation system was ill-conditioned
    /// even in extended precision.
    pub ill_conditioned: usize,
    /// Trials that needed the extended precision solve.
    pub extended: usize,
    pub max_sup_error: f64,
    pub bound: f64,
    pub argmax_knots: Vec<f64>,
    pub argmax_t: Option<f64>,
    pub violated: bool,
}

fn sample_interior(rng: &mut ChaCha8Rng, k: usize, sampler: KnotSampler, trial: usize) -> Vec<f64> {
    let m = 2 * k - 4;
    let sampler = match sampler {
        KnotSampler::Mixed => match trial % 3 {
            0 => KnotSampler::UniformOrder,
            1 => KnotSampler::Dirichlet { alpha: 0.3 },
            _ => KnotSampler::Clustered { width: 1e-4 },
        },
        s => s,
    };
    let mut knots: Vec<f64> = match sampler {
        KnotSampler::UniformOrder | KnotSampler::Mixed => (0..m).map(|_| rng.random::<f64>()).collect(),
        KnotSampler::Dirichlet { alpha } => {
            let gamma = Gamma::new(alpha, 1.0).expect("positive shape");
            let g: Vec<f64> = (0..=m).map(|_| gamma.sample(rng).max(1e-300)).collect();
            let total: f64 = g.iter().sum();
            let mut acc = 0.0;
            g[..m]
                .iter()
                .map(|v| {
                    acc += v / total;
                    acc
                })
                .collect()
        }
        KnotSampler::Clustered { width } => {
            // With only two interior sites the cluster must include an end point.
            let mode = if m < 3 {
                rng.random_range(0..2) * 2
            } else {
                rng.random_range(0..3)
            };
            let mut v: Vec<f64> = Vec::with_capacity(m);
            match mode {
                0 => {
                    v.extend((0..2).map(|_| width * rng.random::<f64>()));
                    v.extend((2..m).map(|_| rng.random::<f64>()));
                }
                2 => {
                    v.extend((0..2).map(|_| 1.0 - width * rng.random::<f64>()));
                    v.extend((2..m).map(|_| rng.random::<f64>()));
                }
                _ => {
                    let centre = rng.random_range(width..1.0 - width);
                    v.extend((0..3).map(|_| centre + width * (rng.random::<f64>() - 0.5)));
                    v.extend((3..m).map(|_| rng.random::<f64>()));
                }
            }
            v
        }
    };
    knots.sort_by(f64::total_cmp);
    knots
}

fn target_bound(k: usize, target: &Target) -> f64 {
    match target {
        Target::PerfectSpline => 2.0 / factorial(2 * k),
        Target::TruncatedPower { bound } => bound.unwrap_or(f64::INFINITY),
        Target::Polynomial { coeffs } => {
            let p = PiecewisePoly::from_monomial(0.0, 1.0, coeffs).expect("unit interval");
            let top = sup_abs(&p.derivative(2 * k), 64).0;
            let scale = sup_abs(&p, 256).0;
            2.0 / factorial(2 * k) * top + 1e-9 * (1.0 + scale)
        }
    }
}

/// The target as an exact sum of truncated powers.
fn exact_target(k: usize, interior: &[f64], t: Option<f64>, target: &Target) -> PowerSum {
    match target {
        Target::PerfectSpline => {
            let deg = 2 * k;
            let mut poly = vec![0.0; deg + 1];
            poly[deg] = 1.0;
            let terms = interior
                .iter()
                .enumerate()
                .map(|(i, &knot)| TruncatedTerm {
                    knot,
                    degree: deg,
                    coef: if i % 2 == 0 { -2.0 } else { 2.0 },
                })
                .collect();
            PowerSum {
                poly,
                terms,
                divisor: factorial(deg),
            }
        }
        Target::TruncatedPower { .. } => PowerSum {
            poly: Vec::new(),
            terms: vec![TruncatedTerm {
                knot: t.expect("truncated power target draws its knot"),
                degree: k - 1,
                coef: 1.0,
            }],
            divisor: factorial(k - 1),
        },
        Target::Polynomial { coeffs } => PowerSum {
            poly: coeffs.clone(),
            terms: Vec::new(),
            divisor: 1.0,
        },
    }
}

fn run_trial(cfg: &ConjectureConfig, trial: usize) -> TrialRecord {
    let k = cfg.k;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(trial as u64);
    let interior = sample_interior(&mut rng, k, cfg.sampler, trial);
    let mut record = TrialRecord {
        trial,
        knots: interior.clone(),
        t: None,
        sup_error: None,
        condition: None,
        extended: false,
        ill_conditioned: false,
    };
    let target = match &cfg.target {
        Target::PerfectSpline => perfect_spline(k, &interior),
        Target::TruncatedPower { .. } => {
            let t: f64 = rng.random();
            record.t = Some(t);
            PiecewisePoly::truncated_power(t, k - 1, 0.0, 1.0).and_then(|p| p.affine(0.0, 1.0, 1.0 / factorial(k - 1)))
        }
        Target::Polynomial { coeffs } => PiecewisePoly::from_monomial(0.0, 1.0, coeffs),
    };
    let mut sites = Vec::with_capacity(2 * k - 2);
    sites.push(0.0);
    sites.extend_from_slice(&interior);
    sites.push(1.0);
    let outcome = target.and_then(|f| {
        let data = HermiteData::from_poly(k, &sites, &f)?;
        let h = hermite_solve(&data)?;
        let err = f.combine(1.0, &h.spline, -1.0)?;
        Ok((sup_abs(&err, cfg.grid_resolution).0, h.condition))
    });
    match outcome {
        Ok((sup, cond)) => {
            record.sup_error = Some(sup);
            record.condition = Some(cond);
        }
        Err(Error::IllConditioned { condition }) => {
            record.condition = Some(condition);
            let exact = exact_target(k, &interior, record.t, &cfg.target);
            match hermite_error_extended(k, &sites, &exact) {
                Ok((err, _)) => {
                    record.sup_error = Some(sup_abs(&err, cfg.grid_resolution).0);
                    record.extended = true;
                }
                Err(_) => record.ill_conditioned = true,
            }
        }
        Err(_) => record.ill_conditioned = true,
    }
    record
}

/// Runs the harness and returns the summary together with per-trial records
/// (in trial order).
pub fn conjecture_trial(cfg: &ConjectureConfig) -> Result<(ConjectureReport, Vec<TrialRecord>)> {
    if !(3..=8).contains(&cfg.k) {
        return invalid("the conjecture harness runs for k in 3..=8");
    }
    if let KnotSampler::Dirichlet { alpha } = cfg.sampler {
        if !(alpha > 0.0) {
            return invalid("Dirichlet concentration must be positive");
        }
    }
    if let KnotSampler::Clustered { width } = cfg.sampler {
        if !(width > 0.0 && width < 0.25) {
            return invalid("cluster width must lie in (0, 0.25)");
        }
    }
    let records = map_indexed(cfg.policy, cfg.trials, |i| run_trial(cfg, i));
    let bound = target_bound(cfg.k, &cfg.target);
    let mut report = ConjectureReport {
        k: cfg.k,
        trials: cfg.trials,
        ill_conditioned: 0,
        extended: 0,
        max_sup_error: 0.0,
        bound,
        argmax_knots: Vec::new(),
        argmax_t: None,
        violated: false,
    };
    for r in &records {
        report.extended += usize::from(r.extended);
        match r.sup_error {
            Some(e) if e > report.max_sup_error || report.argmax_knots.is_empty() => {
                report.max_sup_error = e;
                report.argmax_knots = r.knots.clone();
                report.argmax_t = r.t;
            }
            Some(_) => {}
            None => report.ill_conditioned += 1,
        }
    }
    report.violated = report.max_sup_error > bound;
    Ok((report, records))
}
