//! `conjecture`, `gap-study`, `rate-study` and `limit-sim`.

use std::process::ExitCode;

use kmono::conjecture::{conjecture_trial, ConjectureConfig, KnotSampler, Target};
use kmono::limit::{
    gap_experiment, invelope_hk, lcm_oracle, rate_experiment, simulate_many, GapConfig, InvelopeOptions, RateConfig,
    TruthSpec,
};
use kmono::par::map_indexed;
use kmono::{Estimator, ExecPolicy, FitOptions};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::args::{ConjectureArgs, Global, LimitArgs, RateArgs, SamplerKind, StudyArgs};
use crate::config::{self, Flags};
use crate::error::{CliError, CliResult};
use crate::output::{self, header, num, opt};

/// Largest admissible share of trials that stay ill-conditioned.
const ILL_CONDITIONED_SHARE: f64 = 1e-3;
/// Largest admissible Kolmogorov distance between consecutive sample sizes.
const KS_THRESHOLD: f64 = 0.15;

fn verdict(passed: bool, what: &str) -> ExitCode {
    if passed {
        ExitCode::SUCCESS
    } else {
        eprintln!("kmono: {what} failed");
        ExitCode::from(1)
    }
}

pub fn conjecture(global: &Global, args: &ConjectureArgs) -> CliResult<ExitCode> {
    let file = config::load(global.config.as_deref())?;
    let k = config::resolve_k(global.k, &file, 3)?;
    let defaults = serde_json::to_value(ConjectureConfig::new(
        k,
        10_000,
        KnotSampler::Mixed,
        Target::PerfectSpline,
        0,
    ))
    .expect("config serializes");
    let sampler = args.sampler.map(|s| match s {
        SamplerKind::UniformOrder => KnotSampler::UniformOrder,
        SamplerKind::Dirichlet => KnotSampler::Dirichlet { alpha: args.alpha },
        SamplerKind::Clustered => KnotSampler::Clustered { width: args.width },
        SamplerKind::Mixed => KnotSampler::Mixed,
    });
    let mut flags = Flags::default();
    flags
        .set("k", global.k)
        .set("seed", global.seed)
        .set("trials", args.trials)
        .set("sampler", sampler)
        .set("grid_resolution", args.grid_resolution);
    let (cfg, echo): (ConjectureConfig, Value) = config::resolve(defaults, &file, flags)?;

    let (report, records) = conjecture_trial(&cfg)?;
    let share = if cfg.trials == 0 {
        0.0
    } else {
        report.ill_conditioned as f64 / cfg.trials as f64
    };
    let passed = !report.violated && share <= ILL_CONDITIONED_SHARE;

    let sites = records.first().map_or(0, |r| r.knots.len());
    let mut head = vec!["trial".to_string()];
    head.extend((1..=sites).map(|i| format!("knot_{i}")));
    head.extend(header(&["t", "sup_error", "condition", "extended", "ill_conditioned"]));
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            let mut row = vec![r.trial.to_string()];
            row.extend(r.knots.iter().map(|&x| num(x)));
            row.extend([
                opt(r.t),
                opt(r.sup_error),
                opt(r.condition),
                r.extended.to_string(),
                r.ill_conditioned.to_string(),
            ]);
            row
        })
        .collect();
    output::ensure_dir(&global.out)?;
    output::write_csv(&global.out, "conjecture_trials.csv", &head, &rows)?;
    output::write_json(
        &global.out,
        "conjecture.json",
        json!({
            "config": echo,
            "report": report,
            "ill_conditioned_share": share,
            "ill_conditioned_limit": ILL_CONDITIONED_SHARE,
            "passed": passed,
        }),
    )?;
    Ok(verdict(passed, "the interpolation error bound check"))
}

fn study_flags(global: &Global, args: &StudyArgs) -> Flags {
    let mut flags = Flags::default();
    flags
        .set("k", global.k)
        .set("seed", global.seed)
        .set("x0", args.x0)
        .set("n_list", args.n_list.clone())
        .set("reps", args.reps)
        .set("estimator", args.estimator)
        .set_nested(&["fit", "certify", "tol_ineq"], global.tol_ineq)
        .set_nested(&["fit", "certify", "tol_eq"], global.tol_eq);
    flags
}

/// The knot spacing shrinks like `n^{-1/(2k+1)}`.
fn gap_target(k: usize) -> (f64, f64) {
    (-1.0 / (2 * k + 1) as f64, if k == 1 { 0.1 } else { 0.15 })
}

pub fn gap_study(global: &Global, args: &StudyArgs) -> CliResult<ExitCode> {
    let file = config::load(global.config.as_deref())?;
    let k = config::resolve_k(global.k, &file, 3)?;
    let defaults = serde_json::to_value(GapConfig {
        k,
        truth: TruthSpec::Exponential,
        x0: 1.0,
        n_list: vec![500, 2000, 8000],
        reps: 200,
        seed: 0,
        estimator: Estimator::Lse,
        fit: FitOptions::default(),
        policy: ExecPolicy::default(),
    })
    .expect("config serializes");
    let (cfg, echo): (GapConfig, Value) = config::resolve(defaults, &file, study_flags(global, args))?;

    let report = gap_experiment(&cfg)?;
    let (target, tolerance) = gap_target(cfg.k);
    let passed = report.slope.is_finite() && (report.slope - target).abs() <= tolerance;

    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            vec![
                r.n.to_string(),
                r.rep.to_string(),
                opt(r.gap),
                r.flagged.to_string(),
                r.excluded.to_string(),
                r.converged.to_string(),
            ]
        })
        .collect();
    let table: Vec<Vec<String>> = report
        .table
        .iter()
        .map(|s| {
            vec![
                s.n.to_string(),
                s.used.to_string(),
                s.flagged.to_string(),
                s.excluded.to_string(),
                s.unconverged.to_string(),
                num(s.median_gap),
                num(s.q25),
                num(s.q75),
            ]
        })
        .collect();
    output::ensure_dir(&global.out)?;
    output::write_csv(
        &global.out,
        "gap_rows.csv",
        &header(&["n", "rep", "gap", "flagged", "excluded", "converged"]),
        &rows,
    )?;
    output::write_csv(
        &global.out,
        "gap_table.csv",
        &header(&[
            "n",
            "used",
            "flagged",
            "excluded",
            "unconverged",
            "median_gap",
            "q25",
            "q75",
        ]),
        &table,
    )?;
    output::write_json(
        &global.out,
        "gap_summary.json",
        json!({
            "config": echo,
            "slope": report.slope,
            "target_slope": target,
            "tolerance": tolerance,
            "table": report.table,
            "passed": passed,
        }),
    )?;
    Ok(verdict(passed, "the gap slope check"))
}

pub fn rate_study(global: &Global, args: &RateArgs) -> CliResult<ExitCode> {
    let file = config::load(global.config.as_deref())?;
    let k = config::resolve_k(global.k, &file, 3)?;
    let mut j_list = vec![0, k.saturating_sub(1)];
    j_list.dedup();
    let defaults = serde_json::to_value(RateConfig {
        k,
        truth: TruthSpec::Exponential,
        x0: 1.0,
        j_list,
        n_list: vec![2000, 8000],
        reps: 500,
        seed: 0,
        estimator: Estimator::Lse,
        inverse: true,
        fit: FitOptions::default(),
        policy: ExecPolicy::default(),
    })
    .expect("config serializes");
    let mut flags = study_flags(global, &args.study);
    flags
        .set("j_list", args.j_list.clone())
        .set("inverse", args.no_inverse.then_some(false));
    let (cfg, echo): (RateConfig, Value) = config::resolve(defaults, &file, flags)?;

    let report = rate_experiment(&cfg)?;
    let mut quantities: Vec<String> = cfg.j_list.iter().map(|j| format!("g{j}")).collect();
    if cfg.inverse {
        quantities.push("F".into());
    }
    let mut passed = true;
    let stability: Vec<Value> = quantities
        .iter()
        .map(|q| {
            let ks = report.max_ks(q);
            let status = match ks {
                None => "not_applicable",
                Some(d) if d < KS_THRESHOLD => "pass",
                Some(_) => "fail",
            };
            passed &= status != "fail";
            json!({"quantity": q, "max_ks": ks, "threshold": KS_THRESHOLD, "status": status})
        })
        .collect();

    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            vec![
                r.n.to_string(),
                r.rep.to_string(),
                r.quantity.clone(),
                num(r.estimate),
                num(r.truth),
                num(r.error),
                num(r.rescaled),
                r.converged.to_string(),
            ]
        })
        .collect();
    let table: Vec<Vec<String>> = report
        .table
        .iter()
        .map(|s| {
            vec![
                s.quantity.clone(),
                s.n.to_string(),
                s.count.to_string(),
                num(s.median_abs_error),
                num(s.rescaled_q10),
                num(s.rescaled_median),
                num(s.rescaled_q90),
                opt(s.ks_to_previous),
            ]
        })
        .collect();
    output::ensure_dir(&global.out)?;
    output::write_csv(
        &global.out,
        "rate_rows.csv",
        &header(&[
            "n",
            "rep",
            "quantity",
            "estimate",
            "truth",
            "error",
            "rescaled",
            "converged",
        ]),
        &rows,
    )?;
    output::write_csv(
        &global.out,
        "rate_table.csv",
        &header(&[
            "quantity",
            "n",
            "count",
            "median_abs_error",
            "rescaled_q10",
            "rescaled_median",
            "rescaled_q90",
            "ks_to_previous",
        ]),
        &table,
    )?;
    output::write_json(
        &global.out,
        "rate_summary.json",
        json!({
            "config": echo,
            "stability": stability,
            "table": report.table,
            "passed": passed,
        }),
    )?;
    Ok(verdict(passed, "the rate stability check"))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LimitSettings {
    k: usize,
    half_width: f64,
    delta: f64,
    paths: usize,
    seed: u64,
    tol_ineq: f64,
    tol_eq: f64,
    policy: ExecPolicy,
}

pub fn limit_sim(global: &Global, args: &LimitArgs) -> CliResult<ExitCode> {
    let file = config::load(global.config.as_deref())?;
    let k = config::resolve_k(global.k, &file, 3)?;
    let opts = InvelopeOptions::default();
    let defaults = serde_json::to_value(LimitSettings {
        k,
        half_width: 2.0,
        delta: 2.0 / 1024.0,
        paths: 1,
        seed: 0,
        tol_ineq: opts.tol_ineq,
        tol_eq: opts.tol_eq,
        policy: ExecPolicy::default(),
    })
    .expect("settings serialize");
    let mut flags = Flags::default();
    flags
        .set("k", global.k)
        .set("seed", global.seed)
        .set("paths", args.paths)
        .set("half_width", args.half_width)
        .set("delta", args.delta)
        .set("tol_ineq", global.tol_ineq)
        .set("tol_eq", global.tol_eq);
    let (cfg, echo): (LimitSettings, Value) = config::resolve(defaults, &file, flags)?;
    if cfg.paths == 0 {
        return Err(CliError::Config("paths must be positive".into()));
    }

    let paths = simulate_many(cfg.k, cfg.half_width, cfg.delta, cfg.seed, cfg.paths, cfg.policy)?;
    let opts = InvelopeOptions {
        tol_ineq: cfg.tol_ineq,
        tol_eq: cfg.tol_eq,
        max_iter: None,
    };
    let solved = map_indexed(cfg.policy, paths.len(), |i| invelope_hk(&paths[i], &opts));

    let mut stats = Vec::with_capacity(paths.len());
    let mut values = Vec::new();
    let mut passed = true;
    for (i, (path, inv)) in paths.iter().zip(solved).enumerate() {
        let inv = inv?;
        let cert = &inv.certificate;
        // For k = 1 the invelope is the least concave majorant.
        let oracle = (cfg.k == 1).then(|| {
            let lcm = lcm_oracle(&path.grid, &path.values);
            inv.values
                .iter()
                .zip(&lcm)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
                / cert.scale
        });
        let ok = match oracle {
            Some(d) => d <= cfg.tol_ineq,
            None => cert.passed,
        };
        passed &= ok;
        stats.push(vec![
            i.to_string(),
            inv.iterations.to_string(),
            inv.knots.len().to_string(),
            num(cert.min_gap),
            num(cert.argmin_gap),
            num(cert.slackness_residual),
            num(cert.scale),
            cert.passed.to_string(),
            opt(oracle),
            ok.to_string(),
        ]);
        for ((t, y), h) in path.grid.iter().zip(&path.values).zip(&inv.values) {
            values.push(vec![i.to_string(), num(*t), num(*y), num(*h)]);
        }
    }
    output::ensure_dir(&global.out)?;
    output::write_csv(
        &global.out,
        "limit_paths.csv",
        &header(&[
            "path",
            "iterations",
            "knots",
            "min_gap",
            "argmin_gap",
            "slackness_residual",
            "scale",
            "certificate_passed",
            "oracle_deviation",
            "passed",
        ]),
        &stats,
    )?;
    output::write_csv(
        &global.out,
        "limit_values.csv",
        &header(&["path", "t", "y", "h"]),
        &values,
    )?;
    output::write_json(
        &global.out,
        "limit_summary.json",
        json!({
            "config": echo,
            "paths": cfg.paths,
            "failed": stats.iter().filter(|r| r[9] == "false").count(),
            "passed": passed,
        }),
    )?;
    Ok(verdict(passed, "the invelope check"))
}
