//! `fit` and `invert`.

use std::process::ExitCode;

use kmono::estimate::mixing_cdf_curve;
use kmono::{
    fit_lse, fit_mle, mixture_to_piecewise, Estimator, FitOptions, FitResult, MassConstraint, MixingMeasure, Sample,
};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::args::{FitArgs, Global, InvertArgs};
use crate::config::{self, Flags};
use crate::error::{CliError, CliResult};
use crate::output::{self, num, SCHEMA};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FitSettings {
    k: usize,
    estimator: Estimator,
    /// Intervals of the evaluation grid on `[0, last knot]`.
    grid_points: usize,
    fit: FitOptions,
}

pub fn fit(global: &Global, args: &FitArgs) -> CliResult<ExitCode> {
    let file = config::load(global.config.as_deref())?;
    let defaults = json!({
        "k": 3,
        "estimator": Estimator::Lse,
        "grid_points": 400,
        "fit": FitOptions::default(),
    });
    let mut flags = Flags::default();
    flags
        .set("k", global.k)
        .set("estimator", args.estimator)
        .set("grid_points", args.grid_points)
        .set_nested(&["fit", "max_iter"], args.max_iter)
        .set_nested(&["fit", "certify", "tol_ineq"], global.tol_ineq)
        .set_nested(&["fit", "certify", "tol_eq"], global.tol_eq);
    let (settings, echo): (FitSettings, Value) = config::resolve(defaults, &file, flags)?;
    if settings.grid_points == 0 {
        return Err(CliError::Config("grid_points must be positive".into()));
    }

    let sample = Sample::new(output::read_values(&args.input, "x")?)?;
    let result = match settings.estimator {
        Estimator::Lse => fit_lse(&sample, settings.k, &settings.fit),
        Estimator::Mle => fit_mle(&sample, settings.k, &settings.fit),
    };
    let (fit, converged) = match result {
        Ok(fit) => (fit, true),
        Err(kmono::Error::FitNotConverged { best, .. }) => (*best, false),
        Err(e) => return Err(e.into()),
    };

    output::ensure_dir(&global.out)?;
    output::write_json(&global.out, "fit.json", fit_document(&fit, sample.n(), converged, echo))?;
    write_grid(&global.out, &fit, settings.grid_points)?;

    Ok(if !converged {
        eprintln!("kmono: the fit did not converge; the best iterate was written");
        ExitCode::from(3)
    } else if fit.certificate.passed {
        ExitCode::SUCCESS
    } else {
        eprintln!("kmono: the optimality certificate failed");
        ExitCode::from(1)
    })
}

fn fit_document(fit: &FitResult, n: usize, converged: bool, echo: Value) -> Value {
    let c = &fit.certificate;
    json!({
        "k": fit.k,
        "estimator": fit.estimator,
        "n": n,
        "atoms": fit.mixing.atoms(),
        "weights": fit.mixing.weights(),
        "knots": fit.knots,
        "objective": fit.objective,
        "total_mass": fit.total_mass(),
        "iterations": fit.iterations,
        "converged": converged,
        "certificate": {
            "min_slack": c.min_slack,
            "argmin_slack": c.argmin_slack,
            "max_knot_residual": c.max_knot_residual,
            "max_derivative_residual": c.max_derivative_residual,
            "scale": c.scale,
            "tol_ineq": c.tol_ineq,
            "tol_eq": c.tol_eq,
            "passed": c.passed,
        },
        "warnings": fit.warnings,
        "config": echo,
    })
}

/// `x, g, g', ..., g^(k-1)` on a uniform grid; left limits at breakpoints
/// and zero past the support.
fn write_grid(dir: &std::path::Path, fit: &FitResult, intervals: usize) -> CliResult<()> {
    let end = fit.knots.last().copied().unwrap_or_else(|| fit.estimate.end());
    let mut head = vec!["x".to_string()];
    head.extend((0..fit.k).map(|d| format!("g{d}")));
    let rows: Vec<Vec<String>> = (0..=intervals)
        .map(|i| {
            let x = end * i as f64 / intervals as f64;
            let mut row = vec![num(x)];
            row.extend((0..fit.k).map(|d| {
                let v = if x > fit.estimate.end() {
                    0.0
                } else if x <= fit.estimate.start() {
                    fit.estimate.eval_unchecked(fit.estimate.start(), d)
                } else {
                    fit.estimate.eval_left(x, d).unwrap_or(0.0)
                };
                num(v)
            }));
            row
        })
        .collect();
    output::write_csv(dir, "fit_grid.csv", &head, &rows)?;
    Ok(())
}

/// The part of a fit document that inversion needs.
#[derive(Debug, Deserialize)]
struct SavedFit {
    schema: String,
    k: usize,
    atoms: Vec<f64>,
    weights: Vec<f64>,
}

pub fn invert(global: &Global, args: &InvertArgs) -> CliResult<ExitCode> {
    let text = std::fs::read_to_string(&args.fit)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", args.fit.display())))?;
    let saved: SavedFit =
        serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", args.fit.display())))?;
    if saved.schema != SCHEMA {
        return Err(CliError::Input(format!(
            "{}: unsupported schema {:?}",
            args.fit.display(),
            saved.schema
        )));
    }
    if global.k.is_some_and(|k| k != saved.k) {
        return Err(CliError::Config(format!(
            "--k disagrees with the fit (k = {})",
            saved.k
        )));
    }
    let measure = MixingMeasure::new(saved.atoms, saved.weights, MassConstraint::Free)?;
    let density = mixture_to_piecewise(&measure, saved.k)?;

    let ts: Vec<f64> = if let Some(path) = &args.points {
        output::read_values(path, "t")?
    } else if !args.t.is_empty() {
        args.t.clone()
    } else {
        if args.grid_points == 0 {
            return Err(CliError::Config("grid_points must be positive".into()));
        }
        let end = 1.25 * measure.atoms().last().copied().unwrap_or(1.0);
        (1..=args.grid_points)
            .map(|i| end * i as f64 / args.grid_points as f64)
            .collect()
    };
    let raw = mixing_cdf_curve(&density, saved.k, &ts)?;
    let mass = measure.total_mass();
    let rows: Vec<Vec<String>> = ts
        .iter()
        .zip(&raw)
        .map(|(&t, &r)| vec![num(t), num(r.clamp(0.0, mass)), num(r)])
        .collect();
    output::ensure_dir(&global.out)?;
    output::write_csv(&global.out, "invert.csv", &output::header(&["t", "F", "raw"]), &rows)?;
    Ok(ExitCode::SUCCESS)
}
