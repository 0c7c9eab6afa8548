//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the process exits with a failure status if any criterion fails. Setting
//! `KMONO_CRITERIA` to a comma-separated list of numbers runs only those.
//!
//! Reference values are computed here from closed forms or by independent
//! routines (a hull-based Grenander estimator, direct mixture CDFs, direct
//! variance formulas) rather than through the library paths under test.

use std::io::Write;
use std::time::Instant;

use kmono::conjecture::{conjecture_trial, ConjectureConfig, KnotSampler, Target};
use kmono::estimate::{integrated_estimate, invert_mixing};
use kmono::interp::{error_monospline, hermite_interpolant, sup_abs, HermiteData};
use kmono::limit::{
    gap_experiment, invelope_hk, lcm_oracle, localized_processes, rate_experiment, scaling_identity_check,
    simulate_many, simulate_yk, GapConfig, InvelopeOptions, RateConfig, TruthSpec,
};
use kmono::process::yn_poly;
use kmono::stats::{mean, variance};
use kmono::truth::Truth;
use kmono::{fit_lse, fit_mle, mixture_to_piecewise, Estimator, ExecPolicy, FitOptions, FitResult, MassConstraint};
use kmono::{MixingMeasure, PiecewisePoly, Sample};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn exp_sample(n: usize, seed: u64) -> Sample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Sample::new(Truth::Exponential.sample(&mut rng, n)).unwrap()
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

/// Grenander estimator at `x`: left slope of the least concave majorant of
/// the empirical distribution function, from an upper hull.
fn grenander_oracle(sorted: &[f64], x: f64) -> f64 {
    let n = sorted.len() as f64;
    let mut pts: Vec<(f64, f64)> = vec![(0.0, 0.0)];
    for (i, &v) in sorted.iter().enumerate() {
        let f = (i + 1) as f64 / n;
        match pts.last_mut() {
            Some(last) if last.0 == v => last.1 = f,
            _ => pts.push((v, f)),
        }
    }
    let mut hull: Vec<(f64, f64)> = Vec::new();
    for p in pts {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            if (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0) >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    for w in hull.windows(2) {
        if x > w[0].0 && x <= w[1].0 {
            return (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
        }
    }
    0.0
}

fn c1_k1_oracle() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for i in 0..50u64 {
        let n = 10 + (i as usize * 190) / 49;
        let s = exp_sample(n, 1000 + i);
        let fits = [
            fit_lse(&s, 1, &FitOptions::default()),
            fit_mle(&s, 1, &FitOptions::default()),
        ];
        for fit in fits {
            let Ok(fit) = fit else {
                failures += 1;
                continue;
            };
            for &x in s.values() {
                let g = grenander_oracle(s.values(), x);
                worst = worst.max((fit.density(x) - g).abs());
            }
        }
    }
    outcome(
        failures == 0 && worst <= 1e-8,
        format!("max |estimate - Grenander| = {worst:.2e} over 50 samples, {failures} failed fits"),
    )
}

fn c2_single_observation() -> Outcome {
    let s = Sample::new(vec![1.0]).unwrap();
    let mut worst: f64 = 0.0;
    let mut failure = None;
    for k in 2..=6 {
        let kf = k as f64;
        let expected = (2.0 * kf - 1.0) / kf * (1.0 - 1.0 / (2.0 * kf - 1.0)).powi(k as i32 - 1);
        match fit_lse(&s, k, &FitOptions::default()) {
            Ok(fit) => worst = worst.max((fit.total_mass() - expected).abs()),
            Err(e) => {
                failure.get_or_insert(format!("k = {k}: {e}"));
            }
        }
    }
    if let Some(f) = failure {
        return outcome(false, f);
    }
    outcome(worst <= 1e-6, format!("max mass deviation {worst:.2e} for k = 2..6"))
}

/// Fits shared by the certificate, Hermite and localization criteria.
struct FitCase {
    k: usize,
    sample: Sample,
    fit: Result<FitResult, String>,
    seconds: f64,
}

fn certificate_fits() -> Vec<FitCase> {
    let mut out = Vec::new();
    for k in 2..=4 {
        for n in [100, 500] {
            for rep in 0..3u64 {
                let sample = exp_sample(n, 7000 + 100 * k as u64 + rep + n as u64);
                for est in [Estimator::Lse, Estimator::Mle] {
                    let start = Instant::now();
                    let fit = match est {
                        Estimator::Lse => fit_lse(&sample, k, &FitOptions::default()),
                        Estimator::Mle => fit_mle(&sample, k, &FitOptions::default()),
                    };
                    out.push(FitCase {
                        k,
                        sample: sample.clone(),
                        fit: fit.map_err(|e| e.to_string()),
                        seconds: start.elapsed().as_secs_f64(),
                    });
                }
            }
        }
    }
    out
}

fn c3_certificates(cases: &[FitCase]) -> Outcome {
    let mut bad = Vec::new();
    let mut slowest: f64 = 0.0;
    for c in cases {
        slowest = slowest.max(c.seconds);
        let fit = match &c.fit {
            Ok(f) => f,
            Err(e) => {
                bad.push(format!("k={} n={}: {e}", c.k, c.sample.n()));
                continue;
            }
        };
        let r = &fit.certificate;
        let ok = match fit.estimator {
            Estimator::Lse => r.min_slack >= -1e-7 * r.scale && r.max_knot_residual <= 1e-6 * r.scale,
            Estimator::Mle => r.min_slack >= -1e-7 && r.max_knot_residual <= 1e-6 && r.max_derivative_residual <= 1e-6,
        };
        if !ok {
            bad.push(format!("k={} n={} {:?}", c.k, c.sample.n(), fit.estimator));
        }
    }
    outcome(
        bad.is_empty() && slowest < 60.0,
        format!(
            "{} fits, {} failed {:?}, slowest {slowest:.2}s",
            cases.len(),
            bad.len(),
            bad
        ),
    )
}

fn c4_hermite_identification(cases: &[FitCase]) -> Outcome {
    let mut windows = 0;
    let mut worst: f64 = 0.0;
    for c in cases {
        let Ok(fit) = &c.fit else { continue };
        let k = c.k;
        let m = 2 * k - 2;
        if fit.estimator != Estimator::Lse || fit.knots.len() < m {
            continue;
        }
        let y = yn_poly(&c.sample, k, fit.upper.max(1.5 * c.sample.max())).unwrap();
        let h = integrated_estimate(fit).unwrap();
        for start in 0..=fit.knots.len() - m {
            let sites = &fit.knots[start..start + m];
            let data = HermiteData::from_fn(k, sites, |t| (y.eval_unchecked(t, 0), y.eval_unchecked(t, 1))).unwrap();
            let interp = hermite_interpolant(&data).unwrap();
            let (a, b) = (sites[0], sites[m - 1]);
            let mut scale: f64 = 0.0;
            let mut diff: f64 = 0.0;
            for i in 0..=400 {
                let t = a + (b - a) * i as f64 / 400.0;
                let hv = h.eval_unchecked(t, 0);
                scale = scale.max(hv.abs());
                diff = diff.max((interp.eval_unchecked(t, 0) - hv).abs());
            }
            worst = worst.max(diff / scale.max(f64::MIN_POSITIVE));
            windows += 1;
        }
    }
    outcome(
        windows > 0 && worst <= 1e-6,
        format!("{windows} knot windows, max relative deviation {worst:.2e}"),
    )
}

fn c5_inversion() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let k = rng.random_range(1..=5);
        let m = rng.random_range(1..=10);
        let mut atoms: Vec<f64> = (0..m).map(|_| rng.random_range(0.1..5.0)).collect();
        atoms.sort_by(f64::total_cmp);
        atoms.dedup();
        let raw: Vec<f64> = atoms.iter().map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let mm = MixingMeasure::new(atoms.clone(), weights.clone(), MassConstraint::Free).unwrap();
        let g = mixture_to_piecewise(&mm, k).unwrap();
        for _ in 0..20 {
            let t: f64 = rng.random_range(0.05..5.5);
            if atoms.iter().any(|a| (a - t).abs() < 1e-3) {
                continue;
            }
            let truth: f64 = atoms
                .iter()
                .zip(&weights)
                .filter(|(a, _)| **a <= t)
                .map(|(_, w)| w)
                .sum();
            worst = worst.max((invert_mixing(&g, k, t).unwrap() - truth).abs());
        }
    }
    outcome(worst <= 1e-9, format!("max CDF error {worst:.2e} over 200 mixtures"))
}

/// Sorted sites on `[0, 1]` whose gaps are at least a third of the mean gap.
fn separated_sites(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    let gaps: Vec<f64> = (0..m - 1).map(|_| 0.5 + rng.random::<f64>()).collect();
    let total: f64 = gaps.iter().sum();
    let mut sites = vec![0.0];
    let mut acc = 0.0;
    for g in &gaps {
        acc += g / total;
        sites.push(acc);
    }
    sites[m - 1] = 1.0;
    sites
}

fn c6_hermite_remainder() -> Outcome {
    let data = HermiteData::from_fn(2, &[0.0, 1.0], |t| (t.powi(4) / 24.0, t.powi(3) / 6.0)).unwrap();
    let h = hermite_interpolant(&data).unwrap();
    let f = PiecewisePoly::polynomial(0.0, 1.0, vec![0.0, 0.0, 0.0, 0.0, 1.0 / 24.0]).unwrap();
    let sup = sup_abs(&f.combine(1.0, &h, -1.0).unwrap(), 2001).0;
    let remainder_err = (sup - 1.0 / 384.0).abs();

    let mut rng = ChaCha8Rng::seed_from_u64(66);
    let mut worst: f64 = 0.0;
    for k in 2..=6 {
        for _ in 0..50 {
            let sites = separated_sites(&mut rng, 2 * k - 2);
            let coeffs: Vec<f64> = (0..2 * k).map(|_| rng.random_range(-1.0..1.0)).collect();
            let p = PiecewisePoly::polynomial(0.0, 1.0, coeffs).unwrap();
            let data = HermiteData::from_poly(k, &sites, &p).unwrap();
            let h = hermite_interpolant(&data).unwrap();
            let scale = sup_abs(&p, 512).0.max(f64::MIN_POSITIVE);
            let err = sup_abs(&p.combine(1.0, &h, -1.0).unwrap(), 512).0;
            worst = worst.max(err / scale);
        }
    }
    outcome(
        remainder_err <= 1e-9 && worst <= 1e-9,
        format!("|sup - 1/384| = {remainder_err:.2e}; polynomial reproduction {worst:.2e} relative (k = 2..6)"),
    )
}

fn c7_monosplines() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut sign_violation: f64 = 0.0;
    let mut zero_residual: f64 = 0.0;
    let mut bound_shortfall: f64 = f64::INFINITY;
    let mut violating = Vec::new();
    for k in 3..=5 {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let mut count = 0;
        for _ in 0..100 {
            let knots = separated_sites(&mut rng, 2 * k - 2);
            let e = error_monospline(k, &knots).unwrap();
            let mut h = 0.0;
            let mut widest = (knots[0], knots[1]);
            for w in knots.windows(2) {
                if w[1] - w[0] > h {
                    h = w[1] - w[0];
                    widest = (w[0], w[1]);
                }
            }
            let (a, b) = (knots[0], knots[knots.len() - 1]);
            let mut worst: f64 = 0.0;
            for i in 0..=4000 {
                let t = a + (b - a) * i as f64 / 4000.0;
                worst = worst.max(-sign * e.eval_unchecked(t, 0));
            }
            count += usize::from(worst > 1e-10);
            sign_violation = sign_violation.max(worst);
            for &t in &knots {
                zero_residual = zero_residual
                    .max(e.eval_unchecked(t, 0).abs())
                    .max(e.eval_unchecked(t, 1).abs());
            }
            let mut peak: f64 = 0.0;
            for i in 0..=2000 {
                let t = widest.0 + (widest.1 - widest.0) * i as f64 / 2000.0;
                peak = peak.max(e.eval_unchecked(t, 0).abs());
            }
            let bound = h.powi(2 * k as i32) / (2f64.powi(4 * k as i32 - 1) * factorial(2 * k));
            bound_shortfall = bound_shortfall.min(peak / bound);
        }
        violating.push(format!("k={k}: {count}/100"));
    }
    outcome(
        sign_violation <= 1e-10 && zero_residual <= 1e-10 && bound_shortfall >= 1.0 - 1e-9,
        format!(
            "sign violation {sign_violation:.2e} (knot sets violating {}), knot residual {zero_residual:.2e}, min peak/bound {bound_shortfall:.3}",
            violating.join(", ")
        ),
    )
}

fn c8_conjecture() -> Outcome {
    let start = Instant::now();
    let mut ok = true;
    let mut parts = Vec::new();
    for k in 3..=5 {
        let cfg = ConjectureConfig::new(k, 10_000, KnotSampler::Mixed, Target::PerfectSpline, 800 + k as u64);
        match conjecture_trial(&cfg) {
            Ok((report, _)) => {
                let ratio = report.max_sup_error / (2.0 / factorial(2 * k));
                let pass = ratio <= 1.0 + 1e-6 && report.ill_conditioned <= report.trials / 1000;
                ok &= pass;
                parts.push(format!(
                    "k={k} max/bound {ratio:.6} ill {} extended {}",
                    report.ill_conditioned, report.extended
                ));
            }
            Err(e) => {
                ok = false;
                parts.push(format!("k={k} error {e}"));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(ok && secs < 600.0, format!("{}; {secs:.1}s", parts.join(", ")))
}

fn c9_process_law() -> Outcome {
    let paths = 10_000;
    let mut ok = true;
    let mut worst_z: f64 = 0.0;
    for k in 1..=5 {
        let sims = simulate_many(k, 1.0, 1.0 / 64.0, 900 + k as u64, paths, ExecPolicy::default()).unwrap();
        let origin = sims[0].origin();
        for (t, offset) in [(0.5f64, 32), (1.0f64, 64)] {
            let vals: Vec<f64> = sims.iter().map(|p| p.values[origin + offset]).collect();
            let var_true = t.powi(2 * k as i32 - 1) / ((2 * k - 1) as f64 * factorial(k - 1).powi(2));
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            let mean_true = sign * factorial(k) / factorial(2 * k) * t.powi(2 * k as i32);
            let n = paths as f64;
            let z_var = (variance(&vals) - var_true) / (var_true * (2.0 / (n - 1.0)).sqrt());
            let z_mean = (mean(&vals) - mean_true) / (var_true / n).sqrt();
            worst_z = worst_z.max(z_var.abs()).max(z_mean.abs());
            ok &= z_var.abs() <= 3.0 && z_mean.abs() <= 3.0;
        }
    }
    outcome(ok, format!("largest standardized deviation {worst_z:.2} (limit 3)"))
}

fn c10_invelope() -> Outcome {
    let c = 2.0;
    let delta = c / 1024.0;
    let mut ok = true;
    let mut k1_diff: f64 = 0.0;
    let mut worst_gap: f64 = 0.0;
    let mut worst_slack: f64 = 0.0;
    let mut slowest: f64 = 0.0;
    for seed in 0..3u64 {
        for k in 1..=3 {
            let path = simulate_yk(k, c, delta, 1000 + seed).unwrap();
            let start = Instant::now();
            let inv = match invelope_hk(&path, &InvelopeOptions::default()) {
                Ok(inv) => inv,
                Err(_) => {
                    ok = false;
                    continue;
                }
            };
            slowest = slowest.max(start.elapsed().as_secs_f64());
            let cert = &inv.certificate;
            if k == 1 {
                let lcm = lcm_oracle(&path.grid, &path.values);
                let d = inv
                    .values
                    .iter()
                    .zip(&lcm)
                    .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                k1_diff = k1_diff.max(d / cert.scale);
                ok &= d <= 1e-8 * cert.scale;
            } else {
                worst_gap = worst_gap.min(cert.min_gap / cert.scale);
                worst_slack = worst_slack.max(cert.slackness_residual / cert.scale);
                ok &= cert.min_gap >= -1e-8 * cert.scale && cert.slackness_residual <= 1e-6 * cert.scale;
            }
        }
    }
    outcome(
        ok && slowest < 120.0,
        format!(
            "k=1 vs concave majorant {k1_diff:.2e}; k=2,3 min gap {worst_gap:.2e}, slackness {worst_slack:.2e} (relative); slowest {slowest:.2}s"
        ),
    )
}

fn c11_gap_rate() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for (k, target, tol) in [(3, -1.0 / 7.0, 0.15), (1, -1.0 / 3.0, 0.1)] {
        let cfg = GapConfig {
            k,
            truth: TruthSpec::Exponential,
            x0: 1.0,
            n_list: vec![500, 2000, 8000],
            reps: 200,
            seed: 11,
            estimator: Estimator::Lse,
            fit: FitOptions::default(),
            policy: ExecPolicy::default(),
        };
        match gap_experiment(&cfg) {
            Ok(r) => {
                ok &= (r.slope - target).abs() <= tol;
                parts.push(format!("k={k} slope {:.4} (target {target:.4} +/- {tol})", r.slope));
            }
            Err(e) => {
                ok = false;
                parts.push(format!("k={k} error {e}"));
            }
        }
    }
    outcome(ok, parts.join("; "))
}

fn c12_rate_stability() -> Outcome {
    let cfg = RateConfig {
        k: 3,
        truth: TruthSpec::Exponential,
        x0: 1.0,
        j_list: vec![0, 2],
        n_list: vec![2000, 8000],
        reps: 500,
        seed: 12,
        estimator: Estimator::Lse,
        inverse: true,
        fit: FitOptions::default(),
        policy: ExecPolicy::default(),
    };
    match rate_experiment(&cfg) {
        Ok(r) => {
            let mut ok = true;
            let mut parts = Vec::new();
            for q in ["g0", "g2", "F"] {
                match r.max_ks(q) {
                    Some(d) => {
                        ok &= d < 0.15;
                        parts.push(format!("{q} KS {d:.3}"));
                    }
                    None => {
                        ok = false;
                        parts.push(format!("{q} missing"));
                    }
                }
            }
            outcome(ok, parts.join(", "))
        }
        Err(e) => outcome(false, format!("error {e}")),
    }
}

fn c13_scaling() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let grid: Vec<f64> = (0..=20).map(|i| -2.0 + 0.2 * i as f64).collect();
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let a = 10f64.powf(rng.random_range(-1.0..1.0));
        let sigma = 10f64.powf(rng.random_range(-1.0..1.0));
        for k in 1..=5 {
            worst = worst.max(scaling_identity_check(a, sigma, k, &grid).unwrap());
        }
    }
    outcome(worst <= 1e-10, format!("max deviation {worst:.2e}"))
}

fn c14_localized(cases: &[FitCase]) -> Outcome {
    let mut checked = 0;
    let mut worst_gap: f64 = 0.0;
    let mut worst_res: f64 = 0.0;
    let mut errors = 0;
    let mut first_error = None;
    for c in cases {
        let Ok(fit) = &c.fit else { continue };
        if !fit.certificate.passed {
            continue;
        }
        // t in [-2, 2], narrowed so that the window stays inside (0, 2)
        let reach = 2.0f64.min(0.9 * (c.sample.n() as f64).powf(1.0 / (2 * c.k + 1) as f64));
        let t_grid: Vec<f64> = (0..=200).map(|i| reach * (-1.0 + 0.01 * i as f64)).collect();
        match localized_processes(&c.sample, fit, &Truth::Exponential, 1.0, &t_grid) {
            Ok(d) => {
                let scale = d.scale.max(f64::MIN_POSITIVE);
                worst_gap = worst_gap.min(d.min_gap / scale);
                let r = d.knot_residuals.iter().fold(0.0f64, |m, v| m.max(*v));
                worst_res = worst_res.max(r / scale);
                checked += 1;
            }
            Err(e) => {
                errors += 1;
                first_error.get_or_insert_with(|| format!("k = {}: {e}", c.k));
            }
        }
    }
    if let Some(e) = &first_error {
        return outcome(false, format!("{errors} fits failed, first: {e}"));
    }
    outcome(
        checked > 0 && worst_gap >= -1e-6 && worst_res <= 1e-6,
        format!("{checked} fits, min gap {worst_gap:.2e}, knot residual {worst_res:.2e} (relative), {errors} errors"),
    )
}

fn main() {
    let only: Option<Vec<usize>> = std::env::var("KMONO_CRITERIA")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let wanted = |id: usize| only.as_ref().is_none_or(|o| o.contains(&id));
    let mut stderr = std::io::stderr();
    let mut failed = 0;
    let mut report = |id: usize, name: &str, run: &dyn Fn() -> Outcome| {
        if !wanted(id) {
            return;
        }
        let o = run();
        let tag = if o.passed { "PASS" } else { "FAIL" };
        if !o.passed {
            failed += 1;
        }
        writeln!(stderr, "criterion {id:>2} [{tag}] {name}: {}", o.detail).unwrap();
    };
    let cases = if [3, 4, 14].iter().any(|&id| wanted(id)) {
        certificate_fits()
    } else {
        Vec::new()
    };
    report(1, "k=1 estimators equal Grenander", &c1_k1_oracle);
    report(2, "single-observation LSE mass", &c2_single_observation);
    report(3, "characterization certificates", &|| c3_certificates(&cases));
    report(4, "Hermite identification of H_n", &|| {
        c4_hermite_identification(&cases)
    });
    report(5, "mixing distribution inversion", &c5_inversion);
    report(6, "Hermite remainder and reproduction", &c6_hermite_remainder);
    report(7, "error monosplines", &c7_monosplines);
    report(8, "perfect-spline interpolation bound", &c8_conjecture);
    report(9, "law of Y_k", &c9_process_law);
    report(10, "invelope certificates", &c10_invelope);
    report(11, "knot gap rate", &c11_gap_rate);
    report(12, "pointwise rate stability", &c12_rate_stability);
    report(13, "scaling identity", &c13_scaling);
    report(14, "localized Fenchel diagnostics", &|| c14_localized(&cases));
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
