use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde_json::Value;
use tempfile::TempDir;

fn kmono(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kmono"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

fn json(dir: &Path, name: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join(name)).unwrap()).unwrap()
}

fn csv_rows(dir: &Path, name: &str) -> Vec<Vec<String>> {
    fs::read_to_string(dir.join(name))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn exp_sample(dir: &Path, n: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lines: Vec<String> = (0..n)
        .map(|_| {
            let v: f64 = Exp1.sample(&mut rng);
            v.to_string()
        })
        .collect();
    let p = dir.join("sample.csv");
    fs::write(&p, format!("x\n{}\n", lines.join("\n"))).unwrap();
    p.to_str().unwrap().to_string()
}

/// Grenander estimate from the least concave majorant of the empirical
/// distribution, by brute force over all chords from each vertex.
fn grenander_oracle(sorted: &[f64], x: f64) -> f64 {
    let n = sorted.len() as f64;
    let pts: Vec<(f64, f64)> = std::iter::once((0.0, 0.0))
        .chain(sorted.iter().enumerate().map(|(i, &v)| (v, (i + 1) as f64 / n)))
        .collect();
    let mut i = 0;
    while i + 1 < pts.len() {
        let (j, slope) = (i + 1..pts.len())
            .map(|j| (j, (pts[j].1 - pts[i].1) / (pts[j].0 - pts[i].0)))
            .fold(
                (i + 1, f64::NEG_INFINITY),
                |best, c| if c.1 >= best.1 { c } else { best },
            );
        if x <= pts[j].0 {
            return slope;
        }
        i = j;
    }
    0.0
}

#[test]
fn k1_fit_is_the_grenander_step_density() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("s.csv");
    fs::write(&input, "x\n1\n2\n4\n").unwrap();
    let out = kmono(&[
        "fit",
        "--k",
        "1",
        input.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let doc = json(dir.path(), "fit.json");
    assert_eq!(doc["schema"], "kmono/1");
    assert_eq!(doc["certificate"]["passed"], true);
    for row in csv_rows(dir.path(), "fit_grid.csv") {
        let x: f64 = row[0].parse().unwrap();
        let g: f64 = row[1].parse().unwrap();
        if x > 0.0 {
            let expect = grenander_oracle(&[1.0, 2.0, 4.0], x);
            assert!((g - expect).abs() < 1e-8, "x = {x}: {g} vs {expect}");
        }
    }
    assert!((grenander_oracle(&[1.0, 2.0, 4.0], 1.0) - 1.0 / 3.0).abs() < 1e-15);
    assert!((grenander_oracle(&[1.0, 2.0, 4.0], 3.0) - 1.0 / 6.0).abs() < 1e-15);
}

#[test]
fn mle_on_an_exponential_sample_certifies() {
    let dir = TempDir::new().unwrap();
    let input = exp_sample(dir.path(), 200, 2024);
    let out = kmono(&[
        "fit",
        "--k",
        "3",
        "--estimator",
        "mle",
        &input,
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let doc = json(dir.path(), "fit.json");
    assert_eq!(doc["certificate"]["passed"], true);
    let mass: f64 = doc["weights"]
        .as_array()
        .unwrap()
        .iter()
        .map(|w| w.as_f64().unwrap())
        .sum();
    assert!((mass - 1.0).abs() < 1e-12);
    let header = fs::read_to_string(dir.path().join("fit_grid.csv")).unwrap();
    assert!(header.starts_with("x,g0,g1,g2\n"));
}

#[test]
fn json_array_input_is_accepted() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("s.json");
    fs::write(&input, "[4, 1, 2]").unwrap();
    let out = kmono(&[
        "fit",
        "--k",
        "1",
        input.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    assert_eq!(json(dir.path(), "fit.json")["atoms"], serde_json::json!([2.0, 4.0]));
}

#[test]
fn unreadable_input_exits_with_2() {
    let dir = TempDir::new().unwrap();
    let d = dir.path().to_str().unwrap();
    for (name, content) in [
        ("empty.csv", ""),
        ("text.csv", "x\n1\nabc\n"),
        ("neg.csv", "1\n-2\n"),
        ("empty.json", "[]"),
    ] {
        let p = dir.path().join(name);
        fs::write(&p, content).unwrap();
        let out = kmono(&["fit", p.to_str().unwrap(), "--out", d]);
        assert_eq!(code(&out), 2, "{name}");
        assert!(!out.stderr.is_empty());
    }
    assert_eq!(code(&kmono(&["fit", &path(dir.path(), "missing.csv"), "--out", d])), 2);
}

#[test]
fn non_convergence_exits_with_3_and_writes_the_best_iterate() {
    let dir = TempDir::new().unwrap();
    let input = exp_sample(dir.path(), 200, 3);
    let out = kmono(&[
        "fit",
        "--k",
        "3",
        "--max-iter",
        "1",
        &input,
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3);
    assert_eq!(json(dir.path(), "fit.json")["converged"], false);
    assert!(dir.path().join("fit_grid.csv").exists());
}

#[test]
fn inversion_of_a_single_atom_is_a_step() {
    let dir = TempDir::new().unwrap();
    let fit = dir.path().join("fit.json");
    fs::write(
        &fit,
        r#"{"schema": "kmono/1", "k": 3, "atoms": [2.0], "weights": [0.75]}"#,
    )
    .unwrap();
    let out = kmono(&[
        "invert",
        "--fit",
        fit.to_str().unwrap(),
        "--t",
        "0.5,1.9,2.1,10",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(dir.path(), "invert.csv");
    let f: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    let expect = [0.0, 0.0, 0.75, 0.75];
    for (a, b) in f.iter().zip(expect) {
        assert!((a - b).abs() < 1e-12, "{f:?}");
    }
}

#[test]
fn inversion_of_a_fit_is_monotone_up_to_the_total_mass() {
    let dir = TempDir::new().unwrap();
    let d = dir.path().to_str().unwrap();
    for seed in 0..3 {
        let input = exp_sample(dir.path(), 150, 100 + seed);
        assert_eq!(code(&kmono(&["fit", "--k", "2", &input, "--out", d])), 0);
        assert_eq!(
            code(&kmono(&["invert", "--fit", &path(dir.path(), "fit.json"), "--out", d])),
            0
        );
        let mass = json(dir.path(), "fit.json")["total_mass"].as_f64().unwrap();
        let f: Vec<f64> = csv_rows(dir.path(), "invert.csv")
            .iter()
            .map(|r| r[1].parse().unwrap())
            .collect();
        assert!(f.windows(2).all(|w| w[1] >= w[0] - 1e-9), "seed {seed}");
        assert!((f.last().unwrap() - mass).abs() < 1e-9);
    }
}

#[test]
fn missing_fit_file_exits_with_2() {
    let dir = TempDir::new().unwrap();
    let out = kmono(&["invert", "--fit", &path(dir.path(), "nope.json"), "--t", "1"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn zero_trials_give_an_empty_report() {
    let dir = TempDir::new().unwrap();
    let out = kmono(&[
        "conjecture",
        "--k",
        "3",
        "--trials",
        "0",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let doc = json(dir.path(), "conjecture.json");
    assert_eq!(doc["report"]["trials"], 0);
    assert_eq!(doc["report"]["violated"], false);
    assert!(csv_rows(dir.path(), "conjecture_trials.csv").is_empty());
}

#[test]
fn conjecture_rejects_small_k() {
    let dir = TempDir::new().unwrap();
    let out = kmono(&[
        "conjecture",
        "--k",
        "2",
        "--trials",
        "5",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn conjecture_on_uniform_sites_stays_below_the_bound() {
    let dir = TempDir::new().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = kmono(&[
        "conjecture",
        "--k",
        "4",
        "--trials",
        "200",
        "--sampler",
        "uniform-order",
        "--out",
        d,
    ]);
    assert_eq!(code(&out), 0);
    let doc = json(dir.path(), "conjecture.json");
    assert!(doc["report"]["max_sup_error"].as_f64().unwrap() <= 2.0 / 40320.0);
    assert_eq!(csv_rows(dir.path(), "conjecture_trials.csv")[0].len(), 1 + 4 + 5);
}

#[test]
fn single_replication_marks_stability_not_applicable() {
    let dir = TempDir::new().unwrap();
    let out = kmono(&[
        "rate-study",
        "--k",
        "2",
        "--reps",
        "1",
        "--n-list",
        "200,400",
        "--seed",
        "5",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let doc = json(dir.path(), "rate_summary.json");
    for entry in doc["stability"].as_array().unwrap() {
        assert_eq!(entry["status"], "not_applicable");
    }
    assert_eq!(doc["config"]["reps"], 1);
}

#[test]
fn k1_limit_simulation_matches_the_concave_majorant() {
    let dir = TempDir::new().unwrap();
    let out = kmono(&[
        "limit-sim",
        "--k",
        "1",
        "--paths",
        "2",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    assert_eq!(json(dir.path(), "limit_summary.json")["passed"], true);
    for row in csv_rows(dir.path(), "limit_paths.csv") {
        assert!(row[8].parse::<f64>().unwrap() <= 1e-8);
    }
}

#[test]
fn config_file_sits_between_defaults_and_flags() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"k": 2, "reps": 3, "seed": 9, "n_list": [100, 200], "x0": 0.5}"#,
    )
    .unwrap();
    let out = kmono(&[
        "gap-study",
        "--config",
        cfg.to_str().unwrap(),
        "--reps",
        "2",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(matches!(code(&out), 0 | 1), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = json(dir.path(), "gap_summary.json");
    assert_eq!(doc["config"]["reps"], 2);
    assert_eq!(doc["config"]["seed"], 9);
    assert_eq!(doc["config"]["k"], 2);
    assert_eq!(doc["config"]["n_list"], serde_json::json!([100, 200]));
    assert_eq!(doc["config"]["truth"]["kind"], "exponential");
    assert_eq!(csv_rows(dir.path(), "gap_rows.csv").len(), 4);
}

#[test]
fn invalid_configs_exit_with_2() {
    let dir = TempDir::new().unwrap();
    let d = dir.path().to_str().unwrap();
    let unknown = dir.path().join("unknown.json");
    fs::write(&unknown, r#"{"repetitions": 3}"#).unwrap();
    assert_eq!(
        code(&kmono(&[
            "gap-study",
            "--config",
            unknown.to_str().unwrap(),
            "--out",
            d
        ])),
        2
    );
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"n_list": [400, 200], "reps": 2}"#).unwrap();
    assert_eq!(
        code(&kmono(&["gap-study", "--config", bad.to_str().unwrap(), "--out", d])),
        2
    );
    assert_eq!(
        code(&kmono(&[
            "rate-study",
            "--k",
            "2",
            "--j-list",
            "2",
            "--reps",
            "2",
            "--out",
            d
        ])),
        2
    );
    assert_eq!(code(&kmono(&["limit-sim", "--k", "9", "--out", d])), 2);
}

fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files: Vec<(PathBuf, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (PathBuf::from(p.file_name().unwrap()), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn reruns_are_byte_identical() {
    let runs: Vec<TempDir> = (0..2).map(|_| TempDir::new().unwrap()).collect();
    for (i, dir) in runs.iter().enumerate() {
        let d = dir.path().to_str().unwrap();
        let threads = if i == 0 { "1" } else { "2" };
        let gap = kmono(&[
            "--threads",
            threads,
            "gap-study",
            "--k",
            "2",
            "--n-list",
            "100,200",
            "--reps",
            "4",
            "--seed",
            "3",
            "--out",
            d,
        ]);
        assert!(matches!(code(&gap), 0 | 1));
        let conj = kmono(&["conjecture", "--k", "3", "--trials", "30", "--seed", "4", "--out", d]);
        assert_eq!(code(&conj), 0);
        assert_eq!(
            code(&kmono(&[
                "limit-sim",
                "--k",
                "2",
                "--delta",
                "0.01",
                "--seed",
                "6",
                "--out",
                d
            ])),
            0
        );
    }
    let (a, b) = (snapshot(runs[0].path()), snapshot(runs[1].path()));
    assert_eq!(a.len(), 8);
    assert_eq!(a, b);
}
