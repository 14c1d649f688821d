use serde_json::Value;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

const Z975: f64 = 1.959_963_984_540_054;

const OUTPUTS: [&str; 9] = [
    "truth.json",
    "consort.json",
    "derived.csv",
    "weights.csv",
    "diagnostics.json",
    "coxfit.json",
    "curves.csv",
    "cate.csv",
    "replicates.csv",
];

fn rdi_msm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rdi-msm")).args(args).output().unwrap()
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, body).unwrap();
    path
}

/// Small cohorts need a realistic event rate so no (a, v) cell runs dry
/// in bootstrap replicates.
fn small_config(dir: &Path, n: usize, b: usize) -> PathBuf {
    write_config(
        dir,
        &format!(
            r#"{{
  "simulate": {{
    "n": {n},
    "seed": 17,
    "outcome": {{ "beta": [-0.3, 0.4, 0.3, -0.2, -0.7], "baseline_hazard": 0.01 }}
  }},
  "bootstrap": {{ "replicates": {b}, "seed": 5, "store_replicates": true }},
  "horizon_months": 60
}}"#
        ),
    )
}

fn run_ok(args: &[&str]) -> Output {
    let out = rdi_msm(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count() - 1
}

#[test]
fn full_pipeline_writes_every_output_within_budget() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 500, 200);
    let out = dir.path().join("out");
    let start = Instant::now();
    run_ok(&["all", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(start.elapsed() < Duration::from_secs(300));
    for f in OUTPUTS {
        assert!(out.join(f).exists(), "{f} missing");
    }

    let consort = read_json(&out.join("consort.json"));
    let eligible = consort["eligible"].as_u64().unwrap() as usize;
    assert_eq!(csv_rows(&out.join("derived.csv")), eligible);
    assert_eq!(csv_rows(&out.join("weights.csv")), 5 * eligible);

    let diagnostics = read_json(&out.join("diagnostics.json"));
    let specs = diagnostics["specs"].as_array().unwrap();
    assert_eq!(specs.len(), 5);
    assert_eq!(specs.iter().filter(|s| s["selected"] == Value::Bool(true)).count(), 1);

    // four contrasts on the 60-month grid
    assert_eq!(csv_rows(&out.join("cate.csv")), 4 * 60);
    // failed replicates are dropped, at most 5 % of them
    let text = fs::read_to_string(out.join("replicates.csv")).unwrap();
    let mut kept: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    let rows = kept.len();
    kept.dedup();
    assert!(kept.len() >= 190, "{} replicates kept", kept.len());
    assert_eq!(rows, kept.len() * 4 * 60);

    let fit = read_json(&out.join("coxfit.json"));
    let w = &fit["weighted"];
    for k in 0..5 {
        let est = w["coefficients"][k].as_f64().unwrap();
        let se = w["robust_se"][k].as_f64().unwrap();
        assert!((w["ci_lower"][k].as_f64().unwrap() - (est - Z975 * se)).abs() < 1e-12);
        assert!((w["ci_upper"][k].as_f64().unwrap() - (est + Z975 * se)).abs() < 1e-12);
    }
}

#[test]
fn reruns_and_staged_commands_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 500, 20);
    let cfg = cfg.to_str().unwrap();
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    let staged = dir.path().join("staged");
    run_ok(&["all", "--config", cfg, "--out", first.to_str().unwrap()]);
    run_ok(&["all", "--config", cfg, "--out", second.to_str().unwrap()]);
    for stage in ["simulate", "derive", "weights", "fit", "effects"] {
        run_ok(&[stage, "--config", cfg, "--out", staged.to_str().unwrap()]);
    }
    for f in OUTPUTS {
        let a = fs::read(first.join(f)).unwrap();
        assert_eq!(a, fs::read(second.join(f)).unwrap(), "{f} differs between runs");
        assert_eq!(a, fs::read(staged.join(f)).unwrap(), "{f} differs from the staged run");
    }
    // re-running a stage in place leaves its output unchanged
    let before = fs::read(staged.join("cate.csv")).unwrap();
    run_ok(&["effects", "--config", cfg, "--out", staged.to_str().unwrap()]);
    assert_eq!(before, fs::read(staged.join("cate.csv")).unwrap());
}

#[test]
fn seed_flag_overrides_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 200, 5);
    let cfg = cfg.to_str().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    run_ok(&["simulate", "--config", cfg, "--out", a.to_str().unwrap()]);
    run_ok(&["simulate", "--config", cfg, "--seed", "99", "--out", b.to_str().unwrap()]);
    assert_eq!(read_json(&b.join("truth.json"))["truth"]["seed"], 99);
    assert_ne!(
        fs::read(a.join("data").join("patients.csv")).unwrap(),
        fs::read(b.join("data").join("patients.csv")).unwrap()
    );
}

#[test]
fn unit_weights_make_both_fits_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 400, 5);
    let cfg = cfg.to_str().unwrap();
    let out = dir.path().join("out");
    let out_s = out.to_str().unwrap();
    for stage in ["simulate", "derive", "weights"] {
        run_ok(&[stage, "--config", cfg, "--out", out_s]);
    }
    let weights = out.join("weights.csv");
    let text = fs::read_to_string(&weights).unwrap();
    let mut lines = text.lines();
    let mut ones = format!("{}\n", lines.next().unwrap());
    for line in lines {
        let (head, _) = line.rsplit_once(',').unwrap();
        ones.push_str(&format!("{head},1.0\n"));
    }
    fs::write(&weights, ones).unwrap();
    run_ok(&["fit", "--config", cfg, "--out", out_s]);
    let fit = read_json(&out.join("coxfit.json"));
    for key in ["coefficients", "model_se", "robust_se"] {
        for k in 0..5 {
            let a = fit["weighted"][key][k].as_f64().unwrap();
            let b = fit["unweighted"][key][k].as_f64().unwrap();
            assert!((a - b).abs() <= 1e-8, "{key}[{k}]: {a} vs {b}");
        }
    }
}

#[test]
fn tie_flag_selects_efron() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 300, 5);
    let cfg = cfg.to_str().unwrap();
    let out = dir.path().join("out");
    let out_s = out.to_str().unwrap();
    for stage in ["simulate", "derive", "weights"] {
        run_ok(&[stage, "--config", cfg, "--out", out_s]);
    }
    run_ok(&["fit", "--config", cfg, "--out", out_s, "--tie", "efron"]);
    assert_eq!(read_json(&out.join("coxfit.json"))["ties"], "efron");
    run_ok(&["fit", "--config", cfg, "--out", out_s]);
    assert_eq!(read_json(&out.join("coxfit.json"))["ties"], "breslow");
}

#[test]
fn spec_flag_marks_the_selection() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 300, 5);
    let cfg = cfg.to_str().unwrap();
    let out = dir.path().join("out");
    let out_s = out.to_str().unwrap();
    for stage in ["simulate", "derive"] {
        run_ok(&[stage, "--config", cfg, "--out", out_s]);
    }
    run_ok(&["weights", "--config", cfg, "--out", out_s, "--spec", "iptw3"]);
    let diagnostics = read_json(&out.join("diagnostics.json"));
    let selected: Vec<&Value> = diagnostics["specs"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|s| s["selected"] == Value::Bool(true))
        .collect();
    assert_eq!(selected.len(), 1);
    assert_eq!(selected[0]["spec"].as_str().unwrap().to_lowercase(), "iptw3");
}

#[test]
fn validation_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 100, 5);
    let cfg = cfg.to_str().unwrap();
    let out = dir.path().join("out");
    let out_s = out.to_str().unwrap();

    let unknown_spec = rdi_msm(&["derive", "--config", cfg, "--out", out_s, "--spec", "iptw9"]);
    assert_eq!(unknown_spec.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&unknown_spec.stderr).contains("iptw9"));

    let zero_b = rdi_msm(&["effects", "--config", cfg, "--out", out_s, "--bootstrap-B", "0"]);
    assert_eq!(zero_b.status.code(), Some(1));

    let bad_json = write_config(dir.path(), "{ not json");
    assert_eq!(rdi_msm(&["all", "--config", bad_json.to_str().unwrap()]).status.code(), Some(1));

    let missing_input = write_config(dir.path(), r#"{ "input": { "path": "/nonexistent/rdi-msm" } }"#);
    assert_eq!(rdi_msm(&["derive", "--config", missing_input.to_str().unwrap()]).status.code(), Some(1));

    assert_eq!(rdi_msm(&["derive", "--tie", "exact"]).status.code(), Some(1));
    assert_eq!(rdi_msm(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(rdi_msm(&["--help"]).status.code(), Some(0));

    // fit before derive
    let fresh = dir.path().join("fresh");
    let early = rdi_msm(&["fit", "--config", cfg, "--out", fresh.to_str().unwrap()]);
    assert_eq!(early.status.code(), Some(1));
}

#[test]
fn positivity_violation_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{ "simulate": { "n": 200, "seed": 1, "positivity_floor": 0.3 } }"#);
    let out = dir.path().join("out");
    let run = rdi_msm(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(2), "{}", String::from_utf8_lossy(&run.stderr));
}

#[test]
fn derive_reports_missing_response_in_consort() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{ "simulate": { "n": 50, "seed": 4 } }"#,
    );
    let out = dir.path().join("out");
    let out_s = out.to_str().unwrap();
    let cfg = cfg.to_str().unwrap();
    run_ok(&["simulate", "--config", cfg, "--out", out_s]);

    // blank the necrosis field of one patient
    let patients = out.join("data").join("patients.csv");
    let text = fs::read_to_string(&patients).unwrap();
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    let col = header.iter().position(|h| h.contains("necrosis")).unwrap();
    let edited: Vec<String> = text
        .lines()
        .enumerate()
        .map(|(i, line)| {
            if i == 1 {
                let mut fields: Vec<&str> = line.split(',').collect();
                fields[col] = "";
                fields.join(",")
            } else {
                line.to_string()
            }
        })
        .collect();
    fs::write(&patients, edited.join("\n") + "\n").unwrap();

    run_ok(&["derive", "--config", cfg, "--out", out_s]);
    let consort = read_json(&out.join("consort.json"));
    assert_eq!(consort["eligible"], 49);
    assert_eq!(csv_rows(&out.join("derived.csv")), 49);
    assert_eq!(consort["stages"][0]["excluded"], 1);
    assert_eq!(consort["stages"][0]["entering"], 50);
}
