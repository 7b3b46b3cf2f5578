use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mc_implicit_harness::sweep::{aggregate, aggregates_csv, parse_records_csv};
use serde_json::Value;
use tempfile::TempDir;

const SMALL: &str = r#"{
    "schema_version": 1,
    "name": "small",
    "master_seed": 5,
    "ground_truth": {"d": 10, "r": 2, "kappa": 2.0},
    "sampling": {"p": 1.0},
    "init": {"scheme": "gaussian", "r_prime": 10, "alpha": 0.001},
    "optimizer": {"max_iters": 60}
}"#;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_mc-implicit"));
    cmd.env_remove("MC_IMPLICIT_OUT");
    cmd
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn run(args: &[&str], config: &Path, out: &Path) -> Output {
    bin()
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn preset(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("presets")
        .join(format!("{name}.json"))
}

#[test]
fn run_writes_trace_and_artifact() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "small.json", SMALL);
    let out = tmp.path().join("out");
    let o = run(&["run"], &cfg, &out);
    assert!(o.status.success(), "{}", stderr(&o));

    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    let mut lines = trace.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("t,"), "{header}");
    assert!(lines.count() >= 2);
    for name in ["run.json", "checks.json", "checks.txt"] {
        assert!(out.join(name).is_file(), "{name} missing");
    }
    let artifact: Value = serde_json::from_slice(&fs::read(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(artifact["artifact_version"], 1);
    assert_eq!(artifact["summary"]["iterations"], 60);
}

#[test]
fn identical_runs_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "small.json", SMALL);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(run(&["run"], &cfg, &a).status.success());
    assert!(run(&["run"], &cfg, &b).status.success());
    for name in ["trace.csv", "run.json"] {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn seed_flag_changes_the_problem() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "small.json", SMALL);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(run(&["run"], &cfg, &a).status.success());
    assert!(run(&["run", "--seed", "6"], &cfg, &b).status.success());
    assert_ne!(
        fs::read(a.join("trace.csv")).unwrap(),
        fs::read(b.join("trace.csv")).unwrap()
    );
}

#[test]
fn unknown_config_key_is_a_usage_error_naming_the_path() {
    let tmp = TempDir::new().unwrap();
    let text = SMALL.replace("\"kappa\": 2.0", "\"kappa\": 2.0, \"kapa\": 3");
    let cfg = write_config(tmp.path(), "bad.json", &text);
    let o = run(&["run"], &cfg, &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("ground_truth.kapa"), "{}", stderr(&o));
}

#[test]
fn missing_config_is_a_usage_error() {
    let o = bin().arg("run").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--config"));
}

#[test]
fn truncated_artifact_names_the_missing_field() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "small.json", SMALL);
    let out = tmp.path().join("out");
    assert!(run(&["run"], &cfg, &out).status.success());

    let path = out.join("run.json");
    let mut artifact: Value = serde_json::from_slice(&fs::read(&path).unwrap()).unwrap();
    artifact.as_object_mut().unwrap().remove("trace");
    fs::write(&path, serde_json::to_vec(&artifact).unwrap()).unwrap();

    let o = bin().arg("verify").arg(&path).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    let msg = stderr(&o);
    assert!(msg.contains("trace") && msg.contains("run.json"), "{msg}");
}

#[test]
fn verify_reproduces_the_stored_checks() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "small.json", SMALL);
    let out = tmp.path().join("out");
    assert!(run(&["run"], &cfg, &out).status.success());
    let stored = fs::read(out.join("checks.json")).unwrap();

    let again = tmp.path().join("again");
    let o = bin()
        .arg("verify")
        .arg(out.join("run.json"))
        .arg("--out")
        .arg(&again)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read(again.join("checks.json")).unwrap(), stored);
}

#[test]
fn output_root_comes_from_the_environment() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "small.json", SMALL);
    let root = tmp.path().join("root");
    let o = bin()
        .arg("run")
        .arg("--config")
        .arg(&cfg)
        .env("MC_IMPLICIT_OUT", &root)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(root.join("small").join("trace.csv").is_file());
}

#[test]
fn divergence_exits_with_code_three() {
    let tmp = TempDir::new().unwrap();
    let text = SMALL.replace("\"alpha\": 0.001", "\"alpha\": 1.0").replace(
        "\"max_iters\": 60",
        "\"max_iters\": 200, \"eta_rule\": {\"explicit\": 50.0}",
    );
    let cfg = write_config(tmp.path(), "hot.json", &text);
    let out = tmp.path().join("out");
    let o = run(&["run"], &cfg, &out);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let artifact: Value = serde_json::from_slice(&fs::read(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(artifact["summary"]["status"], "diverged");
}

#[test]
fn ghosts_coincide_with_the_run_under_full_observation() {
    let tmp = TempDir::new().unwrap();
    let text = SMALL.replace("\"d\": 10", "\"d\": 12").replace(
        "\"optimizer\"",
        "\"diagnostics\": {\"loo\": {\"kinds\": [\"classical\", \"weakly_coupled\"]}}, \"optimizer\"",
    );
    let cfg = write_config(tmp.path(), "full.json", &text);
    let out = tmp.path().join("out");
    assert!(run(&["run"], &cfg, &out).status.success());

    let o = bin()
        .arg("loo")
        .arg(out.join("run.json"))
        .args([
            "--ghosts",
            "sample:8",
            "--kinds",
            "classical,weakly_coupled",
        ])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let loo = out.join("loo");
    let ghosts = fs::read_dir(&loo)
        .unwrap()
        .filter(|e| {
            let name = e.as_ref().unwrap().file_name();
            let name = name.to_string_lossy();
            name.starts_with("ghost_l") && name.ends_with(".csv")
        })
        .count();
    assert_eq!(ghosts, 8);

    let summary: Value =
        serde_json::from_slice(&fs::read(loo.join("loo_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["indices"].as_array().unwrap().len(), 8);
    let value = |key: &str| {
        summary[key]
            .as_f64()
            .unwrap_or_else(|| panic!("{key}: {summary}"))
    };
    // the classical ghost only differs from the run through the mask
    assert!(value("max_prox_classical") <= 1e-12);
    // the weakly-coupled ghost also drops the residual part of U U^T
    let weak = value("max_prox_weakly_coupled");
    assert!(weak > 0.0 && weak <= value("prox_target"), "{weak}");
}

#[test]
fn sweep_summary_matches_its_records() {
    let tmp = TempDir::new().unwrap();
    let text = SMALL
        .replace("\"p\": 1.0", "\"p\": [0.6, 1.0]")
        .replace("\"alpha\": 0.001", "\"alpha\": [0.01, 0.001]")
        .replace(
            "\"optimizer\": {\"max_iters\": 60}",
            "\"optimizer\": {\"max_iters\": 60, \"record_every\": 10}, \"replication\": {\"n_seeds\": 3}",
        );
    let cfg = write_config(tmp.path(), "grid.json", &text);
    let out = tmp.path().join("out");
    let o = run(&["sweep", "--workers", "2"], &cfg, &out);
    assert!(o.status.success(), "{}", stderr(&o));

    let records = parse_records_csv(&fs::read(out.join("sweep_records.csv")).unwrap()).unwrap();
    assert_eq!(records.len(), 2 * 2 * 3);
    let recomputed = aggregates_csv(&aggregate(&records)).unwrap();
    assert_eq!(recomputed, fs::read(out.join("sweep_summary.csv")).unwrap());
    assert!(out.join("sweep.svg").is_file());
}

#[test]
fn exact_parameterized_preset_converges() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let o = run(&["run"], &preset("thm2_exact"), &out);
    assert!(o.status.success(), "{}", stderr(&o));
    let artifact: Value = serde_json::from_slice(&fs::read(out.join("run.json")).unwrap()).unwrap();
    let rel = artifact["summary"]["final_rel_err"].as_f64().unwrap();
    assert!(rel <= 1e-8, "final relative error {rel}");
}

#[test]
fn every_preset_parses() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("presets");
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        if name.starts_with("concentration") {
            continue;
        }
        mc_implicit_harness::ExperimentConfig::load(&path)
            .unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn concentration_preset_stays_within_its_baseline() {
    let tmp = TempDir::new().unwrap();
    let o = run(
        &["concentration", "--assert"],
        &preset("concentration"),
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let out: Value =
        serde_json::from_slice(&fs::read(tmp.path().join("concentration.json")).unwrap()).unwrap();
    assert!(out["regressions"].as_array().unwrap().is_empty());
}

#[test]
fn concentration_regression_fails_under_assert() {
    let tmp = TempDir::new().unwrap();
    write_config(
        tmp.path(),
        "tight.json",
        r#"[{"name": "omega_concentration", "empirical_constant": 1e-6}]"#,
    );
    let cfg = write_config(
        tmp.path(),
        "conc.json",
        r#"{"schema_version": 1, "name": "c", "d": 30, "p": 0.5, "r": 2, "trials": 5,
            "baseline": "tight.json"}"#,
    );
    let out = tmp.path().join("out");
    assert!(run(&["concentration"], &cfg, &out).status.success());
    let o = run(&["concentration", "--assert"], &cfg, &out);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stdout).contains("omega_concentration"));
}
