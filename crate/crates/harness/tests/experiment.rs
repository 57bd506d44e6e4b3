use std::fs;
use std::path::Path;

use serde_json::Value;
use spgd_harness::config::{parse_config_str, RunConfig};
use spgd_harness::experiment::{
    run_experiment, run_sweep, strip_wall_clock, SUMMARY_FILE, SWEEP_FILE, TRAJECTORY_FILE,
};
use spgd_harness::HarnessError;

fn config(out: &Path, method: &str, extra: &str) -> RunConfig {
    let text = format!(
        r#"{{
            "prior": {{"kind": "image_gmm", "templates": "builtin", "variance": 0.01}},
            "image": {{"width": 12, "height": 12}},
            "operator": {{"kind": "mask", "keep_fraction": 0.4}},
            "schedule": {{"num_steps": 12}},
            "guidance": {{"zeta": 0.5, "warmup_steps": 3}},
            "method": "{method}",
            "seeds": [0, 1, 2],
            {extra}
            "output_dir": {out:?}
        }}"#
    );
    let c = parse_config_str(&text, "test").unwrap();
    c.validate("test").unwrap();
    c
}

fn two_mode_config(out: &Path, zeta: f64) -> RunConfig {
    let text = format!(
        r#"{{
            "prior": {{"kind": "gmm", "components": [
                {{"weight": 0.5, "mean": [1, 0], "variance": 0.05}},
                {{"weight": 0.5, "mean": [-1, 0], "variance": 0.05}}]}},
            "operator": {{"kind": "dense", "matrix": [[1, 0]]}},
            "schedule": {{"num_steps": 10}}, "method": "dps", "guidance": {{"zeta": {zeta:e}}},
            "seeds": [0, 1, 2, 3, 4, 5, 6, 7], "output_dir": {out:?}
        }}"#
    );
    parse_config_str(&text, "test").unwrap()
}

fn read_summary(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join(SUMMARY_FILE)).unwrap()).unwrap()
}

#[test]
fn unconditional_run_costs_one_evaluation_per_step() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config(dir.path(), "ddim_unconditional", "");
    c.seeds = vec![4];
    let s = run_experiment(&c).unwrap();
    assert_eq!(s.nfe_per_trajectory.evaluations, 12);
    assert_eq!(s.per_seed[0].nfe, Some(12));
    assert!(dir.path().join("seed_4").join("restored.pgm").is_file());
    assert!(dir.path().join("seed_4").join("truth.pgm").is_file());
}

#[test]
fn spgd_summary_has_every_field() {
    let dir = tempfile::tempdir().unwrap();
    let c = config(dir.path(), "spgd", r#""diagnostics": true,"#);
    let s = run_experiment(&c).unwrap();
    assert_eq!(s.nfe_per_trajectory.evaluations, 12 * 4);
    assert_eq!(s.nfe_per_trajectory.t_times_n, 36);
    assert_eq!(s.failed_seeds, 0);
    for name in ["psnr_db", "ssim", "residual_norm"] {
        let a = &s.aggregate[name];
        assert_eq!(a.count, 3, "{name}");
        assert!(a.mean.is_finite() && a.std >= 0.0, "{name}");
    }
    let v = read_summary(dir.path());
    for key in [
        "config",
        "method",
        "nfe_per_trajectory",
        "per_seed",
        "aggregate",
        "failed_seeds",
        "wall_clock_seconds",
    ] {
        assert!(v.get(key).is_some(), "{key}");
    }
    assert_eq!(v["method"], "spgd");
    assert_eq!(v["per_seed"].as_array().unwrap().len(), 3);
    let csv = fs::read_to_string(dir.path().join("seed_0").join(TRAJECTORY_FILE)).unwrap();
    // header plus one row per inner step of every outer step
    assert_eq!(csv.lines().count(), 1 + 12 * 3);
}

#[test]
fn reruns_match_apart_from_wall_clock() {
    let dir = tempfile::tempdir().unwrap();
    let c = config(dir.path(), "dps", r#""diagnostics": true,"#);
    run_experiment(&c).unwrap();
    let mut first = read_summary(dir.path());
    let csv = fs::read(dir.path().join("seed_2").join(TRAJECTORY_FILE)).unwrap();
    let img = fs::read(dir.path().join("seed_2").join("restored.pgm")).unwrap();
    run_experiment(&c).unwrap();
    let mut second = read_summary(dir.path());
    strip_wall_clock(&mut first);
    strip_wall_clock(&mut second);
    assert_eq!(first, second);
    assert_eq!(csv, fs::read(dir.path().join("seed_2").join(TRAJECTORY_FILE)).unwrap());
    assert_eq!(img, fs::read(dir.path().join("seed_2").join("restored.pgm")).unwrap());
}

#[test]
fn a_failing_seed_is_recorded_and_the_rest_still_run() {
    let dir = tempfile::tempdir().unwrap();
    // a regular file where seed 1's output directory should go
    fs::write(dir.path().join("seed_1"), "occupied").unwrap();
    let s = run_experiment(&two_mode_config(dir.path(), 0.1)).unwrap();
    assert_eq!(s.failed_seeds, 1);
    let bad = &s.per_seed[1];
    assert!(
        !bad.ok && bad.error.as_deref().is_some_and(|e| e.contains("seed_1")),
        "{bad:?}"
    );
    assert!(bad.residual_norm.is_none());
    assert_eq!(s.aggregate["residual_norm"].count, 7);
    assert_eq!(fs::read_to_string(dir.path().join("seed_1")).unwrap(), "occupied");
    // dimension-2 signals are written as text
    assert!(dir.path().join("seed_0").join("restored.txt").is_file());
    assert_eq!(read_summary(dir.path())["per_seed"][1]["ok"], false);
}

#[test]
fn overflowing_seeds_fail_instead_of_reporting_infinities() {
    let dir = tempfile::tempdir().unwrap();
    let err = run_experiment(&two_mode_config(dir.path(), 1e20)).unwrap_err();
    assert!(matches!(err, HarnessError::AllSeedsFailed(8)), "{err}");
    let v = read_summary(dir.path());
    let rows = v["per_seed"].as_array().unwrap();
    assert!(rows.iter().all(|r| r["ok"] == false));
    assert!(
        rows.iter()
            .any(|r| r["error"].as_str().unwrap().contains("residual_norm is inf")),
        "{rows:?}"
    );
}

#[test]
fn every_seed_failing_is_an_error_but_still_writes_the_summary() {
    let dir = tempfile::tempdir().unwrap();
    let err = run_experiment(&two_mode_config(dir.path(), 1e100)).unwrap_err();
    assert!(matches!(err, HarnessError::AllSeedsFailed(8)), "{err}");
    assert_eq!(read_summary(dir.path())["failed_seeds"], 8);
}

#[test]
fn sweep_writes_one_entry_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let c = config(
        dir.path(),
        "spgd",
        r#""sweep": {"momentum_beta": [0.0, 0.9], "warmup_steps": [1, 3]},"#,
    );
    let s = run_sweep(&c).unwrap();
    assert_eq!(s.points.len(), 4);
    let v: Value = serde_json::from_str(&fs::read_to_string(dir.path().join(SWEEP_FILE)).unwrap()).unwrap();
    let points = v["points"].as_array().unwrap();
    assert_eq!(points.len(), 4);
    for p in &s.points {
        assert!(dir.path().join(&p.label).join(SUMMARY_FILE).is_file(), "{}", p.label);
    }
    let evals: Vec<usize> = s.points.iter().map(|p| p.nfe_per_trajectory.evaluations).collect();
    assert!(evals.contains(&24) && evals.contains(&48), "{evals:?}");
}
