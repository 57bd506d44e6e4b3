use std::path::Path;
use std::process::{Command, Output};

fn spgd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spgd")).args(args).output().unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("run.json");
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

const RUN: &str = r#"{
    "prior": {"kind": "gmm", "components": [{"weight": 1.0, "mean": [0.5, -0.5, 0.0], "variance": 0.1}]},
    "operator": {"kind": "dense", "matrix": [[1, 0, 0], [0, 1, 1]]},
    "schedule": {"num_steps": 8},
    "guidance": {"zeta": 0.3, "warmup_steps": 2},
    "method": "spgd",
    "seeds": [0],
    "output_dir": "out"
}"#;

#[test]
fn run_writes_outputs_relative_to_the_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), RUN);
    let out = dir.path().join("results");
    let o = spgd(&[
        "run",
        &cfg,
        "--out-dir",
        out.to_str().unwrap(),
        "--seeds",
        "3..6",
        "--quiet",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(o.stdout.is_empty());
    for s in 3..6 {
        assert!(out.join(format!("seed_{s}")).is_dir(), "seed {s}");
    }
    assert!(out.join("summary.json").is_file());
}

#[test]
fn bad_configs_exit_with_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &RUN.replace("\"method\"", "\"metod\": 1, \"method\""));
    let o = spgd(&["run", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("metod"));

    let cfg = write_config(dir.path(), &RUN.replace("[0]", "[0, 0]"));
    assert_eq!(spgd(&["run", &cfg]).status.code(), Some(1));
    assert_eq!(spgd(&["run", "/nonexistent/run.json"]).status.code(), Some(1));
    let cfg = write_config(dir.path(), RUN);
    assert_eq!(spgd(&["sweep", &cfg]).status.code(), Some(1));
}

#[test]
fn all_seeds_failing_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &RUN.replace("0.3", "1e100"));
    let out = dir.path().join("o");
    let o = spgd(&["run", &cfg, "--out-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stderr).contains("seeds failed"));
}

#[test]
fn sweep_axes_from_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), RUN);
    let out = dir.path().join("sw");
    let o = spgd(&[
        "sweep",
        &cfg,
        "--out-dir",
        out.to_str().unwrap(),
        "--beta",
        "0,0.5",
        "--steps",
        "4,6",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8_lossy(&o.stdout);
    assert_eq!(text.lines().filter(|l| l.contains("nfe")).count(), 4, "{text}");
    assert!(out.join("sweep.json").is_file());
}

#[test]
fn check_runs_selected_criteria() {
    let o = spgd(&["check", "--criterion", "9"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(
        text.contains("[PASS]") && text.contains("1/1 criteria passed"),
        "{text}"
    );
    assert_eq!(spgd(&["check", "--criterion", "11"]).status.code(), Some(1));
}

#[test]
fn malformed_seed_list_is_a_usage_error() {
    let o = spgd(&["run", "x.json", "--seeds", "1,a"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("seed"));
}

#[test]
fn shipped_configs_parse_and_run() {
    let dir = tempfile::tempdir().unwrap();
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for entry in std::fs::read_dir(&configs).unwrap() {
        let path = entry.unwrap().path();
        let cfg = spgd_harness::config::parse_config(&path).unwrap();
        let name = path.file_stem().unwrap().to_str().unwrap();
        let out = dir.path().join(name);
        let sub = if cfg.sweep.is_some() { "sweep" } else { "run" };
        let o = spgd(&[
            sub,
            path.to_str().unwrap(),
            "--out-dir",
            out.to_str().unwrap(),
            "--seeds",
            "0",
            "--quiet",
        ]);
        assert_eq!(
            o.status.code(),
            Some(0),
            "{name}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
}
