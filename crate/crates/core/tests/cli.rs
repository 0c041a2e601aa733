//! The command-line surface: exit codes, artifact files, reproducibility.
//!
//! Exit code contract: 0 success, 1 usage error, 2 runtime error, 3 failed
//! self-check.

use std::fs;
use std::process::{Command, Output};

fn pirrt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pirrt"))
        .args(args)
        .output()
        .expect("binary spawns")
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("not killed by a signal")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn help_exits_zero_and_names_every_subcommand() {
    let out = pirrt(&["--help"]);
    assert_eq!(exit_code(&out), 0);
    let text = stdout(&out);
    for subcommand in ["plan", "montecarlo", "sweep", "check-duality"] {
        assert!(text.contains(subcommand), "--help must mention {subcommand}");
    }
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(exit_code(&pirrt(&["frobnicate"])), 1);
    assert_eq!(exit_code(&pirrt(&["plan", "--no-such-flag"])), 1);
    assert_eq!(exit_code(&pirrt(&["montecarlo", "--trials", "many"])), 1);
}

#[test]
fn runtime_errors_exit_two() {
    assert_eq!(exit_code(&pirrt(&["plan", "--scenario", "nope", "--out", "/tmp/unused"])), 2);
    assert_eq!(exit_code(&pirrt(&["sweep", "--config", "/no/such/file.toml"])), 2);
    assert_eq!(exit_code(&pirrt(&["check-duality", "--rho=-1"])), 2);
}

#[test]
fn check_duality_exit_code_tracks_the_verdict() {
    let pass = pirrt(&["check-duality", "--samples", "5000", "--seed", "0"]);
    assert_eq!(exit_code(&pass), 0);
    assert!(stdout(&pass).contains("verdict: pass"));

    // 100 samples leave far more than 2% Monte Carlo error at this seed.
    let fail = pirrt(&["check-duality", "--samples", "100", "--seed", "0"]);
    assert_eq!(exit_code(&fail), 3);
    assert!(stdout(&fail).contains("verdict: FAIL"));
}

#[test]
fn plan_writes_the_documented_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let out = pirrt(&[
        "plan",
        "--scenario",
        "open",
        "--alpha",
        "0.25",
        "--seed",
        "11",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    for file in ["mission.json", "mission.svg", "executed.csv", "tree_vertices.csv", "tree_edges.csv"]
    {
        let path = out_dir.join(file);
        let meta = fs::metadata(&path).unwrap_or_else(|_| panic!("{file} must exist"));
        assert!(meta.len() > 0, "{file} must not be empty");
    }
    let executed = fs::read_to_string(out_dir.join("executed.csv")).unwrap();
    assert!(executed.starts_with("t,x,y,theta"));
    let mission: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("mission.json")).unwrap()).unwrap();
    assert!(mission.get("outcome").is_some());
}

#[test]
fn montecarlo_prints_the_table_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let (first, second) = (dir.path().join("a"), dir.path().join("b"));
    let run = |out_dir: &std::path::Path| {
        pirrt(&[
            "montecarlo",
            "--scenario",
            "single_slit",
            "--alpha",
            "0.25",
            "--trials",
            "3",
            "--algorithm",
            "rrt",
            "--seed",
            "3",
            "--out",
            out_dir.to_str().unwrap(),
        ])
    };
    let out = run(&first);
    assert_eq!(exit_code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("algorithm,alpha,trials"), "stdout must carry the table");
    assert_eq!(exit_code(&run(&second)), 0);

    let trials_a = fs::read(first.join("trials.csv")).unwrap();
    let trials_b = fs::read(second.join("trials.csv")).unwrap();
    assert_eq!(trials_a, trials_b, "same seed must render the same trials.csv");

    let agg: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(first.join("aggregate.json")).unwrap()).unwrap();
    assert!(agg.to_string().contains("single_slit"));
}

#[test]
fn sweep_runs_a_config_file_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("sweep.toml");
    fs::write(
        &config,
        "scenario = \"single_slit\"\nalgorithms = [\"rrt\"]\nalphas = [0.5]\ntrials = 2\nmaster_seed = 3\n",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = pirrt(&[
        "sweep",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    for file in ["aggregate.csv", "aggregate.json", "trials_rrt_alpha0.5.csv"] {
        assert!(out_dir.join(file).exists(), "{file} must exist");
    }
    let csv = fs::read_to_string(out_dir.join("aggregate.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 2, "header plus one batch row");
    assert!(rows[1].starts_with("rrt,0.5,2,"));
}

#[test]
fn an_environment_file_can_replace_the_preset() {
    let dir = tempfile::tempdir().unwrap();
    let world = dir.path().join("world.toml");
    let built = pirrt_core::Environment::preset("open").unwrap();
    fs::write(&world, built.to_toml_string().unwrap()).unwrap();
    let out_dir = dir.path().join("out");
    let out = pirrt(&[
        "plan",
        "--scenario",
        "ignored-when-file-given",
        "--environment-file",
        world.to_str().unwrap(),
        "--seed",
        "11",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("open"), "the file's world name should be reported");
}
