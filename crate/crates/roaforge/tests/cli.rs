use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const FAST: &str = r#"{
  "benchmark": "pendulum_a",
  "grid_points": 31,
  "pso": { "particles": 6, "max_iter": 60, "stall_window": 20 },
  "run_count": 2,
  "particle_counts": [6],
  "masses": [0.1, 0.7],
  "grid_sweep_points": [21, 31],
  "simulate": { "angles": [0.3], "duration": 2.0, "recovery_samples": 3 }
}"#;

fn roaforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_roaforge"))
        .args(args)
        .output()
        .unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

fn run_ok(command: &str, config: &str, out: &Path) {
    let o = roaforge(&[command, "--config", config, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{command}: {}", String::from_utf8_lossy(&o.stderr));
}

fn header(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

fn result_without_timestamp(dir: &Path) -> Value {
    let mut v: Value = serde_json::from_slice(&fs::read(dir.join("result.json")).unwrap()).unwrap();
    v.as_object_mut()
        .unwrap()
        .remove("generated_at")
        .expect("generated_at present");
    v
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{ "benchmark": "pendulum_a", "particles": 10 }"#);
    let o = roaforge(&[
        "synth",
        "--config",
        &cfg,
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("particles"));
}

#[test]
fn negative_tau_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{ "benchmark": "pendulum_a", "tau": -1.0 }"#);
    let o = roaforge(&["synth", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("tau"));
}

#[test]
fn missing_config_file_exits_two() {
    let o = roaforge(&["synth", "--config", "/nonexistent/roaforge.json"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_benchmark_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{ "benchmark": "cartpole" }"#);
    assert_eq!(roaforge(&["roa", "--config", &cfg]).status.code(), Some(2));
}

#[test]
fn synth_rerun_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), FAST);
    let out = dir.path().join("out");
    run_ok("synth", &cfg, &out);
    let first = result_without_timestamp(&out);
    let history = fs::read(out.join("synth_history.csv")).unwrap();
    run_ok("synth", &cfg, &out);
    assert_eq!(result_without_timestamp(&out), first);
    assert_eq!(fs::read(out.join("synth_history.csv")).unwrap(), history);
    assert_eq!(
        header(&out.join("synth_history.csv")),
        "iteration,gbest_fitness,cost_term,roa_term"
    );
    assert_eq!(header(&out.join("roa_cells.csv")), "controller,phi,phi_dot");
    assert!(out.join("run.log").exists());
    assert_eq!(first["command"], "synth");
}

#[test]
fn seed_override_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), FAST);
    let out = dir.path().join("out");
    let o = roaforge(&["roa", "--config", &cfg, "--seed", "17", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(result_without_timestamp(&out)["config"]["seed"], 17);
}

#[test]
fn experiment_tables_have_their_headers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), FAST);
    let cases = [
        (
            "compare",
            "compare.csv",
            "particles,controller,pct_cost_increase,pct_roa_increase",
        ),
        ("mass-sweep", "mass_sweep.csv", "mass_kg,roa_cells"),
        ("grid-sweep", "grid_sweep.csv", "points_per_dim,roa_cells,seconds"),
        ("simulate", "simulate_0.csv", "time_s,phi,phi_dot,u,controller"),
    ];
    for (command, file, expected) in cases {
        let out = dir.path().join(command);
        run_ok(command, &cfg, &out);
        assert_eq!(header(&out.join(file)), expected, "{command}");
        assert_eq!(result_without_timestamp(&out)["command"], command);
    }
}

#[test]
fn neural_roa_writes_a_decodable_net() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{ "benchmark": "pendulum_a", "grid_points": 21, "candidate": "neural",
             "neural": { "hidden": [4, 4], "epochs": 2 } }"#,
    );
    let out = dir.path().join("out");
    run_ok("roa", &cfg, &out);
    let bytes = fs::read(out.join("net.bin")).unwrap();
    let net = roaforge::core::nn::decode(&bytes).unwrap();
    assert_eq!(net.dims(), &[2, 4, 4]);
}
