use std::fs;
use std::path::Path;
use std::process::Command;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use sap_core::analysis::FidelityMap;
use sap_core::{transfer_fidelity, HshParams, SapTemplate, SolverOptions};

fn sap(dir: &Path, command: &str, config: &Value, extra: &[&str]) -> i32 {
    let cfg = dir.join(format!("{command}.json"));
    fs::write(&cfg, serde_json::to_string_pretty(config).unwrap()).unwrap();
    let out = dir.join("out");
    let status = Command::new(env!("CARGO_BIN_EXE_sap"))
        .arg(command)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(extra)
        .status()
        .unwrap();
    status.code().unwrap()
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join("out").join(name)).unwrap()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&read(dir, "manifest.json")).unwrap()
}

/// Two-tone profile on the duration axis at τ = 6.
fn pulse_block() -> Value {
    json!({
        "omega_max": 2.0,
        "edge_shape": 0.35,
        "edge_rate": 1.2,
        "linear_rate": 0.7,
        "edge_duration": 1.0,
        "total_duration": 6.0,
        "n_components": 2
    })
}

fn sweep_config(points: usize) -> Value {
    json!({
        "pulse": pulse_block(),
        "detuning": { "lo": -4.0, "hi": 4.0, "points": points }
    })
}

#[test]
fn sweep_writes_rows_matching_the_solver() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(sap(dir.path(), "sweep", &sweep_config(3), &[]), 0);
    let csv = read(dir.path(), "result.csv");
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "delta_rad_per_us,fidelity");
    assert_eq!(lines.len(), 4, "header plus one row per detuning");
    assert!(!csv.contains('\r'));

    let p = HshParams::with_total_duration(2.0, 0.35, 1.2, 0.7, 1.0, 6.0).unwrap();
    let pulse = SapTemplate::new(2).build(&p).unwrap();
    for (line, d) in lines[1..].iter().zip([-4.0, 0.0, 4.0]) {
        let mut fields = line.split(',');
        assert_eq!(fields.next().unwrap().parse::<f64>().unwrap(), d);
        let f: f64 = fields.next().unwrap().parse().unwrap();
        assert_eq!(
            f,
            transfer_fidelity(&pulse, d, &SolverOptions::default()).unwrap()
        );
    }

    let m = manifest(dir.path());
    assert_eq!(m["status"], "ok");
    assert_eq!(m["failures"], 0);
    for entry in m["outputs"].as_array().unwrap() {
        let body = read(dir.path(), entry["file"].as_str().unwrap());
        assert_eq!(
            entry["sha256"],
            hex::encode(Sha256::digest(body.as_bytes()))
        );
    }
}

#[test]
fn json_result_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(sap(dir.path(), "sweep", &sweep_config(5), &[]), 0);
    let text = read(dir.path(), "result.json");
    let map: FidelityMap = serde_json::from_str(&text).unwrap();
    assert_eq!(map.detuning_grid.len(), 5);
    assert_eq!(sap_cli::emit::to_json(&map).unwrap(), text);
}

#[test]
fn identical_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut cfg = sweep_config(7);
    cfg["pulse"]["n_components"] = json!(3);
    cfg["pulse"]["phases"] = json!({ "policy": "random" });
    assert_eq!(sap(a.path(), "sweep", &cfg, &["--seed", "5"]), 0);
    assert_eq!(
        sap(b.path(), "sweep", &cfg, &["--seed", "5", "--workers", "1"]),
        0
    );
    for name in ["result.csv", "result.json"] {
        assert_eq!(read(a.path(), name), read(b.path(), name));
    }
    let c = tempfile::tempdir().unwrap();
    assert_eq!(sap(c.path(), "sweep", &cfg, &["--seed", "6"]), 0);
    assert_ne!(read(a.path(), "result.csv"), read(c.path(), "result.csv"));
}

#[test]
fn negative_edge_shape_is_a_physics_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = sweep_config(3);
    cfg["pulse"]["edge_shape"] = json!(-0.35);
    assert_eq!(sap(dir.path(), "sweep", &cfg, &[]), 3);
    let out = dir.path().join("out");
    assert!(!out.join("result.csv").exists());
    assert!(!out.join("result.json").exists());
    let m = manifest(dir.path());
    assert_eq!(m["status"], "error");
    assert_eq!(m["error"]["exit_code"], 3);
}

#[test]
fn failed_run_removes_stale_data() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(sap(dir.path(), "sweep", &sweep_config(3), &[]), 0);
    assert_eq!(
        sap(
            dir.path(),
            "sweep",
            &sweep_config(3),
            &["--set", "pulse.total_duration=1.5"]
        ),
        3
    );
    assert!(!dir.path().join("out/result.csv").exists());
}

#[test]
fn schema_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = sweep_config(3);
    cfg["pulse"]["colour"] = json!("red");
    assert_eq!(sap(dir.path(), "sweep", &cfg, &[]), 2);
    assert_eq!(
        sap(
            dir.path(),
            "sweep",
            &sweep_config(3),
            &["--set", "detuning.points=0"]
        ),
        2
    );
    assert_eq!(
        sap(dir.path(), "suture", &sweep_config(3), &[]),
        2,
        "missing suture block"
    );
    let mut wrong = sweep_config(3);
    wrong["command"] = json!("suture");
    assert_eq!(sap(dir.path(), "sweep", &wrong, &[]), 2);
    assert_eq!(manifest(dir.path())["error"]["category"], "schema");
}

#[test]
fn overrides_are_applied_and_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let code = sap(
        dir.path(),
        "sweep",
        &sweep_config(3),
        &[
            "--set",
            "detuning.points=4",
            "--set",
            "pulse.n_components=1",
        ],
    );
    assert_eq!(code, 0);
    assert_eq!(read(dir.path(), "result.csv").lines().count(), 5);
    let m = manifest(dir.path());
    assert_eq!(
        m["overrides"],
        json!(["detuning.points=4", "pulse.n_components=1"])
    );
    assert_eq!(m["config"]["pulse"]["n_components"], 1);
    assert_eq!(m["config"]["command"], "sweep");
}

#[test]
fn solver_failure_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "pulse": pulse_block(),
        "solver": { "fixed_steps": 3 },
        "phase_average": { "detuning": 0.0, "samples": 2 }
    });
    assert_eq!(sap(dir.path(), "phase-average", &cfg, &[]), 4);
    assert!(!dir.path().join("out/result.json").exists());
}

#[test]
fn suture_series_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "pulse": {
            "omega_max": 3.0, "edge_shape": 0.4, "edge_rate": 1.5, "linear_rate": 2.0,
            "edge_duration": 0.5, "center_duration": 5.0, "n_components": 2
        },
        "suture": { "terms": 10 }
    });
    assert_eq!(sap(dir.path(), "suture", &cfg, &[]), 0);
    let csv = read(dir.path(), "result.csv");
    assert_eq!(csv.lines().next().unwrap(), "k,term_rad,partial_sum_rad");
    assert_eq!(csv.lines().count(), 12);
    let v: Value = serde_json::from_str(&read(dir.path(), "result.json")).unwrap();
    let f = v["suture_fidelity"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&f));
}

#[test]
fn degenerate_optimization_and_boundary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "pulse": { "omega_max": 3.0, "edge_duration": 0.5, "total_duration": 4.0, "n_components": 2 },
        "optimize": {
            "bounds": {
                "edge_shape": { "lo": 0.3, "hi": 0.3 },
                "edge_rate": { "lo": 1.0, "hi": 1.0 },
                "linear_rate": { "lo": 0.5, "hi": 0.5 }
            },
            "objective": { "kind": "suture_point" }
        },
        "boundary": {
            "axis": "duration",
            "values": { "values": [3.0, 4.0] },
            "widths": { "values": [1.0, 2.0] }
        }
    });
    assert_eq!(sap(dir.path(), "optimize", &cfg, &[]), 0);
    let v: Value = serde_json::from_str(&read(dir.path(), "result.json")).unwrap();
    assert_eq!(v["result"]["evaluations"], 1);
    assert_eq!(v["result"]["converged"], true);

    let mut b = cfg.clone();
    b["optimize"]["objective"] = json!({ "kind": "band_average", "points_per_rabi": 2.0 });
    b["optimize"]["bounds"]["linear_rate"] = json!({ "lo": 0.01, "hi": 10.0 });
    b["optimize"]["settings"] =
        json!({ "coarse_points": 2, "refine_budget": 4, "tolerance": 1e-3 });
    assert_eq!(sap(dir.path(), "boundary", &b, &[]), 0);
    let csv = read(dir.path(), "result.csv");
    assert_eq!(
        csv.lines().next().unwrap(),
        "bandwidth_rad_per_us,duration_us"
    );
    assert_eq!(csv.lines().count(), 3);
}
