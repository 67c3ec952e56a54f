use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

use qrowhammer::noise::NoiseModel;

fn qrh(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qrh"))
        .args(args)
        .env_remove("QRH_THREADS")
        .output()
        .expect("qrh runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_map_writes_127_qubits_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    assert_eq!(code(&qrh(&["gen-map", s(&a)])), 0);
    assert_eq!(code(&qrh(&["gen-map", s(&b)])), 0);
    let map = read_json(&a);
    assert_eq!(map["n"], 127);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn unwritable_path_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let o = qrh(&["gen-map", s(&blocker.join("map.json"))]);
    assert_eq!(code(&o), 3);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&qrh(&["hammer", "--basis", "q"])), 1);
    assert_eq!(code(&qrh(&["no-such-command"])), 1);
    assert_eq!(code(&qrh(&["--help"])), 0);
}

#[test]
fn bad_center_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = qrh(&["hammer", "--center", "0", "--shots", "10", "--out", s(dir.path())]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("connector"));
}

#[test]
fn zero_noise_hammer_never_flips() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("zero.json");
    NoiseModel::zero(127).save(&model).unwrap();
    let o = qrh(&["hammer", "--model", s(&model), "--shots", "500", "--out", s(dir.path())]);
    assert_eq!(code(&o), 0);
    let r = read_json(&dir.path().join("hammer.json"));
    assert_eq!(r["hammered"]["flips"], 0);
    assert_eq!(r["baseline"]["flips"], 0);
}

#[test]
fn hammer_z_one_exceeds_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let o = qrh(&["hammer", "--center", "54", "--state", "1", "--out", s(dir.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&dir.path().join("hammer.json"));
    assert!(r["hammered"]["p_flip"].as_f64().unwrap() >= 0.40);
    assert!(r["baseline"]["p_flip"].as_f64().unwrap() <= 0.15);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("hammered") && stdout.contains("baseline"));
}

#[test]
fn hammer_x_saturates_and_control_stays_low() {
    let dir = tempfile::tempdir().unwrap();
    let o = qrh(&["hammer", "--basis", "x", "--state", "0", "--out", s(dir.path())]);
    assert_eq!(code(&o), 0);
    let r = read_json(&dir.path().join("hammer.json"));
    assert!((r["hammered"]["p_flip"].as_f64().unwrap() - 0.498).abs() <= 0.04);
    assert!(r["baseline"]["p_flip"].as_f64().unwrap() <= 0.05);
}

#[test]
fn benign_only_sweep_stays_below_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let o = qrh(&["sweep", "--benign-only", "--cycles", "6", "--shots", "4000", "--out", s(dir.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&dir.path().join("cycle_stats.json"));
    assert!(r["stats"]["hammered"].is_null());
    assert!(r["stats"]["benign"]["max"].as_f64().unwrap() <= 0.30);
    assert_eq!(r["correct"], 6);
    for f in ["sweep.csv", "sweep.svg"] {
        assert!(dir.path().join(f).exists());
    }
}

#[test]
fn sweep_spec_file_and_stats_agree() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    std::fs::write(
        &spec,
        r#"{"center_groups": [[54], [71]], "n_cycles": 4, "rounds": 30, "shots": 2000}"#,
    )
    .unwrap();
    let o = qrh(&["sweep", "--spec", s(&spec), "--out", s(dir.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let svg = dir.path().join("again.svg");
    let table = dir.path().join("sweep.csv");
    let o2 = qrh(&["stats", s(&table), "--spec", s(&spec), "--svg", s(&svg)]);
    assert_eq!(code(&o2), 0, "{}", String::from_utf8_lossy(&o2.stderr));
    assert_eq!(std::fs::read(&svg).unwrap(), std::fs::read(dir.path().join("sweep.svg")).unwrap());
    let a = String::from_utf8_lossy(&o.stdout);
    let b = String::from_utf8_lossy(&o2.stdout);
    assert_eq!(a, b);
}

#[test]
fn covert_ook_single_neighborhood() {
    let dir = tempfile::tempdir().unwrap();
    let o = qrh(&["covert", "--m", "1", "--payload", "a5", "--probe-shots", "400", "--out", s(dir.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&dir.path().join("covert_report.json"));
    assert_eq!(r["report"]["bits_per_round"], 1.0);
    assert_eq!(r["report"]["bit_errors"], 0);
    assert_eq!(r["report"]["bits_sent"], 8);
}

#[test]
fn next_cycle_probe_carries_no_signal() {
    let dir = tempfile::tempdir().unwrap();
    let o = qrh(&[
        "covert",
        "--m",
        "1",
        "--bits",
        "200",
        "--probe-shots",
        "200",
        "--probe-mode",
        "next_cycle",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let ber = read_json(&dir.path().join("covert_report.json"))["report"]["ber"].as_f64().unwrap();
    // No hammer ever reaches the probe, so every 1 is lost: BER is the
    // fraction of ones in the payload.
    assert!((ber - 0.5).abs() < 0.1, "ber {ber}");
}

fn targets(dir: &Path, name: &str, p: f64, tol: f64) -> std::path::PathBuf {
    let path = dir.join(name);
    let t = serde_json::json!({
        "z0_mean": p, "z1_mean": p, "x_mean": p, "benign_max": [p, p],
        "floor": p, "control_max": p, "baseline_max": p, "hammer_max_mean": [p, p],
        "tol_z": tol, "tol_x": tol,
    });
    std::fs::write(&path, t.to_string()).unwrap();
    path
}

#[test]
fn calibrate_zero_targets_gives_zero_model() {
    let dir = tempfile::tempdir().unwrap();
    let t = targets(dir.path(), "zero.json", 0.0, 0.0);
    let model = dir.path().join("model.json");
    let o = qrh(&["calibrate", "--targets", s(&t), "--shots", "200", "--out", s(dir.path()), s(&model)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let m = NoiseModel::load(&model).unwrap();
    assert_eq!(m.crosstalk_z, [0.0, 0.0]);
    assert_eq!(m.p_relax, 0.0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("converged          true"));
}

#[test]
fn calibrate_absurd_targets_exit_two_with_model() {
    let dir = tempfile::tempdir().unwrap();
    let t = targets(dir.path(), "absurd.json", 0.99, 0.001);
    let model = dir.path().join("model.json");
    let o = qrh(&[
        "calibrate",
        "--targets",
        s(&t),
        "--budget",
        "1",
        "--shots",
        "100",
        "--out",
        s(dir.path()),
        s(&model),
    ]);
    assert_eq!(code(&o), 2);
    assert!(NoiseModel::load(&model).is_ok());
}
