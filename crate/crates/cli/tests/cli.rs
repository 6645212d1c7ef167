//! End-to-end behaviour of the `pxp` binary.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn pxp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pxp")).args(args).output().expect("pxp runs")
}

fn run_in(dir: &Path, cmd: &str, flags: &[&str]) -> Output {
    let d = dir.to_string_lossy().into_owned();
    let mut args = vec![cmd, "--out-dir", d.as_str()];
    args.extend_from_slice(flags);
    pxp(&args)
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn basis_dump_is_stamped_with_the_manifest_hash() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_in(tmp.path(), "basis", &["--n", "6", "--bc", "obc", "--dump"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let m = manifest(tmp.path());
    assert_eq!(m["manifestVersion"], 1);
    assert_eq!(m["command"], "basis");
    assert_eq!(m["dimension"], 21);
    let hash = m["configHash"].as_str().unwrap();
    let text = std::fs::read_to_string(tmp.path().join("basis.csv")).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# pxp "));
    assert_eq!(lines.next().unwrap(), format!("# manifest-hash sha256:{hash}"));
    // header plus one row per configuration
    assert_eq!(lines.count(), 22);
    assert_eq!(m["outputs"], serde_json::json!(["basis.csv"]));
}

#[test]
fn flags_override_the_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"n": 8, "gamma": 0.1, "tMax": 2.0, "gridStep": 0.5, "nTraj": 3, "masterSeed": 9}"#).unwrap();
    let out = run_in(
        &tmp.path().join("run"),
        "random-mon",
        &["--config", &cfg.to_string_lossy(), "--gamma", "0.3", "--seed", "4"],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let m = manifest(&tmp.path().join("run"));
    let c = &m["config"];
    assert_eq!(c["n"], 8);
    assert_eq!(c["gamma"], 0.3);
    assert_eq!(c["masterSeed"], 4);
    assert_eq!(c["nTraj"], 3);
    assert_eq!(m["trajectories"].as_array().unwrap().len(), 3);
    assert_eq!(m["status"], "ok");
    let entropy = std::fs::read_to_string(tmp.path().join("run/entropy.csv")).unwrap();
    assert_eq!(entropy.lines().nth(2).unwrap(), "time,mean,stderr");
    assert_eq!(entropy.lines().count(), 3 + 5);
}

#[test]
fn odd_chain_with_neel_start_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_in(tmp.path(), "random-mon", &["--n", "9", "--n-traj", "2", "--t-max", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("initial: neel requires even N, got N = 9"), "{}", stderr(&out));
    let ok = run_in(tmp.path(), "random-mon", &["--n", "9", "--initial", "unif", "--n-traj", "2", "--t-max", "1"]);
    assert!(ok.status.success(), "{}", stderr(&ok));
}

#[test]
fn exit_codes_are_distinct() {
    let tmp = tempfile::tempdir().unwrap();
    let config = run_in(tmp.path(), "random-mon", &["--n", "8", "--threads", "0"]);
    assert_eq!(config.status.code(), Some(2), "{}", stderr(&config));
    let bad_file = run_in(tmp.path(), "scars", &["--config", "/nonexistent/cfg.json"]);
    assert_eq!(bad_file.status.code(), Some(2));
    let capacity = run_in(tmp.path(), "scars", &["--n", "30"]);
    assert_eq!(capacity.status.code(), Some(3), "{}", stderr(&capacity));
    let dead = run_in(tmp.path(), "velocity", &["--n", "8", "--period", "1e-8", "--site", "0", "--outcome", "down"]);
    assert_eq!(dead.status.code(), Some(5), "{}", stderr(&dead));
    let obc_scars = run_in(tmp.path(), "scars", &["--n", "10", "--bc", "obc"]);
    assert_eq!(obc_scars.status.code(), Some(2));
}

#[test]
fn fss_reads_a_steady_state_table() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("table.csv");
    let mut text = String::from("# synthetic\nN,gamma,S,S_err,stationary\n");
    for n in [12, 16, 20, 24] {
        text += &format!("{n},0,9.9,0.01,false\n");
        for k in 1..=12 {
            let g = 0.002 * k as f64;
            let s = 0.1 * n as f64 - ((g - 0.013) * (n as f64).powf(1.0 / 0.56)).tanh();
            text += &format!("{n},{g},{s},0.01,true\n");
        }
    }
    std::fs::write(&data, text).unwrap();
    let out = run_in(tmp.path(), "fss", &["--data", &data.to_string_lossy(), "--nboot", "4"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let fit: Value = serde_json::from_str(&std::fs::read_to_string(tmp.path().join("fss.json")).unwrap()).unwrap();
    assert!((fit["gamma_c"].as_f64().unwrap() - 0.013).abs() < 1e-4, "{fit}");
    let results = &manifest(tmp.path())["results"];
    assert_eq!(results["rows"], 48);
    // fewer than 100 replicas: error bars are not trusted
    assert_eq!(results["errorsValid"], false);
}

#[test]
fn rerun_from_manifest_reproduces_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let first = tmp.path().join("a");
    let out = run_in(&first, "periodic-mon", &["--n", "8", "--mode", "born", "--n-periods", "3", "--n-traj", "5"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let second = tmp.path().join("b");
    let m = first.join("manifest.json");
    let out = run_in(&second, "periodic-mon", &["--config", &m.to_string_lossy()]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(manifest(&first)["configHash"], manifest(&second)["configHash"]);
    for name in ["fidelity.csv", "entropy.csv", "measurements.csv"] {
        assert_eq!(std::fs::read(first.join(name)).unwrap(), std::fs::read(second.join(name)).unwrap(), "{name}");
    }
}
