use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::{json, Value};
use sqzadapt_core::ProtocolConfig;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sqzadapt"))
}

fn small_single() -> Value {
    let mut c = ProtocolConfig::single(0.8, 0.8).with_budget(600, 100);
    c.particles = 500;
    serde_json::to_value(c).unwrap()
}

fn write_config(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn run(args: &[&str], envs: &[(&str, &str)]) -> std::process::Output {
    let mut cmd = bin();
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn read_rows(dir: &Path) -> Vec<csv::StringRecord> {
    let mut rdr = csv::Reader::from_path(dir.join("report.csv")).unwrap();
    rdr.records().map(Result::unwrap).collect()
}

fn column(dir: &Path, name: &str) -> usize {
    let mut rdr = csv::Reader::from_path(dir.join("report.csv")).unwrap();
    rdr.headers().unwrap().iter().position(|h| h == name).unwrap()
}

fn phase_sweep(dir: &Path) -> PathBuf {
    let phases: Vec<f64> = (0..10).map(|k| (k as f64 + 0.5) * std::f64::consts::PI / 10.0).collect();
    let v = json!({
        "kind": "phase-sweep",
        "protocols": [small_single()],
        "truth": {"squeezing": 0.8, "efficiency": 0.8},
        "grids": {"phases": phases},
        "repetitions": 10,
        "base_seed": 5,
    });
    write_config(dir, "sweep.json", &v)
}

#[test]
fn phase_sweep_row_accounting() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = phase_sweep(tmp.path());
    let out = tmp.path().join("out");
    let o = run(&["sweep-phase", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_rows(&out);
    let kind = column(&out, "row_kind");
    assert_eq!(rows.iter().filter(|r| &r[kind] == "run").count(), 100);
    assert_eq!(rows.iter().filter(|r| &r[kind] == "aggregate").count(), 10);
    let meta: Value = serde_json::from_str(&std::fs::read_to_string(out.join("meta.json")).unwrap()).unwrap();
    assert_eq!(meta["rows"], 110);
    assert_eq!(meta["schema_version"], 1);
    assert_eq!(meta["base_seed"], 5);
}

#[test]
fn worker_count_does_not_change_report() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = phase_sweep(tmp.path());
    let mut reports = Vec::new();
    for threads in ["1", "4", "8"] {
        let out = tmp.path().join(format!("out{threads}"));
        let o = run(
            &["sweep-phase", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()],
            &[("SQZADAPT_THREADS", threads)],
        );
        assert!(o.status.success());
        reports.push(std::fs::read(out.join("report.csv")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
    assert_eq!(reports[0], reports[2]);
}

#[test]
fn bad_thread_setting_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = phase_sweep(tmp.path());
    let o = run(&["sweep-phase", "--config", cfg.to_str().unwrap()], &[("SQZADAPT_THREADS", "zero")]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bounds_single_row() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("b");
    let o = run(&["bounds", "--r", "0.8", "--eta", "0.8", "--out", out.to_str().unwrap()], &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_rows(&out);
    assert_eq!(rows.len(), 1);
    let qcrb: f64 = rows[0][column(&out, "qcrb_phase_squeezed")].parse().unwrap();
    let coh: f64 = rows[0][column(&out, "qcrb_phase_coherent")].parse().unwrap();
    let f_eff = sqzadapt_core::geometry::effective_phase_qfi(0.8, 0.8).unwrap();
    assert!((qcrb * f_eff - 1.0).abs() < 1e-12);
    assert!((coh - 1.0 / (4.0 * 0.8f64.sinh().powi(2))).abs() < 1e-12);
    assert!((coh - 0.3170).abs() < 1e-4);
    assert_eq!(&rows[0][column(&out, "row_kind")], "bounds");
}

#[test]
fn bounds_with_mode_and_budget() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("b");
    let o = run(
        &["bounds", "--r", "0.8", "--eta", "0.8", "--m", "20000", "--mode", "two-param", "--out", out.to_str().unwrap()],
        &[],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_rows(&out);
    let crb: f64 = rows[0][column(&out, "crb_phase_adaptive")].parse().unwrap();
    let qcrb: f64 = rows[0][column(&out, "qcrb_phase_squeezed")].parse().unwrap();
    assert!(crb > qcrb && crb < 2.0 * qcrb);
    let o = run(&["bounds", "--r", "0.8"], &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_then_replay_reproduces_estimates() {
    let tmp = tempfile::tempdir().unwrap();
    let v = json!({
        "kind": "replay",
        "protocols": [small_single()],
        "truth": {"phase": 1.2, "squeezing": 0.8, "efficiency": 0.8},
        "base_seed": 11,
    });
    let cfg = write_config(tmp.path(), "run.json", &v);
    let (sim, rep) = (tmp.path().join("sim"), tmp.path().join("rep"));
    let raw = sim.join("raw_runs.csv");
    let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "--emit-raw", "--out", sim.to_str().unwrap()], &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = run(
        &["replay", "--data", raw.to_str().unwrap(), "--config", cfg.to_str().unwrap(), "--out", rep.to_str().unwrap()],
        &[],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (a, b) = (read_rows(&sim), read_rows(&rep));
    for name in ["phase_estimate", "posterior_variance", "samples"] {
        let (ia, ib) = (column(&sim, name), column(&rep, name));
        assert_eq!(a[0][ia], b[0][ib], "{name}");
    }

    // a tampered LO phase no longer matches the schedule
    let text = std::fs::read_to_string(&raw).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let fields: Vec<&str> = lines[400].split(',').collect();
    let theta: f64 = fields[1].parse::<f64>().unwrap() + 1e-3;
    lines[400] = format!("{},{},{}", fields[0], theta, fields[2]);
    std::fs::write(&raw, lines.join("\n") + "\n").unwrap();
    let o = run(&["replay", "--data", raw.to_str().unwrap(), "--config", cfg.to_str().unwrap(), "--out", rep.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn ingest_error_cites_line() {
    let tmp = tempfile::tempdir().unwrap();
    let v = json!({
        "kind": "replay",
        "protocols": [small_single()],
        "truth": {"phase": 1.2, "squeezing": 0.8, "efficiency": 0.8},
    });
    let cfg = write_config(tmp.path(), "run.json", &v);
    let mut text = String::from("stage,theta_rad,x\n");
    for k in 0..10 {
        text += if k == 5 { "rough,0,NaN\n" } else { "rough,0,0.1\n" };
    }
    let raw = tmp.path().join("raw.csv");
    std::fs::write(&raw, text).unwrap();
    let o = run(&["replay", "--data", raw.to_str().unwrap(), "--config", cfg.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 7"));
}

#[test]
fn malformed_or_mismatched_config_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, "{\"kind\": \"phase-sweep\", \"protocols\": [").unwrap();
    let o = run(&["sweep-phase", "--config", bad.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(2));
    let cfg = phase_sweep(tmp.path());
    let o = run(&["scaling", "--config", cfg.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(2));
    let v = json!({
        "kind": "phase-sweep",
        "protocols": [small_single()],
        "truth": {"squeezing": 0.8, "efficiency": 0.8},
        "grids": {"phases": []},
    });
    let cfg = write_config(tmp.path(), "empty.json", &v);
    let o = run(&["sweep-phase", "--config", cfg.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn scaling_reports_each_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let v = json!({
        "kind": "scaling",
        "protocols": [small_single()],
        "truth": {"phase": 0.7, "squeezing": 0.8, "efficiency": 0.8},
        "grids": {"checkpoints": [150, 300, 600]},
        "repetitions": 4,
    });
    let cfg = write_config(tmp.path(), "s.json", &v);
    let out = tmp.path().join("out");
    let o = run(&["scaling", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_rows(&out);
    let (kind, m) = (column(&out, "row_kind"), column(&out, "samples"));
    let aggs: Vec<&str> = rows.iter().filter(|r| &r[kind] == "aggregate").map(|r| r.get(m).unwrap()).collect();
    assert_eq!(aggs, ["150", "300", "600"]);
    assert_eq!(rows.len(), 15);
}
