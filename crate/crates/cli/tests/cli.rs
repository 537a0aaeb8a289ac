use std::fs;
use std::process::Command;

fn steinseq() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_steinseq"));
    c.env_remove("STEINSEQ_WORKERS");
    c
}

#[test]
fn validate_graph_reports_disconnected_substitutions() {
    let out = steinseq()
        .args(["validate-graph", "--spec", r#"{"kind":"zs_sub","J":"inf"}"#, "--m", "2", "--lmax", "4"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("strongly_connected: false"), "{text}");
}

#[test]
fn validate_graph_connected_zs() {
    let out = steinseq().args(["validate-graph", "--spec", r#"{"kind":"zs","J":1}"#, "--m", "3", "--lmax", "4"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8(out.stdout).unwrap().contains("strongly_connected: true"));
}

#[test]
fn missing_config_exits_2() {
    let out = steinseq().args(["run", "--config", "/definitely/not/here.json"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_config_field_exits_2_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"scenario":"mrf","trials":1,"out":"o.csv","sweep":[9.0]}"#).unwrap();
    let out = steinseq().args(["run", "--config", cfg.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("sweep[0]"));
    fs::write(&cfg, r#"{"scenario":"mrf","trials":1,"out":"o.csv","methods":[]}"#).unwrap();
    let out = steinseq().args(["run", "--config", cfg.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("no methods configured"));
}

#[test]
fn scenario_list_and_show() {
    let out = steinseq().args(["scenario", "list"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 17);
    let out = steinseq().args(["scenario", "show", "binary_iid"]).output().unwrap();
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["spec"]["n"], 10);
    let out = steinseq().args(["scenario", "show", "nope"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

fn run_with_workers(dir: &std::path::Path, workers: usize) -> Vec<u8> {
    let out = dir.join(format!("w{workers}.csv"));
    let cfg = serde_json::json!({
        "scenario": "second_order_mixture",
        "sweep": [2.0, 20.0],
        "methods": [
            {"method": "ksd_param", "B": 20},
            {"method": "ksd_wild", "B": 50},
            {"method": {"mmd_param": {"n_model": 20}}, "B": 20},
            {"method": {"lr_markov": {"order": 2}}, "B": 20}
        ],
        "trials": 6,
        "seed": 17,
        "workers": workers,
        "out": out,
    });
    let path = dir.join(format!("w{workers}.json"));
    fs::write(&path, cfg.to_string()).unwrap();
    let status = steinseq().args(["run", "--config", path.to_str().unwrap()]).status().unwrap();
    assert_eq!(status.code(), Some(0));
    fs::read(out).unwrap()
}

#[test]
fn run_is_byte_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let one = run_with_workers(dir.path(), 1);
    let eight = run_with_workers(dir.path(), 8);
    assert_eq!(one, eight);
    assert_eq!(String::from_utf8(one).unwrap().lines().count(), 9);
}

#[test]
fn power_writes_wilson_intervals_and_plot_reads_back() {
    let dir = tempfile::tempdir().unwrap();
    let out = steinseq()
        .args(["power", "--scenario", "binary_iid", "--trials", "20", "--seed", "1", "--out"])
        .arg(dir.path())
        .args(["--methods", r#"[{"method":"lr_oracle","B":50}]"#])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("binary_iid.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    let (k, n): (usize, usize) = (row[8].parse().unwrap(), row[7].parse().unwrap());
    let (lo, hi): (f64, f64) = (row[10].parse().unwrap(), row[11].parse().unwrap());
    // Wilson score interval, written out independently.
    let z = 1.959963984540054f64;
    let p = k as f64 / n as f64;
    let nf = n as f64;
    let centre = (p + z * z / (2.0 * nf)) / (1.0 + z * z / nf);
    let half = z * ((p * (1.0 - p) + z * z / (4.0 * nf)) / nf).sqrt() / (1.0 + z * z / nf);
    assert!((lo - (centre - half).max(0.0)).abs() < 1e-12 && (hi - (centre + half).min(1.0)).abs() < 1e-12);

    let svg = dir.path().join("p.svg");
    let status = steinseq()
        .args(["plot", "--csv"])
        .arg(dir.path().join("binary_iid.csv"))
        .args(["--x", "n", "--out"])
        .arg(&svg)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    assert!(fs::read_to_string(svg).unwrap().contains("<polyline"));
}

#[test]
fn workers_env_var_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let out = steinseq()
        .env("STEINSEQ_WORKERS", "2")
        .args(["power", "--scenario", "binary_iid", "--trials", "2", "--out"])
        .arg(dir.path())
        .args(["--methods", r#"[{"method":"lr_oracle","B":5}]"#])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
}
