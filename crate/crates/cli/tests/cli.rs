use std::path::Path;
use std::process::{Command, Output};

fn edgelab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_edgelab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn validate_reports_constant() {
    let o = edgelab(&["validate", "--scenario", "random-elliptic", "--n", "40"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v["constant"].as_f64().unwrap() >= 1.0);
}

#[test]
fn oracle_csv_sums_to_one() {
    let o = edgelab(&["oracle", "--scenario", "fair-coin", "--n", "10"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("k,probability"));
    let total: f64 = lines.map(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-12);
}

#[test]
fn chain_file_and_pins() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("chain.json");
    let spec = edgelab::ChainSpec::homogeneous(&[0.5, 0.5], &[vec![0.7, 0.3], vec![0.2, 0.8]], &[0, 1], 6).unwrap();
    std::fs::write(&path, spec.to_json_string()).unwrap();
    let p = path.to_str().unwrap();
    let o = edgelab(&["oracle", "--spec", p, "--pin", "3:1", "--format", "json", "--modulus", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["residues"]["m"], 2);
    let o = edgelab(&["expand", "--spec", p, "--order", "2"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["r"], 2);
}

#[test]
fn rpf_and_resonance_outputs() {
    let o = edgelab(&["rpf", "--scenario", "random-elliptic", "--n", "30"]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("j,primal_residual,dual_residual"));
    let o = edgelab(&["resonance", "--scenario", "sparse-odd-0.5", "--n", "50", "--format", "csv"]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("n,m,m_n,q_n"));
}

#[test]
fn experiment_exit_codes_and_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = edgelab(&["experiment", "llt-order-1", "--scenario", "random-elliptic", "--ladder", "32,128", "--out-dir", out]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["metrics.csv", "table.csv", "verdicts.json", "plot.svg", "report.json"] {
        assert!(Path::new(out).join(format!("llt-order-1_random-elliptic_{f}")).exists(), "{f}");
    }

    let o = edgelab(&["experiment", "llt-order-1", "--scenario", "even-lattice", "--ladder", "32,128"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("FAIL"));

    let o = edgelab(&["experiment", "llt-order-1", "--scenario", "no-such-scenario"]);
    assert_eq!(o.status.code(), Some(1));
    let o = edgelab(&["experiment", "bogus", "--scenario", "fair-coin"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn config_file_and_report_rerender() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("params.json");
    std::fs::write(&cfg, r#"{"order": 2, "seed": 3}"#).unwrap();
    let out = dir.path().join("out");
    let o = edgelab(&[
        "experiment",
        "necessity",
        "--scenario",
        "sparse-odd-0.5",
        "--ladder",
        "32,128",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
        "--format",
        "json",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let verdicts = out.join("necessity_sparse-odd-0.5_verdicts.json");
    let first = std::fs::read(&verdicts).unwrap();
    let doc: serde_json::Value = serde_json::from_slice(&first).unwrap();
    assert_eq!(doc["order"], 2);

    let again = dir.path().join("again");
    let o = edgelab(&[
        "report",
        "--input",
        out.join("necessity_sparse-odd-0.5_report.json").to_str().unwrap(),
        "--out-dir",
        again.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(std::fs::read(again.join("necessity_sparse-odd-0.5_verdicts.json")).unwrap(), first);
    assert!(again.join("necessity_sparse-odd-0.5_plot.svg").exists());
}

#[test]
fn unreadable_config_is_an_error() {
    let o = edgelab(&["experiment", "rpf", "--config", "/nonexistent/params.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/params.json"));
}
