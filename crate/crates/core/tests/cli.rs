use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn mistfog(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mistfog")).args(args).arg("--out").arg(out).output().expect("binary runs")
}

fn report(out: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
}

fn small_config(dir: &Path, count: usize, stddev: Option<f64>) -> String {
    let mut text = mistfog::config::TABLE2_CFG.replace("count = 10000", &format!("count = {count}"));
    if let Some(sd) = stddev {
        for old in ["4.0", "8.0", "2.0", "6.0", "1.0"] {
            text = text.replace(&format!("stddev = {old}"), &format!("stddev = {sd}"));
        }
    }
    let path = dir.join("scenario.cfg");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn filter_constant_stream_report() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), 1000, Some(0.0));
    let out = tmp.path().join("out");
    let o = mistfog(&["filter", "--config", &cfg, "--n", "10", "--p", "0.05"], &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    let s1 = &r["sensors"]["S1"]["error"];
    assert_eq!(s1["transmitted_count"], 10);
    assert_eq!(s1["reduction_percent"].as_f64(), Some(99.0));
    assert_eq!(s1["avg_error"].as_f64(), Some(0.0));
    assert_eq!(s1["max_error"].as_f64(), Some(0.0));
    for i in 1..=6 {
        let plot = std::fs::read_to_string(out.join(format!("plots/S{i}.csv"))).unwrap();
        assert_eq!(plot.lines().count(), 1001);
    }
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("S1: 10/1000 transmitted"), "{stdout}");
}

#[test]
fn simulate_outputs_comparison() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), 500, None);
    let out = tmp.path().join("out");
    let o = mistfog(&["simulate", "--config", &cfg, "--quiet"], &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(o.stdout.is_empty());
    let r = report(&out);
    assert_eq!(r["command"], "simulate");
    assert!(r["comparison"]["rows"]["network_bytes"]["reduction_percent"].as_f64().unwrap() > 0.0);
    assert!(r["comparison"]["rows"]["cloud_energy_j"]["reduction_percent"].as_f64().unwrap() > 0.0);
    for f in ["report.json", "config.resolved.cfg", "sensors.csv", "links.csv", "comparison.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    assert!(!out.join("plots").exists());
}

#[test]
fn overrides_echoed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), 100, None);
    let out = tmp.path().join("out");
    let o = mistfog(
        &["simulate", "--config", &cfg, "--seed", "5", "--n", "4", "--p", "0.1", "--mode", "cloud-only", "--quiet"],
        &out,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    assert_eq!(r["seed"], 5);
    assert_eq!(r["config"]["filter"]["n"], 4);
    assert_eq!(r["config"]["filter"]["p"].as_f64(), Some(0.1));
    assert_eq!(r["config"]["run"]["mode"], "cloud_only");
    assert_eq!(r["sensors"]["S2"]["seed"], 6);
    assert!(r.get("comparison").is_none());
    assert_eq!(r["runs"].as_object().unwrap().len(), 1);
    let echo = std::fs::read_to_string(out.join("config.resolved.cfg")).unwrap();
    assert!(echo.contains("seed = 5"));
}

#[test]
fn assertions_gate_exit_code() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), 200, None);
    let out = tmp.path().join("out");
    let pass = mistfog(
        &["simulate", "--config", &cfg, "--quiet", "--assert", "comparison.rows.network_bytes.reduction_percent > 0"],
        &out,
    );
    assert_eq!(pass.status.code(), Some(0), "{}", String::from_utf8_lossy(&pass.stderr));
    let fail = mistfog(
        &["simulate", "--config", &cfg, "--quiet", "--assert", "comparison.rows.network_bytes.reduction_percent > 99"],
        &out,
    );
    assert_eq!(fail.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&fail.stderr).contains("assertion failed"));
    let bad = mistfog(&["simulate", "--config", &cfg, "--quiet", "--assert", "nothing.here > 0"], &out);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn usage_and_config_errors_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    assert_eq!(mistfog(&["simulate", "--bogus"], &out).status.code(), Some(1));
    assert_eq!(mistfog(&["filter", "--mode", "compare"], &out).status.code(), Some(1));

    let empty = tmp.path().join("empty.cfg");
    std::fs::write(&empty, "").unwrap();
    let o = mistfog(&["simulate", "--config", empty.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("parse error"));

    let dup = tmp.path().join("dup.cfg");
    let text = format!("{}\n[[device]]\nid = \"S1\"\nkind = \"sensor\"\nlevel = 2\n", mistfog::config::TABLE2_CFG);
    std::fs::write(&dup, text).unwrap();
    let o = mistfog(&["simulate", "--config", dup.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("duplicate device id 'S1'"));

    let o = mistfog(&["simulate", "--config", "/no/such/file.cfg"], &out);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn missing_dataset_exits_2_naming_path() {
    let tmp = tempfile::tempdir().unwrap();
    let o = mistfog(&["filter", "--dataset", "/no/such/data.csv", "--column", "t"], &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/no/such/data.csv"));
}

#[test]
fn dataset_relative_to_config_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    std::fs::create_dir(&data).unwrap();
    std::fs::write(data.join("room.csv"), "time,temp\n0,20\n60,20.1\n120,bad\n180,25\n").unwrap();
    let mut cfg = mistfog::ScenarioConfig::parse(mistfog::config::TABLE2_CFG).unwrap();
    cfg.sources =
        vec![mistfog::config::SourceConfig::Csv(mistfog::sources::ReplaySpec::new("S1", "data/room.csv", "temp"))];
    cfg.filter.n = 1;
    let path = tmp.path().join("room.cfg");
    std::fs::write(&path, cfg.to_toml()).unwrap();

    let out = tmp.path().join("out");
    let o = mistfog(&["filter", "--config", path.to_str().unwrap(), "--quiet"], &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    let ingest = &r["sensors"]["S1"]["ingest"];
    assert_eq!(ingest["rows_read"], 4);
    assert_eq!(ingest["skipped"], 1);
    assert_eq!(ingest["gaps"], 1);
    assert_eq!(r["sensors"]["S1"]["error"]["total_count"], 3);
}

#[test]
fn sweep_table() {
    let tmp = tempfile::tempdir().unwrap();
    let mut text = mistfog::config::TABLE2_CFG.replace("count = 10000", "count = 300");
    text = text.replace("[filter]", "[sweep]\nn = [5, 10]\np = [0.05, 0.1]\n\n[filter]");
    let path = tmp.path().join("sweep.cfg");
    std::fs::write(&path, text).unwrap();
    let out = tmp.path().join("out");
    let o = mistfog(&["filter", "--config", path.to_str().unwrap(), "--quiet"], &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    assert_eq!(r["sweep"].as_array().unwrap().len(), 6 * 4);
    let table = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(table.lines().count(), 25);
}
