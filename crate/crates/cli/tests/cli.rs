use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn ballfluct(config: &str, dir: &Path, extra: &[&str]) -> (i32, Value, String) {
    let cfg = dir.join("config.json");
    std::fs::write(&cfg, config).unwrap();
    let out = dir.join("out");
    let o = Command::new(env!("CARGO_BIN_EXE_ballfluct"))
        .arg("run")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(extra)
        .output()
        .unwrap();
    let report = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let text = String::from_utf8_lossy(&o.stdout).into_owned() + &String::from_utf8_lossy(&o.stderr);
    (o.status.code().unwrap(), report, text)
}

const LEBESGUE: &str = r#"{"schema_version": 1, "mode": "thermo", "k": 2, "l": 3,
    "potential": {"kind": "neg_log_det_jacobian"}, "depth": 3}"#;

fn bernoulli(mode: &str) -> String {
    let (a, b) = ((0.25f64 / 3.0).ln(), (0.75f64 / 3.0).ln());
    format!(
        r#"{{"schema_version": 1, "mode": "{mode}", "k": 2, "l": 3, "b": 1.5, "c": 0.3,
        "potential": {{"kind": "cylinder_piecewise_constant", "depth": 1, "values": [{a}, {a}, {a}, {b}, {b}, {b}]}},
        "depth": 4, "eps_list": [1e-6, 9.094947017729282e-13], "n_samples": 4000, "seed": 17}}"#
    )
}

#[test]
fn thermo_on_lebesgue() {
    let dir = tempfile::tempdir().unwrap();
    let (code, report, _) = ballfluct(LEBESGUE, dir.path(), &[]);
    assert_eq!(code, 0);
    let model = &report["model"];
    assert!((model["delta"].as_f64().unwrap() - 2.0).abs() < 1e-9);
    assert!(model["sigma2"].as_f64().unwrap().abs() < 1e-12);
    assert_eq!(report["all_pass"], true);
    assert!(dir.path().join("out/report.txt").exists());
}

#[test]
fn clt_on_bernoulli_passes_and_reproduces() {
    let dir = tempfile::tempdir().unwrap();
    let (code, report, _) = ballfluct(&bernoulli("clt"), dir.path(), &["--threads", "1"]);
    assert_eq!(code, 0, "{report}");
    assert_eq!(report["tests"][0]["name"], "clt");
    assert_eq!(report["tests"][0]["pass"], true);
    let csv = std::fs::read_to_string(dir.path().join("out/clt.csv")).unwrap();
    assert!(csv.starts_with("statistic,empirical,reference,band_low,band_high\n"));
    assert_eq!(csv.lines().count(), 513);

    // the echoed config reproduces the run on another thread count and through the cache
    let echo = serde_json::to_string(&report["config"]).unwrap();
    let again = tempfile::tempdir().unwrap();
    let (code2, report2, _) = ballfluct(&echo, again.path(), &["--threads", "3"]);
    assert_eq!(code2, 0);
    assert_eq!(report["artifact_hash"], report2["artifact_hash"]);
    let (_, report3, _) = ballfluct(&echo, again.path(), &[]);
    assert_eq!(report["artifact_hash"], report3["artifact_hash"]);
}

#[test]
fn non_expanding_map_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = LEBESGUE.replace("\"k\": 2", "\"k\": 2, \"a\": 1.2");
    let (code, report, text) = ballfluct(&cfg, dir.path(), &[]);
    assert_eq!(code, 2);
    assert!(text.contains("expansion violated"));
    assert_eq!(report["error"]["reason"], "invalid_parameters");
}

#[test]
fn exponent_ordering_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = LEBESGUE.replace("\"k\": 2, \"l\": 3", "\"k\": 3, \"l\": 2");
    let (code, report, _) = ballfluct(&cfg, dir.path(), &[]);
    assert_eq!(code, 2);
    assert_eq!(report["error"]["reason"], "exponent_ordering");
}

#[test]
fn unreadable_config_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let (code, report, _) = ballfluct("{\"mode\": ", dir.path(), &[]);
    assert_eq!(code, 2);
    assert_eq!(report["error"]["reason"], "json");
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.json");
    std::fs::write(&cfg, LEBESGUE).unwrap();
    let out = dir.path().join("env-out");
    let o = Command::new(env!("CARGO_BIN_EXE_ballfluct"))
        .args(["run", cfg.to_str().unwrap(), "--no-cache"])
        .env("BALLFLUCT_OUT", &out)
        .env("BALLFLUCT_THREADS", "2")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(out.join("report.json").exists());
    assert!(!out.join("cache").exists());
}
