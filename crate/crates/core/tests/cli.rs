//! End-to-end runs of the `irs-sim` binary.

use std::path::Path;
use std::process::Command;

use irs_sim::experiment::{Summary, CSV_HEADER};
use irs_sim::scenario::ScenarioConfig;

fn tiny_config(dir: &Path) -> std::path::PathBuf {
    let mut c = ScenarioConfig::desk().with_surfaces(2).unwrap();
    c.antennas = 4;
    c.users = 2;
    c.rows = 2;
    c.cols = 2;
    c.noise_dbm = -160.0;
    let path = dir.join("tiny.json");
    std::fs::write(&path, c.to_json()).unwrap();
    path
}

fn irs_sim(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_irs-sim"))
        .args(args)
        .output()
        .expect("binary runs")
}

#[test]
fn run_writes_csv_and_summary_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path());
    let config = config.to_str().unwrap();
    let mut outputs = Vec::new();
    for (i, workers) in ["1", "2"].iter().enumerate() {
        let out = dir.path().join(format!("run{i}/results.csv"));
        let o = irs_sim(&[
            "--config",
            config,
            "--drops",
            "2",
            "--seed",
            "9",
            "--workers",
            workers,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push(std::fs::read(&out).unwrap());

        let text = String::from_utf8(outputs[i].clone()).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER));
        assert_eq!(lines.count(), 4 * 2);
        let summary: Summary = serde_json::from_str(
            &std::fs::read_to_string(out.with_extension("summary.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(summary.groups.len(), 4);
        assert_eq!(summary.command, "run");
        assert_eq!(summary.config.seed, 9);
        assert_eq!(summary.config_hash, summary.config.hash());
    }
    assert_eq!(
        outputs[0], outputs[1],
        "output must not depend on the worker count"
    );
}

#[test]
fn sweep_with_traces() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path());
    let out = dir.path().join("sweep.csv");
    let o = irs_sim(&[
        "--config",
        config.to_str().unwrap(),
        "--methods",
        "proposed,wis",
        "--drops",
        "1",
        "--sweep",
        "pmax_dbm=20,30",
        "--trace",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows: Vec<String> = std::fs::read_to_string(&out)
        .unwrap()
        .lines()
        .skip(1)
        .map(String::from)
        .collect();
    assert_eq!(rows.len(), 2 * 2);
    assert!(rows.iter().all(|r| r.contains(",pmax_dbm,")));
    let trace = std::fs::read_to_string(out.with_extension("trace.csv")).unwrap();
    assert!(trace.lines().count() > 1);
}

#[test]
fn bad_arguments_fail() {
    for args in [
        &["--methods", "bogus"][..],
        &["--sweep", "power=1,2"],
        &["--sweep", "elements_L=10"],
        &["--drops", "0"],
        &["--preset", "huge"],
        &["--config", "/nonexistent/config.json"],
    ] {
        let o = irs_sim(args);
        assert!(!o.status.success(), "{args:?} should fail");
        assert!(!o.stderr.is_empty());
    }
}
