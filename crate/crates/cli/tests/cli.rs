//! Command-surface tests: artifact layout, exit codes, and the report
//! cross-check path.

use std::path::Path;
use std::process::Command;

fn binary() -> &'static str {
    env!("CARGO_BIN_EXE_guardsim")
}

fn run_small(out: &Path) {
    let output = Command::new(binary())
        .args(["run", "--scenario", "OF", "--trials", "2", "--seed", "7"])
        .arg("--out")
        .arg(out)
        .output()
        .expect("spawn run");
    assert!(
        output.status.success(),
        "run failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("MOER"));
    assert!(stdout.contains("OF"));
}

#[test]
fn run_emits_all_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    run_small(&out);
    for name in ["config.toml", "report.json", "trials.csv", "summary.tsv"] {
        assert!(out.join(name).is_file(), "missing {name}");
    }
    // One log and one trajectory per trial: 1 scenario x 2 x 2 x 2 trials.
    assert_eq!(std::fs::read_dir(out.join("logs")).unwrap().count(), 8);
    assert_eq!(std::fs::read_dir(out.join("traj")).unwrap().count(), 8);
    // The config snapshot reproduces the run.
    let snapshot = std::fs::read_to_string(out.join("config.toml")).unwrap();
    assert!(snapshot.contains("trials_per_cell = 2"));
    assert!(snapshot.contains("base_seed = 7"));
}

#[test]
fn run_is_reproducible_from_its_config_snapshot() {
    let tmp = tempfile::tempdir().unwrap();
    let first = tmp.path().join("first");
    run_small(&first);
    let second = tmp.path().join("second");
    let output = Command::new(binary())
        .args(["run", "--config"])
        .arg(first.join("config.toml"))
        .arg("--out")
        .arg(&second)
        .output()
        .expect("spawn run");
    assert!(output.status.success());
    for artifact in ["trials.csv", "report.json", "summary.tsv"] {
        assert_eq!(
            std::fs::read(first.join(artifact)).unwrap(),
            std::fs::read(second.join(artifact)).unwrap(),
            "{artifact} not reproduced from the snapshot"
        );
    }
}

#[test]
fn report_cross_checks_stored_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    run_small(&out);

    let ok = Command::new(binary())
        .arg("report")
        .arg(&out)
        .output()
        .expect("spawn report");
    assert!(ok.status.success());
    assert!(String::from_utf8_lossy(&ok.stdout).contains("match report.json"));

    // Corrupt one outcome in the CSV: the re-reader must disagree.
    let csv_path = out.join("trials.csv");
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    let tampered = csv.replacen("completed", "interrupted", 1);
    assert_ne!(csv, tampered);
    std::fs::write(&csv_path, tampered).unwrap();
    let bad = Command::new(binary())
        .arg("report")
        .arg(&out)
        .output()
        .expect("spawn report");
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("disagree"));
}

#[test]
fn replay_detects_tampered_log() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    run_small(&out);
    let log_path = out.join("logs").join("OF_sec_noatk_t000.jsonl");
    let text = std::fs::read_to_string(&log_path).unwrap();

    // Nudge the first recorded travel distance.
    let mut tampered_one = false;
    let tampered: Vec<String> = text
        .lines()
        .map(|line| {
            let mut value: serde_json::Value = serde_json::from_str(line).unwrap();
            if !tampered_one {
                if let Some(pairs) = value
                    .get_mut("signals_with_results")
                    .and_then(|v| v.as_array_mut())
                {
                    for pair in pairs {
                        let result = &mut pair[1];
                        let traveled = result["traveled_mm"].as_f64().unwrap();
                        if traveled > 0.0 {
                            result["traveled_mm"] = serde_json::json!(traveled + 5.0);
                            tampered_one = true;
                            break;
                        }
                    }
                }
            }
            serde_json::to_string(&value).unwrap()
        })
        .collect();
    assert!(tampered_one, "log had no positive travel to tamper with");
    std::fs::write(&log_path, tampered.join("\n") + "\n").unwrap();

    let output = Command::new(binary())
        .arg("replay")
        .arg(&log_path)
        .output()
        .expect("spawn replay");
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).contains("diverged at step"));
}

#[test]
fn invalid_config_exits_with_diagnostic() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("bad.toml");
    std::fs::write(&config, "[metrics]\nalpha = 0.1\nbeta = 0.5\n").unwrap();
    let output = Command::new(binary())
        .args(["run", "--config"])
        .arg(&config)
        .output()
        .expect("spawn run");
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).contains("beta"));
}

#[test]
fn usage_errors_exit_with_code_two() {
    let output = Command::new(binary())
        .args(["check-validator", "--samples", "0"])
        .output()
        .expect("spawn check-validator");
    assert_eq!(output.status.code(), Some(2));
}
