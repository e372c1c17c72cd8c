//! End-to-end tests of the `delaymp` binary: exit codes, configuration
//! handling, seed overrides, and byte-identical CSV bodies across reruns
//! and worker counts.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_delaymp"))
}

/// The non-comment lines of an output file (the deterministic body).
fn body(path: &Path) -> String {
    let text = std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{path:?}: {e}"));
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .collect::<Vec<_>>()
        .join("\n")
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("config.ini");
    std::fs::write(&path, text).unwrap();
    path
}

const SMALL: &str = "\
[core]
n_paths = 500
seed = 11
steps_per_delay = 4
";

#[test]
fn unknown_subcommand_exits_2() {
    let status = bin().arg("frobnicate").status().unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn missing_config_file_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let status = bin()
        .args(["simulate", "--config", "/nonexistent.ini", "--out"])
        .arg(dir.path().join("out.csv"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn bad_config_key_exits_2_and_prints_example() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[core]\nhorzon = 1.0\n");
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("out.csv"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("horzon"), "{stderr}");
    assert!(stderr.contains("example configuration"), "{stderr}");
}

#[test]
fn order_study_with_one_epsilon_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[core]\nn_paths = 200\n[variation]\neps_steps = 2\n");
    let status = bin()
        .args(["order-study", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("out.csv"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn lq_demo_reports_minus_one_and_exits_0() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out_dir = dir.path().join("demo");
    let status = bin()
        .args(["lq-demo", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let report = std::fs::read_to_string(out_dir.join("optimality.txt")).unwrap();
    assert!(report.contains("u = -1"), "{report}");
    assert!(out_dir.join("adjoints.csv").exists());
    assert!(out_dir.join("margins.csv").exists());
}

#[test]
fn csv_bodies_identical_across_reruns_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    for sub in ["simulate", "solve-absde", "adjoints", "order-study", "check-mp"] {
        let a = dir.path().join(format!("{sub}-a.csv"));
        let b = dir.path().join(format!("{sub}-b.csv"));
        for (out, threads) in [(&a, "1"), (&b, "4")] {
            let status = bin()
                .args([sub, "--config"])
                .arg(&cfg)
                .arg("--out")
                .arg(out)
                .args(["--threads", threads])
                .status()
                .unwrap();
            assert_eq!(status.code(), Some(0), "{sub} failed");
        }
        assert_eq!(body(&a), body(&b), "{sub} body differs across thread counts");
    }
}

#[test]
fn seed_flag_changes_output_and_header() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for (out, seed) in [(&a, "11"), (&b, "12")] {
        let status = bin()
            .args(["simulate", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(out)
            .args(["--seed", seed])
            .status()
            .unwrap();
        assert_eq!(status.code(), Some(0));
    }
    assert!(std::fs::read_to_string(&a).unwrap().contains("# seed: 11"));
    assert!(std::fs::read_to_string(&b).unwrap().contains("# seed: 12"));
    assert_ne!(body(&a), body(&b));
}

#[test]
fn env_seed_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("env.csv");
    let status = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .env("DELAYMP_SEED", "999")
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    assert!(std::fs::read_to_string(&out).unwrap().contains("# seed: 999"));
}

#[test]
fn explicit_seed_flag_beats_env() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("flag.csv");
    let status = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(["--seed", "5"])
        .env("DELAYMP_SEED", "999")
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    assert!(std::fs::read_to_string(&out).unwrap().contains("# seed: 5"));
}

#[test]
fn inadmissible_candidate_control_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    // 0.5 is outside U = (-inf,-1] U [1,inf)
    let cfg = write_config(dir.path(), "[core]\nn_paths = 200\n[sdde]\ncontrol = 0.5\n");
    let status = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("out.csv"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}
