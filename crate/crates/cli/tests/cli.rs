use std::path::Path;
use std::process::{Command, Output};

fn qfeedback(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qfeedback"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn assert_ok(o: &Output) {
    assert!(
        o.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        o.status.code(),
        stdout(o),
        String::from_utf8_lossy(&o.stderr)
    );
}

const TINY: &str = "n_anc_m = 1\nn_anc_t = 1\nsteps = 2\nhidden = 4\nbatch_size = 2\nepochs = 2\n\
                    eval_samples = 3\neval_trajectories = 4\ncheckpoint_every = 1\n";

fn tiny_dir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("tiny.toml"), TINY).unwrap();
    dir
}

#[test]
fn oracle_solves_sigma_z() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("h.txt"), "# field along z\n1.0 Z\n").unwrap();
    let o = qfeedback(dir.path(), &["oracle", "h.txt"]);
    assert_ok(&o);
    let out = stdout(&o);
    assert!(out.contains("E_min -1.0"), "{out}");
    assert!(out.contains("degeneracy 1"));
    let amp: Vec<&str> = out.lines().filter(|l| l.starts_with('|')).collect();
    assert_eq!(amp.len(), 2);
    assert!(amp[0].starts_with("|0> +0.000000000000"));
    assert!(amp[1].starts_with("|1> ") && amp[1].contains("1.000000000000"), "{out}");
}

#[test]
fn oracle_two_qubit_degeneracy() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("h.txt"), "0.5 ZI\n").unwrap();
    let o = qfeedback(dir.path(), &["oracle", "h.txt"]);
    assert_ok(&o);
    let out = stdout(&o);
    assert!(out.contains("E_min -0.5"), "{out}");
    assert!(out.contains("degeneracy 2"));
    assert_eq!(out.lines().filter(|l| l.starts_with('|')).count(), 4);
}

#[test]
fn exit_codes_follow_error_kinds() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.txt"), "1.0 Q\n").unwrap();
    assert_eq!(qfeedback(dir.path(), &["oracle", "bad.txt"]).status.code(), Some(2));
    assert_eq!(qfeedback(dir.path(), &["oracle", "missing.txt"]).status.code(), Some(4));
    std::fs::write(dir.path().join("unknown.toml"), "n_sys = 1\nfoo = 3\n").unwrap();
    let o = qfeedback(dir.path(), &["--config", "unknown.toml", "train"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("foo"));
    std::fs::write(dir.path().join("big.toml"), "n_sys = 2\nn_anc_m = 3\nn_anc_t = 2\n").unwrap();
    assert_eq!(qfeedback(dir.path(), &["--config", "big.toml", "train"]).status.code(), Some(2));
    std::fs::write(dir.path().join("junk.bin"), b"not a checkpoint").unwrap();
    assert_eq!(qfeedback(dir.path(), &["eval", "junk.bin"]).status.code(), Some(4));
    assert_eq!(qfeedback(dir.path(), &["frobnicate"]).status.code(), Some(2));
}

#[test]
fn train_eval_rollout_resume() {
    let dir = tiny_dir();
    let p = dir.path();
    let o = qfeedback(p, &["--config", "tiny.toml", "--deterministic", "--out-dir", "run", "train", "--restarts", "2"]);
    assert_ok(&o);
    assert!(stdout(&o).contains("restart 1 seed 1"));
    for f in ["checkpoint.bin", "eval_report.csv", "bloch_steps.csv", "eval_summary.json", "restarts.csv"] {
        assert!(p.join("run").join(f).exists(), "{f}");
    }
    assert!(p.join("run/restart_0/metrics.csv").exists());

    let o = qfeedback(p, &["--deterministic", "--out-dir", "ev1", "eval", "run/checkpoint.bin", "--samples", "4"]);
    assert_ok(&o);
    assert!(stdout(&o).starts_with("4 samples: mean fidelity"));
    let o = qfeedback(p, &["--deterministic", "--out-dir", "ev2", "eval", "run/checkpoint.bin", "--samples", "4"]);
    assert_ok(&o);
    let a = std::fs::read_to_string(p.join("ev1/eval_report.csv")).unwrap();
    let b = std::fs::read_to_string(p.join("ev2/eval_report.csv")).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.lines().count(), 5);

    let o = qfeedback(p, &["--out-dir", "ro", "rollout", "run/checkpoint.bin"]);
    assert_ok(&o);
    let dump: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(p.join("ro/rollout.json")).unwrap()).unwrap();
    let steps = dump["steps"].as_array().unwrap();
    assert_eq!(steps.len(), 3);
    assert_eq!(steps[0]["state"]["re"].as_array().unwrap().len(), 2);
    assert!(steps[2]["fidelity"].as_f64().unwrap() <= 1.0 + 1e-9);

    std::fs::write(p.join("h.txt"), "1 X\n").unwrap();
    let o = qfeedback(p, &["--out-dir", "ro2", "rollout", "run/checkpoint.bin", "--hamiltonian", "h.txt"]);
    assert_ok(&o);
    assert!(stdout(&o).contains("E_min -1.0"));
    std::fs::write(p.join("h2.txt"), "1 XX\n").unwrap();
    let o = qfeedback(p, &["rollout", "run/checkpoint.bin", "--hamiltonian", "h2.txt"]);
    assert_eq!(o.status.code(), Some(2));

    let o = qfeedback(p, &["--out-dir", "resumed", "train", "--resume", "run/checkpoint.bin", "--epochs", "4"]);
    assert_ok(&o);
    assert!(stdout(&o).contains("epoch 4"));
    let metrics = std::fs::read_to_string(p.join("resumed/metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 3, "{metrics}");
}

#[test]
fn resumed_training_matches_uninterrupted() {
    let dir = tiny_dir();
    let p = dir.path();
    let full = ["--config", "tiny.toml", "--deterministic", "--out-dir", "full", "train", "--epochs", "4"];
    assert_ok(&qfeedback(p, &full));
    let half = ["--config", "tiny.toml", "--deterministic", "--out-dir", "half", "train", "--epochs", "2"];
    assert_ok(&qfeedback(p, &half));
    let rest = [
        "--config",
        "tiny.toml",
        "--deterministic",
        "--out-dir",
        "half",
        "train",
        "--resume",
        "half/checkpoint.bin",
        "--epochs",
        "4",
    ];
    assert_ok(&qfeedback(p, &rest));
    let a = std::fs::read(p.join("full/checkpoint.bin")).unwrap();
    let b = std::fs::read(p.join("half/checkpoint.bin")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn ablation_writes_the_table() {
    let dir = tiny_dir();
    let p = dir.path();
    let args = [
        "--config",
        "tiny.toml",
        "--deterministic",
        "--out-dir",
        "abl",
        "ablation",
        "--totals",
        "1,2",
        "--restarts",
        "1",
        "--samples",
        "2",
    ];
    let o = qfeedback(p, &args);
    assert_ok(&o);
    let table = std::fs::read_to_string(p.join("abl/ablation.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "N_anc,N_anc_m,restart,mean_fidelity,selected_flag");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("1,1,0,") && lines[3].starts_with("2,2,0,"));
    assert!(p.join("abl/cell_2_1/checkpoint.bin").exists());
    assert_eq!(stdout(&o).lines().filter(|l| l.trim_start().starts_with(char::is_numeric)).count(), 3);
}
