//! End-to-end tests driving the compiled `eigenpro` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_eigenpro"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn eigenpro binary")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn write_toy_csv(path: &Path, n: usize, seed: u64) {
    // deterministic quadratic data, no external RNG needed
    let mut text = String::new();
    let mut state = seed.wrapping_mul(2862933555777941757).wrapping_add(3037000493);
    let mut next = || {
        state = state.wrapping_mul(2862933555777941757).wrapping_add(3037000493);
        (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    };
    for _ in 0..n {
        let x1 = next();
        let x2 = next();
        let y = x1 * x1 - 0.5 * x2;
        text.push_str(&format!("{x1},{x2},{y}\n"));
    }
    fs::write(path, text).unwrap();
}

#[test]
fn train_is_byte_for_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("train.csv");
    write_toy_csv(&data, 120, 5);
    let mut paths = Vec::new();
    for tag in ["a", "b"] {
        let model = dir.path().join(format!("model-{tag}"));
        let report = dir.path().join(format!("report-{tag}.csv"));
        let out = run(&[
            "train",
            "--train",
            data.to_str().unwrap(),
            "--kernel",
            "laplace",
            "--bandwidth",
            "0.5",
            "--k",
            "10",
            "--epochs",
            "8",
            "--seed",
            "42",
            "--out-model",
            model.to_str().unwrap(),
            "--out-report",
            report.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
        paths.push((model, report));
    }
    assert_eq!(fs::read(&paths[0].0).unwrap(), fs::read(&paths[1].0).unwrap());
    assert_eq!(fs::read(&paths[0].1).unwrap(), fs::read(&paths[1].1).unwrap());
    let report = fs::read_to_string(&paths[0].1).unwrap();
    assert!(report.starts_with("epoch,train_loss,eval_loss,metric,alpha_norm\n"));
    assert_eq!(report.lines().count(), 9);
}

#[test]
fn model_round_trip_preserves_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("train.csv");
    write_toy_csv(&data, 100, 9);
    let model = dir.path().join("model");
    let out = run(&[
        "train",
        "--train",
        data.to_str().unwrap(),
        "--mode",
        "rff",
        "--bandwidth",
        "0.7",
        "--feature-dim",
        "200",
        "--k",
        "8",
        "--epochs",
        "5",
        "--out-model",
        model.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    // evaluating the saved model twice gives identical bytes
    let preds: Vec<Vec<u8>> = (0..2)
        .map(|i| {
            let p = dir.path().join(format!("pred-{i}.csv"));
            let out = run(&[
                "eval",
                "--model",
                model.to_str().unwrap(),
                "--data",
                data.to_str().unwrap(),
                "--out",
                p.to_str().unwrap(),
            ]);
            assert_eq!(code(&out), 0);
            fs::read(&p).unwrap()
        })
        .collect();
    assert_eq!(preds[0], preds[1]);
}

#[test]
fn zero_epochs_leaves_model_at_zero() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("train.csv");
    write_toy_csv(&data, 60, 3);
    let model = dir.path().join("model");
    let out = run(&[
        "train",
        "--train",
        data.to_str().unwrap(),
        "--bandwidth",
        "1",
        "--k",
        "5",
        "--epochs",
        "0",
        "--out-model",
        model.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let pred = dir.path().join("pred.csv");
    let out = run(&[
        "eval",
        "--model",
        model.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--out",
        pred.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    for line in fs::read_to_string(&pred).unwrap().lines() {
        assert_eq!(line.parse::<f64>().unwrap(), 0.0);
    }
}

#[test]
fn config_file_merges_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("train.csv");
    write_toy_csv(&data, 80, 1);
    let cfg = dir.path().join("run.cfg");
    fs::write(
        &cfg,
        format!(
            "train = {}\nbandwidth = 0.5\nkernel = laplace\nepochs = 2\nk = 5\n",
            data.display()
        ),
    )
    .unwrap();
    let report = dir.path().join("report.csv");
    let out = run(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--epochs",
        "3",
        "--out-report",
        report.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    // header plus three epochs: the flag overrode epochs=2 from the file
    assert_eq!(fs::read_to_string(&report).unwrap().lines().count(), 4);
}

#[test]
fn reach_demo_prints_known_values() {
    let out = run(&["reach-demo", "--t-list", "100,1000000"]);
    assert_eq!(code(&out), 0);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("100,0.3301311257849943,"));
    assert!(stdout.contains("1000000,0.2587711531090289,"));
}

#[test]
fn exit_codes_by_failure_kind() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("train.csv");
    write_toy_csv(&data, 60, 2);

    // usage errors
    assert_eq!(code(&run(&["train", "--no-such-flag"])), 1);
    assert_eq!(code(&run(&["train", "--bandwidth", "1"])), 1);
    assert_eq!(
        code(&run(&["train", "--train", data.to_str().unwrap()])),
        1,
        "kernel mode without bandwidth is a usage error"
    );

    // data errors
    assert_eq!(
        code(&run(&["train", "--train", "/no/such/file.csv", "--bandwidth", "1"])),
        2
    );
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "1.0,2.0,3.0\n1.0,oops,3.0\n").unwrap();
    assert_eq!(
        code(&run(&["train", "--train", bad.to_str().unwrap(), "--bandwidth", "1"])),
        2
    );

    // numeric failure: absurd fixed step size diverges
    assert_eq!(
        code(&run(&[
            "train",
            "--train",
            data.to_str().unwrap(),
            "--bandwidth",
            "0.5",
            "--k",
            "0",
            "--eta",
            "80",
            "--epochs",
            "10",
        ])),
        3
    );

    // --help succeeds
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn classification_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("train.csv");
    // two linearly separated blobs labelled 0/1
    let mut text = String::new();
    for i in 0..40 {
        let t = i as f64 / 40.0;
        text.push_str(&format!("{},{},0\n", -1.0 - t, 0.3 * t));
        text.push_str(&format!("{},{},1\n", 1.0 + t, -0.3 * t));
    }
    fs::write(&data, text).unwrap();
    let model = dir.path().join("model");
    let out = run(&[
        "train",
        "--train",
        data.to_str().unwrap(),
        "--eval",
        data.to_str().unwrap(),
        "--task",
        "classification",
        "--kernel",
        "gaussian",
        "--bandwidth",
        "1",
        "--k",
        "5",
        "--epochs",
        "30",
        "--out-model",
        model.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let metric: f64 = stdout
        .split_whitespace()
        .find_map(|tok| tok.strip_prefix("metric="))
        .expect("metric in train output")
        .parse()
        .unwrap();
    assert_eq!(metric, 0.0, "separable blobs should reach zero training error");
}

#[test]
fn analyze_reports_spectrum_ratios() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("train.csv");
    write_toy_csv(&data, 150, 11);
    let out = run(&[
        "analyze",
        "--data",
        data.to_str().unwrap(),
        "--bandwidth",
        "0.5",
        "--k-list",
        "3,6",
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let mut lines = stdout.lines();
    assert_eq!(lines.next(), Some("k,lambda_top,lambda_next,ratio"));
    let ratios: Vec<f64> = lines
        .map(|l| l.split(',').nth(3).unwrap().parse().unwrap())
        .collect();
    assert_eq!(ratios.len(), 2);
    assert!(ratios[0] >= 1.0 && ratios[1] >= ratios[0]);
}
