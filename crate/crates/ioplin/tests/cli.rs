use std::path::Path;
use std::process::{Command, Output};

use ioplin::store::{RunManifest, RunStatus};

const TINY: &[&str] = &[
    "--set",
    "corpus.generate.n_train_pos=8",
    "--set",
    "corpus.generate.n_train_neg=8",
    "--set",
    "corpus.generate.n_test_pos=4",
    "--set",
    "corpus.generate.n_test_neg=4",
    "--set",
    "emipld.training.warm_start_epochs=1",
    "--set",
    "emipld.training.epochs_per_mstep=1",
];

fn ioplin(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ioplin"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn train_one_iteration_then_evaluate() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let mut train = vec!["train", "--seed", "4", "--out", "out", "--set", "emipld.max_iterations=1"];
    train.extend_from_slice(TINY);
    ok(&ioplin(dir, &train));

    let runs: Vec<_> = std::fs::read_dir(dir.join("out/runs")).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(runs.len(), 1);
    let run = &runs[0];
    let manifest = RunManifest::load(&run.join("manifest.json")).unwrap();
    assert_eq!(manifest.status, RunStatus::Completed);
    assert_eq!(manifest.iterations.len(), 1);
    let ckpts: Vec<_> = std::fs::read_dir(run)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.starts_with("ckpt_") && n != "ckpt_warm.bin")
        .collect();
    assert_eq!(ckpts, ["ckpt_1.bin"]);
    assert!(run.join("labels_0.tsv").is_file() && run.join("labels_1.tsv").is_file());
    assert!(run.join("train.json").is_file());

    let ckpt = run.join("ckpt_1.bin");
    let mut eval = vec!["evaluate", "--seed", "4", "--out", "out", "--checkpoint", ckpt.to_str().unwrap()];
    eval.extend_from_slice(TINY);
    let out = ioplin(dir, &eval);
    ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).contains("AUC"));
    for f in ["report.txt", "metrics.tsv", "pr_curve.tsv", "pr_curve.png", "scores.tsv", "evaluate.json"] {
        assert!(dir.join("out/evaluate").join(f).is_file(), "{f}");
    }
    let metrics = std::fs::read_to_string(dir.join("out/evaluate/metrics.tsv")).unwrap();
    assert!(metrics.starts_with("metric\tvalue\tparams\n"));
    assert_eq!(metrics.matches("precision_at_recall").count(), 2);

    let mut screen = vec!["screen", "--seed", "4", "--out", "out", "--threshold", "0.8", "--checkpoint", ckpt.to_str().unwrap()];
    screen.extend_from_slice(TINY);
    ok(&ioplin(dir, &screen));
    let table = std::fs::read_to_string(dir.join("out/screening.tsv")).unwrap();
    assert_eq!(table.lines().count(), 9);

    let mut localize =
        vec!["localize", "--seed", "4", "--out", "out", "--id", "test_00000", "--checkpoint", ckpt.to_str().unwrap()];
    localize.extend_from_slice(TINY);
    ok(&ioplin(dir, &localize));
    assert!(dir.join("out/overlays/test_00000.png").is_file());
    let map = std::fs::read_to_string(dir.join("out/overlays/test_00000.scores.tsv")).unwrap();
    assert_eq!(map.lines().count(), 13);
}

#[test]
fn generate_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    for name in ["a", "b"] {
        let mut args = vec!["generate", "--seed", "11", "--out", name];
        args.extend_from_slice(TINY);
        ok(&ioplin(dir, &args));
    }
    let a = std::fs::read_to_string(dir.join("a/manifest.tsv")).unwrap();
    assert_eq!(a, std::fs::read_to_string(dir.join("b/manifest.tsv")).unwrap());
    for line in a.lines().skip(1) {
        let path = line.split('\t').nth(1).unwrap();
        assert_eq!(std::fs::read(dir.join("a").join(path)).unwrap(), std::fs::read(dir.join("b").join(path)).unwrap());
    }
    assert!(dir.join("a/generate.json").is_file());
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let out = ioplin(dir, &["evaluate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--checkpoint"));

    let out = ioplin(dir, &["train", "--set", "emipld.r=0", "--set", "emipld.s0=3"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("emipld.r") && err.contains("emipld.s0"), "{err}");

    std::fs::write(dir.join("bad.toml"), "[emipld]\nnot_a_field = 1\n").unwrap();
    assert_eq!(ioplin(dir, &["train", "--config", "bad.toml"]).status.code(), Some(2));

    let out = ioplin(dir, &["evaluate", "--checkpoint", "missing.bin"]);
    assert_eq!(out.status.code(), Some(3));
    let out = ioplin(dir, &["train", "--set", "corpus.manifest=nowhere/manifest.tsv"]);
    assert_eq!(out.status.code(), Some(3));
}
