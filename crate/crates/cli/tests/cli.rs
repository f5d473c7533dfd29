use std::path::Path;
use std::process::{Command, Output};

fn lieflow(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lieflow")).args(args).current_dir(cwd).output().unwrap()
}

fn ok(out: Output) -> String {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

const TINY: &[&str] = &[
    "--set", "dataset.image_size=8",
    "--set", "dataset.n_samples=64",
    "--set", "architecture.encoder_hidden=[16]",
    "--set", "architecture.decoder_hidden=[16]",
    "--set", "epochs=1",
    "--set", "seeds=[0, 1]",
    "--set", "eval_path_samples=64",
    "--set", "output_dir=\"runs\"",
];

fn with_tiny<'a>(head: &[&'a str]) -> Vec<&'a str> {
    head.iter().copied().chain(TINY.iter().copied()).collect()
}

#[test]
fn config_prints_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let text = ok(lieflow(&["config", "--set", "variant.beta=4", "--set", "epochs=3"], dir.path()));
    assert!(text.contains("epochs = 3"));
    assert!(text.contains("beta = 4.0"));
    let bad = lieflow(&["config", "--set", "nonsense=1"], dir.path());
    assert!(!bad.status.success());
}

#[test]
fn generate_writes_binary_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let text = ok(lieflow(&with_tiny(&["generate", "--out", "data.bin", "--csv"]), dir.path()));
    assert!(text.contains("64 samples of dimension 64"));
    assert!(dir.path().join("data.bin").exists());
    let csv = std::fs::read_to_string(dir.path().join("data.csv")).unwrap();
    assert_eq!(csv.lines().count(), 65);
}

#[test]
fn sweep_evaluate_and_traverse() {
    let dir = tempfile::tempdir().unwrap();
    let table = ok(lieflow(&with_tiny(&["sweep"]), dir.path()));
    assert!(table.contains("homeomorphic"));
    let run = dir.path().join("runs").read_dir().unwrap().next().unwrap().unwrap().path();
    assert_eq!(std::fs::read_to_string(run.join("report.csv")).unwrap().lines().count(), 3);
    let ckpt = run.join("seed_1.ckpt");
    let ckpt = ckpt.to_str().unwrap();
    let eval = ok(lieflow(&with_tiny(&["evaluate", "--checkpoint", ckpt]), dir.path()));
    assert!(eval.starts_with("winding "));
    ok(lieflow(&with_tiny(&["traverse", "--checkpoint", ckpt, "--points", "8", "--out", "trav"]), dir.path()));
    assert!(dir.path().join("trav/traversal.pgm").exists());
    let again = ok(lieflow(&with_tiny(&["train", "--seed", "1"]), dir.path()));
    assert!(again.contains("checkpoint"));
}

#[test]
fn closed_form_and_winding_demos_pass() {
    let dir = tempfile::tempdir().unwrap();
    let text = ok(lieflow(&["demo", "closed-form"], dir.path()));
    assert!(text.lines().all(|l| l.starts_with("PASS")));
    let text = ok(lieflow(&["demo", "winding", "--out", "w"], dir.path()));
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 3);
    assert!(dir.path().join("w/winding_large_step.csv").exists());
}
