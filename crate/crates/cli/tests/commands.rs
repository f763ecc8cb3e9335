//! Subcommands driven through the built binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use otfuse_core::ot::parse_plan_dump;

fn otfuse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_otfuse")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = otfuse(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn dir_bytes(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                files.push((rel, fs::read(&path).unwrap()));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn help_exits_zero_and_bad_arguments_exit_one() {
    assert_eq!(otfuse(&["--help"]).status.code(), Some(0));
    assert_eq!(otfuse(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(otfuse(&["--parallel", "0", "verify"]).status.code(), Some(1));
    assert_eq!(otfuse(&["--lambda", "1.5", "verify"]).status.code(), Some(1));
}

#[test]
fn missing_dataset_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = otfuse(&["--out", tmp.path().to_str().unwrap(), "run"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("otfuse:"));
}

#[test]
fn generate_is_byte_identical_for_a_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    for (dir, seed) in [(&a, "7"), (&b, "7"), (&c, "8")] {
        ok(&["--seed", seed, "--out", dir.to_str().unwrap(), "generate"]);
    }
    let dataset = |d: &Path| dir_bytes(&d.join("dataset"));
    assert!(dataset(&a) == dataset(&b));
    assert!(dataset(&a) != dataset(&c));
}

#[test]
fn config_file_controls_the_dataset_size() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("small.toml");
    fs::write(&cfg, "version = 1\nsamples_per_combination = 2\n[grid]\nheight = 8\nwidth = 6\n").unwrap();
    let out = tmp.path().join("out");
    let text = ok(&["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "generate"]);
    assert!(text.starts_with("wrote 16 samples"), "{text}");

    fs::write(&cfg, "version = 2\n").unwrap();
    assert_eq!(otfuse(&["--config", cfg.to_str().unwrap(), "generate"]).status.code(), Some(1));
}

#[test]
fn train_run_and_dump_plan_share_one_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("small.toml");
    fs::write(&cfg, "version = 1\nsamples_per_combination = 3\n").unwrap();
    let out = tmp.path().join("out");
    let base = ["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    let with = |extra: &[&str]| -> Vec<String> { base.iter().chain(extra).map(|s| s.to_string()).collect() };
    let run = |extra: &[&str]| ok(&with(extra).iter().map(String::as_str).collect::<Vec<_>>());

    run(&["generate"]);
    let trained = run(&["train-heads", "--steps", "50"]);
    assert!(trained.contains("trained 50 steps"), "{trained}");
    let trace = fs::read_to_string(out.join("loss_trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 52);

    let summary = run(&["--format", "csv", "run", "--dump-plans"]);
    assert!(summary.starts_with("overall mIoU"), "{summary}");
    assert!(out.join("report.csv").exists() && out.join("samples.csv").exists());
    assert!(!out.join("report.svg").exists());
    assert_eq!(fs::read_dir(out.join("plans")).unwrap().count(), 2 * 24);

    run(&["--format", "svg", "run"]);
    assert!(fs::read_to_string(out.join("report.svg")).unwrap().starts_with("<svg"));

    let dumped = run(&["dump-plan", "--sample", "3", "--branch", "normal"]);
    let (plan, eps, violation) = parse_plan_dump(dumped.as_bytes()).unwrap();
    assert_eq!(plan.shape(), (16 * 16, 2));
    assert_eq!(eps, 0.05);
    assert!(violation <= 1e-6);
    assert_eq!(dumped, fs::read_to_string(out.join("plans/00003_normal.csv")).unwrap());

    let missing = otfuse(&with(&["dump-plan", "--sample", "999"]).iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn verify_passes_and_flags_injected_corruption() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    let text = ok(&["--out", out, "verify"]);
    assert!(text.contains("9 of 9 checks passed"), "{text}");
    assert!(tmp.path().join("eps_sweep.csv").exists());

    let broken = otfuse(&["--out", out, "verify", "--inject-cost-corruption"]);
    assert_eq!(broken.status.code(), Some(3));
    let text = String::from_utf8_lossy(&broken.stdout);
    assert!(text.contains("[FAIL] cost-range"), "{text}");
    assert!(text.contains("8 of 9 checks passed"), "{text}");
}
