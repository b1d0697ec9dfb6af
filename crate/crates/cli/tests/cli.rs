//! End-to-end checks of the binary: the three subcommands run, their
//! artifacts land where asked, and fixed seeds reproduce output files byte
//! for byte.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const RUN_CONFIG: &str = r#"
[env]
num_d2d = 2
num_channels = 2

[train]
buffer_capacity = 100
target_sync_every = 10

[spec]
feedback_count = 2
encoder_hidden = [5]
qnet_hidden = [6]
batch_size = 4
episodes = 2
steps_per_episode = 6
test_episodes = 2
test_seeds = [31]
"#;

const SWEEP_CONFIG: &str = r#"
[env]
num_d2d = 2
num_channels = 2

[train]
buffer_capacity = 100
target_sync_every = 10

[base]
feedback_count = 2
encoder_hidden = [5]
qnet_hidden = [6]
batch_size = 4
episodes = 1
steps_per_episode = 6
test_episodes = 2
test_seeds = [31]

[[studies]]
kind = "feedback_count"
counts = [0, 2]

[[studies]]
kind = "return_comparison"
"#;

fn specshare(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_specshare"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary should launch")
}

fn assert_success(output: &Output) {
    assert!(
        output.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

#[test]
fn train_then_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), RUN_CONFIG).unwrap();

    let train = specshare(
        &["train", "--config", "run.toml", "--out", "trained"],
        dir.path(),
    );
    assert_success(&train);
    assert!(dir.path().join("trained/training_curve.csv").exists());
    assert!(dir.path().join("trained/checkpoint/manifest.json").exists());

    let eval = specshare(
        &[
            "eval",
            "--config",
            "run.toml",
            "--checkpoint",
            "trained/checkpoint",
            "--out",
            "scored",
        ],
        dir.path(),
    );
    assert_success(&eval);
    let stdout = String::from_utf8_lossy(&eval.stdout);
    assert!(stdout.contains("ARP"), "summary line expected: {stdout}");
    let report = fs::read_to_string(dir.path().join("scored/eval_report.csv")).unwrap();
    assert_eq!(report.lines().count(), 1 + 2, "header plus two episodes");
}

#[test]
fn eval_without_checkpoint_needs_a_no_feedback_spec() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), RUN_CONFIG).unwrap();
    let refused = specshare(&["eval", "--config", "run.toml"], dir.path());
    assert!(!refused.status.success());
    assert!(String::from_utf8_lossy(&refused.stderr).contains("--checkpoint"));

    let none_config = RUN_CONFIG.replace("[spec]", "[spec]\nmode = \"none\"");
    fs::write(dir.path().join("none.toml"), none_config).unwrap();
    let random_bs = specshare(
        &["eval", "--config", "none.toml", "--out", "none_out"],
        dir.path(),
    );
    assert_success(&random_bs);
}

#[test]
fn train_outputs_are_bit_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), RUN_CONFIG).unwrap();
    for out in ["a", "b"] {
        let run = specshare(
            &[
                "train",
                "--config",
                "run.toml",
                "--seed",
                "7",
                "--out",
                out,
            ],
            dir.path(),
        );
        assert_success(&run);
    }
    let curve_a = fs::read(dir.path().join("a/training_curve.csv")).unwrap();
    let curve_b = fs::read(dir.path().join("b/training_curve.csv")).unwrap();
    assert_eq!(curve_a, curve_b);
    for file in ["manifest.json", "qnet.txt", "encoder_0.txt", "encoder_1.txt"] {
        let a = fs::read(dir.path().join("a/checkpoint").join(file)).unwrap();
        let b = fs::read(dir.path().join("b/checkpoint").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between identically seeded runs");
    }
}

#[test]
fn sweep_outputs_are_bit_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("sweep.toml"), SWEEP_CONFIG).unwrap();
    for out in ["sa", "sb"] {
        let run = specshare(
            &["sweep", "--config", "sweep.toml", "--out", out],
            dir.path(),
        );
        assert_success(&run);
    }
    let names: Vec<_> = fs::read_dir(dir.path().join("sa"))
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    assert!(names.iter().any(|n| n == "arp_vs_feedback_count.csv"));
    assert!(names.iter().any(|n| n == "return_comparison.csv"));
    for name in &names {
        let a = fs::read(dir.path().join("sa").join(name)).unwrap();
        let b = fs::read(dir.path().join("sb").join(name)).unwrap();
        assert_eq!(a, b, "{name:?} differs between runs");
    }
}

#[test]
fn malformed_config_fails_with_the_path_in_the_message() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "[env]\nnum_d2d = \"four\"").unwrap();
    let run = specshare(&["train", "--config", "bad.toml"], dir.path());
    assert!(!run.status.success());
    assert!(String::from_utf8_lossy(&run.stderr).contains("bad.toml"));
}

#[test]
fn shipped_example_configs_parse_and_validate() {
    // mirrors the binary's train/eval config shape
    #[derive(serde::Deserialize)]
    #[serde(default, deny_unknown_fields)]
    #[derive(Default)]
    struct RunConfig {
        env: specshare_core::EnvConfig,
        train: specshare_core::TrainConfig,
        spec: specshare_core::ExperimentSpec,
    }

    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in ["desk.toml", "full.toml"] {
        let text = fs::read_to_string(configs.join(name)).unwrap();
        let parsed: RunConfig = toml::from_str(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
        parsed.env.validate().unwrap();
        parsed.train.validate().unwrap();
        parsed.spec.validate().unwrap();
    }
    let text = fs::read_to_string(configs.join("sweep.toml")).unwrap();
    let parsed: specshare_core::SweepConfig =
        toml::from_str(&text).unwrap_or_else(|e| panic!("sweep.toml: {e}"));
    parsed.env.validate().unwrap();
    parsed.base.validate().unwrap();
    assert_eq!(parsed.studies.len(), 8);
}
