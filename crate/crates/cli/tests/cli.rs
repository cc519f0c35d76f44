//! End-to-end tests of the `poselift` binary: exit codes, flag handling,
//! stage ordering, and a small full pipeline run.

use std::path::Path;
use std::process::{Command, Output};

use poselift_core::pipeline::{canonical_config_text, PipelineConfig};
use poselift_core::regressor::CnnArchitecture;
use poselift_core::synthdata::SubjectSpec;

fn poselift() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_poselift"));
    // Tests control the output root explicitly unless they are about the
    // environment fallback itself.
    cmd.env_remove("POSELIFT_OUT");
    cmd
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("failed to spawn poselift")
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

/// A pipeline small enough that every stage finishes in well under a
/// second: 16x16 images, a 51->56 auto-encoder, two epochs everywhere.
fn micro_config() -> PipelineConfig {
    let mut config = PipelineConfig::default();
    config.data.n_train = 12;
    config.data.n_test = 4;
    config.data.train_subjects = vec![SubjectSpec { id: 0, limb_scale: 1.0 }];
    config.data.test_subjects = vec![SubjectSpec { id: 1, limb_scale: 1.0 }];
    config.camera.image_size = 16;
    config.camera.mm_per_pixel = 160.0;
    config.ae_layer_sizes = vec![56];
    config.ae.noise_sigmas = vec![20.0];
    config.ae.epochs = 2;
    config.ae.batch_size = 4;
    config.cnn = CnnArchitecture {
        input_size: 16,
        conv_channels: vec![2],
        conv_kernels: vec![3],
        fc_widths: vec![8],
    };
    config.reg.epochs = 2;
    config.reg.batch_size = 4;
    config.reg.dropout = 0.0;
    config.finetune_epochs = 2;
    config.pca_components = 8;
    config.extra_fc_width = 16;
    config
}

fn write_micro_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("micro.cfg");
    std::fs::write(&path, canonical_config_text(&micro_config())).unwrap();
    path
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(run(poselift().arg("--help")).status.code(), Some(0));
    assert_eq!(run(poselift().arg("--version")).status.code(), Some(0));
    assert_eq!(
        run(poselift().args(["gen-data", "--help"])).status.code(),
        Some(0)
    );
}

#[test]
fn usage_errors_exit_one() {
    // No subcommand.
    assert_eq!(run(&mut poselift()).status.code(), Some(1));
    // Unknown flag.
    let output = run(poselift().args(["gen-data", "--bogus"]));
    assert_eq!(output.status.code(), Some(1));
    // Unknown training stage.
    let tmp = tempfile::tempdir().unwrap();
    let output = run(poselift().args([
        "train",
        "--stage",
        "warmup",
        "--out",
        tmp.path().to_str().unwrap(),
    ]));
    assert_eq!(output.status.code(), Some(1));
    assert!(stderr(&output).contains("unknown training stage"), "{output:?}");
}

#[test]
fn a_missing_output_root_is_a_usage_error_and_the_env_var_fills_it() {
    let output = run(poselift().arg("gen-data"));
    assert_eq!(output.status.code(), Some(1));
    assert!(stderr(&output).contains("POSELIFT_OUT"), "{output:?}");

    let tmp = tempfile::tempdir().unwrap();
    let config = write_micro_config(tmp.path());
    let out_root = tmp.path().join("from-env");
    let output = run(poselift()
        .env("POSELIFT_OUT", &out_root)
        .args(["gen-data", "--config", config.to_str().unwrap()]));
    assert_eq!(output.status.code(), Some(0), "{output:?}");
    assert!(out_root.join("dataset").join("manifest.txt").exists());
}

#[test]
fn gen_data_refuses_to_overwrite_without_force() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_micro_config(tmp.path());
    let out = tmp.path().join("run");
    let args = [
        "gen-data",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];

    assert_eq!(run(poselift().args(args)).status.code(), Some(0));
    let output = run(poselift().args(args));
    assert_eq!(output.status.code(), Some(1), "{output:?}");
    assert!(stderr(&output).contains("--force"), "{output:?}");
    assert_eq!(
        run(poselift().args(args).arg("--force")).status.code(),
        Some(0)
    );
}

#[test]
fn a_seed_override_changes_the_dataset_and_the_config_hash() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_micro_config(tmp.path());
    let mut manifests = Vec::new();
    let mut hashes = Vec::new();
    for seed in ["101", "102"] {
        let out = tmp.path().join(format!("seed-{seed}"));
        let output = run(poselift().args([
            "gen-data",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--seed",
            seed,
        ]));
        assert_eq!(output.status.code(), Some(0), "{output:?}");
        manifests.push(std::fs::read(out.join("dataset/manifest.txt")).unwrap());
        let experiment = std::fs::read_to_string(out.join("experiment.txt")).unwrap();
        hashes.push(experiment.lines().next().unwrap().to_string());
    }
    assert_ne!(manifests[0], manifests[1]);
    assert_ne!(hashes[0], hashes[1]);
}

#[test]
fn bad_config_files_are_rejected_by_key() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("bad.cfg");
    std::fs::write(&config, "data.n_train = 12\nnet.depth = 3\n").unwrap();
    let output = run(poselift().args([
        "gen-data",
        "--config",
        config.to_str().unwrap(),
        "--out",
        tmp.path().join("run").to_str().unwrap(),
    ]));
    assert_eq!(output.status.code(), Some(1), "{output:?}");
    assert!(stderr(&output).contains("unknown config key `net.depth`"), "{output:?}");
}

#[test]
fn stages_out_of_order_name_the_missing_prerequisite() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_micro_config(tmp.path());
    let out = tmp.path().join("run");
    let base = |cmd: &mut Command, rest: &[&str]| {
        cmd.args(rest).args([
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
    };

    let mut cmd = poselift();
    base(&mut cmd, &["train", "--stage", "ae"]);
    let output = run(&mut cmd);
    assert_eq!(output.status.code(), Some(1), "{output:?}");
    assert!(stderr(&output).contains("gen-data"), "{output:?}");

    let mut cmd = poselift();
    base(&mut cmd, &["gen-data"]);
    assert_eq!(run(&mut cmd).status.code(), Some(0));

    let mut cmd = poselift();
    base(&mut cmd, &["train", "--stage", "finetune"]);
    let output = run(&mut cmd);
    assert_eq!(output.status.code(), Some(1), "{output:?}");
    assert!(stderr(&output).contains("train --stage ae"), "{output:?}");
}

#[test]
fn the_micro_pipeline_runs_under_the_cli_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_micro_config(tmp.path());
    let out = tmp.path().join("run");
    let run_stage = |rest: &[&str]| {
        let mut cmd = poselift();
        cmd.args(rest).args([
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        let output = run(&mut cmd);
        assert_eq!(output.status.code(), Some(0), "{rest:?}: {output:?}");
        output
    };

    run_stage(&["gen-data"]);
    for stage in ["ae", "latent", "finetune", "direct"] {
        run_stage(&["train", "--stage", stage]);
    }
    let output = run_stage(&["eval"]);
    let text = stdout(&output);
    assert!(text.contains("truth: test MPJPE 0.00 mm"), "{text}");
    assert!(text.contains("pipeline: test MPJPE"), "{text}");

    let report = std::fs::read_to_string(out.join("report/report.csv")).unwrap();
    assert!(report.starts_with("method,action,mpjpe_mm,lower_sum,upper_sum,full_sum\n"));
    assert!(report.contains("\ntruth,all,0.00,0.00,0.00,0.00\n"), "{report}");

    // Evaluating only an explicit subset works too.
    let output = run_stage(&["eval", "--models", "truth,direct"]);
    assert!(stdout(&output).contains("direct: test MPJPE"), "{output:?}");
}

#[test]
fn sweeps_record_failures_and_exit_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_micro_config(tmp.path());
    let out = tmp.path().join("run");

    let output = run(poselift().args([
        "sweep",
        "--axis",
        "depth",
        "--values",
        "56",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]));
    assert_eq!(output.status.code(), Some(1), "{output:?}");
    assert!(stderr(&output).contains("only ae-layers"), "{output:?}");

    let output = run(poselift().args([
        "sweep",
        "--axis",
        "ae-layers",
        "--values",
        "40",
        "--values",
        "56",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]));
    assert_eq!(output.status.code(), Some(2), "{output:?}");
    assert!(stderr(&output).contains("1 of 2 sweep runs failed"), "{output:?}");

    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.contains("\n40,failed,"), "{csv}");
    assert!(csv.contains("\n56,ok,"), "{csv}");
}
