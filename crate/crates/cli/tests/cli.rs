use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pucl_cli::RunManifest;
use pucl_core::models::{Checkpoint, Component, Dense, Encoder, LinearClassifier, Mlp, Provenance};
use pucl_core::Tensor;
use serde_json::json;

fn pucl(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pucl"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_config(dir: &Path, name: &str, cfg: serde_json::Value) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    p
}

fn small_config() -> serde_json::Value {
    json!({
        "seed": 4,
        "data": {
            "train": {"kind": "gaussian_mixture", "n": 660, "dim": 3, "pn_ratio": [1, 10], "separation": 4.0},
            "test": {"kind": "gaussian_mixture", "n": 200, "dim": 3, "pn_ratio": [2, 3], "separation": 4.0}
        },
        "pretrain": {"epochs": 2, "batch_size": 64, "architecture": {"hidden": [8], "repr_dim": 6, "proj_dim": 4}},
        "classifier": {"epochs": 2, "batch_size": 64}
    })
}

fn run_ok(dir: &Path, args: &[&str]) -> Output {
    let o = pucl(dir, args);
    assert_eq!(code(&o), 0, "{args:?}: {}", stderr(&o));
    o
}

/// (labeled, unlabeled positive, unlabeled negative) counted from a PU CSV.
fn csv_counts(path: &Path) -> (usize, usize, usize) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let s_col = header.iter().position(|&h| h == "s").unwrap();
    let y_col = header.iter().position(|&h| h == "y").unwrap();
    let mut c = (0, 0, 0);
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        match (f[s_col], f[y_col]) {
            ("1", _) => c.0 += 1,
            ("0", "1") => c.1 += 1,
            ("0", "-1") => c.2 += 1,
            other => panic!("unexpected labels {other:?}"),
        }
    }
    c
}

#[test]
fn cifar10_shaped_synthesis_matches_table_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c10.json",
        json!({
            "seed": 0,
            "data": {
                "train": {"kind": "gaussian_blobs", "class_counts": vec![5000; 10], "dim": 2, "spread": 3.0},
                "test": null,
                "positive_class_ids": [0, 1, 8, 9],
                "target_pn_ratio": [1, 10],
                "label_frequency": 0.2
            }
        }),
    );
    run_ok(dir.path(), &["--config", cfg.to_str().unwrap(), "--out", "a", "synth"]);
    assert_eq!(csv_counts(&dir.path().join("a/train.csv")), (600, 2_400, 30_000));
    let m = RunManifest::load(dir.path().join("a/synth_manifest.json")).unwrap();
    assert_eq!(m.summary["train"]["negatives_per_positive"], json!(10.0));
    assert_eq!(m.summary["train"]["unlabeled_per_labeled"], json!(54.0));
    m.verify().unwrap();

    run_ok(dir.path(), &["--config", cfg.to_str().unwrap(), "--out", "b", "synth"]);
    assert_eq!(
        fs::read(dir.path().join("a/train.csv")).unwrap(),
        fs::read(dir.path().join("b/train.csv")).unwrap()
    );
}

#[test]
fn zero_label_frequency_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg["data"]["label_frequency"] = json!(0.0);
    let cfg = write_config(dir.path(), "c.json", cfg);
    let o = pucl(dir.path(), &["--config", cfg.to_str().unwrap(), "synth"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("no labeled positives"), "{}", stderr(&o));
}

#[test]
fn bad_configs_exit_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let typo = write_config(dir.path(), "typo.json", json!({"seeed": 1}));
    assert_eq!(code(&pucl(dir.path(), &["--config", typo.to_str().unwrap(), "synth"])), 2);
    assert_eq!(code(&pucl(dir.path(), &["--config", "missing.json", "synth"])), 2);
    let cfg = write_config(dir.path(), "c.json", small_config());
    let c = cfg.to_str().unwrap();
    assert_eq!(code(&pucl(dir.path(), &["--config", c, "pretrain", "--train", "nope.csv"])), 2);
    assert_eq!(code(&pucl(dir.path(), &["--config", c, "pretrain", "--tau-plus", "1.5"])), 2);
    // Neither --encoder nor --scratch.
    assert_eq!(code(&pucl(dir.path(), &["--config", c, "train"])), 2);
}

#[test]
fn pretraining_reruns_and_biased_variant() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", small_config());
    let c = cfg.to_str().unwrap();
    run_ok(dir.path(), &["--config", c, "--out", "a", "pretrain"]);
    run_ok(dir.path(), &["--config", c, "--out", "b", "pretrain"]);
    let digest = |d: &str| Checkpoint::load(dir.path().join(d).join("encoder.json")).unwrap().digest().unwrap();
    assert_eq!(digest("a"), digest("b"));
    assert_eq!(
        fs::read(dir.path().join("a/pretrain_loss.csv")).unwrap(),
        fs::read(dir.path().join("b/pretrain_loss.csv")).unwrap()
    );

    run_ok(dir.path(), &["--config", c, "--out", "nt", "pretrain", "--tau-plus", "0"]);
    let ckpt = Checkpoint::load(dir.path().join("nt/encoder.json")).unwrap();
    assert_eq!(ckpt.provenance.loss, "nt_xent");
    assert_ne!(ckpt.digest().unwrap(), digest("a"));
    let m = RunManifest::load(dir.path().join("nt/pretrain_manifest.json")).unwrap();
    assert_eq!(m.run.config.pretrain.contrastive.tau_plus, 0.0);
    assert_eq!(m.checkpoint_digests["encoder"], ckpt.digest().unwrap());
}

#[test]
fn train_paths_and_controlled_loss_comparison() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", small_config());
    let c = cfg.to_str().unwrap();
    run_ok(dir.path(), &["--config", c, "--out", "pre", "pretrain"]);
    let enc = "pre/encoder.json";
    run_ok(dir.path(), &["--config", c, "--out", "imb", "train", "--encoder", enc, "--loss", "imbnnpu"]);
    run_ok(dir.path(), &["--config", c, "--out", "nn", "train", "--encoder", enc, "--loss", "nnpu"]);
    let imb = RunManifest::load(dir.path().join("imb/train_manifest.json")).unwrap();
    let nn = RunManifest::load(dir.path().join("nn/train_manifest.json")).unwrap();
    let mut nn_cfg = nn.run.config.clone();
    nn_cfg.classifier.loss = imb.run.config.classifier.loss;
    nn_cfg.output_dir = imb.run.config.output_dir.clone();
    assert_eq!(nn_cfg, imb.run.config);
    assert_ne!(
        fs::read(dir.path().join("imb/train_trace.csv")).unwrap(),
        fs::read(dir.path().join("nn/train_trace.csv")).unwrap()
    );
    // Frozen probes never write an encoder; scratch runs do.
    assert!(!dir.path().join("imb/encoder.json").exists());
    run_ok(dir.path(), &["--config", c, "--out", "scr", "train", "--scratch"]);
    assert!(dir.path().join("scr/encoder.json").exists());
    run_ok(dir.path(), &["--config", c, "--out", "sup", "train", "--scratch", "--supervised"]);
    let trace = fs::read_to_string(dir.path().join("scr/train_trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 1 + 2);
}

#[test]
fn bce_without_true_labels_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("f0,f1,s\n");
    for i in 0..40 {
        csv.push_str(&format!("{},{},{}\n", i as f64 * 0.1, -(i as f64) * 0.05, u8::from(i % 5 == 0)));
    }
    fs::write(dir.path().join("pu.csv"), csv).unwrap();
    let mut cfg = small_config();
    cfg["data"]["test"] = json!(null);
    cfg["classifier"]["batch_size"] = json!(16);
    let cfg = write_config(dir.path(), "c.json", cfg);
    let c = cfg.to_str().unwrap();
    let base = ["--config", c, "train", "--scratch", "--train", "pu.csv"];
    let o = pucl(dir.path(), &[&base[..], &["--loss", "wbce"]].concat());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("label error"), "{}", stderr(&o));
    // Without true labels the PU losses need an explicit prior.
    assert_eq!(code(&pucl(dir.path(), &base)), 2);
    run_ok(dir.path(), &[&base[..], &["--pi", "0.1"]].concat());
}

#[test]
fn eval_of_zero_classifier_reports_zero_f1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", small_config());
    let c = cfg.to_str().unwrap();
    run_ok(dir.path(), &["--config", c, "--out", "d", "synth"]);
    let enc = Encoder {
        net: Mlp::from_layers(vec![Dense::new(Tensor::identity(3), Tensor::zeros(vec![3])).unwrap()]).unwrap(),
    };
    let clf = LinearClassifier::new(Tensor::zeros(vec![1, 3]), Tensor::zeros(vec![1])).unwrap();
    Checkpoint::new(&Component::Encoder(enc), Provenance::default())
        .save(dir.path().join("enc.json"))
        .unwrap();
    Checkpoint::new(&Component::Classifier(clf), Provenance::default())
        .save(dir.path().join("clf.json"))
        .unwrap();
    run_ok(
        dir.path(),
        &["--config", c, "--out", "e", "eval", "--encoder", "enc.json", "--classifier", "clf.json", "--test", "d/test.csv"],
    );
    let csv = fs::read_to_string(dir.path().join("e/metrics.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    // 200 rows at 2:3 → 120 negatives; every score ties at the threshold.
    assert_eq!(row, ["eval", "0.6", "0", "0.5", "200", "0"]);

    let wrong_kind = pucl(
        dir.path(),
        &["--config", c, "eval", "--encoder", "clf.json", "--classifier", "clf.json", "--test", "d/test.csv"],
    );
    assert_eq!(code(&wrong_kind), 2);
}

#[test]
fn sweep_rows_are_factors_times_epochs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", small_config());
    let c = cfg.to_str().unwrap();
    run_ok(dir.path(), &["--config", c, "--out", "pre", "pretrain"]);
    run_ok(
        dir.path(),
        &["--config", c, "--out", "s", "sweep", "--encoder", "pre/encoder.json", "--factors", "0.1,1,10", "--epochs", "3"],
    );
    let csv = fs::read_to_string(dir.path().join("s/sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 * 3);
    assert!(csv.starts_with("run_id,b_dis,epoch,loss,accuracy,f1,auc\n"));
    // π ≈ 0.09 here, so b = 20 pushes the prior past one.
    let o = pucl(dir.path(), &["--config", c, "sweep", "--encoder", "pre/encoder.json", "--factors", "20"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn theory_and_gradient_checks_pass() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_ok(dir.path(), &["check", "--suite", "theory"]);
    assert!(stdout(&o).contains("violations: 0"), "{}", stdout(&o));
    let o = run_ok(dir.path(), &["check", "--suite", "gradients", "--trials", "20"]);
    assert_eq!(stdout(&o).lines().filter(|l| l.ends_with("ok")).count(), 5);
}
