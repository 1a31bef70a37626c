//! Acceptance gate: one test per criterion, each printing a single
//! PASS/FAIL line. Tests hold a shared lock so wall-clock budgets are not
//! distorted by concurrent training runs.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::sync::{Mutex, MutexGuard};
use std::time::{Duration, Instant};

use pucl_cli::{build_data, ExperimentConfig};
use pucl_core::data::{gaussian_blobs, scar_label_split, AugmentationPolicy, PnRatio, PuDataset, SplitSpec, Transform};
use pucl_core::evaluation::{auc, equivalence_check, f1_score, gradient_check_suite, lemma1_numeric_check};
use pucl_core::losses::contrastive::negative_estimates;
use pucl_core::losses::{
    batch_contrastive_objective, biased_contrastive_objective, imbnnpu_loss, nnpu_loss, risk_components,
    ContrastiveConfig, PuLossConfig, ViewBatch,
};
use pucl_core::models::{Architecture, Checkpoint, Encoder};
use pucl_core::rng::rng_for;
use pucl_core::tensor::l2_normalize;
use pucl_core::training::{
    pretrain, prior_sweep, train_classifier, train_end_to_end, ClassifierConfig, LossKind, PretrainConfig,
    PriorSweepConfig, TrainRun,
};
use pucl_core::Tensor;
use rand::Rng;

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(id: u32, name: &str, pass: bool, detail: &str) {
    println!("[criterion {id}] {} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {id} ({name}) failed: {detail}");
}

#[test]
fn criterion_1_gradient_oracle() {
    let _g = serial();
    let t = Instant::now();
    let reports = gradient_check_suite(100, 1).unwrap();
    let elapsed = t.elapsed();
    let names: BTreeSet<&str> = reports.iter().map(|r| r.name.as_str()).collect();
    let expected: BTreeSet<&str> =
        ["sigmoid_loss", "nnpu", "imbnnpu", "weighted_bce", "debiased_contrastive"].into_iter().collect();
    let worst = reports.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
    let clamps_covered = reports
        .iter()
        .filter(|r| r.has_clamp)
        .all(|r| r.branch_hits[0] > 0 && r.branch_hits[1] > 0);
    let pass = names == expected
        && reports.iter().all(|r| r.configs >= 100 && r.passed())
        && clamps_covered
        && worst < 1e-4
        && elapsed < Duration::from_secs(30);
    let branches: Vec<String> = reports.iter().map(|r| format!("{} {:?}", r.name, r.branch_hits)).collect();
    report(
        1,
        "gradient oracle",
        pass,
        &format!(
            "{} losses x 100 configs, max rel error {worst:.2e} (< 1e-4), clamp branches [{}], {:.2?} (< 30 s)",
            reports.len(),
            branches.join(", "),
            elapsed
        ),
    );
}

#[test]
fn criterion_2_lemma1_suite() {
    let _g = serial();
    let t = Instant::now();
    let r = lemma1_numeric_check(1_000, 8, 2).unwrap();
    let elapsed = t.elapsed();
    let pass = r.trials == 1_000
        && r.violations == 0
        && r.grid_points == 99
        && r.grid_violations == 0
        && elapsed < Duration::from_secs(5);
    report(
        2,
        "sigmoid risk <= softmax risk",
        pass,
        &format!(
            "{} draws, {} violations (slack 1e-12, worst excess {:.2e}), grid {}/{} ok, {:.2?} (< 5 s)",
            r.trials,
            r.violations,
            r.worst_excess,
            r.grid_points - r.grid_violations,
            r.grid_points,
            elapsed
        ),
    );
}

#[test]
fn criterion_3_two_logit_identity() {
    let _g = serial();
    let r = equivalence_check(1_000, 3).unwrap();
    let pass = r.trials == 1_000 && r.max_abs_diff <= 1e-12 && r.violations == 0;
    report(
        3,
        "sigmoid of logit difference equals softmax",
        pass,
        &format!("{} draws, max |diff| {:.2e} (<= 1e-12)", r.trials, r.max_abs_diff),
    );
}

fn random_views(rng: &mut impl Rng, n: usize, views: usize, dim: usize, jitter: f64) -> Tensor {
    let mut rows = Vec::with_capacity(n * views * dim);
    for _ in 0..n {
        let base: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        for _ in 0..views {
            rows.extend(base.iter().map(|b| b + jitter * rng.random_range(-1.0..1.0)));
        }
    }
    l2_normalize(&Tensor::matrix(n * views, dim, rows).unwrap(), 1).unwrap()
}

#[test]
fn criterion_4_reductions() {
    let _g = serial();
    let mut rng = rng_for(4, "acceptance/reductions");
    let (mut pu_diff, mut obj_diff, mut floor_breaks, mut floor_hits) = (0.0f64, 0.0f64, 0usize, 0usize);
    for trial in 0..1_000 {
        let n = rng.random_range(2..=8usize);

        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(-4.0..4.0)).collect();
        let mut labeled: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        labeled[0] = true;
        labeled[1] = false;
        let pi = rng.random_range(0.01..0.99);
        let rc = risk_components(&scores, &labeled).unwrap();
        let cfg = PuLossConfig::new(pi, pi).unwrap();
        pu_diff = pu_diff.max((imbnnpu_loss(&rc, &cfg) - nnpu_loss(&rc, &cfg)).abs());

        // Every other batch has near-identical samples so the floor binds.
        let jitter = if trial % 2 == 0 { 0.5 } else { 1e-3 };
        let dim = rng.random_range(2..=8usize);
        let z = random_views(&mut rng, n, 2, dim, jitter);
        let batch = ViewBatch::new(z, n, 2).unwrap();
        let tau = rng.random_range(0.1..1.0);
        let uncorrected = ContrastiveConfig::biased(tau, 2).unwrap();
        let a = batch_contrastive_objective(&batch, &uncorrected).unwrap();
        let b = biased_contrastive_objective(&batch, tau).unwrap();
        obj_diff = obj_diff.max((a - b).abs());

        let debiased = ContrastiveConfig::new(tau, rng.random_range(0.0..0.9), 2).unwrap();
        let floor = (-1.0 / tau).exp();
        for d in negative_estimates(&batch, &debiased).unwrap() {
            if d < floor {
                floor_breaks += 1;
            }
            if d == floor {
                floor_hits += 1;
            }
        }
    }
    let pass = pu_diff <= 1e-12 && obj_diff <= 1e-12 && floor_breaks == 0 && floor_hits > 0;
    report(
        4,
        "loss reductions",
        pass,
        &format!(
            "1000 batches (N <= 8, M = 2): |imbnnPU(pi'=pi) - nnPU| <= {pu_diff:.2e}, \
             |debiased(tau+=0) - biased| <= {obj_diff:.2e} (both <= 1e-12), \
             d_u below exp(-1/tau): {floor_breaks} (floor active {floor_hits} times)"
        ),
    );
}

fn split(src_counts: &[usize], positives: &[u32], ratio: Option<PnRatio>) -> PuDataset {
    let src = gaussian_blobs(src_counts, 2, 3.0, 5).unwrap();
    let spec = SplitSpec {
        positive_class_ids: positives.iter().copied().collect(),
        target_pn_ratio: ratio,
        label_frequency: 0.2,
        seed: 5,
    };
    scar_label_split(&src, &spec).unwrap()
}

#[test]
fn criterion_5_synthesis_fidelity() {
    let _g = serial();
    // Vehicles: airplane, automobile, ship, truck.
    let c10 = split(&[5_000; 10], &[0, 1, 8, 9], Some(PnRatio(1, 10))).counts().unwrap();
    let pos = c10.labeled_pos + c10.unlabeled_pos;
    let c10_ok = (c10.labeled_pos, c10.unlabeled_pos, c10.unlabeled_neg) == (600, 2_400, 30_000)
        && c10.unlabeled_neg == 10 * pos
        && c10.unlabeled == 54 * c10.labeled_pos;
    // The two vehicle superclasses, five fine classes each.
    let c100 = split(&[500; 100], &[8, 13, 48, 58, 90, 41, 69, 81, 85, 89], None);
    let c100_ok = c100.n_labeled() == 1_000 && c100.n_unlabeled() == 49_000;
    report(
        5,
        "synthesis fidelity",
        c10_ok && c100_ok,
        &format!(
            "10-class: {} labeled P, {} unlabeled P, {} unlabeled N (P:N 1:{}, L:U 1:{}); \
             100-class: {} labeled P, {} unlabeled",
            c10.labeled_pos,
            c10.unlabeled_pos,
            c10.unlabeled_neg,
            c10.unlabeled_neg as f64 / pos as f64,
            c10.unlabeled as f64 / c10.labeled_pos as f64,
            c100.n_labeled(),
            c100.n_unlabeled()
        ),
    );
}

fn brute_auc(scores: &[f64], truth: &[bool]) -> f64 {
    let (mut twice_wins, mut pairs) = (0u64, 0u64);
    for (i, &ti) in truth.iter().enumerate() {
        for (j, &tj) in truth.iter().enumerate() {
            if ti && !tj {
                pairs += 1;
                twice_wins += match scores[i].partial_cmp(&scores[j]).unwrap() {
                    std::cmp::Ordering::Greater => 2,
                    std::cmp::Ordering::Equal => 1,
                    std::cmp::Ordering::Less => 0,
                };
            }
        }
    }
    twice_wins as f64 / (2 * pairs) as f64
}

fn brute_f1(pred: &[bool], truth: &[bool]) -> f64 {
    let mut m = [[0u64; 2]; 2];
    for (&p, &t) in pred.iter().zip(truth) {
        m[usize::from(p)][usize::from(t)] += 1;
    }
    let (tp, fp, fneg) = (m[1][1], m[1][0], m[0][1]);
    if tp == 0 {
        0.0
    } else {
        (2 * tp) as f64 / (2 * tp + fp + fneg) as f64
    }
}

#[test]
fn criterion_6_metric_oracles() {
    let _g = serial();
    let mut rng = rng_for(6, "acceptance/metrics");
    let (mut auc_mismatch, mut f1_mismatch) = (0, 0);
    for _ in 0..200 {
        let n = rng.random_range(2..=50usize);
        let mut truth: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        truth[0] = true;
        truth[1] = false;
        // Few distinct values so ties are common.
        let scores: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..8u8)) * 0.25).collect();
        let pred: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        if auc(&scores, &truth).unwrap() != brute_auc(&scores, &truth) {
            auc_mismatch += 1;
        }
        if f1_score(&pred, &truth).unwrap() != brute_f1(&pred, &truth) {
            f1_mismatch += 1;
        }
    }
    report(
        6,
        "metric oracles",
        auc_mismatch == 0 && f1_mismatch == 0,
        &format!("200 instances (n <= 50): AUC mismatches {auc_mismatch}, F1 mismatches {f1_mismatch} (exact equality)"),
    );
}

const DESK_SEEDS: u64 = 5;
const SWEEP_SEEDS: u64 = 3;

fn desk_architecture() -> Architecture {
    Architecture {
        hidden: vec![64],
        repr_dim: 32,
        proj_dim: 16,
    }
}

fn desk_pretrain(seed: u64) -> PretrainConfig {
    PretrainConfig {
        epochs: 15,
        batch_size: 128,
        lr: 3e-3,
        contrastive: ContrastiveConfig::new(0.5, 0.1, 2).unwrap(),
        augmentation: AugmentationPolicy {
            transforms: vec![
                Transform::GaussianNoise { sigma: 0.6, prob: 1.0 },
                Transform::Mask { rate: 0.1, prob: 0.5 },
                Transform::Scale {
                    low: 0.8,
                    high: 1.2,
                    prob: 0.5,
                },
            ],
        },
        architecture: desk_architecture(),
        seed,
    }
}

fn desk_classifier(loss: LossKind, seed: u64) -> ClassifierConfig {
    ClassifierConfig {
        epochs: 100,
        batch_size: 128,
        lr: 3e-4,
        pi: None,
        pi_prime: 0.5,
        loss,
        seed,
    }
}

/// 16-dimensional mixture, n = 5,500, P:N 1:10, c = 0.2, with an
/// independent 2:3 test set.
fn desk_data(seed: u64) -> (PuDataset, PuDataset) {
    let cfg = ExperimentConfig {
        seed,
        ..Default::default()
    };
    let b = build_data(&cfg).unwrap();
    (b.train, b.test.unwrap())
}

struct SeedResult {
    imb: (f64, f64),
    nn: (f64, f64),
    bce_f1: f64,
    wbce_f1: f64,
    scratch_auc: f64,
}

fn final_auc_f1(r: &TrainRun) -> (f64, f64) {
    let m = r.epochs.last().unwrap().metrics.unwrap();
    (m.auc, m.f1)
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn criteria_7_and_8_desk_scale_behaviour() {
    let _g = serial();
    let t = Instant::now();
    let mut results = Vec::new();
    let mut encoders: Vec<(Encoder, PuDataset, PuDataset)> = Vec::new();
    for seed in 0..DESK_SEEDS {
        let (train, test) = desk_data(seed);
        let enc = pretrain(&train.features, &desk_pretrain(seed)).unwrap().encoder;
        let probe = |loss| final_auc_f1(&train_classifier(&enc, &train, &desk_classifier(loss, seed), Some(&test)).unwrap());
        let scratch = train_end_to_end(&train, &desk_architecture(), &desk_classifier(LossKind::ImbNnPu, seed), Some(&test))
            .unwrap();
        results.push(SeedResult {
            imb: probe(LossKind::ImbNnPu),
            nn: probe(LossKind::NnPu),
            bce_f1: probe(LossKind::Bce).1,
            wbce_f1: probe(LossKind::Wbce).1,
            scratch_auc: final_auc_f1(&scratch).0,
        });
        if seed < SWEEP_SEEDS {
            encoders.push((enc, train, test));
        }
    }
    let elapsed = t.elapsed();

    let imb_auc = mean(results.iter().map(|r| r.imb.0));
    let scratch_auc = mean(results.iter().map(|r| r.scratch_auc));
    let imb_f1 = mean(results.iter().map(|r| r.imb.1));
    let nn_f1 = mean(results.iter().map(|r| r.nn.1));
    let bce_max = results.iter().map(|r| r.bce_f1).fold(0.0, f64::max);
    let wbce_min = results.iter().map(|r| r.wbce_f1).fold(1.0, f64::min);
    let a = imb_auc >= scratch_auc;
    let b = bce_max < 0.1 && wbce_min > 0.5;
    let c = imb_f1 >= nn_f1;
    let in_budget = elapsed < Duration::from_secs(300);
    let line7 = format!(
        "{DESK_SEEDS} seeds in {elapsed:.1?} (< 5 min): (a) probe AUC {imb_auc:.4} >= scratch {scratch_auc:.4} [{}]; \
         (b) BCE F1 max {bce_max:.3} < 0.1, wBCE F1 min {wbce_min:.3} > 0.5 [{}]; \
         (c) imbnnPU F1 {imb_f1:.3} >= nnPU F1 {nn_f1:.3} [{}]",
        ok(a),
        ok(b),
        ok(c)
    );
    let pass7 = a && b && c && in_budget;
    println!("[criterion 7] {} desk-scale behaviour: {line7}", if pass7 { "PASS" } else { "FAIL" });

    let factors = vec![0.1, 0.5, 1.0, 2.0];
    let mut final_auc = vec![0.0; factors.len()];
    for (seed, (enc, train, test)) in encoders.iter().enumerate() {
        let sweep = PriorSweepConfig {
            factors: factors.clone(),
            classifier: desk_classifier(LossKind::ImbNnPu, seed as u64),
        };
        let rows = prior_sweep(enc, train, test, &sweep).unwrap();
        for (k, &b) in factors.iter().enumerate() {
            let last = rows.iter().filter(|r| r.b_dis == b).max_by_key(|r| r.epoch).unwrap();
            final_auc[k] += last.metrics.auc / SWEEP_SEEDS as f64;
        }
    }
    let base = final_auc[2];
    let gaps: Vec<String> = factors
        .iter()
        .zip(&final_auc)
        .filter(|(&b, _)| b != 1.0)
        .map(|(b, a)| format!("b={b}: {a:.4} ({:+.4})", a - base))
        .collect();
    let pass8 = factors
        .iter()
        .zip(&final_auc)
        .all(|(&b, a)| b == 1.0 || (a - base).abs() <= 0.02);
    println!(
        "[criterion 8] {} prior robustness: mean final AUC over {SWEEP_SEEDS} seeds, b=1: {base:.4}; {} (each within 0.02)",
        if pass8 { "PASS" } else { "FAIL" },
        gaps.join(", ")
    );
    assert!(pass7, "criterion 7 failed: {line7}");
    assert!(pass8, "criterion 8 failed");
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "FAILED"
    }
}

fn run_pipeline(dir: &Path) {
    let cfg = serde_json::json!({
        "seed": 9,
        "data": {
            "train": {"kind": "gaussian_mixture", "n": 880, "dim": 4, "pn_ratio": [1, 10], "separation": 3.0},
            "test": {"kind": "gaussian_mixture", "n": 300, "dim": 4, "pn_ratio": [2, 3], "separation": 3.0}
        },
        "pretrain": {"epochs": 3, "batch_size": 64, "architecture": {"hidden": [16], "repr_dim": 8, "proj_dim": 4}},
        "classifier": {"epochs": 4, "batch_size": 64, "lr": 0.01}
    });
    fs::write(dir.join("config.json"), cfg.to_string()).unwrap();
    let steps: [&[&str]; 6] = [
        &["--out", "run", "synth"],
        &["--out", "run", "pretrain"],
        &["--out", "run", "train", "--encoder", "run/encoder.json"],
        &["--out", "run/scratch", "train", "--scratch", "--loss", "nnpu"],
        &["--out", "run", "eval", "--encoder", "run/encoder.json", "--classifier", "run/classifier.json"],
        &["--out", "run", "sweep", "--encoder", "run/encoder.json", "--factors", "0.5,1,2"],
    ];
    for args in steps {
        let status = Command::new(env!("CARGO_BIN_EXE_pucl"))
            .current_dir(dir)
            .args(["--config", "config.json"])
            .args(args)
            .output()
            .unwrap();
        assert!(status.status.success(), "{args:?}: {}", String::from_utf8_lossy(&status.stderr));
    }
}

fn artifacts(dir: &Path, ext: &str) -> Vec<String> {
    let mut out = Vec::new();
    for sub in ["run", "run/scratch"] {
        for e in fs::read_dir(dir.join(sub)).unwrap() {
            let p = e.unwrap().path();
            if p.extension().is_some_and(|x| x == ext) && !p.to_string_lossy().ends_with("_manifest.json") {
                out.push(p.strip_prefix(dir).unwrap().display().to_string());
            }
        }
    }
    out.sort();
    out
}

#[test]
fn criterion_9_determinism() {
    let _g = serial();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_pipeline(a.path());
    run_pipeline(b.path());
    let csvs = artifacts(a.path(), "csv");
    let ckpts = artifacts(a.path(), "json");
    let same_lists = csvs == artifacts(b.path(), "csv") && ckpts == artifacts(b.path(), "json");
    let csv_diff: Vec<&String> = csvs
        .iter()
        .filter(|f| fs::read(a.path().join(f)).unwrap() != fs::read(b.path().join(f)).unwrap())
        .collect();
    let digest_diff: Vec<&String> = ckpts
        .iter()
        .filter(|f| {
            let d = |root: &Path| Checkpoint::load(root.join(f)).unwrap().digest().unwrap();
            d(a.path()) != d(b.path())
        })
        .collect();
    let pass = same_lists && csvs.len() >= 6 && ckpts.len() >= 4 && csv_diff.is_empty() && digest_diff.is_empty();
    report(
        9,
        "determinism",
        pass,
        &format!(
            "two full CLI runs: {} CSVs ({} differ), {} checkpoints ({} digests differ)",
            csvs.len(),
            csv_diff.len(),
            ckpts.len(),
            digest_diff.len()
        ),
    );
}
