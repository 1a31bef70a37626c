use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use pucl_core::data::{load_pu, save_dataset, Dataset, PuDataset};
use pucl_core::evaluation::{equivalence_check, evaluate_model, gradient_check_suite, lemma1_numeric_check};
use pucl_core::models::{Checkpoint, Component, Encoder, Provenance};
use pucl_core::training::{
    loss_trace_csv, metrics_csv, prior_sweep, sweep_csv, trace_csv, train_classifier, train_end_to_end,
    train_supervised_baseline, PriorSweepConfig, TrainRun,
};
use pucl_core::{Error, Result, RNG_ALGORITHM};
use serde_json::json;

use crate::config::{build_data, DataBundle, ExperimentConfig, Source};
use crate::manifest::{ResolvedRun, RunManifest};
use crate::{CheckArgs, CliError, DataArgs, EvalArgs, PretrainArgs, Suite, SweepArgs, TrainArgs};

/// Largest dimension drawn by the theory checks.
const CHECK_MAX_DIM: usize = 8;
const THEORY_TRIALS: usize = 1_000;
const GRADIENT_CONFIGS: usize = 100;

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn out_dir(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let dir = cfg.output_dir.clone();
    fs::create_dir_all(&dir).map_err(|e| Error::Config(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn apply_data_args(cfg: &mut ExperimentConfig, a: &DataArgs) {
    if let Some(p) = &a.train {
        cfg.data.train = Source::Csv { path: p.clone() };
    }
    if let Some(p) = &a.test {
        cfg.data.test = Some(Source::Csv { path: p.clone() });
    }
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn provenance(cfg: &ExperimentConfig, digest: &str, epochs: usize, loss: &str, architecture: Vec<usize>) -> Provenance {
    Provenance {
        seed: cfg.seed,
        epochs,
        loss: loss.to_owned(),
        config_digest: digest.to_owned(),
        architecture,
        rng_algorithm: RNG_ALGORITHM.to_owned(),
    }
}

/// Save a checkpoint and record it in the manifest.
fn save_checkpoint(m: &mut RunManifest, dir: &Path, name: &str, component: Component, prov: Provenance) -> Result<()> {
    let path = dir.join(format!("{name}.json"));
    let ckpt = Checkpoint::new(&component, prov);
    ckpt.save(&path)?;
    m.checkpoint_digests.insert(name.to_owned(), component.digest());
    m.outputs.insert(name.to_owned(), path);
    Ok(())
}

fn save_text(m: &mut RunManifest, dir: &Path, name: &str, file: &str, text: &str) -> Result<()> {
    let path = dir.join(file);
    write(&path, text)?;
    m.outputs.insert(name.to_owned(), path);
    Ok(())
}

fn finish(m: &mut RunManifest, dir: &Path, started: Instant) -> Result<()> {
    m.timings_ms.insert("total".into(), ms(started));
    m.save(dir)?;
    Ok(())
}

fn load_encoder(path: &Path) -> Result<Encoder> {
    if !path.exists() {
        return Err(Error::Config(format!("encoder checkpoint {} does not exist", path.display())));
    }
    Checkpoint::load(path)?.encoder()
}

fn data_summary(data: &DataBundle) -> serde_json::Value {
    let counts = |ds: &PuDataset| {
        let mut v = json!({
            "rows": ds.len(),
            "labeled": ds.n_labeled(),
            "unlabeled": ds.n_unlabeled(),
            "pi_true": ds.pi_true,
        });
        if let Some(c) = ds.counts() {
            let pos = c.labeled_pos + c.unlabeled_pos;
            v["labeled_pos"] = json!(c.labeled_pos);
            v["unlabeled_pos"] = json!(c.unlabeled_pos);
            v["unlabeled_neg"] = json!(c.unlabeled_neg);
            if pos > 0 {
                v["negatives_per_positive"] = json!(c.unlabeled_neg as f64 / pos as f64);
            }
        }
        if ds.n_labeled() > 0 {
            v["unlabeled_per_labeled"] = json!(ds.n_unlabeled() as f64 / ds.n_labeled() as f64);
        }
        v
    };
    json!({
        "train": counts(&data.train),
        "test": data.test.as_ref().map(counts),
    })
}

pub fn synth(cfg: ExperimentConfig) -> Result<(), CliError> {
    let started = Instant::now();
    let cfg = cfg.resolve()?;
    let data = build_data(&cfg)?;
    let dir = out_dir(&cfg)?;
    let run = ResolvedRun::new("synth", &cfg, json!({}), &data.inputs)?;
    let mut m = RunManifest::new(run)?;
    m.timings_ms.insert("build".into(), ms(started));

    let train_path = dir.join("train.csv");
    save_dataset(&Dataset::Pu(data.train.clone()), &train_path)?;
    m.outputs.insert("train".into(), train_path);
    if let Some(test) = &data.test {
        let test_path = dir.join("test.csv");
        save_dataset(&Dataset::Pu(test.clone()), &test_path)?;
        m.outputs.insert("test".into(), test_path);
    }
    m.summary = data_summary(&data);
    println!(
        "train: {} rows, {} labeled, {} unlabeled",
        data.train.len(),
        data.train.n_labeled(),
        data.train.n_unlabeled()
    );
    finish(&mut m, &dir, started)?;
    Ok(())
}

pub fn pretrain(mut cfg: ExperimentConfig, a: PretrainArgs) -> Result<(), CliError> {
    let started = Instant::now();
    apply_data_args(&mut cfg, &a.data);
    if let Some(t) = a.tau_plus {
        cfg.pretrain.contrastive.tau_plus = t;
    }
    if let Some(e) = a.epochs {
        cfg.pretrain.epochs = e;
    }
    let cfg = cfg.resolve()?;
    let data = build_data(&cfg)?;
    let dir = out_dir(&cfg)?;
    let run = ResolvedRun::new("pretrain", &cfg, json!({}), &data.inputs)?;
    let mut m = RunManifest::new(run)?;

    let t = Instant::now();
    let out = pucl_core::training::pretrain(&data.train.features, &cfg.pretrain)?;
    m.timings_ms.insert("pretrain".into(), ms(t));

    let loss = if cfg.pretrain.contrastive.tau_plus == 0.0 {
        "nt_xent"
    } else {
        "debiased_contrastive"
    };
    let digest = m.config_digest.clone();
    let epochs = cfg.pretrain.epochs;
    let enc_prov = provenance(&cfg, &digest, epochs, loss, out.encoder.net.sizes());
    let proj_prov = provenance(&cfg, &digest, epochs, loss, out.projector.net.sizes());
    save_checkpoint(&mut m, &dir, "encoder", Component::Encoder(out.encoder), enc_prov)?;
    save_checkpoint(&mut m, &dir, "projector", Component::Projector(out.projector), proj_prov)?;
    let run_id = format!("pretrain-{loss}-seed{}", cfg.seed);
    save_text(&mut m, &dir, "loss_trace", "pretrain_loss.csv", &loss_trace_csv(&run_id, &out.epoch_losses))?;
    m.summary = json!({ "final_loss": out.epoch_losses.last() });
    println!("pretrained {epochs} epochs, final loss {}", out.epoch_losses.last().copied().unwrap_or(f64::NAN));
    finish(&mut m, &dir, started)?;
    Ok(())
}

pub fn train(mut cfg: ExperimentConfig, a: TrainArgs) -> Result<(), CliError> {
    let started = Instant::now();
    apply_data_args(&mut cfg, &a.data);
    if let Some(l) = a.loss {
        cfg.classifier.loss = l;
    }
    if let Some(pi) = a.pi {
        cfg.classifier.pi = Some(pi);
    }
    if let Some(e) = a.epochs {
        cfg.classifier.epochs = e;
    }
    let cfg = cfg.resolve()?;
    let data = build_data(&cfg)?;
    let dir = out_dir(&cfg)?;
    let mut inputs = data.inputs.clone();
    let frozen = match &a.encoder {
        Some(p) => {
            let e = load_encoder(p)?;
            inputs.push(p.clone());
            Some(e)
        }
        None => None,
    };
    let options = json!({
        "encoder": a.encoder,
        "scratch": a.scratch,
        "supervised": a.supervised,
    });
    let run = ResolvedRun::new("train", &cfg, options, &inputs)?;
    let mut m = RunManifest::new(run)?;

    let t = Instant::now();
    let arch = &cfg.pretrain.architecture;
    let test = data.test.as_ref();
    let TrainRun {
        classifier,
        encoder,
        epochs,
    } = match (a.supervised, &frozen) {
        (true, f) => train_supervised_baseline(f.as_ref(), &data.train, arch, &cfg.classifier, test)?,
        (false, Some(e)) => train_classifier(e, &data.train, &cfg.classifier, test)?,
        (false, None) => train_end_to_end(&data.train, arch, &cfg.classifier, test)?,
    };
    m.timings_ms.insert("train".into(), ms(t));

    let loss = if a.supervised { "supervised_wbce" } else { cfg.classifier.loss.name() };
    let digest = m.config_digest.clone();
    let n_epochs = cfg.classifier.epochs;
    let clf_prov = provenance(&cfg, &digest, n_epochs, loss, vec![classifier.repr_dim(), classifier.logits()]);
    save_checkpoint(&mut m, &dir, "classifier", Component::Classifier(classifier), clf_prov)?;
    if let Some(e) = encoder {
        let prov = provenance(&cfg, &digest, n_epochs, loss, e.net.sizes());
        save_checkpoint(&mut m, &dir, "encoder", Component::Encoder(e), prov)?;
    }
    let run_id = format!("train-{loss}-seed{}", cfg.seed);
    save_text(&mut m, &dir, "trace", "train_trace.csv", &trace_csv(&run_id, &epochs))?;
    let last = epochs.last().expect("at least one epoch");
    m.summary = json!({ "final_loss": last.loss, "final_metrics": last.metrics });
    match &last.metrics {
        Some(mm) => println!("final loss {}, test auc {}, f1 {}", last.loss, mm.auc, mm.f1),
        None => println!("final loss {}", last.loss),
    }
    finish(&mut m, &dir, started)?;
    Ok(())
}

pub fn eval(mut cfg: ExperimentConfig, a: EvalArgs) -> Result<(), CliError> {
    let started = Instant::now();
    if let Some(p) = &a.test {
        cfg.data.test = Some(Source::Csv { path: p.clone() });
    }
    let cfg = cfg.resolve()?;
    let mut inputs = Vec::new();
    let test = match &cfg.data.test {
        Some(Source::Csv { path }) => {
            if !path.exists() {
                return Err(Error::Config(format!("test file {} does not exist", path.display())).into());
            }
            inputs.push(path.clone());
            load_pu(path)?
        }
        Some(_) => build_data(&cfg)?.test.expect("test source configured"),
        None => return Err(Error::Config("no test data: pass --test or configure data.test".into()).into()),
    };
    let encoder = load_encoder(&a.encoder)?;
    if !a.classifier.exists() {
        return Err(Error::Config(format!("classifier checkpoint {} does not exist", a.classifier.display())).into());
    }
    let classifier = Checkpoint::load(&a.classifier)?.classifier()?;
    inputs.extend([a.encoder.clone(), a.classifier.clone()]);
    let dir = out_dir(&cfg)?;
    let run = ResolvedRun::new("eval", &cfg, json!({ "threshold": a.threshold }), &inputs)?;
    let mut m = RunManifest::new(run)?;

    let metrics = evaluate_model(&encoder, &classifier, &test, a.threshold)?;
    save_text(&mut m, &dir, "metrics", "metrics.csv", &metrics_csv("eval", &metrics))?;
    m.summary = json!(metrics);
    println!("accuracy {}, f1 {}, auc {}", metrics.accuracy, metrics.f1, metrics.auc);
    finish(&mut m, &dir, started)?;
    Ok(())
}

pub fn sweep(mut cfg: ExperimentConfig, a: SweepArgs) -> Result<(), CliError> {
    let started = Instant::now();
    apply_data_args(&mut cfg, &a.data);
    if let Some(f) = &a.factors {
        cfg.sweep = Some(crate::config::SweepSection { factors: f.clone() });
    }
    if let Some(e) = a.epochs {
        cfg.classifier.epochs = e;
    }
    let cfg = cfg.resolve()?;
    let factors = match &cfg.sweep {
        Some(s) => s.factors.clone(),
        None => return Err(Error::Config("no distortion factors: pass --factors or configure sweep".into()).into()),
    };
    let data = build_data(&cfg)?;
    let test = data
        .test
        .as_ref()
        .ok_or_else(|| Error::Config("the sweep records test metrics and needs test data".into()))?;
    let encoder = load_encoder(&a.encoder)?;
    let dir = out_dir(&cfg)?;
    let mut inputs = data.inputs.clone();
    inputs.push(a.encoder.clone());
    let run = ResolvedRun::new("sweep", &cfg, json!({ "encoder": a.encoder }), &inputs)?;
    let mut m = RunManifest::new(run)?;

    let sweep_cfg = PriorSweepConfig {
        factors,
        classifier: cfg.classifier.clone(),
    };
    let rows = prior_sweep(&encoder, &data.train, test, &sweep_cfg)?;
    let run_id = format!("sweep-{}-seed{}", cfg.classifier.loss.name(), cfg.seed);
    save_text(&mut m, &dir, "sweep", "sweep.csv", &sweep_csv(&run_id, &rows))?;
    let finals: BTreeMap<String, f64> = rows
        .iter()
        .filter(|r| r.epoch == cfg.classifier.epochs)
        .map(|r| (r.b_dis.to_string(), r.metrics.auc))
        .collect();
    m.summary = json!({ "final_auc": finals });
    println!("{} rows over {} factors", rows.len(), sweep_cfg.factors.len());
    finish(&mut m, &dir, started)?;
    Ok(())
}

pub fn check(seed: u64, a: CheckArgs) -> Result<(), CliError> {
    let mut failed = Vec::new();
    match a.suite {
        Suite::Theory => {
            let trials = a.trials.unwrap_or(THEORY_TRIALS);
            let l = lemma1_numeric_check(trials, CHECK_MAX_DIM, seed)?;
            println!(
                "lemma1: trials {}, violations: {}, worst excess {:e}, grid {} points, grid violations: {}",
                l.trials, l.violations, l.worst_excess, l.grid_points, l.grid_violations
            );
            if !l.passed() {
                failed.push("lemma1".to_owned());
            }
            let e = equivalence_check(trials, seed)?;
            println!(
                "equivalence: trials {}, max abs diff {:e}, violations: {}",
                e.trials, e.max_abs_diff, e.violations
            );
            if !e.passed() {
                failed.push("equivalence".to_owned());
            }
            println!("violations: {}", l.violations + l.grid_violations + e.violations);
        }
        Suite::Gradients => {
            for r in gradient_check_suite(a.trials.unwrap_or(GRADIENT_CONFIGS), seed)? {
                println!(
                    "{}: configs {}, max rel error {:e}, branch hits {:?}, {}",
                    r.name,
                    r.configs,
                    r.max_rel_error,
                    r.branch_hits,
                    if r.passed() { "ok" } else { "FAILED" }
                );
                if !r.passed() {
                    failed.push(r.name);
                }
            }
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::CheckFailed(failed))
    }
}
