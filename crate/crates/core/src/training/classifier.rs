use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, AdamState};
use super::at_epoch;
use crate::data::sampler::has_both_kinds;
use crate::data::{epoch_batches, sample_minibatch, PuDataset};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_scores, MetricsRecord};
use crate::losses::pu::{imbnnpu_loss_tape, nnpu_loss_tape, risk_components_tape, weighted_bce_tape};
use crate::losses::pu::DEFAULT_PI_PRIME;
use crate::losses::PuLossConfig;
use crate::models::{Architecture, Encoder, LinearClassifier};
use crate::rng::SeedStream;
use crate::tape::{Tape, Var};
use crate::tensor::{pairwise_sum, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    ImbNnPu,
    NnPu,
    /// Unlabeled rows treated as negatives.
    Bce,
    /// As `Bce`, with labeled positives weighted by unlabeled / labeled.
    Wbce,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::ImbNnPu => "imbnnpu",
            LossKind::NnPu => "nnpu",
            LossKind::Bce => "bce",
            LossKind::Wbce => "wbce",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "imbnnpu" => Ok(LossKind::ImbNnPu),
            "nnpu" => Ok(LossKind::NnPu),
            "bce" => Ok(LossKind::Bce),
            "wbce" => Ok(LossKind::Wbce),
            other => Err(Error::Config(format!("unknown loss {other:?} (imbnnpu, nnpu, bce, wbce)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Class prior among unlabeled rows; taken from the data when absent.
    pub pi: Option<f64>,
    pub pi_prime: f64,
    pub loss: LossKind,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 128,
            lr: 3e-4,
            pi: None,
            pi_prime: DEFAULT_PI_PRIME,
            loss: LossKind::ImbNnPu,
            seed: 0,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("classifier training needs at least one epoch".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be finite and >= 0, got {}", self.lr)));
        }
        if let Some(pi) = self.pi {
            PuLossConfig::new(pi, self.pi_prime)?;
        }
        Ok(())
    }

    /// The loss configuration with `π` resolved against `data`.
    pub fn pu_loss(&self, data: &PuDataset) -> Result<PuLossConfig> {
        let pi = self.pi.or(data.pi_true).ok_or_else(|| {
            Error::Config("class prior unknown: set pi or provide true labels".into())
        })?;
        PuLossConfig::new(pi, self.pi_prime)
    }

    /// The classifier a frozen-encoder run starts from.
    pub fn initial_classifier(&self, repr_dim: usize) -> Result<LinearClassifier> {
        init_classifier(&SeedStream::new(self.seed).child(PROBE_STREAM), repr_dim)
    }
}

const PROBE_STREAM: &str = "classifier";

fn init_classifier(stream: &SeedStream, repr_dim: usize) -> Result<LinearClassifier> {
    LinearClassifier::init(repr_dim, 1, &mut stream.child("init/classifier").rng())
}

/// One epoch of a training trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub loss: f64,
    pub metrics: Option<MetricsRecord>,
}

#[derive(Debug, Clone)]
pub struct TrainRun {
    pub classifier: LinearClassifier,
    /// The trained encoder when it was not frozen.
    pub encoder: Option<Encoder>,
    pub epochs: Vec<EpochRecord>,
}

enum Objective {
    Pu { kind: LossKind, cfg: PuLossConfig },
    Bce { targets: Vec<bool>, w_pos: f64 },
}

impl Objective {
    fn for_config(data: &PuDataset, cfg: &ClassifierConfig) -> Result<Self> {
        Ok(match cfg.loss {
            LossKind::ImbNnPu | LossKind::NnPu => Objective::Pu {
                kind: cfg.loss,
                cfg: cfg.pu_loss(data)?,
            },
            LossKind::Bce | LossKind::Wbce => {
                if data.y_true.is_none() {
                    return Err(Error::Label(format!(
                        "loss {} needs true labels (y column) in the training data",
                        cfg.loss
                    )));
                }
                let (n_lab, n_unl) = (data.n_labeled(), data.n_unlabeled());
                if n_lab == 0 || n_unl == 0 {
                    return Err(Error::Composition("training data needs labeled and unlabeled rows".into()));
                }
                let w_pos = if cfg.loss == LossKind::Wbce { n_unl as f64 / n_lab as f64 } else { 1.0 };
                Objective::Bce {
                    targets: data.labeled.clone(),
                    w_pos,
                }
            }
        })
    }

    fn supervised(data: &PuDataset) -> Result<Self> {
        let y = data
            .y_true
            .as_ref()
            .ok_or_else(|| Error::Label("supervised baseline needs true labels (y column)".into()))?;
        let n_pos = y.iter().filter(|&&p| p).count();
        if n_pos == 0 || n_pos == y.len() {
            return Err(Error::Composition("supervised baseline needs both classes".into()));
        }
        Ok(Objective::Bce {
            targets: y.clone(),
            w_pos: (y.len() - n_pos) as f64 / n_pos as f64,
        })
    }

    fn needs_both_kinds(&self) -> bool {
        matches!(self, Objective::Pu { .. })
    }

    fn loss(&self, tape: &mut Tape, scores: Var, data: &PuDataset, idx: &[usize]) -> Result<Var> {
        match self {
            Objective::Pu { kind, cfg } => {
                let labeled: Vec<bool> = idx.iter().map(|&i| data.labeled[i]).collect();
                let rc = risk_components_tape(tape, scores, &labeled)?;
                if *kind == LossKind::NnPu {
                    nnpu_loss_tape(tape, &rc, cfg)
                } else {
                    imbnnpu_loss_tape(tape, &rc, cfg)
                }
            }
            Objective::Bce { targets, w_pos } => {
                let y: Vec<bool> = idx.iter().map(|&i| targets[i]).collect();
                weighted_bce_tape(tape, scores, &y, *w_pos)
            }
        }
    }
}

/// The epoch's batches; for PU losses a batch missing a label kind is
/// replaced by a uniform redraw that contains both.
fn batches_for_epoch(
    data: &PuDataset,
    batch_size: usize,
    both_kinds: bool,
    rng: &mut impl Rng,
) -> Result<Vec<Vec<usize>>> {
    let size = batch_size.min(data.len());
    let mut batches = epoch_batches(data.len(), size, if both_kinds { 2 } else { 1 }, rng);
    if both_kinds {
        for b in &mut batches {
            if !has_both_kinds(data, b) {
                *b = sample_minibatch(data, b.len(), rng, true)?;
            }
        }
    }
    Ok(batches)
}

fn evaluate_on(test: Option<&(Tensor, Vec<bool>)>, clf: &LinearClassifier, encoder: Option<&Encoder>) -> Result<Option<MetricsRecord>> {
    let Some((x, y)) = test else {
        return Ok(None);
    };
    let h = match encoder {
        Some(e) => e.forward(x)?,
        None => x.clone(),
    };
    Ok(Some(evaluate_scores(&clf.positive_scores(&h)?, y, 0.0)?))
}

fn test_pair(test: Option<&PuDataset>) -> Result<Option<(Tensor, Vec<bool>)>> {
    test.map(|t| {
        let y = t
            .y_true
            .clone()
            .ok_or_else(|| Error::Label("test data needs true labels (y column)".into()))?;
        Ok((t.features.clone(), y))
    })
    .transpose()
}

/// Shared loop. With `frozen`, representations are computed once and only
/// the classifier trains; otherwise `scratch` is trained jointly.
fn fit(
    frozen: Option<&Encoder>,
    mut scratch: Option<Encoder>,
    data: &PuDataset,
    cfg: &ClassifierConfig,
    objective: &Objective,
    test: Option<&PuDataset>,
    stream: &SeedStream,
) -> Result<TrainRun> {
    cfg.validate()?;
    let trunk_width = frozen.or(scratch.as_ref()).map(Encoder::input_dim).expect("one encoder");
    if data.dim() != trunk_width {
        return Err(Error::dim(
            "train_classifier",
            format!("data width {} for an encoder taking {trunk_width}", data.dim()),
        ));
    }
    let repr_dim = frozen.or(scratch.as_ref()).map(Encoder::repr_dim).expect("one encoder");
    let mut clf = init_classifier(stream, repr_dim)?;

    // Frozen path: fixed representations for training and test.
    let inputs = match frozen {
        Some(e) => e.forward(&data.features)?,
        None => data.features.clone(),
    };
    let test = test_pair(test)?;
    let test = match (frozen, test) {
        (Some(e), Some((x, y))) => Some((e.forward(&x)?, y)),
        (_, t) => t,
    };

    let mut names = clf.param_names();
    if let Some(enc) = &scratch {
        names = enc.net.param_names("encoder").into_iter().chain(names).collect();
    }
    let mut adam = {
        let mut params: Vec<&Tensor> = scratch.as_ref().map(|e| e.net.params()).unwrap_or_default();
        params.extend(clf.params());
        AdamState::new(AdamConfig::with_lr(cfg.lr), &params)
    };

    let mut records = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut rng = stream.child(format!("epoch/{epoch}")).rng();
        let batches = batches_for_epoch(data, cfg.batch_size, objective.needs_both_kinds(), &mut rng)
            .map_err(at_epoch(epoch))?;
        let mut losses = Vec::with_capacity(batches.len());
        for idx in &batches {
            let mut tape = Tape::new();
            let enc_vars = scratch.as_ref().map(|e| e.net.register(&mut tape, true));
            let clf_vars = clf.register(&mut tape, true);
            let loss = (|| {
                let x = tape.constant(inputs.select_rows(idx)?);
                let h = match (&scratch, &enc_vars) {
                    (Some(e), Some(v)) => e.forward_tape(&mut tape, v, x)?,
                    _ => x,
                };
                let scores = clf.score_tape(&mut tape, clf_vars, h)?;
                objective.loss(&mut tape, scores, data, idx)
            })()
            .map_err(at_epoch(epoch))?;
            losses.push(tape.value(loss).item().expect("loss is scalar"));
            let grads = tape.backward(loss)?;
            let mut vars = enc_vars.map(|v| v.vars()).unwrap_or_default();
            vars.extend([clf_vars.weight, clf_vars.bias]);
            let g: Vec<&Tensor> = vars.iter().map(|&v| grads.get(v).expect("parameter gradient")).collect();
            let mut params: Vec<&mut Tensor> = scratch.as_mut().map(|e| e.net.params_mut()).unwrap_or_default();
            params.extend(clf.params_mut());
            adam.update(&mut params, &g, &names).map_err(at_epoch(epoch))?;
        }
        let metrics = evaluate_on(test.as_ref(), &clf, scratch.as_ref()).map_err(at_epoch(epoch))?;
        records.push(EpochRecord {
            epoch: epoch + 1,
            loss: pairwise_sum(&losses) / losses.len() as f64,
            metrics,
        });
    }
    Ok(TrainRun {
        classifier: clf,
        encoder: scratch,
        epochs: records,
    })
}

/// Train a single-logit linear classifier on frozen representations.
/// `test`, when given, is evaluated after every epoch.
pub fn train_classifier(
    encoder: &Encoder,
    data: &PuDataset,
    cfg: &ClassifierConfig,
    test: Option<&PuDataset>,
) -> Result<TrainRun> {
    let objective = Objective::for_config(data, cfg)?;
    let stream = SeedStream::new(cfg.seed).child(PROBE_STREAM);
    fit(Some(encoder), None, data, cfg, &objective, test, &stream)
}

/// Train a freshly initialized encoder and classifier jointly on the
/// configured loss.
pub fn train_end_to_end(
    data: &PuDataset,
    arch: &Architecture,
    cfg: &ClassifierConfig,
    test: Option<&PuDataset>,
) -> Result<TrainRun> {
    arch.validate()?;
    let objective = Objective::for_config(data, cfg)?;
    let stream = SeedStream::new(cfg.seed).child("end_to_end");
    let encoder = Encoder::init(data.dim(), &arch.hidden, arch.repr_dim, &mut stream.child("init/encoder").rng())?;
    fit(None, Some(encoder), data, cfg, &objective, test, &stream)
}

/// Weighted BCE on true labels with `w_pos = negatives / positives`: on a
/// frozen encoder when given, otherwise end to end from scratch.
pub fn train_supervised_baseline(
    encoder: Option<&Encoder>,
    data: &PuDataset,
    arch: &Architecture,
    cfg: &ClassifierConfig,
    test: Option<&PuDataset>,
) -> Result<TrainRun> {
    let objective = Objective::supervised(data)?;
    let stream = SeedStream::new(cfg.seed).child("supervised");
    match encoder {
        Some(e) => fit(Some(e), None, data, cfg, &objective, test, &stream),
        None => {
            arch.validate()?;
            let e = Encoder::init(data.dim(), &arch.hidden, arch.repr_dim, &mut stream.child("init/encoder").rng())?;
            fit(None, Some(e), data, cfg, &objective, test, &stream)
        }
    }
}

/// Positive-class weight the supervised baseline uses on `data`.
pub fn supervised_weight(data: &PuDataset) -> Result<f64> {
    match Objective::supervised(data)? {
        Objective::Bce { w_pos, .. } => Ok(w_pos),
        Objective::Pu { .. } => unreachable!("supervised objective is BCE"),
    }
}
