use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, AdamState};
use super::at_epoch;
use crate::data::{augment_views, epoch_batches, AugmentationPolicy};
use crate::error::{Error, Result};
use crate::losses::{contrastive_objective_tape, ContrastiveConfig};
use crate::models::{Architecture, Encoder, Projector};
use crate::rng::SeedStream;
use crate::tape::Tape;
use crate::tensor::{pairwise_sum, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub contrastive: ContrastiveConfig,
    pub augmentation: AugmentationPolicy,
    pub architecture: Architecture,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 128,
            lr: 3e-4,
            contrastive: ContrastiveConfig::default(),
            augmentation: AugmentationPolicy::default(),
            architecture: Architecture::default(),
            seed: 0,
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("pretraining needs at least one epoch".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config(format!("batch size must be >= 2, got {}", self.batch_size)));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be finite and >= 0, got {}", self.lr)));
        }
        self.contrastive.validate()?;
        self.augmentation.validate(None)?;
        self.architecture.validate()
    }

    /// Encoder and projector exactly as pretraining initializes them.
    pub fn initial_models(&self, input_dim: usize) -> Result<(Encoder, Projector)> {
        let stream = SeedStream::new(self.seed).child("pretrain");
        let arch = &self.architecture;
        let encoder = Encoder::init(input_dim, &arch.hidden, arch.repr_dim, &mut stream.child("init/encoder").rng())?;
        let projector = Projector::init(arch.repr_dim, arch.proj_dim, &mut stream.child("init/projector").rng())?;
        Ok((encoder, projector))
    }
}

#[derive(Debug, Clone)]
pub struct PretrainOutput {
    pub encoder: Encoder,
    pub projector: Projector,
    /// Mean batch objective per epoch.
    pub epoch_losses: Vec<f64>,
}

/// Contrastive pretraining of encoder and projector on unlabeled features.
pub fn pretrain(features: &Tensor, cfg: &PretrainConfig) -> Result<PretrainOutput> {
    cfg.validate()?;
    if features.shape().len() != 2 {
        return Err(Error::dim("pretrain", format!("features must be a matrix, got {:?}", features.shape())));
    }
    let (n, d) = (features.rows(), features.cols());
    if n < cfg.batch_size {
        return Err(Error::Config(format!("{n} rows cannot fill a batch of {}", cfg.batch_size)));
    }
    cfg.augmentation.validate(Some(d))?;
    let stream = SeedStream::new(cfg.seed).child("pretrain");
    let (mut encoder, mut projector) = cfg.initial_models(d)?;
    let names: Vec<String> = encoder
        .net
        .param_names("encoder")
        .into_iter()
        .chain(projector.net.param_names("projector"))
        .collect();
    let mut adam = {
        let params: Vec<&Tensor> = encoder.net.params().into_iter().chain(projector.net.params()).collect();
        AdamState::new(AdamConfig::with_lr(cfg.lr), &params)
    };
    let m = cfg.contrastive.views;

    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let epoch_stream = stream.child(format!("epoch/{epoch}"));
        let batches = epoch_batches(n, cfg.batch_size, 2, &mut epoch_stream.child("perm").rng());
        let mut aug_rng = epoch_stream.child("augment").rng();
        let mut losses = Vec::with_capacity(batches.len());
        for idx in &batches {
            let mut rows = Vec::with_capacity(idx.len() * m * d);
            for &i in idx {
                for v in augment_views(features.row(i), &cfg.augmentation, m, &mut aug_rng)? {
                    rows.extend(v);
                }
            }
            let x = Tensor::matrix(idx.len() * m, d, rows)?;

            let mut tape = Tape::new();
            let enc_vars = encoder.net.register(&mut tape, true);
            let proj_vars = projector.net.register(&mut tape, true);
            let loss = (|| {
                let xv = tape.constant(x);
                let h = encoder.forward_tape(&mut tape, &enc_vars, xv)?;
                let z = projector.forward_tape(&mut tape, &proj_vars, h)?;
                contrastive_objective_tape(&mut tape, z, idx.len(), &cfg.contrastive)
            })()
            .map_err(at_epoch(epoch))?;
            let value = tape.value(loss).item().expect("objective is scalar");
            if !value.is_finite() {
                return Err(Error::Training {
                    at: format!("epoch {epoch}"),
                    detail: format!("non-finite objective {value}"),
                });
            }
            losses.push(value);
            let grads = tape.backward(loss)?;
            let vars: Vec<_> = enc_vars.vars().into_iter().chain(proj_vars.vars()).collect();
            let g: Vec<&Tensor> = vars.iter().map(|&v| grads.get(v).expect("parameter gradient")).collect();
            let mut params: Vec<&mut Tensor> = encoder
                .net
                .params_mut()
                .into_iter()
                .chain(projector.net.params_mut())
                .collect();
            adam.update(&mut params, &g, &names).map_err(at_epoch(epoch))?;
        }
        epoch_losses.push(pairwise_sum(&losses) / losses.len() as f64);
    }
    Ok(PretrainOutput {
        encoder,
        projector,
        epoch_losses,
    })
}
