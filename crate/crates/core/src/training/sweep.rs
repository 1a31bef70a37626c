use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::classifier::{train_classifier, ClassifierConfig};
use crate::data::PuDataset;
use crate::error::{Error, Result};
use crate::evaluation::MetricsRecord;
use crate::models::Encoder;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSweepConfig {
    /// Multipliers applied to the class prior.
    pub factors: Vec<f64>,
    pub classifier: ClassifierConfig,
}

impl PriorSweepConfig {
    pub fn validate(&self, pi: f64) -> Result<()> {
        if self.factors.is_empty() {
            return Err(Error::Config("sweep needs at least one distortion factor".into()));
        }
        for &b in &self.factors {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::Config(format!("distortion factor must be > 0, got {b}")));
            }
            if !(b * pi < 1.0) {
                return Err(Error::Config(format!("distorted prior {b} * {pi} = {} is not below 1", b * pi)));
            }
        }
        self.classifier.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub b_dis: f64,
    pub epoch: usize,
    pub loss: f64,
    pub metrics: MetricsRecord,
}

/// One classifier per factor with `π` replaced by `b_dis·π`. Every factor
/// trains from the same seed, so `b_dis = 1` reproduces a plain run.
/// Factors run in parallel; rows come back in factor order.
pub fn prior_sweep(
    encoder: &Encoder,
    data: &PuDataset,
    test: &PuDataset,
    sweep: &PriorSweepConfig,
) -> Result<Vec<SweepRow>> {
    let pi = sweep.classifier.pu_loss(data)?.pi;
    sweep.validate(pi)?;
    let per_factor: Vec<Vec<SweepRow>> = sweep
        .factors
        .par_iter()
        .map(|&b| {
            let cfg = ClassifierConfig {
                pi: Some(b * pi),
                ..sweep.classifier.clone()
            };
            let run = train_classifier(encoder, data, &cfg, Some(test))?;
            Ok(run
                .epochs
                .iter()
                .map(|r| SweepRow {
                    b_dis: b,
                    epoch: r.epoch,
                    loss: r.loss,
                    metrics: r.metrics.expect("test set given"),
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(per_factor.into_iter().flatten().collect())
}
