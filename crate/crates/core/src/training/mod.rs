//! Adam, contrastive pretraining, classifier training, baselines and the
//! prior-distortion sweep.

mod adam;
mod classifier;
mod pretrain;
mod sweep;
mod trace;

use crate::error::Error;

pub use adam::{AdamConfig, AdamState};
pub use classifier::{
    supervised_weight, train_classifier, train_end_to_end, train_supervised_baseline, ClassifierConfig, EpochRecord,
    LossKind, TrainRun,
};
pub use pretrain::{pretrain, PretrainConfig, PretrainOutput};
pub use sweep::{prior_sweep, PriorSweepConfig, SweepRow};
pub use trace::{loss_trace_csv, metrics_csv, sweep_csv, trace_csv};

/// Attach an epoch index to numeric failures raised inside a training step.
fn at_epoch(epoch: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Numeric(detail) => Error::Training {
            at: format!("epoch {epoch}"),
            detail,
        },
        Error::Training { at, detail } => Error::Training {
            at: format!("epoch {epoch}, {at}"),
            detail,
        },
        other => other,
    }
}
