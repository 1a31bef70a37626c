//! Loss functions: sigmoid-loss PU risks, weighted BCE, the PN risks used by
//! the theory checks, and the debiased contrastive objective.

pub mod contrastive;
pub mod pu;

pub use contrastive::{
    batch_contrastive_objective, biased_contrastive_objective, contrastive_objective_tape,
    debiased_negative_estimate, debiased_pair_loss, pair_similarity, ContrastiveConfig, ViewBatch,
};
pub use pu::{
    balance_pn_sigmoid_risk, imbnnpu_loss, nnpu_loss, risk_components, sigmoid_loss, softmax_risk,
    weighted_bce_loss, PuLossConfig, RiskComponents, Target,
};
