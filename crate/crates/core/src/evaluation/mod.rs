//! Test-set metrics, model evaluation and the executable theory checks.

pub mod checks;
mod metrics;

pub use checks::{
    equivalence_check, gradient_check_suite, lemma1_numeric_check, EquivalenceReport, GradientReport, Lemma1Report,
};
pub use metrics::{accuracy, auc, evaluate_model, evaluate_scores, f1_score, MetricsRecord};
