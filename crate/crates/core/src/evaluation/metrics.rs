use serde::{Deserialize, Serialize};

use crate::data::PuDataset;
use crate::error::{Error, Result};
use crate::models::{Encoder, LinearClassifier};

fn check_lengths(op: &'static str, a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::dim(op, format!("{a} predictions vs {b} labels")));
    }
    if a == 0 {
        return Err(Error::dim(op, "empty input"));
    }
    Ok(())
}

pub fn accuracy(pred: &[bool], truth: &[bool]) -> Result<f64> {
    check_lengths("accuracy", pred.len(), truth.len())?;
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / pred.len() as f64)
}

/// `2TP / (2TP + FP + FN)`, zero when there are no true positives.
pub fn f1_score(pred: &[bool], truth: &[bool]) -> Result<f64> {
    check_lengths("f1_score", pred.len(), truth.len())?;
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for (&p, &t) in pred.iter().zip(truth) {
        match (p, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            (false, false) => {}
        }
    }
    if tp == 0 {
        return Ok(0.0);
    }
    Ok(2.0 * tp as f64 / (2 * tp + fp + fneg) as f64)
}

/// Area under the ROC curve via the Mann–Whitney rank sum with midranks.
pub fn auc(scores: &[f64], truth: &[bool]) -> Result<f64> {
    check_lengths("auc", scores.len(), truth.len())?;
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::Numeric(format!("score {i} is NaN")));
    }
    let n_pos = truth.iter().filter(|&&t| t).count();
    let n_neg = truth.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Composition(format!(
            "AUC needs both classes, got {n_pos} positives and {n_neg} negatives"
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of ranks of positives; ranks are doubled to stay in integers.
    let mut rank_sum_x2: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1..=j+1 share the midrank (i+j+2)/2.
        let midrank_x2 = (i + j + 2) as u64;
        let pos_in_group = order[i..=j].iter().filter(|&&k| truth[k]).count() as u64;
        rank_sum_x2 += pos_in_group * midrank_x2;
        i = j + 1;
    }
    let (p, n) = (n_pos as u64, n_neg as u64);
    // U = R − p(p+1)/2, doubled.
    let u_x2 = rank_sum_x2 - p * (p + 1);
    Ok(u_x2 as f64 / (2 * p * n) as f64)
}

/// Metrics of one (model, split) evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub accuracy: f64,
    pub f1: f64,
    pub auc: f64,
    pub n_test: usize,
    pub threshold: f64,
    /// Training loss of the evaluated model, when known.
    pub loss: Option<f64>,
}

/// Hard labels are `score > threshold`; ties go to the negative class.
pub fn evaluate_scores(scores: &[f64], truth: &[bool], threshold: f64) -> Result<MetricsRecord> {
    let pred: Vec<bool> = scores.iter().map(|&s| s > threshold).collect();
    Ok(MetricsRecord {
        accuracy: accuracy(&pred, truth)?,
        f1: f1_score(&pred, truth)?,
        auc: auc(scores, truth)?,
        n_test: truth.len(),
        threshold,
        loss: None,
    })
}

/// Scores `classifier(encoder(x))` on a test set with true labels.
pub fn evaluate_model(
    encoder: &Encoder,
    classifier: &LinearClassifier,
    test: &PuDataset,
    threshold: f64,
) -> Result<MetricsRecord> {
    let truth = test
        .y_true
        .as_ref()
        .ok_or_else(|| Error::Label("evaluation needs true labels (y column)".into()))?;
    let h = encoder.forward(&test.features)?;
    let scores = classifier.positive_scores(&h)?;
    evaluate_scores(&scores, truth, threshold)
}
