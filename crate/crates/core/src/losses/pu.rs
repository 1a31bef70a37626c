//! Sigmoid-loss risk terms and the PU / PN risk estimators built from them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tape::{sigmoid, Tape, Var};
use crate::tensor::{pairwise_sum, Tensor};

/// Probabilities are clipped to `[PROB_EPS, 1 - PROB_EPS]` before any log.
pub const PROB_EPS: f64 = 1e-12;

/// Desired share of the positive term in the imbalanced nnPU loss.
pub const DEFAULT_PI_PRIME: f64 = 0.5;

/// Target class of a sigmoid-loss term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Positive,
    Negative,
}

impl Target {
    pub fn sign(self) -> f64 {
        match self {
            Target::Positive => 1.0,
            Target::Negative => -1.0,
        }
    }

    pub fn from_positive(is_positive: bool) -> Self {
        if is_positive {
            Target::Positive
        } else {
            Target::Negative
        }
    }
}

/// `ℓ(z, t) = 1 / (1 + exp(t·z))`, i.e. `σ(−t·z)`.
pub fn sigmoid_loss(score: f64, target: Target) -> f64 {
    sigmoid(-target.sign() * score)
}

/// The partial empirical risks every PU loss is assembled from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskComponents {
    /// Labeled positives scored toward +1.
    pub l_pos_as_pos: f64,
    /// Unlabeled samples scored toward −1.
    pub l_unl_as_neg: f64,
    /// Labeled positives scored toward −1.
    pub l_pos_as_neg: f64,
    pub n_pos: usize,
    pub n_unl: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PuLossConfig {
    /// Proportion of positives among the unlabeled samples, `p(y=1|s=0)`.
    pub pi: f64,
    /// Share of the total loss assigned to the positive term.
    pub pi_prime: f64,
}

impl PuLossConfig {
    pub fn new(pi: f64, pi_prime: f64) -> Result<Self> {
        let cfg = Self { pi, pi_prime };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_default_pi_prime(pi: f64) -> Result<Self> {
        Self::new(pi, DEFAULT_PI_PRIME)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pi > 0.0 && self.pi < 1.0) {
            return Err(Error::Config(format!("class prior pi must lie in (0, 1), got {}", self.pi)));
        }
        if !(self.pi_prime > 0.0 && self.pi_prime < 1.0) {
            return Err(Error::Config(format!(
                "pi_prime must lie in (0, 1), got {}",
                self.pi_prime
            )));
        }
        Ok(())
    }
}

fn label_counts(labeled: &[bool]) -> Result<(usize, usize)> {
    let n_pos = labeled.iter().filter(|&&s| s).count();
    let n_unl = labeled.len() - n_pos;
    if n_pos == 0 || n_unl == 0 {
        return Err(Error::Composition(format!(
            "batch needs labeled positives and unlabeled samples (got {n_pos} and {n_unl})"
        )));
    }
    Ok((n_pos, n_unl))
}

/// Mean sigmoid losses of a batch split by PU label (`true` = labeled positive).
pub fn risk_components(scores: &[f64], labeled: &[bool]) -> Result<RiskComponents> {
    if scores.len() != labeled.len() {
        return Err(Error::dim(
            "risk_components",
            format!("{} scores vs {} labels", scores.len(), labeled.len()),
        ));
    }
    let (n_pos, n_unl) = label_counts(labeled)?;
    let pick = |want: bool, target: Target| -> Vec<f64> {
        scores
            .iter()
            .zip(labeled)
            .filter(|(_, &s)| s == want)
            .map(|(&z, _)| sigmoid_loss(z, target))
            .collect()
    };
    Ok(RiskComponents {
        l_pos_as_pos: pairwise_sum(&pick(true, Target::Positive)) / n_pos as f64,
        l_unl_as_neg: pairwise_sum(&pick(false, Target::Negative)) / n_unl as f64,
        l_pos_as_neg: pairwise_sum(&pick(true, Target::Negative)) / n_pos as f64,
        n_pos,
        n_unl,
    })
}

/// `π·ℓ⁺₁ + max{0, ℓ⁻₀ − π·ℓ⁺₀}`.
pub fn nnpu_loss(rc: &RiskComponents, cfg: &PuLossConfig) -> f64 {
    let neg = rc.l_unl_as_neg - cfg.pi * rc.l_pos_as_neg;
    cfg.pi * rc.l_pos_as_pos + if neg > 0.0 { neg } else { 0.0 }
}

/// `π′·ℓ⁺₁ + (1−π′)/(1−π) · max{0, ℓ⁻₀ − π·ℓ⁺₀}`.
pub fn imbnnpu_loss(rc: &RiskComponents, cfg: &PuLossConfig) -> f64 {
    let neg = rc.l_unl_as_neg - cfg.pi * rc.l_pos_as_neg;
    let weight = (1.0 - cfg.pi_prime) / (1.0 - cfg.pi);
    cfg.pi_prime * rc.l_pos_as_pos + weight * if neg > 0.0 { neg } else { 0.0 }
}

/// Batch-averaged `−(w·y·log p + (1−y)·log(1−p))` on clipped probabilities.
pub fn weighted_bce_loss(probs: &[f64], positive: &[bool], w_pos: f64) -> Result<f64> {
    if probs.len() != positive.len() || probs.is_empty() {
        return Err(Error::dim(
            "weighted_bce_loss",
            format!("{} probabilities vs {} labels", probs.len(), positive.len()),
        ));
    }
    if !(w_pos > 0.0) {
        return Err(Error::Config(format!("positive weight must be > 0, got {w_pos}")));
    }
    let terms: Vec<f64> = probs
        .iter()
        .zip(positive)
        .map(|(&p, &y)| {
            let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
            if y {
                -w_pos * p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .collect();
    Ok(pairwise_sum(&terms) / terms.len() as f64)
}

/// Positive-class weight that balances a label vector: negatives / positives.
pub fn balancing_weight(positive: &[bool]) -> Result<f64> {
    let (n_pos, n_neg) = label_counts(positive)?;
    Ok(n_neg as f64 / n_pos as f64)
}

/// Class-prior-weighted PN risk under the sigmoid loss:
/// `π′·E₊[ℓ(z,+1)] + (1−π′)·E₋[ℓ(z,−1)]`.
pub fn balance_pn_sigmoid_risk(scores: &[f64], positive: &[bool], pi_prime: f64) -> Result<f64> {
    if scores.len() != positive.len() {
        return Err(Error::dim("balance_pn_sigmoid_risk", "scores and labels differ in length"));
    }
    let (n_pos, n_neg) = label_counts(positive)?;
    let (mut pos, mut neg) = (Vec::with_capacity(n_pos), Vec::with_capacity(n_neg));
    for (&z, &y) in scores.iter().zip(positive) {
        if y {
            pos.push(sigmoid_loss(z, Target::Positive));
        } else {
            neg.push(sigmoid_loss(z, Target::Negative));
        }
    }
    Ok(pi_prime * pairwise_sum(&pos) / n_pos as f64
        + (1.0 - pi_prime) * pairwise_sum(&neg) / n_neg as f64)
}

/// Negative log softmax probability of the true class for one logit pair
/// `(positive, negative)`, with the probability clipped at [`PROB_EPS`].
pub fn softmax_nll(logits: [f64; 2], positive: bool) -> f64 {
    let (own, other) = if positive {
        (logits[0], logits[1])
    } else {
        (logits[1], logits[0])
    };
    // −log p = log(1 + exp(other − own)), evaluated without overflow.
    let d = other - own;
    let nll = if d > 0.0 {
        d + (-d).exp().ln_1p()
    } else {
        d.exp().ln_1p()
    };
    nll.min(-PROB_EPS.ln())
}

/// Softmax risk of a two-logit classifier with the same class weighting as
/// [`balance_pn_sigmoid_risk`].
pub fn softmax_risk(logits: &[[f64; 2]], positive: &[bool], pi_prime: f64) -> Result<f64> {
    if logits.len() != positive.len() {
        return Err(Error::dim("softmax_risk", "logits and labels differ in length"));
    }
    let (n_pos, n_neg) = label_counts(positive)?;
    let (mut pos, mut neg) = (Vec::with_capacity(n_pos), Vec::with_capacity(n_neg));
    for (&l, &y) in logits.iter().zip(positive) {
        if y {
            pos.push(softmax_nll(l, true));
        } else {
            neg.push(softmax_nll(l, false));
        }
    }
    Ok(pi_prime * pairwise_sum(&pos) / n_pos as f64
        + (1.0 - pi_prime) * pairwise_sum(&neg) / n_neg as f64)
}

// ---- differentiable versions ---------------------------------------------

/// Risk components recorded on a tape.
#[derive(Debug, Clone, Copy)]
pub struct RiskVars {
    pub l_pos_as_pos: Var,
    pub l_unl_as_neg: Var,
    pub l_pos_as_neg: Var,
}

fn mask_like(scores: &Tensor, keep: impl Fn(usize) -> bool) -> Tensor {
    let data = (0..scores.len()).map(|i| if keep(i) { 1.0 } else { 0.0 }).collect();
    Tensor::new(scores.shape().to_vec(), data).expect("mask matches score shape")
}

pub fn risk_components_tape(tape: &mut Tape, scores: Var, labeled: &[bool]) -> Result<RiskVars> {
    let z = tape.value(scores).clone();
    if z.len() != labeled.len() {
        return Err(Error::dim(
            "risk_components",
            format!("{} scores vs {} labels", z.len(), labeled.len()),
        ));
    }
    label_counts(labeled)?;
    let pos_mask = mask_like(&z, |i| labeled[i]);
    let unl_mask = mask_like(&z, |i| !labeled[i]);
    let neg_z = tape.neg(scores)?;
    let toward_pos = tape.sigmoid(neg_z)?;
    let toward_neg = tape.sigmoid(scores)?;
    Ok(RiskVars {
        l_pos_as_pos: tape.masked_mean(toward_pos, &pos_mask)?,
        l_unl_as_neg: tape.masked_mean(toward_neg, &unl_mask)?,
        l_pos_as_neg: tape.masked_mean(toward_neg, &pos_mask)?,
    })
}

fn clamped_negative_term(tape: &mut Tape, rc: &RiskVars, pi: f64) -> Result<Var> {
    let scaled = tape.scale(rc.l_pos_as_neg, pi)?;
    let diff = tape.sub(rc.l_unl_as_neg, scaled)?;
    tape.max_const(diff, 0.0)
}

pub fn nnpu_loss_tape(tape: &mut Tape, rc: &RiskVars, cfg: &PuLossConfig) -> Result<Var> {
    let neg = clamped_negative_term(tape, rc, cfg.pi)?;
    let pos = tape.scale(rc.l_pos_as_pos, cfg.pi)?;
    tape.add(pos, neg)
}

pub fn imbnnpu_loss_tape(tape: &mut Tape, rc: &RiskVars, cfg: &PuLossConfig) -> Result<Var> {
    let neg = clamped_negative_term(tape, rc, cfg.pi)?;
    let neg = tape.scale(neg, (1.0 - cfg.pi_prime) / (1.0 - cfg.pi))?;
    let pos = tape.scale(rc.l_pos_as_pos, cfg.pi_prime)?;
    tape.add(pos, neg)
}

/// Weighted BCE on logits: `p = σ(z)` and `1 − p = σ(−z)`, each clipped
/// below at [`PROB_EPS`].
pub fn weighted_bce_tape(tape: &mut Tape, logits: Var, positive: &[bool], w_pos: f64) -> Result<Var> {
    let z = tape.value(logits).clone();
    if z.len() != positive.len() {
        return Err(Error::dim(
            "weighted_bce_loss",
            format!("{} logits vs {} labels", z.len(), positive.len()),
        ));
    }
    if !(w_pos > 0.0) {
        return Err(Error::Config(format!("positive weight must be > 0, got {w_pos}")));
    }
    let n = z.len() as f64;
    let pos_w = mask_like(&z, |i| positive[i]).map(|m| m * w_pos / n);
    let neg_w = mask_like(&z, |i| !positive[i]).map(|m| m / n);

    let p = tape.sigmoid(logits)?;
    let p = tape.max_const(p, PROB_EPS)?;
    let log_p = tape.log(p)?;
    let nz = tape.neg(logits)?;
    let q = tape.sigmoid(nz)?;
    let q = tape.max_const(q, PROB_EPS)?;
    let log_q = tape.log(q)?;

    let pw = tape.constant(pos_w);
    let nw = tape.constant(neg_w);
    let a = tape.mul(log_p, pw)?;
    let b = tape.mul(log_q, nw)?;
    let s = tape.add(a, b)?;
    let total = tape.sum(s)?;
    tape.neg(total)
}
