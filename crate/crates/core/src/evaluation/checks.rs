//! Executable checks: the sigmoid/softmax loss inequality, the two-logit
//! collapse identity, and finite-difference verification of every loss
//! gradient.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::gradcheck::{finite_difference_gradient, relative_error};
use crate::losses::contrastive::ContrastiveConfig;
use crate::losses::pu::{
    imbnnpu_loss_tape, nnpu_loss_tape, risk_components_tape, weighted_bce_tape, PROB_EPS,
};
use crate::losses::{
    balance_pn_sigmoid_risk, batch_contrastive_objective, contrastive_objective_tape, imbnnpu_loss,
    nnpu_loss, risk_components, sigmoid_loss, softmax_risk, weighted_bce_loss, PuLossConfig, Target,
    ViewBatch,
};
use crate::models::{collapse_two_logit, softmax_positive, LinearClassifier};
use crate::rng::SeedStream;
use crate::tape::{sigmoid, Tape};
use crate::tensor::{l2_normalize, Tensor};

/// Slack allowed on the sigmoid-risk ≤ softmax-risk inequality.
pub const LEMMA1_SLACK: f64 = 1e-12;
/// Largest allowed gap between the collapsed sigmoid and the softmax.
pub const EQUIVALENCE_TOLERANCE: f64 = 1e-12;
pub const FD_STEP: f64 = 1e-4;
pub const GRADIENT_TOLERANCE: f64 = 1e-4;
const GRADIENT_NORM_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Report {
    pub trials: usize,
    pub violations: usize,
    /// Largest `sigmoid_risk − softmax_risk` seen (negative when every
    /// trial holds strictly).
    pub worst_excess: f64,
    pub grid_points: usize,
    pub grid_violations: usize,
}

impl Lemma1Report {
    pub fn passed(&self) -> bool {
        self.violations == 0 && self.grid_violations == 0
    }
}

fn draw_labels(rng: &mut impl Rng, n: usize) -> Vec<bool> {
    let mut y: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
    y[0] = true;
    y[1] = false;
    y
}

fn draw_two_logit(rng: &mut impl Rng, d: usize) -> LinearClassifier {
    let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-2.0..2.0)).collect() };
    let (u, v, b) = (draw(d), draw(d), draw(2));
    LinearClassifier::two_logit(u, v, b[0], b[1]).expect("rows share a width")
}

/// Draw random two-logit classifiers, batches, labels and `π′`, and compare
/// the class-weighted sigmoid risk of the collapsed classifier against the
/// softmax risk of the original. Also checks `1 − p ≤ −log p` on
/// `p ∈ {0.01, …, 0.99}`.
pub fn lemma1_numeric_check(trials: usize, max_dim: usize, seed: u64) -> Result<Lemma1Report> {
    let mut rng = SeedStream::new(seed).child("lemma1").rng();
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..trials {
        let d = rng.random_range(1..=max_dim.max(1));
        let n = rng.random_range(2..=16);
        let clf = draw_two_logit(&mut rng, d);
        let x: Vec<f64> = (0..n * d).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)).collect();
        let x = Tensor::matrix(n, d, x)?;
        let y = draw_labels(&mut rng, n);
        let pi_prime = rng.random_range(0.01..0.99);

        let logits = clf.score(&x)?;
        let pairs: Vec<[f64; 2]> = (0..n).map(|i| [logits.get2(i, 0), logits.get2(i, 1)]).collect();
        let collapsed = collapse_two_logit(&clf)?.positive_scores(&x)?;
        let sig = balance_pn_sigmoid_risk(&collapsed, &y, pi_prime)?;
        let soft = softmax_risk(&pairs, &y, pi_prime)?;
        worst = worst.max(sig - soft);
        if sig > soft + LEMMA1_SLACK {
            violations += 1;
        }
    }
    let grid_violations = (1..=99)
        .map(|k| f64::from(k) / 100.0)
        .filter(|&p| 1.0 - p > -p.ln())
        .count();
    Ok(Lemma1Report {
        trials,
        violations,
        worst_excess: worst,
        grid_points: 99,
        grid_violations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub trials: usize,
    pub max_abs_diff: f64,
    pub violations: usize,
}

impl EquivalenceReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Max over random draws of `|σ(collapsed score) − softmax_pos(Wx + b)|`.
pub fn equivalence_check(trials: usize, seed: u64) -> Result<EquivalenceReport> {
    let mut rng = SeedStream::new(seed).child("equivalence").rng();
    let mut max_diff = 0.0f64;
    let mut violations = 0;
    for t in 0..trials {
        let d = rng.random_range(1..=8);
        let clf = draw_two_logit(&mut rng, d);
        let scale = if t % 2 == 0 { 1.0 } else { 10.0 };
        let x: Vec<f64> = (0..d).map(|_| scale * rng.random_range(-2.0..2.0)).collect();
        let x = Tensor::matrix(1, d, x)?;
        let logits = clf.score(&x)?;
        let soft = softmax_positive([logits.get2(0, 0), logits.get2(0, 1)]);
        let sig = sigmoid(collapse_two_logit(&clf)?.positive_scores(&x)?[0]);
        let diff = (sig - soft).abs();
        max_diff = max_diff.max(diff);
        if diff > EQUIVALENCE_TOLERANCE {
            violations += 1;
        }
    }
    Ok(EquivalenceReport {
        trials,
        max_abs_diff: max_diff,
        violations,
    })
}

/// Result of checking one loss against finite differences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientReport {
    pub name: String,
    pub configs: usize,
    pub max_rel_error: f64,
    /// Configurations where the loss's clamp was inactive / active.
    pub branch_hits: [usize; 2],
    pub has_clamp: bool,
}

impl GradientReport {
    pub fn passed(&self) -> bool {
        let branches = !self.has_clamp || (self.branch_hits[0] > 0 && self.branch_hits[1] > 0);
        self.max_rel_error < GRADIENT_TOLERANCE && branches
    }
}

/// One checked configuration: relative error and which clamp branch it hit.
type Probe = Option<(f64, bool)>;

fn compare(analytic: &Tensor, f: impl FnMut(&Tensor) -> Result<f64>, x: &Tensor) -> Result<f64> {
    let numeric = finite_difference_gradient(f, x, FD_STEP)?;
    Ok(relative_error(analytic, &numeric, GRADIENT_NORM_FLOOR))
}

fn probe_sigmoid(rng: &mut impl Rng) -> Result<Probe> {
    let n = rng.random_range(1..=12);
    let x = Tensor::vector((0..n).map(|_| rng.random_range(-6.0..6.0)).collect());
    let signs: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect();

    let mut tape = Tape::new();
    let z = tape.param(x.clone());
    let t = tape.constant(Tensor::vector(signs.clone()));
    let tz = tape.mul(z, t)?;
    let neg = tape.neg(tz)?;
    let l = tape.sigmoid(neg)?;
    let loss = tape.mean(l)?;
    let g = tape.backward(loss)?;

    let err = compare(
        g.get(z).expect("param"),
        |v| {
            let s: f64 = v
                .data()
                .iter()
                .zip(&signs)
                .map(|(&zi, &ti)| sigmoid_loss(zi, Target::from_positive(ti > 0.0)))
                .sum();
            Ok(s / n as f64)
        },
        &x,
    )?;
    Ok(Some((err, false)))
}

/// Scores whose negative-risk term lands on the requested side of the clamp
/// with a margin, or `None` to ask for a redraw.
fn pu_scores(rng: &mut impl Rng, want_clamped: bool, pi: f64) -> Option<(Tensor, Vec<bool>)> {
    let n = rng.random_range(4..=16);
    let mut labeled: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
    labeled[0] = true;
    labeled[1] = false;
    let scores: Vec<f64> = labeled
        .iter()
        .map(|&s| {
            if want_clamped {
                // Labeled high, unlabeled low: ℓ⁻₀ small, ℓ⁺₀ large.
                if s {
                    rng.random_range(1.0..5.0)
                } else {
                    rng.random_range(-6.0..-2.0)
                }
            } else {
                rng.random_range(-4.0..4.0)
            }
        })
        .collect();
    let rc = risk_components(&scores, &labeled).ok()?;
    let diff = rc.l_unl_as_neg - pi * rc.l_pos_as_neg;
    if diff.abs() < 1e-3 || (diff < 0.0) != want_clamped {
        return None;
    }
    Some((Tensor::vector(scores), labeled))
}

fn probe_pu(rng: &mut impl Rng, want_clamped: bool, imbalanced: bool) -> Result<Probe> {
    let pi = rng.random_range(0.05..0.9);
    let pi_prime = if imbalanced { rng.random_range(0.05..0.95) } else { pi };
    let cfg = PuLossConfig::new(pi, pi_prime)?;
    let Some((x, labeled)) = pu_scores(rng, want_clamped, pi) else {
        return Ok(None);
    };
    let mut tape = Tape::new();
    let z = tape.param(x.clone());
    let rv = risk_components_tape(&mut tape, z, &labeled)?;
    let loss = if imbalanced {
        imbnnpu_loss_tape(&mut tape, &rv, &cfg)?
    } else {
        nnpu_loss_tape(&mut tape, &rv, &cfg)?
    };
    let g = tape.backward(loss)?;
    let err = compare(
        g.get(z).expect("param"),
        |v| {
            let rc = risk_components(v.data(), &labeled)?;
            Ok(if imbalanced { imbnnpu_loss(&rc, &cfg) } else { nnpu_loss(&rc, &cfg) })
        },
        &x,
    )?;
    Ok(Some((err, want_clamped)))
}

fn probe_wbce(rng: &mut impl Rng, want_clipped: bool) -> Result<Probe> {
    let n = rng.random_range(2..=12);
    let positive = draw_labels(rng, n);
    let w_pos = rng.random_range(0.5..20.0);
    // Probabilities clip below 1e-12 once |logit| exceeds ~27.6 on the
    // wrong side; unclipped logits stay well inside.
    let logits: Vec<f64> = positive
        .iter()
        .map(|&y| {
            if want_clipped && rng.random_bool(0.5) {
                let z = rng.random_range(30.0..40.0);
                if y {
                    -z
                } else {
                    z
                }
            } else {
                rng.random_range(-8.0..8.0)
            }
        })
        .collect();
    let clipped = logits
        .iter()
        .zip(&positive)
        .any(|(&z, &y)| sigmoid(if y { z } else { -z }) < PROB_EPS);
    if clipped != want_clipped {
        return Ok(None);
    }
    let x = Tensor::vector(logits);
    let mut tape = Tape::new();
    let z = tape.param(x.clone());
    let loss = weighted_bce_tape(&mut tape, z, &positive, w_pos)?;
    let g = tape.backward(loss)?;
    let err = compare(
        g.get(z).expect("param"),
        |v| {
            let probs: Vec<f64> = v.data().iter().map(|&zi| sigmoid(zi)).collect();
            weighted_bce_loss(&probs, &positive, w_pos)
        },
        &x,
    )?;
    Ok(Some((err, clipped)))
}

fn probe_contrastive(rng: &mut impl Rng, want_floor: bool) -> Result<Probe> {
    let n = rng.random_range(2..=8);
    let m = 2;
    let d = rng.random_range(2..=8);
    let tau = rng.random_range(0.3..1.0);
    let tau_plus = if want_floor { rng.random_range(0.3..0.8) } else { rng.random_range(0.0..0.1) };
    let cfg = ContrastiveConfig::new(tau, tau_plus, m)?;
    let jitter = if want_floor { 0.05 } else { 1.0 };
    let mut data = Vec::with_capacity(n * m * d);
    for _ in 0..n {
        let base: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        for _ in 0..m {
            data.extend(base.iter().map(|&b| b + jitter * rng.sample::<f64, _>(StandardNormal)));
        }
    }
    let x = Tensor::matrix(n * m, d, data)?;
    let Ok(z) = l2_normalize(&x, 1) else {
        return Ok(None);
    };
    let batch = ViewBatch::new(z, n, m)?;
    // Every row must sit clear of the floor's kink.
    let mut floored = 0;
    for i in 0..n {
        for k in 0..m {
            let raw = raw_negative_estimate(&batch, i, k, &cfg)?;
            if (raw - cfg.floor()).abs() < 0.05 {
                return Ok(None);
            }
            floored += usize::from(raw < cfg.floor());
        }
    }
    if (floored > 0) != want_floor {
        return Ok(None);
    }

    let mut tape = Tape::new();
    let xv = tape.param(x.clone());
    let zv = tape.l2_normalize_rows(xv)?;
    let loss = contrastive_objective_tape(&mut tape, zv, n, &cfg)?;
    let g = tape.backward(loss)?;
    let err = compare(
        g.get(xv).expect("param"),
        |v| {
            let z = l2_normalize(v, 1)?;
            batch_contrastive_objective(&ViewBatch::new(z, n, m)?, &cfg)
        },
        &x,
    )?;
    Ok(Some((err, want_floor)))
}

/// The unclamped negative estimate, to measure distance from the floor.
fn raw_negative_estimate(batch: &ViewBatch, i: usize, k: usize, cfg: &ContrastiveConfig) -> Result<f64> {
    let (n, m) = (batch.n_samples(), batch.views());
    let sim = |a: &[f64], b: &[f64]| (a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>() / cfg.tau).exp();
    let anchor = batch.view(i, k);
    let mut neg = 0.0;
    for j in (0..n).filter(|&j| j != i) {
        for l in 0..m {
            neg += sim(anchor, batch.view(j, l));
        }
    }
    let mut sib = 0.0;
    for l in (0..m).filter(|&l| l != k) {
        sib += sim(anchor, batch.view(i, l));
    }
    let neg_mean = neg / (m * (n - 1)) as f64;
    let sib_mean = sib / (m - 1) as f64;
    Ok((neg_mean - cfg.tau_plus * sib_mean) / (1.0 - cfg.tau_plus))
}

fn run_probe<R: Rng>(
    name: &str,
    configs: usize,
    has_clamp: bool,
    rng: &mut R,
    mut probe: impl FnMut(&mut R, bool) -> Result<Probe>,
) -> Result<GradientReport> {
    let mut report = GradientReport {
        name: name.into(),
        configs: 0,
        max_rel_error: 0.0,
        branch_hits: [0, 0],
        has_clamp,
    };
    let mut attempts = 0usize;
    while report.configs < configs {
        // Alternate the requested branch so both are covered evenly.
        let want = has_clamp && report.configs % 2 == 1;
        attempts += 1;
        if attempts > configs * 1_000 {
            break;
        }
        if let Some((err, branch)) = probe(rng, want)? {
            report.configs += 1;
            report.max_rel_error = report.max_rel_error.max(err);
            report.branch_hits[usize::from(branch)] += 1;
        }
    }
    Ok(report)
}

/// Analytic-vs-finite-difference comparison for every loss, `configs`
/// random configurations each, covering both sides of every clamp.
pub fn gradient_check_suite(configs: usize, seed: u64) -> Result<Vec<GradientReport>> {
    let stream = SeedStream::new(seed).child("gradients");
    Ok(vec![
        run_probe("sigmoid_loss", configs, false, &mut stream.child("sigmoid").rng(), |r, _| {
            probe_sigmoid(r)
        })?,
        run_probe("nnpu", configs, true, &mut stream.child("nnpu").rng(), |r, w| probe_pu(r, w, false))?,
        run_probe("imbnnpu", configs, true, &mut stream.child("imbnnpu").rng(), |r, w| {
            probe_pu(r, w, true)
        })?,
        run_probe("weighted_bce", configs, true, &mut stream.child("wbce").rng(), probe_wbce)?,
        run_probe(
            "debiased_contrastive",
            configs,
            true,
            &mut stream.child("contrastive").rng(),
            probe_contrastive,
        )?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lemma1_holds() {
        let r = lemma1_numeric_check(300, 6, 1).unwrap();
        assert_eq!(r.violations, 0);
        assert_eq!(r.grid_violations, 0);
        assert!(r.worst_excess <= LEMMA1_SLACK);
    }

    #[test]
    fn equal_logits_closed_form() {
        let clf = LinearClassifier::two_logit(vec![0.7, -0.2], vec![0.7, -0.2], 0.0, 0.0).unwrap();
        let x = Tensor::matrix(2, 2, vec![1.0, 2.0, -3.0, 0.5]).unwrap();
        let y = [true, false];
        let scores = collapse_two_logit(&clf).unwrap().positive_scores(&x).unwrap();
        let sig = balance_pn_sigmoid_risk(&scores, &y, 0.5).unwrap();
        let logits = clf.score(&x).unwrap();
        let pairs: Vec<[f64; 2]> = (0..2).map(|i| [logits.get2(i, 0), logits.get2(i, 1)]).collect();
        let soft = softmax_risk(&pairs, &y, 0.5).unwrap();
        assert_eq!(sig, 0.5);
        assert!((soft - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn equivalence_holds() {
        let r = equivalence_check(500, 2).unwrap();
        assert!(r.passed(), "{r:?}");
    }

    #[test]
    fn gradient_suite_passes_and_covers_branches() {
        for r in gradient_check_suite(30, 3).unwrap() {
            assert_eq!(r.configs, 30, "{}", r.name);
            assert!(r.passed(), "{r:?}");
        }
    }
}
