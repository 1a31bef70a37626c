//! Debiased contrastive objective over `M` augmented views of `N` samples.
//!
//! Views are stored sample-major: row `i·M + k` holds view `k` of sample `i`.
//! Similarities are `exp(z·z′ / τ)` on unit vectors, so every similarity is
//! at least `exp(−1/τ)`, which is also the floor enforced on the negative
//! estimate `d_u`. Positive pairs are the ordered same-sample pairs
//! `(i,k), (i,ℓ)` with `k ≠ ℓ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::{pairwise_dot, pairwise_sum, Tensor};

/// Allowed deviation of an input norm from one.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContrastiveConfig {
    pub tau: f64,
    pub tau_plus: f64,
    pub views: usize,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        Self {
            tau: 0.5,
            tau_plus: 0.1,
            views: 2,
        }
    }
}

impl ContrastiveConfig {
    pub fn new(tau: f64, tau_plus: f64, views: usize) -> Result<Self> {
        let cfg = Self {
            tau,
            tau_plus,
            views,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// The biased (NT-Xent style) special case.
    pub fn biased(tau: f64, views: usize) -> Result<Self> {
        Self::new(tau, 0.0, views)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Config(format!("temperature must be > 0, got {}", self.tau)));
        }
        if !(0.0..1.0).contains(&self.tau_plus) {
            return Err(Error::Config(format!(
                "tau_plus must lie in [0, 1), got {}",
                self.tau_plus
            )));
        }
        if self.views < 2 {
            return Err(Error::Config(format!("need at least 2 views, got {}", self.views)));
        }
        Ok(())
    }

    /// `exp(−1/τ)`, the smallest similarity two unit vectors can have.
    pub fn floor(&self) -> f64 {
        (-1.0 / self.tau).exp()
    }
}

/// Projections of `n_samples · views` augmented views.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewBatch {
    projections: Tensor,
    n_samples: usize,
    views: usize,
}

impl ViewBatch {
    pub fn new(projections: Tensor, n_samples: usize, views: usize) -> Result<Self> {
        if projections.shape().len() != 2 || projections.rows() != n_samples * views {
            return Err(Error::dim(
                "view_batch",
                format!(
                    "expected {} rows ({n_samples} samples x {views} views), got shape {:?}",
                    n_samples * views,
                    projections.shape()
                ),
            ));
        }
        Ok(Self {
            projections,
            n_samples,
            views,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn views(&self) -> usize {
        self.views
    }

    pub fn projections(&self) -> &Tensor {
        &self.projections
    }

    pub fn view(&self, sample: usize, k: usize) -> &[f64] {
        self.projections.row(sample * self.views + k)
    }
}

fn check_unit(z: &[f64]) -> Result<()> {
    let norm = pairwise_dot(z, z).sqrt();
    if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
        return Err(Error::Contract(format!("expected a unit vector, norm is {norm}")));
    }
    Ok(())
}

/// `exp(z_a·z_b / τ)` for unit vectors.
pub fn pair_similarity(z_a: &[f64], z_b: &[f64], tau: f64) -> Result<f64> {
    if z_a.len() != z_b.len() {
        return Err(Error::dim("pair_similarity", format!("{} vs {}", z_a.len(), z_b.len())));
    }
    if !(tau > 0.0) {
        return Err(Error::Config(format!("temperature must be > 0, got {tau}")));
    }
    check_unit(z_a)?;
    check_unit(z_b)?;
    Ok((pairwise_dot(z_a, z_b) / tau).exp())
}

fn check_batch(batch: &ViewBatch, cfg: &ContrastiveConfig) -> Result<()> {
    cfg.validate()?;
    if batch.views != cfg.views {
        return Err(Error::Config(format!(
            "batch has {} views per sample, config expects {}",
            batch.views, cfg.views
        )));
    }
    if batch.n_samples < 2 {
        return Err(Error::Composition("no negatives available: need at least 2 samples".into()));
    }
    Ok(())
}

/// Clamped estimate of the negative-pair similarity seen from view
/// `(sample, k)`, corrected for same-class "negatives" by `τ⁺`.
pub fn debiased_negative_estimate(
    batch: &ViewBatch,
    sample: usize,
    k: usize,
    cfg: &ContrastiveConfig,
) -> Result<f64> {
    check_batch(batch, cfg)?;
    let (n, m) = (batch.n_samples, batch.views);
    let anchor = batch.view(sample, k);
    let mut negatives = Vec::with_capacity(m * (n - 1));
    for j in (0..n).filter(|&j| j != sample) {
        for l in 0..m {
            negatives.push(pair_similarity(anchor, batch.view(j, l), cfg.tau)?);
        }
    }
    let mut siblings = Vec::with_capacity(m - 1);
    for l in (0..m).filter(|&l| l != k) {
        siblings.push(pair_similarity(anchor, batch.view(sample, l), cfg.tau)?);
    }
    let neg_mean = pairwise_sum(&negatives) / (m * (n - 1)) as f64;
    let sib_mean = pairwise_sum(&siblings) / (m - 1) as f64;
    let raw = (neg_mean - cfg.tau_plus * sib_mean) / (1.0 - cfg.tau_plus);
    let floor = cfg.floor();
    Ok(if raw > floor { raw } else { floor })
}

/// `−log(s⁺ / (s⁺ + n_neg·d_u))`.
pub fn debiased_pair_loss(pos_sim: f64, d_u: f64, n_neg: usize) -> f64 {
    -(pos_sim / (pos_sim + n_neg as f64 * d_u)).ln()
}

/// Mean debiased pair loss over every ordered same-sample view pair.
pub fn batch_contrastive_objective(batch: &ViewBatch, cfg: &ContrastiveConfig) -> Result<f64> {
    check_batch(batch, cfg)?;
    let (n, m) = (batch.n_samples, batch.views);
    let n_neg = m * (n - 1);
    let mut terms = Vec::with_capacity(n * m * (m - 1));
    for i in 0..n {
        for k in 0..m {
            let d_u = debiased_negative_estimate(batch, i, k, cfg)?;
            for l in (0..m).filter(|&l| l != k) {
                let pos = pair_similarity(batch.view(i, k), batch.view(i, l), cfg.tau)?;
                terms.push(debiased_pair_loss(pos, d_u, n_neg));
            }
        }
    }
    Ok(pairwise_sum(&terms) / terms.len() as f64)
}

/// The uncorrected estimator: `−log(s⁺ / (s⁺ + Σ negatives))` averaged over
/// the same positive pairs.
pub fn biased_contrastive_objective(batch: &ViewBatch, tau: f64) -> Result<f64> {
    let cfg = ContrastiveConfig::biased(tau, batch.views)?;
    check_batch(batch, &cfg)?;
    let (n, m) = (batch.n_samples, batch.views);
    let mut terms = Vec::new();
    for i in 0..n {
        for k in 0..m {
            let anchor = batch.view(i, k);
            let mut negs = Vec::with_capacity(m * (n - 1));
            for j in (0..n).filter(|&j| j != i) {
                for l in 0..m {
                    negs.push(pair_similarity(anchor, batch.view(j, l), tau)?);
                }
            }
            let neg_total = pairwise_sum(&negs);
            for l in (0..m).filter(|&l| l != k) {
                let pos = pair_similarity(anchor, batch.view(i, l), tau)?;
                terms.push((pos + neg_total).ln() - pos.ln());
            }
        }
    }
    Ok(pairwise_sum(&terms) / terms.len() as f64)
}

fn view_masks(n: usize, m: usize) -> (Tensor, Tensor) {
    let v = n * m;
    let mut sib = vec![0.0; v * v];
    let mut neg = vec![0.0; v * v];
    for a in 0..v {
        for b in 0..v {
            if a / m == b / m {
                if a != b {
                    sib[a * v + b] = 1.0;
                }
            } else {
                neg[a * v + b] = 1.0;
            }
        }
    }
    (
        Tensor::new(vec![v, v], sib).expect("square mask"),
        Tensor::new(vec![v, v], neg).expect("square mask"),
    )
}

/// Differentiable batch objective. `z` holds unit-norm projections laid out
/// sample-major with `cfg.views` rows per sample.
pub fn contrastive_objective_tape(
    tape: &mut Tape,
    z: Var,
    n_samples: usize,
    cfg: &ContrastiveConfig,
) -> Result<Var> {
    cfg.validate()?;
    let m = cfg.views;
    let rows = tape.value(z).rows();
    if tape.value(z).shape().len() != 2 || rows != n_samples * m {
        return Err(Error::dim(
            "contrastive_objective",
            format!("{rows} rows for {n_samples} samples x {m} views"),
        ));
    }
    if n_samples < 2 {
        return Err(Error::Composition("no negatives available: need at least 2 samples".into()));
    }
    let n_neg = m * (n_samples - 1);
    let (sib_mask, neg_mask) = view_masks(n_samples, m);

    let gram = tape.matmul_t(z, false, z, true)?;
    let logits = tape.scale(gram, 1.0 / cfg.tau)?;
    let sims = tape.exp(logits)?;

    let sib_c = tape.constant(sib_mask.clone());
    let neg_c = tape.constant(neg_mask);
    let neg_sims = tape.mul(sims, neg_c)?;
    let neg_sum = tape.row_sums(neg_sims)?;
    let sib_sims = tape.mul(sims, sib_c)?;
    let sib_sum = tape.row_sums(sib_sims)?;

    let neg_mean = tape.scale(neg_sum, 1.0 / n_neg as f64)?;
    let sib_term = tape.scale(sib_sum, cfg.tau_plus / (m - 1) as f64)?;
    let raw = tape.sub(neg_mean, sib_term)?;
    let raw = tape.scale(raw, 1.0 / (1.0 - cfg.tau_plus))?;
    let d_u = tape.max_const(raw, cfg.floor())?;

    let spread = tape.spread_columns(d_u, rows)?;
    let neg_mass = tape.scale(spread, n_neg as f64)?;
    let denom = tape.add(sims, neg_mass)?;
    let log_denom = tape.log(denom)?;
    // −log(s/(s + c)) = log(s + c) − z·z′/τ
    let pair = tape.sub(log_denom, logits)?;
    let picked = tape.mul(pair, sib_c)?;
    let total = tape.sum(picked)?;
    tape.scale(total, 1.0 / (n_samples * m * (m - 1)) as f64)
}

/// `d_u` for every view, in row order.
pub fn negative_estimates(batch: &ViewBatch, cfg: &ContrastiveConfig) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(batch.n_samples * batch.views);
    for i in 0..batch.n_samples {
        for k in 0..batch.views {
            out.push(debiased_negative_estimate(batch, i, k, cfg)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::l2_normalize;
    use rand::{Rng, SeedableRng};

    const E2: f64 = 7.38905609893065;

    fn batch(rows: Vec<Vec<f64>>, n: usize, m: usize) -> ViewBatch {
        ViewBatch::new(Tensor::from_rows(&rows).unwrap(), n, m).unwrap()
    }

    fn random_batch(rng: &mut impl Rng, n: usize, m: usize, dim: usize) -> ViewBatch {
        let rows: Vec<Vec<f64>> = (0..n * m)
            .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let z = l2_normalize(&Tensor::from_rows(&rows).unwrap(), 1).unwrap();
        ViewBatch::new(z, n, m).unwrap()
    }

    /// Brute-force evaluation straight from the index formulas, kept
    /// separate from the library routes.
    fn oracle_objective(b: &ViewBatch, tau: f64, tau_plus: f64) -> f64 {
        let (n, m) = (b.n_samples(), b.views());
        let s = |i: usize, k: usize, j: usize, l: usize| -> f64 {
            let d: f64 = b.view(i, k).iter().zip(b.view(j, l)).map(|(x, y)| x * y).sum();
            (d / tau).exp()
        };
        let mut total = 0.0;
        let mut count = 0.0;
        for i in 0..n {
            for k in 0..m {
                let mut neg = 0.0;
                for j in 0..n {
                    for l in 0..m {
                        if j != i {
                            neg += s(i, k, j, l);
                        }
                    }
                }
                let mut sib = 0.0;
                for l in 0..m {
                    if l != k {
                        sib += s(i, k, i, l);
                    }
                }
                let raw = (neg / (m * (n - 1)) as f64 - tau_plus * sib / (m - 1) as f64)
                    / (1.0 - tau_plus);
                let du = raw.max((-1.0 / tau).exp());
                for l in 0..m {
                    if l != k {
                        let p = s(i, k, i, l);
                        total += -(p / (p + (m * (n - 1)) as f64 * du)).ln();
                        count += 1.0;
                    }
                }
            }
        }
        total / count
    }

    #[test]
    fn similarity_examples() {
        let e1 = [1.0, 0.0];
        let e2 = [0.0, 1.0];
        let m1 = [-1.0, 0.0];
        assert!((pair_similarity(&e1, &e1, 0.5).unwrap() - 7.389056).abs() < 1e-6);
        assert_eq!(pair_similarity(&e1, &e2, 0.3).unwrap(), 1.0);
        assert!((pair_similarity(&e1, &m1, 0.5).unwrap() - 0.135335).abs() < 1e-6);
        assert!(matches!(pair_similarity(&[1.0, 1.0], &e1, 0.5), Err(Error::Contract(_))));
    }

    #[test]
    fn negative_estimate_without_correction_is_mean() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let b = random_batch(&mut rng, 4, 2, 5);
        let cfg = ContrastiveConfig::new(0.5, 0.0, 2).unwrap();
        let du = debiased_negative_estimate(&b, 1, 0, &cfg).unwrap();
        let mut sims = Vec::new();
        for j in [0, 2, 3] {
            for l in 0..2 {
                sims.push(pair_similarity(b.view(1, 0), b.view(j, l), 0.5).unwrap());
            }
        }
        let mean = sims.iter().sum::<f64>() / 6.0;
        assert!((du - mean).abs() < 1e-12);
    }

    #[test]
    fn antipodal_batch_hits_floor() {
        let b = batch(
            vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![-1.0, 0.0], vec![-1.0, 0.0]],
            2,
            2,
        );
        for tau_plus in [0.0, 0.1, 0.5] {
            let cfg = ContrastiveConfig::new(0.5, tau_plus, 2).unwrap();
            let du = debiased_negative_estimate(&b, 0, 0, &cfg).unwrap();
            assert!((du - 0.135335).abs() < 1e-6);
            assert_eq!(du, cfg.floor());
        }
    }

    #[test]
    fn orthogonal_negatives_four_view_example() {
        // Sample 0 views both e1, sample 1 views both e2.
        let b = batch(
            vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 1.0]],
            2,
            2,
        );
        let cfg = ContrastiveConfig::new(0.5, 0.0, 2).unwrap();
        let du = debiased_negative_estimate(&b, 0, 0, &cfg).unwrap();
        assert_eq!(du, 1.0);
        let loss = debiased_pair_loss(E2, du, 2);
        // −log(e²/(e²+2)) = ln(1 + 2e⁻²)
        assert!((loss - 0.2395447662218845).abs() < 1e-12);
        // Every anchor sees the same configuration.
        let obj = batch_contrastive_objective(&b, &cfg).unwrap();
        assert!((obj - loss).abs() < 1e-15);
    }

    #[test]
    fn pair_loss_limits_and_monotonicity() {
        assert!(debiased_pair_loss(5.0, 1e-300, 4) < 1e-200);
        let mut prev = f64::INFINITY;
        for s in [0.2, 0.5, 1.0, 3.0, 7.0] {
            let v = debiased_pair_loss(s, 0.4, 6);
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn identical_views_give_log_three() {
        let b = batch(vec![vec![0.6, 0.8]; 4], 2, 2);
        for tau_plus in [0.0, 0.1, 0.4] {
            let cfg = ContrastiveConfig::new(0.5, tau_plus, 2).unwrap();
            let obj = batch_contrastive_objective(&b, &cfg).unwrap();
            assert!((obj - oracle_objective(&b, 0.5, tau_plus)).abs() < 1e-12);
            assert!((obj - 3f64.ln()).abs() < 1e-12, "{obj}");
        }
    }

    #[test]
    fn needs_two_samples() {
        let b = batch(vec![vec![1.0, 0.0], vec![0.0, 1.0]], 1, 2);
        let cfg = ContrastiveConfig::default();
        assert!(matches!(
            batch_contrastive_objective(&b, &cfg),
            Err(Error::Composition(_))
        ));
        assert!(matches!(
            debiased_negative_estimate(&b, 0, 0, &cfg),
            Err(Error::Composition(_))
        ));
    }

    #[test]
    fn config_validation() {
        assert!(ContrastiveConfig::new(0.0, 0.1, 2).is_err());
        assert!(ContrastiveConfig::new(0.5, 1.0, 2).is_err());
        assert!(ContrastiveConfig::new(0.5, -0.1, 2).is_err());
        assert!(ContrastiveConfig::new(0.5, 0.1, 1).is_err());
    }

    #[test]
    fn routes_agree_on_random_batches() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for trial in 0..50 {
            let n = 2 + trial % 6;
            let m = 2 + trial % 3;
            let tau = rng.random_range(0.1..1.0);
            let tau_plus = rng.random_range(0.0..0.9);
            let b = random_batch(&mut rng, n, m, 4);
            let cfg = ContrastiveConfig::new(tau, tau_plus, m).unwrap();
            let scalar = batch_contrastive_objective(&b, &cfg).unwrap();
            let oracle = oracle_objective(&b, tau, tau_plus);
            let mut t = Tape::new();
            let z = t.constant(b.projections().clone());
            let taped = contrastive_objective_tape(&mut t, z, n, &cfg).unwrap();
            let taped = t.value(taped).data()[0];
            assert!((scalar - oracle).abs() < 1e-12, "{scalar} vs {oracle}");
            assert!((scalar - taped).abs() < 1e-12, "{scalar} vs {taped}");
            let biased = biased_contrastive_objective(&b, tau).unwrap();
            let reduced =
                batch_contrastive_objective(&b, &ContrastiveConfig::biased(tau, m).unwrap()).unwrap();
            assert!((biased - reduced).abs() < 1e-12);
        }
    }

    #[test]
    fn objective_is_permutation_invariant() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let b = random_batch(&mut rng, 5, 2, 3);
        let cfg = ContrastiveConfig::default();
        let base = batch_contrastive_objective(&b, &cfg).unwrap();
        let order = [3, 0, 4, 2, 1];
        let rows: Vec<Vec<f64>> = order
            .iter()
            .flat_map(|&i| (0..2).map(move |k| (i, k)))
            .map(|(i, k)| b.view(i, k).to_vec())
            .collect();
        let permuted = batch(rows, 5, 2);
        let v = batch_contrastive_objective(&permuted, &cfg).unwrap();
        assert!((base - v).abs() < 1e-12);
    }
}
