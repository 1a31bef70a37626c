use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{LabeledDataset, PnRatio, PuDataset, SplitSpec};
use crate::error::{Error, Result};
use crate::rng::SeedStream;
use crate::tensor::Tensor;

/// Binarize `src` and draw PU labels under SCAR with an exact labeled count.
///
/// Positives are first downsampled (uniformly) to `target_pn_ratio` against
/// all negatives; then exactly `round(c · kept)` of the kept positives are
/// labeled. Row order follows the source.
pub fn scar_label_split(src: &LabeledDataset, spec: &SplitSpec) -> Result<PuDataset> {
    src.validate()?;
    spec.validate(src.num_classes)?;
    let stream = SeedStream::new(spec.seed).child("scar");
    let is_pos = |i: usize| spec.positive_class_ids.contains(&src.class_ids[i]);
    let pos_idx: Vec<usize> = (0..src.len()).filter(|&i| is_pos(i)).collect();
    let neg_count = src.len() - pos_idx.len();
    if pos_idx.is_empty() || neg_count == 0 {
        return Err(Error::Config(format!(
            "split needs both classes (found {} positives, {neg_count} negatives)",
            pos_idx.len()
        )));
    }

    let keep = match spec.target_pn_ratio {
        None => pos_idx.len(),
        Some(PnRatio(p, q)) => {
            let target = (neg_count as f64 * p as f64 / q as f64).round() as usize;
            if target == 0 || target > pos_idx.len() {
                return Err(Error::Config(format!(
                    "ratio {p}:{q} needs {target} positives against {neg_count} negatives, {} available",
                    pos_idx.len()
                )));
            }
            target
        }
    };
    let mut kept: Vec<usize> = index::sample(&mut stream.child("downsample").rng(), pos_idx.len(), keep)
        .into_iter()
        .map(|j| pos_idx[j])
        .collect();
    kept.sort_unstable();

    let n_labeled = (spec.label_frequency * kept.len() as f64).round() as usize;
    if n_labeled < 1 {
        return Err(Error::Degenerate(format!(
            "no labeled positives: c = {} of {} kept positives rounds to zero",
            spec.label_frequency,
            kept.len()
        )));
    }
    let mut labeled_rows = vec![false; src.len()];
    for j in index::sample(&mut stream.child("label").rng(), kept.len(), n_labeled) {
        labeled_rows[kept[j]] = true;
    }

    let mut keep_row = vec![false; src.len()];
    for &i in &kept {
        keep_row[i] = true;
    }
    let rows: Vec<usize> = (0..src.len()).filter(|&i| keep_row[i] || !is_pos(i)).collect();
    let features = src.features.select_rows(&rows)?;
    let labeled = rows.iter().map(|&i| labeled_rows[i]).collect();
    let y_true = rows.iter().map(|&i| is_pos(i)).collect();
    let mut ds = PuDataset::new(features, labeled, Some(y_true))?;
    ds.label_frequency = Some(spec.label_frequency);
    Ok(ds)
}

/// Binarize `src` into an evaluation set: every row unlabeled, true labels
/// kept, class balance untouched.
pub fn fully_labeled_split(src: &LabeledDataset, positive_class_ids: &std::collections::BTreeSet<u32>) -> Result<PuDataset> {
    src.validate()?;
    let y: Vec<bool> = src.class_ids.iter().map(|c| positive_class_ids.contains(c)).collect();
    if !y.iter().any(|&p| p) || y.iter().all(|&p| p) {
        return Err(Error::Config("evaluation split needs both classes".into()));
    }
    PuDataset::new(src.features.clone(), vec![false; src.len()], Some(y))
}

fn shuffled(rows: Vec<(Vec<f64>, u32)>, rng: &mut impl Rng) -> (Vec<f64>, Vec<u32>) {
    let mut rows = rows;
    rows.shuffle(rng);
    let classes = rows.iter().map(|r| r.1).collect();
    let data = rows.into_iter().flat_map(|r| r.0).collect();
    (data, classes)
}

/// Two unit-covariance Gaussian clusters centred at `±(separation/2)·e₁`.
/// Class 1 is the positive cluster.
pub fn gaussian_mixture(n: usize, d: usize, pn_ratio: PnRatio, separation: f64, seed: u64) -> Result<LabeledDataset> {
    if n < 2 || d < 1 {
        return Err(Error::Config(format!("need n >= 2 and d >= 1, got n={n}, d={d}")));
    }
    if !(separation > 0.0) {
        return Err(Error::Config(format!("separation must be > 0, got {separation}")));
    }
    let PnRatio(p, q) = pn_ratio;
    if p == 0 || q == 0 {
        return Err(Error::Config(format!("ratio {pn_ratio} yields an empty class")));
    }
    let n_pos = (n as f64 * p as f64 / (p + q) as f64).round() as usize;
    let n_neg = n - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Config(format!("ratio {pn_ratio} with n={n} yields an empty class")));
    }
    let mut rng = SeedStream::new(seed).child("gaussian_mixture").rng();
    let half = separation / 2.0;
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let positive = i < n_pos;
        let mut x: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        x[0] += if positive { half } else { -half };
        rows.push((x, u32::from(positive)));
    }
    let (data, classes) = shuffled(rows, &mut rng);
    LabeledDataset::new(Tensor::matrix(n, d, data)?, classes, 2, "gaussian_mixture")
}

/// `class_counts.len()` unit-covariance Gaussian classes whose centres are
/// drawn from `N(0, spread²·I)`.
pub fn gaussian_blobs(class_counts: &[usize], d: usize, spread: f64, seed: u64) -> Result<LabeledDataset> {
    if class_counts.len() < 2 || d < 1 {
        return Err(Error::Config("need at least two classes and d >= 1".into()));
    }
    if let Some(k) = class_counts.iter().position(|&c| c == 0) {
        return Err(Error::Config(format!("class {k} is empty")));
    }
    if !(spread >= 0.0) {
        return Err(Error::Config(format!("spread must be >= 0, got {spread}")));
    }
    let stream = SeedStream::new(seed).child("gaussian_blobs");
    let mut center_rng = stream.child("centers").rng();
    let centers: Vec<Vec<f64>> = class_counts
        .iter()
        .map(|_| {
            (0..d)
                .map(|_| spread * center_rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();
    let mut rng = stream.child("points").rng();
    let n: usize = class_counts.iter().sum();
    let mut rows = Vec::with_capacity(n);
    for (k, (&count, center)) in class_counts.iter().zip(&centers).enumerate() {
        for _ in 0..count {
            let x = center
                .iter()
                .map(|&c| c + rng.sample::<f64, _>(StandardNormal))
                .collect();
            rows.push((x, k as u32));
        }
    }
    let (data, classes) = shuffled(rows, &mut rng);
    LabeledDataset::new(Tensor::matrix(n, d, data)?, classes, class_counts.len() as u32, "gaussian_blobs")
}
