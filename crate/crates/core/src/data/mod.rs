//! Datasets, PU label synthesis, CSV persistence, augmentation and batching.

mod augment;
mod io;
pub(crate) mod sampler;
mod synth;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use augment::{augment_views, AugmentationPolicy, Transform};
pub use io::{load_dataset, load_labeled, load_pu, save_dataset, Dataset, DatasetFormat};
pub use sampler::{epoch_batches, sample_minibatch};
pub use synth::{fully_labeled_split, gaussian_blobs, gaussian_mixture, scar_label_split};

/// Multiclass source data before binarization.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub features: Tensor,
    pub class_ids: Vec<u32>,
    pub num_classes: u32,
    pub name: String,
}

impl LabeledDataset {
    pub fn new(features: Tensor, class_ids: Vec<u32>, num_classes: u32, name: impl Into<String>) -> Result<Self> {
        let ds = Self {
            features,
            class_ids,
            num_classes,
            name: name.into(),
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.shape().len() != 2 {
            return Err(Error::Schema(format!("features must be a matrix, got {:?}", self.features.shape())));
        }
        if self.class_ids.len() != self.features.rows() {
            return Err(Error::Schema(format!(
                "{} class ids for {} rows",
                self.class_ids.len(),
                self.features.rows()
            )));
        }
        if let Some(bad) = self.class_ids.iter().find(|&&c| c >= self.num_classes) {
            return Err(Error::Schema(format!("class id {bad} outside 0..{}", self.num_classes)));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.class_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class_ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes as usize];
        for &c in &self.class_ids {
            counts[c as usize] += 1;
        }
        counts
    }
}

/// Positive-unlabeled data: `labeled[i]` is the PU label `s`, `y_true` the
/// hidden class (`true` = positive) when known.
#[derive(Debug, Clone, PartialEq)]
pub struct PuDataset {
    pub features: Tensor,
    pub labeled: Vec<bool>,
    pub y_true: Option<Vec<bool>>,
    /// Share of positives among the unlabeled rows.
    pub pi_true: Option<f64>,
    /// Label frequency `c = p(s=1 | y=1)` used at synthesis.
    pub label_frequency: Option<f64>,
}

/// Row counts of a PU dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PuCounts {
    pub labeled_pos: usize,
    pub unlabeled_pos: usize,
    pub unlabeled_neg: usize,
    pub unlabeled: usize,
}

impl PuDataset {
    pub fn new(features: Tensor, labeled: Vec<bool>, y_true: Option<Vec<bool>>) -> Result<Self> {
        let pi_true = y_true.as_deref().and_then(|y| unlabeled_positive_share(&labeled, y));
        let ds = Self {
            features,
            labeled,
            y_true,
            pi_true,
            label_frequency: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.shape().len() != 2 {
            return Err(Error::Schema(format!("features must be a matrix, got {:?}", self.features.shape())));
        }
        let n = self.features.rows();
        if self.labeled.len() != n {
            return Err(Error::Schema(format!("{} PU labels for {n} rows", self.labeled.len())));
        }
        if let Some(y) = &self.y_true {
            if y.len() != n {
                return Err(Error::Schema(format!("{} true labels for {n} rows", y.len())));
            }
            if let Some(i) = (0..n).find(|&i| self.labeled[i] && !y[i]) {
                return Err(Error::Schema(format!("row {i} is labeled but its true class is negative")));
            }
            let expected = unlabeled_positive_share(&self.labeled, y);
            match (expected, self.pi_true) {
                (Some(e), Some(p)) if (e - p).abs() > 1e-12 => {
                    return Err(Error::Schema(format!("pi_true {p} disagrees with labels ({e})")));
                }
                _ => {}
            }
        }
        if let Some(c) = self.label_frequency {
            if !(c > 0.0 && c <= 1.0) {
                return Err(Error::Schema(format!("label frequency must lie in (0, 1], got {c}")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labeled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labeled.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn n_labeled(&self) -> usize {
        self.labeled.iter().filter(|&&s| s).count()
    }

    pub fn n_unlabeled(&self) -> usize {
        self.len() - self.n_labeled()
    }

    pub fn counts(&self) -> Option<PuCounts> {
        let y = self.y_true.as_ref()?;
        let mut c = PuCounts {
            labeled_pos: 0,
            unlabeled_pos: 0,
            unlabeled_neg: 0,
            unlabeled: 0,
        };
        for (&s, &pos) in self.labeled.iter().zip(y) {
            match (s, pos) {
                (true, _) => c.labeled_pos += 1,
                (false, true) => c.unlabeled_pos += 1,
                (false, false) => c.unlabeled_neg += 1,
            }
        }
        c.unlabeled = c.unlabeled_pos + c.unlabeled_neg;
        Some(c)
    }

    /// Rows restricted to `idx`, keeping labels aligned.
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        let features = self.features.select_rows(idx)?;
        let labeled = idx.iter().map(|&i| self.labeled[i]).collect();
        let y_true = self.y_true.as_ref().map(|y| idx.iter().map(|&i| y[i]).collect());
        let mut out = Self::new(features, labeled, y_true)?;
        out.label_frequency = self.label_frequency;
        Ok(out)
    }
}

fn unlabeled_positive_share(labeled: &[bool], y: &[bool]) -> Option<f64> {
    let unl = labeled.iter().filter(|&&s| !s).count();
    if unl == 0 {
        return None;
    }
    let pos = labeled.iter().zip(y).filter(|(&s, &p)| !s && p).count();
    Some(pos as f64 / unl as f64)
}

/// Positives-to-negatives ratio `p:q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PnRatio(pub u32, pub u32);

impl PnRatio {
    pub fn positives(&self) -> u32 {
        self.0
    }

    pub fn negatives(&self) -> u32 {
        self.1
    }
}

impl fmt::Display for PnRatio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.0, self.1)
    }
}

impl FromStr for PnRatio {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (p, q) = s
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("ratio must look like 1:10, got {s:?}")))?;
        let parse = |t: &str| {
            t.trim()
                .parse::<u32>()
                .map_err(|_| Error::Config(format!("bad ratio component {t:?}")))
        };
        let r = PnRatio(parse(p)?, parse(q)?);
        if r.0 == 0 || r.1 == 0 {
            return Err(Error::Config(format!("ratio components must be positive, got {r}")));
        }
        Ok(r)
    }
}

/// How a multiclass source becomes a PU training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub positive_class_ids: BTreeSet<u32>,
    /// Downsample positives to this ratio against all negatives; `None`
    /// keeps every positive.
    pub target_pn_ratio: Option<PnRatio>,
    pub label_frequency: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn validate(&self, num_classes: u32) -> Result<()> {
        if self.positive_class_ids.is_empty() {
            return Err(Error::Config("positive class set is empty".into()));
        }
        if let Some(bad) = self.positive_class_ids.iter().find(|&&c| c >= num_classes) {
            return Err(Error::Config(format!("positive class {bad} not in 0..{num_classes}")));
        }
        if self.positive_class_ids.len() >= num_classes as usize {
            return Err(Error::Config("positive classes must be a strict subset of the classes".into()));
        }
        let c = self.label_frequency;
        // c = 0 is reported by the split itself as "no labeled positives".
        if !(0.0..=1.0).contains(&c) {
            return Err(Error::Config(format!("label frequency must lie in (0, 1], got {c}")));
        }
        if let Some(r) = self.target_pn_ratio {
            if r.0 == 0 || r.1 == 0 {
                return Err(Error::Config(format!("ratio components must be positive, got {r}")));
            }
        }
        Ok(())
    }
}
