//! Experiment configuration files and dataset assembly.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use pucl_core::data::{
    fully_labeled_split, gaussian_blobs, gaussian_mixture, load_pu, scar_label_split, LabeledDataset, PnRatio,
    PuDataset, SplitSpec,
};
use pucl_core::training::{ClassifierConfig, PretrainConfig};
use pucl_core::{Error, Result, SeedStream};
use rand::RngCore;
use serde::{Deserialize, Serialize};

/// Where rows come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Source {
    /// Two unit-covariance clusters at `±separation/2` along the first axis;
    /// class 1 is the positive cluster.
    GaussianMixture {
        n: usize,
        dim: usize,
        pn_ratio: PnRatio,
        separation: f64,
    },
    /// One cluster per class around random centers. A blob test source is
    /// drawn together with a blob train source so both share centers.
    GaussianBlobs {
        class_counts: Vec<usize>,
        dim: usize,
        spread: f64,
    },
    /// A PU CSV file (`f0..,s[,y]`).
    Csv { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub train: Source,
    pub test: Option<Source>,
    /// Split parameters for synthetic train sources.
    pub positive_class_ids: BTreeSet<u32>,
    pub target_pn_ratio: Option<PnRatio>,
    pub label_frequency: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            train: Source::GaussianMixture {
                n: 5_500,
                dim: 16,
                pn_ratio: PnRatio(1, 10),
                separation: 2.5,
            },
            test: Some(Source::GaussianMixture {
                n: 2_000,
                dim: 16,
                pn_ratio: PnRatio(2, 3),
                separation: 2.5,
            }),
            positive_class_ids: [1].into_iter().collect(),
            target_pn_ratio: None,
            label_frequency: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub factors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub data: DataConfig,
    pub pretrain: PretrainConfig,
    pub classifier: ClassifierConfig,
    pub sweep: Option<SweepSection>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("runs"),
            data: DataConfig::default(),
            pretrain: PretrainConfig::default(),
            classifier: ClassifierConfig::default(),
            sweep: None,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Push the top-level seed into every section and validate.
    pub fn resolve(mut self) -> Result<Self> {
        self.pretrain.seed = self.seed;
        self.classifier.seed = self.seed;
        self.pretrain.validate()?;
        self.classifier.validate()?;
        if let Some(s) = &self.sweep {
            if s.factors.is_empty() {
                return Err(Error::Config("sweep needs at least one distortion factor".into()));
            }
        }
        Ok(self)
    }
}

/// Training and optional test data plus the files they were read from.
#[derive(Debug, Clone)]
pub struct DataBundle {
    pub train: PuDataset,
    pub test: Option<PuDataset>,
    pub inputs: Vec<PathBuf>,
}

fn derived_seed(seed: u64, label: &str) -> u64 {
    SeedStream::new(seed).child("data").child(label).rng().next_u64()
}

fn split_spec(cfg: &DataConfig, seed: u64) -> SplitSpec {
    SplitSpec {
        positive_class_ids: cfg.positive_class_ids.clone(),
        target_pn_ratio: cfg.target_pn_ratio,
        label_frequency: cfg.label_frequency,
        seed: derived_seed(seed, "split"),
    }
}

fn read_csv(path: &Path, inputs: &mut Vec<PathBuf>) -> Result<PuDataset> {
    if !path.exists() {
        return Err(Error::Config(format!("data file {} does not exist", path.display())));
    }
    inputs.push(path.to_path_buf());
    load_pu(path)
}

/// Split joint blob draws back into per-class train and test rows.
fn split_blobs(joint: &LabeledDataset, train_counts: &[usize]) -> Result<(LabeledDataset, LabeledDataset)> {
    let mut seen = vec![0usize; train_counts.len()];
    let (mut tr, mut te) = (Vec::new(), Vec::new());
    for (i, &c) in joint.class_ids.iter().enumerate() {
        let k = c as usize;
        if seen[k] < train_counts[k] {
            tr.push(i);
        } else {
            te.push(i);
        }
        seen[k] += 1;
    }
    let part = |idx: &[usize]| -> Result<LabeledDataset> {
        LabeledDataset::new(
            joint.features.select_rows(idx)?,
            idx.iter().map(|&i| joint.class_ids[i]).collect(),
            joint.num_classes,
            joint.name.clone(),
        )
    };
    Ok((part(&tr)?, part(&te)?))
}

fn labeled_source(src: &Source, seed: u64) -> Result<LabeledDataset> {
    match src {
        Source::GaussianMixture {
            n,
            dim,
            pn_ratio,
            separation,
        } => gaussian_mixture(*n, *dim, *pn_ratio, *separation, seed),
        Source::GaussianBlobs {
            class_counts,
            dim,
            spread,
        } => gaussian_blobs(class_counts, *dim, *spread, seed),
        Source::Csv { .. } => unreachable!("csv sources are read directly"),
    }
}

/// Build the datasets an experiment describes. Synthetic train data goes
/// through the SCAR split; synthetic test data keeps its own balance and
/// is fully labeled.
pub fn build_data(cfg: &ExperimentConfig) -> Result<DataBundle> {
    let d = &cfg.data;
    let mut inputs = Vec::new();
    let train_seed = derived_seed(cfg.seed, "train");
    let test_seed = derived_seed(cfg.seed, "test");

    let (train_src, blob_test) = match (&d.train, &d.test) {
        (
            Source::GaussianBlobs {
                class_counts,
                dim,
                spread,
            },
            Some(Source::GaussianBlobs {
                class_counts: test_counts,
                dim: test_dim,
                spread: test_spread,
            }),
        ) => {
            if class_counts.len() != test_counts.len() || dim != test_dim || spread != test_spread {
                return Err(Error::Config(
                    "blob test source must match the train source's classes, dim and spread".into(),
                ));
            }
            let joint: Vec<usize> = class_counts.iter().zip(test_counts).map(|(a, b)| a + b).collect();
            let all = gaussian_blobs(&joint, *dim, *spread, train_seed)?;
            let (tr, te) = split_blobs(&all, class_counts)?;
            (Some(tr), Some(te))
        }
        (_, Some(Source::GaussianBlobs { .. })) => {
            return Err(Error::Config("a blob test source needs a blob train source".into()));
        }
        (Source::Csv { .. }, _) => (None, None),
        (src, _) => (Some(labeled_source(src, train_seed)?), None),
    };

    let train = match (&d.train, train_src) {
        (Source::Csv { path }, _) => read_csv(path, &mut inputs)?,
        (_, Some(src)) => scar_label_split(&src, &split_spec(d, cfg.seed))?,
        (_, None) => unreachable!("synthetic train source was generated"),
    };

    let test = match (&d.test, blob_test) {
        (None, _) => None,
        (Some(_), Some(te)) => Some(fully_labeled_split(&te, &d.positive_class_ids)?),
        (Some(Source::Csv { path }), None) => {
            let ds = read_csv(path, &mut inputs)?;
            if ds.y_true.is_none() {
                return Err(Error::Label(format!("test file {} has no y column", path.display())));
            }
            Some(ds)
        }
        (Some(src), None) => Some(fully_labeled_split(&labeled_source(src, test_seed)?, &d.positive_class_ids)?),
    };
    if let Some(t) = &test {
        if t.dim() != train.dim() {
            return Err(Error::Config(format!(
                "test width {} differs from train width {}",
                t.dim(),
                train.dim()
            )));
        }
    }
    Ok(DataBundle { train, test, inputs })
}
