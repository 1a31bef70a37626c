use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One stochastic transform, applied with probability `prob`.
///
/// The image transforms treat a row as an `height × width × channels`
/// raster stored row-major with interleaved channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Transform {
    GaussianNoise { sigma: f64, prob: f64 },
    Mask { rate: f64, prob: f64 },
    Scale { low: f64, high: f64, prob: f64 },
    CropResize { height: usize, width: usize, channels: usize, min_scale: f64, prob: f64 },
    HorizontalFlip { height: usize, width: usize, channels: usize, prob: f64 },
    ColorJitter { brightness: f64, contrast: f64, prob: f64 },
}

impl Transform {
    fn prob(&self) -> f64 {
        match *self {
            Transform::GaussianNoise { prob, .. }
            | Transform::Mask { prob, .. }
            | Transform::Scale { prob, .. }
            | Transform::CropResize { prob, .. }
            | Transform::HorizontalFlip { prob, .. }
            | Transform::ColorJitter { prob, .. } => prob,
        }
    }

    fn validate(&self, dim: Option<usize>) -> Result<()> {
        let p = self.prob();
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Config(format!("transform probability {p} outside [0, 1]")));
        }
        let raster = |h: usize, w: usize, c: usize| -> Result<()> {
            if h == 0 || w == 0 || c == 0 {
                return Err(Error::Config("raster dimensions must be positive".into()));
            }
            if let Some(d) = dim {
                if h * w * c != d {
                    return Err(Error::Config(format!("raster {h}x{w}x{c} does not match width {d}")));
                }
            }
            Ok(())
        };
        match *self {
            Transform::GaussianNoise { sigma, .. } if !(sigma >= 0.0) => {
                Err(Error::Config(format!("noise sigma must be >= 0, got {sigma}")))
            }
            Transform::Mask { rate, .. } if !(0.0..=1.0).contains(&rate) => {
                Err(Error::Config(format!("mask rate {rate} outside [0, 1]")))
            }
            Transform::Scale { low, high, .. } if !(low > 0.0 && low <= high) => {
                Err(Error::Config(format!("scale range [{low}, {high}] invalid")))
            }
            Transform::CropResize { height, width, channels, min_scale, .. } => {
                if !(min_scale > 0.0 && min_scale <= 1.0) {
                    return Err(Error::Config(format!("crop min_scale {min_scale} outside (0, 1]")));
                }
                raster(height, width, channels)
            }
            Transform::HorizontalFlip { height, width, channels, .. } => raster(height, width, channels),
            Transform::ColorJitter { brightness, contrast, .. } if !(brightness >= 0.0 && contrast >= 0.0) => {
                Err(Error::Config("jitter strengths must be >= 0".into()))
            }
            _ => Ok(()),
        }
    }

    fn apply(&self, x: &mut Vec<f64>, rng: &mut impl Rng) {
        match *self {
            Transform::GaussianNoise { sigma, .. } => {
                for v in x.iter_mut() {
                    *v += sigma * rng.sample::<f64, _>(StandardNormal);
                }
            }
            Transform::Mask { rate, .. } => {
                for v in x.iter_mut() {
                    if rng.random::<f64>() < rate {
                        *v = 0.0;
                    }
                }
            }
            Transform::Scale { low, high, .. } => {
                let f = if high > low { rng.random_range(low..high) } else { low };
                for v in x.iter_mut() {
                    *v *= f;
                }
            }
            Transform::CropResize { height, width, channels, min_scale, .. } => {
                *x = crop_resize(x, height, width, channels, min_scale, rng);
            }
            Transform::HorizontalFlip { height, width, channels, .. } => {
                for r in 0..height {
                    for c in 0..width / 2 {
                        for ch in 0..channels {
                            let a = (r * width + c) * channels + ch;
                            let b = (r * width + (width - 1 - c)) * channels + ch;
                            x.swap(a, b);
                        }
                    }
                }
            }
            Transform::ColorJitter { brightness, contrast, .. } => {
                let shift = if brightness > 0.0 { rng.random_range(-brightness..brightness) } else { 0.0 };
                let gain = if contrast > 0.0 { rng.random_range(1.0 - contrast..1.0 + contrast) } else { 1.0 };
                let mean = x.iter().sum::<f64>() / x.len() as f64;
                for v in x.iter_mut() {
                    *v = (*v - mean) * gain + mean + shift;
                }
            }
        }
    }
}

/// Random crop covering `[min_scale, 1]` of the area, resized back with
/// nearest-neighbour sampling.
fn crop_resize(x: &[f64], h: usize, w: usize, ch: usize, min_scale: f64, rng: &mut impl Rng) -> Vec<f64> {
    let area = if min_scale < 1.0 { rng.random_range(min_scale..=1.0) } else { 1.0 };
    let side = area.sqrt();
    let ch_h = ((h as f64 * side).round() as usize).clamp(1, h);
    let ch_w = ((w as f64 * side).round() as usize).clamp(1, w);
    let top = rng.random_range(0..=h - ch_h);
    let left = rng.random_range(0..=w - ch_w);
    let mut out = vec![0.0; h * w * ch];
    for r in 0..h {
        let src_r = top + r * ch_h / h;
        for c in 0..w {
            let src_c = left + c * ch_w / w;
            for k in 0..ch {
                out[(r * w + c) * ch + k] = x[(src_r * w + src_c) * ch + k];
            }
        }
    }
    out
}

/// Ordered list of transforms applied independently to each view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentationPolicy {
    pub transforms: Vec<Transform>,
}

impl Default for AugmentationPolicy {
    /// Vector-data policy: jitter every coordinate, then occasionally mask
    /// coordinates and rescale the row.
    fn default() -> Self {
        Self {
            transforms: vec![
                Transform::GaussianNoise { sigma: 0.3, prob: 1.0 },
                Transform::Mask { rate: 0.1, prob: 0.5 },
                Transform::Scale { low: 0.8, high: 1.2, prob: 0.5 },
            ],
        }
    }
}

impl AugmentationPolicy {
    pub fn identity() -> Self {
        Self {
            transforms: vec![Transform::GaussianNoise { sigma: 0.0, prob: 0.0 }],
        }
    }

    pub fn validate(&self, dim: Option<usize>) -> Result<()> {
        if self.transforms.is_empty() {
            return Err(Error::Config("augmentation policy has no transforms".into()));
        }
        self.transforms.iter().try_for_each(|t| t.validate(dim))
    }
}

/// `views` independent stochastic transforms of `x`.
pub fn augment_views(x: &[f64], policy: &AugmentationPolicy, views: usize, rng: &mut impl Rng) -> Result<Vec<Vec<f64>>> {
    if views < 2 {
        return Err(Error::Config(format!("need at least 2 views, got {views}")));
    }
    policy.validate(Some(x.len()))?;
    let mut out = Vec::with_capacity(views);
    for _ in 0..views {
        let mut v = x.to_vec();
        for t in &policy.transforms {
            // Draw the coin even when prob is 0 or 1 so the stream layout
            // does not depend on the probabilities.
            let coin: f64 = rng.random();
            if coin < t.prob() {
                t.apply(&mut v, rng);
            }
        }
        out.push(v);
    }
    Ok(out)
}
