//! JSON checkpoint files.
//!
//! Weights are stored as the hexadecimal bit pattern of each `f64`
//! (`"0x3ff0000000000000"`), so a save/load round trip is bit-exact.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dense, Encoder, LinearClassifier, Mlp, Projector};
use crate::digest::parameter_digest;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComponentKind {
    Encoder,
    Projector,
    Classifier,
}

impl fmt::Display for ComponentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ComponentKind::Encoder => "encoder",
            ComponentKind::Projector => "projector",
            ComponentKind::Classifier => "classifier",
        })
    }
}

/// How a component was produced.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub epochs: usize,
    pub loss: String,
    pub config_digest: String,
    /// Layer widths from input to output.
    pub architecture: Vec<usize>,
    pub rng_algorithm: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Component {
    Encoder(Encoder),
    Projector(Projector),
    Classifier(LinearClassifier),
}

impl Component {
    pub fn kind(&self) -> ComponentKind {
        match self {
            Component::Encoder(_) => ComponentKind::Encoder,
            Component::Projector(_) => ComponentKind::Projector,
            Component::Classifier(_) => ComponentKind::Classifier,
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        match self {
            Component::Encoder(e) => e.net.params(),
            Component::Projector(p) => p.net.params(),
            Component::Classifier(c) => c.params(),
        }
    }

    /// Digest over parameter shapes and bits.
    pub fn digest(&self) -> String {
        parameter_digest(self.params())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub kind: ComponentKind,
    pub shapes: Vec<Vec<usize>>,
    pub weights: Vec<Vec<String>>,
    pub provenance: Provenance,
}

fn encode(x: f64) -> String {
    format!("0x{:016x}", x.to_bits())
}

fn decode(s: &str) -> Result<f64> {
    s.strip_prefix("0x")
        .filter(|h| h.len() == 16)
        .and_then(|h| u64::from_str_radix(h, 16).ok())
        .map(f64::from_bits)
        .ok_or_else(|| Error::Integrity(format!("bad weight encoding {s:?}")))
}

fn mlp_from(tensors: Vec<Tensor>) -> Result<Mlp> {
    if tensors.is_empty() || tensors.len() % 2 != 0 {
        return Err(Error::Integrity(format!("{} tensors do not form weight/bias pairs", tensors.len())));
    }
    let mut it = tensors.into_iter();
    let mut layers = Vec::new();
    while let (Some(w), Some(b)) = (it.next(), it.next()) {
        layers.push(Dense::new(w, b).map_err(|e| Error::Integrity(e.to_string()))?);
    }
    Mlp::from_layers(layers).map_err(|e| Error::Integrity(e.to_string()))
}

impl Checkpoint {
    pub fn new(component: &Component, provenance: Provenance) -> Self {
        let params = component.params();
        Self {
            version: CHECKPOINT_VERSION,
            kind: component.kind(),
            shapes: params.iter().map(|t| t.shape().to_vec()).collect(),
            weights: params.iter().map(|t| t.data().iter().map(|&x| encode(x)).collect()).collect(),
            provenance,
        }
    }

    pub fn component(&self) -> Result<Component> {
        if self.shapes.len() != self.weights.len() {
            return Err(Error::Integrity(format!(
                "{} shapes for {} weight arrays",
                self.shapes.len(),
                self.weights.len()
            )));
        }
        let mut tensors = Vec::with_capacity(self.shapes.len());
        for (i, (shape, w)) in self.shapes.iter().zip(&self.weights).enumerate() {
            let data = w.iter().map(|s| decode(s)).collect::<Result<Vec<_>>>()?;
            if !data.iter().all(|x| x.is_finite()) {
                return Err(Error::Integrity(format!("tensor {i} has non-finite weights")));
            }
            let t = Tensor::new(shape.clone(), data)
                .map_err(|_| Error::Integrity(format!("tensor {i}: {} values for shape {shape:?}", w.len())))?;
            tensors.push(t);
        }
        Ok(match self.kind {
            ComponentKind::Encoder => Component::Encoder(Encoder { net: mlp_from(tensors)? }),
            ComponentKind::Projector => Component::Projector(
                Projector::from_net(mlp_from(tensors)?).map_err(|e| Error::Integrity(e.to_string()))?,
            ),
            ComponentKind::Classifier => {
                let [w, b]: [Tensor; 2] = tensors
                    .try_into()
                    .map_err(|_| Error::Integrity("classifier needs exactly a weight and a bias".into()))?;
                Component::Classifier(LinearClassifier::new(w, b).map_err(|e| Error::Integrity(e.to_string()))?)
            }
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Integrity(format!("not a checkpoint document: {e}")))?;
        let version = value
            .get("version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| Error::Integrity("missing version".into()))?;
        if version != u64::from(CHECKPOINT_VERSION) {
            return Err(Error::UnsupportedVersion {
                found: u32::try_from(version).unwrap_or(u32::MAX),
                expected: CHECKPOINT_VERSION,
            });
        }
        let ckpt: Checkpoint = serde_json::from_value(value).map_err(|e| Error::Integrity(e.to_string()))?;
        ckpt.component()?;
        Ok(ckpt)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    fn expect_kind(&self, kind: ComponentKind) -> Result<Component> {
        if self.kind != kind {
            return Err(Error::Kind {
                expected: kind.to_string(),
                found: self.kind.to_string(),
            });
        }
        self.component()
    }

    pub fn encoder(&self) -> Result<Encoder> {
        match self.expect_kind(ComponentKind::Encoder)? {
            Component::Encoder(e) => Ok(e),
            _ => unreachable!("kind checked"),
        }
    }

    pub fn projector(&self) -> Result<Projector> {
        match self.expect_kind(ComponentKind::Projector)? {
            Component::Projector(p) => Ok(p),
            _ => unreachable!("kind checked"),
        }
    }

    pub fn classifier(&self) -> Result<LinearClassifier> {
        match self.expect_kind(ComponentKind::Classifier)? {
            Component::Classifier(c) => Ok(c),
            _ => unreachable!("kind checked"),
        }
    }

    /// Parameter digest of the stored component.
    pub fn digest(&self) -> Result<String> {
        Ok(self.component()?.digest())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::glorot_uniform;
    use crate::rng::rng_for;

    fn encoder() -> Encoder {
        Encoder::init(3, &[5], 4, &mut rng_for(1, "e")).unwrap()
    }

    fn provenance() -> Provenance {
        Provenance {
            seed: 7,
            epochs: 3,
            loss: "debiased_contrastive".into(),
            config_digest: "abc".into(),
            architecture: vec![3, 5, 4],
            rng_algorithm: crate::rng::RNG_ALGORITHM.into(),
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let enc = encoder();
        let ckpt = Checkpoint::new(&Component::Encoder(enc.clone()), provenance());
        let back = Checkpoint::from_json(&ckpt.to_json()).unwrap();
        assert_eq!(back.provenance, provenance());
        let enc2 = back.encoder().unwrap();
        let x = glorot_uniform(1, 1, vec![6, 3], &mut rng_for(2, "x"));
        let a: Vec<u64> = enc.forward(&x).unwrap().bits().collect();
        let b: Vec<u64> = enc2.forward(&x).unwrap().bits().collect();
        assert_eq!(a, b);
        assert_eq!(ckpt.digest().unwrap(), back.digest().unwrap());
    }

    #[test]
    fn file_round_trip_for_every_kind() {
        let dir = tempfile::tempdir().unwrap();
        let components = [
            Component::Encoder(encoder()),
            Component::Projector(Projector::init(4, 2, &mut rng_for(3, "p")).unwrap()),
            Component::Classifier(LinearClassifier::init(4, 2, &mut rng_for(4, "c")).unwrap()),
        ];
        for c in components {
            let path = dir.path().join(format!("{}.json", c.kind()));
            Checkpoint::new(&c, provenance()).save(&path).unwrap();
            assert_eq!(Checkpoint::load(&path).unwrap().component().unwrap(), c);
        }
    }

    #[test]
    fn truncated_file_is_integrity_error() {
        let text = Checkpoint::new(&Component::Encoder(encoder()), provenance()).to_json();
        let cut = &text[..text.len() / 2];
        assert!(matches!(Checkpoint::from_json(cut), Err(Error::Integrity(_))));
    }

    #[test]
    fn shape_corruption_is_integrity_error() {
        let mut ckpt = Checkpoint::new(&Component::Encoder(encoder()), provenance());
        ckpt.shapes[0] = vec![3, 4];
        assert!(matches!(Checkpoint::from_json(&ckpt.to_json()), Err(Error::Integrity(_))));
    }

    #[test]
    fn version_mismatch() {
        let mut ckpt = Checkpoint::new(&Component::Encoder(encoder()), provenance());
        ckpt.version = 9;
        assert!(matches!(
            Checkpoint::from_json(&ckpt.to_json()),
            Err(Error::UnsupportedVersion { found: 9, expected: 1 })
        ));
    }

    #[test]
    fn wrong_kind() {
        let ckpt = Checkpoint::new(&Component::Encoder(encoder()), provenance());
        assert!(matches!(ckpt.classifier(), Err(Error::Kind { .. })));
    }

    #[test]
    fn encoding_is_lossless() {
        for x in [0.1, -0.0, f64::MIN_POSITIVE, 1e308, -3.5] {
            assert_eq!(decode(&encode(x)).unwrap().to_bits(), x.to_bits());
        }
        assert!(decode("0x12").is_err());
    }
}
