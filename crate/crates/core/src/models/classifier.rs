use rand::Rng;

use super::glorot_uniform;
use crate::error::{Error, Result};
use crate::tape::{sigmoid, Tape, Var};
use crate::tensor::Tensor;

/// Affine scorer `h Wᵀ + b` with one logit (positive-class score) or two
/// logits (positive, negative).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearClassifier {
    /// `k × repr_dim`, `k ∈ {1, 2}`.
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone, Copy)]
pub struct ClassifierVars {
    pub weight: Var,
    pub bias: Var,
}

impl LinearClassifier {
    pub fn new(weight: Tensor, bias: Tensor) -> Result<Self> {
        let ok = weight.shape().len() == 2 && matches!(weight.rows(), 1 | 2) && bias.shape() == [weight.rows()];
        if !ok {
            return Err(Error::dim(
                "classifier",
                format!("weight {:?} with bias {:?}", weight.shape(), bias.shape()),
            ));
        }
        Ok(Self { weight, bias })
    }

    pub fn single(w: Vec<f64>, b: f64) -> Result<Self> {
        let r = w.len();
        Self::new(Tensor::matrix(1, r, w)?, Tensor::vector(vec![b]))
    }

    /// Rows `u` (positive logit) and `v` (negative logit).
    pub fn two_logit(u: Vec<f64>, v: Vec<f64>, b_u: f64, b_v: f64) -> Result<Self> {
        if u.len() != v.len() {
            return Err(Error::dim("classifier", format!("rows of width {} and {}", u.len(), v.len())));
        }
        let r = u.len();
        let mut w = u;
        w.extend(v);
        Self::new(Tensor::matrix(2, r, w)?, Tensor::vector(vec![b_u, b_v]))
    }

    pub fn init(repr_dim: usize, logits: usize, rng: &mut impl Rng) -> Result<Self> {
        if !matches!(logits, 1 | 2) || repr_dim == 0 {
            return Err(Error::Config(format!("classifier needs 1 or 2 logits over a positive width, got {logits}")));
        }
        Self::new(
            glorot_uniform(repr_dim, logits, vec![logits, repr_dim], rng),
            Tensor::zeros(vec![logits]),
        )
    }

    pub fn logits(&self) -> usize {
        self.weight.rows()
    }

    pub fn repr_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn params(&self) -> Vec<&Tensor> {
        vec![&self.weight, &self.bias]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.weight, &mut self.bias]
    }

    pub fn param_names(&self) -> Vec<String> {
        vec!["classifier.weight".into(), "classifier.bias".into()]
    }

    pub fn register(&self, tape: &mut Tape, trainable: bool) -> ClassifierVars {
        if trainable {
            ClassifierVars {
                weight: tape.param(self.weight.clone()),
                bias: tape.param(self.bias.clone()),
            }
        } else {
            ClassifierVars {
                weight: tape.constant(self.weight.clone()),
                bias: tape.constant(self.bias.clone()),
            }
        }
    }

    /// `n × k` logits.
    pub fn score_tape(&self, tape: &mut Tape, vars: ClassifierVars, h: Var) -> Result<Var> {
        let shape = tape.value(h).shape().to_vec();
        if shape.len() != 2 || shape[1] != self.repr_dim() {
            return Err(Error::dim(
                "classifier_score",
                format!("input {shape:?} for a classifier over width {}", self.repr_dim()),
            ));
        }
        let s = tape.matmul_t(h, false, vars.weight, true)?;
        tape.add_row_bias(s, vars.bias)
    }

    /// `n × k` logits for a batch of representations.
    pub fn score(&self, h: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let vars = self.register(&mut tape, false);
        let h = tape.constant(h.clone());
        let s = self.score_tape(&mut tape, vars, h)?;
        Ok(tape.value(s).clone())
    }

    /// Positive-class scores: the logit itself, or `u·h − v·h` for a
    /// two-logit classifier.
    pub fn positive_scores(&self, h: &Tensor) -> Result<Vec<f64>> {
        let s = self.score(h)?;
        Ok(match self.logits() {
            1 => s.into_data(),
            _ => (0..s.rows()).map(|i| s.get2(i, 0) - s.get2(i, 1)).collect(),
        })
    }

    /// Probability of the positive class per row.
    pub fn positive_probabilities(&self, h: &Tensor) -> Result<Vec<f64>> {
        let s = self.score(h)?;
        Ok(match self.logits() {
            1 => s.data().iter().map(|&z| sigmoid(z)).collect(),
            _ => (0..s.rows()).map(|i| softmax_positive([s.get2(i, 0), s.get2(i, 1)])).collect(),
        })
    }
}

/// Softmax probability of the first logit, computed as a softmax (shifted
/// exponentials over their sum).
pub fn softmax_positive(logits: [f64; 2]) -> f64 {
    let m = logits[0].max(logits[1]);
    let a = (logits[0] - m).exp();
    let b = (logits[1] - m).exp();
    a / (a + b)
}

/// Single-logit classifier `(u − v, b_u − b_v)` whose sigmoid equals the
/// softmax positive probability of the two-logit original.
pub fn collapse_two_logit(clf: &LinearClassifier) -> Result<LinearClassifier> {
    if clf.logits() != 2 {
        return Err(Error::Contract(format!("expected a two-logit classifier, got {} logit(s)", clf.logits())));
    }
    let r = clf.repr_dim();
    let w = clf.weight.data();
    let diff = (0..r).map(|j| w[j] - w[r + j]).collect();
    let b = clf.bias.data();
    LinearClassifier::single(diff, b[0] - b[1])
}
