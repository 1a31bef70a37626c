use rand::seq::{index, SliceRandom};
use rand::Rng;

use super::PuDataset;
use crate::error::{Error, Result};

/// Give up on `require_both_kinds` after this many rejected draws.
const MAX_RESAMPLES: usize = 10_000;

/// Uniform sample of `batch_size` row indices without replacement. With
/// `require_both_kinds`, draws are repeated until the batch holds at least
/// one labeled positive and one unlabeled row.
pub fn sample_minibatch(
    data: &PuDataset,
    batch_size: usize,
    rng: &mut impl Rng,
    require_both_kinds: bool,
) -> Result<Vec<usize>> {
    let n = data.len();
    if batch_size == 0 || batch_size > n {
        return Err(Error::Config(format!("batch size {batch_size} not in 1..={n}")));
    }
    if require_both_kinds && (data.n_labeled() == 0 || data.n_unlabeled() == 0) {
        return Err(Error::Composition(format!(
            "dataset has {} labeled and {} unlabeled rows; both kinds are required",
            data.n_labeled(),
            data.n_unlabeled()
        )));
    }
    for _ in 0..MAX_RESAMPLES {
        let idx = index::sample(rng, n, batch_size).into_vec();
        if !require_both_kinds || has_both_kinds(data, &idx) {
            return Ok(idx);
        }
    }
    Err(Error::Composition(format!(
        "no batch of size {batch_size} with both label kinds after {MAX_RESAMPLES} draws"
    )))
}

pub(crate) fn has_both_kinds(data: &PuDataset, idx: &[usize]) -> bool {
    let pos = idx.iter().filter(|&&i| data.labeled[i]).count();
    pos > 0 && pos < idx.len()
}

/// One epoch: a fresh permutation of `0..n` cut into consecutive batches.
/// A trailing batch smaller than `min_batch` is dropped.
pub fn epoch_batches(n: usize, batch_size: usize, min_batch: usize, rng: &mut impl Rng) -> Vec<Vec<usize>> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    perm.chunks(batch_size.max(1))
        .filter(|c| c.len() >= min_batch.max(1))
        .map(<[usize]>::to_vec)
        .collect()
}
