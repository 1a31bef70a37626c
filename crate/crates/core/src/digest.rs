//! SHA-256 digests of parameters and configuration.

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

/// Digest over shapes and exact bit patterns of a parameter list.
pub fn parameter_digest<'a>(tensors: impl IntoIterator<Item = &'a Tensor>) -> String {
    let mut h = Sha256::new();
    for t in tensors {
        h.update((t.shape().len() as u64).to_le_bytes());
        for &d in t.shape() {
            h.update((d as u64).to_le_bytes());
        }
        for b in t.bits() {
            h.update(b.to_le_bytes());
        }
    }
    hex(&h.finalize())
}

/// Digest of the canonical JSON rendering of `value`.
pub fn json_digest(value: &impl Serialize) -> Result<String> {
    let bytes = serde_json::to_vec(value).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))?;
    Ok(sha256_hex(&bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn digest_sees_shape_and_sign_of_zero() {
        let a = Tensor::matrix(1, 2, vec![0.0, 1.0]).unwrap();
        let b = Tensor::matrix(2, 1, vec![0.0, 1.0]).unwrap();
        let c = Tensor::matrix(1, 2, vec![-0.0, 1.0]).unwrap();
        let da = parameter_digest([&a]);
        assert_ne!(da, parameter_digest([&b]));
        assert_ne!(da, parameter_digest([&c]));
        assert_eq!(da, parameter_digest([&a.clone()]));
    }
}
