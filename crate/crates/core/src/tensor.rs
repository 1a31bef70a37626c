//! Dense row-major `f64` tensors and the raw kernels shared by the tape.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum slice norm accepted by [`l2_normalize`].
pub const NORM_EPS: f64 = 1e-12;

/// Slices whose norm is already this close to one are left untouched by
/// [`l2_normalize`], which makes normalization exactly idempotent.
const UNIT_TOLERANCE: f64 = 1e-14;

/// Leaf size below which reductions run sequentially.
const PAIRWISE_BLOCK: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::dim("tensor", format!("zero-sized dimension in {shape:?}")));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::dim(
                "tensor",
                format!("shape {shape:?} needs {expected} values, got {}", data.len()),
            ));
        }
        Ok(Self { shape, data })
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        assert!(!data.is_empty(), "empty vector");
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::dim("from_rows", "ragged rows"));
        }
        Self::new(vec![rows.len(), cols], rows.concat())
    }

    pub fn full(shape: Vec<usize>, value: f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![value; n],
        }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(vec![n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.shape.clone())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1 && self.shape.len() <= 1
    }

    /// Value of a one-element tensor.
    pub fn item(&self) -> Option<f64> {
        (self.data.len() == 1).then(|| self.data[0])
    }

    pub fn rows(&self) -> usize {
        match self.shape.len() {
            0 | 1 => 1,
            _ => self.shape[0],
        }
    }

    /// Width of a matrix; vectors are treated as a single row.
    pub fn cols(&self) -> usize {
        match self.shape.len() {
            0 => 1,
            1 => self.shape[0],
            _ => self.shape[1..].iter().product(),
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn get2(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols() + j]
    }

    /// Gather the listed rows of a matrix into a new matrix.
    pub fn select_rows(&self, idx: &[usize]) -> Result<Self> {
        if self.shape.len() != 2 {
            return Err(Error::dim("select_rows", format!("expected matrix, got {:?}", self.shape)));
        }
        let c = self.cols();
        let mut out = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            if i >= self.rows() {
                return Err(Error::dim("select_rows", format!("row {i} out of {}", self.rows())));
            }
            out.extend_from_slice(self.row(i));
        }
        Self::new(vec![idx.len(), c], out)
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::dim("reshape", format!("{:?} -> {shape:?}", self.shape)));
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Bit patterns of the values, for exact comparisons and digests.
    pub fn bits(&self) -> impl Iterator<Item = u64> + '_ {
        self.data.iter().map(|x| x.to_bits())
    }

    pub fn transpose(&self) -> Result<Self> {
        if self.shape.len() != 2 {
            return Err(Error::dim("transpose", format!("expected matrix, got {:?}", self.shape)));
        }
        let (r, c) = (self.shape[0], self.shape[1]);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Self::new(vec![c, r], out)
    }
}

/// Tree reduction: deterministic regardless of how a batch was assembled.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= PAIRWISE_BLOCK {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

pub fn pairwise_dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    if a.len() <= PAIRWISE_BLOCK {
        return a.iter().zip(b).map(|(x, y)| x * y).sum();
    }
    let mid = a.len() / 2;
    pairwise_dot(&a[..mid], &b[..mid]) + pairwise_dot(&a[mid..], &b[mid..])
}

/// Treat a tensor as a matrix for the matrix product: vectors become columns.
pub(crate) fn as_matrix(t: &Tensor) -> (usize, usize) {
    match t.shape.len() {
        0 => (1, 1),
        1 => (t.shape[0], 1),
        2 => (t.shape[0], t.shape[1]),
        _ => (t.shape[0], t.cols()),
    }
}

/// `op(a) · op(b)` where `op` optionally transposes. Returns a row-major
/// `(m, n)` buffer.
pub(crate) fn matmul_raw(
    a: &Tensor,
    trans_a: bool,
    b: &Tensor,
    trans_b: bool,
) -> Result<(usize, usize, Vec<f64>)> {
    let (ar, ac) = as_matrix(a);
    let (br, bc) = as_matrix(b);
    let (m, k) = if trans_a { (ac, ar) } else { (ar, ac) };
    let (k2, n) = if trans_b { (bc, br) } else { (br, bc) };
    if k != k2 {
        return Err(Error::dim(
            "matmul",
            format!(
                "{:?}{} x {:?}{} (inner {k} vs {k2})",
                a.shape,
                if trans_a { "^T" } else { "" },
                b.shape,
                if trans_b { "^T" } else { "" },
            ),
        ));
    }
    // Rows of op(a) and columns of op(b) laid out contiguously.
    let lhs: Vec<f64> = if trans_a {
        a.transpose_as_matrix()
    } else {
        a.data.clone()
    };
    let rhs_t: Vec<f64> = if trans_b {
        b.data.clone()
    } else {
        b.transpose_as_matrix()
    };
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &lhs[i * k..(i + 1) * k];
        for j in 0..n {
            out[i * n + j] = pairwise_dot(row, &rhs_t[j * k..(j + 1) * k]);
        }
    }
    Ok((m, n, out))
}

impl Tensor {
    fn transpose_as_matrix(&self) -> Vec<f64> {
        let (r, c) = as_matrix(self);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        out
    }
}

/// Normalize each slice along `axis` (0 or 1 for matrices, 0 for vectors)
/// to unit Euclidean norm.
pub fn l2_normalize(v: &Tensor, axis: usize) -> Result<Tensor> {
    let (r, c) = match v.shape.len() {
        1 => (1, v.shape[0]),
        2 => (v.shape[0], v.shape[1]),
        _ => return Err(Error::dim("l2_normalize", format!("unsupported shape {:?}", v.shape))),
    };
    let rank = v.shape.len();
    if axis >= rank {
        return Err(Error::dim("l2_normalize", format!("axis {axis} for rank {rank}")));
    }
    // Normalizing along axis 0 of a matrix normalizes columns.
    let by_columns = rank == 2 && axis == 0;
    let work = if by_columns { v.transpose()? } else { v.clone() };
    let (nr, nc) = if by_columns { (c, r) } else { (r, c) };
    let mut out = work.data.clone();
    for i in 0..nr {
        let slice = &mut out[i * nc..(i + 1) * nc];
        let sq: Vec<f64> = slice.iter().map(|x| x * x).collect();
        let norm = pairwise_sum(&sq).sqrt();
        if !(norm >= NORM_EPS) {
            return Err(Error::Degenerate(format!(
                "l2_normalize: slice {i} has norm {norm:e} below {NORM_EPS:e}"
            )));
        }
        if (norm - 1.0).abs() <= UNIT_TOLERANCE {
            continue;
        }
        for x in slice.iter_mut() {
            *x /= norm;
        }
    }
    let normalized = Tensor::new(work.shape.clone(), out)?;
    if by_columns {
        normalized.transpose()
    } else {
        Ok(normalized)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn shape_must_match_data() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(vec![2, 0], vec![]).is_err());
        assert_eq!(Tensor::new(vec![2, 3], vec![0.0; 6]).unwrap().cols(), 3);
    }

    #[test]
    fn normalize_three_four_five() {
        let v = Tensor::vector(vec![3.0, 4.0]);
        let n = l2_normalize(&v, 0).unwrap();
        assert!((n.data()[0] - 0.6).abs() < 1e-15);
        assert!((n.data()[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn normalize_unit_vector_is_identity() {
        let v = Tensor::vector(vec![0.0, 1.0, 0.0]);
        assert_eq!(l2_normalize(&v, 0).unwrap(), v);
    }

    #[test]
    fn normalize_zero_vector_is_degenerate() {
        let v = Tensor::vector(vec![0.0, 0.0]);
        assert!(matches!(l2_normalize(&v, 0), Err(Error::Degenerate(_))));
    }

    #[test]
    fn normalize_columns() {
        let m = Tensor::matrix(2, 2, vec![3.0, 0.0, 4.0, 2.0]).unwrap();
        let n = l2_normalize(&m, 0).unwrap();
        assert_eq!(n.data(), &[0.6, 0.0, 0.8, 1.0]);
    }

    #[test]
    fn pairwise_sum_matches_naive_on_integers() {
        let xs: Vec<f64> = (1..=1000).map(f64::from).collect();
        assert_eq!(pairwise_sum(&xs), 500_500.0);
    }

    #[test]
    fn matmul_with_transposes() {
        let a = Tensor::matrix(2, 3, vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let (m, n, ab_t) = matmul_raw(&a, false, &a, true).unwrap();
        assert_eq!((m, n), (2, 2));
        assert_eq!(ab_t, vec![14., 32., 32., 77.]);
        let (m, n, at_a) = matmul_raw(&a, true, &a, false).unwrap();
        assert_eq!((m, n), (3, 3));
        assert_eq!(at_a[0], 17.0);
        assert!(matmul_raw(&a, false, &a, false).is_err());
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(rows in prop::collection::vec(
            prop::collection::vec(-100.0f64..100.0, 4), 1..6)
        ) {
            let m = Tensor::from_rows(&rows).unwrap();
            prop_assume!(rows.iter().all(|r| r.iter().map(|x| x * x).sum::<f64>() > 1e-6));
            let once = l2_normalize(&m, 1).unwrap();
            let twice = l2_normalize(&once, 1).unwrap();
            prop_assert_eq!(once, twice);
        }
    }
}
