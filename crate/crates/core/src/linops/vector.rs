use std::cmp::Ordering;
use std::ops::Deref;

use crate::error::{Error, Result};

/// A dense real vector whose entries are guaranteed finite.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct DenseVector(Vec<f64>);

impl DenseVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.iter().all(|v| v.is_finite()) {
            Ok(DenseVector(entries))
        } else {
            Err(Error::NonFinite("vector construction"))
        }
    }

    pub fn zeros(n: usize) -> Self {
        DenseVector(vec![0.0; n])
    }

    pub(crate) fn from_vec_unchecked(entries: Vec<f64>) -> Self {
        debug_assert!(entries.iter().all(|v| v.is_finite()));
        DenseVector(entries)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Number of nonzero entries.
    pub fn nnz(&self) -> usize {
        self.0.iter().filter(|v| **v != 0.0).count()
    }

    pub fn support(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Copy with every entry outside `indices` set to zero.
    pub fn restrict(&self, indices: &[usize]) -> DenseVector {
        let mut out = vec![0.0; self.0.len()];
        for &i in indices {
            out[i] = self.0[i];
        }
        DenseVector(out)
    }
}

impl Deref for DenseVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for DenseVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        DenseVector::new(v)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Orders index `i` before `j` when `|x_i| > |x_j|`, falling back to the smaller index.
fn magnitude_order(x: &[f64], i: usize, j: usize) -> Ordering {
    x[j].abs()
        .partial_cmp(&x[i].abs())
        .unwrap_or(Ordering::Equal)
        .then(i.cmp(&j))
}

/// Indices of the `k` largest-magnitude entries, ties broken towards the smaller index.
/// The returned indices are sorted ascending.
pub fn top_k_indices(x: &[f64], k: usize) -> Vec<usize> {
    let n = x.len();
    let k = k.min(n);
    if k == 0 {
        return Vec::new();
    }
    let mut idx: Vec<usize> = (0..n).collect();
    if k < n {
        idx.select_nth_unstable_by(k - 1, |&i, &j| magnitude_order(x, i, j));
        idx.truncate(k);
    }
    idx.sort_unstable();
    idx
}

/// `H_k(x)`: keeps the `k` entries of largest magnitude and zeroes the rest.
pub fn hard_threshold_vec(x: &DenseVector, k: usize) -> Result<DenseVector> {
    if k > x.len() {
        return Err(Error::invalid(format!(
            "threshold level {k} exceeds dimension {}",
            x.len()
        )));
    }
    Ok(DenseVector(threshold_slice(x, k)))
}

pub(crate) fn threshold_slice(x: &[f64], k: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for i in top_k_indices(x, k) {
        out[i] = x[i];
    }
    out
}

/// `sum_i w_i x_i^2`.
pub fn weighted_sq_norm(x: &[f64], w: &[f64]) -> Result<f64> {
    Error::check_dim(x.len(), w.len())?;
    if w.iter().any(|v| *v < 0.0) {
        return Err(Error::invalid("weights must be non-negative"));
    }
    Ok(weighted_sq_norm_unchecked(x, w))
}

pub(crate) fn weighted_sq_norm_unchecked(x: &[f64], w: &[f64]) -> f64 {
    x.iter().zip(w).map(|(xi, wi)| wi * xi * xi).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(x: &[f64]) -> DenseVector {
        DenseVector::new(x.to_vec()).unwrap()
    }

    #[test]
    fn rejects_non_finite() {
        assert!(DenseVector::new(vec![1.0, f64::NAN]).is_err());
        assert!(DenseVector::new(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn top_two_by_magnitude() {
        let out = hard_threshold_vec(&v(&[3.0, -5.0, 1.0, 2.0]), 2).unwrap();
        assert_eq!(out.as_slice(), &[3.0, -5.0, 0.0, 0.0]);
    }

    #[test]
    fn full_level_is_identity() {
        let x = v(&[0.5, -2.0, 0.0, 7.0, 1e-9]);
        assert_eq!(hard_threshold_vec(&x, x.len()).unwrap(), x);
    }

    #[test]
    fn level_above_dimension_is_rejected() {
        assert!(matches!(
            hard_threshold_vec(&v(&[1.0, 2.0]), 3),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn ties_prefer_smaller_index() {
        let out = hard_threshold_vec(&v(&[1.0, -1.0, 1.0, 0.5]), 2).unwrap();
        assert_eq!(out.as_slice(), &[1.0, -1.0, 0.0, 0.0]);
        assert_eq!(top_k_indices(&[2.0, 2.0, 2.0], 1), vec![0]);
    }

    #[test]
    fn weighted_norm_examples() {
        let x = [1.0, 2.0, -3.0];
        assert_eq!(weighted_sq_norm(&x, &[1.0; 3]).unwrap(), 14.0);
        assert_eq!(weighted_sq_norm(&x, &[0.0; 3]).unwrap(), 0.0);
        assert_eq!(weighted_sq_norm(&[1.0, 2.0], &[0.5, 1.0]).unwrap(), 4.5);
        assert!(weighted_sq_norm(&x, &[1.0; 2]).is_err());
        assert!(weighted_sq_norm(&x, &[1.0, -1.0, 1.0]).is_err());
    }

    proptest! {
        #[test]
        fn threshold_is_idempotent(x in prop::collection::vec(-10.0..10.0f64, 1..30), k in 0usize..30) {
            let x = v(&x);
            let k = k.min(x.len());
            let once = hard_threshold_vec(&x, k).unwrap();
            let twice = hard_threshold_vec(&once, k).unwrap();
            prop_assert_eq!(&once, &twice);
            prop_assert!(once.nnz() <= k);
        }

        #[test]
        fn weighted_norm_ignores_zero_weight_entries(
            pairs in prop::collection::vec((-5.0..5.0f64, prop_oneof![Just(0.0), 0.5..1.0f64]), 1..20)
        ) {
            let x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let w: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let restricted: Vec<f64> = x.iter().zip(&w).map(|(xi, wi)| if *wi == 0.0 { 0.0 } else { *xi }).collect();
            prop_assert_eq!(weighted_sq_norm(&x, &w).unwrap(), weighted_sq_norm(&restricted, &w).unwrap());
        }
    }
}
