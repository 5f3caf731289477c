use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Compares the two ways of forming `𝔼(u v)` pointwise from `S` samples of
/// two discrete fields (rows are samples, columns grid points): the
/// diagonal of `Cor(u,v) = 𝔼(u⊗v)` against the expectation of the
/// pointwise product. Returns the largest absolute difference.
pub fn discrete_commutation_check(u: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<f64> {
    if u.shape() != v.shape() {
        return Err(Error::DimensionMismatch {
            what: "sampled fields",
            expected: u.len(),
            actual: v.len(),
        });
    }
    let (s, n) = u.shape();
    if s == 0 {
        return Err(Error::EmptyEnsemble);
    }
    let inv = 1.0 / s as f64;
    let cor = u.transpose() * v * inv;
    let pointwise = u.component_mul(v).row_sum() * inv;
    Ok((0..n)
        .map(|x| (cor[(x, x)] - pointwise[x]).abs())
        .fold(0.0, f64::max))
}
