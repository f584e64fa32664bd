//! Fixtures with exactly prescribed sample correlations.

use nalgebra::DMatrix;

use crate::model::{validate, MissingPolicy, ScoreMatrix, Taxonomy, ValidatedDataset};

/// Sylvester Hadamard matrix of order `2^k`, without its all-ones column:
/// `2^k − 1` centered, mutually orthogonal columns of equal norm.
pub fn centered_orthogonal(k: u32) -> DMatrix<f64> {
    let n = 1usize << k;
    let h = DMatrix::from_fn(n, n, |i, j| if (i & j).count_ones() % 2 == 0 { 1.0 } else { -1.0 });
    h.remove_column(0)
}

/// `n_rows × p` data whose sample correlation matrix equals `target`
/// (positive definite) up to rounding.
pub fn with_correlation(target: &DMatrix<f64>, k: u32) -> DMatrix<f64> {
    let p = target.nrows();
    let basis = centered_orthogonal(k).columns(0, p).into_owned();
    let l = target.clone().cholesky().expect("target must be positive definite").l();
    basis * l.transpose()
}

/// Correlation matrix from a lower-triangle closure.
pub fn corr(p: usize, f: impl Fn(usize, usize) -> f64) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |i, j| match i.cmp(&j) {
        std::cmp::Ordering::Equal => 1.0,
        std::cmp::Ordering::Greater => f(i, j),
        std::cmp::Ordering::Less => f(j, i),
    })
}

pub fn dataset(ids: &[&str], values: &DMatrix<f64>, taxonomy: &Taxonomy) -> ValidatedDataset {
    let models = (0..values.nrows()).map(|i| format!("m{i:03}")).collect();
    let ids = ids.iter().map(|s| s.to_string()).collect();
    let scores = ScoreMatrix::from_dense(models, ids, values).unwrap();
    validate(&scores, taxonomy, MissingPolicy::Listwise).unwrap()
}
