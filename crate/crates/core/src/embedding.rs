//! Unit-norm appearance feature vectors.

use std::sync::Arc;

use thiserror::Error;

/// Dimension of every appearance feature vector.
pub const EMBEDDING_DIM: usize = 128;

/// Tolerance on `‖f‖₂ = 1` for values accepted as-is.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbeddingError {
    #[error("expected {EMBEDDING_DIM} components, got {0}")]
    WrongDimension(usize),
    #[error("non-normalized embedding (norm {0})")]
    NotNormalized(f64),
    #[error("embedding contains non-finite values")]
    NonFinite,
}

/// An l2-normalized 128-dimensional feature. Cloning is cheap.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(Arc<[f64]>);

impl Embedding {
    /// Accepts `values` only if they already have unit norm within
    /// [`UNIT_NORM_TOLERANCE`].
    pub fn new(values: Vec<f64>) -> Result<Self, EmbeddingError> {
        let norm = checked_norm(&values)?;
        if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
            return Err(EmbeddingError::NotNormalized(norm));
        }
        Ok(Self(values.into()))
    }

    /// Rescales `values` to unit norm. Fails on a zero vector.
    pub fn normalized(mut values: Vec<f64>) -> Result<Self, EmbeddingError> {
        let norm = checked_norm(&values)?;
        if norm == 0.0 {
            return Err(EmbeddingError::NotNormalized(norm));
        }
        values.iter_mut().for_each(|v| *v /= norm);
        Ok(Self(values.into()))
    }

    /// Re-normalizes when the norm is within `tolerance` of one.
    pub fn renormalized_within(values: Vec<f64>, tolerance: f64) -> Result<Self, EmbeddingError> {
        let norm = checked_norm(&values)?;
        if (norm - 1.0).abs() > tolerance {
            return Err(EmbeddingError::NotNormalized(norm));
        }
        Self::normalized(values)
    }

    /// The `axis`-th standard basis vector.
    pub fn basis(axis: usize) -> Self {
        assert!(axis < EMBEDDING_DIM, "basis axis out of range");
        let mut v = vec![0.0; EMBEDDING_DIM];
        v[axis] = 1.0;
        Self(v.into())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn negated(&self) -> Self {
        Self(self.0.iter().map(|v| -v).collect())
    }

    /// Euclidean distance to `other`.
    pub fn distance(&self, other: &Embedding) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

fn checked_norm(values: &[f64]) -> Result<f64, EmbeddingError> {
    if values.len() != EMBEDDING_DIM {
        return Err(EmbeddingError::WrongDimension(values.len()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(EmbeddingError::NonFinite);
    }
    Ok(values.iter().map(|v| v * v).sum::<f64>().sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accepts_unit_and_rejects_others() {
        assert!(Embedding::new(Embedding::basis(3).values().to_vec()).is_ok());
        let half: Vec<f64> = Embedding::basis(0)
            .values()
            .iter()
            .map(|v| v * 0.5)
            .collect();
        assert!(matches!(
            Embedding::new(half.clone()),
            Err(EmbeddingError::NotNormalized(_))
        ));
        assert!(Embedding::renormalized_within(half, 1e-3).is_err());
        assert_eq!(
            Embedding::new(vec![1.0; 127]),
            Err(EmbeddingError::WrongDimension(127))
        );
    }

    #[test]
    fn near_unit_is_renormalized() {
        let mut v = vec![0.0; EMBEDDING_DIM];
        v[5] = 1.0005;
        let e = Embedding::renormalized_within(v, 1e-3).unwrap();
        assert_eq!(e.values()[5], 1.0);
    }

    #[test]
    fn zero_vector_cannot_be_normalized() {
        assert!(Embedding::normalized(vec![0.0; EMBEDDING_DIM]).is_err());
    }
}
