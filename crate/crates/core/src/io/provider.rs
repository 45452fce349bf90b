//! The boundary between the tracker and whatever computes appearance
//! features.

use thiserror::Error;

use crate::detection::Detection;
use crate::embedding::Embedding;
use crate::geometry::BoundingBox;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProviderError {
    #[error("provider cannot embed {0}")]
    Unsupported(&'static str),
    #[error("no embedding available for frame {frame}: {reason}")]
    Unavailable { frame: u32, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ProviderCapabilities {
    /// Can embed the detections of a frame.
    pub per_detection: bool,
    /// Can embed any box in a frame; required for boosting.
    pub arbitrary_box: bool,
}

/// Computes unit-norm appearance features.
///
/// Implementations must be deterministic within a run and safe to query
/// from several threads.
pub trait EmbeddingProvider: Sync {
    fn capabilities(&self) -> ProviderCapabilities;

    fn embed_box(&self, frame: u32, bbox: &BoundingBox) -> Result<Embedding, ProviderError>;

    fn embed_detections(
        &self,
        frame: u32,
        detections: &[Detection],
    ) -> Result<Vec<Embedding>, ProviderError> {
        if !self.capabilities().per_detection {
            return Err(ProviderError::Unsupported("detections"));
        }
        detections
            .iter()
            .map(|d| self.embed_box(frame, &d.bbox))
            .collect()
    }
}

/// Provides nothing; used when appearance is disabled or when detections
/// already carry their embeddings.
#[derive(Debug, Clone, Copy, Default)]
pub struct NullProvider;

impl EmbeddingProvider for NullProvider {
    fn capabilities(&self) -> ProviderCapabilities {
        ProviderCapabilities::default()
    }

    fn embed_box(&self, _frame: u32, _bbox: &BoundingBox) -> Result<Embedding, ProviderError> {
        Err(ProviderError::Unsupported("boxes"))
    }
}
