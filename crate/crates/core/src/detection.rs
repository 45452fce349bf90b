use serde::{Deserialize, Serialize};

use crate::embedding::Embedding;
use crate::geometry::BoundingBox;

/// Where a detection came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectionSource {
    Detector,
    /// Proposed by appearance search around a tracklet prediction.
    Boosted,
}

/// One candidate observation in a frame (frames are 1-indexed).
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub frame: u32,
    pub bbox: BoundingBox,
    pub confidence: f64,
    pub embedding: Option<Embedding>,
    pub source: DetectionSource,
}

impl Detection {
    pub fn new(frame: u32, bbox: BoundingBox, confidence: f64) -> Self {
        Self {
            frame,
            bbox,
            confidence,
            embedding: None,
            source: DetectionSource::Detector,
        }
    }

    pub fn with_embedding(mut self, embedding: Embedding) -> Self {
        self.embedding = Some(embedding);
        self
    }

    pub(crate) fn boosted(
        frame: u32,
        bbox: BoundingBox,
        affinity: f64,
        embedding: Embedding,
    ) -> Self {
        Self {
            frame,
            bbox,
            confidence: affinity,
            embedding: Some(embedding),
            source: DetectionSource::Boosted,
        }
    }
}
