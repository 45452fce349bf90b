//! Appearance and combined affinities between embeddings, tracklets and
//! detections.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::Embedding;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AffinityError {
    #[error("no appearance history")]
    NoAppearanceHistory,
}

/// Blend weight and gates used when scoring tracklet/detection pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffinityWeights {
    /// Appearance share of the total affinity, in `[0, 1]`.
    pub lambda: f64,
    /// Motion gate: pairs need IoU strictly above this.
    pub tau_m: f64,
    /// Appearance gate: pairs need appearance affinity strictly above this.
    pub tau_a: f64,
    /// Cap on stored embeddings compared per tracklet.
    pub n_max: usize,
}

impl Default for AffinityWeights {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            tau_m: 0.3,
            tau_a: 0.895,
            n_max: 20,
        }
    }
}

/// `1 − ‖f1 − f2‖`; lies in `[−1, 1]` for unit-norm inputs.
pub fn pair_affinity(f1: &Embedding, f2: &Embedding) -> f64 {
    1.0 - f1.distance(f2)
}

/// The embeddings used to represent a history: all of them when there are at
/// most `n_max`, otherwise the first one plus the most recent `n_max − 1`.
pub fn select_history(stored: &[Embedding], n_max: usize) -> impl Iterator<Item = &Embedding> {
    let n_max = n_max.max(1);
    let (head, tail) = if stored.len() <= n_max {
        (&stored[..0], stored)
    } else {
        (&stored[..1], &stored[stored.len() - (n_max - 1)..])
    };
    head.iter().chain(tail.iter())
}

/// Mean pair affinity between a detection and a tracklet's stored embeddings.
pub fn tracklet_detection_affinity(
    stored: &[Embedding],
    det: &Embedding,
    n_max: usize,
) -> Result<f64, AffinityError> {
    if stored.is_empty() {
        return Err(AffinityError::NoAppearanceHistory);
    }
    let (sum, count) = select_history(stored, n_max).fold((0.0, 0usize), |(s, n), f| {
        (s + pair_affinity(f, det), n + 1)
    });
    Ok(sum / count as f64)
}

/// Mean pair affinity over every pair drawn from the two (capped) histories.
pub fn tracklet_tracklet_affinity(
    a: &[Embedding],
    b: &[Embedding],
    n_max: usize,
) -> Result<f64, AffinityError> {
    if a.is_empty() || b.is_empty() {
        return Err(AffinityError::NoAppearanceHistory);
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for fa in select_history(a, n_max) {
        for fb in select_history(b, n_max) {
            sum += pair_affinity(fa, fb);
            count += 1;
        }
    }
    Ok(sum / count as f64)
}

/// `λ·a_a + (1 − λ)·a_m`.
pub fn total_affinity(appearance: f64, motion: f64, lambda: f64) -> f64 {
    lambda * appearance + (1.0 - lambda) * motion
}
