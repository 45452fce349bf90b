//! Tracklet confidence, status progression and detection boosting.

use serde::{Deserialize, Serialize};

use crate::affinity::{tracklet_detection_affinity, AffinityWeights};
use crate::detection::Detection;
use crate::geometry::BoundingBox;
use crate::io::provider::EmbeddingProvider;
use crate::tracklet::{TrackStatus, Tracklet};

/// Thresholds deciding whether a tracklet is a real target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceConfig {
    /// Minimum number of observed states.
    pub tau_l: usize,
    /// Minimum mean detector confidence.
    pub tau_c: f64,
    /// Maximum mean assignment cost (Mahalanobis units).
    pub max_mean_cost: f64,
}

impl Default for ConfidenceConfig {
    fn default() -> Self {
        Self {
            tau_l: 6,
            tau_c: 0.2,
            max_mean_cost: 4.0,
        }
    }
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Long enough, confident enough and cheap enough to assign.
pub fn is_positive(t: &Tracklet, cfg: &ConfidenceConfig) -> bool {
    t.observed_len() >= cfg.tau_l
        && mean(t.det_confidences()) >= cfg.tau_c
        && mean(t.assignment_costs()) <= cfg.max_mean_cost
}

/// Per-frame status bookkeeping, called after assignment for `frame`.
///
/// A tracklet observed this frame resets its miss counter. Otherwise the
/// counter grows; once it exceeds `max_misses` the tracklet leaves
/// assignment (inactive) and starts its ghost phase in the same frame. A
/// ghost dies after `ghost_limit` ghost frames.
pub fn advance_status(t: &mut Tracklet, frame: u32, max_misses: u32, ghost_limit: u32) {
    match t.status {
        TrackStatus::Dead | TrackStatus::Merged => {}
        _ if t.last_observed_frame == frame => {
            t.miss_count = 0;
        }
        TrackStatus::Active => {
            t.miss_count += 1;
            if t.miss_count > max_misses {
                t.set_status(TrackStatus::Inactive);
                t.set_status(TrackStatus::Ghost);
                t.ghost_frames = 1;
                if t.ghost_frames > ghost_limit {
                    t.set_status(TrackStatus::Dead);
                }
            }
        }
        TrackStatus::Inactive => {
            t.miss_count += 1;
            t.set_status(TrackStatus::Ghost);
            t.ghost_frames = 1;
        }
        TrackStatus::Ghost => {
            t.miss_count += 1;
            t.ghost_frames += 1;
            if t.ghost_frames > ghost_limit {
                t.set_status(TrackStatus::Dead);
            }
        }
    }
}

/// Center offsets, as fractions of the predicted width/height, sampled
/// around a prediction when boosting.
pub const BOOST_OFFSETS: [f64; 5] = [-0.5, -0.25, 0.0, 0.25, 0.5];
pub const BOOST_SCALES: [f64; 3] = [0.9, 1.0, 1.1];

/// The 75 candidate boxes around `predicted`, ordered scale-major, then
/// vertical offset, then horizontal offset.
pub fn boost_candidates(predicted: &BoundingBox) -> Vec<BoundingBox> {
    let (cx, cy) = predicted.center();
    let (w, h) = (predicted.width(), predicted.height());
    let mut out = Vec::with_capacity(BOOST_SCALES.len() * BOOST_OFFSETS.len().pow(2));
    for &s in &BOOST_SCALES {
        for &dy in &BOOST_OFFSETS {
            for &dx in &BOOST_OFFSETS {
                let b = BoundingBox::from_center(cx + dx * w, cy + dy * h, s * w, s * h)
                    .expect("scaled extents of a valid box are positive");
                out.push(b);
            }
        }
    }
    out
}

/// Searches around the tracklet's prediction for the box that best matches
/// its stored appearance.
///
/// Returns a boosted detection iff the best candidate's appearance affinity
/// exceeds `tau_a` and at least `min_gap` frames passed since the last
/// boost. Providers without arbitrary-box support never boost. Ties keep the
/// earliest candidate.
pub fn boost(
    t: &Tracklet,
    frame: u32,
    provider: &dyn EmbeddingProvider,
    weights: &AffinityWeights,
    min_gap: u32,
) -> Option<Detection> {
    if !provider.capabilities().arbitrary_box || !t.has_appearance() {
        return None;
    }
    if let Some(last) = t.last_boost_frame() {
        if frame < last + min_gap {
            return None;
        }
    }
    let stored = t.embedding_list();
    let mut best: Option<(f64, BoundingBox, crate::embedding::Embedding)> = None;
    for candidate in boost_candidates(&t.predicted_box()) {
        let Ok(embedding) = provider.embed_box(frame, &candidate) else {
            continue;
        };
        let affinity = tracklet_detection_affinity(&stored, &embedding, weights.n_max)
            .expect("history is non-empty");
        if best.as_ref().is_none_or(|(a, _, _)| affinity > *a) {
            best = Some((affinity, candidate, embedding));
        }
    }
    best.filter(|(a, _, _)| *a > weights.tau_a)
        .map(|(a, b, e)| Detection::boosted(frame, b, a, e))
}
