//! Tracklet state: filtered motion, per-frame history, stored appearance and
//! the statistics used to decide whether a tracklet is a real target.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::detection::{Detection, DetectionSource};
use crate::embedding::Embedding;
use crate::geometry::BoundingBox;
use crate::motion::{MotionError, MotionState, NoiseConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TrackId(pub u64);

impl fmt::Display for TrackId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// How a per-frame state was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateOrigin {
    Detected,
    Boosted,
    Predicted,
    Interpolated,
}

impl StateOrigin {
    /// Backed by an actual (detector or boosted) observation.
    pub fn is_observed(self) -> bool {
        matches!(self, StateOrigin::Detected | StateOrigin::Boosted)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StateOrigin::Detected => "detected",
            StateOrigin::Boosted => "boosted",
            StateOrigin::Predicted => "predicted",
            StateOrigin::Interpolated => "interpolated",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackStatus {
    /// Takes part in detection assignment.
    Active,
    /// Missed too many frames for assignment.
    Inactive,
    /// Inactive and still being predicted so it can be associated later.
    Ghost,
    /// No longer predicted.
    Dead,
    /// Absorbed into an older tracklet.
    Merged,
}

impl TrackStatus {
    /// Allowed status edges: active → inactive → ghost → dead, and any live
    /// status → merged.
    pub fn can_transition_to(self, next: TrackStatus) -> bool {
        use TrackStatus::*;
        matches!(
            (self, next),
            (Active, Inactive) | (Inactive, Ghost) | (Ghost, Dead)
        ) || (next == Merged && self != Merged)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackState {
    pub frame: u32,
    pub bbox: BoundingBox,
    pub origin: StateOrigin,
    /// Set once the state has been written to the output stream.
    pub emitted: bool,
}

#[derive(Debug, Clone)]
pub struct Tracklet {
    pub(crate) id: TrackId,
    pub(crate) states: Vec<TrackState>,
    pub(crate) embeddings: Vec<(u32, Embedding)>,
    pub(crate) motion: MotionState,
    pub(crate) status: TrackStatus,
    pub(crate) miss_count: u32,
    pub(crate) ghost_frames: u32,
    pub(crate) det_confidences: Vec<f64>,
    pub(crate) assignment_costs: Vec<f64>,
    pub(crate) last_boost_frame: Option<u32>,
    pub(crate) last_observed_frame: u32,
    pub(crate) status_history: Vec<TrackStatus>,
    /// States before this index are settled for emission purposes.
    pub(crate) emit_cursor: usize,
}

impl Tracklet {
    /// A new active tracklet born from `det`.
    pub fn spawn(id: TrackId, det: &Detection, noise: &NoiseConfig) -> Self {
        let origin = origin_of(det.source);
        Self {
            id,
            states: vec![TrackState {
                frame: det.frame,
                bbox: det.bbox,
                origin,
                emitted: false,
            }],
            embeddings: det
                .embedding
                .iter()
                .map(|e| (det.frame, e.clone()))
                .collect(),
            motion: MotionState::init(&det.bbox, noise),
            status: TrackStatus::Active,
            miss_count: 0,
            ghost_frames: 0,
            det_confidences: vec![det.confidence],
            assignment_costs: Vec::new(),
            last_boost_frame: (det.source == DetectionSource::Boosted).then_some(det.frame),
            last_observed_frame: det.frame,
            status_history: vec![TrackStatus::Active],
            emit_cursor: 0,
        }
    }

    pub fn id(&self) -> TrackId {
        self.id
    }

    pub fn status(&self) -> TrackStatus {
        self.status
    }

    pub fn states(&self) -> &[TrackState] {
        &self.states
    }

    pub fn embeddings(&self) -> impl Iterator<Item = &Embedding> {
        self.embeddings.iter().map(|(_, e)| e)
    }

    pub(crate) fn embedding_list(&self) -> Vec<Embedding> {
        self.embeddings.iter().map(|(_, e)| e.clone()).collect()
    }

    pub fn has_appearance(&self) -> bool {
        !self.embeddings.is_empty()
    }

    pub fn motion(&self) -> &MotionState {
        &self.motion
    }

    pub fn miss_count(&self) -> u32 {
        self.miss_count
    }

    pub fn ghost_frames(&self) -> u32 {
        self.ghost_frames
    }

    pub fn det_confidences(&self) -> &[f64] {
        &self.det_confidences
    }

    pub fn assignment_costs(&self) -> &[f64] {
        &self.assignment_costs
    }

    pub fn last_boost_frame(&self) -> Option<u32> {
        self.last_boost_frame
    }

    /// Every status this tracklet has held, in order.
    pub fn status_history(&self) -> &[TrackStatus] {
        &self.status_history
    }

    pub fn first_frame(&self) -> u32 {
        self.states[0].frame
    }

    pub fn last_frame(&self) -> u32 {
        self.states.last().map(|s| s.frame).unwrap_or(0)
    }

    /// Frame of the most recent detected or boosted state.
    pub fn last_observed_frame(&self) -> u32 {
        self.last_observed_frame
    }

    /// Number of states backed by a detection.
    pub fn observed_len(&self) -> usize {
        self.det_confidences.len()
    }

    /// Box predicted by the filter for the current frame.
    pub fn predicted_box(&self) -> BoundingBox {
        self.motion.to_box()
    }

    pub fn state_at(&self, frame: u32) -> Option<&TrackState> {
        let first = self.first_frame();
        if frame < first {
            return None;
        }
        self.states
            .get((frame - first) as usize)
            .filter(|s| s.frame == frame)
    }

    pub fn is_live(&self) -> bool {
        matches!(
            self.status,
            TrackStatus::Active | TrackStatus::Inactive | TrackStatus::Ghost
        )
    }

    pub(crate) fn set_status(&mut self, next: TrackStatus) {
        debug_assert!(
            self.status.can_transition_to(next),
            "illegal status edge {:?} -> {:?}",
            self.status,
            next
        );
        self.status = next;
        self.status_history.push(next);
    }

    /// Advances the filter one frame and records the prediction as this
    /// frame's state.
    pub(crate) fn predict(&mut self, frame: u32, noise: &NoiseConfig) {
        self.motion = self.motion.predict(noise);
        self.states.push(TrackState {
            frame,
            bbox: self.motion.to_box(),
            origin: StateOrigin::Predicted,
            emitted: false,
        });
    }

    /// Corrects the filter with `det`, replacing this frame's predicted
    /// state. Returns the assignment cost.
    pub(crate) fn assign(
        &mut self,
        det: &Detection,
        noise: &NoiseConfig,
    ) -> Result<f64, MotionError> {
        let (motion, cost) = self.motion.update(&det.bbox, noise)?;
        self.motion = motion;
        let state = TrackState {
            frame: det.frame,
            bbox: det.bbox,
            origin: origin_of(det.source),
            emitted: false,
        };
        match self.states.last_mut() {
            Some(last) if last.frame == det.frame => *last = state,
            _ => self.states.push(state),
        }
        if let Some(e) = &det.embedding {
            self.embeddings.push((det.frame, e.clone()));
        }
        self.det_confidences.push(det.confidence);
        self.assignment_costs.push(cost);
        self.last_observed_frame = det.frame;
        if det.source == DetectionSource::Boosted {
            self.last_boost_frame = Some(det.frame);
        }
        Ok(cost)
    }
}

fn origin_of(source: DetectionSource) -> StateOrigin {
    match source {
        DetectionSource::Detector => StateOrigin::Detected,
        DetectionSource::Boosted => StateOrigin::Boosted,
    }
}
