//! Frame-by-frame tracking with delayed emission of confirmed states.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assignment::{
    apply_matching, build_affinity_matrix, solve_max_assignment, AssignmentError, AssignmentRecord,
    IdAllocator,
};
use crate::association::{associate, MergeRecord};
use crate::config::TrackerConfig;
use crate::detection::Detection;
use crate::geometry::{nms_indices, BoundingBox};
use crate::io::provider::{EmbeddingProvider, ProviderError};
use crate::lifecycle::{advance_status, boost, is_positive};
use crate::tracklet::{StateOrigin, TrackId, TrackStatus, Tracklet};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("non-monotonic frame: expected {expected}, got {got}")]
    NonMonotonicFrame { expected: u32, got: u32 },
    #[error("detection for frame {found} passed with frame {frame}")]
    FrameMismatch { frame: u32, found: u32 },
    #[error("frame {0} is not a valid frame index")]
    InvalidFrame(u32),
    #[error("tracker already finalized")]
    Finalized,
    #[error("embedding provider failed: {0}")]
    Provider(#[from] ProviderError),
    #[error("provider returned {got} embeddings for {expected} detections")]
    EmbeddingCount { expected: usize, got: usize },
    #[error(transparent)]
    Assignment(#[from] AssignmentError),
}

/// One output box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmittedState {
    pub frame: u32,
    pub id: TrackId,
    pub bbox: BoundingBox,
    pub origin: StateOrigin,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostRecord {
    pub frame: u32,
    pub track: TrackId,
    pub bbox: BoundingBox,
    pub affinity: f64,
    /// Survived NMS and was assigned to its tracklet.
    pub assigned: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub assignments: Vec<AssignmentRecord>,
    pub boosts: Vec<BoostRecord>,
    pub merges: Vec<MergeRecord>,
    pub spawned: Vec<TrackId>,
    /// Detector detections removed by NMS.
    pub suppressed: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameResult {
    pub frame: u32,
    /// States newly emitted by this call, sorted by frame then id.
    pub tracks: Vec<EmittedState>,
    pub diagnostics: Diagnostics,
}

/// Accumulated wall-clock time per processing stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct StageTimings {
    pub predict: Duration,
    pub embed: Duration,
    pub assign: Duration,
    pub boost: Duration,
    pub lifecycle: Duration,
    pub association: Duration,
    pub emission: Duration,
}

/// Online tracker over one sequence.
#[derive(Debug)]
pub struct Tracker {
    config: TrackerConfig,
    tracklets: Vec<Tracklet>,
    ids: IdAllocator,
    last_frame: Option<u32>,
    finalized: bool,
    timings: StageTimings,
}

fn timed<T>(slot: &mut Duration, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    *slot += start.elapsed();
    out
}

impl Tracker {
    /// Panics on an invalid config; use [`TrackerConfig::validate`] first
    /// when the config comes from outside.
    pub fn new(config: TrackerConfig) -> Self {
        if let Err(e) = config.validate() {
            panic!("{e}");
        }
        Self {
            config,
            tracklets: Vec::new(),
            ids: IdAllocator::default(),
            last_frame: None,
            finalized: false,
            timings: StageTimings::default(),
        }
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    pub fn tracklets(&self) -> &[Tracklet] {
        &self.tracklets
    }

    pub fn stage_timings(&self) -> StageTimings {
        self.timings
    }

    fn appearance_on(&self) -> bool {
        self.config.appearance_enabled
    }

    /// Processes the detections of `frame`, which must directly follow the
    /// previous frame. Returns the states that became final.
    pub fn process_frame(
        &mut self,
        frame: u32,
        detections: &[Detection],
        provider: &dyn EmbeddingProvider,
    ) -> Result<FrameResult, PipelineError> {
        if self.finalized {
            return Err(PipelineError::Finalized);
        }
        if frame == 0 {
            return Err(PipelineError::InvalidFrame(frame));
        }
        if let Some(prev) = self.last_frame {
            if frame != prev + 1 {
                return Err(PipelineError::NonMonotonicFrame {
                    expected: prev + 1,
                    got: frame,
                });
            }
        }
        if let Some(d) = detections.iter().find(|d| d.frame != frame) {
            return Err(PipelineError::FrameMismatch {
                frame,
                found: d.frame,
            });
        }

        let noise = self.config.noise;
        let mut timings = self.timings;
        let mut diagnostics = Diagnostics::default();

        timed(&mut timings.predict, || {
            for t in self.tracklets.iter_mut().filter(|t| t.is_live()) {
                t.predict(frame, &noise);
            }
        });

        let mut kept = nms_indices(detections, self.config.nms_iou);
        kept.sort_unstable();
        diagnostics.suppressed = detections.len() - kept.len();
        let mut dets: Vec<Detection> = kept.into_iter().map(|i| detections[i].clone()).collect();

        if self.appearance_on() {
            timed(&mut timings.embed, || {
                embed_missing(frame, &mut dets, provider)
            })?;
        } else {
            for d in &mut dets {
                d.embedding = None;
            }
        }

        let weights = self.config.weights();
        let appearance = self.appearance_on();
        let (unmatched_rows, unmatched_cols) = timed(&mut timings.assign, || {
            let active: Vec<&Tracklet> = self
                .tracklets
                .iter()
                .filter(|t| t.status() == TrackStatus::Active)
                .collect();
            let matrix = build_affinity_matrix(&active, &dets, &weights, appearance)?;
            let matching = solve_max_assignment(&matrix.values);
            let unmatched_rows: Vec<TrackId> = matching
                .unmatched_rows
                .iter()
                .map(|&r| matrix.track_ids[r])
                .collect();
            let (records, _) = apply_matching(
                &mut self.tracklets,
                &matrix,
                &dets,
                &matching,
                &noise,
                &mut self.ids,
                false,
            )?;
            diagnostics.assignments.extend(records);
            Ok::<_, PipelineError>((unmatched_rows, matching.unmatched_cols))
        })?;

        if self.config.boost_enabled && appearance && provider.capabilities().arbitrary_box {
            let boosted = timed(&mut timings.boost, || {
                self.boost_unmatched(frame, &unmatched_rows, &dets, provider, &mut diagnostics)
            })?;
            diagnostics.boosts.extend(boosted);
        }

        timed(&mut timings.assign, || {
            for &c in &unmatched_cols {
                let id = self.ids.next_id();
                self.tracklets.push(Tracklet::spawn(id, &dets[c], &noise));
                diagnostics.spawned.push(id);
            }
        });

        let confidence = self.config.confidence();
        timed(&mut timings.lifecycle, || {
            for t in &mut self.tracklets {
                advance_status(t, frame, self.config.max_misses, self.config.ghost_limit);
            }
            self.tracklets
                .retain(|t| t.status() == TrackStatus::Active || is_positive(t, &confidence));
        });

        if self.association_on() && frame.is_multiple_of(self.config.association_period) {
            let merges = timed(&mut timings.association, || self.run_association(frame));
            diagnostics.merges.extend(merges);
        }

        let cutoff = frame.checked_sub(self.config.emission_delay);
        let tracks = timed(&mut timings.emission, || self.emit(cutoff));

        self.timings = timings;
        self.last_frame = Some(frame);
        Ok(FrameResult {
            frame,
            tracks,
            diagnostics,
        })
    }

    /// Runs a last association pass and emits every remaining confirmed
    /// state, grouped by frame.
    pub fn finalize(&mut self) -> Vec<FrameResult> {
        if self.finalized {
            return Vec::new();
        }
        self.finalized = true;
        let frame = self.last_frame.unwrap_or(0);
        let merges = if self.association_on() {
            self.run_association(frame)
        } else {
            Vec::new()
        };
        let states = self.emit(Some(u32::MAX));

        let mut grouped: BTreeMap<u32, Vec<EmittedState>> = BTreeMap::new();
        for s in states {
            grouped.entry(s.frame).or_default().push(s);
        }
        let mut results: Vec<FrameResult> = grouped
            .into_iter()
            .map(|(frame, tracks)| FrameResult {
                frame,
                tracks,
                diagnostics: Diagnostics::default(),
            })
            .collect();
        if !merges.is_empty() {
            match results.first_mut() {
                Some(first) => first.diagnostics.merges = merges,
                None => results.push(FrameResult {
                    frame,
                    tracks: Vec::new(),
                    diagnostics: Diagnostics {
                        merges,
                        ..Diagnostics::default()
                    },
                }),
            }
        }
        results
    }

    fn association_on(&self) -> bool {
        self.config.association_enabled && self.appearance_on()
    }

    fn run_association(&mut self, frame: u32) -> Vec<MergeRecord> {
        let params = self.config.association_params();
        let merges = associate(&mut self.tracklets, &params, &self.config.noise, frame);
        self.tracklets.retain(|t| t.status() != TrackStatus::Merged);
        merges
    }

    /// Boosts every unmatched positive tracklet, suppresses boosted boxes
    /// that overlap a stronger detection, and assigns the survivors among
    /// the still-unmatched tracklets.
    fn boost_unmatched(
        &mut self,
        frame: u32,
        unmatched: &[TrackId],
        dets: &[Detection],
        provider: &dyn EmbeddingProvider,
        diagnostics: &mut Diagnostics,
    ) -> Result<Vec<BoostRecord>, PipelineError> {
        let weights = self.config.weights();
        let confidence = self.config.confidence();
        let mut proposals: Vec<(TrackId, Detection)> = Vec::new();
        for t in self
            .tracklets
            .iter()
            .filter(|t| unmatched.contains(&t.id()))
        {
            if t.status() != TrackStatus::Active || !is_positive(t, &confidence) {
                continue;
            }
            if let Some(d) = boost(t, frame, provider, &weights, self.config.boost_min_gap) {
                proposals.push((t.id(), d));
            }
        }
        if proposals.is_empty() {
            return Ok(Vec::new());
        }

        let union: Vec<Detection> = dets
            .iter()
            .cloned()
            .chain(proposals.iter().map(|(_, d)| d.clone()))
            .collect();
        let survivors: Vec<usize> = {
            let mut kept: Vec<usize> = nms_indices(&union, self.config.nms_iou)
                .into_iter()
                .filter(|&i| i >= dets.len())
                .map(|i| i - dets.len())
                .collect();
            kept.sort_unstable();
            kept
        };
        let boosted: Vec<Detection> = survivors.iter().map(|&i| proposals[i].1.clone()).collect();

        let rows: Vec<&Tracklet> = self
            .tracklets
            .iter()
            .filter(|t| t.status() == TrackStatus::Active && unmatched.contains(&t.id()))
            .collect();
        let matrix = build_affinity_matrix(&rows, &boosted, &weights, true)?;
        let matching = solve_max_assignment(&matrix.values);
        let (records, _) = apply_matching(
            &mut self.tracklets,
            &matrix,
            &boosted,
            &matching,
            &self.config.noise,
            &mut self.ids,
            false,
        )?;

        let assigned_cols: Vec<usize> = matching.pairs.iter().map(|&(_, c)| c).collect();
        let mut out: Vec<BoostRecord> = proposals
            .iter()
            .map(|(track, d)| BoostRecord {
                frame,
                track: *track,
                bbox: d.bbox,
                affinity: d.confidence,
                assigned: false,
            })
            .collect();
        for (col, &proposal) in survivors.iter().enumerate() {
            out[proposal].assigned = assigned_cols.contains(&col);
        }
        diagnostics.assignments.extend(records);
        Ok(out)
    }

    /// Marks and returns every not-yet-emitted non-predicted state at or
    /// before `cutoff` of each positive tracklet.
    fn emit(&mut self, cutoff: Option<u32>) -> Vec<EmittedState> {
        let Some(cutoff) = cutoff else {
            return Vec::new();
        };
        let confidence = self.config.confidence();
        let mut out = Vec::new();
        for t in &mut self.tracklets {
            if t.status == TrackStatus::Merged || !is_positive(t, &confidence) {
                continue;
            }
            let id = t.id;
            let mut cursor = t.emit_cursor;
            while let Some(s) = t.states.get_mut(cursor) {
                if s.frame > cutoff {
                    break;
                }
                if !s.emitted && s.origin != StateOrigin::Predicted {
                    s.emitted = true;
                    out.push(EmittedState {
                        frame: s.frame,
                        id,
                        bbox: s.bbox,
                        origin: s.origin,
                    });
                }
                cursor += 1;
            }
            t.emit_cursor = cursor;
        }
        out.sort_by_key(|s| (s.frame, s.id));
        out
    }
}

/// Fills in embeddings for detections that lack one.
fn embed_missing(
    frame: u32,
    dets: &mut [Detection],
    provider: &dyn EmbeddingProvider,
) -> Result<(), PipelineError> {
    let missing: Vec<usize> = (0..dets.len())
        .filter(|&i| dets[i].embedding.is_none())
        .collect();
    if missing.is_empty() {
        return Ok(());
    }
    let query: Vec<Detection> = missing.iter().map(|&i| dets[i].clone()).collect();
    let embeddings = provider.embed_detections(frame, &query)?;
    if embeddings.len() != query.len() {
        return Err(PipelineError::EmbeddingCount {
            expected: query.len(),
            got: embeddings.len(),
        });
    }
    for (i, e) in missing.into_iter().zip(embeddings) {
        dets[i].embedding = Some(e);
    }
    Ok(())
}

/// Runs a whole sequence and returns every emitted state in emission order.
pub fn run_sequence(
    config: TrackerConfig,
    frames: &[(u32, Vec<Detection>)],
    provider: &dyn EmbeddingProvider,
) -> Result<(Vec<FrameResult>, Tracker), PipelineError> {
    let mut tracker = Tracker::new(config);
    let mut results = Vec::with_capacity(frames.len() + 1);
    for (frame, dets) in frames {
        results.push(tracker.process_frame(*frame, dets, provider)?);
    }
    results.extend(tracker.finalize());
    Ok((results, tracker))
}
