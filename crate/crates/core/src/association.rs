//! Appearance-based merging of tracklets separated by an occlusion gap.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::affinity::tracklet_tracklet_affinity;
use crate::geometry::{iou, BoundingBox};
use crate::lifecycle::{is_positive, ConfidenceConfig};
use crate::motion::NoiseConfig;
use crate::tracklet::{StateOrigin, TrackId, TrackState, TrackStatus, Tracklet};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AssociationError {
    #[error("nothing to interpolate between frames {from} and {to}")]
    NothingToInterpolate { from: u32, to: u32 },
}

/// Gates applied when looking for tracklets to merge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssociationParams {
    pub tau_a: f64,
    pub n_max: usize,
    /// Largest allowed frame distance between the older tracklet's last
    /// observation and the newer tracklet's first state.
    pub max_gap: u32,
    pub confidence: ConfidenceConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MergeCandidate {
    pub older: TrackId,
    pub newer: TrackId,
    pub appearance: f64,
    /// `newer.first_frame − older.last_observed_frame`.
    pub gap: u32,
    /// Overlap of the older tracklet's predicted box with the newer
    /// tracklet's first box.
    pub iou: f64,
}

/// One applied merge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MergeRecord {
    pub frame: u32,
    #[serde(flatten)]
    pub candidate: MergeCandidate,
    pub interpolated: u32,
}

/// The older tracklet's box at `frame`: its recorded state when there is
/// one, otherwise its filter extrapolated from the last state.
fn box_at(t: &Tracklet, frame: u32, noise: &NoiseConfig) -> BoundingBox {
    if let Some(s) = t.state_at(frame) {
        return s.bbox;
    }
    let mut motion = t.motion().clone();
    for _ in t.last_frame()..frame {
        motion = motion.predict(noise);
    }
    motion.to_box()
}

fn candidate(
    older: &Tracklet,
    newer: &Tracklet,
    params: &AssociationParams,
    noise: &NoiseConfig,
) -> Option<MergeCandidate> {
    let first = newer.first_frame();
    let last = older.last_observed_frame();
    if first <= last || first - last > params.max_gap {
        return None;
    }
    if !older.has_appearance() || !newer.has_appearance() {
        return None;
    }
    let overlap = iou(&box_at(older, first, noise), &newer.states()[0].bbox);
    if overlap <= 0.0 {
        return None;
    }
    let appearance = tracklet_tracklet_affinity(
        &older.embedding_list(),
        &newer.embedding_list(),
        params.n_max,
    )
    .ok()?;
    Some(MergeCandidate {
        older: older.id(),
        newer: newer.id(),
        appearance,
        gap: first - last,
        iou: overlap,
    })
}

fn eligible(t: &Tracklet, params: &AssociationParams) -> bool {
    t.status() != TrackStatus::Merged && is_positive(t, &params.confidence)
}

/// Indices of the eligible tracklets by ascending start frame, then id.
fn scan_order(tracklets: &[Tracklet], params: &AssociationParams) -> Vec<usize> {
    let mut order: Vec<usize> = (0..tracklets.len())
        .filter(|&i| eligible(&tracklets[i], params))
        .collect();
    order.sort_by_key(|&i| (tracklets[i].first_frame(), tracklets[i].id()));
    order
}

/// Every pair of positive tracklets that could be merged: the newer one
/// starts after the older one's last observation, within `max_gap` frames,
/// and overlaps the older one's prediction. Appearance is reported but not
/// gated here.
pub fn find_candidates(
    tracklets: &[Tracklet],
    params: &AssociationParams,
    noise: &NoiseConfig,
) -> Vec<MergeCandidate> {
    let order = scan_order(tracklets, params);
    let mut out = Vec::new();
    for &o in &order {
        for &n in &order {
            if o != n {
                out.extend(candidate(&tracklets[o], &tracklets[n], params, noise));
            }
        }
    }
    out
}

/// Boxes for the frames strictly between two states, linear in center,
/// width and height.
pub fn interpolate_gap(
    older_last: (u32, BoundingBox),
    newer_first: (u32, BoundingBox),
) -> Result<Vec<(u32, BoundingBox)>, AssociationError> {
    let (f0, b0) = older_last;
    let (f1, b1) = newer_first;
    if f1 < f0 + 2 {
        return Err(AssociationError::NothingToInterpolate { from: f0, to: f1 });
    }
    let (cx0, cy0) = b0.center();
    let (cx1, cy1) = b1.center();
    let span = (f1 - f0) as f64;
    Ok((f0 + 1..f1)
        .map(|f| {
            let t = (f - f0) as f64 / span;
            let lerp = |a: f64, b: f64| a + t * (b - a);
            let bbox = BoundingBox::from_center(
                lerp(cx0, cx1),
                lerp(cy0, cy1),
                lerp(b0.width(), b1.width()),
                lerp(b0.height(), b1.height()),
            )
            .expect("interpolating positive extents stays positive");
            (f, bbox)
        })
        .collect())
}

/// Appends `newer` to `older`: the older tracklet's predicted tail is
/// replaced by interpolated states up to the newer tracklet's first frame,
/// then the newer tracklet's states and statistics follow. The older
/// tracklet takes over the newer one's filter and status. Returns the
/// number of interpolated frames.
pub(crate) fn merge_into(older: &mut Tracklet, newer: &mut Tracklet) -> u32 {
    let last_observed = older.last_observed_frame();
    let keep = older
        .states
        .iter()
        .position(|s| s.frame == last_observed)
        .map_or(older.states.len(), |i| i + 1);
    older.states.truncate(keep);
    older.emit_cursor = older.emit_cursor.min(keep);

    let from = (last_observed, older.states[keep - 1].bbox);
    let to = (newer.first_frame(), newer.states[0].bbox);
    let filled = interpolate_gap(from, to).unwrap_or_default();
    let interpolated = filled.len() as u32;
    older
        .states
        .extend(filled.into_iter().map(|(frame, bbox)| TrackState {
            frame,
            bbox,
            origin: StateOrigin::Interpolated,
            emitted: false,
        }));
    older.states.extend(newer.states.iter().copied());

    older.embeddings.extend(newer.embeddings.iter().cloned());
    older
        .det_confidences
        .extend_from_slice(&newer.det_confidences);
    older
        .assignment_costs
        .extend_from_slice(&newer.assignment_costs);
    older.motion = newer.motion.clone();
    older.miss_count = newer.miss_count;
    older.ghost_frames = newer.ghost_frames;
    older.last_observed_frame = newer.last_observed_frame;
    older.last_boost_frame = newer.last_boost_frame.or(older.last_boost_frame);
    if older.status != newer.status {
        older.status = newer.status;
        older.status_history.push(newer.status);
    }
    newer.set_status(TrackStatus::Merged);
    interpolated
}

/// Repeatedly merges the best-matching newer tracklet into the earliest
/// older tracklet that has a candidate with appearance above `tau_a`,
/// rescanning after every merge until nothing changes.
pub fn associate(
    tracklets: &mut [Tracklet],
    params: &AssociationParams,
    noise: &NoiseConfig,
    frame: u32,
) -> Vec<MergeRecord> {
    let mut records = Vec::new();
    'rescan: loop {
        let order = scan_order(tracklets, params);
        for &o in &order {
            let mut best: Option<(usize, MergeCandidate)> = None;
            for &n in &order {
                if n == o {
                    continue;
                }
                let Some(c) = candidate(&tracklets[o], &tracklets[n], params, noise) else {
                    continue;
                };
                if c.appearance > params.tau_a
                    && best.is_none_or(|(_, b)| c.appearance > b.appearance)
                {
                    best = Some((n, c));
                }
            }
            if let Some((n, c)) = best {
                let (older, newer) = pair_mut(tracklets, o, n);
                let interpolated = merge_into(older, newer);
                log::debug!(
                    "frame {frame}: merged tracklet {} into {} (appearance {:.4}, gap {})",
                    c.newer,
                    c.older,
                    c.appearance,
                    c.gap
                );
                records.push(MergeRecord {
                    frame,
                    candidate: c,
                    interpolated,
                });
                continue 'rescan;
            }
        }
        return records;
    }
}

fn pair_mut<T>(items: &mut [T], a: usize, b: usize) -> (&mut T, &mut T) {
    assert_ne!(a, b);
    if a < b {
        let (lo, hi) = items.split_at_mut(b);
        (&mut lo[a], &mut hi[0])
    } else {
        let (lo, hi) = items.split_at_mut(a);
        (&mut hi[0], &mut lo[b])
    }
}
