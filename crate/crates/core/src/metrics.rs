//! CLEAR MOT evaluation (MOTA with its FP, FN and identity-switch terms)
//! and throughput.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assignment::{solve_max_assignment, Matrix};
use crate::geometry::{iou, BoundingBox};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("ground truth is empty")]
    EmptyGroundTruth,
    #[error("IoU threshold must be in (0,1], got {0}")]
    InvalidThreshold(f64),
    #[error("elapsed time must be positive, got {0}s")]
    InvalidDuration(f64),
}

/// Identified boxes grouped by frame.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrackSet {
    frames: BTreeMap<u32, Vec<(u64, BoundingBox)>>,
}

impl TrackSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, frame: u32, id: u64, bbox: BoundingBox) {
        self.frames.entry(frame).or_default().push((id, bbox));
    }

    pub fn frame(&self, frame: u32) -> &[(u64, BoundingBox)] {
        self.frames.get(&frame).map_or(&[], Vec::as_slice)
    }

    pub fn frames(&self) -> impl Iterator<Item = u32> + '_ {
        self.frames.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.frames.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ids(&self) -> BTreeSet<u64> {
        self.frames.values().flatten().map(|(id, _)| *id).collect()
    }
}

impl FromIterator<(u32, u64, BoundingBox)> for TrackSet {
    fn from_iter<I: IntoIterator<Item = (u32, u64, BoundingBox)>>(iter: I) -> Self {
        let mut set = TrackSet::new();
        for (frame, id, bbox) in iter {
            set.insert(frame, id, bbox);
        }
        set
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mota: f64,
    #[serde(rename = "fp")]
    pub false_positives: usize,
    #[serde(rename = "fn")]
    pub false_negatives: usize,
    #[serde(rename = "ids")]
    pub id_switches: usize,
    pub matches: usize,
    pub gt_count: usize,
    /// Frames per second of the tracking run, when known.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub fps: Option<f64>,
}

/// Per-frame CLEAR MOT matching.
///
/// A ground-truth object keeps the hypothesis it was last matched to while
/// that hypothesis is present with IoU at or above `iou_threshold`. The
/// remaining objects and hypotheses are matched by maximum total IoU over
/// pairs at or above the threshold. A match whose hypothesis differs from the
/// object's previous one counts as an identity switch.
pub fn evaluate(
    gt: &TrackSet,
    hyp: &TrackSet,
    iou_threshold: f64,
) -> Result<EvalReport, MetricsError> {
    if !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
        return Err(MetricsError::InvalidThreshold(iou_threshold));
    }
    let gt_count = gt.len();
    if gt_count == 0 {
        return Err(MetricsError::EmptyGroundTruth);
    }

    let frames: BTreeSet<u32> = gt.frames().chain(hyp.frames()).collect();
    let mut last_match: BTreeMap<u64, u64> = BTreeMap::new();
    let (mut fp, mut fn_, mut ids, mut matches) = (0, 0, 0, 0);

    for frame in frames {
        let objects = gt.frame(frame);
        let hyps = hyp.frame(frame);
        let mut object_done = vec![false; objects.len()];
        let mut hyp_done = vec![false; hyps.len()];
        let mut pairs: Vec<(usize, usize)> = Vec::new();

        for (g, (gid, gbox)) in objects.iter().enumerate() {
            let Some(&prev) = last_match.get(gid) else {
                continue;
            };
            let kept = hyps.iter().enumerate().find(|(h, (hid, hbox))| {
                *hid == prev && !hyp_done[*h] && iou(gbox, hbox) >= iou_threshold
            });
            if let Some((h, _)) = kept {
                object_done[g] = true;
                hyp_done[h] = true;
                pairs.push((g, h));
            }
        }

        let open_objects: Vec<usize> = (0..objects.len()).filter(|&g| !object_done[g]).collect();
        let open_hyps: Vec<usize> = (0..hyps.len()).filter(|&h| !hyp_done[h]).collect();
        let mut overlap = Matrix::zeros(open_objects.len(), open_hyps.len());
        for (r, &g) in open_objects.iter().enumerate() {
            for (c, &h) in open_hyps.iter().enumerate() {
                let v = iou(&objects[g].1, &hyps[h].1);
                if v >= iou_threshold {
                    overlap.set(r, c, v);
                }
            }
        }
        for (r, c) in solve_max_assignment(&overlap).pairs {
            pairs.push((open_objects[r], open_hyps[c]));
        }

        for &(g, h) in &pairs {
            let (gid, hid) = (objects[g].0, hyps[h].0);
            if let Some(prev) = last_match.insert(gid, hid) {
                if prev != hid {
                    ids += 1;
                }
            }
        }
        matches += pairs.len();
        fp += hyps.len() - pairs.len();
        fn_ += objects.len() - pairs.len();
    }

    Ok(EvalReport {
        mota: 1.0 - (fp + fn_ + ids) as f64 / gt_count as f64,
        false_positives: fp,
        false_negatives: fn_,
        id_switches: ids,
        matches,
        gt_count,
        fps: None,
    })
}

/// Frames per second over a wall-clock duration.
pub fn throughput(frames: usize, seconds: f64) -> Result<f64, MetricsError> {
    if !(seconds > 0.0 && seconds.is_finite()) {
        return Err(MetricsError::InvalidDuration(seconds));
    }
    Ok(frames as f64 / seconds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bb(x: f64, y: f64) -> BoundingBox {
        BoundingBox::new(x, y, 10.0, 20.0).unwrap()
    }

    /// Exhaustive reference: per frame, keep valid previous correspondences,
    /// then try every injective assignment of the rest and take the best
    /// total IoU (fewest-index order on ties is irrelevant to the counts
    /// whenever the optimum is unique, which the generator ensures).
    fn reference(gt: &TrackSet, hyp: &TrackSet, thr: f64) -> (usize, usize, usize) {
        fn best(
            objects: &[usize],
            hyps: &[usize],
            used: &mut Vec<bool>,
            score: &dyn Fn(usize, usize) -> Option<f64>,
        ) -> (f64, Vec<(usize, usize)>) {
            let Some((&g, rest)) = objects.split_first() else {
                return (0.0, Vec::new());
            };
            let mut top = best(rest, hyps, used, score);
            for (k, &h) in hyps.iter().enumerate() {
                if used[k] {
                    continue;
                }
                if let Some(s) = score(g, h) {
                    used[k] = true;
                    let (v, mut p) = best(rest, hyps, used, score);
                    used[k] = false;
                    if v + s > top.0 + 1e-12 {
                        p.push((g, h));
                        top = (v + s, p);
                    }
                }
            }
            top
        }

        let frames: BTreeSet<u32> = gt.frames().chain(hyp.frames()).collect();
        let mut last: BTreeMap<u64, u64> = BTreeMap::new();
        let (mut fp, mut fn_, mut ids) = (0, 0, 0);
        for f in frames {
            let o = gt.frame(f);
            let h = hyp.frame(f);
            let mut pairs = Vec::new();
            let mut ou = vec![false; o.len()];
            let mut hu = vec![false; h.len()];
            for g in 0..o.len() {
                if let Some(&p) = last.get(&o[g].0) {
                    for k in 0..h.len() {
                        if !hu[k] && h[k].0 == p && iou(&o[g].1, &h[k].1) >= thr {
                            ou[g] = true;
                            hu[k] = true;
                            pairs.push((g, k));
                            break;
                        }
                    }
                }
            }
            let og: Vec<usize> = (0..o.len()).filter(|&g| !ou[g]).collect();
            let hk: Vec<usize> = (0..h.len()).filter(|&k| !hu[k]).collect();
            let score = |g: usize, k: usize| {
                let v = iou(&o[g].1, &h[k].1);
                (v >= thr).then_some(v)
            };
            let (_, extra) = best(&og, &hk, &mut vec![false; hk.len()], &score);
            pairs.extend(extra);
            for &(g, k) in &pairs {
                if let Some(p) = last.insert(o[g].0, h[k].0) {
                    ids += usize::from(p != h[k].0);
                }
            }
            fp += h.len() - pairs.len();
            fn_ += o.len() - pairs.len();
        }
        (fp, fn_, ids)
    }

    #[test]
    fn perfect_tracking() {
        let gt: TrackSet = (1..=10)
            .flat_map(|f| [(f, 1, bb(f as f64, 0.0)), (f, 2, bb(100.0, 0.0))])
            .collect();
        let r = evaluate(&gt, &gt, 0.5).unwrap();
        assert_eq!(
            (r.false_positives, r.false_negatives, r.id_switches),
            (0, 0, 0)
        );
        assert_eq!(r.mota, 1.0);
    }

    #[test]
    fn swapped_identities_count_two_switches() {
        let gt: TrackSet = (1..=10)
            .flat_map(|f| [(f, 1, bb(0.0, 0.0)), (f, 2, bb(100.0, 0.0))])
            .collect();
        let hyp: TrackSet = (1..=10)
            .flat_map(|f| {
                let (a, b) = if f <= 5 { (7, 8) } else { (8, 7) };
                [(f, a, bb(0.0, 0.0)), (f, b, bb(100.0, 0.0))]
            })
            .collect();
        let r = evaluate(&gt, &hyp, 0.5).unwrap();
        assert_eq!(r.id_switches, 2);
        assert!((r.mota - 0.9).abs() < 1e-12);
    }

    #[test]
    fn hypotheses_outside_ground_truth_are_false_positives() {
        let gt: TrackSet = [(2, 1, bb(0.0, 0.0))].into_iter().collect();
        let hyp: TrackSet = [
            (1, 5, bb(0.0, 0.0)),
            (2, 5, bb(0.0, 0.0)),
            (3, 5, bb(0.0, 0.0)),
        ]
        .into_iter()
        .collect();
        let r = evaluate(&gt, &hyp, 0.5).unwrap();
        assert_eq!((r.false_positives, r.false_negatives), (2, 0));
        assert_eq!(r.mota, -1.0);
    }

    #[test]
    fn previous_correspondence_is_kept_over_better_overlap() {
        // hyp 9 overlaps better at frame 2, but hyp 5 still qualifies
        let gt: TrackSet = [(1, 1, bb(0.0, 0.0)), (2, 1, bb(0.0, 0.0))]
            .into_iter()
            .collect();
        let hyp: TrackSet = [
            (1, 5, bb(0.0, 0.0)),
            (2, 5, bb(2.0, 0.0)),
            (2, 9, bb(0.0, 0.0)),
        ]
        .into_iter()
        .collect();
        let r = evaluate(&gt, &hyp, 0.5).unwrap();
        assert_eq!((r.id_switches, r.false_positives), (0, 1));
    }

    #[test]
    fn switch_counted_after_gap() {
        let gt: TrackSet = [(1, 1, bb(0.0, 0.0)), (5, 1, bb(0.0, 0.0))]
            .into_iter()
            .collect();
        let hyp: TrackSet = [(1, 5, bb(0.0, 0.0)), (5, 6, bb(0.0, 0.0))]
            .into_iter()
            .collect();
        assert_eq!(evaluate(&gt, &hyp, 0.5).unwrap().id_switches, 1);
    }

    #[test]
    fn rejects_bad_input() {
        let gt = TrackSet::new();
        assert_eq!(evaluate(&gt, &gt, 0.5), Err(MetricsError::EmptyGroundTruth));
        let gt: TrackSet = [(1, 1, bb(0.0, 0.0))].into_iter().collect();
        assert!(matches!(
            evaluate(&gt, &gt, 0.0),
            Err(MetricsError::InvalidThreshold(_))
        ));
        assert!(throughput(10, 0.0).is_err());
        assert_eq!(throughput(10, 2.0).unwrap(), 5.0);
    }

    fn arb_set(ids: u64, frames: u32) -> impl Strategy<Value = TrackSet> {
        prop::collection::vec((1..=frames, 1..=ids, 0u32..8, 0u32..3), 0..18).prop_map(|rows| {
            // distinct (frame, id) pairs; coarse positions make overlaps
            // either large or zero, with irrational-ish offsets avoiding ties
            let mut seen = BTreeSet::new();
            rows.into_iter()
                .filter(|(f, id, _, _)| seen.insert((*f, *id)))
                .map(|(f, id, x, y)| {
                    (
                        f,
                        id,
                        bb(x as f64 * 3.0 + id as f64 * 0.013, y as f64 * 7.0),
                    )
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn matches_exhaustive_reference(gt in arb_set(3, 4), hyp in arb_set(4, 4)) {
            prop_assume!(!gt.is_empty());
            let r = evaluate(&gt, &hyp, 0.5).unwrap();
            prop_assert_eq!((r.false_positives, r.false_negatives, r.id_switches), reference(&gt, &hyp, 0.5));
            prop_assert_eq!(r.matches + r.false_negatives, r.gt_count);
            prop_assert_eq!(r.matches + r.false_positives, hyp.len());
        }

        #[test]
        fn adding_a_stray_hypothesis_never_raises_mota(gt in arb_set(3, 4), hyp in arb_set(4, 4)) {
            prop_assume!(!gt.is_empty());
            let before = evaluate(&gt, &hyp, 0.5).unwrap();
            let mut more = hyp.clone();
            more.insert(1, 99, bb(900.0, 900.0));
            let after = evaluate(&gt, &more, 0.5).unwrap();
            prop_assert!(after.mota <= before.mota);
            prop_assert_eq!(after.false_positives, before.false_positives + 1);
        }
    }
}
