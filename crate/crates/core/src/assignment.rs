//! Gated tracklet/detection affinity, maximum-affinity matching and the
//! resulting tracklet updates.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::affinity::{total_affinity, tracklet_detection_affinity, AffinityWeights};
use crate::detection::{Detection, DetectionSource};
use crate::embedding::Embedding;
use crate::geometry::iou;
use crate::motion::{MotionError, NoiseConfig};
use crate::tracklet::{TrackId, Tracklet};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssignmentError {
    #[error("missing embedding for detection {0}")]
    MissingEmbedding(usize),
    #[error("matching refers to unknown tracklet {0}")]
    UnknownTracklet(TrackId),
    #[error(transparent)]
    Motion(#[from] MotionError),
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Panics if the rows are ragged.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged matrix");
        Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }
}

/// Gated affinities between tracklets (rows) and detections (columns).
/// Forbidden pairs hold exactly 0.
#[derive(Debug, Clone)]
pub struct AffinityMatrix {
    pub track_ids: Vec<TrackId>,
    pub values: Matrix,
    /// IoU for every pair.
    pub motion: Matrix,
    /// Appearance affinity where it was evaluated.
    pub appearance: Vec<Option<f64>>,
}

impl AffinityMatrix {
    pub fn appearance_at(&self, r: usize, c: usize) -> Option<f64> {
        self.appearance[r * self.values.cols() + c]
    }
}

/// A partial one-to-one matching between rows and columns.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Matching {
    /// `(row, column)` pairs, ascending by row.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_rows: Vec<usize>,
    pub unmatched_cols: Vec<usize>,
}

impl Matching {
    pub fn total(&self, m: &Matrix) -> f64 {
        self.pairs.iter().map(|&(r, c)| m.get(r, c)).sum()
    }
}

/// One applied tracklet/detection pair, kept for diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentRecord {
    pub frame: u32,
    pub track: TrackId,
    pub detection: usize,
    pub source: DetectionSource,
    pub motion: f64,
    pub appearance: Option<f64>,
    pub total: f64,
    pub cost: f64,
}

/// Hands out increasing tracklet ids starting at 1.
#[derive(Debug, Clone)]
pub struct IdAllocator {
    next: u64,
}

impl Default for IdAllocator {
    fn default() -> Self {
        Self { next: 1 }
    }
}

impl IdAllocator {
    pub fn next_id(&mut self) -> TrackId {
        let id = TrackId(self.next);
        self.next += 1;
        id
    }
}

/// Builds the gated affinity matrix. A pair is allowed iff IoU exceeds
/// `tau_m` and, with appearance enabled and a tracklet that has stored
/// embeddings, the appearance affinity exceeds `tau_a`.
pub fn build_affinity_matrix(
    tracklets: &[&Tracklet],
    detections: &[Detection],
    weights: &AffinityWeights,
    appearance_enabled: bool,
) -> Result<AffinityMatrix, AssignmentError> {
    let rows = tracklets.len();
    let cols = detections.len();

    let det_embeddings: Vec<Option<&Embedding>> = if appearance_enabled {
        detections
            .iter()
            .enumerate()
            .map(|(i, d)| {
                d.embedding
                    .as_ref()
                    .map(Some)
                    .ok_or(AssignmentError::MissingEmbedding(i))
            })
            .collect::<Result<_, _>>()?
    } else {
        vec![None; cols]
    };

    let mut values = Matrix::zeros(rows, cols);
    let mut motion = Matrix::zeros(rows, cols);
    let mut appearance = vec![None; rows * cols];

    for (r, t) in tracklets.iter().enumerate() {
        let predicted = t.predicted_box();
        let history = if appearance_enabled && t.has_appearance() {
            Some(t.embedding_list())
        } else {
            None
        };
        for (c, d) in detections.iter().enumerate() {
            let a_m = iou(&predicted, &d.bbox);
            motion.set(r, c, a_m);
            if a_m <= weights.tau_m {
                continue;
            }
            let entry = match (&history, det_embeddings[c]) {
                (Some(h), Some(e)) => {
                    let a_a = tracklet_detection_affinity(h, e, weights.n_max)
                        .expect("history is non-empty");
                    appearance[r * cols + c] = Some(a_a);
                    if a_a > weights.tau_a {
                        total_affinity(a_a, a_m, weights.lambda)
                    } else {
                        0.0
                    }
                }
                _ => a_m,
            };
            values.set(r, c, entry);
        }
    }

    Ok(AffinityMatrix {
        track_ids: tracklets.iter().map(|t| t.id()).collect(),
        values,
        motion,
        appearance,
    })
}

/// Maximum-total-affinity matching. Entries `<= 0` are never matched.
pub fn solve_max_assignment(matrix: &Matrix) -> Matching {
    let (rows, cols) = (matrix.rows(), matrix.cols());
    let n = rows.max(cols);
    let mut pairs = Vec::new();
    if n > 0 && rows > 0 && cols > 0 {
        // Square min-cost problem; a forbidden pair costs the same as
        // leaving both sides unmatched.
        let mut cost = vec![0.0; n * n];
        for r in 0..rows {
            for c in 0..cols {
                let v = matrix.get(r, c);
                if v > 0.0 {
                    cost[r * n + c] = -v;
                }
            }
        }
        let assignment = hungarian_min_cost(&cost, n);
        for (r, &c) in assignment.iter().enumerate().take(rows) {
            if c < cols && matrix.get(r, c) > 0.0 {
                pairs.push((r, c));
            }
        }
    }
    let mut row_used = vec![false; rows];
    let mut col_used = vec![false; cols];
    for &(r, c) in &pairs {
        row_used[r] = true;
        col_used[c] = true;
    }
    Matching {
        pairs,
        unmatched_rows: (0..rows).filter(|&r| !row_used[r]).collect(),
        unmatched_cols: (0..cols).filter(|&c| !col_used[c]).collect(),
    }
}

/// Shortest-augmenting-path Hungarian algorithm on an `n × n` cost matrix.
/// Returns the column assigned to each row.
fn hungarian_min_cost(cost: &[f64], n: usize) -> Vec<usize> {
    // 1-based potentials; index 0 is the virtual source column.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for row in 1..=n {
        owner[0] = row;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let reduced = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if reduced < minv[j] {
                    minv[j] = reduced;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        if owner[j] > 0 {
            assignment[owner[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Applies `matching`: matched tracklets are corrected with their detection
/// and, when `spawn_unmatched` is set, every unmatched detection starts a new
/// tracklet. Returns a record per applied pair and the ids spawned.
pub fn apply_matching(
    tracklets: &mut Vec<Tracklet>,
    matrix: &AffinityMatrix,
    detections: &[Detection],
    matching: &Matching,
    noise: &NoiseConfig,
    ids: &mut IdAllocator,
    spawn_unmatched: bool,
) -> Result<(Vec<AssignmentRecord>, Vec<TrackId>), AssignmentError> {
    let mut records = Vec::with_capacity(matching.pairs.len());
    for &(r, c) in &matching.pairs {
        let id = matrix.track_ids[r];
        let det = &detections[c];
        let t = tracklets
            .iter_mut()
            .find(|t| t.id() == id)
            .ok_or(AssignmentError::UnknownTracklet(id))?;
        let cost = t.assign(det, noise)?;
        records.push(AssignmentRecord {
            frame: det.frame,
            track: id,
            detection: c,
            source: det.source,
            motion: matrix.motion.get(r, c),
            appearance: matrix.appearance_at(r, c),
            total: matrix.values.get(r, c),
            cost,
        });
    }

    let mut spawned = Vec::new();
    if spawn_unmatched {
        for &c in &matching.unmatched_cols {
            let id = ids.next_id();
            tracklets.push(Tracklet::spawn(id, &detections[c], noise));
            spawned.push(id);
        }
    }
    Ok((records, spawned))
}
