//! Synthetic tracking sequences with known ground truth.
//!
//! Targets follow piecewise-linear box paths and carry an identity
//! embedding. The generated provider answers box queries with the identity
//! of the best-overlapping visible target, blended with box-specific clutter
//! as overlap drops, so appearance affinity peaks on the true box.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::mot::GroundTruthRow;
use super::provider::{EmbeddingProvider, ProviderCapabilities, ProviderError};
use crate::detection::Detection;
use crate::embedding::{Embedding, EMBEDDING_DIM};
use crate::geometry::{iou, BoundingBox};
use crate::metrics::TrackSet;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid scenario field `{field}`: {message}")]
pub struct ScenarioError {
    pub field: String,
    pub message: String,
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ScenarioError {
    ScenarioError {
        field: field.into(),
        message: message.into(),
    }
}

/// `[frame, x, y, w, h]` control point of a target path.
pub type Waypoint = [f64; 5];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    /// Control points, strictly increasing in frame. The target exists from
    /// the first to the last waypoint frame.
    pub waypoints: Vec<Waypoint>,
    /// Inclusive frame ranges where the target is visible. Defaults to its
    /// whole lifespan.
    #[serde(default)]
    pub visible: Option<Vec<[u32; 2]>>,
    /// Visible frames where the detector still misses the target.
    #[serde(default)]
    pub missed: Vec<u32>,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
    /// Distractors (visible, detected, but not annotated) set this false.
    #[serde(default = "default_true")]
    pub in_ground_truth: bool,
}

fn default_confidence() -> f64 {
    0.9
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub frames: u32,
    #[serde(default = "default_width")]
    pub width: f64,
    #[serde(default = "default_height")]
    pub height: f64,
    /// Stddev of the box jitter on every detection (px).
    #[serde(default)]
    pub jitter_std: f64,
    /// Mean number of clutter detections per frame.
    #[serde(default)]
    pub false_positive_rate: f64,
    /// Probability a visible target goes undetected in a frame.
    #[serde(default)]
    pub false_negative_rate: f64,
    /// Per-component Gaussian perturbation applied before normalization.
    #[serde(default)]
    pub embedding_noise: f64,
    /// Minimum pairwise distance between identity embeddings.
    #[serde(default = "default_identity_distance")]
    pub min_identity_distance: f64,
    /// Every detection of a target overlaps its true box at least this much.
    #[serde(default = "default_iou_floor")]
    pub detection_iou_floor: f64,
    #[serde(default = "default_clutter_confidence")]
    pub clutter_confidence: [f64; 2],
    /// Width range of clutter boxes; height is twice the width.
    #[serde(default = "default_clutter_width")]
    pub clutter_width: [f64; 2],
    #[serde(default)]
    pub targets: Vec<TargetSpec>,
}

fn default_width() -> f64 {
    1920.0
}

fn default_height() -> f64 {
    1080.0
}

fn default_identity_distance() -> f64 {
    0.5
}

fn default_iou_floor() -> f64 {
    0.5
}

fn default_clutter_confidence() -> [f64; 2] {
    [0.2, 0.6]
}

fn default_clutter_width() -> [f64; 2] {
    [20.0, 60.0]
}

impl ScenarioSpec {
    pub fn new(frames: u32, targets: Vec<TargetSpec>) -> Self {
        Self {
            frames,
            width: default_width(),
            height: default_height(),
            jitter_std: 0.0,
            false_positive_rate: 0.0,
            false_negative_rate: 0.0,
            embedding_noise: 0.0,
            min_identity_distance: default_identity_distance(),
            detection_iou_floor: default_iou_floor(),
            clutter_confidence: default_clutter_confidence(),
            clutter_width: default_clutter_width(),
            targets,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        let spec: ScenarioSpec = toml::from_str(text).map_err(|e| {
            let field = e
                .message()
                .split('`')
                .nth(1)
                .unwrap_or("scenario")
                .to_string();
            invalid(field, e.message().trim().to_string())
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario specs are always serializable")
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.frames == 0 {
            return Err(invalid("frames", "must be >= 1"));
        }
        if !(self.width > 0.0 && self.height > 0.0) {
            return Err(invalid("width/height", "must be positive"));
        }
        if self.jitter_std.is_nan() || self.jitter_std < 0.0 {
            return Err(invalid("jitter_std", "must be >= 0"));
        }
        if self.false_positive_rate.is_nan() || self.false_positive_rate < 0.0 {
            return Err(invalid("false_positive_rate", "must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.false_negative_rate) {
            return Err(invalid("false_negative_rate", "must be in [0,1]"));
        }
        if self.embedding_noise.is_nan() || self.embedding_noise < 0.0 {
            return Err(invalid("embedding_noise", "must be >= 0"));
        }
        if !(0.0..2.0).contains(&self.min_identity_distance) {
            return Err(invalid("min_identity_distance", "must be in [0,2)"));
        }
        if !(0.0..=1.0).contains(&self.detection_iou_floor) {
            return Err(invalid("detection_iou_floor", "must be in [0,1]"));
        }
        let [c0, c1] = self.clutter_confidence;
        if c0.is_nan() || c1.is_nan() || c0 > c1 {
            return Err(invalid(
                "clutter_confidence",
                "must be an ordered [min, max] pair",
            ));
        }
        let [w0, w1] = self.clutter_width;
        if !(w0 > 0.0 && w0 <= w1 && 2.0 * w1 <= self.height && w1 <= self.width) {
            return Err(invalid(
                "clutter_width",
                "must be an ordered positive pair that fits the frame",
            ));
        }
        for (i, t) in self.targets.iter().enumerate() {
            let field = |name: &str| format!("targets[{i}].{name}");
            if t.waypoints.is_empty() {
                return Err(invalid(field("waypoints"), "needs at least one waypoint"));
            }
            let mut prev_frame = 0.0;
            for w in &t.waypoints {
                let [f, x, y, bw, bh] = *w;
                if f.fract() != 0.0 || f < 1.0 || f > self.frames as f64 {
                    return Err(invalid(
                        field("waypoints"),
                        format!("frame {f} outside 1..={}", self.frames),
                    ));
                }
                if f <= prev_frame {
                    return Err(invalid(
                        field("waypoints"),
                        "frames must be strictly increasing",
                    ));
                }
                prev_frame = f;
                if !(bw > 0.0 && bh > 0.0) {
                    return Err(invalid(field("waypoints"), "box size must be positive"));
                }
                if x < 0.0 || y < 0.0 || x + bw > self.width || y + bh > self.height {
                    return Err(invalid(field("waypoints"), "box leaves the frame"));
                }
            }
            if let Some(vis) = &t.visible {
                if vis.iter().any(|[a, b]| a > b) {
                    return Err(invalid(field("visible"), "ranges must be [first, last]"));
                }
            }
            if !t.confidence.is_finite() {
                return Err(invalid(field("confidence"), "must be finite"));
            }
        }
        Ok(())
    }
}

impl TargetSpec {
    pub fn linear(first: u32, from: [f64; 4], last: u32, to: [f64; 4]) -> Self {
        Self {
            waypoints: vec![
                [first as f64, from[0], from[1], from[2], from[3]],
                [last as f64, to[0], to[1], to[2], to[3]],
            ],
            visible: None,
            missed: Vec::new(),
            confidence: default_confidence(),
            in_ground_truth: true,
        }
    }

    pub fn first_frame(&self) -> u32 {
        self.waypoints[0][0] as u32
    }

    pub fn last_frame(&self) -> u32 {
        self.waypoints[self.waypoints.len() - 1][0] as u32
    }

    /// True box at `frame`, if the target exists then.
    pub fn box_at(&self, frame: u32) -> Option<BoundingBox> {
        let f = frame as f64;
        let first = self.waypoints.first()?;
        if f < first[0] || f > self.waypoints.last()?[0] {
            return None;
        }
        let seg = self
            .waypoints
            .windows(2)
            .find(|w| f >= w[0][0] && f <= w[1][0]);
        let v = match seg {
            None => *first,
            Some(w) => {
                let t = (f - w[0][0]) / (w[1][0] - w[0][0]);
                let mut v = [0.0; 5];
                for k in 1..5 {
                    v[k] = w[0][k] + t * (w[1][k] - w[0][k]);
                }
                v
            }
        };
        BoundingBox::new(v[1], v[2], v[3], v[4]).ok()
    }

    pub fn is_visible(&self, frame: u32) -> bool {
        if frame < self.first_frame() || frame > self.last_frame() {
            return false;
        }
        match &self.visible {
            None => true,
            Some(ranges) => ranges.iter().any(|[a, b]| (*a..=*b).contains(&frame)),
        }
    }
}

/// Everything a generated scenario produces.
#[derive(Debug, Clone)]
pub struct Scenario {
    /// One entry per frame `1..=frames`.
    pub detections: Vec<(u32, Vec<Detection>)>,
    /// For each detection, the index of the target it was generated from
    /// (`None` for clutter).
    pub detection_sources: Vec<Vec<Option<usize>>>,
    pub provider: SyntheticProvider,
    pub ground_truth: Vec<GroundTruthRow>,
}

impl Scenario {
    pub fn ground_truth_set(&self) -> TrackSet {
        let mut set = TrackSet::new();
        for r in &self.ground_truth {
            set.insert(r.frame, r.id, r.bbox);
        }
        set
    }
}

/// Answers box queries from the scenario's hidden state.
#[derive(Debug, Clone)]
pub struct SyntheticProvider {
    seed: u64,
    identities: Vec<Embedding>,
    /// Visible target boxes per frame (index 0 is frame 1).
    visible: Vec<Vec<(usize, BoundingBox)>>,
    noise: f64,
}

impl SyntheticProvider {
    pub fn identity(&self, target: usize) -> &Embedding {
        &self.identities[target]
    }

    fn clutter(&self, frame: u32, b: &BoundingBox, salt: u64) -> Vec<f64> {
        let mut h = self.seed ^ salt;
        for v in [
            frame as u64,
            b.x().to_bits(),
            b.y().to_bits(),
            b.width().to_bits(),
            b.height().to_bits(),
        ] {
            h = splitmix64(h ^ v);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(h);
        (0..EMBEDDING_DIM)
            .map(|_| rng.sample(StandardNormal))
            .collect()
    }
}

impl EmbeddingProvider for SyntheticProvider {
    fn capabilities(&self) -> ProviderCapabilities {
        ProviderCapabilities {
            per_detection: true,
            arbitrary_box: true,
        }
    }

    fn embed_box(&self, frame: u32, b: &BoundingBox) -> Result<Embedding, ProviderError> {
        let visible = frame
            .checked_sub(1)
            .and_then(|i| self.visible.get(i as usize))
            .map(Vec::as_slice)
            .unwrap_or(&[]);
        let mut best: Option<(usize, f64)> = None;
        for &(target, tb) in visible {
            let overlap = iou(b, &tb);
            if overlap > 0.0 && best.is_none_or(|(_, o)| overlap > o) {
                best = Some((target, overlap));
            }
        }

        let clutter = normalize(self.clutter(frame, b, 0x005e_edc1_u64));
        let mut v = match best {
            Some((target, overlap)) => {
                let share = (1.0 - overlap).powi(2);
                self.identities[target]
                    .values()
                    .iter()
                    .zip(&clutter)
                    .map(|(id, c)| (1.0 - share) * id + share * c)
                    .collect()
            }
            None => clutter,
        };
        if self.noise > 0.0 {
            let perturb = self.clutter(frame, b, 0x0015_e5e5_u64);
            for (x, p) in v.iter_mut().zip(perturb) {
                *x += self.noise * p;
            }
        }
        Embedding::normalized(v).map_err(|e| ProviderError::Unavailable {
            frame,
            reason: e.to_string(),
        })
    }
}

fn normalize(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

fn round_box(b: &BoundingBox) -> Option<BoundingBox> {
    BoundingBox::new(
        round2(b.x()),
        round2(b.y()),
        round2(b.width()),
        round2(b.height()),
    )
    .ok()
}

fn random_identities(rng: &mut ChaCha8Rng, count: usize, min_distance: f64) -> Vec<Embedding> {
    let mut out: Vec<Embedding> = Vec::with_capacity(count);
    while out.len() < count {
        let mut candidate = None;
        for _ in 0..10_000 {
            let v: Vec<f64> = (0..EMBEDDING_DIM)
                .map(|_| rng.sample(StandardNormal))
                .collect();
            let e = Embedding::normalized(v).expect("gaussian sample is non-zero");
            if out.iter().all(|o| o.distance(&e) >= min_distance) {
                candidate = Some(e);
                break;
            }
        }
        out.push(candidate.expect("identity separation is achievable in 128 dimensions"));
    }
    out
}

/// Generates detections, an embedding provider and ground truth. The output
/// is a pure function of `spec` and `seed`.
pub fn generate_scenario(spec: &ScenarioSpec, seed: u64) -> Result<Scenario, ScenarioError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let identities = random_identities(&mut rng, spec.targets.len(), spec.min_identity_distance);
    let jitter = Normal::new(0.0, spec.jitter_std.max(0.0)).expect("non-negative stddev");
    let clutter_count = (spec.false_positive_rate > 0.0)
        .then(|| Poisson::new(spec.false_positive_rate).expect("positive rate"));

    let mut detections = Vec::with_capacity(spec.frames as usize);
    let mut detection_sources = Vec::with_capacity(spec.frames as usize);
    let mut visible = Vec::with_capacity(spec.frames as usize);
    let mut ground_truth = Vec::new();

    for frame in 1..=spec.frames {
        let mut dets = Vec::new();
        let mut sources = Vec::new();
        let mut vis = Vec::new();

        for (i, target) in spec.targets.iter().enumerate() {
            let Some(truth) = target.box_at(frame) else {
                continue;
            };
            let seen = target.is_visible(frame);
            if target.in_ground_truth {
                ground_truth.push(GroundTruthRow {
                    frame,
                    id: i as u64 + 1,
                    bbox: round_box(&truth).unwrap_or(truth),
                    visibility: if seen { 1.0 } else { 0.0 },
                });
            }
            if !seen {
                continue;
            }
            vis.push((i, truth));
            let dropped = rng.random::<f64>() < spec.false_negative_rate;
            if dropped || target.missed.contains(&frame) {
                continue;
            }
            let mut observed = round_box(&truth).unwrap_or(truth);
            if spec.jitter_std > 0.0 {
                for _ in 0..100 {
                    let candidate = BoundingBox::new(
                        truth.x() + jitter.sample(&mut rng),
                        truth.y() + jitter.sample(&mut rng),
                        truth.width() + jitter.sample(&mut rng),
                        truth.height() + jitter.sample(&mut rng),
                    )
                    .ok()
                    .and_then(|b| round_box(&b));
                    if let Some(b) =
                        candidate.filter(|b| iou(b, &truth) >= spec.detection_iou_floor)
                    {
                        observed = b;
                        break;
                    }
                }
            }
            dets.push(Detection::new(frame, observed, target.confidence));
            sources.push(Some(i));
        }

        if let Some(poisson) = &clutter_count {
            let n = poisson.sample(&mut rng) as usize;
            for _ in 0..n {
                let [w0, w1] = spec.clutter_width;
                let w = if w1 > w0 {
                    rng.random_range(w0..w1)
                } else {
                    w0
                };
                let h = 2.0 * w;
                let x = rng.random_range(0.0..(spec.width - w).max(f64::MIN_POSITIVE));
                let y = rng.random_range(0.0..(spec.height - h).max(f64::MIN_POSITIVE));
                let [c0, c1] = spec.clutter_confidence;
                let conf = if c1 > c0 {
                    rng.random_range(c0..c1)
                } else {
                    c0
                };
                if let Some(b) = BoundingBox::new(x, y, w, h)
                    .ok()
                    .and_then(|b| round_box(&b))
                {
                    dets.push(Detection::new(frame, b, round4(conf)));
                    sources.push(None);
                }
            }
        }

        detections.push((frame, dets));
        detection_sources.push(sources);
        visible.push(vis);
    }

    Ok(Scenario {
        detections,
        detection_sources,
        provider: SyntheticProvider {
            seed,
            identities,
            visible,
            noise: spec.embedding_noise,
        },
        ground_truth,
    })
}

fn round4(v: f64) -> f64 {
    (v * 10_000.0).round() / 10_000.0
}
