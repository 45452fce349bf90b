//! Built-in synthetic scenarios.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sdmt_core::io::synth::{ScenarioSpec, TargetSpec};

/// Box size shared by the scenario targets.
pub const TARGET_WIDTH: f64 = 40.0;
pub const TARGET_HEIGHT: f64 = 80.0;

fn moving(first: u32, last: u32, x_first: f64, vx: f64, y: f64) -> TargetSpec {
    let x_last = x_first + vx * (last - first) as f64;
    TargetSpec::linear(
        first,
        [x_first, y, TARGET_WIDTH, TARGET_HEIGHT],
        last,
        [x_last, y, TARGET_WIDTH, TARGET_HEIGHT],
    )
}

/// Two targets walking towards each other on the same line. They share the
/// same box at `meet`, so any pairing of their detections scores the same
/// on overlap, and non-maximum suppression hides the weaker one for the
/// frames around the meeting.
pub fn crossing() -> ScenarioSpec {
    let (frames, meet, speed, center) = (60, 30, 3.0, 400.0);
    let x_at_meet = center - TARGET_WIDTH / 2.0;
    let x_first = x_at_meet - speed * (meet - 1) as f64;
    let mut a = moving(1, frames, x_first, speed, 300.0);
    a.confidence = 0.9;
    let mut b = moving(
        1,
        frames,
        x_at_meet + speed * (meet - 1) as f64,
        -speed,
        300.0,
    );
    b.confidence = 0.8;
    ScenarioSpec::new(frames, vec![a, b])
}

/// One target moving at constant velocity, hidden for `gap` frames after
/// frame 40.
pub fn occlusion(gap: u32) -> ScenarioSpec {
    let visible_before = 40;
    let frames = visible_before + gap + 40;
    let mut t = moving(1, frames, 100.0, 1.0, 300.0);
    t.visible = Some(vec![
        [1, visible_before],
        [visible_before + gap + 1, frames],
    ]);
    ScenarioSpec::new(frames, vec![t])
}

/// Frames where [`dropout`] loses the target.
pub const DROPOUT_FRAMES: [u32; 6] = [10, 15, 16, 22, 30, 31];

/// One visible target that the detector misses on [`DROPOUT_FRAMES`].
pub fn dropout() -> ScenarioSpec {
    let mut t = moving(1, 50, 100.0, 2.0, 300.0);
    t.missed = DROPOUT_FRAMES.to_vec();
    ScenarioSpec::new(50, vec![t])
}

/// An annotated target next to an unannotated look-alike (a distractor)
/// that the detector picks up and intermittently misses.
pub fn clutter() -> ScenarioSpec {
    let real = moving(1, 50, 100.0, 2.0, 300.0);
    let mut distractor = moving(1, 50, 700.0, -2.0, 500.0);
    distractor.in_ground_truth = false;
    distractor.confidence = 0.6;
    distractor.missed = DROPOUT_FRAMES.to_vec();
    ScenarioSpec::new(50, vec![real, distractor])
}

/// `targets` well-separated targets on a grid plus clutter, for load tests.
pub fn crowd(targets: usize, clutter_per_frame: f64, frames: u32) -> ScenarioSpec {
    let cols = 10;
    let specs = (0..targets)
        .map(|i| {
            let (row, col) = ((i / cols) as f64, (i % cols) as f64);
            let vx = if i % 2 == 0 { 0.5 } else { -0.5 };
            let x = 120.0 + col * 170.0;
            let y = 60.0 + row * 190.0;
            let x_last = x + vx * (frames - 1) as f64;
            TargetSpec::linear(1, [x, y, 30.0, 60.0], frames, [x_last, y, 30.0, 60.0])
        })
        .collect();
    let mut spec = ScenarioSpec::new(frames, specs);
    spec.width = 1920.0;
    spec.height = 60.0 + 190.0 * (targets.div_ceil(cols)) as f64 + 60.0;
    spec.height = spec.height.max(1080.0);
    spec.false_positive_rate = clutter_per_frame;
    spec.jitter_std = 0.5;
    spec.embedding_noise = 0.002;
    spec
}

/// A randomized mix of crossing and occluded targets with detector noise.
pub fn mixed(targets: usize, frames: u32, seed: u64) -> ScenarioSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut next = || rng.random::<f64>();
    let specs = (0..targets)
        .map(|_| {
            let first = 1 + (next() * frames as f64 * 0.3) as u32;
            let last = (first + 30 + (next() * frames as f64) as u32).min(frames);
            let w = 30.0 + 30.0 * next();
            let h = 2.0 * w;
            let x0 = 50.0 + next() * 1500.0;
            let y0 = 50.0 + next() * 700.0;
            let x1 = (x0 + (next() - 0.5) * 300.0).clamp(0.0, 1920.0 - w);
            let y1 = (y0 + (next() - 0.5) * 150.0).clamp(0.0, 1080.0 - h);
            let mut t = TargetSpec::linear(first, [x0, y0, w, h], last, [x1, y1, w, h]);
            if next() < 0.5 && last > first + 20 {
                let hide = first + 10 + (next() * (last - first - 15) as f64) as u32;
                let len = 1 + (next() * 8.0) as u32;
                t.visible = Some(vec![[first, hide], [hide + len + 1, last]]);
            }
            t.confidence = 0.5 + 0.5 * next();
            t
        })
        .collect();
    let mut spec = ScenarioSpec::new(frames, specs);
    spec.jitter_std = 1.0;
    spec.false_positive_rate = 1.5;
    spec.false_negative_rate = 0.05;
    spec.embedding_noise = 0.002;
    spec
}

/// Looks up a preset by name.
pub fn preset(name: &str, gap: u32) -> Option<ScenarioSpec> {
    Some(match name {
        "crossing" => crossing(),
        "occlusion" => occlusion(gap),
        "dropout" => dropout(),
        "clutter" => clutter(),
        "crowd" => crowd(50, 10.0, 300),
        "mixed" => mixed(12, 200, 7),
        _ => return None,
    })
}

pub const PRESETS: [&str; 6] = [
    "crossing",
    "occlusion",
    "dropout",
    "clutter",
    "crowd",
    "mixed",
];
