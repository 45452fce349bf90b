//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::SymmetricEigen;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sdmt_cli::scenarios::{self, DROPOUT_FRAMES};
use sdmt_cli::{eval, synth, track, EvalArgs, SynthArgs, TrackArgs, TrackOutcome};
use sdmt_core::assignment::{solve_max_assignment, Matrix};
use sdmt_core::io::synth::generate_scenario;
use sdmt_core::motion::{MotionState, NoiseConfig};
use sdmt_core::pipeline::run_sequence;
use sdmt_core::{
    evaluate, iou, BoundingBox, EmbeddingProvider, EvalReport, NullProvider, StateOrigin, TrackSet,
    Tracker, TrackerConfig,
};
use tempfile::TempDir;

type Outcome = Result<String, String>;
type Criterion<'a> = Box<dyn Fn() -> Outcome + 'a>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

struct Run {
    report: EvalReport,
    tracks: Vec<u8>,
    outcome: TrackOutcome,
}

/// Synthesizes `preset` into `dir`, tracks it with the scenario provider and
/// evaluates the result.
fn run_preset(
    dir: &Path,
    preset: &str,
    gap: u32,
    tag: &str,
    tweak: impl FnOnce(&mut TrackArgs),
) -> Run {
    let data = dir.join(format!("{preset}-{gap}"));
    let out = synth(&SynthArgs {
        scenario: None,
        preset: Some(preset.to_string()),
        gap,
        seed: 1,
        out_dir: data.clone(),
    })
    .expect("synth");
    let tracks_path = data.join(format!("tracks-{tag}.txt"));
    let mut args = TrackArgs {
        detections: Some(out.detections.clone()),
        scenario: Some(out.scenario.clone()),
        seed: Some(1),
        output: Some(tracks_path.clone()),
        ..TrackArgs::default()
    };
    tweak(&mut args);
    let outcome = track(&args).expect("track");
    let report = eval(&EvalArgs {
        gt: out.ground_truth.clone(),
        tracks: tracks_path.clone(),
        manifest: None,
        iou: 0.5,
        report: None,
    })
    .expect("eval");
    Run {
        report,
        tracks: std::fs::read(&tracks_path).expect("tracks file"),
        outcome,
    }
}

fn ids_of(run: &Run) -> BTreeSet<u64> {
    run.outcome
        .results
        .iter()
        .flat_map(|r| &r.tracks)
        .map(|s| s.id.0)
        .collect()
}

fn brute_force_max(m: &[Vec<f64>]) -> f64 {
    fn go(m: &[Vec<f64>], row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
        if row == m.len() {
            *best = best.max(acc);
            return;
        }
        go(m, row + 1, used, acc, best);
        for c in 0..used.len() {
            if !used[c] && m[row][c] > 0.0 {
                used[c] = true;
                go(m, row + 1, used, acc + m[row][c], best);
                used[c] = false;
            }
        }
    }
    let cols = m.first().map_or(0, Vec::len);
    let mut best = 0.0;
    go(m, 0, &mut vec![false; cols], 0.0, &mut best);
    best
}

fn assignment_oracle() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let trials = 1500;
    for trial in 0..trials {
        let rows = rng.random_range(1..=7);
        let cols = rng.random_range(1..=7);
        let ties = trial % 3 == 0;
        let m: Vec<Vec<f64>> = (0..rows)
            .map(|_| {
                (0..cols)
                    .map(|_| {
                        if rng.random::<f64>() < 0.3 {
                            0.0
                        } else if ties {
                            rng.random_range(1..=4) as f64 / 4.0
                        } else {
                            rng.random_range(1..=1024) as f64 / 1024.0
                        }
                    })
                    .collect()
            })
            .collect();
        let matrix = Matrix::from_rows(&m);
        let matching = solve_max_assignment(&matrix);
        let mut seen_r = BTreeSet::new();
        let mut seen_c = BTreeSet::new();
        for &(r, c) in &matching.pairs {
            check(seen_r.insert(r) && seen_c.insert(c), || {
                format!("trial {trial}: pair reused")
            })?;
            check(m[r][c] > 0.0, || {
                format!("trial {trial}: forbidden pair ({r},{c}) chosen")
            })?;
        }
        let want = brute_force_max(&m);
        let got = matching.total(&matrix);
        check(got == want, || {
            format!("trial {trial}: total {got} != optimum {want} for {m:?}")
        })?;
    }
    let secs = started.elapsed().as_secs_f64();
    check(secs < 10.0, || format!("took {secs:.2}s"))?;
    Ok(format!("{trials} matrices up to 7x7 optimal, {secs:.2}s"))
}

fn gate_soundness() -> Outcome {
    let mut checked = 0usize;
    for seed in 0..6u64 {
        let scenario =
            generate_scenario(&scenarios::mixed(12, 200, seed), seed).map_err(|e| e.to_string())?;
        for (appearance, boost) in [(true, false), (true, true), (false, false)] {
            let config = TrackerConfig {
                appearance_enabled: appearance,
                boost_enabled: boost,
                ..TrackerConfig::default()
            };
            let frames = if appearance {
                scenario.detections.clone()
            } else {
                scenario
                    .detections
                    .iter()
                    .map(|(f, d)| {
                        (
                            *f,
                            d.iter()
                                .cloned()
                                .map(|mut d| {
                                    d.embedding = None;
                                    d
                                })
                                .collect(),
                        )
                    })
                    .collect()
            };
            let (results, _) = run_sequence(config.clone(), &frames, &scenario.provider)
                .map_err(|e| e.to_string())?;
            for rec in results.iter().flat_map(|r| &r.diagnostics.assignments) {
                checked += 1;
                check(rec.motion > config.tau_m, || {
                    format!("seed {seed}: motion {} at frame {}", rec.motion, rec.frame)
                })?;
                if appearance {
                    let a = rec.appearance.ok_or_else(|| {
                        format!("seed {seed}: missing appearance at frame {}", rec.frame)
                    })?;
                    check(a > config.tau_a, || {
                        format!("seed {seed}: appearance {a} at frame {}", rec.frame)
                    })?;
                }
            }
        }
    }
    check(checked > 1000, || {
        format!("only {checked} assignments checked")
    })?;
    Ok(format!("{checked} assignments within both gates"))
}

fn crossing(dir: &Path) -> Outcome {
    let started = Instant::now();
    let with = run_preset(dir, "crossing", 0, "app", |_| {});
    let again = run_preset(dir, "crossing", 0, "app2", |_| {});
    let without = run_preset(dir, "crossing", 0, "motion", |a| a.no_appearance = true);
    let secs = started.elapsed().as_secs_f64();
    check(with.report.id_switches == 0, || {
        format!("IDs {} with appearance", with.report.id_switches)
    })?;
    check(without.report.id_switches >= 1, || {
        "no ID switch with motion only".into()
    })?;
    check(with.tracks == again.tracks, || "runs differ".into())?;
    check(secs < 5.0, || format!("took {secs:.2}s"))?;
    Ok(format!(
        "IDs {} with appearance, {} motion-only, {secs:.2}s",
        with.report.id_switches, without.report.id_switches
    ))
}

fn occlusion(dir: &Path) -> Outcome {
    let mut notes = Vec::new();
    for gap in [3u32, 20, 89] {
        let run = run_preset(dir, "occlusion", gap, "g", |_| {});
        let ids = ids_of(&run);
        check(ids.len() == 1, || format!("g={gap}: {} ids", ids.len()))?;
        check(run.report.id_switches == 0, || {
            format!("g={gap}: IDs {}", run.report.id_switches)
        })?;
        check(run.report.false_negatives == 0, || {
            format!("g={gap}: FN {}", run.report.false_negatives)
        })?;
        let truth = &scenarios::occlusion(gap).targets[0];
        let mut filled = 0;
        for s in run.outcome.results.iter().flat_map(|r| &r.tracks) {
            if s.origin != StateOrigin::Interpolated {
                continue;
            }
            filled += 1;
            let want = truth
                .box_at(s.frame)
                .ok_or("interpolated outside the path")?;
            let err = s
                .bbox
                .as_array()
                .iter()
                .zip(want.as_array())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            check(err <= 1e-6, || {
                format!("g={gap}: frame {} off by {err}", s.frame)
            })?;
        }
        check(filled == gap, || {
            format!("g={gap}: {filled} interpolated frames")
        })?;
        notes.push(format!("g={gap} ok"));
    }
    let run = run_preset(dir, "occlusion", 91, "g", |_| {});
    let ids = ids_of(&run);
    check(ids.len() == 2, || format!("g=91: {} ids", ids.len()))?;
    notes.push("g=91 two ids".into());
    Ok(notes.join(", "))
}

/// Dropout frames a rate-limited booster can fill, assuming every boost
/// on an eligible frame succeeds.
fn boostable(frames: &[u32], min_gap: u32, tau_l: usize) -> usize {
    let mut last: Option<u32> = None;
    let mut observed = 0usize;
    let mut n = 0;
    for f in 1..=frames.iter().copied().max().unwrap_or(0) {
        if !frames.contains(&f) {
            observed += 1;
            continue;
        }
        if observed >= tau_l && last.is_none_or(|l| f >= l + min_gap) {
            last = Some(f);
            observed += 1;
            n += 1;
        }
    }
    n
}

fn boosting(dir: &Path) -> Outcome {
    let config = TrackerConfig::default();
    let expected = boostable(&DROPOUT_FRAMES, config.boost_min_gap, config.tau_l);
    let plain = run_preset(dir, "dropout", 0, "plain", |_| {});
    let boosted = run_preset(dir, "dropout", 0, "boost", |a| a.boost = true);
    let reduction = plain.report.false_negatives as i64 - boosted.report.false_negatives as i64;
    check(reduction >= expected as i64, || {
        format!("FN reduction {reduction} < {expected}")
    })?;

    let mut by_track: BTreeMap<u64, Vec<u32>> = BTreeMap::new();
    for b in boosted
        .outcome
        .results
        .iter()
        .flat_map(|r| &r.diagnostics.boosts)
    {
        if b.assigned {
            by_track.entry(b.track.0).or_default().push(b.frame);
        }
    }
    for frames in by_track.values() {
        for w in frames.windows(2) {
            check(w[1] >= w[0] + config.boost_min_gap, || {
                format!("boosts at {} and {}", w[0], w[1])
            })?;
        }
    }

    let clutter_plain = run_preset(dir, "clutter", 0, "plain", |_| {});
    let clutter_boost = run_preset(dir, "clutter", 0, "boost", |a| a.boost = true);
    let (fp0, fp1) = (
        clutter_plain.report.false_positives,
        clutter_boost.report.false_positives,
    );
    check(fp1 > fp0, || {
        format!("clutter FP did not increase ({fp0} -> {fp1})")
    })?;
    Ok(format!(
        "FN {} -> {} (need -{expected}), spacing ok, clutter FP {fp0} -> {fp1}",
        plain.report.false_negatives, boosted.report.false_negatives
    ))
}

fn kalman() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let zero = NoiseConfig::zero();
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let (cx, cy, h, a) = (
            rng.random_range(0.0..1000.0),
            rng.random_range(0.0..1000.0),
            rng.random_range(20.0..200.0),
            rng.random_range(0.3..0.7),
        );
        let (vx, vy, vh) = (
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
            rng.random_range(-0.1..0.1),
        );
        let bbox = BoundingBox::from_center(cx, cy, a * h, h).map_err(|e| e.to_string())?;
        let mut state = MotionState::init(&bbox, &zero);
        state.set_velocity(vx, vy, vh);
        let start = state.clone();
        for k in 1..=100u32 {
            state = state.predict(&zero);
            let k = k as f64;
            let want = [
                start.cx() + k * vx,
                start.cy() + k * vy,
                start.height() + k * vh,
                start.aspect(),
            ];
            let got = [state.cx(), state.cy(), state.height(), state.aspect()];
            for (g, w) in got.iter().zip(want) {
                worst = worst.max((g - w).abs());
            }
            check(state.velocity() == (vx, vy, vh), || {
                "velocity drifted".into()
            })?;
        }
    }
    check(worst <= 1e-9, || format!("extrapolation error {worst}"))?;

    let noise = NoiseConfig::default();
    let bbox = BoundingBox::from_center(500.0, 400.0, 40.0, 80.0).unwrap();
    let mut state = MotionState::init(&bbox, &noise);
    let mut min_ratio = f64::INFINITY;
    for step in 0..10_000 {
        if rng.random::<f64>() < 0.5 {
            state = state.predict(&noise);
        } else {
            let b = state.to_box();
            let (cx, cy) = b.center();
            let h = (b.height() + rng.random_range(-3.0..3.0)).max(5.0);
            let w = h * rng.random_range(0.3..0.7);
            let m = BoundingBox::from_center(
                cx + rng.random_range(-10.0..10.0),
                cy + rng.random_range(-10.0..10.0),
                w,
                h,
            )
            .map_err(|e| e.to_string())?;
            state = state
                .update(&m, &noise)
                .map_err(|e| format!("step {step}: {e}"))?
                .0;
        }
        if rng.random::<f64>() < 0.001 {
            state = MotionState::init(&state.to_box(), &noise);
        }
        let p = &state.covariance;
        check((p - p.transpose()).amax() == 0.0, || {
            format!("step {step}: asymmetric covariance")
        })?;
        let eig = SymmetricEigen::new(*p).eigenvalues;
        let (lo, hi) = (eig.min(), eig.max());
        check(lo >= -1e-9 * hi.max(1.0), || {
            format!("step {step}: eigenvalue {lo}")
        })?;
        min_ratio = min_ratio.min(lo / hi);
    }
    Ok(format!(
        "extrapolation error {worst:.1e}, 10000 steps PSD (min eig/max eig {min_ratio:.1e})"
    ))
}

/// Every one-to-one pairing of a subset of `rows` with a subset of `cols`.
fn partial_matchings(rows: &[usize], cols: &[usize]) -> Vec<Vec<(usize, usize)>> {
    let Some((&r, rest)) = rows.split_first() else {
        return vec![Vec::new()];
    };
    let mut out = partial_matchings(rest, cols);
    for (j, &c) in cols.iter().enumerate() {
        let others: Vec<usize> = cols
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != j)
            .map(|(_, &c)| c)
            .collect();
        for mut m in partial_matchings(rest, &others) {
            m.push((r, c));
            out.push(m);
        }
    }
    out
}

/// Frame-by-frame CLEAR MOT with exhaustive correspondence search.
fn reference_clear_mot(
    gt: &[(u32, u64, BoundingBox)],
    hyp: &[(u32, u64, BoundingBox)],
    thr: f64,
) -> (usize, usize, usize, usize) {
    let frames: BTreeSet<u32> = gt.iter().chain(hyp).map(|r| r.0).collect();
    let mut last: HashMap<u64, u64> = HashMap::new();
    let (mut fp, mut fnn, mut ids, mut gt_total) = (0, 0, 0, 0);
    for f in frames {
        let g: Vec<_> = gt.iter().filter(|r| r.0 == f).collect();
        let h: Vec<_> = hyp.iter().filter(|r| r.0 == f).collect();
        gt_total += g.len();
        let mut gi_used = vec![false; g.len()];
        let mut hi_used = vec![false; h.len()];
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        for (gi, gr) in g.iter().enumerate() {
            if let Some(&prev) = last.get(&gr.1) {
                if let Some(hi) = h.iter().position(|hr| hr.1 == prev) {
                    if !hi_used[hi] && iou(&gr.2, &h[hi].2) >= thr {
                        gi_used[gi] = true;
                        hi_used[hi] = true;
                        pairs.push((gi, hi));
                    }
                }
            }
        }
        let free_g: Vec<usize> = (0..g.len()).filter(|&i| !gi_used[i]).collect();
        let free_h: Vec<usize> = (0..h.len()).filter(|&i| !hi_used[i]).collect();
        let weight = |gi: usize, hi: usize| {
            let v = iou(&g[gi].2, &h[hi].2);
            if v >= thr {
                v
            } else {
                0.0
            }
        };
        let mut best = (0.0, Vec::new());
        for candidate in partial_matchings(&free_g, &free_h) {
            if candidate.iter().any(|&(gi, hi)| weight(gi, hi) == 0.0) {
                continue;
            }
            let score: f64 = candidate.iter().map(|&(gi, hi)| weight(gi, hi)).sum();
            if score > best.0 {
                best = (score, candidate);
            }
        }
        pairs.extend(best.1);
        for &(gi, hi) in &pairs {
            if let Some(&prev) = last.get(&g[gi].1) {
                if prev != h[hi].1 {
                    ids += 1;
                }
            }
            last.insert(g[gi].1, h[hi].1);
        }
        fnn += g.len() - pairs.len();
        fp += h.len() - pairs.len();
    }
    (fp, fnn, ids, gt_total)
}

fn clear_mot() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cases = 3000;
    for case in 0..cases {
        let mut rows = |kind: u64| -> Vec<(u32, u64, BoundingBox)> {
            let tracks = rng.random_range(if kind == 0 { 1..=3 } else { 0..=3 });
            let frames = rng.random_range(1..=5u32);
            let mut out = Vec::new();
            for id in 1..=tracks {
                for f in 1..=frames {
                    if rng.random::<f64>() < 0.8 {
                        let b = BoundingBox::new(
                            rng.random_range(0.0..8.0),
                            rng.random_range(0.0..8.0),
                            10.0,
                            20.0,
                        )
                        .unwrap();
                        out.push((f, id, b));
                    }
                }
            }
            out
        };
        let gt = rows(0);
        if gt.is_empty() {
            continue;
        }
        let hyp = rows(1);
        let (fp, fnn, ids, n) = reference_clear_mot(&gt, &hyp, 0.5);
        let report = evaluate(
            &gt.iter().cloned().collect::<TrackSet>(),
            &hyp.iter().cloned().collect::<TrackSet>(),
            0.5,
        )
        .map_err(|e| e.to_string())?;
        let mota = 1.0 - (fp + fnn + ids) as f64 / n as f64;
        let got = (
            report.false_positives,
            report.false_negatives,
            report.id_switches,
        );
        check(got == (fp, fnn, ids), || {
            format!("case {case}: {got:?} != {:?}", (fp, fnn, ids))
        })?;
        check((report.mota - mota).abs() <= 1e-12, || {
            format!("case {case}: MOTA {} != {mota}", report.mota)
        })?;
    }
    Ok(format!(
        "{cases} random sequences (<=3 tracks, <=5 frames) agree"
    ))
}

fn throughput() -> Outcome {
    let scenario =
        generate_scenario(&scenarios::crowd(50, 10.0, 300), 1).map_err(|e| e.to_string())?;
    let frames: Vec<_> = scenario
        .detections
        .iter()
        .map(|(f, dets)| {
            let dets = dets
                .iter()
                .map(|d| {
                    d.clone()
                        .with_embedding(scenario.provider.embed_box(*f, &d.bbox).unwrap())
                })
                .collect::<Vec<_>>();
            (*f, dets)
        })
        .collect();
    let per_frame = frames.iter().map(|(_, d)| d.len()).sum::<usize>() as f64 / frames.len() as f64;
    let mut tracker = Tracker::new(TrackerConfig::default());
    let started = Instant::now();
    for (f, dets) in &frames {
        tracker
            .process_frame(*f, dets, &NullProvider)
            .map_err(|e| e.to_string())?;
    }
    tracker.finalize();
    let fps = frames.len() as f64 / started.elapsed().as_secs_f64();
    check(per_frame >= 55.0, || {
        format!("only {per_frame:.1} detections per frame")
    })?;
    check(fps >= 100.0, || format!("{fps:.1} fps"))?;
    Ok(format!("{fps:.0} fps at {per_frame:.1} detections/frame"))
}

fn determinism(dir: &Path) -> Outcome {
    let first = run_preset(dir, "mixed", 0, "first", |a| a.boost = true);
    let data = dir.join("mixed-0");
    let replay_path = data.join("tracks-replay.txt");
    track(&TrackArgs {
        from_manifest: Some(first.outcome.manifest_path.clone()),
        output: Some(replay_path.clone()),
        ..TrackArgs::default()
    })
    .map_err(|e| e.to_string())?;
    let replay = std::fs::read(&replay_path).map_err(|e| e.to_string())?;
    check(!first.tracks.is_empty(), || "empty result".into())?;
    check(first.tracks == replay, || "replayed result differs".into())?;
    Ok(format!("{} bytes identical across runs", replay.len()))
}

fn main() -> ExitCode {
    let dir = TempDir::new().expect("temp dir");
    let criteria: Vec<(&str, Criterion)> = vec![
        ("assignment optimality", Box::new(assignment_oracle)),
        ("gate soundness", Box::new(gate_soundness)),
        ("crossing identities", Box::new(|| crossing(dir.path()))),
        ("occlusion recovery", Box::new(|| occlusion(dir.path()))),
        ("boosting", Box::new(|| boosting(dir.path()))),
        ("kalman filter", Box::new(kalman)),
        ("clear mot", Box::new(clear_mot)),
        ("throughput", Box::new(throughput)),
        ("determinism", Box::new(|| determinism(dir.path()))),
    ];
    let mut failed = 0;
    for (name, f) in &criteria {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
