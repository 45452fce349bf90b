//! The `track`, `eval` and `synth` subcommands.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::Args;
use log::{info, warn};
use sdmt_core::io::mot::{
    read_detections, read_ground_truth, read_tracks, write_detections, write_ground_truth,
    write_tracks, TrackRow,
};
use sdmt_core::io::sidecar::{attach_embeddings, read_embeddings, write_embeddings};
use sdmt_core::io::synth::{generate_scenario, ScenarioSpec, SyntheticProvider};
use sdmt_core::metrics::evaluate;
use sdmt_core::{EmbeddingProvider, EvalReport, FrameResult, NullProvider, Tracker, TrackerConfig};
use serde::Serialize;

use crate::manifest::{Inputs, Manifest, Outputs, RunStats, Timings};
use crate::scenarios;

/// A command failure, split by exit code.
#[derive(Debug)]
pub enum Failure {
    /// Unreadable or malformed input files (exit code 1).
    Input(anyhow::Error),
    /// Invalid configuration or flag combination (exit code 2).
    Config(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Input(_) => 1,
            Failure::Config(_) => 2,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Input(e) => write!(f, "input error: {e:#}"),
            Failure::Config(e) => write!(f, "config error: {e:#}"),
        }
    }
}

impl std::error::Error for Failure {}

trait Classify<T> {
    fn input(self) -> Result<T, Failure>;
    fn config(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn input(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Input(e.into()))
    }

    fn config(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Config(e.into()))
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct TrackArgs {
    /// Detection file (MOT CSV).
    #[arg(long)]
    pub detections: Option<PathBuf>,
    /// Embedding sidecar aligned with the detection file.
    #[arg(long, conflicts_with = "scenario")]
    pub embeddings: Option<PathBuf>,
    /// Scenario TOML; its synthetic provider supplies embeddings and
    /// supports boosting.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Seed of the scenario provider.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Result file to write.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Manifest path (default: `<output>.manifest.json`).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Tracker config TOML.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Repeat the run described by a manifest; other flags override it.
    #[arg(long)]
    pub from_manifest: Option<PathBuf>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Motion-only tracking; also disables boosting and association.
    #[arg(long)]
    pub no_appearance: bool,
    #[arg(long)]
    pub boost: bool,
    #[arg(long)]
    pub no_association: bool,
    #[arg(long)]
    pub emission_delay: Option<u32>,
    /// Per-frame boxes with ids and origins as JSON.
    #[arg(long)]
    pub dump_overlay: Option<PathBuf>,
}

pub struct TrackOutcome {
    pub manifest: Manifest,
    pub manifest_path: PathBuf,
    pub results: Vec<FrameResult>,
}

#[derive(Serialize)]
struct OverlayBox {
    id: u64,
    bbox: [f64; 4],
    origin: &'static str,
}

#[derive(Serialize)]
struct OverlayFrame {
    frame: u32,
    boxes: Vec<OverlayBox>,
}

fn read_scenario(path: &Path) -> Result<ScenarioSpec, Failure> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read scenario {}", path.display()))
        .input()?;
    ScenarioSpec::from_toml_str(&text)
        .with_context(|| format!("in scenario {}", path.display()))
        .input()
}

fn resolve_config(args: &TrackArgs, base: Option<&Manifest>) -> Result<TrackerConfig, Failure> {
    let mut config = match (&args.config, base) {
        (Some(path), _) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("cannot read config {}", path.display()))
                .input()?;
            TrackerConfig::from_toml_str(&text)
                .with_context(|| format!("in config {}", path.display()))
                .config()?
        }
        (None, Some(m)) => m.config.clone(),
        (None, None) => TrackerConfig::default(),
    };
    if let Some(lambda) = args.lambda {
        config.lambda = lambda;
    }
    if args.no_appearance {
        config.appearance_enabled = false;
    }
    if args.boost {
        config.boost_enabled = true;
    }
    if args.no_association {
        config.association_enabled = false;
    }
    if let Some(delay) = args.emission_delay {
        config.emission_delay = delay;
    }
    config.validate().config()?;
    Ok(config)
}

pub fn track(args: &TrackArgs) -> Result<TrackOutcome, Failure> {
    let base = args
        .from_manifest
        .as_deref()
        .map(Manifest::read)
        .transpose()
        .input()?;
    let config = resolve_config(args, base.as_ref())?;

    let detections_path = args
        .detections
        .clone()
        .or_else(|| base.as_ref().map(|m| m.inputs.detections.clone()))
        .ok_or_else(|| Failure::Config(anyhow!("--detections is required")))?;
    let output = args
        .output
        .clone()
        .or_else(|| base.as_ref().map(|m| m.outputs.tracks.clone()))
        .ok_or_else(|| Failure::Config(anyhow!("--output is required")))?;
    let (embeddings, scenario) = if args.embeddings.is_some() || args.scenario.is_some() {
        (args.embeddings.clone(), args.scenario.clone())
    } else {
        base.as_ref()
            .map(|m| (m.inputs.embeddings.clone(), m.inputs.scenario.clone()))
            .unwrap_or_default()
    };
    let seed = args.seed.or(base.as_ref().map(|m| m.seed)).unwrap_or(0);
    let overlay = args
        .dump_overlay
        .clone()
        .or_else(|| base.as_ref().and_then(|m| m.outputs.overlay.clone()));
    let manifest_path = args.manifest.clone().unwrap_or_else(|| {
        let mut p = output.clone().into_os_string();
        p.push(".manifest.json");
        PathBuf::from(p)
    });

    let mut file = read_detections(&detections_path).input()?;
    let mut last_frame = file.last_frame().unwrap_or(0);

    let mut synthetic: Option<SyntheticProvider> = None;
    if config.appearance_enabled {
        match (&embeddings, &scenario) {
            (Some(path), _) => {
                let sidecar = read_embeddings(path).input()?;
                attach_embeddings(&mut file, &sidecar).input()?;
                if config.boost_enabled {
                    warn!("boosting needs box queries, which an embedding sidecar cannot answer; boosting is off");
                }
            }
            (None, Some(path)) => {
                let spec = read_scenario(path)?;
                last_frame = last_frame.max(spec.frames);
                synthetic = Some(generate_scenario(&spec, seed).input()?.provider);
            }
            (None, None) => {
                return Err(Failure::Config(anyhow!(
                    "appearance is enabled but no embeddings were given; pass --embeddings, --scenario or --no-appearance"
                )))
            }
        }
    }
    let provider: &dyn EmbeddingProvider = match &synthetic {
        Some(p) => p,
        None => &NullProvider,
    };

    let frames = file.dense_frames(last_frame);
    let started = Instant::now();
    let mut tracker = Tracker::new(config.clone());
    let mut results = Vec::with_capacity(frames.len() + 1);
    for (frame, dets) in &frames {
        let r = tracker
            .process_frame(*frame, dets, provider)
            .with_context(|| format!("tracking frame {frame}"))
            .input()?;
        results.push(r);
    }
    results.extend(tracker.finalize());
    let elapsed = started.elapsed().as_secs_f64();

    let rows: Vec<TrackRow> = results
        .iter()
        .flat_map(|r| &r.tracks)
        .map(|s| TrackRow {
            frame: s.frame,
            id: s.id.0,
            bbox: s.bbox,
        })
        .collect();
    write_tracks(&rows, &output).input()?;
    if let Some(path) = &overlay {
        write_overlay(&results, path)?;
    }

    let stages = tracker.stage_timings();
    let stage_map = [
        ("predict", stages.predict),
        ("embed", stages.embed),
        ("assign", stages.assign),
        ("boost", stages.boost),
        ("lifecycle", stages.lifecycle),
        ("association", stages.association),
        ("emission", stages.emission),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.as_secs_f64()))
    .collect();
    let ids: std::collections::BTreeSet<u64> = rows.iter().map(|r| r.id).collect();
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config,
        inputs: Inputs {
            detections: detections_path,
            embeddings,
            scenario,
        },
        seed,
        outputs: Outputs {
            tracks: output,
            overlay,
        },
        stats: RunStats {
            frames: last_frame,
            detections: file.detection_count(),
            rejected_rows: file.rejected,
            emitted_states: rows.len(),
            track_ids: ids.len(),
            merges: results.iter().map(|r| r.diagnostics.merges.len()).sum(),
            boosts_assigned: results
                .iter()
                .flat_map(|r| &r.diagnostics.boosts)
                .filter(|b| b.assigned)
                .count(),
        },
        timings: Timings {
            tracking_seconds: elapsed,
            fps: if elapsed > 0.0 {
                last_frame as f64 / elapsed
            } else {
                0.0
            },
            stages: stage_map,
        },
    };
    manifest.write(&manifest_path).input()?;
    info!(
        "tracked {} frames at {:.1} fps: {} states, {} ids",
        last_frame, manifest.timings.fps, manifest.stats.emitted_states, manifest.stats.track_ids
    );
    Ok(TrackOutcome {
        manifest,
        manifest_path,
        results,
    })
}

fn write_overlay(results: &[FrameResult], path: &Path) -> Result<(), Failure> {
    let mut by_frame: std::collections::BTreeMap<u32, Vec<OverlayBox>> = Default::default();
    for s in results.iter().flat_map(|r| &r.tracks) {
        by_frame.entry(s.frame).or_default().push(OverlayBox {
            id: s.id.0,
            bbox: s.bbox.as_array(),
            origin: s.origin.as_str(),
        });
    }
    let frames: Vec<OverlayFrame> = by_frame
        .into_iter()
        .map(|(frame, mut boxes)| {
            boxes.sort_by_key(|b| b.id);
            OverlayFrame { frame, boxes }
        })
        .collect();
    let text = serde_json::to_string(&frames).input()?;
    fs::write(path, text + "\n")
        .with_context(|| format!("cannot write overlay {}", path.display()))
        .input()
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Ground-truth file (MOT CSV).
    #[arg(long)]
    pub gt: PathBuf,
    /// Tracker result file.
    #[arg(long)]
    pub tracks: PathBuf,
    /// Manifest of the tracking run, for the frame rate.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    pub iou: f64,
    /// Write the report as JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

pub fn eval(args: &EvalArgs) -> Result<EvalReport, Failure> {
    if !(args.iou > 0.0 && args.iou <= 1.0) {
        return Err(Failure::Config(anyhow!(
            "--iou must be in (0,1], got {}",
            args.iou
        )));
    }
    let gt = read_ground_truth(&args.gt).input()?;
    let hyp = read_tracks(&args.tracks).input()?;
    let mut report = evaluate(&gt, &hyp, args.iou).input()?;
    if let Some(path) = &args.manifest {
        let m = Manifest::read(path).input()?;
        report.fps = Some(m.timings.fps);
    }
    if let Some(path) = &args.report {
        let text = serde_json::to_string_pretty(&report).input()?;
        fs::write(path, text + "\n")
            .with_context(|| format!("cannot write report {}", path.display()))
            .input()?;
    }
    Ok(report)
}

pub fn format_report(r: &EvalReport) -> String {
    let fps = r
        .fps
        .map_or_else(|| "n/a".to_string(), |f| format!("{f:.1}"));
    format!(
        "MOTA {:.4}\nFP   {}\nFN   {}\nIDs  {}\nFPS  {}\n",
        r.mota, r.false_positives, r.false_negatives, r.id_switches, fps
    )
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Scenario TOML.
    #[arg(long, conflicts_with = "preset")]
    pub scenario: Option<PathBuf>,
    /// Built-in scenario: crossing, occlusion, dropout, clutter, crowd or mixed.
    #[arg(long)]
    pub preset: Option<String>,
    /// Occlusion length of the `occlusion` preset.
    #[arg(long, default_value_t = 20)]
    pub gap: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

/// Paths written by [`synth`].
#[derive(Debug, Clone)]
pub struct SynthOutputs {
    pub detections: PathBuf,
    pub embeddings: PathBuf,
    pub ground_truth: PathBuf,
    pub scenario: PathBuf,
}

pub fn synth(args: &SynthArgs) -> Result<SynthOutputs, Failure> {
    let spec = match (&args.scenario, &args.preset) {
        (Some(path), _) => read_scenario(path)?,
        (None, Some(name)) => scenarios::preset(name, args.gap).ok_or_else(|| {
            Failure::Config(anyhow!(
                "unknown preset `{name}`; expected one of {}",
                scenarios::PRESETS.join(", ")
            ))
        })?,
        (None, None) => return Err(Failure::Config(anyhow!("pass --scenario or --preset"))),
    };
    let scenario = generate_scenario(&spec, args.seed).config()?;
    fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("cannot create {}", args.out_dir.display()))
        .input()?;
    let out = SynthOutputs {
        detections: args.out_dir.join("det.txt"),
        embeddings: args.out_dir.join("emb.csv"),
        ground_truth: args.out_dir.join("gt.txt"),
        scenario: args.out_dir.join("scenario.toml"),
    };

    write_detections(&scenario.detections, &out.detections).input()?;
    let mut rows = Vec::new();
    for (frame, dets) in &scenario.detections {
        for (i, d) in dets.iter().enumerate() {
            let e = scenario
                .provider
                .embed_box(*frame, &d.bbox)
                .with_context(|| format!("embedding frame {frame}"))
                .input()?;
            rows.push((*frame, i as u32, e));
        }
    }
    write_embeddings(rows.iter().map(|(f, i, e)| (*f, *i, e)), &out.embeddings).input()?;
    write_ground_truth(&scenario.ground_truth, &out.ground_truth).input()?;
    fs::write(&out.scenario, spec.to_toml_string())
        .with_context(|| format!("cannot write {}", out.scenario.display()))
        .input()?;
    Ok(out)
}
