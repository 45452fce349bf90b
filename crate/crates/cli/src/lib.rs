//! Command-line front end: tracking runs with manifests, CLEAR MOT
//! evaluation and synthetic scenario generation.

pub mod commands;
pub mod manifest;
pub mod scenarios;

pub use commands::{
    eval, format_report, synth, track, EvalArgs, Failure, SynthArgs, TrackArgs, TrackOutcome,
};
pub use manifest::Manifest;
