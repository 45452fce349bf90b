use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sdmt_cli::{eval, format_report, synth, track, EvalArgs, Failure, SynthArgs, TrackArgs};

#[derive(Parser)]
#[command(
    name = "sdmt",
    version,
    about = "Online multiple-object tracking with appearance and motion"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Track detections and write a MOT result file plus a run manifest.
    Track(TrackArgs),
    /// Score a result file against ground truth (CLEAR MOT).
    Eval(EvalArgs),
    /// Generate detections, embeddings and ground truth for a scenario.
    Synth(SynthArgs),
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Track(args) => {
            let out = track(&args)?;
            println!(
                "{} states, {} ids, {:.1} fps; manifest {}",
                out.manifest.stats.emitted_states,
                out.manifest.stats.track_ids,
                out.manifest.timings.fps,
                out.manifest_path.display()
            );
        }
        Command::Eval(args) => print!("{}", format_report(&eval(&args)?)),
        Command::Synth(args) => {
            let out = synth(&args)?;
            println!("{}", out.detections.display());
            println!("{}", out.embeddings.display());
            println!("{}", out.ground_truth.display());
            println!("{}", out.scenario.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
