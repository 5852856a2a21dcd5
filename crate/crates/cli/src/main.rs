//! `vidstory`: build hierarchical text representations of videos and
//! evaluate them on retrieval and question answering.
//!
//! Exit status: 0 on success, 2 when a representation is partial (some
//! agent calls failed and were recorded), 1 on any fatal error.

mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Parser, Subcommand};

use commands::Outcome;
use settings::{GlobalArgs, Settings};

#[derive(Debug, Parser)]
#[command(name = "vidstory", version, about)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the representation of one video, or of every video in a manifest.
    Interpret {
        /// Video metadata JSON ({video_id, total_frames, fps, frame_source}).
        #[arg(required_unless_present = "batch")]
        meta: Option<PathBuf>,
        /// Keyframe sidecar JSON ({video_id, total_frames, fps, keyframes}).
        #[arg(required_unless_present = "batch")]
        keyframes: Option<PathBuf>,
        /// Output representation file.
        #[arg(required_unless_present = "batch")]
        out: Option<PathBuf>,
        /// JSON list of {meta, keyframes} paths, relative to the manifest.
        #[arg(long, conflicts_with_all = ["meta", "keyframes", "out"], requires = "out_dir")]
        batch: Option<PathBuf>,
        /// Directory receiving <video_id>.json per manifest entry.
        #[arg(long, requires = "batch")]
        out_dir: Option<PathBuf>,
        #[arg(long, env = "VIDSTORY_FORCE")]
        force: bool,
    },
    /// Rank a corpus of representations for each query and report recall@k.
    Retrieve {
        rep_dir: PathBuf,
        /// JSON list of {query, video_id}.
        queries: PathBuf,
        #[arg(long, default_value = "1,5,10")]
        k: String,
        /// Score on retained chapters only, ignoring the story.
        #[arg(long, env = "VIDSTORY_EXCLUDE_STORY", num_args = 0..=1, require_equals = true,
              default_missing_value = "true", value_parser = clap::builder::BoolishValueParser::new())]
        exclude_story: Option<bool>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, env = "VIDSTORY_FORCE")]
        force: bool,
    },
    /// Answer questions against a corpus and report exact-match accuracy.
    Qa {
        rep_dir: PathBuf,
        /// JSON list of {question, video_id, answer}.
        questions: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write per-question answers here.
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long, env = "VIDSTORY_FORCE")]
        force: bool,
    },
    /// Print stored bytes per video and their mean.
    ReportStorage {
        rep_dir: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, env = "VIDSTORY_FORCE")]
        force: bool,
    },
    /// Print the resolved configuration as JSON.
    ShowConfig,
}

fn run(cli: Cli) -> Result<Outcome> {
    let settings = Settings::resolve(&cli.global)?;
    match cli.command {
        Command::Interpret {
            meta,
            keyframes,
            out,
            batch,
            out_dir,
            force,
        } => match (batch, out_dir, meta, keyframes, out) {
            (Some(manifest), Some(dir), ..) => commands::interpret_batch(&settings, &manifest, &dir, force),
            (None, _, Some(meta), Some(keyframes), Some(out)) => {
                commands::interpret(&settings, &meta, &keyframes, &out, force)
            }
            _ => bail!("interpret needs META KEYFRAMES OUT or --batch MANIFEST --out-dir DIR"),
        },
        Command::Retrieve {
            rep_dir,
            queries,
            k,
            exclude_story,
            out,
            force,
        } => {
            let ks = commands::parse_ks(&k)?;
            let exclude = exclude_story.unwrap_or(settings.engine.exclude_story);
            commands::retrieve(&settings, &rep_dir, &queries, &ks, exclude, &out, force)
        }
        Command::Qa {
            rep_dir,
            questions,
            out,
            predictions,
            force,
        } => commands::qa(&settings, &rep_dir, &questions, &out, predictions.as_deref(), force),
        Command::ReportStorage { rep_dir, out, force } => {
            commands::report_storage(&rep_dir, out.as_deref(), force)
        }
        Command::ShowConfig => {
            println!("{}", serde_json::to_string_pretty(&settings.view())?);
            Ok(Outcome::Complete)
        }
    }
}

fn main() -> ExitCode {
    // clap's own usage-error status (2) would read as "partial" here.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(outcome) => ExitCode::from(outcome.code()),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
