//! Command-line front end. Every stage subcommand takes `--config` (falling
//! back to the project's own `config.toml`) and `--project`, prints one JSON
//! report line per stage on stdout, and on failure prints one JSON error line
//! on stderr and exits nonzero.

use std::fs::File;
use std::io::BufWriter;
use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::project::{Project, Stage, StageReport};
use crate::synth::{self, SynthConfig};

#[derive(Debug, Parser)]
#[command(
    name = "cipher",
    version,
    about = "Symbolic indexing, clustering and label propagation for time series"
)]
pub struct Cli {
    /// Pipeline configuration file (TOML). Defaults to <project>/config.toml.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Project directory holding the stage artifacts.
    #[arg(long, global = true, default_value = "project")]
    pub project: PathBuf,

    /// Log progress to stderr.
    #[arg(long, short, global = true)]
    pub verbose: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse the dataset tables into uniform-grid channels.
    Ingest,
    /// Cut channels into fixed-length windows.
    Window,
    /// Detrend, smooth and normalize every window.
    Preprocess,
    /// Build the iSAX index of each clustering channel.
    Index,
    /// Cluster the words of the configured index level.
    Cluster,
    /// Compute per-cluster envelopes and word histograms.
    Summarize,
    /// Write the event catalog from the label journal.
    Export,
    /// Run ingest through summarize.
    Run,
    /// Serve the project to the labeling UI.
    Serve(ServeArgs),
    /// Write a synthetic two-family dataset with its ground truth.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: IpAddr,
    /// Built UI assets to serve at `/` (overrides `service.static_dir`).
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Directory receiving `synthetic.csv` and `truth.csv`.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 60)]
    pub events: usize,
    #[arg(long, default_value_t = 128)]
    pub chunk_samples: usize,
    #[arg(long, default_value_t = 2021)]
    pub seed: u64,
}

#[derive(Debug, Serialize)]
struct ErrorLine<'a> {
    error: &'a str,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    stage: Option<&'a str>,
}

fn print_json<T: Serialize>(value: &T) {
    println!(
        "{}",
        serde_json::to_string(value).expect("report serializes")
    );
}

fn load_config(cli: &Cli, project: &Project) -> Result<PipelineConfig> {
    match &cli.config {
        Some(path) => PipelineConfig::load(path),
        None => project.read_config(),
    }
}

fn stage_of(command: &Command) -> Option<Stage> {
    Some(match command {
        Command::Ingest => Stage::Ingest,
        Command::Window => Stage::Window,
        Command::Preprocess => Stage::Preprocess,
        Command::Index => Stage::Index,
        Command::Cluster => Stage::Cluster,
        Command::Summarize => Stage::Summarize,
        Command::Export => Stage::Export,
        _ => return None,
    })
}

fn execute(cli: &Cli) -> Result<Vec<StageReport>> {
    let project = Project::new(&cli.project);
    if let Some(stage) = stage_of(&cli.command) {
        let config = load_config(cli, &project)?;
        return Ok(vec![project.run_stage(stage, &config)?]);
    }
    match &cli.command {
        Command::Run => {
            let config = load_config(cli, &project)?;
            project.run(&config)
        }
        Command::Serve(args) => {
            let config = load_config(cli, &project)?;
            project.write_config(&config)?;
            let static_dir = args
                .static_dir
                .clone()
                .or(config.service.static_dir.clone());
            let addr = SocketAddr::new(args.host, args.port);
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(crate::service::serve(project, addr, static_dir))?;
            Ok(Vec::new())
        }
        Command::Synth(args) => {
            let config = SynthConfig {
                events_per_family: args.events,
                chunk_samples: args.chunk_samples,
                seed: args.seed,
                ..SynthConfig::default()
            };
            let data = synth::generate(&config)?;
            std::fs::create_dir_all(&args.out_dir)?;
            data.write_table(BufWriter::new(File::create(
                args.out_dir.join("synthetic.csv"),
            )?))?;
            data.write_truth(BufWriter::new(File::create(
                args.out_dir.join("truth.csv"),
            )?))?;
            Ok(vec![StageReport {
                stage: "synth".into(),
                artifacts: vec!["synthetic.csv".into(), "truth.csv".into()],
                counts: [
                    ("samples".to_string(), data.samples.len()),
                    ("events".to_string(), data.truth.len()),
                ]
                .into_iter()
                .collect(),
            }])
        }
        _ => unreachable!("stage commands handled above"),
    }
}

/// Entry point of the `cipher` binary.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(&cli) {
        Ok(reports) => {
            for r in &reports {
                print_json(r);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            let stage = match &e {
                Error::MissingArtifact { stage, .. } => Some(*stage),
                _ => None,
            };
            let line = ErrorLine {
                error: e.kind(),
                message: e.to_string(),
                stage,
            };
            eprintln!(
                "{}",
                serde_json::to_string(&line).expect("error line serializes")
            );
            ExitCode::from(if matches!(e, Error::Config(_)) { 2 } else { 1 })
        }
    }
}
