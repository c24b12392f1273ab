//! `skillbank`: build, query, and exercise a hierarchical skill repository
//! from the command line.

mod commands;
mod config;
mod errors;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::Settings;
use errors::CliError;

#[derive(Parser)]
#[command(
    name = "skillbank",
    version,
    about = "Hierarchical skill repository: ingest demonstrations, retrieve examples, synthesize 6-DoF pose sequences"
)]
struct Cli {
    /// JSON config file (flags and environment variables take precedence)
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Repository directory (overrides SKILLBANK_REPO and the config file)
    #[arg(long, global = true)]
    repo: Option<PathBuf>,

    /// Fixture file; selects the offline canned-response backend
    #[arg(long, global = true)]
    fixtures: Option<PathBuf>,

    /// Emit machine-readable JSON instead of human tables
    #[arg(long, global = true)]
    json: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Annotate demonstration videos and build a repository
    Ingest {
        /// Directory of video manifest JSON files
        #[arg(long)]
        manifests: PathBuf,
        /// Output repository directory (defaults to --repo)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Base skill library JSON (defaults to a built-in pick/place set)
        #[arg(long)]
        library: Option<PathBuf>,
        /// Concurrent per-video annotation jobs
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Retrieve the best demonstration slices for a skill signature
    Query {
        /// Skill signature, e.g. "wipe(target=desk, tool=sponge)"
        signature: String,
        /// Deployment scene image (path or handle)
        #[arg(long)]
        scene: String,
        /// Number of candidates to return
        #[arg(short, default_value_t = 3)]
        k: usize,
    },
    /// Synthesize an executable pose sequence for a skill
    Synth {
        /// Skill signature, e.g. "close_drawer(target=drawer)"
        signature: String,
        /// Scene specification JSON file
        #[arg(long)]
        scene: PathBuf,
        /// Output pose-sequence JSON file
        #[arg(long)]
        out: PathBuf,
        /// Directory for prompt images (overlay, annotated scene)
        #[arg(long)]
        artifacts: Option<PathBuf>,
    },
    /// Plan an instruction, extending the skill library when insufficient
    Plan {
        /// Free-form instruction, e.g. "clean the desk"
        instruction: String,
        /// Base skill library JSON file
        #[arg(long)]
        library: PathBuf,
        /// Optional scene image attached to planning calls
        #[arg(long)]
        scene: Option<String>,
        /// Directory receiving plan.txt and plan.json
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Print repository statistics
    Stats {
        /// Include a per-class slice histogram
        #[arg(long)]
        verbose: bool,
    },
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let settings = Settings::resolve(
        cli.config.as_deref(),
        cli.repo.as_deref(),
        cli.fixtures.as_deref(),
    )?;
    match &cli.command {
        Command::Ingest {
            manifests,
            out,
            library,
            jobs,
        } => commands::cmd_ingest(
            &settings,
            manifests,
            out.as_deref(),
            library.as_deref(),
            (*jobs).max(1),
            cli.json,
        ),
        Command::Query {
            signature,
            scene,
            k,
        } => commands::cmd_query(&settings, signature, scene, (*k).max(1), cli.json),
        Command::Synth {
            signature,
            scene,
            out,
            artifacts,
        } => commands::cmd_synth(
            &settings,
            signature,
            scene,
            out,
            artifacts.as_deref(),
            cli.json,
        ),
        Command::Plan {
            instruction,
            library,
            scene,
            out_dir,
        } => commands::cmd_plan(
            &settings,
            instruction,
            library,
            scene.as_deref(),
            out_dir,
            cli.json,
        ),
        Command::Stats { verbose } => commands::cmd_stats(&settings, *verbose, cli.json),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
