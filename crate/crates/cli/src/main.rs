use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use microskill_core::pipeline::{Pipeline, Stage, REPORT_TXT_FILE};
use microskill_core::synth;
use microskill_core::PipelineConfig;

/// Segment microanastomosis instrument trajectories into actions and grade skill.
#[derive(Debug, Parser)]
#[command(name = "microskill", version, propagate_version = true)]
struct Cli {
    /// TOML configuration file. `MICROSKILL_<SECTION>__<KEY>` variables
    /// override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Master seed; overrides the configured one.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Directory for stage outputs (or for the generated dataset with `synth`).
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out_dir: PathBuf,

    /// Worker threads for per-procedure parallelism. Defaults to all cores.
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,

    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct InputArgs {
    /// Dataset root holding one subdirectory per procedure.
    input: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset with known ground truth.
    Synth {
        /// Number of procedures to generate.
        #[arg(long, default_value_t = 10)]
        count: usize,
    },
    /// Associate detections into tracks and repair them.
    Track(InputArgs),
    /// Localize instrument tips on the refined tracks.
    Tips(InputArgs),
    /// Build the kinematic feature matrix.
    Features(InputArgs),
    /// Detect action boundaries.
    Segment(InputArgs),
    /// Cluster segments into actions.
    Cluster(InputArgs),
    /// Train the skill classifier on labeled procedures.
    TrainSkill(InputArgs),
    /// Grade every segment with the trained skill classifier.
    PredictSkill(InputArgs),
    /// Score tracking, boundaries and action labels against ground truth.
    Eval(InputArgs),
    /// Summarize metrics into report.txt and report.json.
    Report(InputArgs),
    /// Run every stage in order.
    RunAll(InputArgs),
}

impl Command {
    fn stage(&self) -> Option<(Stage, &Path)> {
        let (stage, args) = match self {
            Command::Synth { .. } | Command::RunAll(_) => return None,
            Command::Track(a) => (Stage::Track, a),
            Command::Tips(a) => (Stage::Tips, a),
            Command::Features(a) => (Stage::Features, a),
            Command::Segment(a) => (Stage::Segment, a),
            Command::Cluster(a) => (Stage::Cluster, a),
            Command::TrainSkill(a) => (Stage::TrainSkill, a),
            Command::PredictSkill(a) => (Stage::PredictSkill, a),
            Command::Eval(a) => (Stage::Eval, a),
            Command::Report(a) => (Stage::Report, a),
        };
        Some((stage, &args.input))
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut config = PipelineConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn run(cli: Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        anyhow::ensure!(jobs > 0, "--jobs must be at least 1");
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let config = load_config(&cli)?;
    match &cli.command {
        Command::Synth { count } => {
            let ids = synth::write_dataset(&cli.out_dir, *count, config.seed, &config.synth)?;
            println!("wrote {} procedures to {}", ids.len(), cli.out_dir.display());
        }
        Command::RunAll(args) => {
            Pipeline::new(config, &args.input, &cli.out_dir)?.run_all()?;
            println!("report written to {}", cli.out_dir.join(REPORT_TXT_FILE).display());
        }
        cmd => {
            let (stage, input) = cmd.stage().expect("every other command maps to a stage");
            Pipeline::new(config, input, &cli.out_dir)?.run(stage)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
