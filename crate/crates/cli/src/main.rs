//! Command-line driver for the disturbance-rejection analysis pipeline.
//!
//! Each subcommand runs one stage against an artifact directory; stages
//! consume their predecessors' outputs and record a manifest with the digest
//! chain. Exit codes: 0 success, 2 configuration error, 3 data-integrity
//! error, 4 numeric divergence, 1 anything else.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dobnet_core::artifact::PipelineConfig;
use dobnet_core::pipeline;
use dobnet_core::Error;

#[derive(Parser)]
#[command(name = "dobnet", version, about = "Recurrent disturbance-rejection control and switching-automaton extraction pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct StageArgs {
    /// Artifact directory shared by all stages of one run.
    #[arg(long)]
    out: PathBuf,
    /// Configuration file (TOML); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the seed from the configuration file.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Clone)]
struct AnalysisArgs {
    #[command(flatten)]
    stage: StageArgs,
    /// Overrides analysis.attention_threshold from the configuration.
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the continuous recurrent controller.
    Train(StageArgs),
    /// Roll the trained controller to collect observation/action data.
    Collect(StageArgs),
    /// Train the observation and action interfaces (supervised).
    TrainQuantizers(StageArgs),
    /// Insert OQ/AQ and finetune the quantized controller.
    Finetune(StageArgs),
    /// Collect hidden states and train the hidden interface.
    TrainHq(StageArgs),
    /// Extract the transition dataset and build the unreduced machine.
    ExtractMmn(StageArgs),
    /// Reduce the machine and verify replay equivalence.
    Minimize(StageArgs),
    /// Attention counting and key-machine construction.
    Kmmn(AnalysisArgs),
    /// Cycle detection and disturbance-synchronization scoring.
    Analyze(AnalysisArgs),
    /// Aggregate all statistics into one report.
    Report(StageArgs),
    /// Run every stage in order.
    All(StageArgs),
    /// Print the default configuration document.
    DefaultConfig,
}

fn load_config(args: &StageArgs) -> Result<(PipelineConfig, u64), Error> {
    let mut config = match &args.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.run.seed = seed;
    }
    let seed = config.run.seed;
    Ok((config, seed))
}

fn run(command: Command) -> Result<(), Error> {
    let (stage_name, args, threshold): (&str, StageArgs, Option<f64>) = match command {
        Command::Train(a) => ("train", a, None),
        Command::Collect(a) => ("collect", a, None),
        Command::TrainQuantizers(a) => ("train-quantizers", a, None),
        Command::Finetune(a) => ("finetune", a, None),
        Command::TrainHq(a) => ("train-hq", a, None),
        Command::ExtractMmn(a) => ("extract-mmn", a, None),
        Command::Minimize(a) => ("minimize", a, None),
        Command::Kmmn(a) => ("kmmn", a.stage, a.threshold),
        Command::Analyze(a) => ("analyze", a.stage, a.threshold),
        Command::Report(a) => ("report", a, None),
        Command::All(a) => ("all", a, None),
        Command::DefaultConfig => {
            print!("{}", PipelineConfig::default().to_toml());
            return Ok(());
        }
    };
    let (mut config, seed) = load_config(&args)?;
    if let Some(t) = threshold {
        config.analysis.attention_threshold = t;
    }
    if stage_name == "all" {
        pipeline::run_all(&config, &args.out, seed)
    } else {
        pipeline::run_stage(stage_name, &config, &args.out, seed)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::Config(_) => 2,
                Error::DataIntegrity(_) => 3,
                Error::NumericDivergence(_) => 4,
                _ => 1,
            };
            ExitCode::from(code)
        }
    }
}
