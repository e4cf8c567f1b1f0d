mod commands;
mod config;
mod error;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{Layout, Meta, Representation, SynthOptions};
use config::{Overrides, PipelineConfig};
use error::{CliError, CliResult};

/// Accident-severity modelling pipeline: association-based feature
/// selection, an autoencoder, class-weighted dense classifiers, grid search
/// and cross-validated BER.
#[derive(Parser, Debug)]
#[command(name = "severity", version)]
struct Cli {
    /// JSON pipeline config.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override a config value, e.g. `--set classifier.epochs=20`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for grid cells and CV folds.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true, value_name = "DIR")]
    work_dir: Option<PathBuf>,
    /// Train classifiers with unit class weights.
    #[arg(long, global = true)]
    no_class_weights: bool,
    /// Input CSV (overrides `data` in the config).
    #[arg(long, global = true, value_name = "PATH")]
    data: Option<PathBuf>,
    /// Schema JSON (overrides `schema` in the config).
    #[arg(long, global = true, value_name = "PATH")]
    schema: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Dataset summary JSON.
    Stats,
    /// Cramér's V matrix CSV and feature selection JSON.
    Associate,
    /// Split, fit one-hot/standardization on train, write feature matrices.
    Preprocess,
    /// Train the autoencoder on the training features.
    TrainAe,
    /// Encode every split with the trained autoencoder.
    Encode,
    /// Train a classifier and score it on every split.
    Train(ModelArgs),
    /// Train one classifier per grid cell and rank them by validation BER.
    Grid(InputArgs),
    /// Stratified k-fold cross-validation.
    Cv(ModelArgs),
    /// Label a CSV with a trained classifier.
    Predict(PredictArgs),
    /// associate, preprocess, train-ae, encode, train, cv; writes table1.{json,csv}.
    Pipeline,
    /// Write a seeded synthetic dataset and its schema.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
struct InputArgs {
    #[arg(long, value_enum, default_value = "features")]
    input: Representation,
}

#[derive(Args, Debug)]
struct ModelArgs {
    #[arg(long, value_enum, default_value = "features")]
    input: Representation,
    /// Model name under `models/` (default: dnn or encoder_dnn).
    #[arg(long)]
    name: Option<String>,
}

#[derive(Args, Debug)]
struct PredictArgs {
    /// CSV to label; the target column may be absent.
    #[arg(long, value_name = "PATH")]
    input: PathBuf,
    #[arg(long, default_value = "dnn")]
    model: String,
    /// Label CSV (default: <work-dir>/predictions.csv).
    #[arg(long, value_name = "PATH")]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, default_value_t = 5000)]
    rows: usize,
    /// Comma-separated class proportions.
    #[arg(long, value_delimiter = ',', default_value = "0.005,0.70,0.27,0.025")]
    proportions: Vec<f64>,
    #[arg(long, default_value_t = 6)]
    numeric: usize,
    #[arg(long, default_value_t = 3)]
    categorical: usize,
    /// Strength of the class signal in the features.
    #[arg(long, default_value_t = 0.3)]
    shift: f64,
    #[arg(long, default_value_t = 6)]
    categories: usize,
    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Stats => "stats",
            Command::Associate => "associate",
            Command::Preprocess => "preprocess",
            Command::TrainAe => "train-ae",
            Command::Encode => "encode",
            Command::Train(_) => "train",
            Command::Grid(_) => "grid",
            Command::Cv(_) => "cv",
            Command::Predict(_) => "predict",
            Command::Pipeline => "pipeline",
            Command::Synth(_) => "synth",
        }
    }
}

fn run(cli: &Cli) -> CliResult<serde_json::Value> {
    let overrides = Overrides {
        sets: cli.set.clone(),
        seed: cli.seed,
        work_dir: cli.work_dir.clone(),
        data: cli.data.clone(),
        schema: cli.schema.clone(),
        no_class_weights: cli.no_class_weights,
    };
    let cfg = PipelineConfig::load(cli.config.as_deref(), &overrides)?;
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    let meta = Meta::start();
    if let Command::Synth(a) = &cli.command {
        let opts = SynthOptions {
            rows: a.rows,
            proportions: a.proportions.clone(),
            numeric: a.numeric,
            categorical: a.categorical,
            shift: a.shift,
            categories: a.categories,
            out_dir: a.out_dir.clone(),
        };
        return commands::synth(&cfg, &opts, &meta);
    }

    let layout = Layout::new(&cfg.work_dir)?;
    let stage = cli.command.name();
    let marker = layout.incomplete_marker(stage);
    std::fs::write(&marker, "").map_err(|e| severity_core::Error::io(&marker, e))?;
    let result = match &cli.command {
        Command::Stats => commands::stats(&cfg, &layout, &meta),
        Command::Associate => commands::associate(&cfg, &layout, &meta),
        Command::Preprocess => commands::preprocess(&cfg, &layout, &meta),
        Command::TrainAe => commands::train_ae(&cfg, &layout, &meta),
        Command::Encode => commands::encode_stage(&layout, &meta),
        Command::Train(a) => commands::train(&cfg, &layout, &meta, a.input, a.name.as_deref()),
        Command::Grid(a) => commands::grid(&cfg, &layout, &meta, a.input),
        Command::Cv(a) => commands::cv(&cfg, &layout, &meta, a.input, a.name.as_deref()),
        Command::Predict(a) => {
            commands::predict(&layout, &meta, &a.input, &a.model, a.output.as_deref())
        }
        Command::Pipeline => commands::pipeline(&cfg, &layout, &meta),
        Command::Synth(_) => unreachable!("handled above"),
    }?;
    // only a successful stage clears its marker
    let _ = std::fs::remove_file(&marker);
    Ok(result)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&cli) {
        Ok(report) => {
            let text = serde_json::to_string_pretty(&report).expect("report serializes");
            // a closed downstream pipe is not a stage failure
            let _ = writeln!(std::io::stdout().lock(), "{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let body = e.to_json(cli.command.name());
            eprintln!("{}", serde_json::to_string_pretty(&body).expect("error serializes"));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
