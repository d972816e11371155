//! `bgn`: data synthesis, training, evaluation, experiments, generative
//! extensions and plotting for battery graph networks.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 training failure.

mod commands;
mod plot;
mod records;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use bgn::BgnError;

#[derive(Parser, Debug)]
#[command(name = "bgn", version, about = "Remaining-useful-life prediction with battery graph networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Configuration shared by every command that trains.
#[derive(Args, Debug, Clone, Default)]
pub struct ConfigArgs {
    /// JSON configuration; unspecified keys keep their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Base seed (falls back to BGN_SEED, then to the configuration).
    #[arg(long, env = "BGN_SEED")]
    pub seed: Option<u64>,
    /// Override a configuration key, e.g. `--set lr=0.01`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Input CSV (battery_id,cycle,step,voltage,current,charge_capacity,
    /// discharge_capacity,charge_energy,discharge_energy,rul).
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    All,
    Train,
    Val,
    Test,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic degradation data set.
    SynthData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        batteries: usize,
        #[arg(long, default_value_t = 2000)]
        steps: usize,
        /// Relative measurement noise.
        #[arg(long, default_value_t = 0.01)]
        noise: f64,
        #[arg(long, env = "BGN_SEED", default_value_t = 0)]
        seed: u64,
    },
    /// Train one model; writes config.json, checkpoint.bgn, metrics.json,
    /// curve.csv and predictions.csv into the output directory.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Evaluate a checkpoint; writes metrics.json and predictions.csv.
    Eval {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Batteries to score; the split is re-derived from the checkpoint's
        /// configuration.
        #[arg(long, value_enum, default_value_t = SplitArg::All)]
        split: SplitArg,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Write predictions of a checkpoint for every sample of the data.
    Predict {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Output predictions CSV.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Train the full model and every ablation over several seeds.
    Ablate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
        /// Seeds per variant (default: `runs` from the configuration).
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Grid search over d, hidden and lr.
    Grid {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
        /// JSON with `d`, `hidden` and `lr` lists (default: the full grid).
        #[arg(long = "grid")]
        grid_file: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Several seeded runs; test metrics as mean ± std.
    Ensemble {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Write inferred adjacency matrices as CSV (sample,t,i,j,weight,hard).
    ExportGraph {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Number of samples to export, from the start of the data.
        #[arg(long, default_value_t = 1)]
        samples: usize,
        /// Weight above which an edge counts as present in `hard`.
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
    },
    /// Train the VAE on the training split and write generated batteries.
    AugmentVae {
        #[command(flatten)]
        data: DataArgs,
        /// Output CSV of generated records (battery ids `synthetic_…`).
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1000)]
        count: usize,
        /// Also train BGN with and without the generated samples and write
        /// comparison.json into this directory.
        #[arg(long)]
        compare: Option<PathBuf>,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Mask readings at random, impute them adversarially and write the
    /// imputed CSV, a mask sidecar and a report.
    ImputeWgan {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
        /// Fraction of readings hidden before imputation.
        #[arg(long, default_value_t = 0.2)]
        mask_rate: f64,
        /// Optimizer steps.
        #[arg(long, default_value_t = 200)]
        steps: usize,
        /// Also train BGN on the original and the imputed data and write
        /// comparison.json into this directory.
        #[arg(long)]
        compare: Option<PathBuf>,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Render predictions.csv as an SVG chart.
    Plot {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code(e: &BgnError) -> u8 {
    match e {
        BgnError::Config(_) | BgnError::InvalidArgument(_) => 1,
        BgnError::Divergence { .. } | BgnError::NonFinite { .. } => 3,
        _ => 2,
    }
}

fn run(cli: Cli) -> bgn::Result<()> {
    use commands::*;
    match cli.command {
        Command::SynthData { out, batteries, steps, noise, seed } => synth_data(&out, batteries, steps, noise, seed),
        Command::Train { data, out, cfg } => train(&data.data, &out, &cfg),
        Command::Eval { data, checkpoint, out, split, jobs } => eval(&data.data, &checkpoint, &out, split, jobs),
        Command::Predict { data, checkpoint, out, jobs } => predict(&data.data, &checkpoint, &out, jobs),
        Command::Ablate { data, out, runs, jobs, cfg } => ablate(&data.data, &out, runs, jobs, &cfg),
        Command::Grid { data, out, grid_file, jobs, cfg } => grid(&data.data, &out, grid_file.as_deref(), jobs, &cfg),
        Command::Ensemble { data, out, runs, jobs, cfg } => ensemble(&data.data, &out, runs, jobs, &cfg),
        Command::ExportGraph { data, checkpoint, out, samples, threshold } => {
            export_graph(&data.data, &checkpoint, &out, samples, threshold)
        }
        Command::AugmentVae { data, out, count, compare, runs, jobs, cfg } => {
            augment_vae(&data.data, &out, count, compare.as_deref(), runs, jobs, &cfg)
        }
        Command::ImputeWgan { data, out, mask_rate, steps, compare, runs, jobs, cfg } => {
            impute_wgan(&data.data, &out, mask_rate, steps, compare.as_deref(), runs, jobs, &cfg)
        }
        Command::Plot { predictions, out } => plot_predictions(&predictions, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
