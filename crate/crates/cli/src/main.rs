//! `structprox` command-line tool.
//!
//! Exit codes: 0 success, 1 bad input (one `error kind=... message=...` line
//! on stderr), 2 solver failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use structprox::{Error, Normalization, Variant};

#[derive(Parser, Debug)]
#[command(name = "structprox", version, about = "Multilevel imaging-genetics logistic regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit one model with fixed penalties and write the model, scaler and reports.
    Fit(FitArgs),
    /// Apply a fitted model to new samples.
    Predict(PredictArgs),
    /// Stratified k-fold cross-validation with a penalty grid, one table row per variant.
    Cv(CvArgs),
    /// Print the penalty levels above which no gene enters at the first iteration.
    Screen(ScreenArgs),
    /// Write a synthetic planted-model dataset.
    Generate(GenerateArgs),
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Genetic feature CSV (header row, one sample per row)
    #[arg(long)]
    pub genetic: PathBuf,
    /// Imaging feature CSV
    #[arg(long)]
    pub imaging: PathBuf,
    /// Label CSV with a single 0/1 column
    #[arg(long)]
    pub labels: PathBuf,
    /// Group file: `name<TAB>weight|auto<TAB>idx,idx,...`
    #[arg(long)]
    pub groups: PathBuf,
    #[arg(long, default_value = "sd")]
    pub normalization: Normalization,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub lambda_w: f64,
    #[arg(long)]
    pub lambda_i: f64,
    #[arg(long)]
    pub lambda_g: f64,
    #[arg(long, default_value = "multilevel")]
    pub variant: Variant,
    #[arg(long, default_value_t = 1e-5)]
    pub eta: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_iters: usize,
    #[arg(long, default_value = "structprox_fit")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    /// Directory written by `fit`
    #[arg(long)]
    pub model_dir: PathBuf,
    #[arg(long)]
    pub genetic: PathBuf,
    #[arg(long)]
    pub imaging: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    #[arg(long, default_value = "predictions.csv")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct CvArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Penalty grid shared by all penalties: `lo:hi:points` (log-spaced) or `a,b,c`
    #[arg(long, default_value = "1e-3:1:7")]
    pub grid: String,
    /// Comma-separated variants, or `all`
    #[arg(long, default_value = "multilevel")]
    pub variant: String,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// `nested` (inner split of each training fold) or `oracle` (best pooled test score)
    #[arg(long, default_value = "nested")]
    pub selection: String,
    #[arg(long, default_value_t = 3)]
    pub inner_folds: usize,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    #[arg(long, default_value_t = 1e-5)]
    pub eta: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_iters: usize,
    #[arg(long, default_value = "structprox_cv")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ScreenArgs {
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 200)]
    pub samples: usize,
    #[arg(long, default_value_t = 40)]
    pub genetic_features: usize,
    #[arg(long, default_value_t = 8)]
    pub imaging_features: usize,
    #[arg(long, default_value_t = 8)]
    pub n_groups: usize,
    #[arg(long, default_value_t = 0.2)]
    pub overlap: f64,
    #[arg(long, default_value_t = 2)]
    pub active_groups: usize,
    #[arg(long, default_value_t = 2)]
    pub active_imaging: usize,
    #[arg(long, default_value_t = 0.0)]
    pub effect_w: f64,
    #[arg(long, default_value_t = 0.5)]
    pub effect_i: f64,
    #[arg(long, default_value_t = 0.5)]
    pub effect_g: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub beta0: f64,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Use the 707 x (1107 genetic, 114 imaging) layout; size flags are ignored
    #[arg(long)]
    pub study_scale: bool,
    #[arg(long, default_value = "structprox_data")]
    pub out: PathBuf,
}

fn report(kind: &str, message: &str) {
    let flat = message.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', " ");
    eprintln!("error kind={kind} message=\"{flat}\"");
}

fn configure_threads() -> Result<(), Error> {
    let Ok(v) = std::env::var("STRUCTPROX_THREADS") else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::InvalidInput(format!("STRUCTPROX_THREADS must be a positive integer, got '{v}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::InvalidInput(e.to_string()))
}

fn main() -> ExitCode {
    let args = match config::expand_config(std::env::args().collect()) {
        Ok(a) => a,
        Err(e) => {
            report(e.kind(), &e.to_string());
            return ExitCode::from(1);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let text = e.to_string();
            let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("usage error");
            report("usage", first.trim_start_matches("error: "));
            return ExitCode::from(1);
        }
    };
    if let Err(e) = configure_threads() {
        report(e.kind(), &e.to_string());
        return ExitCode::from(1);
    }
    let result = match cli.command {
        Command::Fit(a) => commands::fit(&a),
        Command::Predict(a) => commands::predict(&a),
        Command::Cv(a) => commands::cv(&a),
        Command::Screen(a) => commands::screen(&a),
        Command::Generate(a) => commands::generate(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report(e.kind(), &e.to_string());
            ExitCode::from(if e.is_solver_failure() { 2 } else { 1 })
        }
    }
}
