mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Inject art into crosswalks, run detectors on the result and search for
/// universal perturbations that hide pedestrians.
#[derive(Debug, Parser)]
#[command(name = "artwalk", version)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, serde::Serialize)]
pub struct GlobalArgs {
    /// Seed for scene generation and the attack's sampled directions.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Detector workers; with an external detector, one process each.
    #[arg(long, global = true, default_value_t = 1)]
    pub workers: usize,

    #[arg(long, global = true, value_enum, default_value_t = DetectorKind::Synthetic)]
    pub detector: DetectorKind,

    /// Adapter command line, run through `sh -c`.
    #[arg(long, global = true)]
    pub detector_cmd: Option<String>,

    /// JSON file with synthetic detector parameters.
    #[arg(long, global = true)]
    pub detector_config: Option<PathBuf>,

    /// Seconds to wait for each adapter response.
    #[arg(long, global = true, default_value_t = 30.0)]
    pub timeout: f64,

    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    Synthetic,
    Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset.
    Gen(GenArgs),
    /// Write composited scenes with an art pattern injected.
    Compose(ComposeArgs),
    /// Run the detector on a dataset and score it.
    Evaluate(EvaluateArgs),
    /// Optimize a universal perturbation of an art pattern.
    Attack(AttackArgs),
    /// Compare several art patterns on the same dataset.
    Batch(BatchArgs),
    /// Scripted protocol adapter for tests.
    #[command(hide = true)]
    MockAdapter {
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        args: Vec<String>,
    },
}

#[derive(Debug, Clone, Args, serde::Serialize)]
pub struct GenArgs {
    #[arg(long)]
    pub out: PathBuf,

    #[arg(long, default_value_t = 77)]
    pub n: usize,

    /// JSON file with scene generator settings; `--seed` overrides its seed.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, serde::Serialize)]
pub struct ArtArgs {
    /// Art pattern (PNG or PPM). Without it scenes are used as they are.
    #[arg(long)]
    pub art: Option<PathBuf>,

    /// Perturbation sidecar JSON added to the art.
    #[arg(long, requires = "art")]
    pub perturbation: Option<PathBuf>,

    /// Art opacity over the road.
    #[arg(long, default_value_t = 1.0)]
    pub blend: f64,

    /// Quarter turns of the art inside each crosswalk.
    #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
    pub orientation: i32,
}

#[derive(Debug, Clone, Args, serde::Serialize)]
pub struct ComposeArgs {
    #[arg(long)]
    pub dataset: PathBuf,

    #[command(flatten)]
    pub art: ArtArgs,

    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ApMethodArg {
    AllPoints,
    Points101,
}

#[derive(Debug, Clone, Args, serde::Serialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub dataset: PathBuf,

    #[command(flatten)]
    pub art: ArtArgs,

    /// Metrics report JSON.
    #[arg(long)]
    pub report: PathBuf,

    /// Detections interchange JSON; defaults to `<report>.detections.json`.
    #[arg(long)]
    pub detections: Option<PathBuf>,

    #[arg(long, value_enum, default_value_t = ApMethodArg::AllPoints)]
    pub ap_method: ApMethodArg,
}

#[derive(Debug, Clone, Args, serde::Serialize)]
pub struct AttackArgs {
    /// Dataset whose first `--train` scenes form the optimization batch.
    #[arg(long)]
    pub dataset: PathBuf,

    #[arg(long)]
    pub art: PathBuf,

    /// Attack configuration JSON; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,

    #[arg(long)]
    pub out: PathBuf,

    #[arg(long, default_value_t = 8)]
    pub train: usize,

    /// Held-out dataset for the before/after reports; defaults to the
    /// scenes after the training batch.
    #[arg(long)]
    pub eval_dataset: Option<PathBuf>,

    /// Art-sized mask limiting where the perturbation may be nonzero.
    #[arg(long)]
    pub support: Option<PathBuf>,

    #[arg(long)]
    pub epsilon: Option<f64>,

    #[arg(long)]
    pub step_size: Option<f64>,

    #[arg(long)]
    pub iterations: Option<usize>,

    #[arg(long)]
    pub queries: Option<usize>,

    #[arg(long)]
    pub sigma: Option<f64>,

    #[arg(long, default_value_t = 1.0)]
    pub blend: f64,

    #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
    pub orientation: i32,
}

#[derive(Debug, Clone, Args, serde::Serialize)]
pub struct BatchArgs {
    #[arg(long)]
    pub dataset: PathBuf,

    /// Art patterns to compare; `clean` stands for no injection.
    #[arg(long = "art", required = true, num_args = 1..)]
    pub arts: Vec<String>,

    #[arg(long)]
    pub out: PathBuf,

    #[arg(long, default_value_t = 1.0)]
    pub blend: f64,

    #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
    pub orientation: i32,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.global.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .parse_default_env()
        .init();
    ExitCode::from(commands::run(cli))
}
