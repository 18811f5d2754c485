//! Command-line surface for the toolkit: dataset generation, feature
//! extraction, parameter optimization, augmentation, sigma sweeps, the
//! verification protocol, and bit-exact replay of recorded runs.

mod commands;
mod record;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

/// Exit codes: 0 success, 2 config error, 3 data error, 4 numerical failure.
fn exit_code_for(err: &anyhow::Error) -> u8 {
    if let Some(e) = err.downcast_ref::<sigvar::Error>() {
        use sigvar::Error::*;
        match e {
            InvalidParameters { .. }
            | NonPositiveGamma { .. }
            | NonPositiveSigma { .. }
            | InvalidKernelRadius { .. }
            | TooFewParticles { .. }
            | SchemaVersion { .. }
            | EmptyClass
            | EmptyScores => 2,
            NoConvergence { .. } | NonFiniteFitness { .. } => 4,
            _ => 3,
        }
    } else {
        2
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "sigvar",
    version,
    about = "Writer-variability optimization and augmentation for offline signature verification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Generate the bundled synthetic stroke dataset.
    GenDataset(GenDatasetArgs),
    /// Extract baseline-descriptor features from a manifest into a store.
    Extract(ExtractArgs),
    /// Optimize writer-variability parameters with the swarm.
    Optimize(OptimizeArgs),
    /// Generate synthetic images or feature vectors under saved parameters.
    Augment(AugmentArgs),
    /// Per-writer silhouette-vs-sigma curves over a sigma grid.
    SweepSigma(SweepSigmaArgs),
    /// Run the verification protocol and report EERs.
    Evaluate(EvaluateArgs),
    /// Compare the feature-level silhouette of two parameter files.
    ValidateFeatures(ValidateFeaturesArgs),
    /// Re-run a recorded run.json and reproduce its outputs byte-exactly.
    Replay(ReplayArgs),
    /// Write a parameter file holding one of the shipped presets.
    InitParams(InitParamsArgs),
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct CommonArgs {
    /// Worker threads; defaults to the logical core count. Results do not
    /// depend on this.
    #[arg(long, global = true)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
    /// Key=value file supplying defaults for flags not given on the line.
    #[arg(long, global = true)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct GenDatasetArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub writers: usize,
    #[arg(long, default_value_t = 15)]
    pub genuine: usize,
    #[arg(long, default_value_t = 10)]
    pub skilled: usize,
    /// Rendered image size as HxW.
    #[arg(long, default_value = "200x300")]
    pub size: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: CommonArgs,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct ExtractArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Write the binary store format instead of text.
    #[arg(long, default_value_t = false)]
    pub binary: bool,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: CommonArgs,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct OptimizeArgs {
    /// image: optimize the duplicator's six parameters;
    /// feature: optimize the Gaussian filter's sigma interval.
    #[arg(long)]
    pub mode: String,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Precomputed feature vectors; replaces the baseline descriptor in
    /// feature mode.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<PathBuf>,
    /// Comma-separated writer ids to optimize (default: all).
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub writers: Option<String>,
    #[arg(long, default_value_t = 40)]
    pub iterations: usize,
    #[arg(long, default_value_t = 30)]
    pub particles: usize,
    /// Synthetic samples per genuine sample inside each fitness evaluation.
    #[arg(long = "n-per", default_value_t = 1)]
    pub n_per: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Skip writers that fail preconditions instead of aborting.
    #[arg(long, default_value_t = false)]
    pub skip_failed: bool,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: CommonArgs,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct AugmentArgs {
    #[arg(long)]
    pub mode: String,
    #[arg(long)]
    pub params: PathBuf,
    /// image mode: a PNG to duplicate; feature mode: a vector store.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// image mode: output directory; feature mode: output store path.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional external duplicator executable for image mode.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub external: Option<PathBuf>,
    /// Feature mode: write the binary store format.
    #[arg(long, default_value_t = false)]
    pub binary: bool,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: CommonArgs,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct SweepSigmaArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<PathBuf>,
    /// Sigma grid as LO:HI:STEP.
    #[arg(long = "sigma-grid", default_value = "0.1:4.0:0.1")]
    pub sigma_grid: String,
    #[arg(long = "n-per", default_value_t = 1)]
    pub n_per: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: CommonArgs,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<PathBuf>,
    /// Parameter file driving augmentation; omit for the no-augmentation
    /// baseline.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<PathBuf>,
    /// Training-genuine counts: a range like 1..3 or a comma list.
    #[arg(long, default_value = "1..3")]
    pub r: String,
    /// Synthetic-sample counts: a range like 0..22 or a comma list.
    #[arg(long, default_value = "0")]
    pub d: String,
    #[arg(long, default_value_t = 10)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long = "test-genuine", default_value_t = 10)]
    pub test_genuine: usize,
    #[arg(long = "test-random", default_value_t = 10)]
    pub test_random: usize,
    #[arg(long = "test-skilled", default_value_t = 10)]
    pub test_skilled: usize,
    #[arg(long = "neg-per-writer", default_value_t = 14)]
    pub neg_per_writer: usize,
    /// Do not augment the random-forgery negatives.
    #[arg(long, default_value_t = false)]
    pub no_augment_negatives: bool,
    /// Fixed RBF gamma; default derives it per writer from the training set.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: CommonArgs,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct ValidateFeaturesArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<PathBuf>,
    #[arg(long = "params-a")]
    pub params_a: PathBuf,
    #[arg(long = "params-b")]
    pub params_b: PathBuf,
    #[arg(long = "n-per", default_value_t = 1)]
    pub n_per: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Optional CSV output path.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: CommonArgs,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct ReplayArgs {
    /// A run.json written by a previous run.
    #[arg(long)]
    pub run: PathBuf,
    /// Override the recorded output location.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: CommonArgs,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct InitParamsArgs {
    /// default-duplicator, optimized-duplicator, or optimized-gaussian.
    #[arg(long)]
    pub preset: String,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: CommonArgs,
}

/// Expands `--config FILE` into default argv tokens: each `key = value`
/// line becomes `--key value` unless `--key` was given explicitly.
fn apply_config_file(mut argv: Vec<String>) -> anyhow::Result<Vec<String>> {
    let Some(pos) = argv.iter().position(|a| a == "--config") else {
        return Ok(argv);
    };
    let path = argv
        .get(pos + 1)
        .ok_or_else(|| anyhow::anyhow!("--config needs a file argument"))?
        .clone();
    let text = std::fs::read_to_string(&path)
        .map_err(|e| anyhow::anyhow!("cannot read config {path}: {e}"))?;
    for (number, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow::anyhow!("{path}:{}: expected key=value", number + 1))?;
        let flag = format!("--{}", key.trim());
        if !argv.contains(&flag) {
            let value = value.trim().trim_matches('"');
            argv.push(flag);
            argv.push(value.to_string());
        }
    }
    Ok(argv)
}

/// SIGVAR_SEED overrides --seed on every subcommand that has one.
fn apply_seed_env(argv: Vec<String>) -> anyhow::Result<Vec<String>> {
    let Ok(seed) = std::env::var("SIGVAR_SEED") else {
        return Ok(argv);
    };
    const SEEDED: [&str; 6] = [
        "gen-dataset",
        "optimize",
        "augment",
        "sweep-sigma",
        "evaluate",
        "validate-features",
    ];
    if !argv
        .get(1)
        .is_some_and(|sub| SEEDED.contains(&sub.as_str()))
    {
        return Ok(argv);
    }
    seed.parse::<u64>()
        .map_err(|_| anyhow::anyhow!("SIGVAR_SEED must be an unsigned integer, got `{seed}`"))?;
    let mut argv: Vec<String> = {
        let mut out = Vec::with_capacity(argv.len());
        let mut skip_next = false;
        for (i, a) in argv.iter().enumerate() {
            if skip_next {
                skip_next = false;
                continue;
            }
            if a == "--seed" {
                skip_next = argv.get(i + 1).is_some_and(|v| !v.starts_with("--"));
                continue;
            }
            out.push(a.clone());
        }
        out
    };
    argv.push("--seed".into());
    argv.push(seed);
    Ok(argv)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let argv: Vec<String> = std::env::args().collect();
    let argv = match apply_config_file(argv).and_then(apply_seed_env) {
        Ok(v) => v,
        Err(err) => {
            eprintln!("error: {err}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::parse_from(argv);
    match commands::dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
