use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

#[derive(Debug, Parser)]
#[command(name = "dpms", version, about = "Differentially private model selection for linear regression")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Select a model for a CSV dataset
    Select(SelectArgs),
    /// Run a simulation sweep on synthetic data
    Sweep(SweepArgs),
    /// Check data bounds and report design diagnostics
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlgorithmArg {
    Pcls,
    Pcpl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MechanismArg {
    NoisyArgmin,
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StandardizeArg {
    None,
    Clip,
    Rescale,
}

/// Accepts ordinary numbers plus `inf`.
pub fn parse_real(s: &str) -> Result<f64, String> {
    match s.trim() {
        "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
        t => t.parse::<f64>().map_err(|e| format!("{t:?}: {e}")),
    }
}

pub fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| format!("range {s:?} must look like lo:hi"))?;
    Ok((parse_real(lo)?, parse_real(hi)?))
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    /// TOML config file; flags override its values
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Name of the response column
    #[arg(long)]
    pub response: Option<String>,
    #[arg(long, value_enum)]
    pub algorithm: Option<AlgorithmArg>,
    /// ℓ1 radius
    #[arg(long = "R", value_parser = parse_real)]
    pub radius: Option<f64>,
    /// Penalty per included covariate
    #[arg(long, value_parser = parse_real)]
    pub phi: Option<f64>,
    /// Privacy budget (per stage for pcpl); `inf` disables noise
    #[arg(long, value_parser = parse_real)]
    pub epsilon: Option<f64>,
    /// Stage-one budget for pcpl (defaults to --epsilon)
    #[arg(long, value_parser = parse_real)]
    pub stage1_epsilon: Option<f64>,
    #[arg(long, value_parser = parse_real)]
    pub delta: Option<f64>,
    /// Public bound on |y|; inferred from the data when absent
    #[arg(long, value_parser = parse_real)]
    pub r: Option<f64>,
    /// all | all-nonempty | size<=k | @file.json
    #[arg(long)]
    pub models: Option<String>,
    #[arg(long, value_enum)]
    pub mechanism: Option<MechanismArg>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Report path; stdout when absent
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Keep pre-noise scores in the report (voids the privacy guarantee)
    #[arg(long)]
    pub debug_unsafe: bool,
    /// Do not prepend an intercept column
    #[arg(long)]
    pub no_intercept: bool,
    #[arg(long, value_enum)]
    pub standardize: Option<StandardizeArg>,
    /// Public covariate ranges for rescaling, lo:hi per covariate
    #[arg(long = "x-range", value_parser = parse_range, value_delimiter = ',')]
    pub x_ranges: Vec<(f64, f64)>,
    /// Public response range for rescaling, lo:hi
    #[arg(long, value_parser = parse_range)]
    pub y_range: Option<(f64, f64)>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Synthetic model preset (1 or 2)
    #[arg(long)]
    pub model_id: Option<u32>,
    #[arg(long, value_delimiter = ',')]
    pub n: Vec<usize>,
    #[arg(long, value_parser = parse_real, value_delimiter = ',')]
    pub eps: Vec<f64>,
    #[arg(long = "R", value_parser = parse_real, value_delimiter = ',')]
    pub radius: Vec<f64>,
    /// Penalty values, or `default` for the log-spaced grid
    #[arg(long, value_delimiter = ',')]
    pub phi: Vec<String>,
    #[arg(long, value_parser = parse_real, value_delimiter = ',')]
    pub delta: Vec<f64>,
    #[arg(long)]
    pub replications: Option<usize>,
    #[arg(long, value_enum)]
    pub algorithm: Option<AlgorithmArg>,
    #[arg(long, value_enum)]
    pub mechanism: Option<MechanismArg>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Record mean wall-clock time per selection
    #[arg(long)]
    pub timing: bool,
    /// Output path; `.json` writes JSON, anything else CSV
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub response: Option<String>,
    #[arg(long, value_parser = parse_real)]
    pub r: Option<f64>,
    /// Largest support size for the sparse eigenvalue (defaults to all covariates)
    #[arg(long)]
    pub max_size: Option<usize>,
    #[arg(long)]
    pub no_intercept: bool,
}
