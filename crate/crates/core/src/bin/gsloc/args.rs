//! Command-line surface and config-file overlay.
//!
//! Every subcommand flag may also be given in the `[<subcommand>]` table of
//! the file passed with `--config`; a flag on the command line wins over the
//! file, and the file wins over built-in defaults.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use gsloc::evaluation::SweepAxis;
use gsloc::localization::{ApMethod, Mode};

use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "gsloc", version, about = "Group-sparsity WiFi fingerprint localization toolkit")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// Master seed for every stochastic step.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 1 gives bit-reproducible output.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Directory receiving output files.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Exit with code 3 when any solve stops before converging.
    #[arg(long, global = true)]
    pub strict: bool,
    /// TOML or JSON file with defaults for any flag.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Raise log verbosity (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic floor: fingerprints, radio map and test readings.
    Simulate(SimulateArgs),
    /// Estimate positions for online readings.
    Localize(LocalizeArgs),
    /// Reconstruct a dense radio map from fingerprints at a subset of RPs.
    Interpolate(InterpolateArgs),
    /// Score localization output or compare two radio maps.
    Evaluate(EvaluateArgs),
    /// Run parameter sweeps and write one CSV per axis.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeArg {
    Gs,
    Mgs,
    Cs,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Gs => Mode::Gs,
            ModeArg::Mgs => Mode::Mgs,
            ModeArg::Cs => Mode::Cs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApMethodArg {
    Fisher,
    Strongest,
}

impl From<ApMethodArg> for ApMethod {
    fn from(m: ApMethodArg) -> Self {
        match m {
            ApMethodArg::Fisher => ApMethod::Fisher,
            ApMethodArg::Strongest => ApMethod::Strongest,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisArg {
    #[value(alias = "num_aps")]
    NumAps,
    #[value(alias = "outlier_fraction")]
    OutlierFraction,
    K,
    #[value(alias = "lambda_ratio")]
    LambdaRatio,
    #[value(alias = "sampling_fraction")]
    SamplingFraction,
}

impl From<AxisArg> for SweepAxis {
    fn from(a: AxisArg) -> Self {
        match a {
            AxisArg::NumAps => SweepAxis::NumAps,
            AxisArg::OutlierFraction => SweepAxis::OutlierFraction,
            AxisArg::K => SweepAxis::K,
            AxisArg::LambdaRatio => SweepAxis::LambdaRatio,
            AxisArg::SamplingFraction => SweepAxis::SamplingFraction,
        }
    }
}

macro_rules! overlay {
    ($ty:ty { $($opt:ident),* ; $($vec:ident),* }) => {
        impl $ty {
            /// Fills fields not given on the command line from `file`.
            pub fn overlay(self, file: Option<Self>) -> Self {
                let Some(file) = file else { return self };
                Self {
                    $($opt: self.$opt.or(file.$opt),)*
                    $($vec: if self.$vec.is_empty() { file.$vec } else { self.$vec },)*
                }
            }
        }
    };
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateArgs {
    /// Scene file; without it a desk-scale scene is drawn from the seed.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// AP count of the generated desk-scale scene.
    #[arg(long)]
    pub num_aps: Option<usize>,
    /// Shadowing standard deviation in dB.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Time samples per (AP, RP) pair.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub test_points: Option<usize>,
    /// Share of APs hit by a +30 dB outlier in each test reading.
    #[arg(long)]
    pub outlier_fraction: Option<f64>,
}
overlay!(SimulateArgs { scene, num_aps, sigma, samples, test_points, outlier_fraction ; });

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalizeArgs {
    #[arg(long)]
    pub map: Option<PathBuf>,
    /// Fingerprint tensor; required for Fisher AP selection.
    #[arg(long)]
    pub tensor: Option<PathBuf>,
    /// Online reading files.
    #[arg(long, num_args = 1..)]
    pub online: Vec<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Number of RP groups.
    #[arg(long)]
    pub k: Option<usize>,
    /// Number of selected APs.
    #[arg(long)]
    pub num_aps: Option<usize>,
    #[arg(long)]
    pub lambda1: Option<f64>,
    #[arg(long)]
    pub lambda2: Option<f64>,
    #[arg(long)]
    pub lambda3: Option<f64>,
    /// Defaults to Fisher with a tensor and strongest without.
    #[arg(long, value_enum)]
    pub ap_method: Option<ApMethodArg>,
    /// Coverage threshold in dBm.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Output JSON (default `<out-dir>/localization.json`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}
overlay!(LocalizeArgs { map, tensor, mode, k, num_aps, lambda1, lambda2, lambda3, ap_method, gamma, out ; online });

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterpolateArgs {
    /// Radio map listing every RP; only entries at the planned RPs are read.
    #[arg(long)]
    pub map: Option<PathBuf>,
    /// `random:V[:seed]` or `periodic:s`.
    #[arg(long)]
    pub plan: Option<String>,
    #[arg(long)]
    pub lambda1: Option<f64>,
    #[arg(long)]
    pub outlier_lambda: Option<f64>,
    /// Keep measured values at the planned RPs.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub pin_samples: Option<bool>,
    /// Output radio map (default `<out-dir>/dense.csv`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Ground-truth dense map for a reconstruction-error report.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}
overlay!(InterpolateArgs { map, plan, lambda1, outlier_lambda, pin_samples, out, truth ; });

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateArgs {
    /// Output of `localize`.
    #[arg(long)]
    pub results: Option<PathBuf>,
    /// Reference radio map for a reconstruction-error report.
    #[arg(long, requires = "estimate_map")]
    pub truth_map: Option<PathBuf>,
    #[arg(long, requires = "truth_map")]
    pub estimate_map: Option<PathBuf>,
}
overlay!(EvaluateArgs { results, truth_map, estimate_map ; });

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepArgs {
    /// Experiment file; built-in desk-scale defaults otherwise.
    #[arg(long)]
    pub experiment: Option<PathBuf>,
    /// Scene seeds, replacing the experiment's list.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    /// Axes to run, replacing the experiment's list.
    #[arg(long, value_delimiter = ',', value_enum)]
    pub axes: Vec<AxisArg>,
    #[arg(long)]
    pub test_points: Option<usize>,
    /// Skip training-sample tuning of the weights.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub no_tune: Option<bool>,
}
overlay!(SweepArgs { experiment, test_points, no_tune ; seeds, axes });

/// Contents of a `--config` file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub strict: Option<bool>,
    pub simulate: Option<SimulateArgs>,
    pub localize: Option<LocalizeArgs>,
    pub interpolate: Option<InterpolateArgs>,
    pub evaluate: Option<EvaluateArgs>,
    pub sweep: Option<SweepArgs>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        } else {
            toml::from_str(&text).map_err(|e| e.to_string())
        };
        parsed.map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }
}
