use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "sumprod", version, about = "Monte Carlo simulator for the sum-product shadow fading model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one scenario and report its dB standard deviation and K-S distance.
    Run(RunArgs),
    /// Sweep K or N over a grid of models and distributions.
    Sweep(SweepArgs),
    /// Regenerate one of the reference tables or figure data sets.
    Reproduce(ReproduceArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Table2,
    Table3,
    Fig4,
    Fig6,
    Fig7,
    Fig8,
    Fig9,
}

impl Target {
    pub fn name(self) -> &'static str {
        match self {
            Target::Table2 => "table2",
            Target::Table3 => "table3",
            Target::Fig4 => "fig4",
            Target::Fig6 => "fig6",
            Target::Fig7 => "fig7",
            Target::Fig8 => "fig8",
            Target::Fig9 => "fig9",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

/// Options shared by every command.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Flat `key = value` file; flags take precedence over its keys.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Realizations per cell.
    #[arg(long)]
    pub q: Option<usize>,
    /// Report format.
    #[arg(long, value_enum)]
    pub out: Option<OutputFormat>,
    /// Output directory (default: $SUMPROD_OUT_DIR, else the working directory).
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
    /// Worker thread cap; never changes results.
    #[arg(long)]
    pub threads: Option<usize>,
}

/// Scenario parameters. Values are kept as text so that flags and config
/// keys share one validation path.
#[derive(Debug, Clone, Default, Args)]
pub struct ScenarioArgs {
    /// sumprod, prod, sum, los, keyhole or cluster.
    #[arg(long)]
    pub model: Option<String>,
    /// Receive rays.
    #[arg(long)]
    pub n: Option<String>,
    /// Transmit rays (defaults to N).
    #[arg(long)]
    pub m: Option<String>,
    /// Coupling layers.
    #[arg(long)]
    pub k: Option<String>,
    /// Amplitude distribution of a, b and S, e.g. `beta:1,1`, `r:10`, `l:1,1`.
    /// Repeat to give a sweep grid.
    #[arg(long, action = clap::ArgAction::Append)]
    pub dist: Vec<String>,
    #[arg(long)]
    pub dist_a: Option<String>,
    #[arg(long)]
    pub dist_b: Option<String>,
    #[arg(long)]
    pub dist_s: Option<String>,
    /// Divide every coupling layer by √N.
    #[arg(long)]
    pub normalize: bool,
    /// Direct-ray path gain in (0, 1] (los).
    #[arg(long)]
    pub pl: Option<String>,
    /// `layer-count` or `layer-index` root of the direct-ray gain (los).
    #[arg(long)]
    pub los_root: Option<String>,
    /// 1-based row-vector layer (keyhole).
    #[arg(long)]
    pub keyhole_index: Option<String>,
    /// Comma-separated cluster sizes summing to N (cluster).
    #[arg(long)]
    pub clusters: Option<String>,
    /// Scalar `s·I` cluster blocks (cluster).
    #[arg(long)]
    pub cluster_scalar: bool,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Also write the centered empirical and fitted-normal CDF.
    #[arg(long)]
    pub cdf: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Swept parameter: k or n.
    #[arg(long)]
    pub vary: Option<String>,
    /// Comma-separated values of the swept parameter.
    #[arg(long)]
    pub values: Option<String>,
    /// Comma-separated models (default: sumprod,prod).
    #[arg(long)]
    pub models: Option<String>,
}

#[derive(Debug, Args)]
pub struct ReproduceArgs {
    #[arg(value_enum)]
    pub target: Target,
    #[command(flatten)]
    pub common: CommonArgs,
    /// Override the layer grid (table2, fig6, fig9) or the fixed K (table3, fig8).
    #[arg(long)]
    pub ks: Option<String>,
    /// Component distributions (fig4).
    #[arg(long)]
    pub dist_a: Option<String>,
    #[arg(long)]
    pub dist_b: Option<String>,
    #[arg(long)]
    pub dist_s: Option<String>,
    /// Search K in {1,5,10,20,40} for the best match to the reference ray sweep (table3, fig8).
    #[arg(long)]
    pub calibrate: bool,
    /// Realizations per cell during calibration.
    #[arg(long)]
    pub calibration_q: Option<usize>,
}
