use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gapk::scoring::{DEFAULT_K_PERCENT, DEFAULT_SIGMA_FLOOR, DEFAULT_WINDOW};
use gapk::{Method, MethodConfig, SmoothingOrder};

/// Pretraining-data detection from per-token log-probability statistics.
#[derive(Debug, Parser)]
#[command(name = "gapk", version, propagate_version = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check that a corpus parses and every record is well formed
    Validate(ValidateArgs),
    /// Score every sample with one method
    Score(ScoreArgs),
    /// Score with several methods and report AUROC and TPR at fixed FPR
    Evaluate(EvaluateArgs),
    /// Sweep k or the smoothing window over a grid
    Sweep(SweepArgs),
    /// Component ablation: Min-K%++, + Top-1, + Smoothing, Gap-K%
    Ablate(TableArgs),
    /// No smoothing vs shuffled-order vs sequential smoothing
    ShuffleControl(ShuffleControlArgs),
    /// Dump token-level scores and selected windows for chosen samples
    Trace(TraceArgs),
    /// Generate a labeled corpus from a synthetic Markov source and a toy model
    Synth(SynthArgs),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum Precision {
    F32,
    #[default]
    F64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Axis {
    K,
    Window,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Corpus file (.jsonl or .jsonl.gz)
    pub corpus: PathBuf,
    /// Print a JSON summary instead of text
    #[arg(long)]
    pub json: bool,
}

/// Hyperparameters shared by every scoring method.
#[derive(Clone, Debug, Args)]
pub struct MethodArgs {
    /// Percentage of lowest-scoring positions averaged
    #[arg(long = "k-percent", visible_alias = "k", default_value_t = DEFAULT_K_PERCENT)]
    pub k_percent: f64,
    /// Sliding-window width for smoothed methods
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    pub window: usize,
    /// Lower bound applied to the per-position standard deviation
    #[arg(long = "sigma-floor", default_value_t = DEFAULT_SIGMA_FLOOR)]
    pub sigma_floor: f64,
    /// Smooth after a seeded shuffle of token order instead of in sequence
    #[arg(long = "shuffle-seed", value_name = "SEED")]
    pub shuffle_seed: Option<u64>,
    /// zlib compression level for the Zlib method [default: corpus metadata, else 6]
    #[arg(long = "zlib-level", value_parser = clap::value_parser!(u32).range(0..=9))]
    pub zlib_level: Option<u32>,
}

impl MethodArgs {
    pub fn config(&self, method: Method) -> MethodConfig {
        let mut c = MethodConfig::new(method)
            .with_k(self.k_percent)
            .with_window(self.window);
        c.sigma_floor = self.sigma_floor;
        if let Some(seed) = self.shuffle_seed {
            c.smoothing_order = SmoothingOrder::Shuffled { seed };
        }
        c
    }
}

#[derive(Clone, Debug, Args)]
pub struct RunArgs {
    /// Worker threads [default: available parallelism]
    #[arg(long)]
    pub workers: Option<usize>,
    /// Scalar type used for scoring
    #[arg(long, value_enum, default_value_t = Precision::F64)]
    pub precision: Precision,
    /// Write machine-readable JSON to stdout instead of a text table
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Corpus file (.jsonl or .jsonl.gz)
    pub corpus: PathBuf,
    /// Scoring method
    #[arg(long, default_value = "gapk", value_parser = parse_method)]
    pub method: Method,
    #[command(flatten)]
    pub params: MethodArgs,
    /// Directory for scores/<method>.jsonl and reports/skipped.json
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Corpus file (.jsonl or .jsonl.gz)
    pub corpus: PathBuf,
    /// Comma-separated methods
    #[arg(
        long,
        value_delimiter = ',',
        value_parser = parse_method,
        default_value = "loss,zlib,neighbor,mink,minkpp,gapk"
    )]
    pub methods: Vec<Method>,
    #[command(flatten)]
    pub params: MethodArgs,
    /// Comma-separated false-positive rates for TPR@FPR
    #[arg(long, value_delimiter = ',', default_value = "0.05")]
    pub fpr: Vec<f64>,
    /// Histogram bins per method in the report
    #[arg(long, default_value_t = gapk::metrics::DEFAULT_HISTOGRAM_BINS)]
    pub bins: usize,
    /// Output directory
    #[arg(long, default_value = "gapk-out")]
    pub out: PathBuf,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Corpus file (.jsonl or .jsonl.gz)
    pub corpus: PathBuf,
    /// Parameter to sweep
    #[arg(long, value_enum)]
    pub axis: Axis,
    /// start:end[:step] (inclusive) or a comma-separated list [default: 5:50:5 for k, 1:10 for window]
    #[arg(long, value_parser = parse_grid)]
    pub grid: Option<Grid>,
    /// Comma-separated methods; those not using the axis are dropped
    #[arg(
        long,
        value_delimiter = ',',
        value_parser = parse_method,
        default_value = "mink,minkpp,gapk"
    )]
    pub methods: Vec<Method>,
    #[command(flatten)]
    pub params: MethodArgs,
    /// Comma-separated false-positive rates for TPR@FPR
    #[arg(long, value_delimiter = ',', default_value = "0.05")]
    pub fpr: Vec<f64>,
    /// Output directory
    #[arg(long, default_value = "gapk-out")]
    pub out: PathBuf,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct TableArgs {
    /// Corpus file (.jsonl or .jsonl.gz)
    pub corpus: PathBuf,
    #[command(flatten)]
    pub params: MethodArgs,
    /// Comma-separated false-positive rates for TPR@FPR
    #[arg(long, value_delimiter = ',', default_value = "0.05")]
    pub fpr: Vec<f64>,
    /// Output directory
    #[arg(long, default_value = "gapk-out")]
    pub out: PathBuf,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct ShuffleControlArgs {
    #[command(flatten)]
    pub table: TableArgs,
    /// Seed for the shuffled-order row
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TraceArgs {
    /// Corpus file (.jsonl or .jsonl.gz)
    pub corpus: PathBuf,
    /// Comma-separated sample ids
    #[arg(long, value_delimiter = ',', required = true)]
    pub ids: Vec<String>,
    /// Scoring method
    #[arg(long, default_value = "gapk", value_parser = parse_method)]
    pub method: Method,
    #[command(flatten)]
    pub params: MethodArgs,
    /// Directory for traces/<sample_id>.json
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// JSON file with any subset of the generator settings; flags override it
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output corpus (.jsonl, or .jsonl.gz to compress)
    #[arg(long)]
    pub out: PathBuf,
    /// Seed for the source chain, sampling and neighbors [default: 42]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Vocabulary size [default: 64]
    #[arg(long = "vocab-size")]
    pub vocab_size: Option<usize>,
    /// Context length of source and model [default: 2]
    #[arg(long)]
    pub order: Option<usize>,
    /// Number of member sequences [default: 500]
    #[arg(long = "n-member")]
    pub n_member: Option<usize>,
    /// Number of nonmember sequences [default: 500]
    #[arg(long = "n-nonmember")]
    pub n_nonmember: Option<usize>,
    /// Tokens per sequence [default: 64]
    #[arg(long = "seq-len")]
    pub seq_len: Option<usize>,
    /// Times each member is counted when fitting [default: 4]
    #[arg(long = "train-passes")]
    pub train_passes: Option<usize>,
    /// Additive smoothing of the fitted model [default: 0.1]
    #[arg(long = "dirichlet-alpha")]
    pub dirichlet_alpha: Option<f64>,
    /// Perturbed copies per sample for neighbor losses, 0 to omit [default: 8]
    #[arg(long = "n-neighbors")]
    pub n_neighbors: Option<usize>,
    /// Fraction of positions resampled per perturbed copy [default: 0.3]
    #[arg(long = "neighbor-mask-frac")]
    pub neighbor_mask_frac: Option<f64>,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: gapk::ConfigError| e.to_string())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Grid(pub Vec<f64>);

pub fn parse_grid(s: &str) -> Result<Grid, String> {
    let num = |p: &str| -> Result<f64, String> {
        let v: f64 = p
            .trim()
            .parse()
            .map_err(|_| format!("invalid number {p:?}"))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(format!("invalid number {p:?}"))
        }
    };
    if !s.contains(':') {
        return s.split(',').map(num).collect::<Result<_, _>>().map(Grid);
    }
    let parts: Vec<&str> = s.split(':').collect();
    let (start, end, step) = match parts[..] {
        [a, b] => (num(a)?, num(b)?, 1.0),
        [a, b, c] => (num(a)?, num(b)?, num(c)?),
        _ => return Err("expected start:end or start:end:step".into()),
    };
    if step <= 0.0 || end < start {
        return Err("grid needs start <= end and a positive step".into());
    }
    let n = ((end - start) / step + 1e-9).floor() as usize;
    Ok(Grid((0..=n).map(|i| start + i as f64 * step).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn grids() {
        assert_eq!(
            parse_grid("1:10").unwrap().0,
            (1..=10).map(f64::from).collect::<Vec<_>>()
        );
        assert_eq!(parse_grid("5:50:5").unwrap().0.len(), 10);
        assert_eq!(parse_grid("0.1:0.3:0.1").unwrap().0.len(), 3);
        assert_eq!(parse_grid("3,1,2").unwrap().0, vec![3.0, 1.0, 2.0]);
        assert!(parse_grid("5:1").is_err());
        assert!(parse_grid("1:5:0").is_err());
        assert!(parse_grid("a:3").is_err());
        assert!(parse_grid("1:2:3:4").is_err());
    }

    #[test]
    fn command_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn help_lists_every_flag() {
        let mut cli = Cli::command();
        cli.build();
        for sub in cli.get_subcommands() {
            let help = sub.clone().render_help().to_string();
            for arg in sub.get_arguments() {
                if let Some(long) = arg.get_long() {
                    assert!(
                        help.contains(&format!("--{long}")),
                        "{} --{long}",
                        sub.get_name()
                    );
                }
            }
        }
    }
}
