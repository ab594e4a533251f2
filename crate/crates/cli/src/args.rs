//! Command-line surface and the matching config-file sections.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use tann::baselines::ArchKind;
use tann::data::{Gate, Weighting};

#[derive(Debug, Parser)]
#[command(
    name = "tann",
    version,
    about = "Trie-augmented neural network experiments"
)]
pub struct Cli {
    /// Output directory (falls back to TANN_OUT_DIR, then ./tann-out/<command>).
    #[arg(long, global = true, env = "TANN_OUT_DIR")]
    pub out: Option<PathBuf>,
    /// TOML file with `[train]` and per-command sections; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for independent runs (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a trie and a single network on a logic gate and compare their losses.
    Gate(GateArgs),
    /// Train tries of several depths on a logic gate.
    DepthSweep(SweepArgs),
    /// Train the comparison architectures standalone and embedded in a trie.
    Compare(CompareArgs),
    /// Train text classifiers on a local labelled corpus.
    Text(TextArgs),
    /// Print the inference cost estimate for a balanced trie.
    Cost(CostArgs),
    /// Render trace CSVs as an SVG line plot.
    Plot(PlotArgs),
    /// Rerun the experiment recorded in a manifest and compare outputs.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepModeArg {
    RouteLocal,
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RoutingArg {
    Bits,
    Threshold,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerArg {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelArg {
    Ffn,
    Rnn,
}

impl From<ModelArg> for ArchKind {
    fn from(m: ModelArg) -> ArchKind {
        match m {
            ModelArg::Ffn => ArchKind::TextFfn,
            ModelArg::Rnn => ArchKind::TextRnn,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightingArg {
    Tf,
    Tfidf,
}

impl From<WeightingArg> for Weighting {
    fn from(w: WeightingArg) -> Weighting {
        match w {
            WeightingArg::Tf => Weighting::Tf,
            WeightingArg::Tfidf => Weighting::TfIdf,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FormatArg {
    Lines,
    Dir,
}

/// Training flags shared by the experiment commands.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct TrainArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Single seed; shorthand for `--seeds S`.
    #[arg(long, conflicts_with = "seeds")]
    pub seed: Option<u64>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub seeds: Option<Vec<u64>>,
    #[arg(long, value_enum)]
    pub step_mode: Option<StepModeArg>,
    #[arg(long, value_enum)]
    pub routing: Option<RoutingArg>,
    /// Feature threshold used by `--routing threshold`.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long, value_enum)]
    pub optimizer: Option<OptimizerArg>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Reshuffle the training order every epoch.
    #[arg(long)]
    pub shuffle: Option<bool>,
}

impl TrainArgs {
    /// Field-wise `self` where set, otherwise `fallback`.
    pub fn or(self, fallback: TrainArgs) -> TrainArgs {
        let seeds = match (self.seeds, self.seed) {
            (Some(s), _) => Some(s),
            (None, Some(s)) => Some(vec![s]),
            (None, None) => fallback.seeds.or(fallback.seed.map(|s| vec![s])),
        };
        TrainArgs {
            epochs: self.epochs.or(fallback.epochs),
            lr: self.lr.or(fallback.lr),
            seed: None,
            seeds,
            step_mode: self.step_mode.or(fallback.step_mode),
            routing: self.routing.or(fallback.routing),
            threshold: self.threshold.or(fallback.threshold),
            optimizer: self.optimizer.or(fallback.optimizer),
            batch_size: self.batch_size.or(fallback.batch_size),
            shuffle: self.shuffle.or(fallback.shuffle),
        }
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct GateOpts {
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Fail unless the trie's median final loss is below the single network's.
    #[arg(long)]
    pub check: bool,
}

#[derive(Debug, Args)]
pub struct GateArgs {
    /// xor, and or or.
    pub gate: Gate,
    #[command(flatten)]
    pub opts: GateOpts,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct SweepOpts {
    /// Comma-separated trie depths.
    #[arg(long = "depth", alias = "depths", value_delimiter = ',', num_args = 1..)]
    pub depths: Option<Vec<usize>>,
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Fail unless every run classifies all four patterns.
    #[arg(long)]
    pub check: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    pub gate: Gate,
    #[command(flatten)]
    pub opts: SweepOpts,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct CompareOpts {
    /// `all` or one of simple-dropout, cnn, rnn, complex.
    #[arg(long)]
    pub arch: Option<String>,
    #[arg(long)]
    pub depth: Option<usize>,
    /// Gate to train on.
    #[arg(long)]
    pub gate: Option<Gate>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub opts: CompareOpts,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct TextOpts {
    /// Corpus path: a `label<TAB>text` file or a directory per class.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    #[arg(long, value_enum)]
    pub model: Option<ModelArg>,
    /// Insert 50% dropout after each hidden layer.
    #[arg(long)]
    pub dropout: bool,
    /// Comma-separated trie depths.
    #[arg(long = "depth", alias = "depths", value_delimiter = ',', num_args = 1..)]
    pub depths: Option<Vec<usize>>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
    #[arg(long)]
    pub max_features: Option<usize>,
    #[arg(long, value_enum)]
    pub weighting: Option<WeightingArg>,
    /// Fail when any depth's held-out accuracy falls below this value.
    #[arg(long)]
    pub min_accuracy: Option<f64>,
    /// Also write the vectorized dataset as dataset.csv.
    #[arg(long)]
    pub dump_dataset: bool,
}

#[derive(Debug, Args)]
pub struct TextArgs {
    #[command(flatten)]
    pub opts: TextOpts,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Args)]
pub struct CostArgs {
    #[arg(long, default_value_t = 3)]
    pub depth: usize,
    /// Neurons per node network (N).
    #[arg(long, default_value_t = 21)]
    pub neurons: i64,
    /// Layers per node network (L).
    #[arg(long, default_value_t = 2)]
    pub layers: i64,
    /// Cost per neuron (C).
    #[arg(long, default_value_t = 1.0)]
    pub per_neuron_cost: f64,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Trace CSVs with header `epoch,mean_loss,last_loss`.
    #[arg(required = true)]
    pub traces: Vec<PathBuf>,
    /// Output SVG path.
    #[arg(short = 'o', long = "output")]
    pub output: PathBuf,
    #[arg(long, default_value = "training loss")]
    pub title: String,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
}

/// Contents of a `--config` file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct ConfigFile {
    pub train: TrainArgs,
    pub gate: GateOpts,
    pub depth_sweep: SweepOpts,
    pub compare: CompareOpts,
    pub text: TextOpts,
}
