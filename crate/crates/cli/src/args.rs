use std::path::PathBuf;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use streamlabel_core::dataset::Format;
use streamlabel_core::pipeline::{Algo, ClockMode, Input, PipelineConfig, Rate};
use streamlabel_core::types::{MergeTrigger, Pooling, Strategy};

#[derive(Debug, Parser)]
#[command(name = "streamlabel", version, about = "Online polarity labelling of text streams")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Label a stream.
    Run(RunArgs),
    /// Run experiment grids and write summary CSVs.
    Bench(BenchArgs),
    /// Derive skewed or length-bucketed datasets.
    #[command(subcommand)]
    Regen(RegenCommand),
    /// Train over an input and save the final model.
    Snapshot(SnapshotArgs),
    /// Inspect a saved model.
    Restore(RestoreArgs),
}

/// Knobs shared by `run`, `snapshot` and `bench`.
#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct ModelArgs {
    /// Labelling algorithm.
    #[arg(long, default_value = "wcd", value_parser = parse::<Algo>)]
    pub algo: Algo,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[arg(long, default_value = "hybrid", value_parser = parse::<Strategy>)]
    pub strategy: Strategy,
    #[arg(long, default_value = "mean", value_parser = parse::<Pooling>)]
    pub pooling: Pooling,
    /// Merge period in seconds.
    #[arg(long, value_name = "SECS", conflicts_with = "merge_every_k")]
    pub merge_period: Option<f64>,
    /// Merge every K batches per worker.
    #[arg(long, value_name = "K")]
    pub merge_every_k: Option<u32>,
    #[arg(long, value_name = "B", default_value_t = 2000)]
    pub batch: usize,
    #[arg(long, value_name = "D", default_value_t = 20)]
    pub dim: usize,
    /// Training context window.
    #[arg(long, value_name = "W", default_value_t = 5)]
    pub window: usize,
    /// Trend detection window, in labels.
    #[arg(long, value_name = "N", default_value_t = 1000)]
    pub tdw: usize,
    /// Coefficient step per trend window.
    #[arg(long, value_name = "S", conflicts_with = "no_ttd")]
    pub ttd_step: Option<f32>,
    /// Disable trend detection.
    #[arg(long)]
    pub no_ttd: bool,
    #[arg(long, value_name = "H", default_value_t = 0.05)]
    pub ttd_hysteresis: f32,
    /// Minimum count before a word is trained.
    #[arg(long, value_name = "N", default_value_t = 5)]
    pub mwc: u64,
    /// Vocabulary cap; 0 disables pruning.
    #[arg(long, value_name = "C", default_value_t = 200_000)]
    pub lru_cap: usize,
    #[arg(long, value_name = "K", default_value_t = 5)]
    pub negative: usize,
    #[arg(long, value_name = "ALPHA", default_value_t = 0.025)]
    pub learning_rate: f32,
    /// Frequent-word subsampling threshold.
    #[arg(long, value_name = "T")]
    pub subsample: Option<f64>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, value_name = "PATH")]
    pub reference: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub stopwords: Option<PathBuf>,
    /// word<TAB>score or SentiWordNet file.
    #[arg(long, value_name = "PATH")]
    pub lexicon: Option<PathBuf>,
    /// Divide each reference sum by the number of reference words present.
    #[arg(long)]
    pub normalize_reference_sums: bool,
    /// Snapshot every model starts from.
    #[arg(long, value_name = "PATH")]
    pub init_model: Option<PathBuf>,
    /// Stamp ts and emit_ts with seq; makes output reproducible.
    #[arg(long)]
    pub logical_clock: bool,
    /// Tuples after which k-means fixes its cluster names.
    #[arg(long, value_name = "N", default_value_t = 500)]
    pub kmeans_calibration: u64,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct IoArgs {
    /// File path or tcp://:PORT.
    #[arg(long, value_parser = parse::<Input>)]
    pub input: Input,
    #[arg(long, default_value = "plain", value_parser = parse::<Format>)]
    pub format: Format,
    /// Tuples per second, or max.
    #[arg(long, value_name = "R|max", default_value = "max", value_parser = parse::<Rate>)]
    pub rate: Rate,
    /// JSON Lines output; - is stdout.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub metrics_out: Option<PathBuf>,
    /// Also print periodic metrics to stderr.
    #[arg(long)]
    pub metrics_stderr: bool,
    #[arg(long, value_name = "MS", default_value_t = 5000)]
    pub report_interval_ms: u64,
    /// Flush partial batches after this long on live or rate-limited input.
    #[arg(long, value_name = "MS", default_value_t = 500)]
    pub batch_timeout_ms: u64,
    /// Stop after this many tuples.
    #[arg(long, value_name = "N")]
    pub limit: Option<u64>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// key=value file; flags given on the command line win.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub io: IoArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Save the final model here.
    #[arg(long, value_name = "PATH")]
    pub snapshot_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SnapshotArgs {
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub io: IoArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Where to write the model.
    #[arg(long, value_name = "PATH")]
    pub model_out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RestoreArgs {
    #[arg(long, value_name = "PATH")]
    pub model: PathBuf,
    /// Print the nearest words to this one.
    #[arg(long, value_name = "WORD")]
    pub similar: Option<String>,
    #[arg(long, default_value_t = 10)]
    pub top: usize,
    /// Write word vectors in word2vec text format.
    #[arg(long, value_name = "PATH")]
    pub export: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Experiment name, or all.
    #[arg(long, default_value = "all")]
    pub experiment: String,
    /// Labelled dataset; omit to use a synthetic corpus.
    #[arg(long, value_name = "PATH")]
    pub input: Option<PathBuf>,
    #[arg(long, default_value = "yelp", value_parser = parse::<Format>)]
    pub format: Format,
    /// Size of the synthetic corpus.
    #[arg(long, value_name = "N", default_value_t = 20_000)]
    pub synthetic: usize,
    /// Use only the first N records of the input, after shuffling.
    #[arg(long, value_name = "N")]
    pub limit: Option<usize>,
    /// Shuffle the input with the seed before use.
    #[arg(long)]
    pub shuffle: bool,
    #[arg(long, value_name = "DIR", default_value = "bench-out")]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Subcommand)]
pub enum RegenCommand {
    /// Subset with a given positive share.
    Skew {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_parser = parse::<Format>)]
        format: Format,
        /// Positive share in [0, 1].
        #[arg(long)]
        fraction: f64,
        /// Cap on output size.
        #[arg(long)]
        total: Option<usize>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// One file per token-length bucket.
    Length {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_parser = parse::<Format>)]
        format: Format,
        /// Inclusive upper bounds.
        #[arg(long, value_delimiter = ',', default_value = "30,100,300")]
        bounds: Vec<usize>,
        #[arg(long, value_name = "PATH")]
        stopwords: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn parse<T: std::str::FromStr>(s: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e: T::Err| e.to_string())
}

impl ModelArgs {
    pub fn apply(&self, cfg: &mut PipelineConfig) {
        let hp = &mut cfg.hp;
        hp.window = self.window;
        hp.dim = self.dim;
        hp.batch_size = self.batch;
        hp.tdw = self.tdw;
        if let Some(k) = self.merge_every_k {
            hp.merge = MergeTrigger::EveryBatches(k);
        } else if let Some(p) = self.merge_period {
            hp.merge = MergeTrigger::Period(Duration::from_secs_f64(p.max(0.0)));
        }
        hp.min_word_count = self.mwc;
        hp.lru_cache_size = (self.lru_cap > 0).then_some(self.lru_cap);
        hp.negative_samples = self.negative;
        hp.learning_rate = self.learning_rate;
        hp.subsample = self.subsample;
        hp.strategy = self.strategy;
        hp.pooling = self.pooling;
        if self.no_ttd {
            hp.ttd_step = 0.0;
        } else if let Some(s) = self.ttd_step {
            hp.ttd_step = s;
        }
        hp.ttd_hysteresis = self.ttd_hysteresis;
        hp.normalize_reference_sums = self.normalize_reference_sums;
        cfg.algo = self.algo;
        cfg.workers = self.workers;
        cfg.seed = self.seed;
        cfg.reference = self.reference.clone();
        cfg.stopwords = self.stopwords.clone();
        cfg.lexicon = self.lexicon.clone();
        cfg.init_model = self.init_model.clone();
        cfg.kmeans_calibration = self.kmeans_calibration;
        if self.logical_clock {
            cfg.clock = ClockMode::Logical;
        }
    }
}

impl IoArgs {
    pub fn apply(&self, cfg: &mut PipelineConfig) {
        cfg.input = self.input.clone();
        cfg.format = self.format;
        cfg.rate = self.rate;
        cfg.out = self.out.clone();
        cfg.metrics_out = self.metrics_out.clone();
        cfg.metrics_stderr = self.metrics_stderr;
        cfg.report_interval_ms = self.report_interval_ms;
        cfg.batch_timeout_ms = self.batch_timeout_ms;
        cfg.limit = self.limit;
    }
}

pub fn build_config(io: &IoArgs, model: &ModelArgs) -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    io.apply(&mut cfg);
    model.apply(&mut cfg);
    cfg
}
