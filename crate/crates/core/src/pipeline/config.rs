use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::Format;
use crate::error::ConfigError;
use crate::types::HyperParams;

/// Labelling algorithm run by each worker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    /// Word-centroid similarity against the reference table.
    Wcd,
    /// Lexicon score baseline.
    Lexicon,
    /// Two-centre streaming k-means baseline.
    Kmeans,
}

impl FromStr for Algo {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "wcd" => Ok(Algo::Wcd),
            "lexicon" => Ok(Algo::Lexicon),
            "kmeans" => Ok(Algo::Kmeans),
            other => Err(ConfigError::Invalid(format!("unknown algorithm {other:?}"))),
        }
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algo::Wcd => "wcd",
            Algo::Lexicon => "lexicon",
            Algo::Kmeans => "kmeans",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Input {
    File(PathBuf),
    /// Newline-delimited text on a TCP port.
    Tcp(u16),
}

impl FromStr for Input {
    type Err = ConfigError;

    /// `tcp://:PORT` (or `tcp://HOST:PORT`, host ignored) or a file path.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.strip_prefix("tcp://") {
            Some(rest) => {
                let port = rest.rsplit(':').next().unwrap_or(rest);
                port.parse()
                    .map(Input::Tcp)
                    .map_err(|_| ConfigError::Invalid(format!("bad tcp port in {s:?}")))
            }
            None => Ok(Input::File(PathBuf::from(s))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rate {
    Max,
    PerSecond(f64),
}

impl FromStr for Rate {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "max" {
            return Ok(Rate::Max);
        }
        match s.parse::<f64>() {
            Ok(r) if r > 0.0 && r.is_finite() => Ok(Rate::PerSecond(r)),
            _ => Err(ConfigError::Invalid(format!("rate must be a positive number or \"max\", got {s:?}"))),
        }
    }
}

/// Where timestamps come from. `Logical` stamps both `ts` and `emit_ts`
/// with the tuple's seq, which makes output files reproducible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClockMode {
    Wall,
    Logical,
}

/// Everything a run needs. Echoed as JSON at startup; together with the
/// input it fully determines a single-worker run under the logical clock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub input: Input,
    pub format: Format,
    pub algo: Algo,
    pub workers: usize,
    pub hp: HyperParams,
    pub seed: u64,
    pub rate: Rate,
    /// JSON Lines output; `-` is stdout.
    pub out: Option<PathBuf>,
    pub metrics_out: Option<PathBuf>,
    /// Also print periodic metrics reports to stderr.
    pub metrics_stderr: bool,
    pub reference: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    /// Snapshot to start every model from.
    pub init_model: Option<PathBuf>,
    /// Flush partially filled batches after this long. Applies to live or
    /// rate-limited sources only; a file replayed at max rate never idles.
    pub batch_timeout_ms: u64,
    pub clock: ClockMode,
    pub report_interval_ms: u64,
    pub accuracy_window: usize,
    pub kmeans_calibration: u64,
    /// Bounded queue depth, in batches, in front of each worker.
    pub queue_batches: usize,
    /// Stop after ingesting this many well-formed tuples.
    pub limit: Option<u64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            input: Input::File(PathBuf::new()),
            format: Format::Plain,
            algo: Algo::Wcd,
            workers: 1,
            hp: HyperParams::default(),
            seed: 42,
            rate: Rate::Max,
            out: None,
            metrics_out: None,
            metrics_stderr: false,
            reference: None,
            stopwords: None,
            lexicon: None,
            init_model: None,
            batch_timeout_ms: 500,
            clock: ClockMode::Wall,
            report_interval_ms: 5000,
            accuracy_window: 10_000,
            kmeans_calibration: 500,
            queue_batches: 2,
            limit: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<Vec<String>, ConfigError> {
        if self.workers == 0 {
            return Err(ConfigError::Invalid("workers must be at least 1".into()));
        }
        if self.queue_batches == 0 || self.accuracy_window == 0 || self.report_interval_ms == 0 {
            return Err(ConfigError::Invalid(
                "queue_batches, accuracy_window and report_interval_ms must be positive".into(),
            ));
        }
        if self.algo == Algo::Lexicon && self.lexicon.is_none() {
            return Err(ConfigError::Invalid("the lexicon algorithm needs a lexicon file".into()));
        }
        self.hp.validate()
    }
}
