//! Plain value types shared by every stage of the pipeline.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// Binary sentiment class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Polarity::Positive => f.write_str("positive"),
            Polarity::Negative => f.write_str("negative"),
        }
    }
}

/// Identity of a tuple as it travels through the stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Origin {
    pub seq: u64,
    pub ts: u64,
}

/// One timestamped text item as ingested.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tuple {
    /// Milliseconds since the unix epoch.
    pub ts: u64,
    /// Assigned by the source, strictly increasing.
    pub seq: u64,
    pub text: String,
    /// Ground truth, for evaluation only.
    pub true_label: Option<Polarity>,
}

impl Tuple {
    pub fn origin(&self) -> Origin {
        Origin {
            seq: self.seq,
            ts: self.ts,
        }
    }
}

/// Filtered token sequence of one tuple. Carries no ground truth.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanTuple {
    pub origin: Origin,
    pub tokens: Vec<String>,
}

/// A tuple together with its polarity decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelledTuple {
    pub origin: Origin,
    pub label: Polarity,
    pub sum_pos: f32,
    pub sum_neg: f32,
    pub known_token_count: usize,
    /// Wall-clock emit time, milliseconds since the unix epoch.
    pub emit_ts: u64,
}

/// Fixed positive and negative anchor words.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceTable {
    positive: Vec<String>,
    negative: Vec<String>,
}

const DEFAULT_REFERENCE: &str = include_str!("../data/reference_table.txt");

impl ReferenceTable {
    pub fn new(positive: Vec<String>, negative: Vec<String>) -> Result<Self, ConfigError> {
        if positive.is_empty() || negative.is_empty() {
            return Err(ConfigError::Reference(
                "both positive and negative lists must be non-empty".into(),
            ));
        }
        let pos: HashSet<&str> = positive.iter().map(String::as_str).collect();
        if let Some(w) = negative.iter().find(|w| pos.contains(w.as_str())) {
            return Err(ConfigError::Reference(format!(
                "word {w:?} is listed as both positive and negative"
            )));
        }
        Ok(ReferenceTable { positive, negative })
    }

    /// Parses the `[positive]` / `[negative]` section format.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut positive = Vec::new();
        let mut negative = Vec::new();
        let mut section: Option<Polarity> = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            match line {
                "[positive]" => section = Some(Polarity::Positive),
                "[negative]" => section = Some(Polarity::Negative),
                word => {
                    let word = word.to_lowercase();
                    match section {
                        Some(Polarity::Positive) => positive.push(word),
                        Some(Polarity::Negative) => negative.push(word),
                        None => {
                            return Err(ConfigError::Reference(format!(
                                "line {}: word outside of a section",
                                lineno + 1
                            )))
                        }
                    }
                }
            }
        }
        Self::new(positive, negative)
    }

    pub fn positive(&self) -> &[String] {
        &self.positive
    }

    pub fn negative(&self) -> &[String] {
        &self.negative
    }

    pub fn contains(&self, word: &str) -> bool {
        self.positive.iter().chain(&self.negative).any(|w| w == word)
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.positive.iter().chain(&self.negative).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.positive.len() + self.negative.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Default for ReferenceTable {
    fn default() -> Self {
        Self::parse(DEFAULT_REFERENCE).expect("bundled reference table is valid")
    }
}

/// Model management strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// One private model per worker.
    Local,
    /// One shared model, every batch trains it under a lock.
    Global,
    /// Private models periodically merged through a shared one.
    Hybrid,
}

impl FromStr for Strategy {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "local" => Ok(Strategy::Local),
            "global" => Ok(Strategy::Global),
            "hybrid" => Ok(Strategy::Hybrid),
            other => Err(ConfigError::Invalid(format!("unknown strategy {other:?}"))),
        }
    }
}

/// Componentwise combination rule used when merging two vectors of one word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    Mean,
    Min,
    Max,
}

impl FromStr for Pooling {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean" => Ok(Pooling::Mean),
            "min" => Ok(Pooling::Min),
            "max" => Ok(Pooling::Max),
            other => Err(ConfigError::Invalid(format!("unknown pooling {other:?}"))),
        }
    }
}

/// When workers synchronize with the shared model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergeTrigger {
    /// Wall-clock period.
    Period(Duration),
    /// Every k batches processed by a worker. Deterministic.
    EveryBatches(u32),
}

impl MergeTrigger {
    fn is_positive(&self) -> bool {
        match *self {
            MergeTrigger::Period(d) => !d.is_zero(),
            MergeTrigger::EveryBatches(k) => k > 0,
        }
    }
}

/// Tunable knobs of the engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperParams {
    /// Training context window.
    pub window: usize,
    pub dim: usize,
    pub batch_size: usize,
    /// Trend detection window, in tuples.
    pub tdw: usize,
    pub merge: MergeTrigger,
    pub min_word_count: u64,
    /// Vocabulary-entry cap enforced by LRU pruning. `None` disables pruning.
    pub lru_cache_size: Option<usize>,
    pub negative_samples: usize,
    pub learning_rate: f32,
    /// Frequent-word subsampling threshold. `None` disables subsampling.
    pub subsample: Option<f64>,
    pub strategy: Strategy,
    pub pooling: Pooling,
    /// Weighted-coefficient adjustment step. Zero disables trend detection.
    pub ttd_step: f32,
    pub ttd_hysteresis: f32,
    pub wc_min: f32,
    pub wc_max: f32,
    /// Divide each similarity sum by the number of covered reference words.
    pub normalize_reference_sums: bool,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            window: 5,
            dim: 20,
            batch_size: 2000,
            tdw: 1000,
            merge: MergeTrigger::Period(Duration::from_secs(30)),
            min_word_count: 5,
            lru_cache_size: Some(200_000),
            negative_samples: 5,
            learning_rate: 0.025,
            subsample: None,
            strategy: Strategy::Hybrid,
            pooling: Pooling::Mean,
            ttd_step: 0.05,
            ttd_hysteresis: 0.05,
            wc_min: 0.5,
            wc_max: 1.5,
            normalize_reference_sums: false,
        }
    }
}

impl HyperParams {
    /// Rejects non-positive values; returns warnings for values outside the
    /// ranges the engine was evaluated with.
    pub fn validate(&self) -> Result<Vec<String>, ConfigError> {
        let positive: [(&str, f64); 6] = [
            ("window", self.window as f64),
            ("dim", self.dim as f64),
            ("batch_size", self.batch_size as f64),
            ("tdw", self.tdw as f64),
            ("min_word_count", self.min_word_count as f64),
            ("learning_rate", f64::from(self.learning_rate)),
        ];
        for (name, value) in positive {
            if !(value > 0.0) || !value.is_finite() {
                return Err(ConfigError::Invalid(format!("{name} must be positive, got {value}")));
            }
        }
        if self.negative_samples == 0 {
            return Err(ConfigError::Invalid("negative_samples must be positive".into()));
        }
        if self.lru_cache_size == Some(0) {
            return Err(ConfigError::Invalid("lru_cache_size must be positive".into()));
        }
        if !self.merge.is_positive() {
            return Err(ConfigError::Invalid("merge period must be positive".into()));
        }
        if let Some(t) = self.subsample {
            if !(t > 0.0) {
                return Err(ConfigError::Invalid("subsample threshold must be positive".into()));
            }
        }
        if !(self.ttd_step >= 0.0 && self.ttd_hysteresis >= 0.0) {
            return Err(ConfigError::Invalid("trend step and hysteresis must be >= 0".into()));
        }
        if !(self.wc_min > 0.0 && self.wc_min <= 1.0 && self.wc_max >= 1.0) {
            return Err(ConfigError::Invalid(
                "weighted coefficient bounds must satisfy 0 < wc_min <= 1 <= wc_max".into(),
            ));
        }

        let mut warnings = Vec::new();
        let mut check = |name: &str, value: f64, lo: f64, hi: f64| {
            if value < lo || value > hi {
                warnings.push(format!("{name}={value} is outside the usual range {lo}..={hi}"));
            }
        };
        check("window", self.window as f64, 1.0, 10.0);
        check("dim", self.dim as f64, 10.0, 500.0);
        check("batch_size", self.batch_size as f64, 200.0, 5000.0);
        check("tdw", self.tdw as f64, 200.0, 2000.0);
        check("min_word_count", self.min_word_count as f64, 1.0, 20.0);
        if let MergeTrigger::Period(p) = self.merge {
            check("merge_period", p.as_secs_f64(), 20.0, 90.0);
        }
        Ok(warnings)
    }
}
