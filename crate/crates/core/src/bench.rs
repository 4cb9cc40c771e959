//! Experiment grids and a synthetic review corpus.
//!
//! Every grid point is one pipeline run over in-memory records; each run
//! yields a [`BenchRow`]. Rows serialize to CSV with a header.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dataset::Record;
use crate::error::{ConfigError, PipelineError};
use crate::metrics::{regen_by_length, regen_skew, LengthBuckets};
use crate::pipeline::{Algo, Pipeline, PipelineConfig, Resources};
use crate::preprocess::{tokenize, Stopwords};
use crate::types::{Polarity, ReferenceTable, Strategy};

/// One grid point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub experiment: String,
    pub dataset: String,
    /// Value of the swept parameter, as text.
    pub param: String,
    pub algo: String,
    pub strategy: String,
    pub workers: usize,
    pub batch: usize,
    pub dim: usize,
    pub ttd: bool,
    pub tuples: u64,
    pub elapsed_s: f64,
    pub throughput: f64,
    pub p95_latency_ms: Option<f64>,
    pub accuracy: Option<f64>,
    pub window_accuracy: Option<f64>,
    pub f1: Option<f64>,
}

pub fn write_csv<W: Write>(out: W, rows: &[BenchRow]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(std::io::Error::other)?;
    }
    w.flush()
}

/// Runs one configuration over `records` and summarizes it.
pub fn run_case(
    experiment: &str,
    dataset: &str,
    param: &str,
    cfg: &PipelineConfig,
    res: &Resources,
    records: &[Record],
) -> Result<BenchRow, PipelineError> {
    let p = Pipeline::with_resources(cfg.clone(), res.clone())?;
    let s = p.run_records(records.to_vec())?;
    Ok(BenchRow {
        experiment: experiment.into(),
        dataset: dataset.into(),
        param: param.into(),
        algo: cfg.algo.to_string(),
        strategy: format!("{:?}", cfg.hp.strategy).to_lowercase(),
        workers: cfg.workers,
        batch: cfg.hp.batch_size,
        dim: cfg.hp.dim,
        ttd: cfg.hp.ttd_step > 0.0,
        tuples: s.labelled,
        elapsed_s: s.elapsed.as_secs_f64(),
        throughput: s.throughput(),
        p95_latency_ms: s.report.p95_latency_ms,
        accuracy: s.report.accuracy,
        window_accuracy: s.report.window_accuracy,
        f1: s.report.f1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    /// wcd, lexicon, kmeans.
    Algos,
    /// local, hybrid, global.
    Strategies,
    /// Worker counts 1, 2, 4, 8.
    Workers,
    /// Positive shares 0 to 1, with and without trend detection.
    Skew,
    /// Token-length buckets.
    Length,
    /// b in 200, 500, 1000, 2000, 5000.
    Batch,
    /// d in 10, 20, 50, 100, 500.
    Dim,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::Algos,
        Experiment::Strategies,
        Experiment::Workers,
        Experiment::Skew,
        Experiment::Length,
        Experiment::Batch,
        Experiment::Dim,
    ];
}

impl FromStr for Experiment {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.to_string() == s)
            .ok_or_else(|| ConfigError::Invalid(format!("unknown experiment {s:?}")))
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Experiment::Algos => "algos",
            Experiment::Strategies => "strategies",
            Experiment::Workers => "workers",
            Experiment::Skew => "skew",
            Experiment::Length => "length",
            Experiment::Batch => "batch",
            Experiment::Dim => "dim",
        })
    }
}

pub const SKEW_FRACTIONS: [f64; 7] = [0.0, 0.125, 0.25, 0.5, 0.75, 0.875, 1.0];
pub const WORKER_COUNTS: [usize; 4] = [1, 2, 4, 8];
pub const BATCH_SIZES: [usize; 5] = [200, 500, 1000, 2000, 5000];
pub const DIMS: [usize; 5] = [10, 20, 50, 100, 500];

/// Runs one experiment grid. `base` supplies every knob that is not swept.
/// The lexicon point of the `algos` grid is skipped when `res` has no
/// lexicon.
pub fn run_experiment(
    exp: Experiment,
    dataset: &str,
    records: &[Record],
    base: &PipelineConfig,
    res: &Resources,
) -> Result<Vec<BenchRow>, PipelineError> {
    let name = exp.to_string();
    let mut rows = Vec::new();
    let mut case = |param: String, cfg: PipelineConfig, recs: &[Record]| -> Result<(), PipelineError> {
        log::info!("{name} {param}: {} tuples", recs.len());
        rows.push(run_case(&name, dataset, &param, &cfg, res, recs)?);
        Ok(())
    };
    match exp {
        Experiment::Algos => {
            for algo in [Algo::Wcd, Algo::Lexicon, Algo::Kmeans] {
                if algo == Algo::Lexicon && res.lexicon.is_none() {
                    log::warn!("no lexicon loaded; skipping the lexicon baseline");
                    continue;
                }
                case(algo.to_string(), PipelineConfig { algo, ..base.clone() }, records)?;
            }
        }
        Experiment::Strategies => {
            for strategy in [Strategy::Local, Strategy::Hybrid, Strategy::Global] {
                let mut cfg = base.clone();
                cfg.hp.strategy = strategy;
                case(format!("{strategy:?}").to_lowercase(), cfg, records)?;
            }
        }
        Experiment::Workers => {
            for workers in WORKER_COUNTS {
                case(workers.to_string(), PipelineConfig { workers, ..base.clone() }, records)?;
            }
        }
        Experiment::Skew => {
            for f in SKEW_FRACTIONS {
                let subset = regen_skew(records, f, None, base.seed);
                for ttd in [true, false] {
                    let mut cfg = base.clone();
                    if !ttd {
                        cfg.hp.ttd_step = 0.0;
                    }
                    case(format!("{f}"), cfg, &subset)?;
                }
            }
        }
        Experiment::Length => {
            let buckets = LengthBuckets::default();
            let stop = &res.stopwords;
            let parts = regen_by_length(records, &buckets, |t| tokenize(t, stop).len());
            for (i, part) in parts.iter().enumerate() {
                if !part.is_empty() {
                    case(buckets.label(i), base.clone(), part)?;
                }
            }
        }
        Experiment::Batch => {
            for b in BATCH_SIZES {
                let mut cfg = base.clone();
                cfg.hp.batch_size = b;
                case(b.to_string(), cfg, records)?;
            }
        }
        Experiment::Dim => {
            for d in DIMS {
                let mut cfg = base.clone();
                cfg.hp.dim = d;
                case(d.to_string(), cfg, records)?;
            }
        }
    }
    Ok(rows)
}

/// Seeded in-place shuffle.
pub fn shuffle_records(records: &mut [Record], seed: u64) {
    records.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
}

/// Vocabulary of the synthetic corpus.
struct Pools {
    pos: Vec<String>,
    neg: Vec<String>,
    neutral: Vec<String>,
}

const ONSETS: [&str; 16] = ["b", "br", "c", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "st", "t", "v"];
const VOWELS: [&str; 6] = ["a", "e", "i", "o", "u", "ai"];
const CODAS: [&str; 8] = ["", "n", "r", "s", "l", "m", "t", "x"];

fn pseudo_word(rng: &mut ChaCha8Rng) -> String {
    let syllables = rng.gen_range(2..=3);
    let mut w = String::new();
    for _ in 0..syllables {
        w.push_str(ONSETS[rng.gen_range(0..ONSETS.len())]);
        w.push_str(VOWELS[rng.gen_range(0..VOWELS.len())]);
        w.push_str(CODAS[rng.gen_range(0..CODAS.len())]);
    }
    w
}

impl Pools {
    fn new(reference: &ReferenceTable, stopwords: &Stopwords, rng: &mut ChaCha8Rng) -> Self {
        let mut seen: std::collections::HashSet<String> = reference.words().map(str::to_string).collect();
        let mut fresh = |n: usize, rng: &mut ChaCha8Rng| -> Vec<String> {
            let mut out = Vec::with_capacity(n);
            while out.len() < n {
                let w = pseudo_word(rng);
                if !stopwords.contains(&w) && seen.insert(w.clone()) {
                    out.push(w);
                }
            }
            out
        };
        let mut pos = reference.positive().to_vec();
        pos.extend(fresh(40, rng));
        let mut neg = reference.negative().to_vec();
        neg.extend(fresh(40, rng));
        let neutral = fresh(600, rng);
        Pools { pos, neg, neutral }
    }
}

/// Knobs of [`synthetic_reviews`].
#[derive(Debug, Clone, Copy)]
pub struct SyntheticSpec {
    pub records: usize,
    pub pos_fraction: f64,
    /// Token count range per text, inclusive.
    pub min_len: usize,
    pub max_len: usize,
    /// Chance that a token is drawn from the text's polarity pool.
    pub polar_share: f64,
    /// Chance that the stated label is flipped.
    pub label_noise: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            records: 10_000,
            pos_fraction: 0.5,
            min_len: 8,
            max_len: 60,
            polar_share: 0.2,
            label_noise: 0.05,
            seed: 7,
        }
    }
}

/// Labelled reviews over a planted vocabulary: each polarity has its own
/// word pool seeded with the reference words, the rest of a text is drawn
/// from a shared neutral pool. Neutral words follow a Zipf-like frequency.
pub fn synthetic_reviews(spec: &SyntheticSpec, reference: &ReferenceTable, stopwords: &Stopwords) -> Vec<Record> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let pools = Pools::new(reference, stopwords, &mut rng);
    let zipf: Vec<f64> = (1..=pools.neutral.len()).map(|r| 1.0 / r as f64).collect();
    let neutral_dist = rand_distr::WeightedAliasIndex::new(zipf).expect("positive weights");
    let mut out = Vec::with_capacity(spec.records);
    for _ in 0..spec.records {
        let positive = rng.gen_bool(spec.pos_fraction);
        let pool = if positive { &pools.pos } else { &pools.neg };
        let len = rng.gen_range(spec.min_len..=spec.max_len.max(spec.min_len));
        let words: Vec<&str> = (0..len)
            .map(|_| {
                if rng.gen_bool(spec.polar_share) {
                    pool.choose(&mut rng).expect("non-empty pool").as_str()
                } else {
                    pools.neutral[rng.sample(&neutral_dist)].as_str()
                }
            })
            .collect();
        let mut text = words.join(" ");
        if let Some(first) = text.get_mut(0..1) {
            first.make_ascii_uppercase();
        }
        text.push('.');
        let stated = positive ^ rng.gen_bool(spec.label_noise);
        out.push(Record {
            label: Some(if stated { Polarity::Positive } else { Polarity::Negative }),
            text,
            fields: Vec::new(),
        });
    }
    out
}
