//! Throughput, tail latency, accuracy and F1 over the labelled stream, plus
//! the skew and length dataset generators used by the experiments.

use std::collections::VecDeque;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Record;
use crate::types::Polarity;

/// Fixed-width latency histogram: 0.1 ms buckets up to 10 s, plus one
/// overflow bucket.
#[derive(Debug, Clone)]
pub struct LatencyHistogram {
    buckets: Vec<u64>,
    total: u64,
}

impl LatencyHistogram {
    pub const BUCKET_US: u64 = 100;
    pub const RANGE_US: u64 = 10_000_000;

    pub fn new() -> Self {
        LatencyHistogram {
            buckets: vec![0; (Self::RANGE_US / Self::BUCKET_US) as usize + 1],
            total: 0,
        }
    }

    pub fn bucket_width_ms() -> f64 {
        Self::BUCKET_US as f64 / 1000.0
    }

    pub fn record(&mut self, latency: Duration) {
        let us = latency.as_micros().min(u128::from(Self::RANGE_US)) as u64;
        self.buckets[(us / Self::BUCKET_US) as usize] += 1;
        self.total += 1;
    }

    pub fn len(&self) -> u64 {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    /// Upper edge, in milliseconds, of the bucket holding the q-quantile.
    pub fn quantile_ms(&self, q: f64) -> Option<f64> {
        if self.total == 0 {
            return None;
        }
        let rank = ((q.clamp(0.0, 1.0) * self.total as f64).ceil() as u64).max(1);
        let mut seen = 0u64;
        for (i, &n) in self.buckets.iter().enumerate() {
            seen += n;
            if seen >= rank {
                return Some(((i as u64 + 1) * Self::BUCKET_US) as f64 / 1000.0);
            }
        }
        unreachable!("rank never exceeds total")
    }
}

impl Default for LatencyHistogram {
    fn default() -> Self {
        Self::new()
    }
}

/// Confusion counts with Positive as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Confusion {
    pub fn add(&mut self, predicted: Polarity, truth: Polarity) {
        match (predicted, truth) {
            (Polarity::Positive, Polarity::Positive) => self.tp += 1,
            (Polarity::Positive, Polarity::Negative) => self.fp += 1,
            (Polarity::Negative, Polarity::Negative) => self.tn += 1,
            (Polarity::Negative, Polarity::Positive) => self.fn_ += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> Option<f64> {
        let n = self.total();
        (n > 0).then(|| (self.tp + self.tn) as f64 / n as f64)
    }

    pub fn precision(&self) -> Option<f64> {
        let d = self.tp + self.fp;
        (d > 0).then(|| self.tp as f64 / d as f64)
    }

    pub fn recall(&self) -> Option<f64> {
        let d = self.tp + self.fn_;
        (d > 0).then(|| self.tp as f64 / d as f64)
    }

    pub fn f1(&self) -> Option<f64> {
        let (p, r) = (self.precision()?, self.recall()?);
        Some(if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub elapsed_s: f64,
    pub processed: u64,
    pub throughput: f64,
    pub p95_latency_ms: Option<f64>,
    pub latency_bucket_ms: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub precision: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recall: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f1: Option<f64>,
    #[serde(flatten)]
    pub confusion: Confusion,
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.6}")).unwrap_or_default()
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str =
        "elapsed_s,processed,throughput,p95_latency_ms,accuracy,window_accuracy,precision,recall,f1,tp,fp,tn,fn";

    pub fn csv_row(&self) -> String {
        format!(
            "{:.3},{},{:.1},{},{},{},{},{},{},{},{},{},{}",
            self.elapsed_s,
            self.processed,
            self.throughput,
            opt(self.p95_latency_ms),
            opt(self.accuracy),
            opt(self.window_accuracy),
            opt(self.precision),
            opt(self.recall),
            opt(self.f1),
            self.confusion.tp,
            self.confusion.fp,
            self.confusion.tn,
            self.confusion.fn_
        )
    }
}

/// Online aggregator over labelled tuples.
#[derive(Debug, Clone)]
pub struct MetricsTracker {
    started: Instant,
    interval: Duration,
    last_report: Instant,
    processed: u64,
    latency: LatencyHistogram,
    confusion: Confusion,
    window: VecDeque<bool>,
    window_size: usize,
    window_correct: usize,
}

impl MetricsTracker {
    pub const DEFAULT_INTERVAL: Duration = Duration::from_secs(5);
    pub const DEFAULT_WINDOW: usize = 10_000;

    pub fn new(started: Instant, interval: Duration, window_size: usize) -> Self {
        MetricsTracker {
            started,
            interval,
            last_report: started,
            processed: 0,
            latency: LatencyHistogram::new(),
            confusion: Confusion::default(),
            window: VecDeque::with_capacity(window_size),
            window_size: window_size.max(1),
            window_correct: 0,
        }
    }

    pub fn observe(&mut self, predicted: Polarity, truth: Option<Polarity>, latency: Duration) {
        self.processed += 1;
        self.latency.record(latency);
        if let Some(t) = truth {
            self.confusion.add(predicted, t);
            let correct = predicted == t;
            self.window.push_back(correct);
            self.window_correct += usize::from(correct);
            if self.window.len() > self.window_size {
                let old = self.window.pop_front().unwrap();
                self.window_correct -= usize::from(old);
            }
        }
    }

    pub fn processed(&self) -> u64 {
        self.processed
    }

    pub fn confusion(&self) -> Confusion {
        self.confusion
    }

    /// A report if the interval has elapsed since the last one.
    pub fn poll(&mut self, now: Instant) -> Option<MetricsReport> {
        if now.saturating_duration_since(self.last_report) < self.interval {
            return None;
        }
        self.last_report = now;
        Some(self.report(now))
    }

    pub fn report(&self, now: Instant) -> MetricsReport {
        let elapsed = now.saturating_duration_since(self.started).as_secs_f64();
        MetricsReport {
            elapsed_s: elapsed,
            processed: self.processed,
            throughput: if elapsed > 0.0 { self.processed as f64 / elapsed } else { 0.0 },
            p95_latency_ms: self.latency.quantile_ms(0.95),
            latency_bucket_ms: LatencyHistogram::bucket_width_ms(),
            accuracy: self.confusion.accuracy(),
            window_accuracy: (!self.window.is_empty())
                .then(|| self.window_correct as f64 / self.window.len() as f64),
            precision: self.confusion.precision(),
            recall: self.confusion.recall(),
            f1: self.confusion.f1(),
            confusion: self.confusion,
        }
    }
}

/// Draws a subset, without replacement, whose positive share is
/// `pos_fraction`, as large as the available records allow (optionally
/// capped at `total`), then shuffles it. Unlabelled records are ignored.
pub fn regen_skew(records: &[Record], pos_fraction: f64, total: Option<usize>, seed: u64) -> Vec<Record> {
    assert!((0.0..=1.0).contains(&pos_fraction));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pos: Vec<&Record> = records.iter().filter(|r| r.label == Some(Polarity::Positive)).collect();
    let mut neg: Vec<&Record> = records.iter().filter(|r| r.label == Some(Polarity::Negative)).collect();
    let (n_pos, n_neg) = skew_counts(pos.len(), neg.len(), pos_fraction, total);
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let mut out: Vec<Record> = pos[..n_pos].iter().chain(&neg[..n_neg]).map(|r| (*r).clone()).collect();
    out.shuffle(&mut rng);
    out
}

/// Largest (positive, negative) counts drawable from the pools with the
/// requested positive share.
pub fn skew_counts(avail_pos: usize, avail_neg: usize, f: f64, cap: Option<usize>) -> (usize, usize) {
    let limit = |t: f64| cap.map_or(t, |c| t.min(c as f64));
    let total = if f <= 0.0 {
        limit(avail_neg as f64)
    } else if f >= 1.0 {
        limit(avail_pos as f64)
    } else {
        limit((avail_pos as f64 / f).min(avail_neg as f64 / (1.0 - f)))
    }
    .floor() as usize;
    let mut n_pos = ((f * total as f64).round() as usize).min(avail_pos);
    let mut n_neg = total - n_pos;
    if n_neg > avail_neg {
        n_neg = avail_neg;
        n_pos = total - n_neg;
    }
    (n_pos, n_neg)
}

/// Token-length buckets; a record with `n` tokens goes to the first bucket
/// whose upper bound is `>= n`, so a boundary count lands in the lower
/// bucket.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LengthBuckets(Vec<usize>);

impl LengthBuckets {
    /// `bounds` are inclusive upper limits in ascending order; one extra
    /// open-ended bucket follows the last bound.
    pub fn new(mut bounds: Vec<usize>) -> Self {
        bounds.sort_unstable();
        bounds.dedup();
        LengthBuckets(bounds)
    }

    pub fn count(&self) -> usize {
        self.0.len() + 1
    }

    pub fn index(&self, tokens: usize) -> usize {
        self.0.iter().position(|&b| tokens <= b).unwrap_or(self.0.len())
    }

    pub fn label(&self, i: usize) -> String {
        let lo = if i == 0 { 0 } else { self.0[i - 1] + 1 };
        match self.0.get(i) {
            Some(hi) => format!("{lo}-{hi}"),
            None => format!("{lo}-"),
        }
    }
}

impl Default for LengthBuckets {
    fn default() -> Self {
        LengthBuckets(vec![30, 100, 300])
    }
}

/// Partitions records by post-filter token count.
pub fn regen_by_length(
    records: &[Record],
    buckets: &LengthBuckets,
    token_count: impl Fn(&str) -> usize,
) -> Vec<Vec<Record>> {
    let mut out = vec![Vec::new(); buckets.count()];
    for r in records {
        out[buckets.index(token_count(&r.text))].push(r.clone());
    }
    out
}
