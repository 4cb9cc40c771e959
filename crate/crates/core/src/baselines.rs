//! Lexicon scoring and two-cluster streaming k-means, run inside the same
//! pipeline as the centroid labeller for comparison.

use std::collections::HashMap;
use std::path::Path;

use crate::error::ConfigError;
use crate::labeller::{cosine, score};
use crate::model::EmbeddingModel;
use crate::types::{Polarity, ReferenceTable};

/// Word to polarity score in `[-1, 1]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Lexicon(HashMap<String, f32>);

impl Lexicon {
    pub fn from_pairs<I, S>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, f32)>,
        S: Into<String>,
    {
        Lexicon(pairs.into_iter().map(|(w, s)| (w.into(), s)).collect())
    }

    pub fn get(&self, word: &str) -> Option<f32> {
        self.0.get(word).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `word<TAB>score` per line; `#` starts a comment.
    pub fn parse_tsv(text: &str) -> Result<Self, ConfigError> {
        let mut map = HashMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (word, value) = line
                .split_once('\t')
                .ok_or_else(|| ConfigError::Lexicon(format!("line {}: expected word<TAB>score", n + 1)))?;
            let value: f32 = value
                .trim()
                .parse()
                .map_err(|_| ConfigError::Lexicon(format!("line {}: bad score {value:?}", n + 1)))?;
            if !(-1.0..=1.0).contains(&value) {
                return Err(ConfigError::Lexicon(format!("line {}: score {value} outside [-1, 1]", n + 1)));
            }
            map.insert(word.trim().to_lowercase(), value);
        }
        Ok(Lexicon(map))
    }

    /// SentiWordNet 3.0 native format:
    /// `POS<TAB>ID<TAB>PosScore<TAB>NegScore<TAB>SynsetTerms<TAB>Gloss`, where
    /// SynsetTerms is a space-separated list of `lemma#sense`. A word scores
    /// the mean of `PosScore - NegScore` over every synset listing it.
    pub fn parse_sentiwordnet(text: &str) -> Result<Self, ConfigError> {
        let mut acc: HashMap<String, (f64, u32)> = HashMap::new();
        for (n, line) in text.lines().enumerate() {
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() < 5 {
                return Err(ConfigError::Lexicon(format!("line {}: expected at least 5 columns", n + 1)));
            }
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| ConfigError::Lexicon(format!("line {}: bad score {s:?}", n + 1)))
            };
            let polarity = parse(cols[2])? - parse(cols[3])?;
            for term in cols[4].split_whitespace() {
                let lemma = term.rsplit_once('#').map_or(term, |(l, _)| l).to_lowercase();
                let e = acc.entry(lemma).or_insert((0.0, 0));
                e.0 += polarity;
                e.1 += 1;
            }
        }
        Ok(Lexicon(
            acc.into_iter()
                .map(|(w, (sum, n))| (w, (sum / f64::from(n)) as f32))
                .collect(),
        ))
    }

    /// Reads either format, detected from the first data line's column count.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        let first = text.lines().find(|l| !l.starts_with('#') && !l.trim().is_empty());
        match first.map(|l| l.split('\t').count()) {
            Some(n) if n >= 5 => Self::parse_sentiwordnet(&text),
            _ => Self::parse_tsv(&text),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LexiconScore {
    pub total: f32,
    /// Sum of positive token scores.
    pub positive: f32,
    /// Sum of magnitudes of negative token scores.
    pub negative: f32,
    pub known: usize,
    pub label: Polarity,
}

/// Sums per-token scores; unknown tokens count 0 and a zero total is
/// labelled Positive.
pub fn lexicon_label<S: AsRef<str>>(tokens: &[S], lexicon: &Lexicon) -> LexiconScore {
    let mut s = LexiconScore {
        total: 0.0,
        positive: 0.0,
        negative: 0.0,
        known: 0,
        label: Polarity::Positive,
    };
    for t in tokens {
        if let Some(v) = lexicon.get(t.as_ref()) {
            s.known += 1;
            s.total += v;
            if v > 0.0 {
                s.positive += v;
            } else {
                s.negative -= v;
            }
        }
    }
    if s.total < 0.0 {
        s.label = Polarity::Negative;
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
struct Cluster {
    center: Vec<f32>,
    count: u64,
    ref_pos: f64,
    calibrated: u64,
}

/// Two-centre streaming k-means over tuple centroids.
///
/// Centres are seeded with the first two distinct points. Each point joins
/// the centre with the smaller cosine distance and that centre moves to the
/// running mean of its members. Which centre means "positive" is decided by
/// the mean similarity of members to the positive reference words over the
/// first `calibration` assigned points, then frozen.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamKMeans {
    clusters: Vec<Cluster>,
    calibration: u64,
    seen: u64,
    positive_cluster: Option<usize>,
}

impl StreamKMeans {
    pub const DEFAULT_CALIBRATION: u64 = 500;

    pub fn new(calibration: u64) -> Self {
        StreamKMeans {
            clusters: Vec::with_capacity(2),
            calibration,
            seen: 0,
            positive_cluster: None,
        }
    }

    pub fn centers(&self) -> Vec<&[f32]> {
        self.clusters.iter().map(|c| c.center.as_slice()).collect()
    }

    pub fn counts(&self) -> Vec<u64> {
        self.clusters.iter().map(|c| c.count).collect()
    }

    pub fn is_initialized(&self) -> bool {
        self.clusters.len() == 2
    }

    /// Assigns a point without calibration bookkeeping; returns the cluster.
    pub fn assign(&mut self, point: &[f32]) -> Option<usize> {
        if self.clusters.len() < 2 {
            if self.clusters.iter().any(|c| c.center == point) {
                let idx = self.clusters.iter().position(|c| c.center == point).unwrap();
                self.clusters[idx].count += 1;
                return (self.clusters.len() == 2).then_some(idx);
            }
            self.clusters.push(Cluster {
                center: point.to_vec(),
                count: 1,
                ref_pos: 0.0,
                calibrated: 0,
            });
            return (self.clusters.len() == 2).then_some(1);
        }
        let d0 = 1.0 - cosine(point, &self.clusters[0].center);
        let d1 = 1.0 - cosine(point, &self.clusters[1].center);
        let idx = usize::from(d1 < d0);
        let c = &mut self.clusters[idx];
        c.count += 1;
        let n = c.count as f32;
        c.center.iter_mut().zip(point).for_each(|(m, &x)| *m += (x - *m) / n);
        Some(idx)
    }

    fn mapping(&self) -> usize {
        if let Some(p) = self.positive_cluster {
            return p;
        }
        let mean = |c: &Cluster| {
            if c.calibrated == 0 {
                f64::NEG_INFINITY
            } else {
                c.ref_pos / c.calibrated as f64
            }
        };
        usize::from(mean(&self.clusters[1]) > mean(&self.clusters[0]))
    }

    /// Labels one tuple centroid and updates the clusters.
    pub fn label(&mut self, point: &[f32], model: &EmbeddingModel, reference: &ReferenceTable) -> Polarity {
        let Some(idx) = self.assign(point) else {
            return Polarity::Positive;
        };
        if self.positive_cluster.is_none() {
            self.seen += 1;
            let s = score(model, point, reference, true);
            let c = &mut self.clusters[idx];
            c.ref_pos += f64::from(s.sum_pos);
            c.calibrated += 1;
            if self.seen >= self.calibration {
                self.positive_cluster = Some(self.mapping());
            }
        }
        if idx == self.mapping() {
            Polarity::Positive
        } else {
            Polarity::Negative
        }
    }
}
