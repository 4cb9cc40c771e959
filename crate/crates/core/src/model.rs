//! Vocabulary-indexed storage for the word embedding.
//!
//! Rows live in two contiguous row-major matrices (input vectors and context
//! vectors) addressed through a word index. Words seen fewer than the minimum
//! count are tracked separately in `pending` and have no rows.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::embedding::NegativeSampler;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(from = "ModelRepr")]
pub struct EmbeddingModel {
    dim: usize,
    words: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
    vectors: Vec<f32>,
    context: Vec<f32>,
    counts: Vec<u64>,
    last_used: Vec<u64>,
    pending: HashMap<String, u64>,
    total_tokens: u64,
    #[serde(skip)]
    pub(crate) sampler: Option<NegativeSampler>,
}

#[derive(Deserialize)]
struct ModelRepr {
    dim: usize,
    words: Vec<String>,
    vectors: Vec<f32>,
    context: Vec<f32>,
    counts: Vec<u64>,
    last_used: Vec<u64>,
    pending: HashMap<String, u64>,
    total_tokens: u64,
}

impl From<ModelRepr> for EmbeddingModel {
    fn from(r: ModelRepr) -> Self {
        let mut m = EmbeddingModel {
            dim: r.dim,
            words: r.words,
            index: HashMap::new(),
            vectors: r.vectors,
            context: r.context,
            counts: r.counts,
            last_used: r.last_used,
            pending: r.pending,
            total_tokens: r.total_tokens,
            sampler: None,
        };
        m.reindex();
        m
    }
}

impl EmbeddingModel {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        EmbeddingModel {
            dim,
            words: Vec::new(),
            index: HashMap::new(),
            vectors: Vec::new(),
            context: Vec::new(),
            counts: Vec::new(),
            last_used: Vec::new(),
            pending: HashMap::new(),
            total_tokens: 0,
            sampler: None,
        }
    }

    fn reindex(&mut self) {
        self.index = self
            .words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        self.sampler = None;
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of words that own vectors.
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn word_at(&self, idx: usize) -> &str {
        &self.words[idx]
    }

    /// Input vector of `word`, without touching its LRU stamp.
    pub fn vector(&self, word: &str) -> Option<&[f32]> {
        self.index_of(word).map(|i| self.vector_at(i))
    }

    /// Input vector of `word`, stamping it as used at `clock`.
    pub fn lookup(&mut self, word: &str, clock: u64) -> Option<&[f32]> {
        let i = self.index_of(word)?;
        self.last_used[i] = self.last_used[i].max(clock);
        Some(self.vector_at(i))
    }

    pub fn context_vector(&self, word: &str) -> Option<&[f32]> {
        self.index_of(word).map(|i| self.context_at(i))
    }

    pub fn vector_at(&self, idx: usize) -> &[f32] {
        &self.vectors[idx * self.dim..(idx + 1) * self.dim]
    }

    pub fn context_at(&self, idx: usize) -> &[f32] {
        &self.context[idx * self.dim..(idx + 1) * self.dim]
    }

    /// Mutable input row `center` and context row `ctx` at once.
    pub(crate) fn rows_mut(&mut self, center: usize, ctx: usize) -> (&mut [f32], &mut [f32]) {
        let d = self.dim;
        (
            &mut self.vectors[center * d..(center + 1) * d],
            &mut self.context[ctx * d..(ctx + 1) * d],
        )
    }

    /// Observed frequency, including words still below the minimum count.
    pub fn count(&self, word: &str) -> u64 {
        match self.index_of(word) {
            Some(i) => self.counts[i],
            None => self.pending.get(word).copied().unwrap_or(0),
        }
    }

    pub fn count_at(&self, idx: usize) -> u64 {
        self.counts[idx]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn last_used(&self, word: &str) -> Option<u64> {
        self.index_of(word).map(|i| self.last_used[i])
    }

    pub fn last_used_at(&self, idx: usize) -> u64 {
        self.last_used[idx]
    }

    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    pub(crate) fn pending(&self) -> &HashMap<String, u64> {
        &self.pending
    }

    pub(crate) fn pending_mut(&mut self) -> &mut HashMap<String, u64> {
        &mut self.pending
    }

    pub(crate) fn add_tokens(&mut self, n: u64) {
        self.total_tokens += n;
    }

    pub(crate) fn set_total_tokens(&mut self, n: u64) {
        self.total_tokens = n;
    }

    pub(crate) fn set_count(&mut self, idx: usize, count: u64) {
        self.counts[idx] = count;
    }

    pub(crate) fn bump(&mut self, idx: usize, by: u64, clock: u64) {
        self.counts[idx] += by;
        self.last_used[idx] = self.last_used[idx].max(clock);
    }

    /// Adds a word with the given rows. Panics on a duplicate word or a row
    /// of the wrong length.
    pub fn insert(
        &mut self,
        word: String,
        vector: &[f32],
        context: &[f32],
        count: u64,
        last_used: u64,
    ) -> usize {
        assert_eq!(vector.len(), self.dim);
        assert_eq!(context.len(), self.dim);
        assert!(!self.index.contains_key(&word), "duplicate word {word:?}");
        let idx = self.words.len();
        self.pending.remove(&word);
        self.index.insert(word.clone(), idx);
        self.words.push(word);
        self.vectors.extend_from_slice(vector);
        self.context.extend_from_slice(context);
        self.counts.push(count.max(1));
        self.last_used.push(last_used);
        idx
    }

    /// Drops every stored word for which `keep` returns false. Returns the
    /// number of evicted words.
    pub fn retain(&mut self, mut keep: impl FnMut(usize, &str) -> bool) -> usize {
        let d = self.dim;
        let mut write = 0;
        for read in 0..self.words.len() {
            if !keep(read, &self.words[read]) {
                continue;
            }
            if write != read {
                self.words.swap(write, read);
                self.vectors.copy_within(read * d..(read + 1) * d, write * d);
                self.context.copy_within(read * d..(read + 1) * d, write * d);
                self.counts[write] = self.counts[read];
                self.last_used[write] = self.last_used[read];
            }
            write += 1;
        }
        let evicted = self.words.len() - write;
        if evicted > 0 {
            self.words.truncate(write);
            self.vectors.truncate(write * d);
            self.context.truncate(write * d);
            self.counts.truncate(write);
            self.last_used.truncate(write);
            self.reindex();
        }
        evicted
    }

    /// Multiplies every input vector by `factor`.
    pub fn scale_vectors(&mut self, factor: f32) {
        self.vectors.iter_mut().for_each(|x| *x *= factor);
    }

    pub fn is_finite(&self) -> bool {
        self.vectors.iter().chain(&self.context).all(|x| x.is_finite())
    }
}

/// Order-insensitive equality over the stored state.
impl PartialEq for EmbeddingModel {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.len() == other.len()
            && self.total_tokens == other.total_tokens
            && self.pending == other.pending
            && self.words.iter().enumerate().all(|(i, w)| {
                other.index_of(w).is_some_and(|j| {
                    self.vector_at(i) == other.vector_at(j)
                        && self.context_at(i) == other.context_at(j)
                        && self.counts[i] == other.counts[j]
                        && self.last_used[i] == other.last_used[j]
                })
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> EmbeddingModel {
        let mut m = EmbeddingModel::new(2);
        for (i, w) in ["a", "b", "c", "d"].iter().enumerate() {
            let x = i as f32;
            m.insert(w.to_string(), &[x, x + 0.5], &[-x, 0.0], 1 + i as u64, 10 * i as u64);
        }
        m
    }

    #[test]
    fn retain_compacts_rows() {
        let mut m = model();
        let evicted = m.retain(|_, w| w != "b" && w != "a");
        assert_eq!(evicted, 2);
        assert_eq!(m.len(), 2);
        assert_eq!(m.vector("c").unwrap(), &[2.0, 2.5]);
        assert_eq!(m.context_vector("d").unwrap(), &[-3.0, 0.0]);
        assert_eq!(m.count("d"), 4);
        assert_eq!(m.last_used("c"), Some(20));
        assert!(m.vector("a").is_none());
    }

    #[test]
    fn lookup_stamps_last_used() {
        let mut m = model();
        assert!(m.lookup("a", 99).is_some());
        assert_eq!(m.last_used("a"), Some(99));
        assert!(m.lookup("zzz", 100).is_none());
        assert!(m.vector("zzz").is_none());
    }

    #[test]
    fn equality_ignores_row_order() {
        let m = model();
        let mut r = EmbeddingModel::new(2);
        for w in m.words().iter().rev() {
            let i = m.index_of(w).unwrap();
            r.insert(w.clone(), m.vector_at(i), m.context_at(i), m.count_at(i), m.last_used_at(i));
        }
        assert_eq!(m, r);
        r.scale_vectors(2.0);
        assert_ne!(m, r);
    }

    #[test]
    fn serde_roundtrip_rebuilds_index() {
        let m = model();
        let back: EmbeddingModel =
            serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(m, back);
        assert_eq!(back.vector("b").unwrap(), &[1.0, 1.5]);
    }
}
