//! Tokenization, filtering and batching of raw tuples.
//!
//! Filtering rules, applied per whitespace-separated token:
//!
//! * tokens starting with `@` or `#` (usernames, hashtags) are dropped;
//! * URLs are dropped (anything containing `://` or starting with `www.`);
//! * the token is lowercased and non-alphanumeric characters are stripped
//!   from both edges only, so `don't` keeps its apostrophe;
//! * tokens with no alphabetic character left are dropped, which covers
//!   numbers, punctuation and emoticons such as `:-)` or `<3`;
//! * stopwords are dropped.
//!
//! No stemming and no part-of-speech filtering: nouns such as "criminal"
//! carry polarity too.

use std::collections::HashSet;
use std::path::Path;
use std::time::{Duration, Instant};

use crate::error::ConfigError;
use crate::types::{CleanTuple, Tuple};

const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords_en.txt");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stopwords(HashSet<String>);

impl Stopwords {
    /// One lowercase word per line.
    pub fn parse(text: &str) -> Self {
        Stopwords(
            text.lines()
                .map(|l| l.trim().to_lowercase())
                .filter(|l| !l.is_empty())
                .collect(),
        )
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        std::fs::read_to_string(path)
            .map(|t| Self::parse(&t))
            .map_err(|source| ConfigError::Read {
                path: path.display().to_string(),
                source,
            })
    }

    pub fn empty() -> Self {
        Stopwords(HashSet::new())
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(word)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Default for Stopwords {
    fn default() -> Self {
        Self::parse(DEFAULT_STOPWORDS)
    }
}

fn is_url(token: &str) -> bool {
    token.contains("://") || token.starts_with("www.")
}

/// Applies the filter rules to a single raw token.
pub fn clean_token(raw: &str, stopwords: &Stopwords) -> Option<String> {
    if raw.starts_with('@') || raw.starts_with('#') || is_url(raw) {
        return None;
    }
    let lower = raw.to_lowercase();
    let stripped = lower.trim_matches(|c: char| !c.is_alphanumeric());
    if stripped.is_empty()
        || is_url(stripped)
        || !stripped.chars().any(char::is_alphabetic)
        || stopwords.contains(stripped)
    {
        return None;
    }
    Some(stripped.to_string())
}

pub fn tokenize(text: &str, stopwords: &Stopwords) -> Vec<String> {
    text.split_whitespace()
        .filter_map(|raw| clean_token(raw, stopwords))
        .collect()
}

/// Converts a raw tuple into its filtered token list. Never fails; the
/// token list may be empty.
pub fn tokenize_and_filter(tuple: &Tuple, stopwords: &Stopwords) -> CleanTuple {
    CleanTuple {
        origin: tuple.origin(),
        tokens: tokenize(&tuple.text, stopwords),
    }
}

/// A group of filtered tuples trained and labelled together.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<T = CleanTuple> {
    pub tuples: Vec<T>,
    pub open_ts: Instant,
}

impl<T> Batch<T> {
    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }
}

/// Count- and time-bounded batch accumulator. Time is passed in by the
/// caller so the batching logic stays deterministic under test.
#[derive(Debug)]
pub struct Batcher<T = CleanTuple> {
    size: usize,
    timeout: Option<Duration>,
    open: Option<Batch<T>>,
}

impl<T> Batcher<T> {
    pub fn new(size: usize, timeout: Option<Duration>) -> Self {
        assert!(size >= 1, "batch size must be at least 1");
        Batcher {
            size,
            timeout,
            open: None,
        }
    }

    /// Adds an item; returns a full batch when the count is reached. Expiry
    /// is not checked here: call [`Batcher::poll`] first.
    pub fn push(&mut self, item: T, now: Instant) -> Option<Batch<T>> {
        let batch = self.open.get_or_insert_with(|| Batch {
            tuples: Vec::with_capacity(self.size.min(8192)),
            open_ts: now,
        });
        batch.tuples.push(item);
        if batch.tuples.len() >= self.size {
            self.open.take()
        } else {
            None
        }
    }

    /// Returns the open batch if its timeout has elapsed.
    pub fn poll(&mut self, now: Instant) -> Option<Batch<T>> {
        let timeout = self.timeout?;
        let open = self.open.as_ref()?;
        if now.saturating_duration_since(open.open_ts) >= timeout {
            self.open.take()
        } else {
            None
        }
    }

    /// Instant at which the open batch expires, if any.
    pub fn deadline(&self) -> Option<Instant> {
        Some(self.open.as_ref()?.open_ts + self.timeout?)
    }

    pub fn flush(&mut self) -> Option<Batch<T>> {
        self.open.take()
    }

    pub fn pending(&self) -> usize {
        self.open.as_ref().map_or(0, |b| b.tuples.len())
    }
}
