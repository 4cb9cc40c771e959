//! Local, global and hybrid model management, merge pooling and LRU pruning.

use std::collections::{HashMap, HashSet};
use std::time::{Duration, Instant};

use parking_lot::{RwLock, RwLockReadGuard, RwLockWriteGuard};

use crate::error::ModelError;
use crate::model::EmbeddingModel;
use crate::types::{MergeTrigger, Pooling, ReferenceTable, Strategy};

fn pool_into(out: &mut [f32], a: &[f32], b: &[f32], pooling: Pooling) {
    for ((o, &x), &y) in out.iter_mut().zip(a).zip(b) {
        *o = match pooling {
            Pooling::Mean => (x + y) / 2.0,
            Pooling::Min => x.min(y),
            Pooling::Max => x.max(y),
        };
    }
}

/// Union of two models. Words known to both get pooled input and context
/// vectors, summed counts and the later LRU stamp; words known to one side
/// are copied through unchanged.
pub fn merge(a: &EmbeddingModel, b: &EmbeddingModel, pooling: Pooling) -> Result<EmbeddingModel, ModelError> {
    if a.dim() != b.dim() {
        return Err(ModelError::DimMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    let dim = a.dim();
    let mut out = EmbeddingModel::new(dim);
    let mut vec_buf = vec![0.0f32; dim];
    let mut ctx_buf = vec![0.0f32; dim];
    for (i, word) in a.words().iter().enumerate() {
        match b.index_of(word) {
            Some(j) => {
                pool_into(&mut vec_buf, a.vector_at(i), b.vector_at(j), pooling);
                pool_into(&mut ctx_buf, a.context_at(i), b.context_at(j), pooling);
                out.insert(
                    word.clone(),
                    &vec_buf,
                    &ctx_buf,
                    a.count_at(i) + b.count_at(j),
                    a.last_used_at(i).max(b.last_used_at(j)),
                );
            }
            None => {
                out.insert(word.clone(), a.vector_at(i), a.context_at(i), a.count_at(i), a.last_used_at(i));
            }
        }
    }
    for (j, word) in b.words().iter().enumerate() {
        if !a.contains(word) {
            out.insert(word.clone(), b.vector_at(j), b.context_at(j), b.count_at(j), b.last_used_at(j));
        }
    }
    let pending = out.pending_mut();
    for (w, &c) in a.pending().iter().chain(b.pending()) {
        if !a.contains(w) && !b.contains(w) {
            *pending.entry(w.clone()).or_insert(0) += c;
        }
    }
    out.set_total_tokens(a.total_tokens() + b.total_tokens());
    Ok(out)
}

/// Evicts least-recently-used words until at most `cap` remain. Pinned
/// words (the reference table) are never evicted, so the result can exceed
/// `cap` only if the pinned words alone do. Returns the number evicted.
pub fn prune_lru(model: &mut EmbeddingModel, cap: usize, pinned: &ReferenceTable) -> usize {
    assert!(cap >= 1, "LRU cap must be at least 1");
    cap_pending(model, cap);
    let excess = model.len().saturating_sub(cap);
    if excess == 0 {
        return 0;
    }
    let mut candidates: Vec<(u64, &str, usize)> = model
        .words()
        .iter()
        .enumerate()
        .filter(|(_, w)| !pinned.contains(w))
        .map(|(i, w)| (model.last_used_at(i), w.as_str(), i))
        .collect();
    let n = excess.min(candidates.len());
    if n == 0 {
        return 0;
    }
    if n < candidates.len() {
        candidates.select_nth_unstable(n - 1);
    }
    let evict: HashSet<usize> = candidates[..n].iter().map(|&(_, _, i)| i).collect();
    model.retain(|i, _| !evict.contains(&i))
}

/// Keeps the `cap` most frequent words still below the minimum count.
fn cap_pending(model: &mut EmbeddingModel, cap: usize) {
    let pending = model.pending_mut();
    if pending.len() <= cap {
        return;
    }
    let mut counts: Vec<u64> = pending.values().copied().collect();
    let k = counts.len() - cap;
    let (_, &mut threshold, _) = counts.select_nth_unstable(k);
    let mut above = pending.values().filter(|&&c| c > threshold).count();
    pending.retain(|_, c| {
        if *c > threshold {
            true
        } else if *c == threshold && above < cap {
            above += 1;
            true
        } else {
            false
        }
    });
}

/// Counts a worker held when it last received the shared model. A hybrid
/// sync contributes only what the worker counted since then, so counts the
/// shared model already holds are not added twice.
#[derive(Debug, Clone, Default)]
pub struct SyncBase {
    counts: HashMap<String, u64>,
    total: u64,
}

impl SyncBase {
    pub fn of(model: &EmbeddingModel) -> Self {
        let mut counts: HashMap<String, u64> = model.pending().clone();
        for (i, w) in model.words().iter().enumerate() {
            counts.insert(w.clone(), model.count_at(i));
        }
        SyncBase {
            counts,
            total: model.total_tokens(),
        }
    }

    /// The worker's model with counts reduced to what is new since the base.
    fn delta(&self, worker: &EmbeddingModel) -> EmbeddingModel {
        let mut d = worker.clone();
        let since = |w: &str, c: u64| c.saturating_sub(self.counts.get(w).copied().unwrap_or(0));
        for i in 0..d.len() {
            let c = since(d.word_at(i), d.count_at(i));
            d.set_count(i, c);
        }
        let pending = d.pending_mut();
        for (w, c) in pending.iter_mut() {
            *c = since(w, *c);
        }
        pending.retain(|_, c| *c > 0);
        d.set_total_tokens(worker.total_tokens().saturating_sub(self.total));
        d
    }
}

/// Decides when a worker synchronizes.
#[derive(Debug, Clone)]
pub struct SyncClock {
    trigger: MergeTrigger,
    batches: u32,
    last: Instant,
}

impl SyncClock {
    pub fn new(trigger: MergeTrigger, now: Instant) -> Self {
        SyncClock {
            trigger,
            batches: 0,
            last: now,
        }
    }

    /// Call once per processed batch; true when a sync is due.
    pub fn tick(&mut self, now: Instant) -> bool {
        self.batches += 1;
        let due = match self.trigger {
            MergeTrigger::EveryBatches(k) => self.batches >= k,
            MergeTrigger::Period(p) => now.saturating_duration_since(self.last) >= p,
        };
        if due {
            self.batches = 0;
            self.last = now;
        }
        due
    }

    pub fn period(&self) -> Option<Duration> {
        match self.trigger {
            MergeTrigger::Period(p) => Some(p),
            MergeTrigger::EveryBatches(_) => None,
        }
    }
}

/// Backend holding a model shared between workers. Only the in-process
/// implementation ships; an external key-value store would implement the
/// same contract.
pub trait SharedModelBackend: Send + Sync {
    fn read(&self) -> RwLockReadGuard<'_, EmbeddingModel>;
    fn write(&self) -> RwLockWriteGuard<'_, EmbeddingModel>;
}

#[derive(Debug)]
pub struct InProcessBackend(RwLock<EmbeddingModel>);

impl InProcessBackend {
    pub fn new(model: EmbeddingModel) -> Self {
        InProcessBackend(RwLock::new(model))
    }
}

impl SharedModelBackend for InProcessBackend {
    fn read(&self) -> RwLockReadGuard<'_, EmbeddingModel> {
        self.0.read()
    }

    fn write(&self) -> RwLockWriteGuard<'_, EmbeddingModel> {
        self.0.write()
    }
}

/// The strategy together with the shared model it needs, if any.
pub struct ModelStore {
    strategy: Strategy,
    pooling: Pooling,
    trigger: MergeTrigger,
    shared: Option<Box<dyn SharedModelBackend>>,
    lru: Option<(usize, ReferenceTable)>,
}

impl ModelStore {
    pub fn new(strategy: Strategy, pooling: Pooling, trigger: MergeTrigger, initial: EmbeddingModel) -> Self {
        let shared: Option<Box<dyn SharedModelBackend>> = match strategy {
            Strategy::Local => None,
            Strategy::Global | Strategy::Hybrid => Some(Box::new(InProcessBackend::new(initial))),
        };
        ModelStore {
            strategy,
            pooling,
            trigger,
            shared,
            lru: None,
        }
    }

    /// Prune the shared model to `cap` words after every hybrid merge.
    pub fn with_lru(mut self, cap: usize, pinned: ReferenceTable) -> Self {
        self.lru = Some((cap, pinned));
        self
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn trigger(&self) -> MergeTrigger {
        self.trigger
    }

    pub fn shared(&self) -> Option<&dyn SharedModelBackend> {
        self.shared.as_deref()
    }

    /// Hybrid sync: merge the worker's model into the shared one, then hand
    /// the worker a copy of the result and move `base` to it. A no-op for
    /// Local, and for Global where workers train the shared model directly.
    pub fn sync(&self, worker: &mut EmbeddingModel, base: &mut SyncBase) -> Result<(), ModelError> {
        if self.strategy != Strategy::Hybrid {
            return Ok(());
        }
        let shared = self.shared.as_ref().expect("hybrid store has a shared model");
        let mut guard = shared.write();
        let mut merged = merge(&guard, &base.delta(worker), self.pooling)?;
        // A word the shared model has since pruned may arrive with no new
        // counts; stored words keep a count of at least one.
        for i in 0..merged.len() {
            if merged.count_at(i) == 0 {
                merged.set_count(i, 1);
            }
        }
        if let Some((cap, pinned)) = &self.lru {
            prune_lru(&mut merged, *cap, pinned);
        }
        *base = SyncBase::of(&merged);
        *worker = merged.clone();
        *guard = merged;
        Ok(())
    }

    /// Copy of the shared model, if there is one.
    pub fn snapshot(&self) -> Option<EmbeddingModel> {
        self.shared.as_ref().map(|s| s.read().clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(rows: &[(&str, [f32; 2], u64, u64)]) -> EmbeddingModel {
        let mut m = EmbeddingModel::new(2);
        for (w, v, count, last) in rows {
            m.insert(w.to_string(), v, &[v[1], v[0]], *count, *last);
        }
        m
    }

    #[test]
    fn merge_with_empty_is_identity() {
        let m = model(&[("a", [1.0, 2.0], 3, 4), ("b", [0.5, -1.0], 1, 9)]);
        let e = EmbeddingModel::new(2);
        assert_eq!(merge(&m, &e, Pooling::Mean).unwrap(), m);
        assert_eq!(merge(&e, &m, Pooling::Mean).unwrap(), m);
    }

    #[test]
    fn pooling_rules() {
        let a = model(&[("w", [2.0, 4.0], 1, 1)]);
        let b = model(&[("w", [4.0, 6.0], 2, 7)]);
        let mean = merge(&a, &b, Pooling::Mean).unwrap();
        assert_eq!(mean.vector("w").unwrap(), &[3.0, 5.0]);
        assert_eq!(mean.context_vector("w").unwrap(), &[5.0, 3.0]);
        assert_eq!(mean.count("w"), 3);
        assert_eq!(mean.last_used("w"), Some(7));
        assert_eq!(merge(&a, &b, Pooling::Min).unwrap().vector("w").unwrap(), &[2.0, 4.0]);
        assert_eq!(merge(&a, &b, Pooling::Max).unwrap().vector("w").unwrap(), &[4.0, 6.0]);
    }

    #[test]
    fn merge_rejects_dim_mismatch() {
        let err = merge(&EmbeddingModel::new(2), &EmbeddingModel::new(3), Pooling::Mean).unwrap_err();
        assert!(matches!(err, ModelError::DimMismatch { left: 2, right: 3 }));
    }

    #[test]
    fn self_merge_keeps_vectors_and_doubles_counts() {
        let m = model(&[("a", [1.0, 2.0], 3, 4)]);
        let mm = merge(&m, &m, Pooling::Mean).unwrap();
        assert_eq!(mm.vector("a"), m.vector("a"));
        assert_eq!(mm.context_vector("a"), m.context_vector("a"));
        assert_eq!(mm.count("a"), 6);
    }

    #[test]
    fn lru_prune_examples() {
        let reference = ReferenceTable::default();
        let mut m = model(&[("a", [0.0; 2], 1, 1)]);
        assert_eq!(prune_lru(&mut m, 20, &reference), 0);

        let mut m = model(&[
            ("a", [0.0; 2], 1, 1),
            ("b", [0.0; 2], 1, 2),
            ("c", [0.0; 2], 1, 3),
            ("d", [0.0; 2], 1, 4),
            ("e", [0.0; 2], 1, 5),
        ]);
        assert_eq!(prune_lru(&mut m, 3, &reference), 2);
        let mut left: Vec<_> = m.words().to_vec();
        left.sort();
        assert_eq!(left, ["c", "d", "e"]);
    }

    #[test]
    fn reference_words_are_pinned() {
        let reference = ReferenceTable::default();
        let mut m = model(&[
            ("great", [0.0; 2], 1, 1),
            ("x", [0.0; 2], 1, 2),
            ("y", [0.0; 2], 1, 3),
        ]);
        prune_lru(&mut m, 2, &reference);
        assert!(m.contains("great"));
        assert!(!m.contains("x"));
        assert!(m.contains("y"));

        // Pinned words alone exceed the cap: everything else goes.
        let mut m = model(&[("great", [0.0; 2], 1, 1), ("bad", [0.0; 2], 1, 2), ("z", [0.0; 2], 1, 9)]);
        prune_lru(&mut m, 1, &reference);
        assert_eq!(m.len(), 2);
        assert!(m.contains("great") && m.contains("bad"));
    }

    #[test]
    fn sync_clock_counts_batches() {
        let now = Instant::now();
        let mut c = SyncClock::new(MergeTrigger::EveryBatches(3), now);
        let fired: Vec<bool> = (0..7).map(|_| c.tick(now)).collect();
        assert_eq!(fired, [false, false, true, false, false, true, false]);

        let mut c = SyncClock::new(MergeTrigger::Period(Duration::from_secs(30)), now);
        assert!(!c.tick(now + Duration::from_secs(29)));
        assert!(c.tick(now + Duration::from_secs(30)));
        assert!(!c.tick(now + Duration::from_secs(31)));
    }

    #[test]
    fn local_sync_is_noop() {
        let store = ModelStore::new(Strategy::Local, Pooling::Mean, MergeTrigger::EveryBatches(1), EmbeddingModel::new(2));
        let mut m = model(&[("a", [1.0, 2.0], 1, 1)]);
        let before = m.clone();
        store.sync(&mut m, &mut SyncBase::default()).unwrap();
        assert_eq!(m, before);
        assert!(store.snapshot().is_none());
    }

    #[test]
    fn hybrid_sync_spreads_vocabulary_and_averages() {
        let store = ModelStore::new(Strategy::Hybrid, Pooling::Mean, MergeTrigger::EveryBatches(1), EmbeddingModel::new(2));
        let mut w1 = model(&[("a", [1.0, 1.0], 1, 1), ("shared", [2.0, 0.0], 1, 1)]);
        let mut w2 = model(&[("b", [3.0, 3.0], 1, 2), ("shared", [4.0, 2.0], 1, 2)]);
        let (mut b1, mut b2) = (SyncBase::default(), SyncBase::default());
        store.sync(&mut w1, &mut b1).unwrap();
        store.sync(&mut w2, &mut b2).unwrap();
        assert!(w2.contains("a") && w2.contains("b"));
        assert_eq!(w2.vector("shared").unwrap(), &[3.0, 1.0]);
        store.sync(&mut w1, &mut b1).unwrap();
        assert!(w1.contains("a") && w1.contains("b"));
        assert_eq!(w1.vector("shared").unwrap(), &[2.5, 0.5]);
    }

    #[test]
    fn repeated_hybrid_syncs_do_not_recount() {
        let store = ModelStore::new(Strategy::Hybrid, Pooling::Mean, MergeTrigger::EveryBatches(1), EmbeddingModel::new(2));
        let mut w = model(&[("a", [1.0, 1.0], 4, 1)]);
        let mut base = SyncBase::default();
        for _ in 0..50 {
            store.sync(&mut w, &mut base).unwrap();
        }
        assert_eq!(w.count("a"), 4);
        w.bump(0, 3, 2);
        store.sync(&mut w, &mut base).unwrap();
        assert_eq!(store.snapshot().unwrap().count("a"), 7);
    }

    #[test]
    fn pending_words_are_capped() {
        let mut m = EmbeddingModel::new(2);
        for (i, c) in [5u64, 1, 3, 3, 2, 9].iter().enumerate() {
            m.pending_mut().insert(format!("p{i}"), *c);
        }
        cap_pending(&mut m, 3);
        assert_eq!(m.pending().len(), 3);
        assert!(m.pending().contains_key("p0") && m.pending().contains_key("p5"));
    }
}
