//! The stream runtime.
//!
//! ```text
//! source ──▶ preprocess + batch ──▶ worker 0..n (train ▶ label) ──▶ sink
//!                 round-robin by seq
//! ```
//!
//! Stages are threads joined by bounded channels, so a slow stage applies
//! backpressure all the way to the source. Each worker owns its model
//! (local, hybrid) or trains the shared one under the store's lock
//! (global). Ground-truth labels travel beside the batch in a sidecar the
//! workers pass through without reading.

pub mod config;
pub mod source;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use crossbeam_channel::{bounded, Receiver, RecvTimeoutError, Sender};
use serde::{Deserialize, Serialize};

use crate::baselines::{lexicon_label, Lexicon, StreamKMeans};
use crate::dataset::{ReadItem, Record, RecordReader};
use crate::embedding::{observe_vocab, read_snapshot, refresh_sampler, train_batch};
use crate::error::{ConfigError, PipelineError};
use crate::labeller::{centroid, label_tokens};
use crate::metrics::{MetricsReport, MetricsTracker};
use crate::model::EmbeddingModel;
use crate::model_mgmt::{merge, prune_lru, ModelStore, SyncBase, SyncClock};
use crate::preprocess::{tokenize_and_filter, Batch, Batcher, Stopwords};
use crate::trend::TrendState;
use crate::types::{CleanTuple, HyperParams, LabelledTuple, Origin, Polarity, ReferenceTable, Strategy};

pub use config::{Algo, ClockMode, Input, PipelineConfig, Rate};
pub use source::{partition, Ingested, SourceStats};

/// One JSON Lines output object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinkRecord {
    pub seq: u64,
    pub ts: u64,
    pub emit_ts: u64,
    pub label: Polarity,
    pub sum_pos: f32,
    pub sum_neg: f32,
    pub known_token_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_label: Option<Polarity>,
}

/// Per-tuple data that bypasses the labelling path.
#[derive(Debug, Clone, Copy)]
struct Sidecar {
    truth: Option<Polarity>,
    ingested_at: Instant,
}

struct WorkItem {
    batch: Batch<CleanTuple>,
    sidecars: Vec<Sidecar>,
}

type Labelled = Vec<(LabelledTuple, Sidecar)>;

/// Files and tables a run reads before starting.
#[derive(Debug, Clone)]
pub struct Resources {
    pub reference: ReferenceTable,
    pub stopwords: Stopwords,
    pub lexicon: Option<Lexicon>,
    pub init_model: Option<EmbeddingModel>,
}

impl Resources {
    pub fn load(cfg: &PipelineConfig) -> Result<Self, PipelineError> {
        let reference = match &cfg.reference {
            Some(p) => ReferenceTable::parse(&std::fs::read_to_string(p).map_err(|source| ConfigError::Read {
                path: p.display().to_string(),
                source,
            })?)?,
            None => ReferenceTable::default(),
        };
        let stopwords = match &cfg.stopwords {
            Some(p) => Stopwords::load(p)?,
            None => Stopwords::default(),
        };
        let lexicon = cfg.lexicon.as_deref().map(Lexicon::load).transpose()?;
        let init_model = match &cfg.init_model {
            Some(p) => {
                let f = File::open(p).map_err(|source| ConfigError::Read {
                    path: p.display().to_string(),
                    source,
                })?;
                let m = read_snapshot(io::BufReader::new(f))?;
                if m.dim() != cfg.hp.dim {
                    return Err(ConfigError::Invalid(format!(
                        "snapshot dimension {} does not match dim {}",
                        m.dim(),
                        cfg.hp.dim
                    ))
                    .into());
                }
                Some(m)
            }
            None => None,
        };
        Ok(Resources {
            reference,
            stopwords,
            lexicon,
            init_model,
        })
    }
}

/// Outcome of a finished run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub ingested: u64,
    pub malformed: u64,
    pub labelled: u64,
    pub elapsed: Duration,
    pub report: MetricsReport,
    /// Shared model (global, hybrid) or the merge of all worker models
    /// (local).
    pub model: EmbeddingModel,
    /// Output records, when collection was requested.
    pub records: Vec<SinkRecord>,
}

impl RunSummary {
    pub fn throughput(&self) -> f64 {
        self.labelled as f64 / self.elapsed.as_secs_f64().max(1e-9)
    }
}

pub struct Pipeline {
    cfg: PipelineConfig,
    res: Resources,
    collect: bool,
    shutdown: Arc<AtomicBool>,
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig) -> Result<Self, PipelineError> {
        for w in cfg.validate()? {
            log::warn!("{w}");
        }
        let res = Resources::load(&cfg)?;
        Ok(Pipeline {
            cfg,
            res,
            collect: false,
            shutdown: Arc::new(AtomicBool::new(false)),
        })
    }

    pub fn with_resources(cfg: PipelineConfig, res: Resources) -> Result<Self, PipelineError> {
        for w in cfg.validate_resources(&res)? {
            log::warn!("{w}");
        }
        Ok(Pipeline {
            cfg,
            res,
            collect: false,
            shutdown: Arc::new(AtomicBool::new(false)),
        })
    }

    /// Keep every output record in the summary.
    pub fn collect_records(mut self, yes: bool) -> Self {
        self.collect = yes;
        self
    }

    /// Setting the flag stops the source; everything in flight is drained.
    pub fn shutdown_handle(&self) -> Arc<AtomicBool> {
        self.shutdown.clone()
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    /// Runs over the configured input.
    pub fn run(&self) -> Result<RunSummary, PipelineError> {
        match &self.cfg.input {
            Input::File(path) => {
                let reader = RecordReader::open(path, self.cfg.format).map_err(PipelineError::Source)?;
                self.run_items(reader, false)
            }
            Input::Tcp(port) => {
                let listener = TcpListener::bind(("0.0.0.0", *port)).map_err(PipelineError::Source)?;
                self.run_listener(listener)
            }
        }
    }

    /// Runs over in-memory records, ignoring the configured input.
    pub fn run_records(&self, records: Vec<Record>) -> Result<RunSummary, PipelineError> {
        self.run_items(records.into_iter().map(|r| Ok(Ok(r))), false)
    }

    /// Runs over an already bound listener.
    pub fn run_listener(&self, listener: TcpListener) -> Result<RunSummary, PipelineError> {
        let clock = self.cfg.clock;
        let shutdown = self.shutdown.clone();
        self.run_with_source(true, move |stats, emit| {
            source::socket_source(listener, clock, &shutdown, stats, emit)
        })
    }

    fn run_items<I>(&self, items: I, live: bool) -> Result<RunSummary, PipelineError>
    where
        I: IntoIterator<Item = ReadItem> + Send,
    {
        let (rate, clock, limit) = (self.cfg.rate, self.cfg.clock, self.cfg.limit);
        let live = live || matches!(rate, Rate::PerSecond(_));
        let shutdown = self.shutdown.clone();
        self.run_with_source(live, move |stats, emit| {
            source::replay(items, rate, clock, limit, &shutdown, stats, emit)
        })
    }

    fn run_with_source<S>(&self, live: bool, source: S) -> Result<RunSummary, PipelineError>
    where
        S: FnOnce(&SourceStats, &mut dyn FnMut(Ingested) -> bool) -> io::Result<()> + Send,
    {
        let cfg = &self.cfg;
        let res = &self.res;
        let n = cfg.workers;
        let start = Instant::now();
        let init = res.init_model.clone().unwrap_or_else(|| EmbeddingModel::new(cfg.hp.dim));
        let mut store = ModelStore::new(cfg.hp.strategy, cfg.hp.pooling, cfg.hp.merge, init.clone());
        if let Some(cap) = cfg.hp.lru_cache_size {
            store = store.with_lru(cap, res.reference.clone());
        }
        let stats = SourceStats::default();
        let timeout = (live && cfg.batch_timeout_ms > 0).then(|| Duration::from_millis(cfg.batch_timeout_ms));

        let (tuple_tx, tuple_rx) = bounded::<Ingested>(4096);
        let (worker_txs, worker_rxs): (Vec<_>, Vec<_>) =
            (0..n).map(|_| bounded::<WorkItem>(cfg.queue_batches)).unzip();
        let (out_tx, out_rx) = bounded::<Labelled>(4 * n);
        let local_models: Mutex<Vec<(usize, EmbeddingModel)>> = Mutex::new(Vec::new());

        let (source_result, sink_result, worker_results) = thread::scope(|s| {
            let source_handle = {
                let stats = &stats;
                s.spawn(move || {
                    let mut emit = |t: Ingested| tuple_tx.send(t).is_ok();
                    source(stats, &mut emit)
                })
            };
            let stopwords = &res.stopwords;
            let batch_size = cfg.hp.batch_size;
            s.spawn(move || preprocess_stage(tuple_rx, worker_txs, stopwords, batch_size, timeout));

            let workers: Vec<_> = worker_rxs
                .into_iter()
                .enumerate()
                .map(|(id, rx)| {
                    let out_tx = out_tx.clone();
                    let store = &store;
                    let local_models = &local_models;
                    let init = init.clone();
                    s.spawn(move || -> Result<(), PipelineError> {
                        let mut w = Worker::new(id, cfg, res, store, init, start);
                        for item in rx {
                            let out = w.process(item)?;
                            if out_tx.send(out).is_err() {
                                break;
                            }
                        }
                        if let Some(m) = w.finish()? {
                            local_models.lock().unwrap().push((id, m));
                        }
                        Ok(())
                    })
                })
                .collect();
            drop(out_tx);

            let sink_result = sink_stage(out_rx, cfg, start, self.collect);
            let worker_results: Vec<_> = workers.into_iter().map(|h| h.join()).collect();
            (source_handle.join(), sink_result, worker_results)
        });

        for r in worker_results {
            r.map_err(|_| PipelineError::WorkerPanic)??;
        }
        source_result
            .map_err(|_| PipelineError::WorkerPanic)?
            .map_err(PipelineError::Source)?;
        let (labelled, report, records) = sink_result?;

        let model = match store.snapshot() {
            Some(m) => m,
            None => {
                let mut locals = local_models.into_inner().unwrap();
                locals.sort_by_key(|(id, _)| *id);
                let mut it = locals.into_iter().map(|(_, m)| m);
                let first = it.next().unwrap_or(init);
                it.try_fold(first, |acc, m| merge(&acc, &m, cfg.hp.pooling))?
            }
        };
        Ok(RunSummary {
            ingested: stats.ingested.load(Ordering::Relaxed),
            malformed: stats.malformed.load(Ordering::Relaxed),
            labelled,
            elapsed: start.elapsed(),
            report,
            model,
            records,
        })
    }
}

impl PipelineConfig {
    fn validate_resources(&self, res: &Resources) -> Result<Vec<String>, ConfigError> {
        if self.workers == 0 {
            return Err(ConfigError::Invalid("workers must be at least 1".into()));
        }
        if self.algo == Algo::Lexicon && res.lexicon.is_none() {
            return Err(ConfigError::Invalid("the lexicon algorithm needs a lexicon".into()));
        }
        if let Some(m) = &res.init_model {
            if m.dim() != self.hp.dim {
                return Err(ConfigError::Invalid("initial model dimension does not match dim".into()));
            }
        }
        self.hp.validate()
    }
}

fn preprocess_stage(
    rx: Receiver<Ingested>,
    txs: Vec<Sender<WorkItem>>,
    stopwords: &Stopwords,
    batch_size: usize,
    timeout: Option<Duration>,
) {
    let n = txs.len();
    let mut batchers: Vec<Batcher<(CleanTuple, Sidecar)>> =
        (0..n).map(|_| Batcher::new(batch_size, timeout)).collect();
    let send = |i: usize, b: Batch<(CleanTuple, Sidecar)>| {
        let (tuples, sidecars) = b.tuples.into_iter().unzip();
        let _ = txs[i].send(WorkItem {
            batch: Batch {
                tuples,
                open_ts: b.open_ts,
            },
            sidecars,
        });
    };
    loop {
        let deadline = batchers.iter().filter_map(Batcher::deadline).min();
        let msg = match deadline {
            Some(d) => rx.recv_deadline(d),
            None => rx.recv().map_err(|_| RecvTimeoutError::Disconnected),
        };
        let now = Instant::now();
        for (i, b) in batchers.iter_mut().enumerate() {
            if let Some(expired) = b.poll(now) {
                send(i, expired);
            }
        }
        match msg {
            Ok(Ingested { tuple, at }) => {
                let i = partition(tuple.seq, n);
                let side = Sidecar {
                    truth: tuple.true_label,
                    ingested_at: at,
                };
                let clean = tokenize_and_filter(&tuple, stopwords);
                if let Some(full) = batchers[i].push((clean, side), now) {
                    send(i, full);
                }
            }
            Err(RecvTimeoutError::Timeout) => {}
            Err(RecvTimeoutError::Disconnected) => break,
        }
    }
    for (i, b) in batchers.iter_mut().enumerate() {
        if let Some(rest) = b.flush() {
            send(i, rest);
        }
    }
}

struct Worker<'a> {
    id: usize,
    cfg: &'a PipelineConfig,
    res: &'a Resources,
    store: &'a ModelStore,
    local: Option<EmbeddingModel>,
    trend: TrendState,
    kmeans: StreamKMeans,
    sync: SyncClock,
    base: SyncBase,
    batches: u64,
}

/// Per-worker state the labelling step mutates alongside the model.
struct LabelState<'a> {
    cfg: &'a PipelineConfig,
    res: &'a Resources,
    trend: &'a mut TrendState,
    kmeans: &'a mut StreamKMeans,
}

impl LabelState<'_> {
    fn label(&mut self, model: &EmbeddingModel, t: &CleanTuple) -> (Polarity, f32, f32, usize) {
        match self.cfg.algo {
            Algo::Wcd => {
                let j = label_tokens(
                    model,
                    &t.tokens,
                    &self.res.reference,
                    self.trend,
                    self.cfg.hp.normalize_reference_sums,
                );
                self.trend.record(j.label);
                (j.label, j.score.sum_pos, j.score.sum_neg, j.known_count)
            }
            Algo::Lexicon => {
                let lex = self.res.lexicon.as_ref().expect("validated: lexicon present");
                let s = lexicon_label(&t.tokens, lex);
                (s.label, s.positive, s.negative, s.known)
            }
            Algo::Kmeans => match centroid(model, &t.tokens) {
                Ok((c, known)) => (self.kmeans.label(&c, model, &self.res.reference), 0.0, 0.0, known),
                Err(_) => (Polarity::Positive, 0.0, 0.0, 0),
            },
        }
    }
}

fn train_and_label(
    model: &mut EmbeddingModel,
    batch: &Batch<CleanTuple>,
    hp: &HyperParams,
    seeds: (u64, u64),
    state: &mut LabelState<'_>,
) -> Vec<(Origin, Polarity, f32, f32, usize)> {
    if state.cfg.algo != Algo::Lexicon {
        observe_vocab(model, &batch.tuples, hp.min_word_count, seeds.0);
        train_batch(model, &batch.tuples, hp, seeds.1);
    }
    batch
        .tuples
        .iter()
        .map(|t| {
            let (label, p, n, k) = state.label(model, t);
            (t.origin, label, p, n, k)
        })
        .collect()
}

impl<'a> Worker<'a> {
    fn new(
        id: usize,
        cfg: &'a PipelineConfig,
        res: &'a Resources,
        store: &'a ModelStore,
        init: EmbeddingModel,
        start: Instant,
    ) -> Self {
        Worker {
            id,
            cfg,
            res,
            store,
            local: (store.strategy() != Strategy::Global).then(|| init.clone()),
            trend: TrendState::from_params(&cfg.hp),
            kmeans: StreamKMeans::new(cfg.kmeans_calibration),
            sync: SyncClock::new(cfg.hp.merge, start),
            base: SyncBase::of(&init),
            batches: 0,
        }
    }

    fn seeds(&self) -> (u64, u64) {
        let base = mix(self.cfg.seed ^ mix(self.id as u64) ^ self.batches.wrapping_mul(0x2545_f491_4f6c_dd1d));
        (mix(base), mix(base ^ 1))
    }

    fn process(&mut self, item: WorkItem) -> Result<Labelled, PipelineError> {
        let seeds = self.seeds();
        self.batches += 1;
        let hp = &self.cfg.hp;
        let mut state = LabelState {
            cfg: self.cfg,
            res: self.res,
            trend: &mut self.trend,
            kmeans: &mut self.kmeans,
        };
        let due = self.sync.tick(Instant::now());
        let decided = match self.local.as_mut() {
            Some(model) => {
                let out = train_and_label(model, &item.batch, hp, seeds, &mut state);
                if due {
                    self.store.sync(model, &mut self.base)?;
                    refresh_sampler(model);
                }
                if let Some(cap) = hp.lru_cache_size {
                    prune_lru(model, cap, &self.res.reference);
                }
                out
            }
            None => {
                let shared = self.store.shared().expect("global store has a shared model");
                let mut model = shared.write();
                let out = train_and_label(&mut model, &item.batch, hp, seeds, &mut state);
                if due {
                    refresh_sampler(&mut model);
                }
                if let Some(cap) = hp.lru_cache_size {
                    prune_lru(&mut model, cap, &self.res.reference);
                }
                out
            }
        };
        let logical = self.cfg.clock == ClockMode::Logical;
        let emit_wall = source::wall_ms();
        Ok(decided
            .into_iter()
            .zip(item.sidecars)
            .map(|((origin, label, sum_pos, sum_neg, known), side)| {
                let lt = LabelledTuple {
                    origin,
                    label,
                    sum_pos,
                    sum_neg,
                    known_token_count: known,
                    emit_ts: if logical { origin.seq } else { emit_wall },
                };
                (lt, side)
            })
            .collect())
    }

    /// Final hybrid sync; returns the local model for local runs.
    fn finish(mut self) -> Result<Option<EmbeddingModel>, PipelineError> {
        match self.store.strategy() {
            Strategy::Hybrid => {
                if let Some(m) = self.local.as_mut() {
                    self.store.sync(m, &mut self.base)?;
                }
                Ok(None)
            }
            Strategy::Local => Ok(self.local),
            Strategy::Global => Ok(None),
        }
    }
}

type Out = BufWriter<Box<dyn Write + Send>>;

fn write_report(out: &mut Option<Out>, to_stderr: bool, report: &MetricsReport) -> io::Result<()> {
    let line = serde_json::to_string(report).map_err(io::Error::other)?;
    if let Some(w) = out {
        writeln!(w, "{line}")?;
    }
    if to_stderr {
        eprintln!("{line}");
    }
    Ok(())
}

/// `-` is stdout.
fn create(path: &std::path::Path) -> Result<Out, PipelineError> {
    if path.as_os_str() == "-" {
        return Ok(BufWriter::new(Box::new(io::stdout())));
    }
    let f = File::create(path).map_err(PipelineError::Sink)?;
    Ok(BufWriter::new(Box::new(f)))
}

fn sink_stage(
    rx: Receiver<Labelled>,
    cfg: &PipelineConfig,
    start: Instant,
    collect: bool,
) -> Result<(u64, MetricsReport, Vec<SinkRecord>), PipelineError> {
    let mut out = cfg.out.as_deref().map(create).transpose()?;
    let mut metrics_out = cfg.metrics_out.as_deref().map(create).transpose()?;
    let mut tracker = MetricsTracker::new(
        start,
        Duration::from_millis(cfg.report_interval_ms),
        cfg.accuracy_window,
    );
    let mut records = Vec::new();
    let mut labelled = 0u64;
    let mut failure: Option<io::Error> = None;
    for chunk in rx {
        let now = Instant::now();
        for (lt, side) in chunk {
            labelled += 1;
            tracker.observe(lt.label, side.truth, now.saturating_duration_since(side.ingested_at));
            let rec = SinkRecord {
                seq: lt.origin.seq,
                ts: lt.origin.ts,
                emit_ts: lt.emit_ts,
                label: lt.label,
                sum_pos: lt.sum_pos,
                sum_neg: lt.sum_neg,
                known_token_count: lt.known_token_count,
                true_label: side.truth,
            };
            if failure.is_none() {
                if let Some(w) = out.as_mut() {
                    let res = serde_json::to_writer(&mut *w, &rec)
                        .map_err(io::Error::other)
                        .and_then(|_| w.write_all(b"\n"));
                    if let Err(e) = res {
                        failure = Some(e);
                    }
                }
            }
            if collect {
                records.push(rec);
            }
        }
        if let Some(report) = tracker.poll(now) {
            if let Err(e) = write_report(&mut metrics_out, cfg.metrics_stderr, &report) {
                failure.get_or_insert(e);
            }
        }
    }
    let report = tracker.report(Instant::now());
    let mut finish = || -> io::Result<()> {
        write_report(&mut metrics_out, cfg.metrics_stderr, &report)?;
        if let Some(w) = out.as_mut() {
            w.flush()?;
        }
        if let Some(w) = metrics_out.as_mut() {
            w.flush()?;
        }
        Ok(())
    };
    if let Some(e) = failure {
        return Err(PipelineError::Sink(e));
    }
    finish().map_err(PipelineError::Sink)?;
    Ok((labelled, report, records))
}
