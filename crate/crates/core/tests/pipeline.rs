mod common;

use std::io::Write;
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::Ordering;
use std::time::Duration;

use common::{corpus, det_config, resources};
use streamlabel_core::dataset::{write_records, Format};
use streamlabel_core::embedding::{observe_vocab, train_batch};
use streamlabel_core::pipeline::{Algo, Input, Pipeline, PipelineConfig, SinkRecord};
use streamlabel_core::preprocess::{tokenize_and_filter, Stopwords};
use streamlabel_core::types::{HyperParams, Strategy, Tuple};
use streamlabel_core::EmbeddingModel;

fn run_file(cfg: PipelineConfig) -> streamlabel_core::RunSummary {
    Pipeline::with_resources(cfg, resources())
        .unwrap()
        .collect_records(true)
        .run()
        .unwrap()
}

fn yelp_file_with_bad_rows(dir: &std::path::Path, n: usize) -> (std::path::PathBuf, usize) {
    let mut buf = Vec::new();
    write_records(&mut buf, Format::Yelp, &corpus(n, 1)).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut out = String::new();
    let mut bad = 0;
    for (i, line) in text.lines().enumerate() {
        out.push_str(line);
        out.push('\n');
        if i % 97 == 0 {
            out.push_str("\"7\",\"not a label\"\n\"2\"\n");
            bad += 2;
        }
    }
    let path = dir.join("in.csv");
    std::fs::write(&path, out).unwrap();
    (path, bad)
}

#[test]
fn conservation_across_workers_and_strategies() {
    let dir = tempfile::tempdir().unwrap();
    let (path, bad) = yelp_file_with_bad_rows(dir.path(), 1500);
    for workers in [1, 2, 4, 8] {
        for strategy in [Strategy::Local, Strategy::Global, Strategy::Hybrid] {
            let mut cfg = det_config();
            cfg.input = Input::File(path.clone());
            cfg.format = Format::Yelp;
            cfg.workers = workers;
            cfg.hp.strategy = strategy;
            cfg.hp.batch_size = 100;
            let s = run_file(cfg);
            assert_eq!(s.malformed as usize, bad);
            assert_eq!(s.ingested, 1500);
            assert_eq!(s.labelled, 1500, "{workers} {strategy:?}");
            let mut seqs: Vec<u64> = s.records.iter().map(|r| r.seq).collect();
            seqs.sort_unstable();
            assert!(seqs.iter().copied().eq(0..1500));
        }
    }
}

#[test]
fn single_worker_runs_are_bitwise_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (path, _) = yelp_file_with_bad_rows(dir.path(), 3000);
    let run = |name: &str| {
        let out = dir.path().join(name);
        let mut cfg = det_config();
        cfg.input = Input::File(path.clone());
        cfg.format = Format::Yelp;
        cfg.out = Some(out.clone());
        run_file(cfg);
        std::fs::read(out).unwrap()
    };
    let (a, b) = (run("a.jsonl"), run("b.jsonl"));
    assert!(!a.is_empty());
    assert_eq!(a, b);
    let first: SinkRecord = serde_json::from_slice(a.split(|&c| c == b'\n').next().unwrap()).unwrap();
    assert_eq!((first.seq, first.ts, first.emit_ts), (0, 0, 0));
    assert!(first.true_label.is_some());
}

#[test]
fn empty_input_produces_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.txt");
    std::fs::write(&path, "").unwrap();
    let mut cfg = det_config();
    cfg.input = Input::File(path);
    let s = run_file(cfg);
    assert_eq!((s.ingested, s.labelled), (0, 0));
    assert_eq!(s.report.accuracy, None);
    assert!(s.model.is_empty());
}

#[test]
fn metrics_and_output_files_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let (path, _) = yelp_file_with_bad_rows(dir.path(), 500);
    let mut cfg = det_config();
    cfg.input = Input::File(path);
    cfg.format = Format::Yelp;
    cfg.out = Some(dir.path().join("o.jsonl"));
    cfg.metrics_out = Some(dir.path().join("m.jsonl"));
    run_file(cfg);
    let out = std::fs::read_to_string(dir.path().join("o.jsonl")).unwrap();
    assert_eq!(out.lines().count(), 500);
    for line in out.lines() {
        serde_json::from_str::<SinkRecord>(line).unwrap();
    }
    let metrics = std::fs::read_to_string(dir.path().join("m.jsonl")).unwrap();
    let last: serde_json::Value = serde_json::from_str(metrics.lines().last().unwrap()).unwrap();
    assert_eq!(last["processed"], 500);
    let acc = last["accuracy"].as_f64().unwrap();
    let (tp, tn) = (last["tp"].as_u64().unwrap(), last["tn"].as_u64().unwrap());
    assert!((acc * 500.0 - (tp + tn) as f64).abs() < 1e-9);
}

#[test]
fn global_with_one_worker_matches_local() {
    let recs = corpus(2000, 4);
    let run = |strategy| {
        let mut cfg = det_config();
        cfg.hp.strategy = strategy;
        Pipeline::with_resources(cfg, resources())
            .unwrap()
            .collect_records(true)
            .run_records(recs.clone())
            .unwrap()
    };
    let (g, l) = (run(Strategy::Global), run(Strategy::Local));
    assert_eq!(g.records, l.records);
    assert_eq!(g.model, l.model);
}

#[test]
fn hybrid_workers_share_vocabulary() {
    let mut cfg = det_config();
    cfg.workers = 3;
    cfg.hp.min_word_count = 1;
    let s = Pipeline::with_resources(cfg, resources())
        .unwrap()
        .run_records(corpus(3000, 8))
        .unwrap();
    let mut local = det_config();
    local.hp.min_word_count = 1;
    local.workers = 1;
    let one = Pipeline::with_resources(local, resources())
        .unwrap()
        .run_records(corpus(3000, 8))
        .unwrap();
    assert_eq!(s.model.len(), one.model.len());
}

#[test]
fn planted_corpus_is_learned() {
    let mut cfg = det_config();
    cfg.hp.batch_size = 2000;
    let s = Pipeline::with_resources(cfg, resources())
        .unwrap()
        .run_records(corpus(20_000, 2))
        .unwrap();
    let acc = s.report.window_accuracy.unwrap();
    assert!(acc > 0.75, "window accuracy {acc}");
}

#[test]
fn baselines_run_in_the_pipeline() {
    let mut res = resources();
    res.lexicon = Some(streamlabel_core::baselines::Lexicon::from_pairs(
        res.reference
            .positive()
            .iter()
            .map(|w| (w.clone(), 1.0))
            .chain(res.reference.negative().iter().map(|w| (w.clone(), -1.0))),
    ));
    for algo in [Algo::Lexicon, Algo::Kmeans] {
        let cfg = PipelineConfig { algo, ..det_config() };
        let s = Pipeline::with_resources(cfg, res.clone())
            .unwrap()
            .run_records(corpus(3000, 5))
            .unwrap();
        assert_eq!(s.labelled, 3000);
        assert!(s.report.accuracy.unwrap() > 0.3);
    }
}

#[test]
fn loss_falls_on_a_repeated_corpus() {
    let stop = Stopwords::default();
    let hp = HyperParams {
        batch_size: 200,
        ..HyperParams::default()
    };
    let small: Vec<_> = corpus(600, 6)
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            tokenize_and_filter(
                &Tuple {
                    ts: i as u64,
                    seq: i as u64,
                    text: r.text,
                    true_label: None,
                },
                &stop,
            )
        })
        .collect();
    let mut m = EmbeddingModel::new(hp.dim);
    let mut losses = Vec::new();
    for k in 0..60 {
        let batch = &small[(k % 3) * 200..(k % 3 + 1) * 200];
        observe_vocab(&mut m, batch, hp.min_word_count, k as u64);
        losses.push(train_batch(&mut m, batch, &hp, k as u64));
    }
    let early: f64 = losses[0..10].iter().sum::<f64>() / 10.0;
    let late: f64 = losses[50..60].iter().sum::<f64>() / 10.0;
    assert!(late < early, "early {early} late {late}");
}

#[test]
fn socket_source_labels_every_line() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let mut cfg = det_config();
    cfg.batch_timeout_ms = 50;
    let p = Pipeline::with_resources(cfg, resources()).unwrap().collect_records(true);
    let stop = p.shutdown_handle();
    let lines: Vec<String> = corpus(300, 12).into_iter().map(|r| r.text).collect();
    let client = std::thread::spawn(move || {
        let mut s = TcpStream::connect(addr).unwrap();
        for l in &lines {
            writeln!(s, "{l}").unwrap();
        }
        writeln!(s).unwrap();
        drop(s);
        std::thread::sleep(Duration::from_millis(500));
        stop.store(true, Ordering::Relaxed);
    });
    let s = p.run_listener(listener).unwrap();
    client.join().unwrap();
    assert_eq!(s.labelled, 300);
    assert!(s.records.iter().all(|r| r.true_label.is_none()));
}
