mod args;
mod config_file;

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::process::ExitCode;

use anyhow::Context;
use clap::error::ErrorKind;
use clap::Parser;
use serde_json::json;
use streamlabel_core::bench::{run_experiment, shuffle_records, synthetic_reviews, write_csv, Experiment, SyntheticSpec};
use streamlabel_core::dataset::{read_all, write_records, Format};
use streamlabel_core::embedding::{read_snapshot, word_similarity, write_snapshot};
use streamlabel_core::metrics::{regen_by_length, regen_skew, LengthBuckets};
use streamlabel_core::pipeline::{Input, Pipeline, PipelineConfig, Resources, RunSummary};
use streamlabel_core::preprocess::{tokenize, Stopwords};
use streamlabel_core::{ConfigError, PipelineError};

use args::{build_config, BenchArgs, Cli, Command, RegenCommand, RestoreArgs};

/// Failure classes mapped to exit codes.
enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config(_) => Failure::Config(e.into()),
            other => Failure::Runtime(other.into()),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.into())
    }
}

fn runtime<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Runtime(e.into())
}

fn config<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Config(e.into())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let argv = match config_file::expand(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let result = match cli.command {
        Command::Run(a) => {
            let mut cfg = build_config(&a.io, &a.model);
            if cfg.out.is_none() {
                cfg.out = Some("-".into());
            }
            run(cfg, a.snapshot_out.as_deref())
        }
        Command::Snapshot(a) => run(build_config(&a.io, &a.model), Some(&a.model_out)),
        Command::Restore(a) => restore(&a),
        Command::Bench(a) => bench(&a),
        Command::Regen(r) => regen(r),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn summary_json(s: &RunSummary) -> serde_json::Value {
    json!({
        "ingested": s.ingested,
        "malformed": s.malformed,
        "labelled": s.labelled,
        "elapsed_s": s.elapsed.as_secs_f64(),
        "vocab": s.model.len(),
        "report": s.report,
    })
}

fn run(cfg: PipelineConfig, snapshot_out: Option<&Path>) -> Result<(), Failure> {
    if let Input::File(p) = &cfg.input {
        if !p.is_file() {
            return Err(config(anyhow::anyhow!("input {} is not a readable file", p.display())));
        }
    }
    eprintln!("config: {}", serde_json::to_string(&cfg).map_err(runtime)?);
    let pipeline = Pipeline::new(cfg)?;
    let stop = pipeline.shutdown_handle();
    ctrlc::set_handler(move || stop.store(true, std::sync::atomic::Ordering::Relaxed)).map_err(runtime)?;
    let summary = pipeline.run()?;
    if let Some(path) = snapshot_out {
        let f = File::create(path)
            .with_context(|| format!("cannot create {}", path.display()))
            .map_err(runtime)?;
        let mut w = BufWriter::new(f);
        write_snapshot(&summary.model, &mut w).map_err(runtime)?;
        w.flush().map_err(runtime)?;
    }
    eprintln!("summary: {}", summary_json(&summary));
    Ok(())
}

fn restore(a: &RestoreArgs) -> Result<(), Failure> {
    let f = File::open(&a.model)
        .with_context(|| format!("cannot open {}", a.model.display()))
        .map_err(config)?;
    let model = read_snapshot(BufReader::new(f)).map_err(runtime)?;
    println!(
        "{}",
        json!({
            "dim": model.dim(),
            "vocab": model.len(),
            "total_tokens": model.total_tokens(),
            "finite": model.is_finite(),
        })
    );
    if let Some(word) = &a.similar {
        if !model.contains(word) {
            return Err(config(anyhow::anyhow!("{word:?} is not in the model")));
        }
        let mut sims: Vec<(&str, f32)> = model
            .words()
            .iter()
            .filter(|w| *w != word)
            .filter_map(|w| word_similarity(&model, word, w).map(|s| (w.as_str(), s)))
            .collect();
        sims.sort_by(|x, y| y.1.total_cmp(&x.1));
        for (w, s) in sims.into_iter().take(a.top) {
            println!("{w}\t{s:.4}");
        }
    }
    if let Some(path) = &a.export {
        let mut w = BufWriter::new(File::create(path).map_err(runtime)?);
        let mut write = || -> std::io::Result<()> {
            writeln!(w, "{} {}", model.len(), model.dim())?;
            for (i, word) in model.words().iter().enumerate() {
                write!(w, "{word}")?;
                for x in model.vector_at(i) {
                    write!(w, " {x}")?;
                }
                writeln!(w)?;
            }
            w.flush()
        };
        write().map_err(runtime)?;
    }
    Ok(())
}

fn bench(a: &BenchArgs) -> Result<(), Failure> {
    let experiments: Vec<Experiment> = if a.experiment == "all" {
        Experiment::ALL.to_vec()
    } else {
        a.experiment
            .split(',')
            .map(|s| s.trim().parse::<Experiment>())
            .collect::<Result<_, _>>()?
    };
    let mut base = PipelineConfig::default();
    a.model.apply(&mut base);
    base.validate()?;
    let res = Resources::load(&base)?;
    let (dataset, mut records) = match &a.input {
        Some(path) => {
            let (recs, bad) = read_all(path, a.format)
                .with_context(|| format!("cannot read {}", path.display()))
                .map_err(config)?;
            if bad > 0 {
                log::warn!("skipped {bad} malformed rows");
            }
            let name = path.file_stem().map_or("input".into(), |s| s.to_string_lossy().into_owned());
            (name, recs)
        }
        None => {
            let spec = SyntheticSpec {
                records: a.synthetic,
                seed: base.seed,
                ..SyntheticSpec::default()
            };
            ("synthetic".to_string(), synthetic_reviews(&spec, &res.reference, &res.stopwords))
        }
    };
    if a.shuffle {
        shuffle_records(&mut records, base.seed);
    }
    if let Some(n) = a.limit {
        records.truncate(n);
    }
    fs::create_dir_all(&a.out_dir).map_err(runtime)?;
    for exp in experiments {
        let rows = run_experiment(exp, &dataset, &records, &base, &res)?;
        let path = a.out_dir.join(format!("{exp}.csv"));
        write_csv(File::create(&path).map_err(runtime)?, &rows).map_err(runtime)?;
        eprintln!("wrote {} ({} rows)", path.display(), rows.len());
    }
    Ok(())
}

fn regen(cmd: RegenCommand) -> Result<(), Failure> {
    match cmd {
        RegenCommand::Skew {
            input,
            format,
            fraction,
            total,
            seed,
            out,
        } => {
            if !(0.0..=1.0).contains(&fraction) {
                return Err(config(anyhow::anyhow!("fraction must be in [0, 1]")));
            }
            let (records, bad) = read_all(&input, format)
                .with_context(|| format!("cannot read {}", input.display()))
                .map_err(config)?;
            let subset = regen_skew(&records, fraction, total, seed);
            write_records(File::create(&out).map_err(runtime)?, format, &subset).map_err(runtime)?;
            let pos = subset
                .iter()
                .filter(|r| r.label == Some(streamlabel_core::Polarity::Positive))
                .count();
            eprintln!(
                "{}",
                json!({"written": subset.len(), "positive": pos, "negative": subset.len() - pos, "malformed": bad})
            );
        }
        RegenCommand::Length {
            input,
            format,
            bounds,
            stopwords,
            out_dir,
        } => {
            let stop = match stopwords {
                Some(p) => Stopwords::load(&p)?,
                None => Stopwords::default(),
            };
            let (records, _) = read_all(&input, format)
                .with_context(|| format!("cannot read {}", input.display()))
                .map_err(config)?;
            let buckets = LengthBuckets::new(bounds);
            let parts = regen_by_length(&records, &buckets, |t| tokenize(t, &stop).len());
            fs::create_dir_all(&out_dir).map_err(runtime)?;
            let ext = if format == Format::Plain { "txt" } else { "csv" };
            for (i, part) in parts.iter().enumerate() {
                let path = out_dir.join(format!("len_{}.{ext}", buckets.label(i)));
                write_records(File::create(&path).map_err(runtime)?, format, part).map_err(runtime)?;
                eprintln!("{}: {} records", path.display(), part.len());
            }
        }
    }
    Ok(())
}
