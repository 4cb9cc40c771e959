//! Helpers and independent oracles shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use streamlabel_core::bench::{synthetic_reviews, SyntheticSpec};
use streamlabel_core::dataset::Record;
use streamlabel_core::embedding::sgns_step;
use streamlabel_core::pipeline::{ClockMode, PipelineConfig, Resources};
use streamlabel_core::preprocess::Stopwords;
use streamlabel_core::types::{MergeTrigger, Polarity, ReferenceTable};
use streamlabel_core::EmbeddingModel;

pub fn resources() -> Resources {
    Resources {
        reference: ReferenceTable::default(),
        stopwords: Stopwords::default(),
        lexicon: None,
        init_model: None,
    }
}

/// Logical clock, count-based merging, small batches: reproducible runs.
pub fn det_config() -> PipelineConfig {
    let mut cfg = PipelineConfig {
        clock: ClockMode::Logical,
        ..PipelineConfig::default()
    };
    cfg.hp.batch_size = 200;
    cfg.hp.merge = MergeTrigger::EveryBatches(2);
    cfg
}

pub fn corpus(records: usize, seed: u64) -> Vec<Record> {
    let spec = SyntheticSpec {
        records,
        seed,
        ..SyntheticSpec::default()
    };
    synthetic_reviews(&spec, &ReferenceTable::default(), &Stopwords::default())
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One SGNS objective instance: input vector `u`, context `v`, negatives
/// `n`, flattened as `[u, v, n0, n1, ..]`.
#[derive(Debug, Clone)]
pub struct GradInstance {
    pub dim: usize,
    pub negatives: usize,
    pub params: Vec<f64>,
}

impl GradInstance {
    pub fn random(rng: &mut ChaCha8Rng, max_vocab: usize, max_dim: usize) -> Self {
        let dim = rng.gen_range(1..=max_dim);
        // Center, context and distinct negatives all come from the vocab.
        let vocab = rng.gen_range(2..=max_vocab);
        let negatives = rng.gen_range(0..=vocab - 2);
        let params = (0..(2 + negatives) * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        GradInstance { dim, negatives, params }
    }

    /// `-ln σ(u·v) - Σ ln σ(-u·n)`, written out directly.
    pub fn loss(&self, p: &[f64]) -> f64 {
        let d = self.dim;
        let u = &p[..d];
        let mut l = softplus(-dot(u, &p[d..2 * d]));
        for k in 0..self.negatives {
            let n = &p[(2 + k) * d..(3 + k) * d];
            l += softplus(dot(u, n));
        }
        l
    }

    pub fn numeric_gradient(&self, h: f64) -> Vec<f64> {
        let mut p = self.params.clone();
        (0..p.len())
            .map(|i| {
                let x = p[i];
                p[i] = x + h;
                let up = self.loss(&p);
                p[i] = x - h;
                let down = self.loss(&p);
                p[i] = x;
                (up - down) / (2.0 * h)
            })
            .collect()
    }

    /// Gradient implied by one library step with learning rate 1:
    /// `before - after`.
    pub fn analytic_gradient(&self) -> (Vec<f64>, f64) {
        let d = self.dim;
        let mut p = self.params.clone();
        let loss = {
            let (u, rest) = p.split_at_mut(d);
            let (v, negs) = rest.split_at_mut(d);
            let mut rows: Vec<&mut [f64]> = negs.chunks_mut(d).collect();
            sgns_step(u, v, &mut rows, 1.0)
        };
        let g = self.params.iter().zip(&p).map(|(b, a)| b - a).collect();
        (g, loss)
    }
}

pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt() + b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

/// Small random model over words `w0..w{n}` with integer-free vectors.
pub fn random_model(rng: &mut ChaCha8Rng, dim: usize, words: &[String]) -> EmbeddingModel {
    let mut m = EmbeddingModel::new(dim);
    for w in words {
        let v: Vec<f32> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c: Vec<f32> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        m.insert(w.clone(), &v, &c, rng.gen_range(1..100), rng.gen_range(0..1000));
    }
    m
}

pub fn random_pair(seed: u64) -> (EmbeddingModel, EmbeddingModel) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = rng.gen_range(1..=6);
    let pool: Vec<String> = (0..12).map(|i| format!("w{i}")).collect();
    let pick = |rng: &mut ChaCha8Rng| -> Vec<String> { pool.iter().filter(|_| rng.gen_bool(0.5)).cloned().collect() };
    let (wa, wb) = (pick(&mut rng), pick(&mut rng));
    (random_model(&mut rng, dim, &wa), random_model(&mut rng, dim, &wb))
}

/// Plain comparison of the two sums, Positive on ties or no known words.
pub fn untrended_label(sum_pos: f32, sum_neg: f32, known: usize) -> Polarity {
    if known > 0 && sum_neg > sum_pos {
        Polarity::Negative
    } else {
        Polarity::Positive
    }
}

/// Mean of the cosines, recomputed in f64 from the model.
pub fn oracle_sums(model: &EmbeddingModel, tokens: &[String], reference: &ReferenceTable) -> Option<(f64, f64)> {
    let known: Vec<&[f32]> = tokens.iter().filter_map(|t| model.vector(t)).collect();
    if known.is_empty() {
        return None;
    }
    let d = model.dim();
    let mut c = vec![0.0f64; d];
    for v in &known {
        for (s, x) in c.iter_mut().zip(*v) {
            *s += f64::from(*x);
        }
    }
    c.iter_mut().for_each(|s| *s /= known.len() as f64);
    let cos = |v: &[f32]| {
        let v: Vec<f64> = v.iter().map(|&x| f64::from(x)).collect();
        let (na, nb) = (dot(&c, &c).sqrt(), dot(&v, &v).sqrt());
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            dot(&c, &v) / (na * nb)
        }
    };
    let sum = |ws: &[String]| ws.iter().filter_map(|w| model.vector(w)).map(cos).sum::<f64>();
    Some((sum(reference.positive()), sum(reference.negative())))
}
