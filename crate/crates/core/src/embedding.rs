//! Incremental skip-gram training with negative sampling.
//!
//! Each batch first grows the vocabulary ([`observe_vocab`]) and then runs
//! one SGNS pass over it ([`train_batch`]). The learning rate is constant
//! because the stream has no known length to decay against.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use num_traits::Float;
use rand::distributions::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::WeightedAliasIndex;

use crate::error::ModelError;
use crate::model::EmbeddingModel;
use crate::types::{CleanTuple, HyperParams};

/// Unigram^0.75 sampler over the vocabulary as it was when built.
#[derive(Debug, Clone)]
pub struct NegativeSampler {
    alias: WeightedAliasIndex<f64>,
    built_for: usize,
}

impl NegativeSampler {
    pub fn new(model: &EmbeddingModel) -> Option<Self> {
        if model.is_empty() {
            return None;
        }
        let weights = model.counts().iter().map(|&c| (c as f64).powf(0.75)).collect();
        Some(NegativeSampler {
            alias: WeightedAliasIndex::new(weights).ok()?,
            built_for: model.len(),
        })
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        self.alias.sample(rng)
    }

    pub fn vocab_size(&self) -> usize {
        self.built_for
    }
}

/// Rebuilds the negative-sampling distribution from current counts.
pub fn refresh_sampler(model: &mut EmbeddingModel) {
    model.sampler = NegativeSampler::new(model);
}

/// Early in a stream the vocabulary grows quickly; a sampler built for less
/// than half of it is rebuilt before training.
fn ensure_sampler(model: &mut EmbeddingModel) {
    let stale = match &model.sampler {
        None => true,
        Some(s) => model.len() > 2 * s.built_for || model.len() < s.built_for,
    };
    if stale {
        refresh_sampler(model);
    }
}

/// Counts every token and gives a fresh vector to each word whose count
/// reaches `min_count`. Input vectors start uniform in `[-0.5/d, 0.5/d]`,
/// context vectors at zero. The LRU stamp of a word is the seq of the last
/// tuple it appeared in.
pub fn observe_vocab(model: &mut EmbeddingModel, tuples: &[CleanTuple], min_count: u64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = model.dim();
    let bound = 0.5 / dim as f32;
    let zeros = vec![0.0f32; dim];
    let mut init = vec![0.0f32; dim];
    let mut n_tokens = 0u64;
    for t in tuples {
        let clock = t.origin.seq;
        for token in &t.tokens {
            n_tokens += 1;
            if let Some(i) = model.index_of(token) {
                model.bump(i, 1, clock);
                continue;
            }
            let pending = model.pending_mut();
            let count = match pending.get_mut(token.as_str()) {
                Some(c) => {
                    *c += 1;
                    *c
                }
                None => {
                    pending.insert(token.clone(), 1);
                    1
                }
            };
            if count >= min_count {
                init.iter_mut().for_each(|x| *x = rng.gen_range(-bound..=bound));
                model.insert(token.clone(), &init, &zeros, count, clock);
            }
        }
    }
    model.add_tokens(n_tokens);
}

/// `ln(1 + e^x)` without overflow.
fn softplus<F: Float>(x: F) -> F {
    let zero = F::zero();
    x.max(zero) + (-x.abs()).exp().ln_1p()
}

fn sigmoid<F: Float>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

/// One target of an SGNS pair: accumulates the center gradient into
/// `center_grad`, updates `target` in place and returns its loss term.
/// `center` is read at its pre-step value.
#[inline]
pub fn sgns_target<F: Float>(
    center: &[F],
    target: &mut [F],
    is_positive: bool,
    lr: F,
    center_grad: &mut [F],
) -> F {
    let f = center
        .iter()
        .zip(target.iter())
        .fold(F::zero(), |acc, (&a, &b)| acc + a * b);
    let label = if is_positive { F::one() } else { F::zero() };
    let g = (label - sigmoid(f)) * lr;
    for ((acc, t), &c) in center_grad.iter_mut().zip(target.iter_mut()).zip(center) {
        *acc = *acc + g * *t;
        *t = *t + g * c;
    }
    if is_positive {
        softplus(-f)
    } else {
        softplus(f)
    }
}

/// Full SGNS step for one (center, context, negatives) triple. Applies
/// `-lr * gradient` to every vector and returns the loss before the step.
pub fn sgns_step<F: Float>(center: &mut [F], context: &mut [F], negatives: &mut [&mut [F]], lr: F) -> F {
    let mut grad = vec![F::zero(); center.len()];
    let mut loss = sgns_target(center, context, true, lr, &mut grad);
    for neg in negatives.iter_mut() {
        loss = loss + sgns_target(center, neg, false, lr, &mut grad);
    }
    center.iter_mut().zip(&grad).for_each(|(c, &g)| *c = *c + g);
    loss
}

/// Runs one skip-gram negative-sampling pass over the batch and returns the
/// summed negative log-likelihood. Words without vectors (below the minimum
/// count) are skipped as centers and as contexts but keep their position.
pub fn train_batch(model: &mut EmbeddingModel, tuples: &[CleanTuple], hp: &HyperParams, seed: u64) -> f64 {
    if model.is_empty() {
        return 0.0;
    }
    ensure_sampler(model);
    let Some(sampler) = model.sampler.take() else {
        return 0.0;
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = model.dim();
    let lr = hp.learning_rate;
    let window = hp.window;
    let total = model.total_tokens().max(1) as f64;
    let mut grad = vec![0.0f32; dim];
    let mut center = vec![0.0f32; dim];
    let mut negs = Vec::with_capacity(hp.negative_samples);
    let mut positions: Vec<Option<usize>> = Vec::new();
    let mut loss = 0.0f64;

    for t in tuples {
        positions.clear();
        positions.extend(t.tokens.iter().map(|w| model.index_of(w)));
        if let Some(threshold) = hp.subsample {
            for slot in positions.iter_mut() {
                if let Some(i) = *slot {
                    let freq = model.count_at(i) as f64 / total;
                    let keep = ((threshold / freq).sqrt() + threshold / freq).min(1.0);
                    if rng.gen::<f64>() > keep {
                        *slot = None;
                    }
                }
            }
        }
        for i in 0..positions.len() {
            let Some(c) = positions[i] else { continue };
            let lo = i.saturating_sub(window);
            let hi = (i + window).min(positions.len() - 1);
            for j in lo..=hi {
                if j == i {
                    continue;
                }
                let Some(o) = positions[j] else { continue };
                negs.clear();
                for _ in 0..hp.negative_samples {
                    let n = sampler.sample(&mut rng);
                    if n != o {
                        negs.push(n);
                    }
                }
                center.copy_from_slice(model.vector_at(c));
                grad.fill(0.0);
                let mut pair_loss;
                {
                    let (_, ctx) = model.rows_mut(c, o);
                    pair_loss = sgns_target(&center, ctx, true, lr, &mut grad);
                }
                for &n in &negs {
                    let (_, neg) = model.rows_mut(c, n);
                    pair_loss += sgns_target(&center, neg, false, lr, &mut grad);
                }
                let (u, _) = model.rows_mut(c, o);
                u.iter_mut().zip(&grad).for_each(|(x, g)| *x += g);
                loss += f64::from(pair_loss);
            }
        }
    }
    model.sampler = Some(sampler);
    debug_assert!(model.is_finite(), "training produced a non-finite component");
    loss
}

/// Cosine of the input vectors of two words, if both are known.
pub fn word_similarity(model: &EmbeddingModel, a: &str, b: &str) -> Option<f32> {
    Some(crate::labeller::cosine(model.vector(a)?, model.vector(b)?))
}

const SNAPSHOT_MAGIC: &[u8; 4] = b"SLEM";
const SNAPSHOT_VERSION: u32 = 1;
const MAX_WORD_BYTES: usize = 1 << 16;

/// Writes the model in the little-endian snapshot format:
/// magic, version, dim, vocab size, then per word its UTF-8 bytes (u32
/// length prefix), count, last_used, input vector and context vector as
/// f32. Counts of words below the minimum count are not persisted.
pub fn write_snapshot<W: Write>(model: &EmbeddingModel, mut out: W) -> Result<(), ModelError> {
    out.write_all(SNAPSHOT_MAGIC)?;
    out.write_u32::<LittleEndian>(SNAPSHOT_VERSION)?;
    out.write_u32::<LittleEndian>(model.dim() as u32)?;
    out.write_u64::<LittleEndian>(model.len() as u64)?;
    for (i, word) in model.words().iter().enumerate() {
        out.write_u32::<LittleEndian>(word.len() as u32)?;
        out.write_all(word.as_bytes())?;
        out.write_u64::<LittleEndian>(model.count_at(i))?;
        out.write_u64::<LittleEndian>(model.last_used_at(i))?;
        for &x in model.vector_at(i).iter().chain(model.context_at(i)) {
            out.write_f32::<LittleEndian>(x)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_snapshot<R: Read>(mut input: R) -> Result<EmbeddingModel, ModelError> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != SNAPSHOT_MAGIC {
        return Err(ModelError::Format("bad magic".into()));
    }
    let version = input.read_u32::<LittleEndian>()?;
    if version != SNAPSHOT_VERSION {
        return Err(ModelError::Format(format!("unsupported version {version}")));
    }
    let dim = input.read_u32::<LittleEndian>()? as usize;
    if dim == 0 {
        return Err(ModelError::Format("zero dimension".into()));
    }
    let vocab = input.read_u64::<LittleEndian>()?;
    let mut model = EmbeddingModel::new(dim);
    let mut vector = vec![0.0f32; dim];
    let mut context = vec![0.0f32; dim];
    let mut total = 0u64;
    for _ in 0..vocab {
        let len = input.read_u32::<LittleEndian>()? as usize;
        if len > MAX_WORD_BYTES {
            return Err(ModelError::Format(format!("word length {len} exceeds limit")));
        }
        let mut bytes = vec![0u8; len];
        input.read_exact(&mut bytes)?;
        let word = String::from_utf8(bytes).map_err(|e| ModelError::Format(e.to_string()))?;
        let count = input.read_u64::<LittleEndian>()?;
        let last_used = input.read_u64::<LittleEndian>()?;
        input.read_f32_into::<LittleEndian>(&mut vector)?;
        input.read_f32_into::<LittleEndian>(&mut context)?;
        if count == 0 {
            return Err(ModelError::Format(format!("word {word:?} has zero count")));
        }
        if !vector.iter().chain(&context).all(|x| x.is_finite()) {
            return Err(ModelError::Format(format!("word {word:?} has non-finite components")));
        }
        if model.contains(&word) {
            return Err(ModelError::Format(format!("duplicate word {word:?}")));
        }
        total += count;
        model.insert(word, &vector, &context, count, last_used);
    }
    model.set_total_tokens(total);
    Ok(model)
}
