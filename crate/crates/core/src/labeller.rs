//! Word-centroid labelling.
//!
//! A tuple is reduced to the mean of its known word vectors, and that single
//! centroid is compared by cosine against every reference word. The cost is
//! therefore one cosine per reference word, whatever the tuple length.

use crate::model::EmbeddingModel;
use crate::trend::TrendState;
use crate::types::{Polarity, ReferenceTable};

/// Cosine similarity; 0 when either vector has zero norm.
pub fn cosine(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let (mut dot, mut na, mut nb) = (0.0f32, 0.0f32, 0.0f32);
    for (&x, &y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoKnownWords;

/// Componentwise mean over the tokens present in the model, with the number
/// of tokens that contributed. Unknown tokens are skipped.
pub fn centroid<S: AsRef<str>>(
    model: &EmbeddingModel,
    tokens: &[S],
) -> Result<(Vec<f32>, usize), NoKnownWords> {
    let mut sum = vec![0.0f32; model.dim()];
    let mut known = 0usize;
    for token in tokens {
        if let Some(v) = model.vector(token.as_ref()) {
            sum.iter_mut().zip(v).for_each(|(s, x)| *s += x);
            known += 1;
        }
    }
    if known == 0 {
        return Err(NoKnownWords);
    }
    let n = known as f32;
    sum.iter_mut().for_each(|s| *s /= n);
    Ok((sum, known))
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Score {
    pub sum_pos: f32,
    pub sum_neg: f32,
    /// Reference words that had a vector.
    pub pos_covered: usize,
    pub neg_covered: usize,
    /// Cosine evaluations performed.
    pub cosine_evals: usize,
}

/// Sums the cosine between the centroid and every reference word known to
/// the model. Missing reference words contribute 0.
pub fn score(model: &EmbeddingModel, centroid: &[f32], reference: &ReferenceTable, normalize: bool) -> Score {
    let mut s = Score::default();
    for word in reference.positive() {
        if let Some(v) = model.vector(word) {
            s.sum_pos += cosine(centroid, v);
            s.pos_covered += 1;
            s.cosine_evals += 1;
        }
    }
    for word in reference.negative() {
        if let Some(v) = model.vector(word) {
            s.sum_neg += cosine(centroid, v);
            s.neg_covered += 1;
            s.cosine_evals += 1;
        }
    }
    if normalize {
        if s.pos_covered > 0 {
            s.sum_pos /= s.pos_covered as f32;
        }
        if s.neg_covered > 0 {
            s.sum_neg /= s.neg_covered as f32;
        }
    }
    s
}

/// Weighted comparison of the two sums. Ties and tuples without known words
/// fall back to the majority of the current trend window, then Positive.
pub fn decide(sum_pos: f32, sum_neg: f32, trend: &TrendState, known_count: usize) -> Polarity {
    let fallback = || trend.majority().unwrap_or(Polarity::Positive);
    if known_count == 0 {
        return fallback();
    }
    let (wp, wn) = trend.coefficients();
    let pos = wp * sum_pos;
    let neg = wn * sum_neg;
    if pos > neg {
        Polarity::Positive
    } else if pos < neg {
        Polarity::Negative
    } else {
        fallback()
    }
}

/// Outcome of labelling one token list.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Judgement {
    pub label: Polarity,
    pub score: Score,
    pub known_count: usize,
}

/// Centroid, score and decision in one call.
pub fn label_tokens<S: AsRef<str>>(
    model: &EmbeddingModel,
    tokens: &[S],
    reference: &ReferenceTable,
    trend: &TrendState,
    normalize: bool,
) -> Judgement {
    match centroid(model, tokens) {
        Ok((c, known)) => {
            let s = score(model, &c, reference, normalize);
            Judgement {
                label: decide(s.sum_pos, s.sum_neg, trend, known),
                score: s,
                known_count: known,
            }
        }
        Err(NoKnownWords) => Judgement {
            label: decide(0.0, 0.0, trend, 0),
            score: Score::default(),
            known_count: 0,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn model(rows: &[(&str, &[f32])]) -> EmbeddingModel {
        let mut m = EmbeddingModel::new(rows[0].1.len());
        for (w, v) in rows {
            m.insert(w.to_string(), v, &vec![0.0; v.len()], 1, 0);
        }
        m
    }

    fn neutral_trend() -> TrendState {
        TrendState::new(100, 0.05, 0.05, 0.5, 1.5)
    }

    #[test]
    fn cosine_examples() {
        let v = [0.3f32, -2.0, 7.5];
        assert_abs_diff_eq!(cosine(&v, &v), 1.0, epsilon = 1e-6);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]), 0.0);
        // 32 / (sqrt(14) * sqrt(77))
        let expected = 32.0f64 / (14.0f64.sqrt() * 77.0f64.sqrt());
        assert_abs_diff_eq!(f64::from(cosine(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0])), expected, epsilon = 1e-6);
        assert_abs_diff_eq!(expected, 0.974631, epsilon = 1e-6);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 1.0]), 0.0);
    }

    #[test]
    fn centroid_examples() {
        let m = model(&[("hate", &[1.0, 2.0, 3.0]), ("mask", &[3.0, 4.0, 5.0])]);
        assert_eq!(centroid(&m, &["hate", "mask"]).unwrap(), (vec![2.0, 3.0, 4.0], 2));
        assert_eq!(centroid(&m, &["mask"]).unwrap(), (vec![3.0, 4.0, 5.0], 1));
        assert_eq!(centroid(&m, &["hate", "nope", "mask"]).unwrap(), (vec![2.0, 3.0, 4.0], 2));
        assert_eq!(centroid(&m, &["nope"]), Err(NoKnownWords));
        assert_eq!(centroid::<&str>(&m, &[]), Err(NoKnownWords));
    }

    #[test]
    fn centroid_of_identical_vectors_is_exact() {
        let v = [0.1f32, -0.7, 1e-3];
        let m = model(&[("a", &v), ("b", &v), ("c", &v)]);
        assert_eq!(centroid(&m, &["a", "b", "c"]).unwrap().0, v);
    }

    #[test]
    fn score_examples() {
        let reference = ReferenceTable::new(vec!["p".into()], vec!["n1".into(), "n2".into()]).unwrap();
        let m = model(&[("p", &[1.0, 0.0]), ("n1", &[0.0, 1.0]), ("n2", &[-1.0, 0.0])]);
        let s = score(&m, &[1.0, 0.0], &reference, false);
        assert_eq!((s.sum_pos, s.sum_neg), (1.0, -1.0));
        assert_eq!(s.cosine_evals, 3);

        let m = model(&[("p", &[0.0, 2.0]), ("n1", &[0.0, 1.0]), ("n2", &[0.0, -3.0])]);
        let s = score(&m, &[1.0, 0.0], &reference, false);
        assert_eq!((s.sum_pos, s.sum_neg), (0.0, 0.0));

        let m = model(&[("p", &[1.0, 1.0]), ("n2", &[1.0, 1.0])]);
        let s = score(&m, &[2.0, 2.0], &reference, false);
        assert_abs_diff_eq!(s.sum_pos, s.pos_covered as f32, epsilon = 1e-6);
        assert_abs_diff_eq!(s.sum_neg, s.neg_covered as f32, epsilon = 1e-6);
        assert_eq!((s.pos_covered, s.neg_covered, s.cosine_evals), (1, 1, 2));
    }

    #[test]
    fn normalized_sums_divide_by_coverage() {
        let reference = ReferenceTable::new(vec!["p".into()], vec!["n1".into(), "n2".into()]).unwrap();
        let m = model(&[("p", &[1.0, 0.0]), ("n1", &[1.0, 0.0]), ("n2", &[1.0, 0.0])]);
        let s = score(&m, &[1.0, 0.0], &reference, true);
        assert_eq!((s.sum_pos, s.sum_neg), (1.0, 1.0));
    }

    #[test]
    fn decide_examples() {
        let trend = neutral_trend();
        assert_eq!(decide(2.4, 1.1, &trend, 3), Polarity::Positive);
        assert_eq!(decide(1.1, 2.4, &trend, 3), Polarity::Negative);

        let mut trend = neutral_trend();
        trend.record(Polarity::Negative);
        trend.record(Polarity::Negative);
        trend.record(Polarity::Positive);
        assert_eq!(decide(1.0, 1.0, &trend, 2), Polarity::Negative);
        assert_eq!(decide(5.0, 1.0, &trend, 0), Polarity::Negative);

        assert_eq!(decide(1.0, 1.0, &neutral_trend(), 2), Polarity::Positive);

        let mut trend = neutral_trend();
        trend.set_coefficients(1.3, 1.0);
        assert_eq!(decide(1.0, 1.2, &trend, 2), Polarity::Positive);
    }
}
