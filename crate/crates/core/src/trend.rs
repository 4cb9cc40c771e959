//! Temporal trend detection.
//!
//! Labels are counted over tumbling windows of `window_size` tuples. When a
//! window closes, the coefficient of the dominant polarity grows by `step`
//! and the other one relaxes toward 1. Windows inside the hysteresis band
//! around 50% relax both coefficients toward 1. Coefficients stay within
//! `[wc_min, wc_max]`.
//!
//! With `step == 0` the state is inert: coefficients stay at 1 and no
//! window majority is reported, so labelling reduces to comparing the raw
//! sums.

use serde::{Deserialize, Serialize};

use crate::types::{HyperParams, Polarity};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendState {
    window_size: usize,
    step: f32,
    hysteresis: f32,
    wc_min: f32,
    wc_max: f32,
    wc_pos: f32,
    wc_neg: f32,
    window_pos: usize,
    window_neg: usize,
    windows_closed: u64,
}

fn toward_one(x: f32, step: f32) -> f32 {
    if x > 1.0 {
        (x - step).max(1.0)
    } else {
        (x + step).min(1.0)
    }
}

impl TrendState {
    pub fn new(window_size: usize, step: f32, hysteresis: f32, wc_min: f32, wc_max: f32) -> Self {
        assert!(window_size > 0);
        assert!(wc_min <= 1.0 && 1.0 <= wc_max);
        TrendState {
            window_size,
            step,
            hysteresis,
            wc_min,
            wc_max,
            wc_pos: 1.0,
            wc_neg: 1.0,
            window_pos: 0,
            window_neg: 0,
            windows_closed: 0,
        }
    }

    pub fn from_params(hp: &HyperParams) -> Self {
        Self::new(hp.tdw, hp.ttd_step, hp.ttd_hysteresis, hp.wc_min, hp.wc_max)
    }

    pub fn enabled(&self) -> bool {
        self.step > 0.0
    }

    /// `(wc_pos, wc_neg)`.
    pub fn coefficients(&self) -> (f32, f32) {
        (self.wc_pos, self.wc_neg)
    }

    pub fn set_coefficients(&mut self, wc_pos: f32, wc_neg: f32) {
        self.wc_pos = wc_pos.clamp(self.wc_min, self.wc_max);
        self.wc_neg = wc_neg.clamp(self.wc_min, self.wc_max);
    }

    pub fn window_counts(&self) -> (usize, usize) {
        (self.window_pos, self.window_neg)
    }

    pub fn windows_closed(&self) -> u64 {
        self.windows_closed
    }

    /// Majority label of the current window; `None` when the window is empty,
    /// evenly split, or trend detection is disabled.
    pub fn majority(&self) -> Option<Polarity> {
        if !self.enabled() {
            return None;
        }
        match self.window_pos.cmp(&self.window_neg) {
            std::cmp::Ordering::Greater => Some(Polarity::Positive),
            std::cmp::Ordering::Less => Some(Polarity::Negative),
            std::cmp::Ordering::Equal => None,
        }
    }

    /// Counts one label. Returns the positive ratio of the window if this
    /// label closed it.
    pub fn record(&mut self, label: Polarity) -> Option<f32> {
        match label {
            Polarity::Positive => self.window_pos += 1,
            Polarity::Negative => self.window_neg += 1,
        }
        if self.window_pos + self.window_neg < self.window_size {
            return None;
        }
        let ratio = self.window_pos as f32 / self.window_size as f32;
        self.roll(ratio);
        self.window_pos = 0;
        self.window_neg = 0;
        Some(ratio)
    }

    /// Adjusts the coefficients from a closed window's positive ratio.
    pub fn roll(&mut self, pos_ratio: f32) {
        debug_assert!((0.0..=1.0).contains(&pos_ratio));
        self.windows_closed += 1;
        let step = self.step;
        if pos_ratio > 0.5 + self.hysteresis {
            self.wc_pos += step;
            self.wc_neg = toward_one(self.wc_neg, step);
        } else if pos_ratio < 0.5 - self.hysteresis {
            self.wc_neg += step;
            self.wc_pos = toward_one(self.wc_pos, step);
        } else {
            self.wc_pos = toward_one(self.wc_pos, step);
            self.wc_neg = toward_one(self.wc_neg, step);
        }
        self.wc_pos = self.wc_pos.clamp(self.wc_min, self.wc_max);
        self.wc_neg = self.wc_neg.clamp(self.wc_min, self.wc_max);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use Polarity::{Negative as N, Positive as P};

    fn state(window: usize) -> TrendState {
        TrendState::new(window, 0.05, 0.05, 0.5, 1.5)
    }

    #[test]
    fn window_of_two_positives_rolls() {
        let mut s = state(2);
        assert_eq!(s.record(P), None);
        assert_eq!(s.record(P), Some(1.0));
        assert_eq!(s.window_counts(), (0, 0));
    }

    #[test]
    fn partial_window_does_not_roll() {
        let mut s = state(100);
        for i in 0..40 {
            assert_eq!(s.record(if i % 2 == 0 { P } else { N }), None);
        }
        assert_eq!(s.windows_closed(), 0);
        assert_eq!(s.window_counts(), (20, 20));
    }

    #[test]
    fn mixed_window_ratio() {
        let mut s = state(4);
        let ratios: Vec<_> = [P, N, P, P].into_iter().filter_map(|l| s.record(l)).collect();
        assert_eq!(ratios, [0.75]);
    }

    #[test]
    fn roll_examples() {
        let mut s = state(10);
        s.roll(0.7);
        assert_abs_diff_eq!(s.coefficients().0, 1.05, epsilon = 1e-6);
        assert_eq!(s.coefficients().1, 1.0);

        let mut s = state(10);
        s.set_coefficients(1.2, 1.0);
        s.roll(0.5);
        assert_abs_diff_eq!(s.coefficients().0, 1.15, epsilon = 1e-6);
        assert_eq!(s.coefficients().1, 1.0);

        let mut s = state(10);
        s.roll(0.2);
        assert_eq!(s.coefficients().0, 1.0);
        assert_abs_diff_eq!(s.coefficients().1, 1.05, epsilon = 1e-6);
    }

    #[test]
    fn positive_streak_clamps_at_upper_bound() {
        // 1.0 + 20 * 0.05 = 2.0 would exceed the 1.5 clamp.
        let mut s = state(10);
        for _ in 0..20 {
            s.roll(1.0);
        }
        assert_eq!(s.coefficients(), (1.5, 1.0));
    }

    #[test]
    fn disabled_state_is_inert() {
        let mut s = TrendState::new(2, 0.0, 0.05, 0.5, 1.5);
        for _ in 0..10 {
            s.record(P);
        }
        s.record(P);
        assert_eq!(s.coefficients(), (1.0, 1.0));
        assert_eq!(s.majority(), None);
    }

    #[test]
    fn majority_of_current_window() {
        let mut s = state(10);
        assert_eq!(s.majority(), None);
        s.record(N);
        assert_eq!(s.majority(), Some(N));
        s.record(P);
        assert_eq!(s.majority(), None);
        s.record(P);
        assert_eq!(s.majority(), Some(P));
    }

    proptest! {
        #[test]
        fn coefficients_stay_in_bounds(labels in proptest::collection::vec(any::<bool>(), 0..2000),
                                       window in 1usize..50, step in 0.0f32..0.5) {
            let mut s = TrendState::new(window, step, 0.05, 0.5, 1.5);
            for l in labels {
                s.record(if l { P } else { N });
                let (p, n) = s.coefficients();
                prop_assert!((0.5..=1.5).contains(&p) && (0.5..=1.5).contains(&n));
                let (wp, wn) = s.window_counts();
                prop_assert!(wp + wn <= window);
            }
        }

        #[test]
        fn balanced_stream_converges_to_one(seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut s = state(1000);
            s.set_coefficients(1.5, 0.5);
            // Exactly balanced windows: 500 of each label in shuffled order.
            for _ in 0..40 {
                let mut window: Vec<Polarity> = [vec![P; 500], vec![N; 500]].concat();
                for i in (1..window.len()).rev() {
                    window.swap(i, rng.gen_range(0..=i));
                }
                for l in window {
                    s.record(l);
                }
            }
            let (p, n) = s.coefficients();
            prop_assert!((p - 1.0).abs() <= 0.05 && (n - 1.0).abs() <= 0.05);
        }
    }
}
