//! Adaptive windowing over a stream of absolute prediction errors.

use std::collections::VecDeque;

pub const DEFAULT_DELTA: f64 = 0.002;
const MIN_SUB_WINDOW: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AdwinOutcome {
    NoCut,
    /// Elements with sequence number below `boundary` were dropped.
    /// `increased` tells whether the retained suffix has a higher mean.
    Cut { boundary: usize, increased: bool },
}

/// Variable-length window that drops its older part whenever two sub-windows
/// have significantly different means.
#[derive(Debug, Clone)]
pub struct AdwinWindow {
    elements: VecDeque<f64>,
    delta: f64,
    /// Sequence number of the front element; counts every insert since reset.
    start: usize,
}

impl AdwinWindow {
    pub fn new(delta: f64) -> Self {
        assert!(delta > 0.0 && delta < 1.0, "delta must lie in (0, 1)");
        Self { elements: VecDeque::new(), delta, start: 0 }
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Sequence number of the oldest retained element.
    pub fn start(&self) -> usize {
        self.start
    }

    pub fn mean(&self) -> f64 {
        if self.elements.is_empty() {
            return 0.0;
        }
        self.elements.iter().sum::<f64>() / self.elements.len() as f64
    }

    pub fn elements(&self) -> impl Iterator<Item = &f64> {
        self.elements.iter()
    }

    pub fn reset(&mut self) {
        self.elements.clear();
        self.start = 0;
    }

    /// Inserts one error and drops the older part while a cut is detected.
    pub fn step(&mut self, error: f64) -> AdwinOutcome {
        debug_assert!(error.is_finite() && error >= 0.0);
        self.elements.push_back(error);
        let mut outcome = AdwinOutcome::NoCut;
        while let Some((split, increased)) = self.find_cut() {
            self.elements.drain(..split);
            self.start += split;
            let increased = match outcome {
                AdwinOutcome::Cut { increased: first, .. } => first,
                AdwinOutcome::NoCut => increased,
            };
            outcome = AdwinOutcome::Cut { boundary: self.start, increased };
        }
        outcome
    }

    /// Smallest split whose sub-window means differ by at least the
    /// variance-aware bound `ε = √(2σ²/m · ln(2/δ′)) + 2/(3m) · ln(2/δ′)`,
    /// with `m` the harmonic mean of the sub-window sizes and `δ′ = δ/ln n`.
    fn find_cut(&self) -> Option<(usize, bool)> {
        let n = self.elements.len();
        if n < 2 * MIN_SUB_WINDOW {
            return None;
        }
        let total: f64 = self.elements.iter().sum();
        let mean = total / n as f64;
        let var = self.elements.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n as f64;
        let log_term = (2.0 * (n as f64).ln() / self.delta).ln();
        let mut head = 0.0;
        for (i, &e) in self.elements.iter().enumerate() {
            head += e;
            let n0 = i + 1;
            let n1 = n - n0;
            if n1 < MIN_SUB_WINDOW {
                break;
            }
            if n0 < MIN_SUB_WINDOW {
                continue;
            }
            let mu0 = head / n0 as f64;
            let mu1 = (total - head) / n1 as f64;
            let m = 1.0 / (1.0 / n0 as f64 + 1.0 / n1 as f64);
            let eps = (2.0 * var * log_term / m).sqrt() + 2.0 * log_term / (3.0 * m);
            if (mu0 - mu1).abs() >= eps {
                return Some((n0, mu1 > mu0));
            }
        }
        None
    }
}

/// One ADWIN update on a detector-owned window.
pub fn adwin_step(adwin: &mut AdwinWindow, error: f64) -> AdwinOutcome {
    adwin.step(error)
}
