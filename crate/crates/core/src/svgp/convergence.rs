//! ELBO moving-average convergence gate.
//!
//! Convergence only signals that a map is usable for loop closures; training
//! continues afterwards and the moving average keeps updating.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::model::SvgpModel;
use crate::scalar::Real;

pub const DEFAULT_WINDOW: usize = 50;
pub const DEFAULT_THRESHOLD: f64 = 1e-3;

/// Incremental EMA tracker; smoothing α = 2 / (W + 1).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ConvergenceMonitor<T> {
    pub window: usize,
    pub threshold: T,
    ema: Option<T>,
    /// The last `window + 1` EMA values, oldest first.
    history: VecDeque<T>,
    observed: usize,
    /// Sticky once raised.
    pub converged: bool,
}

impl<T: Real> Default for ConvergenceMonitor<T> {
    fn default() -> Self {
        Self::new(DEFAULT_WINDOW, T::lit(DEFAULT_THRESHOLD))
    }
}

impl<T: Real> ConvergenceMonitor<T> {
    pub fn new(window: usize, threshold: T) -> Self {
        let window = window.max(1);
        Self {
            window,
            threshold,
            ema: None,
            history: VecDeque::with_capacity(window + 1),
            observed: 0,
            converged: false,
        }
    }

    pub fn ema(&self) -> Option<T> {
        self.ema
    }

    pub fn observed(&self) -> usize {
        self.observed
    }

    /// Feeds one ELBO value; returns the (sticky) converged flag.
    pub fn observe(&mut self, elbo: T) -> bool {
        let alpha = T::lit(2.0) / T::from_usize_lossy(self.window + 1);
        let ema = match self.ema {
            None => elbo,
            Some(prev) => alpha * elbo + (T::one() - alpha) * prev,
        };
        self.ema = Some(ema);
        self.observed += 1;
        self.history.push_back(ema);
        if self.history.len() > self.window + 1 {
            self.history.pop_front();
        }
        if !self.converged && self.observed >= 2 * self.window && self.relative_change() < self.threshold {
            self.converged = true;
        }
        self.converged
    }

    /// |EMA_now − EMA_{W steps ago}| / (|EMA_now| + 1e-9)
    pub fn relative_change(&self) -> T {
        match (self.history.back(), self.history.front()) {
            (Some(&now), Some(&then)) if self.history.len() == self.window + 1 => {
                (now - then).abs() / (now.abs() + T::lit(1e-9))
            }
            _ => T::infinity(),
        }
    }
}

/// Convergence of a model's ELBO trace under window `window` and threshold
/// `threshold`. Uses the model's live monitor when the settings match,
/// otherwise replays the trace.
pub fn convergence_check<T: Real>(model: &SvgpModel<T>, window: usize, threshold: T) -> bool {
    if model.monitor.window == window && model.monitor.threshold == threshold
        && model.monitor.observed() == model.elbo_trace.len()
    {
        return model.monitor.converged;
    }
    let mut mon = ConvergenceMonitor::new(window, threshold);
    for &(_, e) in &model.elbo_trace {
        mon.observe(e);
    }
    mon.converged
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_trace_converges() {
        let mut m = ConvergenceMonitor::new(50, 1e-9f64);
        let mut flag = false;
        for _ in 0..99 {
            flag = m.observe(-3.2);
        }
        assert!(!flag, "needs 2W observations");
        assert!(m.observe(-3.2));
    }

    #[test]
    fn linear_growth_does_not_converge() {
        let mut m = ConvergenceMonitor::new(50, 1e-3f64);
        for i in 0..1000 {
            assert!(!m.observe(-100.0 + 0.5 * i as f64 + 1000.0));
        }
    }

    #[test]
    fn sticky_after_divergence() {
        let mut m = ConvergenceMonitor::new(5, 1e-3f64);
        for _ in 0..20 {
            m.observe(1.0);
        }
        assert!(m.converged);
        for i in 0..20 {
            assert!(m.observe(1.0 + 10.0 * i as f64));
        }
        assert!(m.relative_change() > 1e-3);
    }
}
