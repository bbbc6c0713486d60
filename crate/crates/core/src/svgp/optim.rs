use serde::{Deserialize, Serialize};

use super::elbo::evaluate;
use super::model::SvgpModel;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::types::TrainingPoint;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;
/// Consecutive non-finite steps tolerated before the error is surfaced.
pub const MAX_CONSECUTIVE_SKIPS: u32 = 10;

/// First/second moment accumulators over the packed parameter vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct AdamState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub step: u64,
    pub skipped: u64,
    pub consecutive_skips: u32,
}

impl<T: Real> AdamState<T> {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
            step: 0,
            skipped: 0,
            consecutive_skips: 0,
        }
    }

    /// Ascent update of `params` along `grad`.
    pub fn ascend(&mut self, params: &mut [T], grad: &[T], lr: T) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.step += 1;
        let b1 = T::lit(ADAM_BETA1);
        let b2 = T::lit(ADAM_BETA2);
        let eps = T::lit(ADAM_EPS);
        let t = self.step as i32;
        let bc1 = T::one() - b1.powi(t);
        let bc2 = T::one() - b2.powi(t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = b1 * self.m[i] + (T::one() - b1) * g;
            self.v[i] = b2 * self.v[i] + (T::one() - b2) * g * g;
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] += lr * mhat / (vhat.sqrt() + eps);
        }
    }
}

/// Outcome of one optimizer step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepOutcome<T> {
    /// Parameters updated; carries the ELBO per datum before the update.
    Applied { elbo_per_datum: T },
    /// Gradient was non-finite; parameters untouched.
    Skipped,
}

/// One Adam ascent step on every trainable parameter.
///
/// Non-finite gradients skip the step; after [`MAX_CONSECUTIVE_SKIPS`] in a
/// row the error is returned.
pub fn optimizer_step<T: Real>(
    model: &mut SvgpModel<T>,
    batch: &[TrainingPoint<T>],
    n_total: usize,
    lr: T,
) -> Result<StepOutcome<T>> {
    let eval = match evaluate(model, batch, n_total, model.trainable) {
        Ok(e) => Some(e),
        Err(Error::NonFinite(_)) => None,
        Err(e) => return Err(e),
    };
    let grad = eval.as_ref().map(|e| e.grad.pack());
    let finite = grad
        .as_ref()
        .is_some_and(|g| g.iter().all(|v| v.is_finite()));
    if !finite {
        model.optimizer.skipped += 1;
        model.optimizer.consecutive_skips += 1;
        log::warn!(
            "skipping optimizer step {} (non-finite gradient, {} in a row)",
            model.optimizer.step,
            model.optimizer.consecutive_skips
        );
        if model.optimizer.consecutive_skips >= MAX_CONSECUTIVE_SKIPS {
            return Err(Error::NonFiniteGradient {
                consecutive: model.optimizer.consecutive_skips,
            });
        }
        return Ok(StepOutcome::Skipped);
    }
    let eval = eval.expect("finite gradient implies an evaluation");
    let grad = grad.expect("finite gradient");
    model.optimizer.consecutive_skips = 0;

    let mut params = model.pack();
    model.optimizer.ascend(&mut params, &grad, lr);
    model.unpack(&params);
    model.variational.enforce();
    if model.trainable.inducing {
        model.inducing.enforce_separation();
    }

    let per_datum = eval.elbo / T::from_usize_lossy(n_total);
    let step = model.optimizer.step;
    model.elbo_trace.push((step, per_datum));
    model.monitor.observe(per_datum);
    Ok(StepOutcome::Applied {
        elbo_per_datum: per_datum,
    })
}
