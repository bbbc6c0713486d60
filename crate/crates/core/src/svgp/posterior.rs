use serde::{Deserialize, Serialize};

use super::kernel::{covariance, cross_covariance};
use super::model::{factor_inducing, jitter, SvgpModel};
use crate::error::{Error, Result};
use crate::linalg::{lower_t_mul, solve_lower_in_place, solve_lower_t_in_place, solve_lower_t_vec, solve_lower_vec, Matrix};
use crate::scalar::Real;

pub const VARIANCE_FLOOR: f64 = 1e-9;

/// Marginal predictive distribution of the latent surface (noise excluded).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct PosteriorPrediction<T> {
    pub mean: Vec<T>,
    pub variance: Vec<T>,
}

/// Factorization of a model reused across many query batches.
#[derive(Clone, Debug)]
pub struct PosteriorCache<'a, T> {
    model: &'a SvgpModel<T>,
    lk: Matrix<T>,
    alpha: Vec<T>,
}

impl<'a, T: Real> PosteriorCache<'a, T> {
    pub fn new(model: &'a SvgpModel<T>) -> Result<Self> {
        let kp = &model.kernel;
        let kzz = covariance(&model.inducing.points, kp, jitter(kp));
        let lk = factor_inducing(&kzz, kp)?;
        let w = solve_lower_vec(&lk, &model.variational.mean);
        let alpha = solve_lower_t_vec(&lk, &w);
        Ok(Self { model, lk, alpha })
    }

    /// Mean and unclamped marginal variance.
    pub fn predict_raw(&self, queries: &[[T; 2]]) -> (Vec<T>, Vec<T>) {
        let kp = &self.model.kernel;
        let s2 = kp.signal_var();
        let ksq = cross_covariance(&self.model.inducing.points, queries, kp);
        let mean = ksq.tr_mul_vec(&self.alpha);
        let mut at = ksq;
        solve_lower_in_place(&self.lk, &mut at);
        let mut a = at.clone();
        solve_lower_t_in_place(&self.lk, &mut a);
        let qm = lower_t_mul(&self.model.variational.chol, &a);
        let mut var = vec![s2; queries.len()];
        for r in 0..at.rows() {
            for ((v, &q), &t) in var.iter_mut().zip(qm.row(r)).zip(at.row(r)) {
                *v += q * q - t * t;
            }
        }
        (mean, var)
    }

    pub fn predict(&self, queries: &[[T; 2]]) -> PosteriorPrediction<T> {
        let (mean, mut variance) = self.predict_raw(queries);
        let floor = T::lit(VARIANCE_FLOOR);
        for v in &mut variance {
            *v = v.max(floor);
        }
        PosteriorPrediction { mean, variance }
    }
}

/// Sparse posterior at `queries`: mean K_*s K_ss⁻¹ μ and marginal variance
/// diag[(K_*s K_ss⁻¹) Σ (K_*s K_ss⁻¹)ᵀ + K_** − K_*s K_ss⁻¹ K_s*].
pub fn posterior<T: Real>(model: &SvgpModel<T>, queries: &[[T; 2]]) -> Result<PosteriorPrediction<T>> {
    if queries.is_empty() {
        return Err(Error::InvalidInput("posterior needs at least one query".into()));
    }
    Ok(PosteriorCache::new(model)?.predict(queries))
}
