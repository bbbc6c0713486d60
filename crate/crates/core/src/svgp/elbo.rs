//! Minibatch ELBO of the unwhitened SVGP and its exact gradients.
//!
//! With `A = K_ss⁻¹ K_sb`, the marginals of q(f) at the batch inputs are
//! `m = Aᵀ μ` and `v = σ² − diag(K_bs A) + diag(Aᵀ Σ A)`. The Gaussian
//! expected log-likelihood is closed form, so the estimator is deterministic
//! given the batch. Gradients are obtained by back-propagating through
//! `K_ss` and `K_sb` into the kernel hyperparameters and inducing locations.

use serde::{Deserialize, Serialize};

use super::kernel::{covariance, cross_covariance, dist2};
use super::model::{factor_inducing, jitter, param_count, SvgpModel, Trainable};
use crate::error::{Error, Result};
use crate::linalg::{
    axpy, cholesky_inverse, dot, lower_mul, lower_t_mul, mul_abt, solve_lower_in_place,
    solve_lower_t_in_place, solve_lower_t_vec, solve_lower_vec, Matrix,
};
use crate::scalar::Real;
use crate::types::TrainingPoint;

/// Gradient of the ELBO, laid out like the model parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ParamGrad<T> {
    pub log_signal_var: T,
    pub log_lengthscale: T,
    pub log_noise_var: T,
    pub inducing: Vec<[T; 2]>,
    pub mean: Vec<T>,
    /// Lower triangular.
    pub chol: Matrix<T>,
}

impl<T: Real> ParamGrad<T> {
    pub fn zeros(s: usize) -> Self {
        Self {
            log_signal_var: T::zero(),
            log_lengthscale: T::zero(),
            log_noise_var: T::zero(),
            inducing: vec![[T::zero(); 2]; s],
            mean: vec![T::zero(); s],
            chol: Matrix::zeros(s, s),
        }
    }

    /// Same layout as [`SvgpModel::pack`].
    pub fn pack(&self) -> Vec<T> {
        let s = self.mean.len();
        let mut v = Vec::with_capacity(param_count(s));
        v.push(self.log_signal_var);
        v.push(self.log_lengthscale);
        v.push(self.log_noise_var);
        for p in &self.inducing {
            v.extend_from_slice(p);
        }
        v.extend_from_slice(&self.mean);
        for i in 0..s {
            v.extend_from_slice(&self.chol.row(i)[..=i]);
        }
        v
    }
}

/// Value of the minibatch estimator and its parts.
#[derive(Clone, Debug)]
pub struct ElboEval<T> {
    /// L̂ = (N/M) Σ E[ln p(y|f)] − KL
    pub elbo: T,
    /// Scaled expected log-likelihood term, (N/M) Σ E[ln p(y|f)].
    pub expected_log_lik: T,
    pub kl: T,
    pub grad: ParamGrad<T>,
}

/// Minibatch ELBO with gradients for every parameter.
pub fn elbo_minibatch<T: Real>(
    model: &SvgpModel<T>,
    batch: &[TrainingPoint<T>],
    n_total: usize,
) -> Result<ElboEval<T>> {
    evaluate(model, batch, n_total, Trainable::ALL)
}

/// KL[q(u) ‖ p(u)] alone.
pub fn kl_divergence<T: Real>(model: &SvgpModel<T>) -> Result<T> {
    let kp = &model.kernel;
    let kzz = covariance(&model.inducing.points, kp, jitter(kp));
    let lk = factor_inducing(&kzz, kp)?;
    Ok(kl_from_factor(&lk, &model.variational.chol, &model.variational.mean).0)
}

/// Returns KL and the whitened intermediates `(L_K⁻¹ L_Σ, L_K⁻¹ μ)`.
fn kl_from_factor<T: Real>(lk: &Matrix<T>, ls: &Matrix<T>, mu: &[T]) -> (T, Matrix<T>, Vec<T>) {
    let s = lk.rows();
    let mut t1 = ls.clone();
    solve_lower_in_place(lk, &mut t1);
    let w = solve_lower_vec(lk, mu);
    let trace = dot(t1.as_slice(), t1.as_slice());
    let quad = dot(&w, &w);
    let two = T::lit(2.0);
    let logdet_k = two * (0..s).map(|i| lk[(i, i)].ln()).sum::<T>();
    let logdet_s = two * (0..s).map(|i| ls[(i, i)].ln()).sum::<T>();
    let kl = T::lit(0.5) * (trace + quad - T::from_usize_lossy(s) + logdet_k - logdet_s);
    (kl, t1, w)
}

pub(crate) fn evaluate<T: Real>(
    model: &SvgpModel<T>,
    batch: &[TrainingPoint<T>],
    n_total: usize,
    want: Trainable,
) -> Result<ElboEval<T>> {
    let m = batch.len();
    if m == 0 {
        return Err(Error::InvalidInput("minibatch must not be empty".into()));
    }
    if n_total < m {
        return Err(Error::InvalidInput(format!(
            "dataset size {n_total} smaller than minibatch {m}"
        )));
    }
    let kp = &model.kernel;
    let s2 = kp.signal_var();
    let ell = kp.lengthscale();
    let noise = kp.noise_var();
    let z = &model.inducing.points;
    let s = z.len();
    let mu = &model.variational.mean;
    let ls = &model.variational.chol;

    let kzz = covariance(z, kp, jitter(kp));
    let lk = factor_inducing(&kzz, kp)?;

    let xs: Vec<[T; 2]> = batch.iter().map(|p| p.x).collect();
    let kzx = cross_covariance(z, &xs, kp);

    // Ã = L_K⁻¹ K_sb, A = K_ss⁻¹ K_sb
    let mut at = kzx.clone();
    solve_lower_in_place(&lk, &mut at);
    let mut a = at.clone();
    solve_lower_t_in_place(&lk, &mut a);

    let (kl, t1, w) = kl_from_factor(&lk, ls, mu);
    let alpha = solve_lower_t_vec(&lk, &w);

    let mean_f = kzx.tr_mul_vec(&alpha);
    // Qm = L_Σᵀ A so that diag(Aᵀ Σ A) = column sums of Qm²
    let qm = lower_t_mul(ls, &a);
    let mut var_f = vec![s2; m];
    for r in 0..s {
        for ((v, &q), &t) in var_f.iter_mut().zip(qm.row(r)).zip(at.row(r)) {
            *v += q * q - t * t;
        }
    }

    let c = T::from_usize_lossy(n_total) / T::from_usize_lossy(m);
    let beta = T::one() / noise;
    let half = T::lit(0.5);
    let mut sum_r = T::zero();
    let mut g = vec![T::zero(); m];
    for i in 0..m {
        let resid = batch[i].y - mean_f[i];
        sum_r += resid * resid + var_f[i];
        g[i] = c * beta * resid;
    }
    let mf = T::from_usize_lossy(m);
    let two_pi = T::PI() + T::PI();
    let expected_log_lik = c * (-half * mf * (two_pi * noise).ln() - half * beta * sum_r);
    let elbo = expected_log_lik - kl;
    if !elbo.is_finite() {
        return Err(Error::NonFinite(format!(
            "ELBO (expected log-lik {expected_log_lik}, KL {kl})"
        )));
    }

    // dL/dv_i, identical for every point
    let h = -half * c * beta;
    let mut grad = ParamGrad::zeros(s);
    grad.log_noise_var = c * (-half * mf + half * beta * sum_r);

    let ag = a.mul_vec(&g);

    // U = K_ss⁻¹ L_Σ
    let mut u = t1;
    solve_lower_t_in_place(&lk, &mut u);

    if want.variational {
        for k in 0..s {
            grad.mean[k] = ag[k] - alpha[k];
        }
        // Σ A Aᵀ L_Σ = A Qmᵀ (lower part only)
        let gl = mul_abt(&a, &qm, true);
        let two_h = h + h;
        for i in 0..s {
            for j in 0..=i {
                grad.chol[(i, j)] = two_h * gl[(i, j)] - u[(i, j)];
            }
            grad.chol[(i, i)] += T::one() / ls[(i, i)];
        }
    }

    if want.needs_kernel_grads() {
        // E = K_ss⁻¹ Σ A
        let mut e = lower_mul(ls, &qm);
        solve_lower_in_place(&lk, &mut e);
        solve_lower_t_in_place(&lk, &mut e);

        // dL/dK_sb (as S×M): α gᵀ + 2h (E − A)
        let two_h = h + h;
        let mut gzx = Matrix::zeros(s, m);
        for r in 0..s {
            let row = gzx.row_mut(r);
            for ((o, &ev), &av) in row.iter_mut().zip(e.row(r)).zip(a.row(r)) {
                *o = two_h * (ev - av);
            }
            axpy(alpha[r], &g, row);
        }

        // Symmetric part of dL/dK_ss, lower triangle:
        //   −sym((A g) αᵀ) + h (D Dᵀ − E Eᵀ) − ½ (P − U Uᵀ − α αᵀ),  D = A − E
        let mut d = a.clone();
        for (dv, &ev) in d.as_mut_slice().iter_mut().zip(e.as_slice()) {
            *dv -= ev;
        }
        let ddt = mul_abt(&d, &d, true);
        let eet = mul_abt(&e, &e, true);
        let p = cholesky_inverse(&lk);
        let uut = mul_abt(&u, &u, true);
        let mut gzz = Matrix::zeros(s, s);
        for i in 0..s {
            for j in 0..=i {
                let v = -half * (ag[i] * alpha[j] + ag[j] * alpha[i])
                    + h * (ddt[(i, j)] - eet[(i, j)])
                    - half * (p[(i, j)] - uut[(i, j)] - alpha[i] * alpha[j]);
                gzz[(i, j)] = v;
            }
        }

        contract_kernel_grads(
            &mut grad, model, &xs, &kzz, &kzx, &gzz, &gzx, h, m, s2, ell, want,
        );
    }

    if !want.kernel {
        grad.log_signal_var = T::zero();
        grad.log_lengthscale = T::zero();
        grad.log_noise_var = T::zero();
    }

    Ok(ElboEval {
        elbo,
        expected_log_lik,
        kl,
        grad,
    })
}

/// Chain rule from the covariance matrices into log σ², log ℓ and Z.
#[allow(clippy::too_many_arguments)]
fn contract_kernel_grads<T: Real>(
    grad: &mut ParamGrad<T>,
    model: &SvgpModel<T>,
    xs: &[[T; 2]],
    kzz: &Matrix<T>,
    kzx: &Matrix<T>,
    gzz: &Matrix<T>,
    gzx: &Matrix<T>,
    h: T,
    m: usize,
    s2: T,
    ell: T,
    want: Trainable,
) {
    let z = &model.inducing.points;
    let s = z.len();
    let inv_l = T::one() / ell;
    let two = T::lit(2.0);
    let mut d_log_s2 = h * T::from_usize_lossy(m) * s2;
    let mut d_log_l = T::zero();

    for a in 0..s {
        // diagonal: r = 0, contributes to σ² only (jitter scales with σ²)
        d_log_s2 += gzz[(a, a)] * kzz[(a, a)];
        for b in 0..a {
            let gk = two * gzz[(a, b)] * kzz[(a, b)];
            d_log_s2 += gk;
            let r = dist2(z[a], z[b]);
            d_log_l += gk * r * inv_l;
            if want.inducing && r > T::zero() {
                // ∂k/∂z_a = k/ℓ · (z_b − z_a)/r, and ∂k/∂z_b is its negative
                let f = gk * inv_l / r;
                let dx = (z[b][0] - z[a][0]) * f;
                let dy = (z[b][1] - z[a][1]) * f;
                grad.inducing[a][0] += dx;
                grad.inducing[a][1] += dy;
                grad.inducing[b][0] -= dx;
                grad.inducing[b][1] -= dy;
            }
        }
        let grow = gzx.row(a);
        let krow = kzx.row(a);
        let (mut ga0, mut ga1) = (T::zero(), T::zero());
        for i in 0..m {
            let gk = grow[i] * krow[i];
            d_log_s2 += gk;
            let r = dist2(z[a], xs[i]);
            d_log_l += gk * r * inv_l;
            if want.inducing && r > T::zero() {
                let f = gk * inv_l / r;
                ga0 += (xs[i][0] - z[a][0]) * f;
                ga1 += (xs[i][1] - z[a][1]) * f;
            }
        }
        grad.inducing[a][0] += ga0;
        grad.inducing[a][1] += ga1;
    }

    grad.log_signal_var = d_log_s2;
    grad.log_lengthscale = d_log_l;
    if !want.inducing {
        for p in &mut grad.inducing {
            *p = [T::zero(); 2];
        }
    }
}

/// Full-batch ELBO value (no gradients); the minibatch estimator with M = N.
pub fn full_elbo<T: Real>(model: &SvgpModel<T>, data: &[TrainingPoint<T>]) -> Result<T> {
    Ok(evaluate(model, data, data.len(), Trainable::VARIATIONAL_ONLY)?.elbo)
}
