use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::scalar::Real;

/// Matérn 1/2 kernel hyperparameters plus the Gaussian noise variance, all
/// stored as logarithms so the optimizer works on an unconstrained space.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct KernelParams<T> {
    pub log_signal_var: T,
    pub log_lengthscale: T,
    pub log_noise_var: T,
}

impl<T: Real> KernelParams<T> {
    pub fn new(signal_var: T, lengthscale: T, noise_var: T) -> Self {
        Self {
            log_signal_var: signal_var.ln(),
            log_lengthscale: lengthscale.ln(),
            log_noise_var: noise_var.ln(),
        }
    }

    #[inline]
    pub fn signal_var(&self) -> T {
        self.log_signal_var.exp()
    }

    #[inline]
    pub fn lengthscale(&self) -> T {
        self.log_lengthscale.exp()
    }

    #[inline]
    pub fn noise_var(&self) -> T {
        self.log_noise_var.exp()
    }

    pub fn is_valid(&self) -> bool {
        [self.signal_var(), self.lengthscale(), self.noise_var()]
            .iter()
            .all(|v| v.is_finite() && *v > T::zero())
    }
}

#[inline]
pub(crate) fn dist2<T: Real>(a: [T; 2], b: [T; 2]) -> T {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    (dx * dx + dy * dy).sqrt()
}

/// σ² · exp(−‖a − b‖ / ℓ)
#[inline]
pub fn kernel_matern12<T: Real>(a: [T; 2], b: [T; 2], k: &KernelParams<T>) -> T {
    k.signal_var() * (-dist2(a, b) / k.lengthscale()).exp()
}

/// Covariance between two point sets, rows indexed by `a`.
pub fn cross_covariance<T: Real>(a: &[[T; 2]], b: &[[T; 2]], k: &KernelParams<T>) -> Matrix<T> {
    let s2 = k.signal_var();
    let inv_l = T::one() / k.lengthscale();
    Matrix::from_fn(a.len(), b.len(), |i, j| s2 * (-dist2(a[i], b[j]) * inv_l).exp())
}

/// Symmetric covariance of a point set with `jitter` added on the diagonal.
pub fn covariance<T: Real>(a: &[[T; 2]], k: &KernelParams<T>, jitter: T) -> Matrix<T> {
    let n = a.len();
    let s2 = k.signal_var();
    let inv_l = T::one() / k.lengthscale();
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = s2 + jitter;
        for j in 0..i {
            let v = s2 * (-dist2(a[i], a[j]) * inv_l).exp();
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}
