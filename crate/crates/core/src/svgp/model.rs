use rand::Rng;
use serde::{Deserialize, Serialize};

use super::convergence::ConvergenceMonitor;
use super::kernel::{covariance, dist2, KernelParams};
use super::optim::AdamState;
use crate::error::{Error, Result};
use crate::linalg::{cholesky, Matrix};
use crate::scalar::Real;
use crate::types::Rect;

/// Diagonal jitter on the inducing covariance, relative to the signal variance.
pub const RELATIVE_JITTER: f64 = 1e-6;
/// Floor applied to the diagonal of the variational Cholesky factor.
pub const CHOL_DIAG_FLOOR: f64 = 1e-8;
/// Minimum distance (m) between two inducing locations.
pub const MIN_INDUCING_SEPARATION: f64 = 1e-3;

/// Inducing locations `Z`, one 2D point per row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct InducingSet<T> {
    pub points: Vec<[T; 2]>,
}

impl<T: Real> InducingSet<T> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Jittered regular grid: ⌈√S⌉ × ⌈√S⌉ cells visited row by row, one
    /// uniformly placed point per cell until `count` points exist.
    pub fn init_uniform<R: Rng + ?Sized>(bounds: &Rect<T>, count: usize, rng: &mut R) -> Result<Self> {
        if !bounds.is_proper() {
            return Err(Error::InvalidInput(format!(
                "inducing area must have positive extent, got {:?}..{:?}",
                bounds.min, bounds.max
            )));
        }
        if count == 0 {
            return Err(Error::InvalidInput("need at least one inducing point".into()));
        }
        let side = (count as f64).sqrt().ceil() as usize;
        let cw = bounds.width() / T::from_usize_lossy(side);
        let ch = bounds.height() / T::from_usize_lossy(side);
        let mut points = Vec::with_capacity(count);
        'grid: for r in 0..side {
            for c in 0..side {
                if points.len() == count {
                    break 'grid;
                }
                let u = T::lit(rng.random::<f64>());
                let v = T::lit(rng.random::<f64>());
                points.push([
                    bounds.min[0] + (T::from_usize_lossy(c) + u) * cw,
                    bounds.min[1] + (T::from_usize_lossy(r) + v) * ch,
                ]);
            }
        }
        let mut set = Self { points };
        set.enforce_separation();
        Ok(set)
    }

    /// Nudges any point closer than [`MIN_INDUCING_SEPARATION`] to an earlier
    /// one. Deterministic; returns how many points moved.
    pub fn enforce_separation(&mut self) -> usize {
        let eps = T::lit(MIN_INDUCING_SEPARATION);
        let mut moved = 0;
        for i in 1..self.points.len() {
            let mut k = 0usize;
            while self.points[..i]
                .iter()
                .any(|&q| dist2(q, self.points[i]) < eps)
            {
                // golden-angle spiral keeps successive nudges apart
                let ang = T::lit(2.399_963_229_728_653 * (i + k) as f64);
                let step = eps * T::lit(1.5 + k as f64);
                self.points[i][0] += step * ang.cos();
                self.points[i][1] += step * ang.sin();
                k += 1;
            }
            if k > 0 {
                moved += 1;
            }
        }
        moved
    }

    pub fn min_separation(&self) -> Option<T> {
        let mut best: Option<T> = None;
        for i in 0..self.points.len() {
            for j in 0..i {
                let d = dist2(self.points[i], self.points[j]);
                best = Some(best.map_or(d, |b| b.min(d)));
            }
        }
        best
    }
}

/// Variational distribution q(u) = N(μ, L Lᵀ).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct VariationalDist<T> {
    pub mean: Vec<T>,
    pub chol: Matrix<T>,
}

impl<T: Real> VariationalDist<T> {
    pub fn covariance(&self) -> Matrix<T> {
        crate::linalg::mul_abt(&self.chol, &self.chol, false)
    }

    /// Clears the upper triangle and floors the diagonal. Returns true if anything changed.
    pub fn enforce(&mut self) -> bool {
        let floor = T::lit(CHOL_DIAG_FLOOR);
        let mut changed = false;
        let n = self.chol.rows();
        for i in 0..n {
            for j in i + 1..n {
                if self.chol[(i, j)] != T::zero() {
                    self.chol[(i, j)] = T::zero();
                    changed = true;
                }
            }
            if !(self.chol[(i, i)] >= floor) {
                self.chol[(i, i)] = floor;
                changed = true;
            }
        }
        changed
    }
}

/// Which parameter groups the optimizer updates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trainable {
    pub kernel: bool,
    pub inducing: bool,
    pub variational: bool,
}

impl Trainable {
    pub const ALL: Self = Self {
        kernel: true,
        inducing: true,
        variational: true,
    };

    pub const VARIATIONAL_ONLY: Self = Self {
        kernel: false,
        inducing: false,
        variational: true,
    };

    pub(crate) fn needs_kernel_grads(&self) -> bool {
        self.kernel || self.inducing
    }
}

impl Default for Trainable {
    fn default() -> Self {
        Self::ALL
    }
}

/// A sparse variational GP map with its training state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SvgpModel<T> {
    pub kernel: KernelParams<T>,
    pub inducing: InducingSet<T>,
    pub variational: VariationalDist<T>,
    pub optimizer: AdamState<T>,
    pub trainable: Trainable,
    /// `(adam step, elbo per datum)` after every successful step.
    pub elbo_trace: Vec<(u64, T)>,
    pub monitor: ConvergenceMonitor<T>,
    /// Depth subtracted from observations before training (zero-mean prior).
    pub depth_offset: T,
}

impl<T: Real> SvgpModel<T> {
    /// Prior-matched model: μ = 0 and L = chol(K_ss), so KL[q‖p] starts at 0.
    pub fn new(kernel: KernelParams<T>, inducing: InducingSet<T>, depth_offset: T) -> Result<Self> {
        if inducing.is_empty() {
            return Err(Error::InvalidInput("model needs at least one inducing point".into()));
        }
        if !kernel.is_valid() {
            return Err(Error::InvalidInput(format!("invalid kernel parameters {kernel:?}")));
        }
        let kzz = covariance(&inducing.points, &kernel, jitter(&kernel));
        let chol = factor_inducing(&kzz, &kernel)?;
        let s = inducing.len();
        let nparams = param_count(s);
        Ok(Self {
            kernel,
            inducing,
            variational: VariationalDist {
                mean: vec![T::zero(); s],
                chol,
            },
            optimizer: AdamState::new(nparams),
            trainable: Trainable::ALL,
            elbo_trace: Vec::new(),
            monitor: ConvergenceMonitor::default(),
            depth_offset,
        })
    }

    /// Scale-aware defaults for an online survey: ℓ = area diagonal / 20,
    /// σ² = variance of the first ping's depths (at least 1), σ_n² = 0.1,
    /// and the first ping's mean depth as the de-mean offset.
    pub fn for_survey<R: Rng + ?Sized>(
        area: &Rect<T>,
        num_inducing: usize,
        first_ping_depths: &[T],
        rng: &mut R,
    ) -> Result<Self> {
        if first_ping_depths.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let n = T::from_usize_lossy(first_ping_depths.len());
        let mean = first_ping_depths.iter().copied().sum::<T>() / n;
        let var = first_ping_depths
            .iter()
            .map(|&d| (d - mean) * (d - mean))
            .sum::<T>()
            / n;
        let kernel = KernelParams::new(
            var.max(T::one()),
            area.diagonal() / T::lit(20.0),
            T::lit(0.1),
        );
        let inducing = InducingSet::init_uniform(area, num_inducing, rng)?;
        Self::new(kernel, inducing, mean)
    }

    pub fn num_inducing(&self) -> usize {
        self.inducing.len()
    }

    pub fn with_trainable(mut self, trainable: Trainable) -> Self {
        self.trainable = trainable;
        self
    }

    pub fn is_converged(&self) -> bool {
        self.monitor.converged
    }

    pub fn last_elbo(&self) -> Option<T> {
        self.elbo_trace.last().map(|&(_, e)| e)
    }

    /// Flattened parameter vector:
    /// `[log σ², log ℓ, log σ_n², Z (row-major), μ, lower(L) (row-major)]`.
    pub fn pack(&self) -> Vec<T> {
        let s = self.num_inducing();
        let mut v = Vec::with_capacity(param_count(s));
        v.push(self.kernel.log_signal_var);
        v.push(self.kernel.log_lengthscale);
        v.push(self.kernel.log_noise_var);
        for p in &self.inducing.points {
            v.extend_from_slice(p);
        }
        v.extend_from_slice(&self.variational.mean);
        for i in 0..s {
            v.extend_from_slice(&self.variational.chol.row(i)[..=i]);
        }
        v
    }

    pub fn unpack(&mut self, v: &[T]) {
        let s = self.num_inducing();
        assert_eq!(v.len(), param_count(s), "parameter vector length");
        self.kernel.log_signal_var = v[0];
        self.kernel.log_lengthscale = v[1];
        self.kernel.log_noise_var = v[2];
        let mut o = 3;
        for p in &mut self.inducing.points {
            *p = [v[o], v[o + 1]];
            o += 2;
        }
        self.variational.mean.copy_from_slice(&v[o..o + s]);
        o += s;
        for i in 0..s {
            self.variational.chol.row_mut(i)[..=i].copy_from_slice(&v[o..o + i + 1]);
            o += i + 1;
        }
    }
}

pub fn param_count(s: usize) -> usize {
    3 + 2 * s + s + s * (s + 1) / 2
}

#[inline]
pub(crate) fn jitter<T: Real>(k: &KernelParams<T>) -> T {
    T::lit(RELATIVE_JITTER) * k.signal_var()
}

/// Cholesky of K_ss with a diagnostic error on failure.
pub(crate) fn factor_inducing<T: Real>(kzz: &Matrix<T>, k: &KernelParams<T>) -> Result<Matrix<T>> {
    cholesky(kzz).map_err(|pivot| {
        // Gershgorin bound on the largest eigenvalue over the jitter floor
        let lambda_max = (0..kzz.rows())
            .map(|i| kzz.row(i).iter().fold(T::zero(), |a, &b| a + b.abs()))
            .fold(T::zero(), |a, b| a.max(b));
        Error::NotPositiveDefinite {
            pivot,
            condition_estimate: (lambda_max / jitter(k)).as_f64(),
            lengthscale: k.lengthscale().as_f64(),
        }
    })
}
