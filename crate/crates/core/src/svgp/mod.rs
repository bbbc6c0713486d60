//! Stochastic variational GP regression with a Matérn 1/2 kernel.

pub mod checkpoint;
pub mod convergence;
pub mod elbo;
pub mod kernel;
pub mod model;
pub mod optim;
pub mod posterior;

pub use checkpoint::Checkpoint;
pub use convergence::{convergence_check, ConvergenceMonitor};
pub use elbo::{elbo_minibatch, full_elbo, kl_divergence, ElboEval, ParamGrad};
pub use kernel::{kernel_matern12, KernelParams};
pub use model::{param_count, InducingSet, SvgpModel, Trainable, VariationalDist};
pub use optim::{optimizer_step, AdamState, StepOutcome};
pub use posterior::{posterior, PosteriorCache, PosteriorPrediction};
