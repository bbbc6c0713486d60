//! Rao-Blackwellized particle filter over per-particle SVGP maps.

pub mod coordinator;
pub mod dump;
pub mod history;
pub mod particle;
pub mod training;
pub mod weighting;

pub use coordinator::{Coordinator, LcEvent, Pacing, ResampleEvent, SessionConfig, TrainingConfig};
pub use history::{SegmentIndex, TrajectoryHistory, TrajectorySegment};
pub use particle::{
    effective_sample_size, estimate_trajectory, mean_trajectory, particle_rng, systematic_resample, FilterConfig, Particle,
    ParticleSet, ResampleRule, Resampled,
};
pub use training::{build_minibatch, svgp_iteration};
pub use weighting::{beam_log_likelihood, lc_prompting, weigh_particles, weight_subsample, LcOutcome};
