//! Rao-Blackwellized particle filter SLAM whose per-particle maps are sparse
//! variational Gaussian processes trained online.
//!
//! The math is generic over [`Real`] (`f32` or `f64`); the aliases at the crate
//! root fix the scalar for the common cases.

pub mod error;
pub mod linalg;
pub mod rbpf;
pub mod scalar;
pub mod svgp;
pub mod types;

pub use error::{Error, Result};
pub use scalar::Real;

pub type SvgpModel64 = svgp::SvgpModel<f64>;
pub type SvgpModel32 = svgp::SvgpModel<f32>;
pub type Pose64 = types::Pose<f64>;
pub type Ping64 = types::Ping<f64>;
pub type BeamLog64 = types::BeamLog<f64>;
