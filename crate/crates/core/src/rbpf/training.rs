//! Minibatch construction and one SVGP training iteration for a particle.

use rand::Rng;

use super::history::SegmentIndex;
use super::particle::Particle;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::svgp::{optimizer_step, StepOutcome};
use crate::types::{transform_beam, BeamLog, TrainingPoint};

/// Draws `m` beams uniformly from the log, re-projects each through the
/// particle's pose at the beam's timestamp and de-means the depth with the
/// map's offset.
pub fn build_minibatch<T: Real, R: Rng + ?Sized>(
    particle: &Particle<T>,
    log: &BeamLog<T>,
    index: &SegmentIndex,
    m: usize,
    rng: &mut R,
) -> Result<Vec<TrainingPoint<T>>> {
    let offset = particle.map.depth_offset;
    log.sample_uniform(m, rng)?
        .into_iter()
        .map(|rec| {
            let pose = particle.history.pose_at(index, rec.t)?;
            let p = transform_beam(pose, &rec.beam);
            Ok(TrainingPoint {
                x: [p[0], p[1]],
                y: p[2] - offset,
            })
        })
        .collect()
}

/// One minibatch plus one optimizer step on the particle's map, using the
/// particle's own random stream. Early in a mission the log can hold fewer
/// than `m` beams; the minibatch is then capped at the log size.
pub fn svgp_iteration<T: Real>(
    particle: &mut Particle<T>,
    log: &BeamLog<T>,
    index: &SegmentIndex,
    m: usize,
    lr: T,
) -> Result<StepOutcome<T>> {
    if log.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut rng = particle.rng.clone();
    let batch = build_minibatch(particle, log, index, m.min(log.len()), &mut rng)?;
    let outcome = optimizer_step(&mut particle.map, &batch, log.len(), lr)?;
    particle.rng = rng;
    particle.iterations += 1;
    Ok(outcome)
}
