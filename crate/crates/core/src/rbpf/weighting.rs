//! Loop-closure prompting: map-based weighting of the particle set and
//! conditional resampling.

use serde::{Deserialize, Serialize};

use super::particle::{ParticleSet, Resampled};
use crate::error::Result;
use crate::scalar::Real;
use crate::svgp::PosteriorCache;
use crate::types::{transform_beam, Beam, Ping};

/// Indices of `k` beams evenly spaced across a swath of `n` (all if `n <= k`).
pub fn weight_subsample(n: usize, k: usize) -> Vec<usize> {
    if n <= k || k == 0 {
        return (0..n).collect();
    }
    if k == 1 {
        return vec![n / 2];
    }
    (0..k)
        .map(|i| ((i * (n - 1)) as f64 / (k - 1) as f64).round() as usize)
        .collect()
}

/// Σ over beams of ln N(z; μ, v + Q).
pub fn beam_log_likelihood<T: Real>(z: &[T], mean: &[T], var: &[T], q: T) -> T {
    let two_pi = T::lit(2.0) * T::PI();
    z.iter()
        .zip(mean)
        .zip(var)
        .map(|((&z, &m), &v)| {
            let s = v + q;
            -T::lit(0.5) * ((two_pi * s).ln() + (z - m) * (z - m) / s)
        })
        .sum()
}

/// Multiplies each particle's weight by the likelihood of the ping under its
/// own map and current pose, then normalizes. A particle whose posterior
/// fails gets the smallest weight in the set.
pub fn weigh_particles<T: Real>(particles: &mut ParticleSet<T>, ping: &Ping<T>) -> Result<()> {
    let picks = weight_subsample(ping.beams.len(), particles.config.weight_beams);
    let beams: Vec<Beam<T>> = picks.iter().map(|&i| ping.beams[i]).collect();
    let q = particles.config.measurement_noise;
    let mut lls: Vec<Option<T>> = Vec::with_capacity(particles.len());
    for p in &particles.particles {
        let pts: Vec<[T; 3]> = beams.iter().map(|b| transform_beam(&p.pose, b)).collect();
        let xy: Vec<[T; 2]> = pts.iter().map(|v| [v[0], v[1]]).collect();
        let z: Vec<T> = pts.iter().map(|v| v[2] - p.map.depth_offset).collect();
        let ll = PosteriorCache::new(&p.map).map(|cache| {
            let pred = cache.predict(&xy);
            beam_log_likelihood(&z, &pred.mean, &pred.variance, q)
        });
        match ll {
            Ok(v) if v.is_finite() => lls.push(Some(v)),
            Ok(v) => {
                log::warn!("particle {}: non-finite log-likelihood {v}", p.id);
                lls.push(None);
            }
            Err(e) => {
                log::warn!("particle {}: posterior failed during weighting: {e}", p.id);
                lls.push(None);
            }
        }
    }
    let floor = lls.iter().flatten().copied().fold(T::infinity(), T::min);
    if !floor.is_finite() {
        log::warn!("weighting failed for every particle; weights unchanged");
        return Ok(());
    }
    for (p, ll) in particles.particles.iter_mut().zip(lls) {
        p.log_weight += ll.unwrap_or(floor);
    }
    particles.normalize_log_weights();
    Ok(())
}

/// Result of one loop-closure prompt.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum LcOutcome {
    /// Some map has not converged yet; nothing happened.
    Gated,
    /// Weights updated; `weights` are the normalized weights that drove the
    /// decision and `resampled` is set when the ESS rule fired.
    Weighed {
        ess: f64,
        weights: Vec<f64>,
        resampled: Option<Resampled>,
    },
}

/// Weighs the set on `ping` and resamples when the ESS rule fires; weights
/// are otherwise kept for the next prompt. A no-op until every map has
/// converged.
pub fn lc_prompting<T: Real>(particles: &mut ParticleSet<T>, ping: &Ping<T>) -> Result<LcOutcome> {
    if !particles.particles.iter().all(|p| p.map.is_converged()) {
        return Ok(LcOutcome::Gated);
    }
    weigh_particles(particles, ping)?;
    let ess = particles.effective_sample_size();
    let weights = particles.weights().iter().map(|w| w.as_f64()).collect();
    let resampled = particles
        .config
        .resample_rule
        .triggers(ess, particles.len())
        .then(|| particles.resample());
    Ok(LcOutcome::Weighed {
        ess,
        weights,
        resampled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subsample_spans_the_swath() {
        assert_eq!(weight_subsample(5, 32), vec![0, 1, 2, 3, 4]);
        let s = weight_subsample(256, 32);
        assert_eq!(s.len(), 32);
        assert_eq!((s[0], s[31]), (0, 255));
        assert!(s.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn standard_normal_peak() {
        let ll = beam_log_likelihood(&[1.5f64], &[1.5], &[0.4], 0.6);
        assert!((ll + 0.918_938_533_204_672_7).abs() < 1e-12);
    }
}
