//! Particles, the particle set, motion prediction and systematic resampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::history::{SegmentIndex, TrajectoryHistory};
use crate::error::{Error, Result};
use crate::scalar::{wrap_angle, Real};
use crate::svgp::SvgpModel;
use crate::types::{ControlInput, Pose};

/// When an LC prompt resamples.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResampleRule {
    /// Resample when ESS < J/2 (standard degeneracy criterion).
    #[default]
    EssBelowHalf,
    /// Resample when ESS > J/2 (inverted criterion, kept for comparison).
    EssAboveHalf,
}

impl ResampleRule {
    pub fn triggers(self, ess: f64, j: usize) -> bool {
        let half = j as f64 / 2.0;
        match self {
            Self::EssBelowHalf => ess < half,
            Self::EssAboveHalf => ess > half,
        }
    }
}

/// Filter noise model and weighting settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct FilterConfig<T> {
    /// Diagonal motion noise per second of travel: `[x, y, z, yaw]`.
    pub motion_noise: [T; 4],
    /// Measurement noise variance Q (m²) added to the map variance when weighting.
    pub measurement_noise: T,
    /// Number of beams per ping entering the weight (evenly spaced).
    pub weight_beams: usize,
    pub resample_rule: ResampleRule,
}

impl<T: Real> Default for FilterConfig<T> {
    fn default() -> Self {
        Self {
            motion_noise: [T::zero(); 4],
            measurement_noise: T::lit(0.1),
            weight_beams: 32,
            resample_rule: ResampleRule::default(),
        }
    }
}

/// One pose hypothesis with its map.
#[derive(Clone, Debug)]
pub struct Particle<T> {
    pub id: usize,
    pub pose: Pose<T>,
    pub history: TrajectoryHistory<T>,
    pub map: SvgpModel<T>,
    /// Normalized log-weight.
    pub log_weight: T,
    /// The slot's random stream. It stays with the slot on resampling, so
    /// offspring of one survivor diverge.
    pub rng: ChaCha8Rng,
    /// SVGP iterations run on this particle's map.
    pub iterations: u64,
}

impl<T: Real> Particle<T> {
    pub fn weight(&self) -> T {
        self.log_weight.exp()
    }
}

/// Offspring counts of one systematic resampling pass.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resampled {
    /// `parents[k]` is the old slot whose state now occupies slot `k`.
    pub parents: Vec<usize>,
    /// Number of offspring of each old slot.
    pub offspring: Vec<usize>,
}

/// The particle set R_t.
#[derive(Clone, Debug)]
pub struct ParticleSet<T> {
    pub particles: Vec<Particle<T>>,
    pub index: SegmentIndex,
    pub config: FilterConfig<T>,
    /// Stream used only for the resampling offsets.
    pub rng: ChaCha8Rng,
}

/// Per-slot stream: the session seed with stream id `1 + slot`, or stream 1
/// for every slot when `shared` is set. Stream 0 drives resampling.
pub fn particle_rng(seed: u64, slot: usize, shared: bool) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(if shared { 1 } else { 1 + slot as u64 });
    rng
}

impl<T: Real> ParticleSet<T> {
    /// `count` identical particles at `pose`, each carrying a copy of `map`.
    pub fn new(
        count: usize,
        pose: Pose<T>,
        map: SvgpModel<T>,
        config: FilterConfig<T>,
        seed: u64,
        shared_streams: bool,
    ) -> Result<Self> {
        if count == 0 {
            return Err(Error::InvalidInput("particle set needs J >= 1".into()));
        }
        pose.validate()?;
        let log_w = -T::from_usize_lossy(count).ln();
        let particles = (0..count)
            .map(|id| {
                let mut history = TrajectoryHistory::new();
                history.push(pose).expect("fresh history");
                Particle {
                    id,
                    pose,
                    history,
                    map: map.clone(),
                    log_weight: log_w,
                    rng: particle_rng(seed, id, shared_streams),
                    iterations: 0,
                }
            })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0);
        Ok(Self {
            particles,
            index: SegmentIndex::new(),
            config,
            rng,
        })
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn weights(&self) -> Vec<T> {
        self.particles.iter().map(|p| p.weight()).collect()
    }

    /// Advances every particle with the unicycle model plus Gaussian noise of
    /// covariance `W·dt`, drawn from the particle's own stream. The new pose
    /// is stamped `control.t`; `dt` must be positive.
    pub fn predict(&mut self, control: &ControlInput<T>, dt: f64) -> Result<()> {
        if !(dt > 0.0) || !control.is_finite() {
            return Err(Error::InvalidInput(format!(
                "predict needs dt > 0 and a finite control (dt = {dt})"
            )));
        }
        let dt_s = T::lit(dt);
        let sd: Vec<T> = self
            .config
            .motion_noise
            .iter()
            .map(|&w| (w * dt_s).max(T::zero()).sqrt())
            .collect();
        for p in &mut self.particles {
            let (s, c) = p.pose.heading.sin_cos();
            let mut noise = [T::zero(); 4];
            for (n, &sigma) in noise.iter_mut().zip(&sd) {
                if sigma > T::zero() {
                    let e: f64 = p.rng.sample(StandardNormal);
                    *n = sigma * T::lit(e);
                }
            }
            let next = Pose::new(
                control.t,
                [
                    p.pose.position[0] + (control.surge * c - control.sway * s) * dt_s + noise[0],
                    p.pose.position[1] + (control.surge * s + control.sway * c) * dt_s + noise[1],
                    control.z + noise[2],
                ],
                wrap_angle(p.pose.heading + control.yaw_rate * dt_s + noise[3]),
            );
            p.history.push(next)?;
            p.pose = next;
        }
        Ok(())
    }

    /// 1 / Σ w̄².
    pub fn effective_sample_size(&self) -> f64 {
        effective_sample_size(&self.weights().iter().map(|w| w.as_f64()).collect::<Vec<_>>())
    }

    /// Resets all weights to 1/J.
    pub fn reset_weights(&mut self) {
        let log_w = -T::from_usize_lossy(self.len()).ln();
        for p in &mut self.particles {
            p.log_weight = log_w;
        }
    }

    /// Shifts log-weights so their exponentials sum to one.
    pub fn normalize_log_weights(&mut self) {
        let max = self
            .particles
            .iter()
            .map(|p| p.log_weight)
            .fold(T::neg_infinity(), T::max);
        if !max.is_finite() {
            self.reset_weights();
            return;
        }
        let lse = max
            + self
                .particles
                .iter()
                .map(|p| (p.log_weight - max).exp())
                .sum::<T>()
                .ln();
        for p in &mut self.particles {
            p.log_weight -= lse;
        }
    }

    /// Systematic resampling. Survivors seal their open tails; each offspring
    /// shares the survivor's sealed segments, copies its pose and map (with
    /// optimizer state) and keeps its own slot's random stream. Weights reset
    /// to 1/J.
    pub fn resample(&mut self) -> Resampled {
        let w: Vec<f64> = self.weights().iter().map(|w| w.as_f64()).collect();
        let parents = systematic_resample(&w, &mut self.rng);
        let j = self.len();
        let mut offspring = vec![0usize; j];
        for &a in &parents {
            offspring[a] += 1;
        }

        let mut published = false;
        for (k, p) in self.particles.iter_mut().enumerate() {
            if offspring[k] > 0 {
                if let Some((len, start)) = p.history.seal() {
                    if !published {
                        self.index.publish(len, start);
                        published = true;
                    }
                }
            }
        }

        let old = &self.particles;
        let mut next: Vec<Particle<T>> = Vec::with_capacity(j);
        for (k, &a) in parents.iter().enumerate() {
            let src = &old[a];
            next.push(Particle {
                id: k,
                pose: src.pose,
                history: src.history.fork(),
                map: src.map.clone(),
                log_weight: T::zero(),
                rng: old[k].rng.clone(),
                iterations: old[k].iterations,
            });
        }
        self.particles = next;
        self.reset_weights();
        Resampled { parents, offspring }
    }

    /// Per-timestamp mean position and circular-mean yaw over all histories.
    pub fn estimate_trajectory(&self) -> Vec<Pose<T>> {
        estimate_trajectory(&self.particles.iter().map(|p| &p.history).collect::<Vec<_>>())
    }
}

/// 1 / Σ w², for normalized weights.
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    1.0 / weights.iter().map(|w| w * w).sum::<f64>()
}

/// Systematic resampling: one offset u₀ ~ U[0, 1/J) and a comb u₀ + k/J.
/// Returns the parent index of every new slot, in ascending order.
pub fn systematic_resample<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Vec<usize> {
    let j = weights.len();
    let total: f64 = weights.iter().sum();
    let step = 1.0 / j as f64;
    let u0 = rng.random::<f64>() * step;
    let mut parents = Vec::with_capacity(j);
    let mut cum = weights[0] / total;
    let mut i = 0;
    for k in 0..j {
        let u = u0 + k as f64 * step;
        while u >= cum && i + 1 < j {
            i += 1;
            cum += weights[i] / total;
        }
        parents.push(i);
    }
    parents
}

/// Mean of time-aligned histories: arithmetic mean of positions, circular
/// mean of headings.
pub fn estimate_trajectory<T: Real>(histories: &[&TrajectoryHistory<T>]) -> Vec<Pose<T>> {
    mean_of(histories.iter().map(|h| h.iter()).collect())
}

/// [`estimate_trajectory`] over plain pose sequences (e.g. read back from a dump).
pub fn mean_trajectory<T: Real>(trajectories: &[&[Pose<T>]]) -> Vec<Pose<T>> {
    mean_of(trajectories.iter().map(|t| t.iter()).collect())
}

fn mean_of<'a, T: Real, I: Iterator<Item = &'a Pose<T>>>(mut iters: Vec<I>) -> Vec<Pose<T>> {
    if iters.is_empty() {
        return Vec::new();
    }
    let n = T::from_usize_lossy(iters.len());
    let mut out = Vec::new();
    loop {
        let mut pos = [T::zero(); 3];
        let (mut s, mut c) = (T::zero(), T::zero());
        let mut t = None;
        for it in iters.iter_mut() {
            let Some(p) = it.next() else {
                return out;
            };
            debug_assert!(t.is_none_or(|t0| t0 == p.t), "histories are not time-aligned");
            t = Some(p.t);
            for (a, b) in pos.iter_mut().zip(p.position) {
                *a += b;
            }
            s += p.heading.sin();
            c += p.heading.cos();
        }
        out.push(Pose::new(
            t.expect("non-empty set"),
            [pos[0] / n, pos[1] / n, pos[2] / n],
            s.atan2(c),
        ));
    }
}
