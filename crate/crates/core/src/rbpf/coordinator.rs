//! Filter coordinator: owns the beam log and the particle set, turns each
//! incoming ping and navigation pose into predict / append / prompt / train
//! phases, and runs SVGP training on B groups of particles in parallel.
//!
//! Predict, append and resampling are barrier operations: they happen between
//! training phases, while no trainer holds a particle. Each trainer context
//! exclusively borrows its b = J/B particles for the duration of a phase and
//! reads the beam log and the segment index through shared references.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::particle::{FilterConfig, Particle, ParticleSet};
use super::training::svgp_iteration;
use super::weighting::{lc_prompting, LcOutcome};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::svgp::{ConvergenceMonitor, KernelParams, SvgpModel, Trainable};
use crate::types::{transform_beam, BeamLog, ControlInput, Ping, Pose, Rect};

/// How much training happens between pings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Pacing {
    /// Every group runs exactly `iterations_per_ping` iterations per ping.
    /// Deterministic regardless of thread timing.
    MaxThroughput,
    /// Every group trains for the ping interval divided by `speedup` of
    /// wall-clock time. Iteration counts then depend on the host.
    WallClock { speedup: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct TrainingConfig<T> {
    /// Minibatch size M.
    pub minibatch: usize,
    pub learning_rate: T,
    /// Trainer contexts B; must divide J.
    pub groups: usize,
    /// Iterations per group between consecutive pings (round-robin over the
    /// group's particles).
    pub iterations_per_ping: usize,
    /// Extra iterations per group after the last ping.
    pub final_iterations: usize,
    pub pacing: Pacing,
}

impl<T: Real> Default for TrainingConfig<T> {
    fn default() -> Self {
        Self {
            minibatch: 200,
            learning_rate: T::lit(0.1),
            groups: 1,
            iterations_per_ping: 10,
            final_iterations: 0,
            pacing: Pacing::MaxThroughput,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SessionConfig<T> {
    /// Number of particles J.
    pub particles: usize,
    /// Number of inducing points S.
    pub inducing: usize,
    /// Survey area; inducing points are spread over it a priori.
    pub area: Rect<T>,
    /// Loop-closure prompt rate f_LC in Hz; `None` disables prompting
    /// (mapping-only mode).
    pub lc_rate: Option<f64>,
    pub convergence_window: usize,
    pub convergence_threshold: T,
    pub trainable: Trainable,
    /// Starting kernel for every map; `None` derives it from the first ping.
    #[serde(default)]
    pub initial_kernel: Option<KernelParams<T>>,
    pub seed: u64,
    /// Give every particle the same random stream (makes W = 0 maps identical).
    pub shared_particle_streams: bool,
    pub filter: FilterConfig<T>,
    pub training: TrainingConfig<T>,
}

impl<T: Real> SessionConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.particles == 0 {
            return bad("J must be at least 1".into());
        }
        let b = self.training.groups;
        if b == 0 || self.particles % b != 0 {
            return bad(format!("B = {b} must divide J = {}", self.particles));
        }
        if self.inducing == 0 {
            return bad("S must be at least 1".into());
        }
        if self.training.minibatch == 0 {
            return bad("M must be at least 1".into());
        }
        if !(self.training.learning_rate > T::zero()) {
            return bad("learning rate must be positive".into());
        }
        if let Some(f) = self.lc_rate {
            if !(f > 0.0 && f.is_finite()) {
                return bad(format!("LC rate {f} must be positive"));
            }
        }
        if let Pacing::WallClock { speedup } = self.training.pacing {
            if !(speedup > 0.0 && speedup.is_finite()) {
                return bad(format!("pacing speedup {speedup} must be positive"));
            }
        }
        if let Some(k) = &self.initial_kernel {
            let ok = [k.signal_var(), k.lengthscale(), k.noise_var()]
                .iter()
                .all(|v| v.is_finite() && *v > T::zero());
            if !ok {
                return bad("initial kernel parameters must be positive and finite".into());
            }
        }
        if !self.area.is_proper() {
            return bad("survey area must have positive extent".into());
        }
        if self.convergence_window == 0 || !(self.convergence_threshold > T::zero()) {
            return bad("convergence window and threshold must be positive".into());
        }
        if self.filter.motion_noise.iter().any(|&w| !(w >= T::zero())) || !(self.filter.measurement_noise > T::zero()) {
            return bad("noise variances must be non-negative (Q positive)".into());
        }
        Ok(())
    }
}

/// One loop-closure prompt that got past the convergence gate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LcEvent {
    pub t: f64,
    pub ess: f64,
    pub resampled: bool,
}

/// One resampling event with the particle-cloud mean just before and after.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResampleEvent {
    pub t: f64,
    pub ess: f64,
    pub offspring: Vec<usize>,
    pub mean_before: [f64; 2],
    pub mean_after: [f64; 2],
}

/// Training effort of one trainer context.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub iterations: u64,
    pub busy: Duration,
}

pub struct Coordinator<T> {
    config: SessionConfig<T>,
    log: BeamLog<T>,
    set: Option<ParticleSet<T>>,
    last_nav: Option<Pose<T>>,
    last_prompt: Option<f64>,
    cursors: Vec<usize>,
    groups: Vec<GroupStats>,
    stop: Arc<AtomicBool>,
    pub nav_trajectory: Vec<Pose<T>>,
    pub weight_history: Vec<(f64, Vec<f64>)>,
    pub lc_events: Vec<LcEvent>,
    pub resample_events: Vec<ResampleEvent>,
}

fn cloud_mean<T: Real>(particles: &[Particle<T>]) -> [f64; 2] {
    let n = particles.len() as f64;
    let (x, y) = particles.iter().fold((0.0, 0.0), |(x, y), p| {
        (x + p.pose.position[0].as_f64(), y + p.pose.position[1].as_f64())
    });
    [x / n, y / n]
}

impl<T: Real> Coordinator<T> {
    pub fn new(config: SessionConfig<T>) -> Result<Self> {
        config.validate()?;
        let groups = config.training.groups;
        Ok(Self {
            config,
            log: BeamLog::default(),
            set: None,
            last_nav: None,
            last_prompt: None,
            cursors: vec![0; groups],
            groups: vec![GroupStats::default(); groups],
            stop: Arc::new(AtomicBool::new(false)),
            nav_trajectory: Vec::new(),
            weight_history: Vec::new(),
            lc_events: Vec::new(),
            resample_events: Vec::new(),
        })
    }

    pub fn config(&self) -> &SessionConfig<T> {
        &self.config
    }

    pub fn log(&self) -> &BeamLog<T> {
        &self.log
    }

    pub fn particles(&self) -> Option<&ParticleSet<T>> {
        self.set.as_ref()
    }

    pub fn group_stats(&self) -> &[GroupStats] {
        &self.groups
    }

    /// Flag that makes trainers stop at the next iteration boundary.
    pub fn stop_handle(&self) -> Arc<AtomicBool> {
        self.stop.clone()
    }

    /// Replaces the stop flag, e.g. with one owned by a signal handler.
    pub fn set_stop_handle(&mut self, stop: Arc<AtomicBool>) {
        self.stop = stop;
    }

    pub fn stopped(&self) -> bool {
        self.stop.load(Ordering::Relaxed)
    }

    /// Feeds one ping with the navigation (dead-reckoning) pose at its time:
    /// predict, append, prompt a loop closure when due, then train.
    pub fn process(&mut self, ping: &Ping<T>, nav: Pose<T>) -> Result<()> {
        if nav.t != ping.t {
            return Err(Error::InvalidInput(format!(
                "navigation pose at t={} does not match ping at t={}",
                nav.t, ping.t
            )));
        }
        nav.validate()?;
        match (&mut self.set, self.last_nav) {
            (None, _) => self.initialize(ping, nav)?,
            (Some(set), Some(prev)) => {
                let control = ControlInput::between(&prev, &nav)?;
                set.predict(&control, nav.t - prev.t)?;
            }
            (Some(_), None) => unreachable!("particle set exists without navigation"),
        }
        self.log.append_ping(ping)?;
        self.last_nav = Some(nav);
        self.nav_trajectory.push(nav);

        if let Some(rate) = self.config.lc_rate {
            let due = self.last_prompt.is_none_or(|t0| ping.t - t0 >= 1.0 / rate);
            if due {
                self.prompt(ping)?;
            }
        }

        let budget = match self.config.training.pacing {
            Pacing::MaxThroughput => Budget::Iterations(self.config.training.iterations_per_ping),
            Pacing::WallClock { speedup } => {
                let dt = self.nav_trajectory.len().checked_sub(2).map_or(0.0, |i| ping.t - self.nav_trajectory[i].t);
                Budget::Until(Instant::now() + Duration::from_secs_f64((dt / speedup).max(0.0)))
            }
        };
        self.train(budget)
    }

    /// Runs the configured post-mission iterations.
    pub fn finish(&mut self) -> Result<()> {
        let n = self.config.training.final_iterations;
        if n > 0 {
            self.train(Budget::Iterations(n))?;
        }
        Ok(())
    }

    /// Trains every group for `iterations` more iterations.
    pub fn train_iterations(&mut self, iterations: usize) -> Result<()> {
        self.train(Budget::Iterations(iterations))
    }

    fn initialize(&mut self, ping: &Ping<T>, nav: Pose<T>) -> Result<()> {
        let depths: Vec<T> = ping.beams.iter().map(|b| transform_beam(&nav, b)[2]).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(u64::MAX);
        let mut map = SvgpModel::for_survey(&self.config.area, self.config.inducing, &depths, &mut rng)?;
        if let Some(kernel) = self.config.initial_kernel {
            map = SvgpModel::new(kernel, map.inducing, map.depth_offset)?;
        }
        let mut map = map.with_trainable(self.config.trainable);
        map.monitor = ConvergenceMonitor::new(self.config.convergence_window, self.config.convergence_threshold);
        let set = ParticleSet::new(
            self.config.particles,
            nav,
            map,
            self.config.filter.clone(),
            self.config.seed,
            self.config.shared_particle_streams,
        )?;
        self.set = Some(set);
        Ok(())
    }

    fn prompt(&mut self, ping: &Ping<T>) -> Result<()> {
        let set = self.set.as_mut().expect("initialized before prompting");
        let before = cloud_mean(&set.particles);
        match lc_prompting(set, ping)? {
            LcOutcome::Gated => {}
            LcOutcome::Weighed {
                ess,
                weights,
                resampled,
            } => {
                self.last_prompt = Some(ping.t);
                self.lc_events.push(LcEvent {
                    t: ping.t,
                    ess,
                    resampled: resampled.is_some(),
                });
                self.weight_history.push((ping.t, weights));
                if let Some(r) = resampled {
                    log::info!("t={:.1}: resampled (ESS {ess:.2})", ping.t);
                    self.resample_events.push(ResampleEvent {
                        t: ping.t,
                        ess,
                        offspring: r.offspring,
                        mean_before: before,
                        mean_after: cloud_mean(&set.particles),
                    });
                }
            }
        }
        Ok(())
    }

    fn train(&mut self, budget: Budget) -> Result<()> {
        let Some(set) = self.set.as_mut() else {
            return Ok(());
        };
        if self.log.is_empty() || self.stop.load(Ordering::Relaxed) {
            return Ok(());
        }
        let b = set.len() / self.config.training.groups;
        let m = self.config.training.minibatch;
        let lr = self.config.training.learning_rate;
        let log = &self.log;
        let index = &set.index;
        let stop = &*self.stop;
        let groups = self.config.training.groups;
        let mut jobs = set
            .particles
            .chunks_mut(b)
            .zip(self.cursors.iter_mut())
            .zip(self.groups.iter_mut())
            .peekable();
        // Iteration budgets are order independent, so groups beyond the core
        // count share threads; deadlines need every group running at once.
        let threads = match budget {
            Budget::Iterations(_) => groups.min(available_cores()),
            Budget::Until(_) => groups,
        };
        let per_thread = groups.div_ceil(threads);
        let mut batches = Vec::with_capacity(threads);
        while jobs.peek().is_some() {
            batches.push(jobs.by_ref().take(per_thread).collect::<Vec<_>>());
        }
        let run = move |batch: Vec<_>| -> Result<()> {
            for ((chunk, cursor), stats) in batch {
                train_group(chunk, cursor, stats, log, index, m, lr, budget, stop)?;
            }
            Ok(())
        };
        if batches.len() == 1 {
            return run(batches.pop().expect("one batch"));
        }
        std::thread::scope(|s| {
            let handles: Vec<_> = batches.into_iter().map(|batch| s.spawn(move || run(batch))).collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("trainer thread panicked"))
                .collect::<Result<Vec<()>>>()
        })?;
        Ok(())
    }
}

fn available_cores() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

#[derive(Clone, Copy, Debug)]
enum Budget {
    Iterations(usize),
    Until(Instant),
}

/// Round-robin training over one group's particles.
#[allow(clippy::too_many_arguments)]
fn train_group<T: Real>(
    chunk: &mut [Particle<T>],
    cursor: &mut usize,
    stats: &mut GroupStats,
    log: &BeamLog<T>,
    index: &super::history::SegmentIndex,
    m: usize,
    lr: T,
    budget: Budget,
    stop: &AtomicBool,
) -> Result<()> {
    let start = Instant::now();
    let mut done = 0usize;
    loop {
        match budget {
            Budget::Iterations(n) if done >= n => break,
            Budget::Until(deadline) if Instant::now() >= deadline => break,
            _ => {}
        }
        if stop.load(Ordering::Relaxed) {
            break;
        }
        let p = &mut chunk[*cursor % chunk.len()];
        svgp_iteration(p, log, index, m, lr)?;
        *cursor = (*cursor + 1) % chunk.len();
        done += 1;
    }
    stats.iterations += done as u64;
    stats.busy += start.elapsed();
    Ok(())
}
