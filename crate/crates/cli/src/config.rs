//! Run configuration: a TOML file with command-line overrides. The fully
//! resolved configuration is archived next to every output.

use std::path::{Path, PathBuf};

use rbpf_svgp::rbpf::{FilterConfig, Pacing, ResampleRule, SessionConfig, TrainingConfig};
use rbpf_svgp::svgp::{KernelParams, Trainable};
use rbpf_svgp::types::Rect;
use rbpf_svgp_sim::{SurveyConfig, TerrainField};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const DEFAULT_LC_RATE: f64 = 0.1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Generate a synthetic survey log.
    Simulate,
    /// Run the filter on a recorded survey log; LC prompts only if an LC rate is set.
    Replay,
    /// Train maps along dead reckoning, never prompting loop closures.
    #[default]
    MapOnly,
    /// Full SLAM: LC prompts at the configured rate.
    Slam,
    /// Recompute the reports of an existing run directory.
    Eval,
}

/// Matérn kernel hyperparameters in natural units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelInit {
    /// σ² (m²).
    pub signal_var: f64,
    /// ℓ (m).
    pub lengthscale: f64,
    /// σ_n² (m²).
    pub noise_var: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub mode: Mode,
    pub seed: u64,
    /// Terrain spec file; when absent, `terrain` or the built-in scenario is used.
    pub terrain_file: Option<PathBuf>,
    /// Recorded survey log to replay; when absent, the survey is simulated.
    pub survey_log: Option<PathBuf>,
    pub out: PathBuf,
    /// Number of particles J.
    pub particles: usize,
    /// Number of trainer groups B; must divide J.
    pub groups: usize,
    /// Minibatch size M.
    pub minibatch: usize,
    /// Number of inducing points S.
    pub inducing: usize,
    pub learning_rate: f64,
    /// Loop-closure prompt rate f_LC (Hz).
    pub lc_rate: Option<f64>,
    /// Filter motion noise W, variance per second for x, y, z, yaw.
    pub motion_noise: [f64; 4],
    /// Measurement noise variance Q (m²).
    pub measurement_noise: f64,
    pub convergence_window: usize,
    pub convergence_threshold: f64,
    /// Beams per ping entering the particle weight (K_w).
    pub weight_beams: usize,
    pub resample_rule: ResampleRule,
    pub pacing: Pacing,
    pub iterations_per_ping: usize,
    pub final_iterations: usize,
    pub shared_particle_streams: bool,
    pub trainable: Trainable,
    /// Starting kernel for every map; derived from the first ping when absent.
    pub initial_kernel: Option<KernelInit>,
    /// Consistency grid cell size (m).
    pub cell_size: f64,
    pub survey: SurveyConfig,
    pub terrain: Option<TerrainField>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let session = SessionConfig::<f64> {
            particles: 1,
            inducing: 200,
            area: Rect::new([0.0, 0.0], [1.0, 1.0]),
            lc_rate: None,
            convergence_window: 50,
            convergence_threshold: 1e-3,
            trainable: Trainable::ALL,
            initial_kernel: None,
            seed: 0,
            shared_particle_streams: false,
            filter: FilterConfig::default(),
            training: TrainingConfig::default(),
        };
        Self {
            mode: Mode::default(),
            seed: session.seed,
            terrain_file: None,
            survey_log: None,
            out: PathBuf::from("out"),
            particles: session.particles,
            groups: session.training.groups,
            minibatch: session.training.minibatch,
            inducing: session.inducing,
            learning_rate: session.training.learning_rate,
            lc_rate: None,
            motion_noise: [0.0; 4],
            measurement_noise: session.filter.measurement_noise,
            convergence_window: session.convergence_window,
            convergence_threshold: session.convergence_threshold,
            weight_beams: session.filter.weight_beams,
            resample_rule: session.filter.resample_rule,
            pacing: session.training.pacing,
            iterations_per_ping: session.training.iterations_per_ping,
            final_iterations: session.training.final_iterations,
            shared_particle_streams: false,
            trainable: Trainable::ALL,
            initial_kernel: None,
            cell_size: 1.0,
            survey: SurveyConfig::default(),
            terrain: None,
        }
    }
}

/// Command-line overrides; every flag maps onto one `RunConfig` field.
#[derive(Clone, Debug, Default, clap::Args)]
pub struct Overrides {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// Seed for the filter and the survey simulation.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub terrain_file: Option<PathBuf>,
    #[arg(long)]
    pub survey_log: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Number of particles J.
    #[arg(long)]
    pub particles: Option<usize>,
    /// Number of trainer groups B.
    #[arg(long)]
    pub groups: Option<usize>,
    /// Minibatch size M.
    #[arg(long)]
    pub minibatch: Option<usize>,
    /// Number of inducing points S.
    #[arg(long)]
    pub inducing: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Loop-closure prompt rate f_LC in Hz.
    #[arg(long)]
    pub lc_rate: Option<f64>,
    #[arg(long)]
    pub measurement_noise: Option<f64>,
    #[arg(long)]
    pub convergence_window: Option<usize>,
    #[arg(long)]
    pub convergence_threshold: Option<f64>,
    #[arg(long)]
    pub weight_beams: Option<usize>,
    #[arg(long, value_parser = parse_rule)]
    pub resample_rule: Option<ResampleRule>,
    /// `max` for maximum throughput, or a wall-clock speed-up factor.
    #[arg(long, value_parser = parse_pacing)]
    pub pacing: Option<Pacing>,
    #[arg(long)]
    pub iterations_per_ping: Option<usize>,
    #[arg(long)]
    pub final_iterations: Option<usize>,
    #[arg(long)]
    pub cell_size: Option<f64>,
    /// Cap the simulated mission length (s).
    #[arg(long)]
    pub duration: Option<f64>,
}

fn parse_rule(s: &str) -> std::result::Result<ResampleRule, String> {
    match s {
        "ess-below-half" => Ok(ResampleRule::EssBelowHalf),
        "ess-above-half" => Ok(ResampleRule::EssAboveHalf),
        _ => Err("expected ess-below-half or ess-above-half".into()),
    }
}

fn parse_pacing(s: &str) -> std::result::Result<Pacing, String> {
    if s == "max" {
        return Ok(Pacing::MaxThroughput);
    }
    s.parse::<f64>()
        .map(|speedup| Pacing::WallClock { speedup })
        .map_err(|_| "expected `max` or a speed-up factor".into())
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("run configuration serializes")
    }

    /// Config file (if any) with the flags applied on top.
    pub fn from_overrides(o: &Overrides) -> Result<Self> {
        let mut cfg = match &o.config {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        macro_rules! apply {
            ($($f:ident),*) => {$(if let Some(v) = o.$f.clone() { cfg.$f = v; })*};
        }
        apply!(
            mode, seed, out, particles, groups, minibatch, inducing, learning_rate, measurement_noise,
            convergence_window, convergence_threshold, weight_beams, resample_rule, pacing,
            iterations_per_ping, final_iterations, cell_size
        );
        if let Some(seed) = o.seed {
            cfg.survey.seed = seed;
        }
        if o.terrain_file.is_some() {
            cfg.terrain_file = o.terrain_file.clone();
        }
        if o.survey_log.is_some() {
            cfg.survey_log = o.survey_log.clone();
        }
        if o.lc_rate.is_some() {
            cfg.lc_rate = o.lc_rate;
        }
        if o.duration.is_some() {
            cfg.survey.duration_cap = o.duration;
        }
        Ok(cfg)
    }

    /// LC prompt rate after applying the mode.
    pub fn effective_lc_rate(&self) -> Option<f64> {
        match self.mode {
            Mode::MapOnly | Mode::Simulate | Mode::Eval => None,
            Mode::Slam => Some(self.lc_rate.unwrap_or(DEFAULT_LC_RATE)),
            Mode::Replay => self.lc_rate,
        }
    }

    /// Loads the terrain file into the inline terrain and fixes the LC rate,
    /// so the archived config reproduces the run without other inputs.
    pub fn resolve(mut self) -> Result<Self> {
        if let Some(path) = &self.terrain_file {
            self.terrain = Some(TerrainField::load(path)?);
        }
        self.lc_rate = self.effective_lc_rate();
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.mode == Mode::Replay && self.survey_log.is_none() {
            return bad("replay mode needs a survey log".into());
        }
        if !(self.cell_size > 0.0 && self.cell_size.is_finite()) {
            return bad(format!("cell size {} must be positive", self.cell_size));
        }
        if self.weight_beams == 0 {
            return bad("weight_beams must be at least 1".into());
        }
        if self.survey_log.is_none() {
            self.survey.validate()?;
        }
        if let Some(t) = &self.terrain {
            t.validate()?;
        }
        self.session(self.survey.area)
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn session(&self, area: Rect<f64>) -> SessionConfig<f64> {
        SessionConfig {
            particles: self.particles,
            inducing: self.inducing,
            area,
            lc_rate: self.effective_lc_rate(),
            convergence_window: self.convergence_window,
            convergence_threshold: self.convergence_threshold,
            trainable: self.trainable,
            initial_kernel: self
                .initial_kernel
                .map(|k| KernelParams::new(k.signal_var, k.lengthscale, k.noise_var)),
            seed: self.seed,
            shared_particle_streams: self.shared_particle_streams,
            filter: FilterConfig {
                motion_noise: self.motion_noise,
                measurement_noise: self.measurement_noise,
                weight_beams: self.weight_beams,
                resample_rule: self.resample_rule,
            },
            training: TrainingConfig {
                minibatch: self.minibatch,
                learning_rate: self.learning_rate,
                groups: self.groups,
                iterations_per_ping: self.iterations_per_ping,
                final_iterations: self.final_iterations,
                pacing: self.pacing,
            },
        }
    }
}
