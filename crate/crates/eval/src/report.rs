//! Run reports: everything here is a pure function of the dumped run
//! artifacts, so a report can be regenerated bit for bit from a run
//! directory.

use std::io::Write;
use std::path::{Path, PathBuf};

use rbpf_svgp::rbpf::{mean_trajectory, ResampleEvent};
use rbpf_svgp::svgp::SvgpModel;
use rbpf_svgp::types::Pose;
use serde::{Deserialize, Serialize};

use crate::consistency::ReferenceGrid;
use crate::error::{Error, Result};
use crate::export::{export_map_grid, MapExport};
use crate::grid::GridMap;
use crate::throughput::IterationStats;
use crate::trajectory::{hold, trajectory_error, TrajectoryError};

pub const REPORT_FILE: &str = "report.json";
pub const ERROR_GRID_FILE: &str = "consistency_error.asc";
pub const MEAN_GRID_FILE: &str = "map_mean.asc";
pub const VARIANCE_GRID_FILE: &str = "map_variance.asc";
pub const INDUCING_FILE: &str = "inducing.csv";
pub const TRAJECTORY_ERROR_FILE: &str = "trajectory_error.csv";
pub const ELBO_FILE: &str = "elbo_traces.csv";

/// Report files written by [`RunEvaluation::write`], all deterministic.
pub const REPORT_FILES: [&str; 7] = [
    REPORT_FILE,
    ERROR_GRID_FILE,
    MEAN_GRID_FILE,
    VARIANCE_GRID_FILE,
    INDUCING_FILE,
    TRAJECTORY_ERROR_FILE,
    ELBO_FILE,
];

/// Final state of one particle.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleOutcome<'a> {
    pub map: &'a SvgpModel<f64>,
    pub trajectory: &'a [Pose<f64>],
    pub weight: f64,
    pub iterations: u64,
}

pub struct RunInputs<'a> {
    /// Map-frame reference beams for the consistency error.
    pub reference: &'a [[f64; 3]],
    pub cell_size: f64,
    pub particles: Vec<ParticleOutcome<'a>>,
    pub dead_reckoning: &'a [Pose<f64>],
    pub truth: Option<&'a [Pose<f64>]>,
    pub resample_events: &'a [ResampleEvent],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub estimate_rmse: f64,
    pub estimate_terminal: f64,
    pub dead_reckoning_rmse: f64,
    pub dead_reckoning_terminal: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElboSummary {
    pub particle: usize,
    pub steps: usize,
    pub final_elbo_per_datum: Option<f64>,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResampleSummary {
    pub t: f64,
    pub ess: f64,
    pub offspring: Vec<usize>,
    /// Horizontal distance of the particle-cloud mean to the truth.
    pub error_before: Option<f64>,
    pub error_after: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub particles: usize,
    pub reference_beams: usize,
    pub cell_size: f64,
    pub valid_cells: usize,
    /// Mean consistency RMSE over all particles.
    pub map_rmse: f64,
    pub map_rmse_per_particle: Vec<f64>,
    /// Highest final weight (lowest index on ties); its map is exported.
    pub selected_particle: usize,
    pub selected_map_rmse: f64,
    pub trajectory: Option<TrajectorySummary>,
    pub iterations: IterationStats,
    pub elbo: Vec<ElboSummary>,
    pub resample_events: Vec<ResampleSummary>,
}

pub struct RunEvaluation {
    pub report: RunReport,
    pub error_grid: GridMap,
    pub map: MapExport,
    pub estimate: Vec<Pose<f64>>,
    pub estimate_error: Option<TrajectoryError>,
    pub dead_reckoning_error: Option<TrajectoryError>,
    elbo_traces: Vec<Vec<(u64, f64)>>,
}

pub fn evaluate_run(inputs: &RunInputs<'_>) -> Result<RunEvaluation> {
    if inputs.particles.is_empty() {
        return Err(Error::InvalidInput("run has no particles".into()));
    }
    let reference = ReferenceGrid::new(inputs.reference, inputs.cell_size)?;
    let mut grids = Vec::with_capacity(inputs.particles.len());
    for p in &inputs.particles {
        grids.push(reference.evaluate(p.map)?);
    }
    let rmses: Vec<f64> = grids.iter().map(|g| g.1).collect();
    let selected = inputs
        .particles
        .iter()
        .enumerate()
        .fold(0, |best, (k, p)| if p.weight > inputs.particles[best].weight { k } else { best });
    let (error_grid, selected_rmse) = grids.swap_remove(selected);
    let map = export_map_grid(inputs.particles[selected].map, &reference.depths.bounds, inputs.cell_size)?;

    let paths: Vec<&[Pose<f64>]> = inputs.particles.iter().map(|p| p.trajectory).collect();
    let estimate = mean_trajectory(&paths);
    let (estimate_error, dead_reckoning_error) = match inputs.truth {
        Some(truth) => (
            Some(trajectory_error(&estimate, truth)?),
            Some(trajectory_error(inputs.dead_reckoning, truth)?),
        ),
        None => (None, None),
    };
    let trajectory = estimate_error.as_ref().zip(dead_reckoning_error.as_ref()).map(|(e, d)| TrajectorySummary {
        estimate_rmse: e.rmse,
        estimate_terminal: e.terminal,
        dead_reckoning_rmse: d.rmse,
        dead_reckoning_terminal: d.terminal,
    });

    let cloud_error = |t: f64, mean: [f64; 2]| {
        inputs
            .truth
            .and_then(|truth| hold(truth, t))
            .map(|g| (mean[0] - g.position[0]).hypot(mean[1] - g.position[1]))
    };
    let resample_events = inputs
        .resample_events
        .iter()
        .map(|e| ResampleSummary {
            t: e.t,
            ess: e.ess,
            offspring: e.offspring.clone(),
            error_before: cloud_error(e.t, e.mean_before),
            error_after: cloud_error(e.t, e.mean_after),
        })
        .collect();

    let elbo = inputs
        .particles
        .iter()
        .enumerate()
        .map(|(k, p)| ElboSummary {
            particle: k,
            steps: p.map.elbo_trace.len(),
            final_elbo_per_datum: p.map.last_elbo(),
            converged: p.map.is_converged(),
        })
        .collect();
    let iterations: Vec<u64> = inputs.particles.iter().map(|p| p.iterations).collect();

    let report = RunReport {
        particles: inputs.particles.len(),
        reference_beams: inputs.reference.len(),
        cell_size: inputs.cell_size,
        valid_cells: error_grid.valid_count(),
        map_rmse: rmses.iter().sum::<f64>() / rmses.len() as f64,
        map_rmse_per_particle: rmses,
        selected_particle: selected,
        selected_map_rmse: selected_rmse,
        trajectory,
        iterations: IterationStats::new(&iterations),
        elbo,
        resample_events,
    };
    Ok(RunEvaluation {
        report,
        error_grid,
        map,
        estimate,
        estimate_error,
        dead_reckoning_error,
        elbo_traces: inputs.particles.iter().map(|p| p.map.elbo_trace.clone()).collect(),
    })
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    std::fs::File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

impl RunEvaluation {
    /// Writes the report files into `dir` and returns their paths.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let path = |name: &str| dir.join(name);
        let io = |p: &Path| {
            let p = p.to_path_buf();
            move |e: std::io::Error| Error::io(p, e)
        };

        let p = path(REPORT_FILE);
        let mut json = serde_json::to_string_pretty(&self.report).expect("report serializes");
        json.push('\n');
        std::fs::write(&p, json).map_err(io(&p))?;

        self.error_grid.save(&path(ERROR_GRID_FILE))?;
        self.map.mean.save(&path(MEAN_GRID_FILE))?;
        self.map.variance.save(&path(VARIANCE_GRID_FILE))?;

        let p = path(INDUCING_FILE);
        let mut w = create(&p)?;
        (|| {
            writeln!(w, "x,y")?;
            for z in &self.map.inducing {
                writeln!(w, "{},{}", z[0], z[1])?;
            }
            w.flush()
        })()
        .map_err(io(&p))?;

        let p = path(TRAJECTORY_ERROR_FILE);
        let mut w = create(&p)?;
        (|| {
            writeln!(w, "t,estimate_error,dead_reckoning_error")?;
            if let (Some(e), Some(d)) = (&self.estimate_error, &self.dead_reckoning_error) {
                let mut dr = d.curve.iter().peekable();
                for &(t, err) in &e.curve {
                    while dr.peek().is_some_and(|(td, _)| *td < t) {
                        dr.next();
                    }
                    match dr.peek() {
                        Some(&&(td, derr)) if td == t => writeln!(w, "{t},{err},{derr}")?,
                        _ => writeln!(w, "{t},{err},")?,
                    }
                }
            }
            w.flush()
        })()
        .map_err(io(&p))?;

        let p = path(ELBO_FILE);
        let mut w = create(&p)?;
        (|| {
            writeln!(w, "particle,step,elbo_per_datum")?;
            for (k, trace) in self.elbo_traces.iter().enumerate() {
                for (step, v) in trace {
                    writeln!(w, "{k},{step},{v}")?;
                }
            }
            w.flush()
        })()
        .map_err(io(&p))?;

        Ok(REPORT_FILES.iter().map(|n| path(n)).collect())
    }
}
