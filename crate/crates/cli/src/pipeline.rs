//! Subcommand implementations shared by the binary and the tests.

use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rbpf_svgp::rbpf::dump::{read_resample_events, read_trajectories, write_resample_events, write_trajectories, write_weights};
use rbpf_svgp::rbpf::{Coordinator, ResampleEvent};
use rbpf_svgp::svgp::{Checkpoint, SvgpModel};
use rbpf_svgp::types::{Pose, Rect};
use rbpf_svgp_eval::{evaluate_run, throughput_report, ParticleOutcome, RunEvaluation, RunInputs};
use rbpf_svgp_sim::scenarios::scenario_a_terrain;
use rbpf_svgp_sim::{run_mission, SurveyLog, TerrainField};
use serde::{Deserialize, Serialize};

use crate::config::{Mode, RunConfig};
use crate::error::{CliError, Result};

pub const CONFIG_FILE: &str = "config.toml";
pub const SURVEY_FILE: &str = "survey.csv";
pub const TERRAIN_FILE: &str = "terrain.toml";
pub const TRAJECTORIES_FILE: &str = "trajectories.csv";
pub const WEIGHTS_FILE: &str = "weights.csv";
pub const RESAMPLE_FILE: &str = "resample_events.csv";
pub const PARTICLES_FILE: &str = "particles.csv";
pub const MAPS_DIR: &str = "maps";
pub const STATUS_FILE: &str = "run.json";
/// Wall-clock rates; host dependent and not part of the report.
pub const THROUGHPUT_FILE: &str = "throughput.json";

fn data_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| data_err(path, e))
}

fn create_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir.join(MAPS_DIR))
        .map_err(|e| CliError::Config(format!("output directory {}: {e}", dir.display())))
}

/// Terrain of a simulated run: the configured one or the built-in scenario.
pub fn terrain_of(cfg: &RunConfig) -> TerrainField {
    cfg.terrain.clone().unwrap_or_else(scenario_a_terrain)
}

/// Simulates the configured survey and archives log, terrain and config.
pub fn cmd_simulate(cfg: RunConfig) -> Result<(SurveyLog, PathBuf)> {
    let mut cfg = RunConfig { mode: Mode::Simulate, survey_log: None, ..cfg }.resolve()?;
    cfg.terrain = Some(terrain_of(&cfg));
    create_out(&cfg.out)?;
    let terrain = cfg.terrain.as_ref().expect("set above");
    let (log, _) = run_mission(terrain, &cfg.survey)?;
    log::info!("simulated {} pings, {} beams", log.len(), log.num_beams());
    let path = cfg.out.join(SURVEY_FILE);
    log.save(&path)?;
    terrain.save(&cfg.out.join(TERRAIN_FILE))?;
    write_file(&cfg.out.join(CONFIG_FILE), cfg.to_toml_string())?;
    Ok((log, path))
}

/// Map-frame bounding box of the beams under dead reckoning.
pub fn dead_reckoning_extent(log: &SurveyLog) -> Option<Rect<f64>> {
    let pts = log.project(&log.dead_reckoning);
    let first = pts.first()?;
    let mut r = Rect::new([first[0], first[1]], [first[0], first[1]]);
    for p in &pts {
        for k in 0..2 {
            r.min[k] = r.min[k].min(p[k]);
            r.max[k] = r.max[k].max(p[k]);
        }
    }
    Some(r)
}

/// Reference beams for the consistency error, restricted to `area`: true
/// positions on the terrain surface when both truth and terrain are known,
/// truth-projected beams without terrain, dead-reckoned beams otherwise.
pub fn reference_beams(log: &SurveyLog, terrain: Option<&TerrainField>, area: &Rect<f64>) -> Vec<[f64; 3]> {
    let poses = log.truth.as_deref().unwrap_or(&log.dead_reckoning);
    let mut pts = log.project(poses);
    if let (Some(field), true) = (terrain, log.has_truth()) {
        for p in &mut pts {
            p[2] = field.height([p[0], p[1]]);
        }
    }
    pts.retain(|p| area.contains([p[0], p[1]]));
    pts
}

/// The filter after a (possibly interrupted) pass over a survey log.
pub struct FilterRun {
    pub coordinator: Coordinator<f64>,
    pub pings: usize,
    pub complete: bool,
    pub wall: Duration,
}

impl FilterRun {
    pub fn particles(&self) -> &[rbpf_svgp::rbpf::Particle<f64>] {
        self.coordinator
            .particles()
            .map_or(&[][..], |s| s.particles.as_slice())
    }

    pub fn trajectories(&self) -> Vec<Vec<Pose<f64>>> {
        self.particles().iter().map(|p| p.history.to_vec()).collect()
    }

    pub fn iterations(&self) -> Vec<u64> {
        self.particles().iter().map(|p| p.iterations).collect()
    }

    pub fn throughput(&self) -> rbpf_svgp_eval::ThroughputReport {
        let groups: Vec<(u64, f64)> = self
            .coordinator
            .group_stats()
            .iter()
            .map(|g| (g.iterations, g.busy.as_secs_f64()))
            .collect();
        throughput_report(&self.iterations(), &groups, self.wall.as_secs_f64())
    }
}

/// Streams the log through a coordinator configured from `cfg`.
pub fn run_filter(cfg: &RunConfig, log: &SurveyLog, area: Rect<f64>, stop: Option<Arc<AtomicBool>>) -> Result<FilterRun> {
    let mut coordinator = Coordinator::new(cfg.session(area)).map_err(|e| CliError::Config(e.to_string()))?;
    if let Some(stop) = stop {
        coordinator.set_stop_handle(stop);
    }
    let start = Instant::now();
    let mut pings = 0;
    let report_every = (log.len() / 20).max(1);
    for entry in log.replay(cfg.pacing) {
        if coordinator.stopped() {
            break;
        }
        coordinator.process(entry.ping, entry.dead_reckoning)?;
        pings += 1;
        if pings % report_every == 0 {
            log::info!("{pings}/{} pings, {} beams in the log", log.len(), coordinator.log().len());
        }
    }
    if !coordinator.stopped() {
        coordinator.finish()?;
    }
    let complete = pings == log.len() && !coordinator.stopped();
    if !complete {
        log::warn!("run interrupted after {pings} of {} pings", log.len());
    }
    Ok(FilterRun {
        coordinator,
        pings,
        complete,
        wall: start.elapsed(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunStatus {
    pub complete: bool,
    pub pings_processed: usize,
    pub pings_in_log: usize,
}

fn map_path(dir: &Path, k: usize) -> PathBuf {
    dir.join(MAPS_DIR).join(format!("particle_{k}.json"))
}

/// Writes the filter state: trajectories, weights, resample events,
/// per-particle counters and map checkpoints.
pub fn dump_filter(run: &FilterRun, log_len: usize, dir: &Path) -> Result<()> {
    let particles = run.particles();
    let trajectories: Vec<(String, Vec<Pose<f64>>)> = particles
        .iter()
        .enumerate()
        .map(|(k, p)| (k.to_string(), p.history.to_vec()))
        .collect();
    let csv = |name: &str, f: &dyn Fn(&mut Vec<u8>) -> std::io::Result<()>| -> Result<()> {
        let mut buf = Vec::new();
        f(&mut buf).map_err(|e| data_err(&dir.join(name), e))?;
        write_file(&dir.join(name), buf)
    };
    csv(TRAJECTORIES_FILE, &|w| write_trajectories(w, &trajectories))?;
    let coord = &run.coordinator;
    let mut weights = coord.weight_history.clone();
    if let (Some(set), Some(last)) = (coord.particles(), coord.nav_trajectory.last()) {
        weights.push((last.t, set.weights()));
    }
    csv(WEIGHTS_FILE, &|w| write_weights(w, particles.len(), &weights))?;
    csv(RESAMPLE_FILE, &|w| write_resample_events(w, &coord.resample_events))?;
    csv(PARTICLES_FILE, &|w| {
        writeln!(w, "particle,iterations,weight")?;
        for (k, p) in particles.iter().enumerate() {
            writeln!(w, "{k},{},{}", p.iterations, p.weight())?;
        }
        Ok(())
    })?;
    for (k, p) in particles.iter().enumerate() {
        Checkpoint::new(p.map.clone(), Some(p.rng.clone())).save(&map_path(dir, k))?;
    }
    let status = RunStatus {
        complete: run.complete,
        pings_processed: run.pings,
        pings_in_log: log_len,
    };
    write_file(&dir.join(STATUS_FILE), serde_json::to_string_pretty(&status).expect("serializes") + "\n")?;
    let throughput = serde_json::to_string_pretty(&run.throughput()).expect("serializes") + "\n";
    write_file(&dir.join(THROUGHPUT_FILE), throughput)
}

/// Loads the survey used by a run and the area it mapped.
fn run_inputs(cfg: &RunConfig, dir: &Path) -> Result<(SurveyLog, PathBuf)> {
    let path = match &cfg.survey_log {
        Some(p) => p.clone(),
        None => dir.join(SURVEY_FILE),
    };
    if !path.exists() {
        return Err(CliError::Data(format!("missing survey log {}", path.display())));
    }
    Ok((SurveyLog::load(&path)?, path))
}

/// Runs the filter on the configured survey (simulated unless a log is
/// given), dumps its state and writes the reports.
pub fn cmd_run(cfg: RunConfig, stop: Option<Arc<AtomicBool>>) -> Result<RunEvaluation> {
    if matches!(cfg.mode, Mode::Simulate | Mode::Eval) {
        return Err(CliError::Config(format!("mode {:?} is not a filter run", cfg.mode)));
    }
    let mut cfg = cfg.resolve()?;
    create_out(&cfg.out)?;
    let log = match &cfg.survey_log {
        Some(path) => {
            let log = SurveyLog::load(path)?;
            cfg.survey.area = dead_reckoning_extent(&log)
                .filter(|r| r.is_proper())
                .ok_or_else(|| CliError::Data(format!("{}: survey log has no usable beams", path.display())))?;
            log
        }
        None => {
            let field = terrain_of(&cfg);
            let (log, _) = run_mission(&field, &cfg.survey)?;
            log.save(&cfg.out.join(SURVEY_FILE))?;
            field.save(&cfg.out.join(TERRAIN_FILE))?;
            cfg.terrain = Some(field);
            log
        }
    };
    write_file(&cfg.out.join(CONFIG_FILE), cfg.to_toml_string())?;
    log::info!(
        "running {:?}: J={} B={} S={} M={} on {} pings",
        cfg.mode,
        cfg.particles,
        cfg.groups,
        cfg.inducing,
        cfg.minibatch,
        log.len()
    );
    let run = run_filter(&cfg, &log, cfg.survey.area, stop)?;
    dump_filter(&run, log.len(), &cfg.out)?;
    cmd_eval(&cfg.out)
}

fn read_particles(path: &Path) -> Result<Vec<(u64, f64)>> {
    let text = std::fs::read_to_string(path).map_err(|e| data_err(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "particle,iterations,weight")) => {}
        _ => return Err(data_err(path, "line 1: bad header")),
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let bad = || data_err(path, format!("line {}: malformed row {l:?}", i + 1));
            let c: Vec<&str> = l.split(',').collect();
            if c.len() != 3 {
                return Err(bad());
            }
            Ok((c[1].parse().map_err(|_| bad())?, c[2].parse().map_err(|_| bad())?))
        })
        .collect()
}

fn open(path: &Path) -> Result<BufReader<std::fs::File>> {
    std::fs::File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Data(format!("missing or unreadable {}: {e}", path.display())))
}

/// Recomputes the report files of a run directory from its dumps.
pub fn cmd_eval(dir: &Path) -> Result<RunEvaluation> {
    let cfg_path = dir.join(CONFIG_FILE);
    if !cfg_path.exists() {
        return Err(CliError::Data(format!("missing {}", cfg_path.display())));
    }
    let cfg = RunConfig::load(&cfg_path)?;
    let (log, _) = run_inputs(&cfg, dir)?;
    let trajectories: Vec<(String, Vec<Pose<f64>>)> = {
        let p = dir.join(TRAJECTORIES_FILE);
        read_trajectories(open(&p)?).map_err(|e| data_err(&p, e))?
    };
    let events: Vec<ResampleEvent> = {
        let p = dir.join(RESAMPLE_FILE);
        read_resample_events(open(&p)?).map_err(|e| data_err(&p, e))?
    };
    let counters = read_particles(&dir.join(PARTICLES_FILE))?;
    if counters.len() != trajectories.len() {
        return Err(CliError::Data(format!(
            "{} lists {} particles but {} has {}",
            PARTICLES_FILE,
            counters.len(),
            TRAJECTORIES_FILE,
            trajectories.len()
        )));
    }
    let maps: Vec<SvgpModel<f64>> = (0..counters.len())
        .map(|k| {
            let p = map_path(dir, k);
            if !p.exists() {
                return Err(CliError::Data(format!("missing {}", p.display())));
            }
            Ok(Checkpoint::<f64>::load(&p).map_err(|e| data_err(&p, e))?.model)
        })
        .collect::<Result<_>>()?;
    let reference = reference_beams(&log, cfg.terrain.as_ref(), &cfg.survey.area);
    let inputs = RunInputs {
        reference: &reference,
        cell_size: cfg.cell_size,
        particles: maps
            .iter()
            .zip(&trajectories)
            .zip(&counters)
            .map(|((map, (_, traj)), &(iterations, weight))| ParticleOutcome {
                map,
                trajectory: traj,
                weight,
                iterations,
            })
            .collect(),
        dead_reckoning: &log.dead_reckoning,
        truth: log.truth.as_deref(),
        resample_events: &events,
    };
    let eval = evaluate_run(&inputs)?;
    eval.write(dir)?;
    log::info!(
        "map RMSE {:.4} m over {} cells{}",
        eval.report.map_rmse,
        eval.report.valid_cells,
        eval.report
            .trajectory
            .as_ref()
            .map_or(String::new(), |t| format!(
                ", trajectory RMSE {:.3} m (dead reckoning {:.3} m)",
                t.estimate_rmse, t.dead_reckoning_rmse
            ))
    );
    Ok(eval)
}

/// Installs a Ctrl-C handler that raises the returned flag.
pub fn interrupt_flag() -> Arc<AtomicBool> {
    let flag = Arc::new(AtomicBool::new(false));
    let f = flag.clone();
    if let Err(e) = ctrlc::set_handler(move || {
        if f.swap(true, Ordering::SeqCst) {
            std::process::exit(130);
        }
        eprintln!("interrupt: stopping at the next iteration boundary (press again to abort)");
    }) {
        log::warn!("could not install the interrupt handler: {e}");
    }
    flag
}
