use std::path::Path;
use std::process::Command;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use clap::Parser;
use rbpf_svgp::svgp::convergence_check;
use rbpf_svgp::types::Rect;
use rbpf_svgp_cli::config::{KernelInit, Mode, Overrides, RunConfig};
use rbpf_svgp_cli::pipeline::{cmd_eval, cmd_run, cmd_simulate, run_filter, PARTICLES_FILE, STATUS_FILE, SURVEY_FILE};
use rbpf_svgp_cli::CliError;
use rbpf_svgp_eval::report::{REPORT_FILES, TRAJECTORY_ERROR_FILE};
use rbpf_svgp_sim::{SurveyConfig, SurveyLog, TerrainField};

const BIN: &str = env!("CARGO_BIN_EXE_rbpf-svgp");

fn small_survey(seed: u64) -> SurveyConfig {
    SurveyConfig {
        area: Rect::new([0.0, 0.0], [60.0, 60.0]),
        line_spacing: 20.0,
        ping_rate: 1.0,
        beams_per_ping: 16,
        max_range: 100.0,
        seed,
        ..SurveyConfig::default()
    }
}

fn flat() -> TerrainField {
    TerrainField::flat(Rect::new([-100.0, -100.0], [160.0, 160.0]), -30.0)
}

fn small_run(out: &Path, mode: Mode) -> RunConfig {
    RunConfig {
        mode,
        seed: 5,
        out: out.to_path_buf(),
        particles: 2,
        inducing: 25,
        minibatch: 40,
        iterations_per_ping: 4,
        survey: small_survey(5),
        terrain: Some(flat()),
        ..RunConfig::default()
    }
}

#[derive(Parser)]
struct Flags {
    #[command(flatten)]
    o: Overrides,
}

fn overrides(args: &[&str]) -> Overrides {
    Flags::try_parse_from(std::iter::once("test").chain(args.iter().copied())).unwrap().o
}

#[test]
fn config_file_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    std::fs::write(
        &path,
        "mode = \"slam\"\nparticles = 8\ngroups = 2\n\n[initial_kernel]\nsignal_var = 2.0\nlengthscale = 15.0\nnoise_var = 0.05\n",
    )
    .unwrap();
    let o = overrides(&["--config", path.to_str().unwrap(), "--particles", "4", "--seed", "9", "--lc-rate", "0.2"]);
    let cfg = RunConfig::from_overrides(&o).unwrap();
    assert_eq!(cfg.mode, Mode::Slam);
    assert_eq!((cfg.particles, cfg.groups), (4, 2));
    assert_eq!((cfg.seed, cfg.survey.seed), (9, 9));
    assert_eq!(cfg.lc_rate, Some(0.2));
    assert_eq!(
        cfg.initial_kernel,
        Some(KernelInit { signal_var: 2.0, lengthscale: 15.0, noise_var: 0.05 })
    );
    let back = RunConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
    assert_eq!(back, cfg);
}

#[test]
fn lc_rate_follows_the_mode() {
    let cfg = |mode, lc_rate| RunConfig { mode, lc_rate, ..RunConfig::default() };
    assert_eq!(cfg(Mode::Slam, None).effective_lc_rate(), Some(0.1));
    assert_eq!(cfg(Mode::Slam, Some(0.5)).effective_lc_rate(), Some(0.5));
    assert_eq!(cfg(Mode::MapOnly, Some(0.5)).effective_lc_rate(), None);
    assert_eq!(cfg(Mode::Replay, None).effective_lc_rate(), None);
}

#[test]
fn invalid_configs_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let base = small_run(dir.path(), Mode::MapOnly);
    let cases = [
        RunConfig { particles: 3, groups: 2, ..base.clone() },
        RunConfig { learning_rate: -0.1, ..base.clone() },
        RunConfig { lc_rate: Some(0.0), mode: Mode::Slam, ..base.clone() },
        RunConfig { mode: Mode::Replay, ..base.clone() },
        RunConfig { cell_size: 0.0, ..base.clone() },
        RunConfig { initial_kernel: Some(KernelInit { signal_var: 1.0, lengthscale: -1.0, noise_var: 0.1 }), ..base },
    ];
    for cfg in cases {
        let err = cmd_run(cfg, None).err().expect("config error");
        assert!(matches!(err, CliError::Config(_)), "{err}");
        assert_eq!(err.exit_code(), 1);
    }
    assert!(RunConfig::from_toml_str("particles = 2\nparticle_count = 3\n").is_err());
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let status = |args: &[&str]| Command::new(BIN).args(args).env("RUST_LOG", "error").output().unwrap();

    let out = status(&["config"]);
    assert!(out.status.success());
    RunConfig::from_toml_str(&String::from_utf8(out.stdout).unwrap()).unwrap();

    let bad = status(&["run", "--particles", "3", "--groups", "2", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("divide"), "{}", String::from_utf8_lossy(&bad.stderr));

    let missing = status(&["eval", "--out", dir.path().join("nowhere").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("config.toml"));

    let sim_out = dir.path().join("sim");
    let sim = status(&["simulate", "--duration", "20", "--seed", "3", "--out", sim_out.to_str().unwrap()]);
    assert!(sim.status.success(), "{}", String::from_utf8_lossy(&sim.stderr));
    assert_eq!(SurveyLog::load(&sim_out.join(SURVEY_FILE)).unwrap().len(), 41);
}

#[test]
fn simulate_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let cfg = RunConfig { out: dir.path().join(name), seed: 11, survey: small_survey(11), ..RunConfig::default() };
        let (_, path) = cmd_simulate(cfg).unwrap();
        std::fs::read(path).unwrap()
    };
    let (a, b) = (run("a"), run("b"));
    assert!(!a.is_empty());
    assert_eq!(a, b);
    let terrain = |name: &str| std::fs::read(dir.path().join(name).join("terrain.toml")).unwrap();
    assert_eq!(terrain("a"), terrain("b"));
}

#[test]
fn zero_noise_survey_has_dead_reckoning_equal_to_truth() {
    let dir = tempfile::tempdir().unwrap();
    let survey = SurveyConfig { dr_noise: [0.0; 4], dr_bias: [0.0; 2], mbes_noise: 0.0, ..small_survey(2) };
    let (_, path) = cmd_simulate(RunConfig { out: dir.path().to_path_buf(), survey, ..RunConfig::default() }).unwrap();
    let log = SurveyLog::load(&path).unwrap();
    let truth = log.truth.as_ref().expect("simulated logs carry truth");
    assert_eq!(truth.len(), log.dead_reckoning.len());
    for (d, g) in log.dead_reckoning.iter().zip(truth) {
        assert_eq!(d, g);
    }
}

#[test]
fn long_slow_mission_has_the_configured_beam_count() {
    // 0.83 h at 0.6 m/s, scaled down in ping rate and fan size.
    let duration = 0.83 * 3600.0;
    let survey = SurveyConfig {
        area: Rect::new([0.0, 0.0], [500.0, 500.0]),
        line_spacing: 100.0,
        speed: 0.6,
        ping_rate: 0.5,
        beams_per_ping: 8,
        max_range: 200.0,
        duration_cap: Some(duration),
        ..SurveyConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let terrain = TerrainField::flat(Rect::new([-200.0, -200.0], [700.0, 700.0]), -30.0);
    let cfg = RunConfig { out: dir.path().to_path_buf(), survey: survey.clone(), terrain: Some(terrain), ..RunConfig::default() };
    let (log, _) = cmd_simulate(cfg).unwrap();
    let pings = duration * survey.ping_rate;
    assert!((log.len() as f64 - pings).abs() <= 1.0, "{} pings for {pings}", log.len());
    assert_eq!(log.num_beams(), log.len() * survey.beams_per_ping);
    let last = log.dead_reckoning.last().unwrap().t - log.dead_reckoning[0].t;
    assert!(last <= duration && last > duration - 2.0 / survey.ping_rate, "{last}");
}

#[test]
fn map_only_on_a_noiseless_flat_survey() {
    let dir = tempfile::tempdir().unwrap();
    let survey = SurveyConfig { dr_noise: [0.0; 4], dr_bias: [0.0; 2], mbes_noise: 0.0, ..small_survey(1) };
    let cfg = RunConfig { particles: 1, motion_noise: [0.0; 4], survey, final_iterations: 200, ..small_run(dir.path(), Mode::MapOnly) };
    let eval = cmd_run(cfg, None).unwrap();
    assert!(eval.report.map_rmse < 0.05, "map RMSE {}", eval.report.map_rmse);
    assert!(eval.report.resample_events.is_empty());
    let t = eval.report.trajectory.unwrap();
    assert!(t.estimate_rmse < 1e-9, "{}", t.estimate_rmse);
}

#[test]
fn eval_regenerates_the_reports_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig { motion_noise: [0.01, 0.01, 0.0, 0.0], ..small_run(dir.path(), Mode::Slam) };
    cmd_run(cfg, None).unwrap();
    let before: Vec<Vec<u8>> = REPORT_FILES.iter().map(|f| std::fs::read(dir.path().join(f)).unwrap()).collect();
    for f in REPORT_FILES {
        std::fs::remove_file(dir.path().join(f)).unwrap();
    }
    cmd_eval(dir.path()).unwrap();
    for (f, b) in REPORT_FILES.iter().zip(&before) {
        assert_eq!(&std::fs::read(dir.path().join(f)).unwrap(), b, "{f}");
    }
    let curves = std::fs::read_to_string(dir.path().join(TRAJECTORY_ERROR_FILE)).unwrap();
    let header = curves.lines().next().unwrap();
    assert!(header.contains("dead_reckoning") && header.contains("estimate"), "{header}");
    assert!(curves.lines().count() > 2);
}

#[test]
fn missing_artifacts_are_named() {
    let dir = tempfile::tempdir().unwrap();
    cmd_run(small_run(dir.path(), Mode::MapOnly), None).unwrap();
    for name in [PARTICLES_FILE, "maps/particle_1.json", SURVEY_FILE, "config.toml"] {
        let path = dir.path().join(name);
        let saved = std::fs::read(&path).unwrap();
        std::fs::remove_file(&path).unwrap();
        let err = cmd_eval(dir.path()).err().expect("missing file");
        assert_eq!(err.exit_code(), 2, "{err}");
        assert!(err.to_string().contains(name.rsplit('/').next().unwrap()), "{err}");
        std::fs::write(&path, saved).unwrap();
    }
    cmd_eval(dir.path()).unwrap();
}

#[test]
fn slam_prompts_respect_the_rate_and_the_gate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        particles: 4,
        motion_noise: [0.01, 0.01, 0.0, 0.0],
        iterations_per_ping: 40,
        convergence_threshold: 1e-2,
        ..small_run(dir.path(), Mode::Slam)
    }
    .resolve()
    .unwrap();
    assert_eq!(cfg.lc_rate, Some(0.1));
    let (log, _) = rbpf_svgp_sim::run_mission(cfg.terrain.as_ref().unwrap(), &cfg.survey).unwrap();

    let mut coordinator = rbpf_svgp::rbpf::Coordinator::new(cfg.session(cfg.survey.area)).unwrap();
    let mut gate_open_at = None;
    for entry in log.iter() {
        let before = coordinator.lc_events.len();
        let converged = coordinator.particles().is_some_and(|s| {
            s.particles
                .iter()
                .all(|p| convergence_check(&p.map, cfg.convergence_window, cfg.convergence_threshold))
        });
        coordinator.process(entry.ping, entry.dead_reckoning).unwrap();
        if converged && gate_open_at.is_none() {
            gate_open_at = Some(entry.ping.t);
        }
        if coordinator.lc_events.len() > before {
            assert!(converged, "prompt at t={} before every map converged", entry.ping.t);
        }
    }
    let events = &coordinator.lc_events;
    assert!(!events.is_empty(), "gate opened at {gate_open_at:?} but no prompt");
    assert!(events[0].t >= gate_open_at.unwrap());
    for w in events.windows(2) {
        assert!(w[1].t - w[0].t >= 10.0 - 1e-9, "prompts at {} and {}", w[0].t, w[1].t);
    }
    let span = log.dead_reckoning.last().unwrap().t - log.dead_reckoning[0].t;
    assert!(events.len() as f64 <= span * 0.1 + 1.0);
}

#[test]
fn slam_never_prompts_when_maps_never_converge() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig { convergence_threshold: 1e-300, ..small_run(dir.path(), Mode::Slam) }.resolve().unwrap();
    let (log, _) = rbpf_svgp_sim::run_mission(cfg.terrain.as_ref().unwrap(), &cfg.survey).unwrap();
    let run = run_filter(&cfg, &log, cfg.survey.area, None).unwrap();
    assert!(run.coordinator.lc_events.is_empty());
    assert!(run.coordinator.resample_events.is_empty());
}

#[test]
fn replay_of_a_recorded_log_follows_dead_reckoning() {
    let dir = tempfile::tempdir().unwrap();
    let (log, path) = cmd_simulate(RunConfig { out: dir.path().join("sim"), survey: small_survey(4), ..RunConfig::default() }).unwrap();
    let cfg = RunConfig {
        mode: Mode::Replay,
        survey_log: Some(path),
        out: dir.path().join("replay"),
        particles: 2,
        inducing: 25,
        minibatch: 40,
        iterations_per_ping: 2,
        ..RunConfig::default()
    };
    let eval = cmd_run(cfg, None).unwrap();
    assert!(eval.report.resample_events.is_empty());
    assert_eq!(eval.estimate.len(), log.len());
    for (e, d) in eval.estimate.iter().zip(&log.dead_reckoning) {
        for k in 0..2 {
            assert!((e.position[k] - d.position[k]).abs() < 1e-9);
        }
    }
    // Replay keeps the recorded log in place and archives the area it derived.
    let archived = RunConfig::load(&dir.path().join("replay/config.toml")).unwrap();
    assert_eq!(archived.mode, Mode::Replay);
    assert!(!dir.path().join("replay").join(SURVEY_FILE).exists());
    assert_eq!(cmd_eval(&dir.path().join("replay")).unwrap().report, eval.report);
}

#[test]
fn interrupted_run_leaves_a_valid_partial_dump() {
    let dir = tempfile::tempdir().unwrap();
    let stop = Arc::new(AtomicBool::new(false));
    let cfg = RunConfig { iterations_per_ping: 400, ..small_run(dir.path(), Mode::MapOnly) };
    let watcher = {
        let (stop, started) = (stop.clone(), dir.path().join("config.toml"));
        std::thread::spawn(move || {
            while !started.exists() {
                std::thread::sleep(Duration::from_millis(5));
            }
            std::thread::sleep(Duration::from_millis(300));
            stop.store(true, Ordering::SeqCst);
        })
    };
    let eval = cmd_run(cfg, Some(stop)).unwrap();
    watcher.join().unwrap();
    let status: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join(STATUS_FILE)).unwrap()).unwrap();
    assert_eq!(status["complete"], false);
    let processed = status["pings_processed"].as_u64().unwrap();
    assert!(processed > 0 && processed < status["pings_in_log"].as_u64().unwrap(), "{status}");
    assert_eq!(eval.report.particles, 2);
    assert_eq!(cmd_eval(dir.path()).unwrap().report, eval.report);
}
