use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rbpf_svgp::rbpf::Pacing;
use rbpf_svgp::types::{Pose, Rect};
use rbpf_svgp_sim::{
    run_mission, simulate_navigation, simulate_ping, terrain_height, Bump, Error, NoiseOctave,
    SurveyConfig, SurveyLog, TerrainField,
};

fn area() -> Rect<f64> {
    Rect::new([0.0, 0.0], [200.0, 200.0])
}

fn bumpy() -> TerrainField {
    let mut f = TerrainField::flat(area(), -30.0);
    f.gradient = [0.02, -0.01];
    f.bumps = vec![
        Bump { center: [60.0, 70.0], amplitude: 6.0, width: 15.0 },
        Bump { center: [140.0, 120.0], amplitude: -5.0, width: 20.0 },
    ];
    f.noise = vec![NoiseOctave { amplitude: 0.5, wavelength: 25.0 }];
    f.seed = 3;
    f
}

fn quiet(cfg: SurveyConfig) -> SurveyConfig {
    SurveyConfig {
        mbes_noise: 0.0,
        dr_noise: [0.0; 4],
        dr_bias: [0.0; 2],
        ..cfg
    }
}

fn small_survey(seed: u64) -> SurveyConfig {
    SurveyConfig {
        beams_per_ping: 32,
        seed,
        duration_cap: Some(120.0),
        ..SurveyConfig::default()
    }
}

#[test]
fn terrain_examples() {
    let plane = TerrainField::flat(area(), -40.0);
    for p in [[0.0, 0.0], [13.0, 170.5], [200.0, 200.0]] {
        assert_eq!(terrain_height(&plane, p), -40.0);
    }
    let mut bump = plane.clone();
    bump.bumps.push(Bump { center: [50.0, 50.0], amplitude: 5.0, width: 8.0 });
    assert_eq!(terrain_height(&bump, [50.0, 50.0]), -35.0);
    let mut slope = plane.clone();
    slope.gradient = [0.1, 0.0];
    assert!((terrain_height(&slope, [10.0, 0.0]) + 39.0).abs() < 1e-12);
}

#[test]
fn queries_outside_bounds_are_clamped() {
    let mut f = TerrainField::flat(area(), -40.0);
    f.gradient = [0.1, 0.0];
    assert_eq!(f.height([-50.0, 10.0]), f.height([0.0, 10.0]));
    assert_eq!(f.height([250.0, 10.0]), f.height([200.0, 10.0]));
}

#[test]
fn terrain_is_deterministic_per_seed() {
    let a = bumpy();
    let mut b = bumpy();
    assert_eq!(a.height([33.3, 77.7]), b.height([33.3, 77.7]));
    b.seed = 4;
    assert_ne!(a.height([33.3, 77.7]), b.height([33.3, 77.7]));
}

fn single_beam(angle: f64, noise: f64) -> SurveyConfig {
    SurveyConfig {
        beams_per_ping: 1,
        swath_half_angle: angle,
        mbes_noise: noise,
        ..SurveyConfig::default()
    }
}

#[test]
fn nadir_beam_on_flat_floor() {
    let field = TerrainField::flat(area(), -40.0);
    let pose = Pose::new(0.0, [100.0, 100.0, 0.0], 0.3);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let ping = simulate_ping(&field, &pose, &single_beam(0.0, 0.0), &mut rng);
    assert_eq!(ping.beams.len(), 1);
    assert_eq!(ping.beams[0].position, [0.0, 0.0, -40.0]);

    let sigma = 0.05;
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let ping = simulate_ping(&field, &pose, &single_beam(0.0, sigma), &mut rng);
        worst = worst.max((ping.beams[0].position[2] + 40.0).abs());
    }
    assert!(worst > 0.0 && worst < 5.0 * sigma, "worst deviation {worst}");
}

#[test]
fn fan_geometry_on_flat_floor() {
    let field = TerrainField::flat(area(), -40.0);
    let pose = Pose::new(0.0, [100.0, 100.0, 0.0], 1.1);
    let cfg = SurveyConfig {
        beams_per_ping: 9,
        swath_half_angle: 1.0,
        mbes_noise: 0.0,
        ..SurveyConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let ping = simulate_ping(&field, &pose, &cfg, &mut rng);
    assert_eq!(ping.beams.len(), 9);
    for (b, theta) in ping.beams.iter().zip(cfg.beam_angles()) {
        let expected = 40.0 * theta.tan();
        assert!((b.position[1] - expected).abs() < 1e-9, "{theta}: {:?}", b.position);
        assert!(b.position[0].abs() < 1e-12);
        assert_eq!(b.position[2], -40.0);
    }
    assert!(ping.beams[0].position[1] > 0.0, "first beam is to port");
}

#[test]
fn nadir_beam_on_slope() {
    let mut field = TerrainField::flat(area(), -40.0);
    field.gradient = [0.1, 0.0];
    let pose = Pose::new(0.0, [10.0, 0.0, 0.0], 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let ping = simulate_ping(&field, &pose, &single_beam(0.0, 0.0), &mut rng);
    assert!((ping.beams[0].position[2] + 39.0).abs() < 1e-12);

    // Same slope through the general ray marcher: a bump too far away to matter.
    field.bumps.push(Bump { center: [1e4, 1e4], amplitude: 1.0, width: 1.0 });
    field.bounds = Rect::new([-1e5, -1e5], [1e5, 1e5]);
    assert!(!field.is_planar());
    let ping = simulate_ping(&field, &pose, &single_beam(0.0, 0.0), &mut rng);
    assert!((ping.beams[0].position[2] + 39.0).abs() < 1e-3);
}

#[test]
fn beams_beyond_max_range_are_dropped() {
    let field = TerrainField::flat(area(), -40.0);
    let pose = Pose::new(0.0, [100.0, 100.0, 0.0], 0.0);
    let cfg = SurveyConfig {
        beams_per_ping: 11,
        swath_half_angle: 1.4,
        max_range: 60.0,
        mbes_noise: 0.0,
        ..SurveyConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let ping = simulate_ping(&field, &pose, &cfg, &mut rng);
    let expected = cfg
        .beam_angles()
        .iter()
        .filter(|a| 40.0 / a.cos() <= 60.0)
        .count();
    assert!(expected < 11);
    assert_eq!(ping.beams.len(), expected);
}

#[test]
fn noiseless_dead_reckoning_equals_truth() {
    let cfg = quiet(small_survey(5));
    let (log, dr) = run_mission(&bumpy(), &cfg).unwrap();
    let truth = log.truth.as_ref().unwrap();
    assert_eq!(&log.dead_reckoning, truth);
    assert_eq!(dr.len(), 241);
    assert!(!log.is_empty());
}

#[test]
fn noiseless_flat_survey_hits_the_plane() {
    let cfg = quiet(small_survey(5));
    let (log, _) = run_mission(&TerrainField::flat(area(), -40.0), &cfg).unwrap();
    let truth = log.truth.clone().unwrap();
    for p in log.project(&truth) {
        assert_eq!(p[2], -40.0);
    }
}

#[test]
fn noiseless_beams_lie_on_the_surface() {
    let field = bumpy();
    let cfg = quiet(SurveyConfig { duration_cap: None, beams_per_ping: 16, ..small_survey(9) });
    let (log, _) = run_mission(&field, &cfg).unwrap();
    let truth = log.truth.clone().unwrap();
    let pts = log.project(&truth);
    assert!(pts.len() > 10_000);
    for p in pts {
        let h = field.height([p[0], p[1]]);
        assert!((p[2] - h).abs() < 1e-3, "{p:?} vs {h}");
    }
}

#[test]
fn beam_noise_stays_within_three_sigma() {
    let field = bumpy();
    let cfg = SurveyConfig { mbes_noise: 0.1, ..small_survey(2) };
    let (log, _) = run_mission(&field, &cfg).unwrap();
    let truth = log.truth.clone().unwrap();
    let pts = log.project(&truth);
    let inside = pts
        .iter()
        .filter(|p| (p[2] - field.height([p[0], p[1]])).abs() <= 3.0 * 0.1)
        .count();
    assert!(inside as f64 >= 0.99 * pts.len() as f64);
}

#[test]
fn lawnmower_covers_the_area() {
    let cfg = quiet(SurveyConfig { ping_rate: 1.0, ..SurveyConfig::default() });
    let nav = simulate_navigation(&cfg).unwrap();
    let a = cfg.area;
    for p in &nav.truth {
        assert!(a.contains(p.xy()), "{p:?}");
    }
    let ys: Vec<f64> = nav.truth.iter().map(|p| p.position[1]).collect();
    let lo = ys.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert!((lo - 20.0).abs() < 1e-9 && (hi - 180.0).abs() < 1e-9);
    // Consecutive poses are one second apart at 1 m/s.
    for w in nav.truth.windows(2) {
        let d = (w[1].position[0] - w[0].position[0]).hypot(w[1].position[1] - w[0].position[1]);
        assert!(d <= 1.0 + 1e-9 && d > 0.9, "{d}");
    }
}

#[test]
fn tie_line_revisits_every_line() {
    let cfg = quiet(SurveyConfig { ping_rate: 1.0, tie_line: true, ..SurveyConfig::default() });
    let nav = simulate_navigation(&cfg).unwrap();
    let last = nav.truth.last().unwrap();
    assert!((last.position[0] - 100.0).abs() < 1e-9);
    assert!((last.position[1] - 20.0).abs() < 1.0);
}

#[test]
fn survey_files_are_byte_deterministic() {
    let write = |seed| {
        let (log, _) = run_mission(&bumpy(), &small_survey(seed)).unwrap();
        let mut buf = Vec::new();
        log.write(&mut buf).unwrap();
        buf
    };
    let a = write(11);
    assert_eq!(a, write(11));
    assert_ne!(a, write(12));
}

#[test]
fn survey_file_round_trips_bit_exact() {
    let (log, _) = run_mission(&bumpy(), &small_survey(4)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("survey.csv");
    log.save(&path).unwrap();
    let back = rbpf_svgp_sim::ingest_log(&path).unwrap();
    assert_eq!(back, log);
    for (a, b) in back.pings.iter().zip(&log.pings) {
        for (x, y) in a.beams.iter().zip(&b.beams) {
            for k in 0..3 {
                assert_eq!(x.position[k].to_bits(), y.position[k].to_bits());
            }
        }
    }

    let mut field_log = log.clone();
    field_log.truth = None;
    let mut buf = Vec::new();
    field_log.write(&mut buf).unwrap();
    assert_eq!(SurveyLog::read(buf.as_slice()).unwrap(), field_log);
}

#[test]
fn header_only_file_is_empty() {
    let text = "ping_id,t,beam_x,beam_y,beam_z,dr_x,dr_y,dr_z,dr_yaw\n";
    let log = SurveyLog::read(text.as_bytes()).unwrap();
    assert!(log.is_empty() && !log.has_truth());
}

const HEADER: &str = "ping_id,t,beam_x,beam_y,beam_z,dr_x,dr_y,dr_z,dr_yaw\n";

#[test]
fn short_row_names_its_line() {
    let text = format!("{HEADER}0,0.5,1,2,-30,0,0,-10,0\n1,1.0,3\n");
    match SurveyLog::read(text.as_bytes()) {
        Err(Error::Parse { line, message }) => {
            assert_eq!(line, 3);
            assert!(message.contains("3"), "{message}");
        }
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn non_monotone_timestamps_are_rejected() {
    let text = format!("{HEADER}0,1.0,1,2,-30,0,0,-10,0\n1,0.5,1,2,-30,0,0,-10,0\n");
    assert!(matches!(
        SurveyLog::read(text.as_bytes()),
        Err(Error::Parse { line: 3, .. })
    ));
}

#[test]
fn bad_number_and_header_are_rejected() {
    let text = format!("{HEADER}0,abc,1,2,-30,0,0,-10,0\n");
    assert!(matches!(SurveyLog::read(text.as_bytes()), Err(Error::Parse { line: 2, .. })));
    assert!(matches!(
        SurveyLog::read("a,b,c\n".as_bytes()),
        Err(Error::Parse { line: 1, .. })
    ));
}

#[test]
fn dead_reckoning_drift_grows_with_time() {
    let checkpoints = [600.0, 1200.0, 1800.0, 2400.0, 3000.0, 3600.0];
    let mut mean = [0.0; 6];
    for seed in 0..10 {
        let cfg = SurveyConfig {
            area: Rect::new([0.0, 0.0], [600.0, 600.0]),
            line_spacing: 100.0,
            ping_rate: 1.0,
            seed,
            duration_cap: Some(3600.0),
            ..SurveyConfig::default()
        };
        let nav = simulate_navigation(&cfg).unwrap();
        assert!(nav.truth.last().unwrap().t >= 3600.0 - 1e-9);
        for (k, &t) in checkpoints.iter().enumerate() {
            let i = t as usize;
            let (g, d) = (&nav.truth[i], &nav.dead_reckoning[i]);
            let e = (g.position[0] - d.position[0]).hypot(g.position[1] - d.position[1]);
            mean[k] += e / 10.0;
        }
    }
    assert!(mean[0] > 0.0);
    for w in mean.windows(2) {
        assert!(w[1] > w[0], "{mean:?}");
    }
}

#[test]
fn wall_clock_replay_is_paced() {
    let (log, _) = run_mission(&bumpy(), &SurveyConfig { duration_cap: Some(2.0), ..small_survey(1) }).unwrap();
    assert_eq!(log.len(), 5);
    let start = std::time::Instant::now();
    let n = log.replay(Pacing::WallClock { speedup: 20.0 }).count();
    assert_eq!(n, 5);
    assert!(start.elapsed().as_secs_f64() >= 2.0 / 20.0);
    let fast: Vec<_> = log.replay(Pacing::MaxThroughput).map(|e| e.ping_id).collect();
    assert_eq!(fast, vec![0, 1, 2, 3, 4]);
}

#[test]
fn config_validation() {
    assert!(SurveyConfig::default().validate().is_ok());
    for bad in [
        SurveyConfig { speed: 0.0, ..SurveyConfig::default() },
        SurveyConfig { ping_rate: -1.0, ..SurveyConfig::default() },
        SurveyConfig { swath_half_angle: 1.6, ..SurveyConfig::default() },
        SurveyConfig { beams_per_ping: 0, ..SurveyConfig::default() },
    ] {
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
    }
}
