use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rbpf_svgp::rbpf::{Coordinator, FilterConfig, Pacing, ResampleEvent, SessionConfig, TrainingConfig};
use rbpf_svgp::svgp::{posterior, InducingSet, KernelParams, SvgpModel, Trainable};
use rbpf_svgp::types::{Beam, Ping, Pose, Rect};
use rbpf_svgp_eval::{
    consistency_error, evaluate_run, export_map_grid, throughput_report, trajectory_error, Error, GridMap,
    ParticleOutcome, ReferenceGrid, RunInputs,
};

fn prior_model(offset: f64) -> SvgpModel<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let area = Rect::new([0.0, 0.0], [50.0, 40.0]);
    let z = InducingSet::init_uniform(&area, 25, &mut rng).unwrap();
    SvgpModel::new(KernelParams::new(2.0, 8.0, 0.1), z, offset).unwrap()
}

/// A model with a non-trivial posterior: random variational mean and factor.
fn shaped_model(seed: u64) -> SvgpModel<f64> {
    let mut m = prior_model(-30.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in &mut m.variational.mean {
        *v = rng.random_range(-3.0..3.0);
    }
    m
}

fn beams(n: usize, seed: u64, depth: impl Fn(f64, f64) -> f64) -> Vec<[f64; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let x = rng.random_range(0.0..50.0);
            let y = rng.random_range(0.0..40.0);
            [x, y, depth(x, y)]
        })
        .collect()
}

#[test]
fn perfect_flat_map_has_zero_error() {
    let model = prior_model(-40.0);
    let (grid, rmse) = consistency_error(&beams(5000, 2, |_, _| -40.0), &model, 1.0).unwrap();
    assert!(rmse < 1e-6);
    assert!(grid.valid_count() > 1500);
}

#[test]
fn prior_map_error_is_the_constant_offset() {
    let model = prior_model(0.0);
    for d in [-3.5, 2.0] {
        let (_, rmse) = consistency_error(&beams(3000, 3, |_, _| d), &model, 2.0).unwrap();
        assert!((rmse - d.abs()).abs() < 1e-12, "{rmse} vs {d}");
    }
}

/// Independent oracle: hash-map binning and one posterior call per cell.
#[test]
fn consistency_matches_naive_binning() {
    let model = shaped_model(4);
    let refs = beams(4000, 5, |x, y| -30.0 + 0.05 * x - 0.02 * y + (x / 7.0).sin());
    let cell = 2.5;
    let (x0, y0) = refs.iter().fold((f64::INFINITY, f64::INFINITY), |(a, b), p| (a.min(p[0]), b.min(p[1])));
    let (x1, y1) = refs.iter().fold((f64::NEG_INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.max(p[0]), b.max(p[1])));
    let nx = ((x1 - x0) / cell).ceil() as i64;
    let ny = ((y1 - y0) / cell).ceil() as i64;
    let mut bins: BTreeMap<(i64, i64), (f64, usize)> = BTreeMap::new();
    for p in &refs {
        let cx = (((p[0] - x0) / cell).floor() as i64).min(nx - 1);
        let cy = (((p[1] - y0) / cell).floor() as i64).min(ny - 1);
        let e = bins.entry((cx, cy)).or_insert((0.0, 0));
        e.0 += p[2];
        e.1 += 1;
    }
    let mut sq = 0.0;
    for (&(cx, cy), &(sum, n)) in &bins {
        let c = [x0 + (cx as f64 + 0.5) * cell, y0 + (cy as f64 + 0.5) * cell];
        let m = posterior(&model, &[c]).unwrap().mean[0] + model.depth_offset;
        sq += (sum / n as f64 - m).powi(2);
    }
    let oracle = (sq / bins.len() as f64).sqrt();
    let (grid, rmse) = consistency_error(&refs, &model, cell).unwrap();
    assert_eq!(grid.valid_count(), bins.len());
    assert!((rmse - oracle).abs() < 1e-9 * oracle.max(1.0), "{rmse} vs {oracle}");
}

#[test]
fn consistency_is_permutation_invariant() {
    let model = shaped_model(6);
    let mut refs = beams(3000, 7, |x, y| -30.0 + (x * y / 300.0).cos());
    let (g0, r0) = consistency_error(&refs, &model, 1.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..5 {
        refs.shuffle(&mut rng);
        let (g, r) = consistency_error(&refs, &model, 1.5).unwrap();
        assert_eq!(r.to_bits(), r0.to_bits());
        assert_eq!(g, g0);
    }
}

#[test]
fn consistency_errors() {
    let model = prior_model(0.0);
    assert!(matches!(consistency_error(&[], &model, 1.0), Err(Error::InvalidInput(_))));
    assert!(matches!(consistency_error(&[[0.0, 0.0, -1.0]], &model, 0.0), Err(Error::InvalidInput(_))));
    let far = Rect::new([1000.0, 1000.0], [1010.0, 1010.0]);
    assert!(matches!(ReferenceGrid::within(&[[0.0, 0.0, -1.0]], &far, 1.0), Err(Error::NoValidCells)));
}

fn line(n: usize, dt: f64, offset: [f64; 2]) -> Vec<Pose<f64>> {
    (0..n)
        .map(|k| {
            let t = k as f64 * dt;
            Pose::new(t, [t + offset[0], 0.5 * t + offset[1], -5.0], 0.3)
        })
        .collect()
}

#[test]
fn trajectory_error_examples() {
    let truth = line(100, 1.0, [0.0, 0.0]);
    let same = trajectory_error(&truth, &truth).unwrap();
    assert!(same.curve.iter().all(|&(_, e)| e == 0.0));
    assert_eq!(same.rmse, 0.0);
    let off = trajectory_error(&line(100, 1.0, [3.0, 0.0]), &truth).unwrap();
    assert!((off.rmse - 3.0).abs() < 1e-12 && (off.terminal - 3.0).abs() < 1e-12);

    let late: Vec<Pose<f64>> = truth.iter().map(|p| Pose { t: p.t + 1000.0, ..*p }).collect();
    assert!(matches!(trajectory_error(&late, &truth), Err(Error::DisjointTimes { .. })));
    assert!(matches!(trajectory_error(&truth, &[]), Err(Error::DisjointTimes { .. })));
}

#[test]
fn trajectory_error_holds_truth_between_samples() {
    let truth = line(11, 1.0, [0.0, 0.0]);
    let est: Vec<Pose<f64>> = (0..20)
        .map(|k| {
            let t = 0.5 * k as f64;
            Pose::new(t, [t, 0.5 * t, -5.0], 0.0)
        })
        .collect();
    let r = trajectory_error(&est, &truth).unwrap();
    assert_eq!(r.curve.len(), 20);
    for &(t, e) in &r.curve {
        let held = t.floor();
        let oracle = ((t - held).powi(2) + (0.5 * (t - held)).powi(2)).sqrt();
        assert!((e - oracle).abs() < 1e-12, "t={t}: {e} vs {oracle}");
    }
}

#[test]
fn trajectory_error_is_zero_iff_equal() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let truth = line(50, 1.0, [0.0, 0.0]);
    for _ in 0..100 {
        let mut est = truth.clone();
        let k = rng.random_range(0..est.len());
        est[k].position[rng.random_range(0..2)] += rng.random_range(1e-9..1.0);
        // Depth and heading do not count.
        est[(k + 1) % 50].position[2] += 7.0;
        est[(k + 2) % 50].heading += 1.0;
        assert!(trajectory_error(&est, &truth).unwrap().rmse > 0.0);
    }
    let mut est = truth.clone();
    est[3].position[2] -= 1.0;
    assert_eq!(trajectory_error(&est, &truth).unwrap().rmse, 0.0);
}

#[test]
fn export_of_prior_reverts_to_prior() {
    let model = prior_model(0.0);
    let area = Rect::new([-500.0, -500.0], [-400.0, -400.0]);
    let ex = export_map_grid(&model, &area, 10.0).unwrap();
    assert_eq!(ex.mean.valid_count(), 100);
    for (_, _, m) in ex.mean.valid_cells() {
        assert!(m.abs() < 1e-12);
    }
    for (_, _, v) in ex.variance.valid_cells() {
        assert!((v - 2.0).abs() < 1e-6);
    }
    assert_eq!(ex.inducing, model.inducing.points);
}

#[test]
fn export_matches_pointwise_posterior() {
    let model = shaped_model(10);
    let ex = export_map_grid(&model, &Rect::new([0.0, 0.0], [50.0, 40.0]), 0.5).unwrap();
    assert!(ex.mean.valid_count() > 2048, "spans several query batches");
    for (c, r, m) in ex.mean.valid_cells().step_by(97) {
        let p = posterior(&model, &[ex.mean.center(c, r)]).unwrap();
        assert!((m - (p.mean[0] + model.depth_offset)).abs() <= 1e-12 * m.abs());
        assert!((ex.variance.get(c, r).unwrap() - p.variance[0]).abs() <= 1e-12);
    }

    let one = export_map_grid(&model, &Rect::new([10.0, 10.0], [12.0, 12.0]), 2.0).unwrap();
    assert_eq!(one.mean.valid_count(), 1);
    let p = posterior(&model, &[[11.0, 11.0]]).unwrap();
    assert_eq!(one.mean.get(0, 0).unwrap(), p.mean[0] + model.depth_offset);
    assert_eq!(one.variance.get(0, 0).unwrap(), p.variance[0]);
}

#[test]
fn grid_ascii_round_trip() {
    let mut g = GridMap::new([-3.5, 10.0], 0.25, 7, 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for r in 0..4 {
        for c in 0..7 {
            if (r + c) % 3 != 0 {
                g.set(c, r, rng.random_range(-50.0..0.0));
            }
        }
    }
    let mut buf = Vec::new();
    g.write_ascii(&mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("ncols 7\nnrows 4\nxllcorner -3.5\nyllcorner 10\ncellsize 0.25\nnodata_value -9999\n"));
    assert_eq!(GridMap::read_ascii(buf.as_slice()).unwrap(), g);

    let bad = "ncols 2\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\nnodata_value -9999\n1 2 3\n";
    assert_eq!(GridMap::read_ascii(bad.as_bytes()).unwrap_err().0, 7);
}

#[test]
fn grid_cell_lookup() {
    let g = GridMap::covering(&Rect::new([0.0, 0.0], [10.0, 5.0]), 1.0).unwrap();
    assert_eq!((g.ncols, g.nrows), (10, 5));
    assert_eq!(g.cell_of([0.0, 0.0]), Some((0, 0)));
    assert_eq!(g.cell_of([10.0, 5.0]), Some((9, 4)));
    assert_eq!(g.cell_of([3.99, 2.01]), Some((3, 2)));
    assert_eq!(g.cell_of([10.01, 1.0]), None);
    assert_eq!(g.cell_of([-0.01, 1.0]), None);
    assert_eq!(g.center(3, 2), [3.5, 2.5]);
}

#[test]
fn throughput_counts() {
    let single = throughput_report(&[1000], &[(1000, 2.0)], 2.5);
    assert_eq!(single.iterations.mean, 1000.0);
    assert_eq!(single.group_rates, vec![500.0]);
    assert_eq!(single.iterations_per_second, 400.0);
}

fn slope(p: [f64; 2]) -> f64 {
    -20.0 + 0.1 * p[0] - 0.05 * p[1]
}

fn session(j: usize, b: usize) -> SessionConfig<f64> {
    SessionConfig {
        particles: j,
        inducing: 16,
        area: Rect::new([-5.0, -30.0], [60.0, 30.0]),
        lc_rate: None,
        convergence_window: 20,
        convergence_threshold: 1e-3,
        trainable: Trainable::ALL,
        initial_kernel: None,
        seed: 5,
        shared_particle_streams: false,
        filter: FilterConfig::default(),
        training: TrainingConfig {
            minibatch: 20,
            learning_rate: 0.1,
            groups: b,
            iterations_per_ping: 7,
            final_iterations: 0,
            pacing: Pacing::MaxThroughput,
        },
    }
}

fn run(j: usize, b: usize, pings: usize) -> Coordinator<f64> {
    let mut coord = Coordinator::new(session(j, b)).unwrap();
    for k in 0..pings {
        let t = k as f64 * 0.5;
        let pose = Pose::new(t, [t, 0.0, -1.0], 0.0);
        let beams = (-8..=8)
            .map(|i| {
                let y = i as f64 * 2.0;
                Beam::new(0.0, y, slope([t, y]) + 1.0)
            })
            .collect();
        coord.process(&Ping { t, beams }, pose).unwrap();
    }
    coord
}

#[test]
fn iteration_accounting_from_a_run() {
    let coord = run(1, 1, 50);
    let set = coord.particles().unwrap();
    let iters: Vec<u64> = set.particles.iter().map(|p| p.iterations).collect();
    assert_eq!(iters, vec![350]);

    let coord = run(4, 1, 50);
    let set = coord.particles().unwrap();
    let iters: Vec<u64> = set.particles.iter().map(|p| p.iterations).collect();
    let rep = throughput_report(&iters, &[(coord.group_stats()[0].iterations, 1.0)], 1.0);
    assert_eq!(iters.iter().sum::<u64>(), 350);
    assert!(rep.iterations.max - rep.iterations.min <= 1, "{iters:?}");
}

#[test]
fn run_evaluation_is_recomputable_and_deterministic() {
    let coord = run(2, 2, 40);
    let set = coord.particles().unwrap();
    let trajectories: Vec<Vec<Pose<f64>>> = set.particles.iter().map(|p| p.history.to_vec()).collect();
    let truth: Vec<Pose<f64>> = coord.nav_trajectory.clone();
    let refs: Vec<[f64; 3]> = (0..2000)
        .map(|k| {
            let p = [(k % 40) as f64 * 0.5, (k / 40) as f64 * 0.6 - 15.0];
            [p[0], p[1], slope(p)]
        })
        .collect();
    let events = vec![ResampleEvent {
        t: 5.0,
        ess: 1.1,
        offspring: vec![2, 0],
        mean_before: [5.0, 1.0],
        mean_after: [5.0, 0.5],
    }];
    let inputs = RunInputs {
        reference: &refs,
        cell_size: 1.0,
        particles: set
            .particles
            .iter()
            .zip(&trajectories)
            .map(|(p, t)| ParticleOutcome { map: &p.map, trajectory: t, weight: p.weight(), iterations: p.iterations })
            .collect(),
        dead_reckoning: &truth,
        truth: Some(&truth),
        resample_events: &events,
    };
    let a = evaluate_run(&inputs).unwrap();
    let b = evaluate_run(&inputs).unwrap();
    assert_eq!(a.report, b.report);
    let traj = a.report.trajectory.as_ref().unwrap();
    assert!(traj.dead_reckoning_rmse == 0.0 && traj.estimate_rmse < 1e-9);
    let ev = &a.report.resample_events[0];
    assert!((ev.error_before.unwrap() - 1.0).abs() < 1e-12);
    assert!((ev.error_after.unwrap() - 0.5).abs() < 1e-12);
    let mean_rmse = a.report.map_rmse_per_particle.iter().sum::<f64>() / 2.0;
    assert_eq!(a.report.map_rmse, mean_rmse);

    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    let files = a.write(d1.path()).unwrap();
    b.write(d2.path()).unwrap();
    for f in &files {
        let name = f.file_name().unwrap();
        let x = std::fs::read(f).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, std::fs::read(d2.path().join(name)).unwrap(), "{name:?}");
    }
    let grid = GridMap::load(&d1.path().join("consistency_error.asc")).unwrap();
    assert_eq!(grid, a.error_grid);
}
