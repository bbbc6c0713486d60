#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rbpf_svgp::svgp::{InducingSet, KernelParams, SvgpModel};
use rbpf_svgp::types::TrainingPoint;

/// Random model with perturbed q(u) and a random batch around it.
pub fn random_problem(seed: u64, s: usize, m: usize) -> (SvgpModel<f64>, Vec<TrainingPoint<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kernel = KernelParams::new(
        rng.random_range(0.5..3.0),
        rng.random_range(2.0..6.0),
        rng.random_range(0.05..0.5),
    );
    let points = (0..s)
        .map(|_| [rng.random_range(0.0..10.0), rng.random_range(0.0..10.0)])
        .collect();
    let mut model = SvgpModel::new(kernel, InducingSet { points }, 0.0).unwrap();
    for v in &mut model.variational.mean {
        *v = rng.random_range(-1.0..1.0);
    }
    for i in 0..s {
        for j in 0..i {
            model.variational.chol[(i, j)] = rng.random_range(-0.3..0.3);
        }
        model.variational.chol[(i, i)] = rng.random_range(0.3..1.2);
    }
    let batch = (0..m)
        .map(|_| {
            let x: [f64; 2] = [rng.random_range(-1.0..11.0), rng.random_range(-1.0..11.0)];
            TrainingPoint {
                x,
                y: (x[0] * 0.3).sin() + 0.1 * x[1] + rng.random_range(-0.2..0.2),
            }
        })
        .collect();
    (model, batch)
}

/// Independent dense reference for a smooth test surface.
pub fn surface(x: [f64; 2]) -> f64 {
    2.0 * (x[0] / 15.0).sin() * (x[1] / 20.0).cos() + 0.02 * x[0]
}

/// Dense inverse and log-determinant by Gauss-Jordan elimination with
/// partial pivoting. Deliberately unrelated to the Cholesky code under test.
pub fn gauss_jordan(a: &[Vec<f64>]) -> (Vec<Vec<f64>>, f64) {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut inv: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let mut logdet = 0.0;
    for c in 0..n {
        let p = (c..n)
            .max_by(|&i, &j| m[i][c].abs().partial_cmp(&m[j][c].abs()).unwrap())
            .unwrap();
        m.swap(c, p);
        inv.swap(c, p);
        let piv = m[c][c];
        logdet += piv.abs().ln();
        for j in 0..n {
            m[c][j] /= piv;
            inv[c][j] /= piv;
        }
        for r in 0..n {
            if r != c {
                let f = m[r][c];
                if f != 0.0 {
                    for j in 0..n {
                        m[r][j] -= f * m[c][j];
                        inv[r][j] -= f * inv[c][j];
                    }
                }
            }
        }
    }
    (inv, logdet)
}

pub fn matern(a: [f64; 2], b: [f64; 2], var: f64, len: f64) -> f64 {
    var * (-((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt() / len).exp()
}
