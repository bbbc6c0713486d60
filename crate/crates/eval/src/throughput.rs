use serde::{Deserialize, Serialize};

/// SVGP iteration accounting for one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    pub per_particle: Vec<u64>,
    pub mean: f64,
    pub min: u64,
    pub max: u64,
}

impl IterationStats {
    pub fn new(per_particle: &[u64]) -> Self {
        let n = per_particle.len().max(1) as f64;
        Self {
            per_particle: per_particle.to_vec(),
            mean: per_particle.iter().sum::<u64>() as f64 / n,
            min: per_particle.iter().copied().min().unwrap_or(0),
            max: per_particle.iter().copied().max().unwrap_or(0),
        }
    }
}

/// Wall-clock iteration rates; host dependent, so kept apart from the
/// deterministic run report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThroughputReport {
    pub particles: usize,
    pub groups: usize,
    pub iterations: IterationStats,
    pub wall_seconds: f64,
    /// Total SVGP iterations per second across all groups.
    pub iterations_per_second: f64,
    /// Iterations per second each group achieved while busy.
    pub group_rates: Vec<f64>,
}

/// `groups` holds `(iterations, busy seconds)` per trainer group.
pub fn throughput_report(per_particle: &[u64], groups: &[(u64, f64)], wall_seconds: f64) -> ThroughputReport {
    let iterations = IterationStats::new(per_particle);
    let total: u64 = per_particle.iter().sum();
    let rate = |n: u64, s: f64| if s > 0.0 { n as f64 / s } else { 0.0 };
    ThroughputReport {
        particles: per_particle.len(),
        groups: groups.len(),
        iterations,
        wall_seconds,
        iterations_per_second: rate(total, wall_seconds),
        group_rates: groups.iter().map(|&(n, s)| rate(n, s)).collect(),
    }
}
