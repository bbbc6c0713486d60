use rbpf_svgp::types::Pose;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Horizontal error of an estimate against the truth held at its timestamps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryError {
    /// `(t, error)` for every estimate timestamp inside the truth's time range.
    pub curve: Vec<(f64, f64)>,
    pub rmse: f64,
    pub terminal: f64,
}

/// Latest pose with `t <= t_q` (zero-order hold).
pub fn hold(poses: &[Pose<f64>], t_q: f64) -> Option<&Pose<f64>> {
    let k = poses.partition_point(|p| p.t <= t_q);
    k.checked_sub(1).map(|i| &poses[i])
}

pub fn trajectory_error(estimate: &[Pose<f64>], truth: &[Pose<f64>]) -> Result<TrajectoryError> {
    let span = |p: &[Pose<f64>]| (p.first().map_or(f64::NAN, |a| a.t), p.last().map_or(f64::NAN, |a| a.t));
    let disjoint = || Error::DisjointTimes {
        estimate: span(estimate),
        truth: span(truth),
    };
    if truth.windows(2).any(|w| !(w[1].t > w[0].t)) || estimate.windows(2).any(|w| !(w[1].t > w[0].t)) {
        return Err(Error::InvalidInput("trajectory timestamps must strictly increase".into()));
    }
    let (Some(first), Some(last)) = (truth.first(), truth.last()) else {
        return Err(disjoint());
    };
    let curve: Vec<(f64, f64)> = estimate
        .iter()
        .filter(|e| e.t >= first.t && e.t <= last.t)
        .map(|e| {
            let g = hold(truth, e.t).expect("inside truth range");
            let d = (e.position[0] - g.position[0]).hypot(e.position[1] - g.position[1]);
            (e.t, d)
        })
        .collect();
    let Some(&(_, terminal)) = curve.last() else {
        return Err(disjoint());
    };
    let rmse = (curve.iter().map(|(_, e)| e * e).sum::<f64>() / curve.len() as f64).sqrt();
    Ok(TrajectoryError { curve, rmse, terminal })
}
