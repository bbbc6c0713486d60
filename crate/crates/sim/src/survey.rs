//! Mission execution: lawnmower path, multibeam ray casting and
//! dead-reckoning drift.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rbpf_svgp::types::{Beam, Ping, Pose, Rect};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::survey_log::SurveyLog;
use crate::terrain::TerrainField;

/// Ray/terrain intersection tolerance on height (m).
pub const RAY_TOLERANCE: f64 = 1e-4;
pub const RAY_MAX_BISECTIONS: usize = 64;
const RAY_MARCH_STEP: f64 = 0.5;

const STREAM_MBES: u64 = 1;
const STREAM_DR: u64 = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurveyConfig {
    pub area: Rect<f64>,
    /// Distance between adjacent survey lines (m).
    pub line_spacing: f64,
    /// Vehicle speed over ground (m/s).
    pub speed: f64,
    /// Pings per second.
    pub ping_rate: f64,
    pub beams_per_ping: usize,
    /// Half of the fan opening (rad).
    pub swath_half_angle: f64,
    /// Beams without a hit within this slant range are dropped (m).
    pub max_range: f64,
    /// Constant vehicle depth (m, negative below the surface).
    pub vehicle_depth: f64,
    /// Standard deviation of the vertical beam noise (m).
    pub mbes_noise: f64,
    /// Dead-reckoning noise variance per second for x, y, z (m²/s) and yaw (rad²/s).
    pub dr_noise: [f64; 4],
    /// Unmodelled horizontal velocity (a current) that dead reckoning misses (m/s).
    pub dr_bias: [f64; 2],
    /// Append a straight line back across all survey lines.
    pub tie_line: bool,
    pub seed: u64,
    /// Mission length limit (s).
    pub duration_cap: Option<f64>,
}

impl Default for SurveyConfig {
    fn default() -> Self {
        Self {
            area: Rect::new([0.0, 0.0], [200.0, 200.0]),
            line_spacing: 40.0,
            speed: 1.0,
            ping_rate: 2.0,
            beams_per_ping: 128,
            swath_half_angle: 60f64.to_radians(),
            max_range: 200.0,
            vehicle_depth: -10.0,
            mbes_noise: 0.05,
            dr_noise: [1e-3, 1e-3, 0.0, 1e-7],
            dr_bias: [0.01, 0.005],
            tie_line: false,
            seed: 0,
            duration_cap: None,
        }
    }
}

impl SurveyConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !self.area.is_proper() {
            return bad("survey area must have positive extent");
        }
        if !(self.line_spacing > 0.0 && self.line_spacing.is_finite()) {
            return bad("line spacing must be positive");
        }
        if !(self.speed > 0.0 && self.speed.is_finite()) {
            return bad("speed must be positive");
        }
        if !(self.ping_rate > 0.0 && self.ping_rate.is_finite()) {
            return bad("ping rate must be positive");
        }
        if self.beams_per_ping == 0 {
            return bad("beams per ping must be >= 1");
        }
        if !(self.swath_half_angle >= 0.0 && self.swath_half_angle < FRAC_PI_2) {
            return bad("swath half-angle must lie in [0, pi/2)");
        }
        if !(self.max_range > 0.0) {
            return bad("max range must be positive");
        }
        if !(self.mbes_noise >= 0.0) || !self.dr_noise.iter().all(|v| *v >= 0.0 && v.is_finite()) {
            return bad("noise levels must be non-negative");
        }
        if !self.dr_bias.iter().all(|b| b.is_finite()) || !self.vehicle_depth.is_finite() {
            return bad("bias and vehicle depth must be finite");
        }
        if let Some(cap) = self.duration_cap {
            if !(cap > 0.0) {
                return bad("duration cap must be positive");
            }
        }
        Ok(())
    }

    /// Fan angle of every beam, port (+) to starboard (-).
    pub fn beam_angles(&self) -> Vec<f64> {
        let n = self.beams_per_ping;
        if n == 1 {
            return vec![0.0];
        }
        let a = self.swath_half_angle;
        (0..n)
            .map(|i| a - 2.0 * a * i as f64 / (n - 1) as f64)
            .collect()
    }

    pub fn is_noiseless_dr(&self) -> bool {
        self.dr_noise.iter().all(|v| *v == 0.0) && self.dr_bias.iter().all(|b| *b == 0.0)
    }
}

/// Vehicle-frame offset of the seabed hit along a unit direction, or `None`
/// when nothing is hit within `max_range`.
fn cast(field: &TerrainField, pose: &Pose<f64>, dir: [f64; 3], max_range: f64) -> Option<[f64; 3]> {
    let (s, c) = pose.heading.sin_cos();
    let d = [c * dir[0] - s * dir[1], s * dir[0] + c * dir[1], dir[2]];
    let o = pose.position;
    if field.is_planar() {
        let g = field.gradient;
        let above = o[2] - (field.depth_offset + g[0] * o[0] + g[1] * o[1]);
        let closing = g[0] * d[0] + g[1] * d[1] - d[2];
        if above < 0.0 || !(closing > 0.0) {
            return None;
        }
        let r = above / closing;
        if r > max_range {
            return None;
        }
        // Depth from the plane itself so the hit lies exactly on it.
        let (hx, hy) = (o[0] + r * d[0], o[1] + r * d[1]);
        let z = field.depth_offset + g[0] * hx + g[1] * hy - o[2];
        return Some([r * dir[0], r * dir[1], z]);
    }
    let hit = |r: f64| [r * dir[0], r * dir[1], r * dir[2]];
    let gap = |r: f64| o[2] + r * d[2] - field.height([o[0] + r * d[0], o[1] + r * d[1]]);
    let mut lo = 0.0;
    if gap(lo) < 0.0 {
        return None;
    }
    let mut hi = lo;
    loop {
        let next = (hi + RAY_MARCH_STEP).min(max_range);
        if gap(next) <= 0.0 {
            hi = next;
            break;
        }
        if next >= max_range {
            return None;
        }
        lo = next;
        hi = next;
    }
    for _ in 0..RAY_MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        let g = gap(mid);
        if g.abs() < RAY_TOLERANCE {
            return Some(hit(mid));
        }
        if g > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(hit(0.5 * (lo + hi)))
}

/// Casts the fan from `pose` and returns the beams in the vehicle frame,
/// ordered port to starboard. Beams that miss are dropped.
pub fn simulate_ping<R: Rng + ?Sized>(
    field: &TerrainField,
    pose: &Pose<f64>,
    cfg: &SurveyConfig,
    rng: &mut R,
) -> Ping<f64> {
    let beams = cfg
        .beam_angles()
        .into_iter()
        .filter_map(|theta| {
            let dir = [0.0, theta.sin(), -theta.cos()];
            let [bx, by, bz] = cast(field, pose, dir, cfg.max_range)?;
            let noise = if cfg.mbes_noise > 0.0 {
                let n: f64 = StandardNormal.sample(rng);
                cfg.mbes_noise * n
            } else {
                0.0
            };
            Some(Beam::new(bx, by, bz + noise))
        })
        .collect();
    Ping { t: pose.t, beams }
}

#[derive(Clone, Copy, Debug)]
enum Leg {
    Straight { from: [f64; 2], heading: f64, length: f64 },
    /// Constant-rate turn; `sign` is +1 for counter-clockwise.
    Arc { center: [f64; 2], radius: f64, start: f64, sign: f64, sweep: f64 },
}

impl Leg {
    fn length(&self) -> f64 {
        match *self {
            Leg::Straight { length, .. } => length,
            Leg::Arc { radius, sweep, .. } => radius * sweep,
        }
    }

    /// Position and heading after `s` metres along the leg.
    fn at(&self, s: f64) -> ([f64; 2], f64) {
        match *self {
            Leg::Straight { from, heading, .. } => {
                let (sn, cs) = heading.sin_cos();
                ([from[0] + s * cs, from[1] + s * sn], heading)
            }
            Leg::Arc { center, radius, start, sign, .. } => {
                let a = start + sign * s / radius;
                let p = [center[0] + radius * a.cos(), center[1] + radius * a.sin()];
                (p, a + sign * FRAC_PI_2)
            }
        }
    }
}

/// Boustrophedon coverage path: lines parallel to x, joined by semicircles
/// of diameter `line_spacing`, all inside the area.
#[derive(Clone, Debug)]
pub struct LawnmowerPath {
    legs: Vec<Leg>,
    total: f64,
}

impl LawnmowerPath {
    pub fn new(cfg: &SurveyConfig) -> Self {
        let a = cfg.area;
        let r = 0.5 * cfg.line_spacing;
        let lines = ((a.height() / cfg.line_spacing).floor() as usize).max(1);
        let (x0, x1) = if a.width() > 2.0 * r {
            (a.min[0] + r, a.max[0] - r)
        } else {
            (a.min[0], a.max[0])
        };
        let y0 = a.min[1] + 0.5 * (a.height() - (lines - 1) as f64 * cfg.line_spacing);
        let mut legs = Vec::new();
        for k in 0..lines {
            let y = y0 + k as f64 * cfg.line_spacing;
            let eastward = k % 2 == 0;
            let (from, heading) = if eastward { ([x0, y], 0.0) } else { ([x1, y], PI) };
            legs.push(Leg::Straight { from, heading, length: x1 - x0 });
            if k + 1 < lines {
                let (cx, start, sign) = if eastward { (x1, -FRAC_PI_2, 1.0) } else { (x0, -FRAC_PI_2, -1.0) };
                legs.push(Leg::Arc {
                    center: [cx, y + r],
                    radius: r,
                    start,
                    sign,
                    sweep: PI,
                });
            }
        }
        if cfg.tie_line && lines > 1 {
            let end_east = (lines - 1) % 2 == 0;
            let x = 0.5 * (x0 + x1);
            let y_last = y0 + (lines - 1) as f64 * cfg.line_spacing;
            // Finish on the last line at mid-span, then run south across every line.
            if let Some(Leg::Straight { length, .. }) = legs.last_mut() {
                *length = if end_east { x - x0 } else { x1 - x };
            }
            legs.push(Leg::Straight {
                from: [x, y_last],
                heading: -FRAC_PI_2,
                length: y_last - y0,
            });
        }
        let total = legs.iter().map(Leg::length).sum();
        Self { legs, total }
    }

    pub fn length(&self) -> f64 {
        self.total
    }

    /// Position and heading after `s` metres along the path (clamped to its end).
    pub fn at(&self, mut s: f64) -> ([f64; 2], f64) {
        for leg in &self.legs {
            let len = leg.length();
            if s <= len {
                return leg.at(s);
            }
            s -= len;
        }
        let last = self.legs.last().expect("path has a leg");
        last.at(last.length())
    }
}

/// Ground-truth and dead-reckoned poses sampled at the ping times.
#[derive(Clone, Debug, PartialEq)]
pub struct Navigation {
    pub truth: Vec<Pose<f64>>,
    pub dead_reckoning: Vec<Pose<f64>>,
}

/// Flies the lawnmower path and integrates dead reckoning alongside it.
///
/// Dead reckoning is the true motion seen through a drifting heading
/// estimate, with white velocity noise and an unmodelled current added. It
/// is propagated as an error state on top of the truth, so with zero noise
/// and bias it reproduces the truth exactly.
pub fn simulate_navigation(cfg: &SurveyConfig) -> Result<Navigation> {
    cfg.validate()?;
    let path = LawnmowerPath::new(cfg);
    let mut duration = path.length() / cfg.speed;
    if let Some(cap) = cfg.duration_cap {
        duration = duration.min(cap);
    }
    let dt = 1.0 / cfg.ping_rate;
    let steps = (duration * cfg.ping_rate).floor() as usize + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(STREAM_DR);
    let noiseless = cfg.is_noiseless_dr();
    let sd: Vec<f64> = cfg.dr_noise.iter().map(|v| (v * dt).sqrt()).collect();

    let mut truth = Vec::with_capacity(steps);
    let mut dr = Vec::with_capacity(steps);
    let mut err = [0.0f64; 4];
    let mut prev_xy: Option<[f64; 2]> = None;
    for k in 0..steps {
        let t = k as f64 * dt;
        let (xy, heading) = path.at(cfg.speed * t);
        if let (Some(p), false) = (prev_xy, noiseless) {
            let v = [xy[0] - p[0], xy[1] - p[1]];
            let (s, c) = err[3].sin_cos();
            let mut draw = |i: usize| -> f64 {
                if sd[i] > 0.0 {
                    let n: f64 = StandardNormal.sample(&mut rng);
                    sd[i] * n
                } else {
                    0.0
                }
            };
            let (nx, ny, nz, nyaw) = (draw(0), draw(1), draw(2), draw(3));
            err[0] += (c - 1.0) * v[0] - s * v[1] + cfg.dr_bias[0] * dt + nx;
            err[1] += s * v[0] + (c - 1.0) * v[1] + cfg.dr_bias[1] * dt + ny;
            err[2] += nz;
            err[3] += nyaw;
        }
        prev_xy = Some(xy);
        let gt = Pose::new(t, [xy[0], xy[1], cfg.vehicle_depth], heading);
        let est = Pose::new(
            t,
            [xy[0] + err[0], xy[1] + err[1], cfg.vehicle_depth + err[2]],
            heading + err[3],
        );
        truth.push(gt);
        dr.push(est);
    }
    Ok(Navigation {
        truth,
        dead_reckoning: dr,
    })
}

/// Runs a full survey: pings are cast from the true poses and logged with
/// the dead-reckoned and true poses. Pings whose beams all miss are left
/// out. Returns the log and the dead-reckoned trajectory at every ping time.
pub fn run_mission(field: &TerrainField, cfg: &SurveyConfig) -> Result<(SurveyLog, Vec<Pose<f64>>)> {
    field.validate()?;
    let nav = simulate_navigation(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(STREAM_MBES);
    let mut log = SurveyLog::new(true);
    for (k, (gt, dr)) in nav.truth.iter().zip(&nav.dead_reckoning).enumerate() {
        let ping = simulate_ping(field, gt, cfg, &mut rng);
        if ping.beams.is_empty() {
            continue;
        }
        log.push(k as u64, ping, *dr, Some(*gt))?;
    }
    Ok((log, nav.dead_reckoning))
}
