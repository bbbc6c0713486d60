//! Shared domain types: poses, controls, multibeam pings and the global,
//! append-only beam log.
//!
//! Frames: the map frame is x east, y north, z up. The vehicle frame has x
//! forward, y to port and z up, so depths are negative everywhere. Beams are
//! stored in the vehicle frame at acquisition time so that any pose hypothesis
//! can re-project them.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{wrap_angle, Real};

/// 4-DOF vehicle pose: position in the map frame plus yaw. Roll and pitch are zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Pose<T> {
    pub t: f64,
    pub position: [T; 3],
    pub heading: T,
}

impl<T: Real> Pose<T> {
    /// Builds a pose, normalizing the heading into (-pi, pi].
    pub fn new(t: f64, position: [T; 3], heading: T) -> Self {
        Self {
            t,
            position,
            heading: wrap_angle(heading),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t.is_finite() && self.t >= 0.0) {
            return Err(Error::InvalidInput(format!("pose timestamp {} invalid", self.t)));
        }
        if !self.position.iter().all(|v| v.is_finite()) || !self.heading.is_finite() {
            return Err(Error::InvalidInput(format!("non-finite pose at t={}", self.t)));
        }
        Ok(())
    }

    pub fn xy(&self) -> [T; 2] {
        [self.position[0], self.position[1]]
    }
}

/// Motion command in the vehicle frame.
///
/// `sway` is the lateral (port-positive) velocity; a pure unicycle has it at
/// zero, but replaying a dead-reckoning stream needs it to reproduce the
/// recorded increments exactly.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ControlInput<T> {
    pub t: f64,
    pub surge: T,
    pub sway: T,
    pub yaw_rate: T,
    /// Depth of the vehicle after the step, taken from the navigation input.
    pub z: T,
}

impl<T: Real> ControlInput<T> {
    pub fn unicycle(t: f64, surge: T, yaw_rate: T, z: T) -> Self {
        Self {
            t,
            surge,
            sway: T::zero(),
            yaw_rate,
            z,
        }
    }

    /// Control that carries `from` onto `to` under the noiseless motion model.
    pub fn between(from: &Pose<T>, to: &Pose<T>) -> Result<Self> {
        let dt = to.t - from.t;
        if !(dt > 0.0) {
            return Err(Error::InvalidInput(format!(
                "control needs increasing timestamps ({} -> {})",
                from.t, to.t
            )));
        }
        let dt_s = T::lit(dt);
        let dx = to.position[0] - from.position[0];
        let dy = to.position[1] - from.position[1];
        let (s, c) = from.heading.sin_cos();
        Ok(Self {
            t: to.t,
            surge: (dx * c + dy * s) / dt_s,
            sway: (dy * c - dx * s) / dt_s,
            yaw_rate: wrap_angle(to.heading - from.heading) / dt_s,
            z: to.position[2],
        })
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite()
            && self.surge.is_finite()
            && self.sway.is_finite()
            && self.yaw_rate.is_finite()
            && self.z.is_finite()
    }
}

/// One multibeam return, `[x, y, z]` in the vehicle frame at acquisition.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Beam<T> {
    pub position: [T; 3],
}

impl<T: Real> Beam<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        Self {
            position: [x, y, z],
        }
    }
}

/// Beams acquired simultaneously, ordered port to starboard.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Ping<T> {
    pub t: f64,
    pub beams: Vec<Beam<T>>,
}

/// A 2D input location with an observed depth.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct TrainingPoint<T> {
    pub x: [T; 2],
    pub y: T,
}

/// Axis-aligned rectangle in the map frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Rect<T> {
    pub min: [T; 2],
    pub max: [T; 2],
}

impl<T: Real> Rect<T> {
    pub fn new(min: [T; 2], max: [T; 2]) -> Self {
        Self { min, max }
    }

    pub fn width(&self) -> T {
        self.max[0] - self.min[0]
    }

    pub fn height(&self) -> T {
        self.max[1] - self.min[1]
    }

    pub fn diagonal(&self) -> T {
        self.width().hypot(self.height())
    }

    /// Positive, finite extent along both axes.
    pub fn is_proper(&self) -> bool {
        let (w, h) = (self.width(), self.height());
        w.is_finite() && h.is_finite() && w > T::zero() && h > T::zero()
    }

    pub fn contains(&self, p: [T; 2]) -> bool {
        p[0] >= self.min[0] && p[0] <= self.max[0] && p[1] >= self.min[1] && p[1] <= self.max[1]
    }

    pub fn clamp(&self, p: [T; 2]) -> [T; 2] {
        [
            p[0].max(self.min[0]).min(self.max[0]),
            p[1].max(self.min[1]).min(self.max[1]),
        ]
    }
}

/// Rigid transform of a vehicle-frame beam into the map frame.
#[inline]
pub fn transform_beam<T: Real>(pose: &Pose<T>, beam: &Beam<T>) -> [T; 3] {
    let (s, c) = pose.heading.sin_cos();
    let [bx, by, bz] = beam.position;
    [
        pose.position[0] + c * bx - s * by,
        pose.position[1] + s * bx + c * by,
        pose.position[2] + bz,
    ]
}

/// One entry of the beam log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRecord<T> {
    pub beam: Beam<T>,
    pub ping: usize,
    pub t: f64,
}

/// Append-only log of every beam received so far (the growing dataset).
///
/// Pings are appended atomically: a reader holding `&BeamLog` can never see a
/// ping half-way appended, and records never change once appended.
#[derive(Clone, Debug)]
pub struct BeamLog<T> {
    beams: Vec<Beam<T>>,
    ping_of: Vec<u32>,
    ping_times: Vec<f64>,
    /// `ping_offsets[k]..ping_offsets[k + 1]` are the records of ping `k`.
    ping_offsets: Vec<usize>,
    max_beams: usize,
}

impl<T: Real> Default for BeamLog<T> {
    fn default() -> Self {
        Self::new(usize::MAX)
    }
}

impl<T: Real> BeamLog<T> {
    pub fn new(max_beams_per_ping: usize) -> Self {
        Self {
            beams: Vec::new(),
            ping_of: Vec::new(),
            ping_times: Vec::new(),
            ping_offsets: vec![0],
            max_beams: max_beams_per_ping,
        }
    }

    /// Total number of records (N_t).
    pub fn len(&self) -> usize {
        self.beams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beams.is_empty()
    }

    pub fn num_pings(&self) -> usize {
        self.ping_times.len()
    }

    pub fn last_time(&self) -> Option<f64> {
        self.ping_times.last().copied()
    }

    pub fn first_time(&self) -> Option<f64> {
        self.ping_times.first().copied()
    }

    pub fn append_ping(&mut self, ping: &Ping<T>) -> Result<()> {
        if !ping.t.is_finite() || ping.t < 0.0 {
            return Err(Error::InvalidInput(format!("ping timestamp {}", ping.t)));
        }
        if let Some(last) = self.last_time() {
            if ping.t < last {
                return Err(Error::OutOfOrder { last, got: ping.t });
            }
        }
        let n = ping.beams.len();
        if n == 0 || n > self.max_beams {
            return Err(Error::InvalidInput(format!(
                "ping at t={} has {n} beams (allowed 1..={})",
                ping.t, self.max_beams
            )));
        }
        if ping
            .beams
            .iter()
            .any(|b| !b.position.iter().all(|v| v.is_finite()))
        {
            return Err(Error::InvalidInput(format!(
                "ping at t={} has non-finite beams",
                ping.t
            )));
        }
        let idx = self.ping_times.len() as u32;
        self.beams.extend_from_slice(&ping.beams);
        self.ping_of.extend(std::iter::repeat_n(idx, n));
        self.ping_times.push(ping.t);
        self.ping_offsets.push(self.beams.len());
        Ok(())
    }

    pub fn record(&self, i: usize) -> LogRecord<T> {
        let ping = self.ping_of[i] as usize;
        LogRecord {
            beam: self.beams[i],
            ping,
            t: self.ping_times[ping],
        }
    }

    pub fn ping_time(&self, ping: usize) -> f64 {
        self.ping_times[ping]
    }

    pub fn ping_beams(&self, ping: usize) -> &[Beam<T>] {
        &self.beams[self.ping_offsets[ping]..self.ping_offsets[ping + 1]]
    }

    /// Record range of every ping stamped exactly `t`.
    pub fn range_at_time(&self, t: f64) -> std::ops::Range<usize> {
        let lo = self.ping_times.partition_point(|&pt| pt < t);
        let hi = self.ping_times.partition_point(|&pt| pt <= t);
        self.ping_offsets[lo]..self.ping_offsets[hi]
    }

    pub fn beams(&self) -> &[Beam<T>] {
        &self.beams
    }

    /// Draws `count` records uniformly with replacement.
    pub fn sample_uniform<R: Rng + ?Sized>(
        &self,
        count: usize,
        rng: &mut R,
    ) -> Result<Vec<LogRecord<T>>> {
        if self.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if count == 0 {
            return Err(Error::InvalidInput("sample count must be >= 1".into()));
        }
        let n = self.len();
        Ok((0..count)
            .map(|_| self.record(rng.random_range(0..n)))
            .collect())
    }
}
