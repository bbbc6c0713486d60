//! Segment-handle trajectory histories.
//!
//! Every particle's trajectory is a list of shared, sealed segments plus one
//! open tail it owns. Resampling seals the survivors' tails and hands the
//! same segment handles to every offspring, so a pose is stored once no
//! matter how many descendants reference it. Because all particles are
//! predicted and resampled in lockstep, segment boundaries are common to the
//! whole set and are described once by a [`SegmentIndex`].

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::types::Pose;

/// Poses between two resampling events, strictly increasing in time.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrajectorySegment<T> {
    poses: Vec<Pose<T>>,
    sealed: bool,
}

impl<T: Real> TrajectorySegment<T> {
    pub fn new() -> Self {
        Self {
            poses: Vec::new(),
            sealed: false,
        }
    }

    pub fn poses(&self) -> &[Pose<T>] {
        &self.poses
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn is_sealed(&self) -> bool {
        self.sealed
    }

    pub fn first_time(&self) -> Option<f64> {
        self.poses.first().map(|p| p.t)
    }

    fn push(&mut self, pose: Pose<T>) {
        debug_assert!(!self.sealed);
        self.poses.push(pose);
    }

    /// Zero-order hold inside the segment: the last pose with `t <= t_b`.
    fn hold(&self, t_b: f64) -> Option<&Pose<T>> {
        let k = self.poses.partition_point(|p| p.t <= t_b);
        k.checked_sub(1).map(|i| &self.poses[i])
    }
}

/// Segment lengths and start times shared by every history of a particle set.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SegmentIndex {
    lengths: Vec<usize>,
    starts: Vec<f64>,
}

impl SegmentIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_segments(&self) -> usize {
        self.lengths.len()
    }

    pub fn lengths(&self) -> &[usize] {
        &self.lengths
    }

    pub fn starts(&self) -> &[f64] {
        &self.starts
    }

    /// Total number of sealed poses.
    pub fn sealed_len(&self) -> usize {
        self.lengths.iter().sum()
    }

    pub(crate) fn publish(&mut self, length: usize, start: f64) {
        debug_assert!(self.starts.last().is_none_or(|&s| s < start));
        self.lengths.push(length);
        self.starts.push(start);
    }
}

/// A particle's trajectory: shared sealed segments plus an owned open tail.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryHistory<T> {
    segments: Vec<Arc<TrajectorySegment<T>>>,
    tail: TrajectorySegment<T>,
}

impl<T: Real> Default for TrajectoryHistory<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> TrajectoryHistory<T> {
    pub fn new() -> Self {
        Self {
            segments: Vec::new(),
            tail: TrajectorySegment::new(),
        }
    }

    pub fn segments(&self) -> &[Arc<TrajectorySegment<T>>] {
        &self.segments
    }

    pub fn tail(&self) -> &TrajectorySegment<T> {
        &self.tail
    }

    pub fn len(&self) -> usize {
        self.segments.iter().map(|s| s.len()).sum::<usize>() + self.tail.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn last(&self) -> Option<&Pose<T>> {
        self.tail
            .poses
            .last()
            .or_else(|| self.segments.last().and_then(|s| s.poses.last()))
    }

    pub fn first(&self) -> Option<&Pose<T>> {
        self.segments
            .first()
            .and_then(|s| s.poses.first())
            .or_else(|| self.tail.poses.first())
    }

    /// Appends a pose to the open tail; timestamps must strictly increase.
    pub fn push(&mut self, pose: Pose<T>) -> Result<()> {
        if let Some(last) = self.last() {
            if !(pose.t > last.t) {
                return Err(Error::OutOfOrder {
                    last: last.t,
                    got: pose.t,
                });
            }
        }
        self.tail.push(pose);
        Ok(())
    }

    /// Seals the open tail into a shared segment. An empty tail is left as is.
    /// Returns `(length, start time)` of the new segment.
    pub(crate) fn seal(&mut self) -> Option<(usize, f64)> {
        if self.tail.is_empty() {
            return None;
        }
        let mut seg = std::mem::take(&mut self.tail);
        seg.sealed = true;
        let meta = (seg.len(), seg.poses[0].t);
        self.segments.push(Arc::new(seg));
        Some(meta)
    }

    /// A history sharing every sealed segment of `self`, with a fresh tail.
    /// The tail of `self` must already be sealed.
    pub(crate) fn fork(&self) -> Self {
        debug_assert!(self.tail.is_empty());
        Self {
            segments: self.segments.clone(),
            tail: TrajectorySegment::new(),
        }
    }

    /// Pose held at `t_b`: the latest pose with timestamp `<= t_b`.
    ///
    /// The segment is located by binary search over the index's start times,
    /// the pose by binary search inside the segment. Queries after the last
    /// pose return the last pose.
    pub fn pose_at(&self, index: &SegmentIndex, t_b: f64) -> Result<&Pose<T>> {
        debug_assert_eq!(index.num_segments(), self.segments.len());
        let out_of_range = || Error::OutOfRange {
            t: t_b,
            first: self.first().map_or(f64::NAN, |p| p.t),
        };
        if let Some(start) = self.tail.first_time() {
            if t_b >= start {
                return self.tail.hold(t_b).ok_or_else(out_of_range);
            }
        }
        let k = index.starts.partition_point(|&s| s <= t_b);
        if k == 0 {
            return Err(out_of_range());
        }
        self.segments[k - 1].hold(t_b).ok_or_else(out_of_range)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Pose<T>> + '_ {
        self.segments
            .iter()
            .flat_map(|s| s.poses.iter())
            .chain(self.tail.poses.iter())
    }

    pub fn to_vec(&self) -> Vec<Pose<T>> {
        self.iter().copied().collect()
    }
}
