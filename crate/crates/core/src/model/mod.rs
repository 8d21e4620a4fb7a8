//! Domain types shared by every stage: points, trajectories, subtrajectory
//! references and the parameter bundles for the join, segmentation and
//! clustering stages.

mod ingest;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ingest::{ingest_csv, read_csv, write_csv, ErrorMode, IngestError, IngestOptions, IngestReport, RowError};

/// Timestamps are integer seconds.
pub type Timestamp = i64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("trajectory {0} has no points")]
    EmptyTrajectory(TrajId),
    #[error("trajectory {traj}: point {idx} belongs to trajectory {found}")]
    ForeignPoint { traj: TrajId, idx: usize, found: TrajId },
    #[error("trajectory {traj}: timestamps not strictly increasing at index {idx}")]
    NonIncreasingTime { traj: TrajId, idx: usize },
    #[error("trajectory {traj}: non-finite coordinate at index {idx}")]
    NonFinite { traj: TrajId, idx: usize },
    #[error("duplicate trajectory id {0}")]
    DuplicateTrajectory(TrajId),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("invalid subtrajectory id {0:?}")]
    BadSubtrajId(String),
}

/// Opaque identifier of a moving object.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TrajId(pub u64);

impl fmt::Display for TrajId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One timestamped sample of a moving object, in projected planar units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub traj_id: TrajId,
    pub t: Timestamp,
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(traj_id: TrajId, t: Timestamp, x: f64, y: f64) -> Self {
        Self { traj_id, t, x, y }
    }
}

/// Euclidean distance between two samples.
pub fn spatial_dist(a: &Point, b: &Point) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

/// Absolute time difference between two samples.
pub fn temporal_dist(a: &Point, b: &Point) -> i64 {
    (a.t - b.t).abs()
}

/// Time-ordered samples of one moving object.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    id: TrajId,
    points: Vec<Point>,
}

impl Trajectory {
    /// Validates ownership, ordering and finiteness of `points`.
    pub fn new(id: TrajId, points: Vec<Point>) -> Result<Self, ModelError> {
        if points.is_empty() {
            return Err(ModelError::EmptyTrajectory(id));
        }
        for (idx, p) in points.iter().enumerate() {
            if p.traj_id != id {
                return Err(ModelError::ForeignPoint { traj: id, idx, found: p.traj_id });
            }
            if !p.x.is_finite() || !p.y.is_finite() {
                return Err(ModelError::NonFinite { traj: id, idx });
            }
            if idx > 0 && points[idx - 1].t >= p.t {
                return Err(ModelError::NonIncreasingTime { traj: id, idx });
            }
        }
        Ok(Self { id, points })
    }

    /// Builds a trajectory from `(t, x, y)` triples.
    pub fn from_samples(id: TrajId, samples: &[(Timestamp, f64, f64)]) -> Result<Self, ModelError> {
        let points = samples.iter().map(|&(t, x, y)| Point::new(id, t, x, y)).collect();
        Self::new(id, points)
    }

    pub fn id(&self) -> TrajId {
        self.id
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn point(&self, idx: usize) -> &Point {
        &self.points[idx]
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn start_time(&self) -> Timestamp {
        self.points[0].t
    }

    pub fn end_time(&self) -> Timestamp {
        self.points[self.points.len() - 1].t
    }

    /// `t_N - t_1`.
    pub fn duration(&self) -> i64 {
        self.end_time() - self.start_time()
    }

    /// Duration of the inclusive index range `first..=last`.
    pub fn span_duration(&self, first: usize, last: usize) -> i64 {
        self.points[last].t - self.points[first].t
    }

    /// Index of the sample with timestamp `t`, if any.
    pub fn index_of_time(&self, t: Timestamp) -> Option<usize> {
        self.points.binary_search_by_key(&t, |p| p.t).ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl BoundingBox {
    pub fn diagonal(&self) -> f64 {
        (self.max_x - self.min_x).hypot(self.max_y - self.min_y)
    }
}

/// Summary of a dataset, persisted next to generated data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub trajectories: usize,
    pub points: usize,
    pub t_min: Timestamp,
    pub t_max: Timestamp,
    pub bbox: BoundingBox,
    /// Mean time between consecutive samples of the same trajectory.
    pub mean_sampling_gap: f64,
}

/// A collection of trajectories, kept sorted by id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    trajectories: Vec<Trajectory>,
}

impl Dataset {
    pub fn new(mut trajectories: Vec<Trajectory>) -> Result<Self, ModelError> {
        trajectories.sort_by_key(|t| t.id());
        for pair in trajectories.windows(2) {
            if pair[0].id() == pair[1].id() {
                return Err(ModelError::DuplicateTrajectory(pair[0].id()));
            }
        }
        Ok(Self { trajectories })
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn get(&self, id: TrajId) -> Option<&Trajectory> {
        self.position(id).map(|i| &self.trajectories[i])
    }

    /// Position of trajectory `id` in [`Dataset::trajectories`].
    pub fn position(&self, id: TrajId) -> Option<usize> {
        self.trajectories.binary_search_by_key(&id, |t| t.id()).ok()
    }

    pub fn point_count(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }

    pub fn points(&self) -> impl Iterator<Item = &Point> {
        self.trajectories.iter().flat_map(|t| t.points().iter())
    }

    pub fn time_extent(&self) -> Option<(Timestamp, Timestamp)> {
        let min = self.trajectories.iter().map(Trajectory::start_time).min()?;
        let max = self.trajectories.iter().map(Trajectory::end_time).max()?;
        Some((min, max))
    }

    pub fn bbox(&self) -> Option<BoundingBox> {
        let mut it = self.points();
        let first = it.next()?;
        let init = BoundingBox { min_x: first.x, min_y: first.y, max_x: first.x, max_y: first.y };
        Some(it.fold(init, |b, p| BoundingBox {
            min_x: b.min_x.min(p.x),
            min_y: b.min_y.min(p.y),
            max_x: b.max_x.max(p.x),
            max_y: b.max_y.max(p.y),
        }))
    }

    /// Mean gap between consecutive samples over all trajectories; zero when
    /// no trajectory has two samples.
    pub fn mean_sampling_gap(&self) -> f64 {
        let (sum, n) = self
            .trajectories
            .iter()
            .filter(|t| t.len() > 1)
            .fold((0i128, 0usize), |(s, n), t| (s + t.duration() as i128, n + t.len() - 1));
        if n == 0 {
            0.0
        } else {
            sum as f64 / n as f64
        }
    }

    pub fn manifest(&self) -> Option<DatasetManifest> {
        let (t_min, t_max) = self.time_extent()?;
        Some(DatasetManifest {
            trajectories: self.len(),
            points: self.point_count(),
            t_min,
            t_max,
            bbox: self.bbox()?,
            mean_sampling_gap: self.mean_sampling_gap(),
        })
    }
}

/// Identifier of a subtrajectory: parent trajectory plus first point index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SubtrajId {
    pub traj: TrajId,
    pub first: u32,
}

impl SubtrajId {
    pub fn new(traj: TrajId, first: usize) -> Self {
        Self { traj, first: first as u32 }
    }
}

impl fmt::Display for SubtrajId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.traj, self.first)
    }
}

impl FromStr for SubtrajId {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ModelError::BadSubtrajId(s.to_string());
        let (traj, first) = s.trim().split_once('-').ok_or_else(bad)?;
        Ok(Self {
            traj: TrajId(traj.parse().map_err(|_| bad())?),
            first: first.parse().map_err(|_| bad())?,
        })
    }
}

/// Inclusive index range `first..=last` of a parent trajectory (0-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SubtrajRef {
    pub traj_id: TrajId,
    pub first: usize,
    pub last: usize,
}

impl SubtrajRef {
    pub fn new(traj_id: TrajId, first: usize, last: usize) -> Self {
        debug_assert!(first <= last);
        Self { traj_id, first, last }
    }

    pub fn sub_id(&self) -> SubtrajId {
        SubtrajId::new(self.traj_id, self.first)
    }

    pub fn len(&self) -> usize {
        self.last - self.first + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, idx: usize) -> bool {
        (self.first..=self.last).contains(&idx)
    }
}

/// Thresholds of the subtrajectory join.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JoinParams {
    /// Spatial threshold, dataset units.
    pub eps_sp: f64,
    /// Temporal tolerance, seconds.
    pub eps_t: f64,
    /// Minimum duration of a matching pair, seconds.
    pub delta_t: f64,
}

impl JoinParams {
    pub fn new(eps_sp: f64, eps_t: f64, delta_t: f64) -> Result<Self, ModelError> {
        let p = Self { eps_sp, eps_t, delta_t };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.eps_sp.is_finite() && self.eps_sp > 0.0) {
            return Err(ModelError::InvalidParam(format!("eps_sp must be > 0, got {}", self.eps_sp)));
        }
        if !(self.eps_t.is_finite() && self.eps_t >= 0.0) {
            return Err(ModelError::InvalidParam(format!("eps_t must be >= 0, got {}", self.eps_t)));
        }
        if !(self.delta_t.is_finite() && self.delta_t >= 0.0) {
            return Err(ModelError::InvalidParam(format!("delta_t must be >= 0, got {}", self.delta_t)));
        }
        Ok(())
    }

    /// Temporal tolerance rounded down to whole seconds.
    pub fn eps_t_secs(&self) -> i64 {
        self.eps_t.floor() as i64
    }
}

/// Sliding-window segmentation parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegParams {
    /// Window size in samples.
    pub w: usize,
    /// Difference threshold in `[0, 1]`.
    pub tau: f64,
}

impl SegParams {
    pub fn new(w: usize, tau: f64) -> Result<Self, ModelError> {
        if w == 0 {
            return Err(ModelError::InvalidParam("w must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&tau) {
            return Err(ModelError::InvalidParam(format!("tau must lie in [0, 1], got {tau}")));
        }
        Ok(Self { w, tau })
    }
}

impl Default for SegParams {
    fn default() -> Self {
        Self { w: 20, tau: 0.6 }
    }
}

/// Clustering thresholds expressed in standard deviations around the
/// per-partition mean similarity (`alpha_sigma`) and mean voting (`k_sigma`).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClusterParams {
    pub alpha_sigma: f64,
    pub k_sigma: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pt(t: i64, x: f64, y: f64) -> Point {
        Point::new(TrajId(1), t, x, y)
    }

    #[test]
    fn distances() {
        let a = pt(10, 0.0, 0.0);
        let b = pt(25, 3.0, 4.0);
        assert_eq!(spatial_dist(&a, &a), 0.0);
        assert_eq!(spatial_dist(&a, &b), 5.0);
        assert_eq!(temporal_dist(&a, &a), 0);
        assert_eq!(temporal_dist(&a, &b), 15);
    }

    #[test]
    fn trajectory_rejects_duplicate_timestamps() {
        let err = Trajectory::from_samples(TrajId(3), &[(0, 0.0, 0.0), (0, 1.0, 1.0)]).unwrap_err();
        assert_eq!(err, ModelError::NonIncreasingTime { traj: TrajId(3), idx: 1 });
        assert!(Trajectory::from_samples(TrajId(3), &[]).is_err());
        assert!(Trajectory::from_samples(TrajId(3), &[(0, f64::NAN, 0.0)]).is_err());
    }

    #[test]
    fn subtraj_id_round_trips() {
        let id = SubtrajId::new(TrajId(42), 17);
        assert_eq!(id.to_string(), "42-17");
        assert_eq!("42-17".parse::<SubtrajId>().unwrap(), id);
        assert!("42:17".parse::<SubtrajId>().is_err());
    }

    #[test]
    fn manifest_of_small_dataset() {
        let a = Trajectory::from_samples(TrajId(1), &[(0, 0.0, 0.0), (10, 3.0, 0.0), (30, 3.0, 4.0)]).unwrap();
        let b = Trajectory::from_samples(TrajId(2), &[(5, 1.0, 1.0)]).unwrap();
        let ds = Dataset::new(vec![b, a]).unwrap();
        let m = ds.manifest().unwrap();
        assert_eq!(m.points, 4);
        assert_eq!((m.t_min, m.t_max), (0, 30));
        assert_eq!(m.bbox.diagonal(), 5.0);
        assert_eq!(m.mean_sampling_gap, 15.0);
        assert_eq!(ds.trajectories()[0].id(), TrajId(1));
    }

    #[test]
    fn join_params_validation() {
        assert!(JoinParams::new(0.0, 1.0, 1.0).is_err());
        assert!(JoinParams::new(1.0, -1.0, 1.0).is_err());
        assert!(JoinParams::new(1.0, 0.0, 0.0).is_ok());
    }

    proptest! {
        #[test]
        fn distances_symmetric_and_non_negative(
            ax in -1e6f64..1e6, ay in -1e6f64..1e6, at in -1_000_000i64..1_000_000,
            bx in -1e6f64..1e6, by in -1e6f64..1e6, bt in -1_000_000i64..1_000_000,
        ) {
            let a = Point::new(TrajId(1), at, ax, ay);
            let b = Point::new(TrajId(2), bt, bx, by);
            prop_assert_eq!(spatial_dist(&a, &b), spatial_dist(&b, &a));
            prop_assert!(spatial_dist(&a, &b) >= 0.0);
            prop_assert_eq!(temporal_dist(&a, &b), temporal_dist(&b, &a));
            prop_assert!(temporal_dist(&a, &b) >= 0);
        }
    }
}
