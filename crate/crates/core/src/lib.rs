//! Partition-parallel subtrajectory clustering.
//!
//! The crate is organised as a staged pipeline over an in-memory dataset of
//! moving-object trajectories:
//!
//! 1. [`partition`] builds an equi-depth temporal histogram and assigns data
//!    to load-balanced temporal partitions.
//! 2. [`join`] runs the spatiotemporal point join inside every partition and
//!    refines per-trajectory matches into maximal matching subtrajectory pairs.
//! 3. [`segment`] turns each trajectory's neighbourhood into a voting signal
//!    (or neighbour-id lists) and cuts it where density or composition changes.
//! 4. [`similarity`] builds the per-subtrajectory relations and computes the
//!    weighted LCSS similarity between co-partition subtrajectories.
//! 5. [`cluster`] selects representatives, assigns members, flags outliers and
//!    reconciles subtrajectories that straddle partition borders.
//!
//! [`pipeline`] wires the stages together over a worker pool; [`generate`] and
//! [`evaluate`] provide synthetic scenes with ground truth and scoring.

pub mod cluster;
pub mod config;
pub mod evaluate;
pub mod generate;
pub mod join;
pub mod model;
pub mod partition;
pub mod pipeline;
pub mod segment;
pub mod similarity;

pub use cluster::{ClusterParams, ClusteringResult, PartitionClustering, SubtrajState, Thresholds};
pub use config::{Detector, PipelineConfig};
pub use join::{JoinParams, MatchInterval, PointMatch};
pub use model::{Dataset, Point, SubtrajId, SubtrajRef, TrajId, Trajectory};
pub use partition::TemporalPartitioning;
pub use pipeline::{run_pipeline, RunOutput};
pub use segment::{CutPoints, SegParams, VotingVector};
pub use similarity::{SPRecord, STPRecord, STRecord};
