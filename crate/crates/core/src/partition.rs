//! Equi-depth temporal partitioning.
//!
//! Borders are quantiles of a seeded uniform sample of point timestamps, so
//! every partition receives roughly the same number of points regardless of
//! temporal skew. Intervals are half-open `[lo, hi)`.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{Dataset, Timestamp};

/// Minimum sample size; datasets smaller than this are sampled in full.
pub const MIN_SAMPLE: usize = 10_000;

pub const DEFAULT_SAMPLE_FRACTION: f64 = 0.01;

#[derive(Debug, Error)]
pub enum PartitionError {
    #[error("partition count must be >= 1")]
    ZeroPartitions,
    #[error("cannot partition an empty dataset")]
    EmptyDataset,
    #[error("sample fraction must lie in (0, 1], got {0}")]
    BadFraction(f64),
    #[error("{requested} partitions requested but the sample only supports {supported} distinct borders; use a smaller P")]
    Degenerate { requested: usize, supported: usize },
    #[error("borders must be strictly increasing")]
    NonIncreasing,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalPartitioning {
    borders: Vec<Timestamp>,
    sample_fraction: f64,
}

/// One copy of a point routed to a partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PartitionCopy {
    pub partition: usize,
    /// Exactly one copy of every point is primary: the one in its owner.
    pub primary: bool,
}

/// Partitions a time span overlaps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpanAssignment {
    pub partitions: Vec<usize>,
    pub intersecting: bool,
}

impl TemporalPartitioning {
    pub fn from_borders(borders: Vec<Timestamp>, sample_fraction: f64) -> Result<Self, PartitionError> {
        if borders.len() < 2 {
            return Err(PartitionError::ZeroPartitions);
        }
        if borders.windows(2).any(|w| w[0] >= w[1]) {
            return Err(PartitionError::NonIncreasing);
        }
        Ok(Self { borders, sample_fraction })
    }

    pub fn borders(&self) -> &[Timestamp] {
        &self.borders
    }

    pub fn sample_fraction(&self) -> f64 {
        self.sample_fraction
    }

    pub fn partition_count(&self) -> usize {
        self.borders.len() - 1
    }

    /// `[lo, hi)` of partition `p`.
    pub fn interval(&self, p: usize) -> (Timestamp, Timestamp) {
        (self.borders[p], self.borders[p + 1])
    }

    /// Owning partition of `t`, or `None` outside the covered extent.
    pub fn partition_of(&self, t: Timestamp) -> Option<usize> {
        if t < self.borders[0] || t >= *self.borders.last().unwrap() {
            return None;
        }
        // First border strictly greater than t, minus one.
        Some(self.borders.partition_point(|&b| b <= t) - 1)
    }

    /// The owner of `t` plus every other partition whose interval holds a
    /// timestamp within `halo` of `t`. The owner comes first and is primary.
    pub fn assign_point(&self, t: Timestamp, halo: i64) -> Vec<PartitionCopy> {
        let Some(owner) = self.partition_of(t) else {
            return Vec::new();
        };
        let mut out = vec![PartitionCopy { partition: owner, primary: true }];
        if halo <= 0 {
            return out;
        }
        let mut p = owner;
        while p > 0 {
            p -= 1;
            let (_, hi) = self.interval(p);
            if t - (hi - 1) > halo {
                break;
            }
            out.push(PartitionCopy { partition: p, primary: false });
        }
        for p in owner + 1..self.partition_count() {
            let (lo, _) = self.interval(p);
            if lo - t > halo {
                break;
            }
            out.push(PartitionCopy { partition: p, primary: false });
        }
        out
    }

    /// All partitions whose interval overlaps the closed span `[t_start, t_end]`.
    pub fn assign_span(&self, t_start: Timestamp, t_end: Timestamp) -> SpanAssignment {
        let n = self.partition_count();
        let partitions: Vec<usize> = (0..n)
            .filter(|&p| {
                let (lo, hi) = self.interval(p);
                lo <= t_end && t_start < hi
            })
            .collect();
        let intersecting = partitions.len() >= 2;
        SpanAssignment { partitions, intersecting }
    }

    /// One border per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for b in &self.borders {
            writeln!(s, "{b}").unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, PartitionError> {
        let mut borders = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let b = line
                .parse()
                .map_err(|e: std::num::ParseIntError| PartitionError::Parse { line: i + 1, message: e.to_string() })?;
            borders.push(b);
        }
        Self::from_borders(borders, 1.0)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PartitionError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PartitionError> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

/// Size of the timestamp sample drawn from `n` points.
pub fn sample_size(n: usize, fraction: f64) -> usize {
    let by_fraction = (fraction * n as f64).ceil() as usize;
    by_fraction.max(MIN_SAMPLE.min(n)).min(n)
}

/// Builds `p` equi-depth temporal partitions from a seeded sample of the
/// dataset's timestamps.
pub fn build_partitioning(
    dataset: &Dataset,
    p: usize,
    sample_fraction: f64,
    seed: u64,
) -> Result<TemporalPartitioning, PartitionError> {
    if p == 0 {
        return Err(PartitionError::ZeroPartitions);
    }
    if !(sample_fraction > 0.0 && sample_fraction <= 1.0) {
        return Err(PartitionError::BadFraction(sample_fraction));
    }
    let (t_min, t_max) = dataset.time_extent().ok_or(PartitionError::EmptyDataset)?;
    let times: Vec<Timestamp> = dataset.points().map(|pt| pt.t).collect();

    let m = sample_size(times.len(), sample_fraction);
    let mut sampled: Vec<Timestamp> = if m == times.len() {
        times
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = sample(&mut rng, times.len(), m).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| times[i]).collect()
    };
    sampled.sort_unstable();

    let mut borders = Vec::with_capacity(p + 1);
    borders.push(t_min);
    for i in 1..p {
        borders.push(sampled[i * m / p]);
    }
    borders.push(t_max + 1);

    if borders.windows(2).any(|w| w[0] >= w[1]) {
        let mut distinct = sampled.clone();
        distinct.dedup();
        return Err(PartitionError::Degenerate { requested: p, supported: distinct.len() });
    }
    TemporalPartitioning::from_borders(borders, sample_fraction)
}
