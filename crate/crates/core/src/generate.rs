//! Synthetic scenes with ground truth.
//!
//! * `star`: six routes `A->B, A->C, A->D, B->A, B->C, B->D` through a shared
//!   midpoint `O`, all starting together at the same speed. Ground truth is
//!   the six half-routes `A-O, B-O, O-A, O-B, O-C, O-D`.
//! * `tsa`: five routes `A->B, A->C, A->D, C->B, D->B`. After `O` the
//!   neighbourhood of `A->B` keeps its size but changes composition.
//! * `random`: convoys along random walks, some splitting halfway, plus lone
//!   objects labelled as outliers.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Dataset, Point, TrajId, Trajectory};

#[derive(Debug, Error)]
pub enum GenerateError {
    #[error("unknown scenario {0:?} (expected star, tsa or random)")]
    UnknownScenario(String),
    #[error("invalid generator option: {0}")]
    Invalid(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    Star,
    Tsa,
    Random,
}

impl FromStr for Scenario {
    type Err = GenerateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "star" => Ok(Self::Star),
            "tsa" => Ok(Self::Tsa),
            "random" => Ok(Self::Random),
            other => Err(GenerateError::UnknownScenario(other.to_string())),
        }
    }
}

/// Ground-truth label of a trajectory segment; `None` marks an outlier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthSegment {
    pub traj_id: TrajId,
    pub first: usize,
    pub last: usize,
    pub label: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub segments: Vec<TruthSegment>,
}

impl GroundTruth {
    pub fn segments_of(&self, traj: TrajId) -> impl Iterator<Item = &TruthSegment> {
        self.segments.iter().filter(move |s| s.traj_id == traj)
    }

    pub fn labels(&self) -> Vec<String> {
        let mut v: Vec<String> = self.segments.iter().filter_map(|s| s.label.clone()).collect();
        v.sort();
        v.dedup();
        v
    }

    /// `traj_id,first,last,label`, with `outlier` for unlabelled segments.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("traj_id,first,last,label\n");
        for seg in &self.segments {
            writeln!(s, "{},{},{},{}", seg.traj_id, seg.first, seg.last, seg.label.as_deref().unwrap_or("outlier")).unwrap();
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self, GenerateError> {
        let mut segments = Vec::new();
        for (i, line) in text.lines().enumerate().skip(1) {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let bad = |m: &str| GenerateError::Parse { line: i + 1, message: m.to_string() };
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(bad("expected traj_id,first,last,label"));
            }
            segments.push(TruthSegment {
                traj_id: TrajId(f[0].parse().map_err(|_| bad("traj_id"))?),
                first: f[1].parse().map_err(|_| bad("first"))?,
                last: f[2].parse().map_err(|_| bad("last"))?,
                label: (f[3] != "outlier").then(|| f[3].to_string()),
            });
        }
        Ok(Self { segments })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenOptions {
    /// Objects per route (star, tsa) or convoys (random).
    pub replication: usize,
    /// Jitter standard deviation as a fraction of the leg length.
    pub noise: f64,
    pub seed: u64,
    /// Distance from each endpoint to `O`.
    pub leg_length: f64,
    /// Samples per leg.
    pub points_per_leg: usize,
    /// Seconds between samples.
    pub period: i64,
}

impl Default for GenOptions {
    fn default() -> Self {
        Self { replication: 5, noise: 0.0, seed: 0, leg_length: 1000.0, points_per_leg: 50, period: 10 }
    }
}

#[derive(Debug, Clone)]
pub struct Generated {
    pub dataset: Dataset,
    pub truth: GroundTruth,
}

pub fn generate(scenario: Scenario, opts: &GenOptions) -> Result<Generated, GenerateError> {
    if opts.replication == 0 || opts.points_per_leg == 0 || opts.period <= 0 {
        return Err(GenerateError::Invalid("replication, points_per_leg and period must be positive".into()));
    }
    if !(opts.noise.is_finite() && opts.noise >= 0.0 && opts.leg_length > 0.0) {
        return Err(GenerateError::Invalid("noise must be >= 0 and leg_length > 0".into()));
    }
    match scenario {
        Scenario::Star => Ok(routes_scene(&STAR_ROUTES, opts)),
        Scenario::Tsa => Ok(routes_scene(&TSA_ROUTES, opts)),
        Scenario::Random => Ok(random_scene(&RandomOptions { convoys: opts.replication, seed: opts.seed, ..Default::default() })),
    }
}

const STAR_ROUTES: [(char, char); 6] = [('A', 'B'), ('A', 'C'), ('A', 'D'), ('B', 'A'), ('B', 'C'), ('B', 'D')];
const TSA_ROUTES: [(char, char); 5] = [('A', 'B'), ('A', 'C'), ('A', 'D'), ('C', 'B'), ('D', 'B')];

/// Unit direction from `O` to a named endpoint: `A` west, `B` east, `C`
/// north, `D` south.
fn direction(name: char) -> (f64, f64) {
    match name {
        'A' => (-1.0, 0.0),
        'B' => (1.0, 0.0),
        'C' => (0.0, 1.0),
        'D' => (0.0, -1.0),
        _ => unreachable!("unknown endpoint {name}"),
    }
}

/// Each route is sampled at half-step offsets so no sample sits exactly on
/// `O`; the second leg starts at index `points_per_leg`.
fn routes_scene(routes: &[(char, char)], opts: &GenOptions) -> Generated {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let jitter = Normal::new(0.0, (opts.noise * opts.leg_length).max(f64::MIN_POSITIVE)).unwrap();
    let h = opts.points_per_leg;
    let l = opts.leg_length;
    let mut trajectories = Vec::new();
    let mut segments = Vec::new();
    for (r, &(from, to)) in routes.iter().enumerate() {
        let (fx, fy) = direction(from);
        let (tx, ty) = direction(to);
        for k in 0..opts.replication {
            let id = TrajId((r * opts.replication + k + 1) as u64);
            let mut points = Vec::with_capacity(2 * h);
            for i in 0..2 * h {
                let (x, y) = if i < h {
                    let f = 1.0 - (i as f64 + 0.5) / h as f64;
                    (fx * l * f, fy * l * f)
                } else {
                    let f = (i - h) as f64 + 0.5;
                    (tx * l * f / h as f64, ty * l * f / h as f64)
                };
                let (jx, jy) = if opts.noise > 0.0 { (jitter.sample(&mut rng), jitter.sample(&mut rng)) } else { (0.0, 0.0) };
                points.push(Point::new(id, i as i64 * opts.period, x + jx, y + jy));
            }
            trajectories.push(Trajectory::new(id, points).expect("generated trajectory is valid"));
            segments.push(TruthSegment { traj_id: id, first: 0, last: h - 1, label: Some(format!("{from}-O")) });
            segments.push(TruthSegment { traj_id: id, first: h, last: 2 * h - 1, label: Some(format!("O-{to}")) });
        }
    }
    Generated { dataset: Dataset::new(trajectories).expect("ids are unique"), truth: GroundTruth { segments } }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomOptions {
    pub convoys: usize,
    pub convoy_size: usize,
    /// Lone objects, labelled as outliers.
    pub loners: usize,
    pub points: usize,
    pub period: i64,
    pub extent: f64,
    pub speed: f64,
    /// Per-object lateral offset within a convoy.
    pub spread: f64,
    /// Per-sample jitter.
    pub noise: f64,
    /// Fraction of convoys that split in two halfway.
    pub split_fraction: f64,
    /// Convoy start times are drawn from `[0, start_window)`.
    pub start_window: i64,
    pub seed: u64,
}

impl Default for RandomOptions {
    fn default() -> Self {
        Self {
            convoys: 6,
            convoy_size: 4,
            loners: 4,
            points: 60,
            period: 10,
            extent: 10_000.0,
            speed: 5.0,
            spread: 10.0,
            noise: 2.0,
            split_fraction: 0.5,
            start_window: 200,
            seed: 0,
        }
    }
}

/// Convoys following random walks. Splitting convoys send half their members
/// off on a heading turned by 60 degrees from the midpoint on.
pub fn random_scene(o: &RandomOptions) -> Generated {
    let mut rng = ChaCha8Rng::seed_from_u64(o.seed);
    let noise = Normal::new(0.0, o.noise.max(f64::MIN_POSITIVE)).unwrap();
    let turn = Normal::new(0.0, 0.05).unwrap();
    let mut trajectories = Vec::new();
    let mut segments = Vec::new();
    let mut next_id = 1u64;
    let n = o.points.max(2);
    let half = n / 2;

    let groups: Vec<usize> = (0..o.convoys).map(|_| o.convoy_size.max(1)).chain((0..o.loners).map(|_| 1)).collect();
    for (g, &size) in groups.iter().enumerate() {
        let is_loner = g >= o.convoys;
        let splits = !is_loner && size >= 2 && rng.random::<f64>() < o.split_fraction;
        let t0 = if o.start_window > 0 { rng.random_range(0..o.start_window) } else { 0 };
        let mut heading: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let (mut x, mut y) = (rng.random_range(0.0..o.extent), rng.random_range(0.0..o.extent));
        let step = o.speed * o.period as f64;

        // Shared path, plus the branch taken by the splitting half.
        let mut main = Vec::with_capacity(n);
        for _ in 0..n {
            main.push((x, y));
            heading += turn.sample(&mut rng);
            x += step * heading.cos();
            y += step * heading.sin();
        }
        let mut branch = main.clone();
        if splits {
            let (mut bx, mut by) = main[half - 1];
            let mut bh = (main[half].1 - main[half - 1].1).atan2(main[half].0 - main[half - 1].0) + std::f64::consts::FRAC_PI_3;
            for p in branch.iter_mut().skip(half) {
                bx += step * bh.cos();
                by += step * bh.sin();
                bh += turn.sample(&mut rng);
                *p = (bx, by);
            }
        }

        for m in 0..size {
            let id = TrajId(next_id);
            next_id += 1;
            let path = if splits && m >= size / 2 { &branch } else { &main };
            let (ox, oy) = (rng.random_range(-o.spread..=o.spread), rng.random_range(-o.spread..=o.spread));
            let points = path
                .iter()
                .enumerate()
                .map(|(i, &(px, py))| {
                    Point::new(id, t0 + i as i64 * o.period, px + ox + noise.sample(&mut rng), py + oy + noise.sample(&mut rng))
                })
                .collect();
            trajectories.push(Trajectory::new(id, points).expect("generated trajectory is valid"));
            if is_loner {
                segments.push(TruthSegment { traj_id: id, first: 0, last: n - 1, label: None });
            } else if splits {
                let tail = if m >= size / 2 { "b" } else { "a" };
                segments.push(TruthSegment { traj_id: id, first: 0, last: half - 1, label: Some(format!("g{g}")) });
                segments.push(TruthSegment { traj_id: id, first: half, last: n - 1, label: Some(format!("g{g}{tail}")) });
            } else {
                segments.push(TruthSegment { traj_id: id, first: 0, last: n - 1, label: Some(format!("g{g}")) });
            }
        }
    }
    Generated { dataset: Dataset::new(trajectories).expect("ids are unique"), truth: GroundTruth { segments } }
}

/// Number of trajectories per ground-truth label.
pub fn label_sizes(truth: &GroundTruth) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for s in &truth.segments {
        if let Some(l) = &s.label {
            *m.entry(l.clone()).or_default() += 1;
        }
    }
    m
}
