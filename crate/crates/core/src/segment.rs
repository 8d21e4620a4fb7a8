//! Neighbourhood-aware trajectory segmentation.
//!
//! Every point gets a proximity vote from each trajectory it matched in the
//! join, and a list of those trajectory ids. Two sliding windows of `w`
//! samples move over the trajectory; a cut is placed where the windows
//! differ by more than `tau` and the difference peaks locally. TSA1 compares
//! mean normalized votes (density), TSA2 compares the neighbour id sets
//! (composition).

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::join::MatchInterval;
use crate::model::{SubtrajRef, TrajId, Trajectory};

pub use crate::model::SegParams;

/// Vote contributed by a neighbour at distance `d`.
///
/// Closer neighbours weigh more, matching the proximity weighting of the
/// similarity measure.
pub fn vote_weight(d: f64, eps_sp: f64) -> f64 {
    (1.0 - d / eps_sp).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Detector {
    #[default]
    Tsa1,
    Tsa2,
}

impl FromStr for Detector {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tsa1" => Ok(Self::Tsa1),
            "tsa2" => Ok(Self::Tsa2),
            other => Err(format!("unknown detector {other:?} (expected tsa1 or tsa2)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VotingVector {
    pub traj_id: TrajId,
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
}

impl VotingVector {
    pub fn from_raw(traj_id: TrajId, raw: Vec<f64>) -> Self {
        let max = raw.iter().copied().fold(0.0, f64::max);
        let normalized = if max > 0.0 { raw.iter().map(|v| v / max).collect() } else { vec![0.0; raw.len()] };
        Self { traj_id, raw, normalized }
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    /// Mean raw vote over the whole trajectory.
    pub fn trajectory_voting(&self) -> f64 {
        mean(&self.raw)
    }

    /// Mean raw vote over `first..=last`.
    pub fn range_voting(&self, first: usize, last: usize) -> f64 {
        mean(&self.raw[first..=last])
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Per point, the sorted ids of trajectories it matched.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeighborLists {
    pub traj_id: TrajId,
    pub lists: Vec<Vec<TrajId>>,
}

/// Nearest distance per `(point, other trajectory)`.
fn nearest_per_neighbour(n: usize, intervals: &[MatchInterval]) -> Vec<BTreeMap<TrajId, f64>> {
    let mut best: Vec<BTreeMap<TrajId, f64>> = vec![BTreeMap::new(); n];
    for iv in intervals {
        for (k, nm) in iv.nearest.iter().enumerate() {
            let e = best[iv.ref_range.0 + k].entry(iv.other_traj).or_insert(f64::INFINITY);
            *e = e.min(nm.dist);
        }
    }
    best
}

/// One vote per matching trajectory per point, from its nearest match.
pub fn compute_voting(traj: &Trajectory, intervals: &[MatchInterval], eps_sp: f64) -> VotingVector {
    let raw = nearest_per_neighbour(traj.len(), intervals)
        .into_iter()
        .map(|m| m.values().map(|&d| vote_weight(d, eps_sp)).sum())
        .collect();
    VotingVector::from_raw(traj.id(), raw)
}

pub fn neighbor_lists(traj: &Trajectory, intervals: &[MatchInterval]) -> NeighborLists {
    let lists = nearest_per_neighbour(traj.len(), intervals).into_iter().map(|m| m.into_keys().collect()).collect();
    NeighborLists { traj_id: traj.id(), lists }
}

/// Start indices of the subtrajectories, always beginning with 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CutPoints(pub Vec<usize>);

impl CutPoints {
    pub fn whole() -> Self {
        Self(vec![0])
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn interior(&self) -> &[usize] {
        &self.0[1..]
    }

    pub fn subtrajectory_count(&self) -> usize {
        self.0.len()
    }
}

/// Window positions `n` (start of the right window) that have full windows
/// on both sides.
fn positions(n_points: usize, w: usize) -> Option<std::ops::RangeInclusive<usize>> {
    (n_points >= 2 * w + 2).then(|| w..=n_points - w - 2)
}

/// Applies the cut rule to the window differences `d`, indexed from
/// `first`: `d[n]` exceeds `tau`, is strictly larger than the `w` values
/// before it and no smaller than the `w` values after it.
fn select_cuts(d: &[f64], first: usize, w: usize, tau: f64) -> CutPoints {
    let mut cuts = vec![0];
    for k in 0..d.len() {
        if d[k] <= tau {
            continue;
        }
        let left = &d[k.saturating_sub(w)..k];
        let right = &d[k + 1..(k + 1 + w).min(d.len())];
        if left.iter().all(|&x| d[k] > x) && right.iter().all(|&x| d[k] >= x) {
            cuts.push(first + k);
        }
    }
    CutPoints(cuts)
}

/// Mean-difference signal of TSA1 for each window position.
pub fn tsa1_signal(normalized: &[f64], w: usize) -> Vec<f64> {
    let Some(range) = positions(normalized.len(), w) else {
        return Vec::new();
    };
    let mut prefix = vec![0.0; normalized.len() + 1];
    for (i, v) in normalized.iter().enumerate() {
        prefix[i + 1] = prefix[i] + v;
    }
    let wf = w as f64;
    range
        .map(|n| {
            let m1 = (prefix[n] - prefix[n - w]) / wf;
            let m2 = (prefix[n + w] - prefix[n]) / wf;
            (m1 - m2).abs()
        })
        .collect()
}

pub fn tsa1(v: &VotingVector, p: &SegParams) -> CutPoints {
    let d = tsa1_signal(&v.normalized, p.w);
    select_cuts(&d, p.w, p.w, p.tau)
}

/// Neighbour tokens of one point: each neighbouring trajectory, or a single
/// `None` when the point has no neighbours at all.
type Token = Option<TrajId>;

/// Weighted Jaccard distance `1 - sum(min) / sum(max)` between two token
/// multisets. Two empty windows are identical.
fn jaccard_distance(a: &HashMap<Token, usize>, b: &HashMap<Token, usize>) -> f64 {
    let (mut lo, mut hi) = (0usize, 0usize);
    for (k, &ca) in a {
        let cb = b.get(k).copied().unwrap_or(0);
        lo += ca.min(cb);
        hi += ca.max(cb);
    }
    hi += b.iter().filter(|(k, _)| !a.contains_key(*k)).map(|(_, &c)| c).sum::<usize>();
    if hi == 0 {
        return 0.0;
    }
    1.0 - lo as f64 / hi as f64
}

fn tokens(ids: &[TrajId]) -> impl Iterator<Item = Token> + '_ {
    let isolated = ids.is_empty().then_some(None);
    ids.iter().map(|&id| Some(id)).chain(isolated)
}

fn add(counts: &mut HashMap<Token, usize>, ids: &[TrajId]) {
    for t in tokens(ids) {
        *counts.entry(t).or_default() += 1;
    }
}

fn remove(counts: &mut HashMap<Token, usize>, ids: &[TrajId]) {
    for t in tokens(ids) {
        if let Some(c) = counts.get_mut(&t) {
            *c -= 1;
            if *c == 0 {
                counts.remove(&t);
            }
        }
    }
}

/// Composition-change signal of TSA2 for each window position.
///
/// Each window is the multiset of neighbour ids over its points, so an id
/// seen at every point of both windows counts fully and one seen at a single
/// point counts once. A point without neighbours contributes an "isolated"
/// token; this keeps the distance peaked at the change instead of flat
/// across every position where one window is empty.
pub fn tsa2_signal(lists: &[Vec<TrajId>], w: usize) -> Vec<f64> {
    let Some(range) = positions(lists.len(), w) else {
        return Vec::new();
    };
    let (start, end) = (*range.start(), *range.end());
    let mut left = HashMap::new();
    let mut right = HashMap::new();
    for l in &lists[start - w..start] {
        add(&mut left, l);
    }
    for l in &lists[start..start + w] {
        add(&mut right, l);
    }
    let mut out = Vec::with_capacity(end - start + 1);
    for n in start..=end {
        if n > start {
            remove(&mut left, &lists[n - w - 1]);
            add(&mut left, &lists[n - 1]);
            remove(&mut right, &lists[n - 1]);
            add(&mut right, &lists[n + w - 1]);
        }
        out.push(jaccard_distance(&left, &right));
    }
    out
}

pub fn tsa2(nl: &NeighborLists, p: &SegParams) -> CutPoints {
    let d = tsa2_signal(&nl.lists, p.w);
    select_cuts(&d, p.w, p.w, p.tau)
}

/// Splits `traj` into consecutive subtrajectories starting at each cut.
pub fn split(traj: &Trajectory, cp: &CutPoints) -> Vec<SubtrajRef> {
    let n = traj.len();
    let mut starts: Vec<usize> = cp.indices().iter().copied().filter(|&c| c < n).collect();
    if starts.first() != Some(&0) {
        starts.insert(0, 0);
    }
    starts.dedup();
    starts
        .iter()
        .enumerate()
        .map(|(k, &first)| {
            let last = starts.get(k + 1).map_or(n - 1, |&next| next - 1);
            SubtrajRef::new(traj.id(), first, last)
        })
        .collect()
}

/// Segmentation output of one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub voting: VotingVector,
    pub cuts: CutPoints,
    pub subtrajectories: Vec<SubtrajRef>,
}

pub fn segment_trajectory(
    traj: &Trajectory,
    intervals: &[MatchInterval],
    eps_sp: f64,
    detector: Detector,
    p: &SegParams,
) -> Segmentation {
    let voting = compute_voting(traj, intervals, eps_sp);
    let cuts = match detector {
        Detector::Tsa1 => tsa1(&voting, p),
        Detector::Tsa2 => tsa2(&neighbor_lists(traj, intervals), p),
    };
    let subtrajectories = split(traj, &cuts);
    Segmentation { voting, cuts, subtrajectories }
}

/// `traj_id,idx,raw,normalized` lines.
pub fn format_voting(v: &VotingVector) -> String {
    let mut s = String::new();
    for (i, (r, n)) in v.raw.iter().zip(&v.normalized).enumerate() {
        writeln!(s, "{},{},{:.6},{:.6}", v.traj_id, i, r, n).unwrap();
    }
    s
}

/// `traj_id,cut_idx` lines.
pub fn format_cuts(traj_id: TrajId, cp: &CutPoints) -> String {
    let mut s = String::new();
    for c in cp.indices() {
        writeln!(s, "{traj_id},{c}").unwrap();
    }
    s
}
