//! Subtrajectory self-join.
//!
//! The join runs in two steps. [`point_join`] finds, inside one temporal
//! partition, every pair of points from different trajectories that lie
//! within `eps_sp` and `eps_t` of each other. After the matches are grouped
//! by reference trajectory, [`refine_matches`] turns them into maximal pairs
//! of index ranges `(I, J)` where every point of `I` has a match in `J` and
//! every point of `J` has a match in `I`, keeping those whose both sides last
//! at least `delta_t`.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::model::{spatial_dist, Dataset, Point, Timestamp, TrajId, Trajectory};

pub use crate::model::JoinParams;

/// A point addressed by trajectory and index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PointRef {
    pub traj: TrajId,
    pub idx: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointMatch {
    pub reference: PointRef,
    pub other: PointRef,
    pub dist: f64,
    pub dt: i64,
}

impl PointMatch {
    fn key(&self) -> (PointRef, PointRef) {
        (self.reference, self.other)
    }
}

/// A point copy held by one partition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartPoint {
    pub point: Point,
    /// Index within the parent trajectory.
    pub idx: u32,
    /// Whether this partition owns the point (halo copies are not primary).
    pub primary: bool,
}

impl PartPoint {
    pub fn point_ref(&self) -> PointRef {
        PointRef { traj: self.point.traj_id, idx: self.idx }
    }
}

/// Uniform grid over one partition's points. Cells are `cell_size` wide and
/// each cell keeps its points sorted by time.
#[derive(Debug, Clone)]
pub struct GridIndex {
    cell_size: f64,
    cells: HashMap<(i64, i64), Vec<u32>>,
}

impl GridIndex {
    pub fn build(points: &[PartPoint], cell_size: f64) -> Self {
        assert!(cell_size > 0.0, "cell size must be positive");
        let mut cells: HashMap<(i64, i64), Vec<u32>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(cell_of(&p.point, cell_size)).or_default().push(i as u32);
        }
        for list in cells.values_mut() {
            list.sort_by_key(|&i| (points[i as usize].point.t, i));
        }
        Self { cell_size, cells }
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn len(&self) -> usize {
        self.cells.values().map(Vec::len).sum()
    }

    pub fn cell_of(&self, p: &Point) -> (i64, i64) {
        cell_of(p, self.cell_size)
    }

    pub fn cell(&self, key: (i64, i64)) -> &[u32] {
        self.cells.get(&key).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Calls `f(i, dist)` for every indexed point `i` with
    /// `dist(center, i) <= eps_sp` and `|t - center.t| <= eps_t`.
    /// `eps_sp` must not exceed the cell size.
    pub fn range_query(&self, points: &[PartPoint], center: &Point, eps_sp: f64, eps_t: i64, mut f: impl FnMut(u32, f64)) {
        debug_assert!(eps_sp <= self.cell_size);
        let (cx, cy) = self.cell_of(center);
        for dx in -1..=1 {
            for dy in -1..=1 {
                let list = self.cell((cx + dx, cy + dy));
                let start = list.partition_point(|&i| points[i as usize].point.t < center.t - eps_t);
                for &i in &list[start..] {
                    let p = &points[i as usize].point;
                    if p.t > center.t + eps_t {
                        break;
                    }
                    let d = spatial_dist(center, p);
                    if d <= eps_sp {
                        f(i, d);
                    }
                }
            }
        }
    }
}

fn cell_of(p: &Point, cell_size: f64) -> (i64, i64) {
    ((p.x / cell_size).floor() as i64, (p.y / cell_size).floor() as i64)
}

/// Emits every match whose reference point is primary in this partition and
/// whose other point belongs to a different trajectory. Output is sorted by
/// `(reference, other)`.
pub fn point_join(points: &[PartPoint], index: &GridIndex, params: &JoinParams) -> Vec<PointMatch> {
    let eps_t = params.eps_t_secs();
    let mut out = Vec::new();
    for p in points.iter().filter(|p| p.primary) {
        index.range_query(points, &p.point, params.eps_sp, eps_t, |i, dist| {
            let q = &points[i as usize];
            if q.point.traj_id != p.point.traj_id {
                out.push(PointMatch {
                    reference: p.point_ref(),
                    other: q.point_ref(),
                    dist,
                    dt: (p.point.t - q.point.t).abs(),
                });
            }
        });
    }
    sort_dedup_matches(&mut out);
    out
}

/// Sorts by `(reference, other)` and drops repeated pairs.
pub fn sort_dedup_matches(matches: &mut Vec<PointMatch>) {
    matches.sort_by_key(|m| m.key());
    matches.dedup_by(|a, b| a.key() == b.key());
}

/// Nearest matched point of the other trajectory for one reference point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NearestMatch {
    pub other_idx: usize,
    pub other_t: Timestamp,
    pub dist: f64,
    pub dt: i64,
}

/// A maximal pair of mutually matching index ranges (inclusive, 0-based).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchInterval {
    pub ref_traj: TrajId,
    pub other_traj: TrajId,
    pub ref_range: (usize, usize),
    pub other_range: (usize, usize),
    /// One entry per reference point in `ref_range`, in index order.
    pub nearest: Vec<NearestMatch>,
}

impl MatchInterval {
    pub fn key(&self) -> (TrajId, TrajId, (usize, usize), (usize, usize)) {
        (self.ref_traj, self.other_traj, self.ref_range, self.other_range)
    }

    pub fn contains_ref(&self, idx: usize) -> bool {
        (self.ref_range.0..=self.ref_range.1).contains(&idx)
    }

    pub fn nearest_at(&self, idx: usize) -> Option<&NearestMatch> {
        self.contains_ref(idx).then(|| &self.nearest[idx - self.ref_range.0])
    }

    /// `ref_id,other_id,ref_first,ref_last,other_first,other_last`
    pub fn to_record(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.ref_traj, self.other_traj, self.ref_range.0, self.ref_range.1, self.other_range.0, self.other_range.1
        )
    }
}

pub fn format_intervals(intervals: &[MatchInterval]) -> String {
    let mut s = String::new();
    for iv in intervals {
        writeln!(s, "{}", iv.to_record()).unwrap();
    }
    s
}

/// A point-level match between two trajectories, by index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndexMatch {
    pub ref_idx: u32,
    pub other_idx: u32,
    pub dist: f64,
    pub dt: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Region {
    i0: usize,
    i1: usize,
    j0: usize,
    j1: usize,
}

/// Maximal runs of `true` in `live`, offset by `base`.
fn runs(live: &[bool], base: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (k, &l) in live.iter().enumerate() {
        match (l, start) {
            (true, None) => start = Some(k),
            (false, Some(s)) => {
                out.push((base + s, base + k - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((base + s, base + live.len() - 1));
    }
    out
}

fn run_containing(runs: &[(usize, usize)], x: usize) -> Option<usize> {
    let k = runs.partition_point(|r| r.1 < x);
    (k < runs.len() && runs[k].0 <= x).then_some(k)
}

/// Maximal `(I, J)` range pairs for one trajectory pair, before the duration
/// filter. Starting from the whole index space, points without a partner
/// inside the current region are dropped and the region splits into linked
/// runs, until every region is self-consistent.
pub fn matching_ranges(n_ref: usize, n_other: usize, matches: &[IndexMatch]) -> Vec<((usize, usize), (usize, usize))> {
    if matches.is_empty() || n_ref == 0 || n_other == 0 {
        return Vec::new();
    }
    let mut adj_ref: Vec<Vec<usize>> = vec![Vec::new(); n_ref];
    let mut adj_other: Vec<Vec<usize>> = vec![Vec::new(); n_other];
    for m in matches {
        adj_ref[m.ref_idx as usize].push(m.other_idx as usize);
        adj_other[m.other_idx as usize].push(m.ref_idx as usize);
    }
    for a in adj_ref.iter_mut().chain(adj_other.iter_mut()) {
        a.sort_unstable();
        a.dedup();
    }
    let has_in = |adj: &[usize], lo: usize, hi: usize| {
        let k = adj.partition_point(|&x| x < lo);
        k < adj.len() && adj[k] <= hi
    };

    let mut out = Vec::new();
    let mut work = vec![Region { i0: 0, i1: n_ref - 1, j0: 0, j1: n_other - 1 }];
    while let Some(r) = work.pop() {
        let live_i: Vec<bool> = (r.i0..=r.i1).map(|i| has_in(&adj_ref[i], r.j0, r.j1)).collect();
        let live_j: Vec<bool> = (r.j0..=r.j1).map(|j| has_in(&adj_other[j], r.i0, r.i1)).collect();
        if live_i.iter().all(|&l| l) && live_j.iter().all(|&l| l) {
            out.push(((r.i0, r.i1), (r.j0, r.j1)));
            continue;
        }
        let runs_i = runs(&live_i, r.i0);
        let runs_j = runs(&live_j, r.j0);
        let mut linked = BTreeSet::new();
        for (ki, &(a, b)) in runs_i.iter().enumerate() {
            for partners in &adj_ref[a..=b] {
                for &j in partners {
                    if let Some(kj) = run_containing(&runs_j, j) {
                        linked.insert((ki, kj));
                    }
                }
            }
        }
        for (ki, kj) in linked {
            let (i0, i1) = runs_i[ki];
            let (j0, j1) = runs_j[kj];
            work.push(Region { i0, i1, j0, j1 });
        }
    }
    out.sort_unstable();
    out
}

/// Refines the point matches between `reference` and `other` into
/// [`MatchInterval`]s lasting at least `delta_t` on both sides.
pub fn refine_pair(reference: &Trajectory, other: &Trajectory, matches: &[IndexMatch], params: &JoinParams) -> Vec<MatchInterval> {
    let ranges = matching_ranges(reference.len(), other.len(), matches);
    if ranges.is_empty() {
        return Vec::new();
    }
    let mut by_ref: Vec<Vec<&IndexMatch>> = vec![Vec::new(); reference.len()];
    for m in matches {
        by_ref[m.ref_idx as usize].push(m);
    }
    ranges
        .into_iter()
        .filter(|&((i0, i1), (j0, j1))| {
            reference.span_duration(i0, i1) as f64 >= params.delta_t && other.span_duration(j0, j1) as f64 >= params.delta_t
        })
        .map(|((i0, i1), (j0, j1))| {
            let nearest = (i0..=i1)
                .map(|i| {
                    let best = by_ref[i]
                        .iter()
                        .filter(|m| (j0..=j1).contains(&(m.other_idx as usize)))
                        .min_by(|a, b| {
                            a.dist.total_cmp(&b.dist).then(a.dt.cmp(&b.dt)).then(a.other_idx.cmp(&b.other_idx))
                        })
                        .expect("every point of a matching range has a partner");
                    NearestMatch {
                        other_idx: best.other_idx as usize,
                        other_t: other.point(best.other_idx as usize).t,
                        dist: best.dist,
                        dt: best.dt,
                    }
                })
                .collect();
            MatchInterval {
                ref_traj: reference.id(),
                other_traj: other.id(),
                ref_range: (i0, i1),
                other_range: (j0, j1),
                nearest,
            }
        })
        .collect()
}

/// Refines all matches of one reference trajectory. `matches` must all have
/// `reference` as their reference trajectory; order does not matter.
pub fn refine_matches(reference: &Trajectory, dataset: &Dataset, matches: &[PointMatch], params: &JoinParams) -> Vec<MatchInterval> {
    let mut by_other: std::collections::BTreeMap<TrajId, Vec<IndexMatch>> = Default::default();
    for m in matches {
        debug_assert_eq!(m.reference.traj, reference.id());
        by_other.entry(m.other.traj).or_default().push(IndexMatch {
            ref_idx: m.reference.idx,
            other_idx: m.other.idx,
            dist: m.dist,
            dt: m.dt,
        });
    }
    let mut out = Vec::new();
    for (other_id, ms) in by_other {
        if other_id == reference.id() {
            continue;
        }
        let Some(other) = dataset.get(other_id) else { continue };
        out.extend(refine_pair(reference, other, &ms, params));
    }
    out
}
