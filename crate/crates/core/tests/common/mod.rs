//! Independent oracles and scene builders shared by the integration tests.
#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use subclust_core::join::{MatchInterval, NearestMatch};
use subclust_core::model::{Dataset, JoinParams, Point, TrajId, Trajectory};
use subclust_core::similarity::{STPRecord, STRecord};

pub type IntervalKey = (TrajId, TrajId, (usize, usize), (usize, usize));

/// Quadratic join oracle. For every ordered trajectory pair it lists all
/// point matches directly, then enumerates every contiguous other-side range
/// `J`. Reference points with a partner in `J` form runs; a run `I` pairs
/// with `J` when every point of `J` has a partner in `I`. Pairs contained in
/// a larger valid pair are dropped, then the duration filter applies.
pub fn brute_force_intervals(ds: &Dataset, p: &JoinParams) -> BTreeMap<IntervalKey, Vec<NearestMatch>> {
    let eps_t = p.eps_t.floor() as i64;
    let mut out = BTreeMap::new();
    for r in ds.trajectories() {
        for s in ds.trajectories() {
            if r.id() == s.id() {
                continue;
            }
            let (n, m) = (r.len(), s.len());
            let mut adj = vec![vec![false; m]; n];
            let mut any = false;
            for i in 0..n {
                for j in 0..m {
                    let (a, b) = (r.point(i), s.point(j));
                    let d = (a.x - b.x).hypot(a.y - b.y);
                    if d <= p.eps_sp && (a.t - b.t).abs() <= eps_t {
                        adj[i][j] = true;
                        any = true;
                    }
                }
            }
            if !any {
                continue;
            }
            let mut valid: Vec<((usize, usize), (usize, usize))> = Vec::new();
            for j0 in 0..m {
                let mut ok = vec![false; n];
                for j1 in j0..m {
                    for (i, o) in ok.iter_mut().enumerate() {
                        *o |= adj[i][j1];
                    }
                    let mut i = 0;
                    while i < n {
                        if !ok[i] {
                            i += 1;
                            continue;
                        }
                        let i0 = i;
                        while i < n && ok[i] {
                            i += 1;
                        }
                        let i1 = i - 1;
                        if (j0..=j1).all(|j| (i0..=i1).any(|i| adj[i][j])) {
                            valid.push(((i0, i1), (j0, j1)));
                        }
                    }
                }
            }
            let inside = |a: &((usize, usize), (usize, usize)), b: &((usize, usize), (usize, usize))| {
                a != b && b.0 .0 <= a.0 .0 && a.0 .1 <= b.0 .1 && b.1 .0 <= a.1 .0 && a.1 .1 <= b.1 .1
            };
            for v in &valid {
                if valid.iter().any(|w| inside(v, w)) {
                    continue;
                }
                let ((i0, i1), (j0, j1)) = *v;
                let dur_r = r.point(i1).t - r.point(i0).t;
                let dur_s = s.point(j1).t - s.point(j0).t;
                if (dur_r as f64) < p.delta_t || (dur_s as f64) < p.delta_t {
                    continue;
                }
                let nearest = (i0..=i1)
                    .map(|i| {
                        let a = r.point(i);
                        let mut best: Option<NearestMatch> = None;
                        for j in j0..=j1 {
                            if !adj[i][j] {
                                continue;
                            }
                            let b = s.point(j);
                            let cand = NearestMatch { other_idx: j, other_t: b.t, dist: (a.x - b.x).hypot(a.y - b.y), dt: (a.t - b.t).abs() };
                            let better = match &best {
                                None => true,
                                Some(c) => (cand.dist, cand.dt, cand.other_idx) < (c.dist, c.dt, c.other_idx),
                            };
                            if better {
                                best = Some(cand);
                            }
                        }
                        best.unwrap()
                    })
                    .collect();
                out.insert((r.id(), s.id(), (i0, i1), (j0, j1)), nearest);
            }
        }
    }
    out
}

pub fn interval_map(intervals: &[MatchInterval]) -> BTreeMap<IntervalKey, Vec<NearestMatch>> {
    intervals.iter().map(|iv| (iv.key(), iv.nearest.clone())).collect()
}

/// Weighted LCSS by dynamic programming over the distinct timestamps of
/// both sides; a cell scores `1 - d/eps` when the pair was matched (keeping
/// the closest match per timestamp pair).
pub fn lcss_oracle(a: &STRecord, b: &STRecord, ab: Option<&STPRecord>, ba: Option<&STPRecord>, eps: f64) -> f64 {
    let mut w: BTreeMap<(i64, i64), f64> = BTreeMap::new();
    let mut put = |ta: i64, tb: i64, d: f64| {
        if a.contains_time(ta) && b.contains_time(tb) {
            let v = (1.0 - d / eps).max(0.0);
            let e = w.entry((ta, tb)).or_insert(v);
            *e = e.max(v);
        }
    };
    for p in ab.map(|r| r.pairs.as_slice()).unwrap_or(&[]) {
        put(p.ref_t, p.other_t, p.dist);
    }
    for p in ba.map(|r| r.pairs.as_slice()).unwrap_or(&[]) {
        put(p.other_t, p.ref_t, p.dist);
    }
    let mut ta: Vec<i64> = w.keys().map(|k| k.0).collect();
    let mut tb: Vec<i64> = w.keys().map(|k| k.1).collect();
    ta.sort_unstable();
    ta.dedup();
    tb.sort_unstable();
    tb.dedup();
    let mut dp = vec![vec![0.0f64; tb.len() + 1]; ta.len() + 1];
    for i in 1..=ta.len() {
        for j in 1..=tb.len() {
            let mut best = dp[i - 1][j].max(dp[i][j - 1]);
            if let Some(v) = w.get(&(ta[i - 1], tb[j - 1])) {
                best = best.max(dp[i - 1][j - 1] + v);
            }
            dp[i][j] = best;
        }
    }
    (dp[ta.len()][tb.len()] / a.card.min(b.card) as f64).clamp(0.0, 1.0)
}

/// A small scene of meandering trajectories packed into a box so that they
/// keep meeting, with irregular sampling and staggered starts.
pub fn small_scene(seed: u64, max_points: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_traj = rng.random_range(2..=6);
    let per = (max_points / n_traj).max(3);
    let mut trajs = Vec::new();
    for k in 0..n_traj {
        let id = TrajId(k as u64 + 1);
        let len = rng.random_range(3..=per);
        let mut t: i64 = rng.random_range(0..20);
        let (mut x, mut y) = (rng.random_range(0.0..12.0), rng.random_range(0.0..12.0));
        let mut pts = Vec::with_capacity(len);
        for _ in 0..len {
            pts.push(Point::new(id, t, x, y));
            t += rng.random_range(1..=6);
            x += rng.random_range(-3.0..3.0);
            y += rng.random_range(-3.0..3.0);
        }
        trajs.push(Trajectory::new(id, pts).unwrap());
    }
    Dataset::new(trajs).unwrap()
}
