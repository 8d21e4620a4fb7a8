//! Subtrajectory relations and weighted LCSS similarity.
//!
//! After segmentation each trajectory emits one [`STRecord`] per
//! subtrajectory and one [`STPRecord`] per `(subtrajectory, other trajectory)`
//! holding the nearest matched points found by the join. The similarity of
//! two subtrajectories is the best total proximity weight of a one-to-one,
//! order-preserving matching between their points, divided by the shorter
//! length.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::join::MatchInterval;
use crate::model::{SubtrajId, SubtrajRef, TrajId, Trajectory, Timestamp};
use crate::segment::{vote_weight, VotingVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct STRecord {
    pub sub: SubtrajRef,
    pub t_s: Timestamp,
    pub t_e: Timestamp,
    /// Mean raw vote over the subtrajectory's points.
    pub v: f64,
    pub card: usize,
}

impl STRecord {
    pub fn sub_id(&self) -> SubtrajId {
        self.sub.sub_id()
    }

    pub fn contains_time(&self, t: Timestamp) -> bool {
        (self.t_s..=self.t_e).contains(&t)
    }
}

/// A matched point pair seen from the reference subtrajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub ref_t: Timestamp,
    pub other_t: Timestamp,
    pub dist: f64,
}

impl MatchedPair {
    pub fn contribution(&self, eps_sp: f64) -> f64 {
        vote_weight(self.dist, eps_sp)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct STPRecord {
    pub sub_id: SubtrajId,
    pub other_traj: TrajId,
    /// Sorted by `(ref_t, other_t)`, no repeats.
    pub pairs: Vec<MatchedPair>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SPRecord {
    pub sub_id: SubtrajId,
    /// Sorted by sub id; every similarity is in `(0, 1]`.
    pub adj: Vec<(SubtrajId, f64)>,
}

impl SPRecord {
    pub fn sim_to(&self, other: SubtrajId) -> Option<f64> {
        self.adj.binary_search_by_key(&other, |e| e.0).ok().map(|k| self.adj[k].1)
    }
}

/// Builds the relations of one trajectory. Per-point nearest matches of
/// every interval are attributed to the subtrajectory containing the point.
pub fn emit_relations(
    traj: &Trajectory,
    subs: &[SubtrajRef],
    intervals: &[MatchInterval],
    voting: &VotingVector,
) -> (Vec<STRecord>, Vec<STPRecord>) {
    let st: Vec<STRecord> = subs
        .iter()
        .map(|s| STRecord {
            sub: *s,
            t_s: traj.point(s.first).t,
            t_e: traj.point(s.last).t,
            v: voting.range_voting(s.first, s.last),
            card: s.len(),
        })
        .collect();

    let mut stp: BTreeMap<(SubtrajId, TrajId), Vec<MatchedPair>> = BTreeMap::new();
    for iv in intervals {
        let other = iv.other_traj;
        for (k, nm) in iv.nearest.iter().enumerate() {
            let idx = iv.ref_range.0 + k;
            let s = subs.partition_point(|s| s.last < idx);
            debug_assert!(subs[s].contains(idx));
            stp.entry((subs[s].sub_id(), other)).or_default().push(MatchedPair {
                ref_t: traj.point(idx).t,
                other_t: nm.other_t,
                dist: nm.dist,
            });
        }
    }
    let stp = stp
        .into_iter()
        .map(|((sub_id, other_traj), mut pairs)| {
            pairs.sort_by_key(|p| (p.ref_t, p.other_t));
            pairs.dedup_by(|a, b| (a.ref_t, a.other_t) == (b.ref_t, b.other_t));
            STPRecord { sub_id, other_traj, pairs }
        })
        .collect();
    (st, stp)
}

/// Similarity of a subtrajectory pair with the matching behind it.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PairSim {
    pub sim: f64,
    /// Number of matched point pairs.
    pub matched: usize,
    pub dist_sum: f64,
    pub sq_dist_sum: f64,
}

/// Prefix-maximum Fenwick tree over ranks, remembering the arg-max.
struct PrefixMax {
    tree: Vec<(f64, usize)>,
}

impl PrefixMax {
    const NONE: (f64, usize) = (0.0, usize::MAX);

    fn new(n: usize) -> Self {
        Self { tree: vec![Self::NONE; n + 1] }
    }

    /// Best value among ranks `< rank`.
    fn query(&self, rank: usize) -> (f64, usize) {
        let mut best = Self::NONE;
        let mut i = rank;
        while i > 0 {
            if self.tree[i].0 > best.0 {
                best = self.tree[i];
            }
            i &= i - 1;
        }
        best
    }

    fn update(&mut self, rank: usize, val: (f64, usize)) {
        let mut i = rank + 1;
        while i < self.tree.len() {
            if val.0 > self.tree[i].0 {
                self.tree[i] = val;
            }
            i += i & i.wrapping_neg();
        }
    }
}

/// Maximum-weight matching of `(a_t, b_t, dist)` candidates that is strictly
/// increasing on both sides. Returns the chosen candidates in order.
fn best_chain(cands: &[(Timestamp, Timestamp, f64)], eps_sp: f64) -> Vec<usize> {
    if cands.is_empty() {
        return Vec::new();
    }
    let mut b_times: Vec<Timestamp> = cands.iter().map(|c| c.1).collect();
    b_times.sort_unstable();
    b_times.dedup();
    let rank = |t: Timestamp| b_times.binary_search(&t).unwrap();

    let mut fen = PrefixMax::new(b_times.len());
    let mut score = vec![0.0; cands.len()];
    let mut prev = vec![usize::MAX; cands.len()];
    let mut best = PrefixMax::NONE;
    let mut start = 0;
    while start < cands.len() {
        let mut end = start;
        while end < cands.len() && cands[end].0 == cands[start].0 {
            end += 1;
        }
        // All candidates sharing an `a` point read before any of them writes.
        for k in start..end {
            let (p, arg) = fen.query(rank(cands[k].1));
            score[k] = p + vote_weight(cands[k].2, eps_sp);
            prev[k] = arg;
        }
        for k in start..end {
            fen.update(rank(cands[k].1), (score[k], k));
            if score[k] > best.0 {
                best = (score[k], k);
            }
        }
        start = end;
    }
    let mut chain = Vec::new();
    let mut k = best.1;
    while k != usize::MAX {
        chain.push(k);
        k = prev[k];
    }
    chain.reverse();
    chain
}

/// Similarity of `a` and `b` from the nearest matches recorded in both
/// directions. `ab` holds `a`'s matches against `b`'s trajectory and `ba`
/// the reverse. The result does not depend on argument order.
pub fn pair_similarity(a: &STRecord, b: &STRecord, ab: Option<&STPRecord>, ba: Option<&STPRecord>, eps_sp: f64) -> PairSim {
    if a.sub_id() > b.sub_id() {
        return pair_similarity(b, a, ba, ab, eps_sp);
    }
    let mut cands: Vec<(Timestamp, Timestamp, f64)> = Vec::new();
    if let Some(ab) = ab {
        cands.extend(ab.pairs.iter().filter(|p| b.contains_time(p.other_t) && a.contains_time(p.ref_t)).map(|p| (p.ref_t, p.other_t, p.dist)));
    }
    if let Some(ba) = ba {
        cands.extend(ba.pairs.iter().filter(|p| a.contains_time(p.other_t) && b.contains_time(p.ref_t)).map(|p| (p.other_t, p.ref_t, p.dist)));
    }
    cands.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)).then(x.2.total_cmp(&y.2)));
    cands.dedup_by(|x, y| (x.0, x.1) == (y.0, y.1));

    let chain = best_chain(&cands, eps_sp);
    let mut out = PairSim::default();
    let mut total = 0.0;
    for &k in &chain {
        let d = cands[k].2;
        total += vote_weight(d, eps_sp);
        out.matched += 1;
        out.dist_sum += d;
        out.sq_dist_sum += d * d;
    }
    out.sim = (total / a.card.min(b.card) as f64).clamp(0.0, 1.0);
    out
}

/// Subtrajectories of every trajectory, sorted by start time.
#[derive(Debug, Clone, Default)]
pub struct SegmentationIndex {
    by_traj: BTreeMap<TrajId, Vec<STRecord>>,
}

impl SegmentationIndex {
    pub fn new(records: impl IntoIterator<Item = STRecord>) -> Self {
        let mut by_traj: BTreeMap<TrajId, Vec<STRecord>> = BTreeMap::new();
        for r in records {
            by_traj.entry(r.sub.traj_id).or_default().push(r);
        }
        for v in by_traj.values_mut() {
            v.sort_by_key(|r| r.t_s);
        }
        Self { by_traj }
    }

    /// The subtrajectory of `traj` containing time `t`.
    pub fn containing(&self, traj: TrajId, t: Timestamp) -> Option<&STRecord> {
        let subs = self.by_traj.get(&traj)?;
        let k = subs.partition_point(|r| r.t_e < t);
        subs.get(k).filter(|r| r.contains_time(t))
    }

    pub fn get(&self, id: SubtrajId) -> Option<&STRecord> {
        self.by_traj.get(&id.traj)?.iter().find(|r| r.sub_id() == id)
    }

    pub fn records(&self) -> impl Iterator<Item = &STRecord> {
        self.by_traj.values().flatten()
    }
}

/// SP relation of one partition plus the matching statistics of every
/// similar pair, keyed by `(smaller id, larger id)`.
#[derive(Debug, Clone, Default)]
pub struct PartitionSimilarity {
    pub sp: Vec<SPRecord>,
    pub pairs: BTreeMap<(SubtrajId, SubtrajId), PairSim>,
}

impl PartitionSimilarity {
    pub fn pair(&self, a: SubtrajId, b: SubtrajId) -> Option<&PairSim> {
        self.pairs.get(&(a.min(b), a.max(b)))
    }

    pub fn sim(&self, a: SubtrajId, b: SubtrajId) -> f64 {
        self.pair(a, b).map_or(0.0, |p| p.sim)
    }
}

/// Computes the similarity between every pair of the partition's
/// subtrajectories that share a matched point.
pub fn build_sp(
    st: &[STRecord],
    stp: &BTreeMap<(SubtrajId, TrajId), STPRecord>,
    index: &SegmentationIndex,
    eps_sp: f64,
) -> PartitionSimilarity {
    let members: BTreeSet<SubtrajId> = st.iter().map(STRecord::sub_id).collect();
    let mut candidates: BTreeSet<(SubtrajId, SubtrajId)> = BTreeSet::new();
    for a in st {
        let a_id = a.sub_id();
        for (_, rec) in stp.range((a_id, TrajId(0))..=(a_id, TrajId(u64::MAX))) {
            let mut last: Option<&STRecord> = None;
            for p in &rec.pairs {
                if last.is_some_and(|b| b.contains_time(p.other_t)) {
                    continue;
                }
                last = index.containing(rec.other_traj, p.other_t);
                if let Some(b) = last {
                    let b_id = b.sub_id();
                    if b_id != a_id && members.contains(&b_id) {
                        candidates.insert((a_id.min(b_id), a_id.max(b_id)));
                    }
                }
            }
        }
    }

    let mut pairs = BTreeMap::new();
    let mut adj: BTreeMap<SubtrajId, Vec<(SubtrajId, f64)>> = BTreeMap::new();
    for (a_id, b_id) in candidates {
        let (Some(a), Some(b)) = (index.get(a_id), index.get(b_id)) else { continue };
        let ps = pair_similarity(a, b, stp.get(&(a_id, b_id.traj)), stp.get(&(b_id, a_id.traj)), eps_sp);
        if ps.sim > 0.0 {
            adj.entry(a_id).or_default().push((b_id, ps.sim));
            adj.entry(b_id).or_default().push((a_id, ps.sim));
            pairs.insert((a_id, b_id), ps);
        }
    }
    let sp = adj
        .into_iter()
        .map(|(sub_id, mut adj)| {
            adj.sort_by_key(|e| e.0);
            SPRecord { sub_id, adj }
        })
        .collect();
    PartitionSimilarity { sp, pairs }
}

/// `sub_id|other_id:sim,other_id:sim,...`
pub fn format_sp(sp: &[SPRecord]) -> String {
    let mut s = String::new();
    for r in sp {
        let adj: Vec<String> = r.adj.iter().map(|(o, sim)| format!("{o}:{sim:.6}")).collect();
        writeln!(s, "{}|{}", r.sub_id, adj.join(",")).unwrap();
    }
    s
}

/// `sub_id,t_s,t_e,v,card`
pub fn format_st(st: &[STRecord]) -> String {
    let mut s = String::new();
    for r in st {
        writeln!(s, "{},{},{},{:.6},{}", r.sub_id(), r.t_s, r.t_e, r.v, r.card).unwrap();
    }
    s
}

/// `sub_id,other_traj|ref_t:other_t:dist,...`
pub fn format_stp<'a>(stp: impl IntoIterator<Item = &'a STPRecord>) -> String {
    let mut s = String::new();
    for r in stp {
        let pairs: Vec<String> = r.pairs.iter().map(|p| format!("{}:{}:{:.6}", p.ref_t, p.other_t, p.dist)).collect();
        writeln!(s, "{},{}|{}", r.sub_id, r.other_traj, pairs.join(",")).unwrap();
    }
    s
}
