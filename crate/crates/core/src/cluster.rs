//! Representative-based clustering with outlier detection.
//!
//! Each temporal partition is clustered on its own: subtrajectories are
//! visited by descending voting, well-supported ones become representatives
//! and pull in similar neighbours, everything else ends up an outlier.
//! [`refine_results`] then reconciles subtrajectories that were clustered in
//! more than one partition.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::SubtrajId;
use crate::similarity::{PairSim, SPRecord, STRecord};

pub use crate::model::ClusterParams;

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("partition {partition}: state for {sub_id} but the subtrajectory is not in the partition")]
    UnknownSubtrajectory { partition: usize, sub_id: SubtrajId },
    #[error("partition {partition}: {sub_id} is a member of {rep}, which is not a representative there")]
    DanglingMember { partition: usize, sub_id: SubtrajId, rep: SubtrajId },
}

/// Resolved per-partition thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Thresholds {
    pub alpha: f64,
    pub k: f64,
}

/// Mean and population standard deviation.
fn mean_std(v: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = v.clone().count();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = v.clone().sum::<f64>() / n as f64;
    let var = v.map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
    (mean, var.sqrt())
}

/// `alpha = mean(Sim) + alpha_sigma * std(Sim)` over all adjacency entries
/// and `k = mean(V) + k_sigma * std(V)` over the partition's subtrajectories.
pub fn resolve_thresholds(st: &[STRecord], sp: &[SPRecord], cp: &ClusterParams) -> Thresholds {
    let sims = sp.iter().flat_map(|r| r.adj.iter().map(|e| e.1));
    let alpha = if sp.iter().all(|r| r.adj.is_empty()) {
        0.0
    } else {
        let (m, s) = mean_std(sims);
        m + cp.alpha_sigma * s
    };
    let (m, s) = mean_std(st.iter().map(|r| r.v));
    Thresholds { alpha, k: m + cp.k_sigma * s }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SubtrajState {
    Repr,
    /// Member of `rep`'s cluster; `alpha` is the threshold it was admitted
    /// under.
    Cl { rep: SubtrajId, sim: f64, alpha: f64 },
    Out,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionClustering {
    pub partition: usize,
    pub thresholds: Thresholds,
    /// Representatives in promotion order.
    pub reps: Vec<SubtrajId>,
    /// One state per subtrajectory of the partition.
    pub states: BTreeMap<SubtrajId, SubtrajState>,
}

impl PartitionClustering {
    pub fn members(&self, rep: SubtrajId) -> Vec<(SubtrajId, f64)> {
        self.states
            .iter()
            .filter_map(|(id, s)| match s {
                SubtrajState::Cl { rep: r, sim, .. } if *r == rep => Some((*id, *sim)),
                _ => None,
            })
            .collect()
    }

    pub fn outliers(&self) -> Vec<SubtrajId> {
        self.states.iter().filter(|(_, s)| matches!(s, SubtrajState::Out)).map(|(id, _)| *id).collect()
    }
}

/// Greedy clustering of one partition.
///
/// Subtrajectories are visited by descending voting (ties by ascending id).
/// Anything already a representative or member is skipped; a voting below
/// `k` marks it an outlier; otherwise it becomes a representative and scans
/// its adjacency list, admitting unassigned or outlier neighbours with
/// `Sim >= alpha` and stealing members that are more similar to it than to
/// their current representative. Representatives are never absorbed.
pub fn cluster_partition(partition: usize, st: &[STRecord], sp: &[SPRecord], th: Thresholds) -> PartitionClustering {
    let adj: HashMap<SubtrajId, &[(SubtrajId, f64)]> = sp.iter().map(|r| (r.sub_id, r.adj.as_slice())).collect();
    let mut order: Vec<&STRecord> = st.iter().collect();
    order.sort_by(|a, b| b.v.total_cmp(&a.v).then(a.sub_id().cmp(&b.sub_id())));

    let mut state: HashMap<SubtrajId, SubtrajState> = HashMap::new();
    let mut reps = Vec::new();
    for rec in order {
        let id = rec.sub_id();
        if matches!(state.get(&id), Some(SubtrajState::Repr | SubtrajState::Cl { .. })) {
            continue;
        }
        if rec.v < th.k {
            state.insert(id, SubtrajState::Out);
            continue;
        }
        state.insert(id, SubtrajState::Repr);
        reps.push(id);
        for &(l, sim) in adj.get(&id).copied().unwrap_or(&[]) {
            match state.get(&l).copied() {
                Some(SubtrajState::Repr) => {}
                Some(SubtrajState::Cl { sim: current, .. }) => {
                    if sim > current {
                        state.insert(l, SubtrajState::Cl { rep: id, sim, alpha: th.alpha });
                    }
                }
                prev => {
                    if sim >= th.alpha {
                        state.insert(l, SubtrajState::Cl { rep: id, sim, alpha: th.alpha });
                    } else if prev.is_none() {
                        state.insert(l, SubtrajState::Out);
                    }
                }
            }
        }
    }
    let states = st
        .iter()
        .map(|r| (r.sub_id(), state.get(&r.sub_id()).copied().unwrap_or(SubtrajState::Out)))
        .collect();
    PartitionClustering { partition, thresholds: th, reps, states }
}

/// Final clustering over all partitions.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClusteringResult {
    /// Representative -> members with their similarity and admission alpha.
    pub clusters: BTreeMap<SubtrajId, Vec<Member>>,
    pub outliers: BTreeSet<SubtrajId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub sub_id: SubtrajId,
    pub sim: f64,
    pub alpha: f64,
}

impl ClusteringResult {
    pub fn cluster_count(&self) -> usize {
        self.clusters.len()
    }

    pub fn outlier_count(&self) -> usize {
        self.outliers.len()
    }

    /// Every sub id in the result with how many times it appears.
    pub fn occurrences(&self) -> BTreeMap<SubtrajId, usize> {
        let mut m = BTreeMap::new();
        for (rep, members) in &self.clusters {
            *m.entry(*rep).or_default() += 1;
            for mem in members {
                *m.entry(mem.sub_id).or_default() += 1;
            }
        }
        for o in &self.outliers {
            *m.entry(*o).or_default() += 1;
        }
        m
    }

    /// `cluster_id,representative_sub_id,member_sub_id,sim`; the
    /// representative is listed as its own member with similarity 1.
    pub fn clusters_csv(&self) -> String {
        let mut s = String::from("cluster_id,representative_sub_id,member_sub_id,sim\n");
        for (cid, (rep, members)) in self.clusters.iter().enumerate() {
            writeln!(s, "{cid},{rep},{rep},{:.6}", 1.0).unwrap();
            for m in members {
                writeln!(s, "{cid},{rep},{},{:.6}", m.sub_id, m.sim).unwrap();
            }
        }
        s
    }

    pub fn outliers_csv(&self) -> String {
        let mut s = String::from("sub_id\n");
        for o in &self.outliers {
            writeln!(s, "{o}").unwrap();
        }
        s
    }
}

/// Folds one subtrajectory's per-partition states in time order.
fn fold_states(a: SubtrajState, b: SubtrajState) -> SubtrajState {
    use SubtrajState::*;
    match (a, b) {
        (Repr, _) | (_, Repr) => Repr,
        (Cl { sim: sa, .. }, Cl { sim: sb, .. }) => {
            if sa > sb {
                a
            } else {
                b
            }
        }
        (c @ Cl { .. }, Out) | (Out, c @ Cl { .. }) => c,
        (Out, Out) => Out,
    }
}

/// Reconciles the per-partition clusterings. `partition_subs[p]` lists the
/// subtrajectories assigned to partition `p`. A subtrajectory that is a
/// representative anywhere stays a representative; clusters sharing a
/// representative merge; a member of two clusters keeps the one with the
/// larger similarity (the later partition on ties); outlier records are
/// dropped whenever another partition clustered the subtrajectory.
pub fn refine_results(
    clusterings: &[PartitionClustering],
    partition_subs: &[BTreeSet<SubtrajId>],
) -> Result<ClusteringResult, ClusterError> {
    let mut sorted: Vec<&PartitionClustering> = clusterings.iter().collect();
    sorted.sort_by_key(|c| c.partition);

    let mut folded: BTreeMap<SubtrajId, SubtrajState> = BTreeMap::new();
    for pc in sorted {
        let subs = partition_subs.get(pc.partition);
        for (&id, &s) in &pc.states {
            if !subs.is_some_and(|set| set.contains(&id)) {
                return Err(ClusterError::UnknownSubtrajectory { partition: pc.partition, sub_id: id });
            }
            if let SubtrajState::Cl { rep, .. } = s {
                if pc.states.get(&rep) != Some(&SubtrajState::Repr) {
                    return Err(ClusterError::DanglingMember { partition: pc.partition, sub_id: id, rep });
                }
            }
            folded.entry(id).and_modify(|prev| *prev = fold_states(*prev, s)).or_insert(s);
        }
    }

    let mut result = ClusteringResult::default();
    for (&id, s) in &folded {
        match *s {
            SubtrajState::Repr => {
                result.clusters.entry(id).or_default();
            }
            SubtrajState::Cl { rep, sim, alpha } => {
                result.clusters.entry(rep).or_default().push(Member { sub_id: id, sim, alpha });
            }
            SubtrajState::Out => {
                result.outliers.insert(id);
            }
        }
    }
    Ok(result)
}

/// Sum of member-to-representative similarities.
pub fn sscr(result: &ClusteringResult) -> f64 {
    result.clusters.values().flatten().map(|m| m.sim).sum()
}

/// Matching statistics of `(representative, member)` pairs.
pub trait PairLookup {
    fn pair(&self, a: SubtrajId, b: SubtrajId) -> Option<PairSim>;
    fn card(&self, id: SubtrajId) -> Option<usize>;
}

/// Root mean square of matched point distances between representatives and
/// their members. Zero, with a warning, when there are no matched pairs.
pub fn rmse(result: &ClusteringResult, lookup: &impl PairLookup) -> f64 {
    let (mut sq, mut n) = (0.0, 0usize);
    for (rep, members) in &result.clusters {
        for m in members {
            if let Some(p) = lookup.pair(*rep, m.sub_id) {
                sq += p.sq_dist_sum;
                n += p.matched;
            }
        }
    }
    if n == 0 {
        warn!("no matched representative-member pairs; RMSE reported as 0");
        return 0.0;
    }
    (sq / n as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Violation {
    pub rep: SubtrajId,
    pub member: SubtrajId,
    pub mean_dist: f64,
    pub bound: f64,
}

/// For every member whose matching covers its shorter side completely, the
/// mean matched distance must not exceed `eps_sp * (1 - alpha)`.
pub fn check_lemma1(result: &ClusteringResult, lookup: &impl PairLookup, eps_sp: f64) -> Vec<Lemma1Violation> {
    const TOL: f64 = 1e-9;
    let mut out = Vec::new();
    for (rep, members) in &result.clusters {
        for m in members {
            let (Some(p), Some(cr), Some(cm)) = (lookup.pair(*rep, m.sub_id), lookup.card(*rep), lookup.card(m.sub_id)) else {
                continue;
            };
            if p.matched == 0 || p.matched != cr.min(cm) {
                continue;
            }
            let mean_dist = p.dist_sum / p.matched as f64;
            let bound = eps_sp * (1.0 - m.alpha);
            if mean_dist > bound + TOL {
                out.push(Lemma1Violation { rep: *rep, member: m.sub_id, mean_dist, bound });
            }
        }
    }
    out
}
