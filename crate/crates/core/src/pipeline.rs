//! End-to-end orchestration over a worker pool.
//!
//! Stages run one after another with a barrier in between:
//!
//! 1. `join`: points are routed to temporal partitions (with an `eps_t`
//!    halo) and joined per partition.
//! 2. `rse`: matches are grouped by reference trajectory, refined into
//!    matching intervals, segmented, and turned into relations.
//! 3. `similarity`: subtrajectories are regrouped by partition and the SP
//!    relation is built per partition.
//! 4. `clustering`: thresholds are resolved and each partition clustered.
//! 5. `refine`: per-partition states are reconciled into one result.
//!
//! Work units within a stage are independent and gathered in a fixed order,
//! so results do not depend on the number of workers.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::{
    check_lemma1, cluster_partition, refine_results, resolve_thresholds, rmse, sscr, ClusteringResult, Lemma1Violation,
    PairLookup, PartitionClustering,
};
use crate::config::{ConfigError, PipelineConfig};
use crate::join::{format_intervals, point_join, refine_matches, sort_dedup_matches, GridIndex, MatchInterval, PartPoint, PointMatch};
use crate::model::{Dataset, JoinParams, SubtrajId, SubtrajRef, TrajId};
use crate::partition::{build_partitioning, PartitionError, TemporalPartitioning};
use crate::segment::{format_cuts, format_voting, segment_trajectory, Segmentation};
use crate::similarity::{build_sp, emit_relations, format_sp, format_st, format_stp, PairSim, PartitionSimilarity, STPRecord, STRecord, SegmentationIndex};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("partitioning failed: {0}")]
    Partition(#[from] PartitionError),
    #[error("stage {stage}{}{}: {message}", .partition.map(|p| format!(", partition {p}")).unwrap_or_default(), .traj.map(|t| format!(", trajectory {t}")).unwrap_or_default())]
    Stage { stage: &'static str, partition: Option<usize>, traj: Option<TrajId>, message: String },
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl PipelineError {
    /// Configuration problems map to exit code 1, everything else to 2.
    pub fn is_config_error(&self) -> bool {
        matches!(self, PipelineError::Config(_) | PipelineError::Partition(PartitionError::ZeroPartitions | PartitionError::BadFraction(_) | PartitionError::Degenerate { .. }))
    }
}

/// Wall-clock seconds per stage, in total and per partition where the stage
/// is partitioned.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub join: f64,
    pub rse: f64,
    pub similarity: f64,
    pub clustering: f64,
    pub refine: f64,
    pub total: f64,
    pub join_per_partition: Vec<f64>,
    pub similarity_per_partition: Vec<f64>,
    pub clustering_per_partition: Vec<f64>,
}

impl StageTimings {
    pub fn report(&self) -> String {
        let mut s = String::new();
        for (k, v) in [
            ("join", self.join),
            ("rse", self.rse),
            ("similarity", self.similarity),
            ("clustering", self.clustering),
            ("refine", self.refine),
            ("total", self.total),
        ] {
            writeln!(s, "{k} = {v:.6}").unwrap();
        }
        for (name, per) in [
            ("join", &self.join_per_partition),
            ("similarity", &self.similarity_per_partition),
            ("clustering", &self.clustering_per_partition),
        ] {
            for (p, v) in per.iter().enumerate() {
                writeln!(s, "{name}.partition.{p} = {v:.6}").unwrap();
            }
        }
        s
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub sscr: f64,
    pub rmse: f64,
    pub cluster_count: usize,
    pub outlier_count: usize,
    pub subtrajectory_count: usize,
    pub lemma1_violations: usize,
    pub point_matches: usize,
    pub match_intervals: usize,
}

impl Metrics {
    pub fn report(&self) -> String {
        format!(
            "sscr = {:.6}\nrmse = {:.6}\ncluster_count = {}\noutlier_count = {}\nsubtrajectory_count = {}\nlemma1_violations = {}\npoint_matches = {}\nmatch_intervals = {}\n",
            self.sscr,
            self.rmse,
            self.cluster_count,
            self.outlier_count,
            self.subtrajectory_count,
            self.lemma1_violations,
            self.point_matches,
            self.match_intervals
        )
    }
}

/// Matching statistics of every similar pair, merged over partitions.
#[derive(Debug, Clone, Default)]
pub struct PairIndex {
    pub pairs: BTreeMap<(SubtrajId, SubtrajId), PairSim>,
    pub cards: HashMap<SubtrajId, usize>,
}

impl PairLookup for PairIndex {
    fn pair(&self, a: SubtrajId, b: SubtrajId) -> Option<PairSim> {
        self.pairs.get(&(a.min(b), a.max(b))).copied()
    }

    fn card(&self, id: SubtrajId) -> Option<usize> {
        self.cards.get(&id).copied()
    }
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub join_params: JoinParams,
    pub partitioning: TemporalPartitioning,
    pub intervals: Vec<MatchInterval>,
    pub segmentations: Vec<Segmentation>,
    pub st: Vec<STRecord>,
    pub stp: BTreeMap<(SubtrajId, TrajId), STPRecord>,
    pub similarities: Vec<PartitionSimilarity>,
    pub clusterings: Vec<PartitionClustering>,
    pub result: ClusteringResult,
    pub pairs: PairIndex,
    pub lemma1: Vec<Lemma1Violation>,
    pub metrics: Metrics,
    pub timings: StageTimings,
}

impl RunOutput {
    pub fn subtrajectories(&self) -> impl Iterator<Item = &SubtrajRef> {
        self.segmentations.iter().flat_map(|s| s.subtrajectories.iter())
    }
}

fn secs(start: Instant) -> f64 {
    start.elapsed().as_secs_f64()
}

/// Runs every stage on `dataset`.
pub fn run_pipeline(dataset: &Dataset, cfg: &PipelineConfig) -> Result<RunOutput, PipelineError> {
    cfg.validate()?;
    let manifest = dataset
        .manifest()
        .ok_or(PipelineError::Stage { stage: "ingest", partition: None, traj: None, message: "dataset is empty".into() })?;
    let jp = cfg.resolve_join_params(&manifest)?;
    info!("join parameters: eps_sp={:.6} eps_t={:.3} delta_t={:.3}", jp.eps_sp, jp.eps_t, jp.delta_t);
    let tp = build_partitioning(dataset, cfg.partitions, cfg.sample_fraction, cfg.seed)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build().map_err(|e| PipelineError::Stage {
        stage: "setup",
        partition: None,
        traj: None,
        message: e.to_string(),
    })?;
    pool.install(|| run_stages(dataset, cfg, jp, tp))
}

/// Per-trajectory output of the join, segmentation and record-building stages.
type TrajStages = (Vec<MatchInterval>, Segmentation, Vec<STRecord>, Vec<STPRecord>);

fn run_stages(dataset: &Dataset, cfg: &PipelineConfig, jp: JoinParams, tp: TemporalPartitioning) -> Result<RunOutput, PipelineError> {
    let started = Instant::now();
    let mut timings = StageTimings::default();
    let n_parts = tp.partition_count();

    // join
    let t = Instant::now();
    let halo = jp.eps_t_secs();
    let mut part_points: Vec<Vec<PartPoint>> = vec![Vec::new(); n_parts];
    for traj in dataset.trajectories() {
        for (idx, p) in traj.points().iter().enumerate() {
            for copy in tp.assign_point(p.t, halo) {
                part_points[copy.partition].push(PartPoint { point: *p, idx: idx as u32, primary: copy.primary });
            }
        }
    }
    let joined: Vec<(Vec<PointMatch>, f64)> = part_points
        .par_iter()
        .map(|pts| {
            let t = Instant::now();
            let index = GridIndex::build(pts, jp.eps_sp);
            let m = point_join(pts, &index, &jp);
            (m, secs(t))
        })
        .collect();
    drop(part_points);
    timings.join_per_partition = joined.iter().map(|j| j.1).collect();
    let mut matches: Vec<PointMatch> = joined.into_iter().flat_map(|j| j.0).collect();
    sort_dedup_matches(&mut matches);
    let point_matches = matches.len();
    timings.join = secs(t);

    // rse: group by reference trajectory, refine, segment, emit relations
    let t = Instant::now();
    let mut by_traj: HashMap<TrajId, (usize, usize)> = HashMap::new();
    let mut start = 0;
    while start < matches.len() {
        let id = matches[start].reference.traj;
        let end = start + matches[start..].partition_point(|m| m.reference.traj == id);
        by_traj.insert(id, (start, end));
        start = end;
    }
    let per_traj: Vec<Result<TrajStages, PipelineError>> = dataset
        .trajectories()
        .par_iter()
        .map(|traj| {
            let (s, e) = by_traj.get(&traj.id()).copied().unwrap_or((0, 0));
            let intervals = refine_matches(traj, dataset, &matches[s..e], &jp);
            let seg = segment_trajectory(traj, &intervals, jp.eps_sp, cfg.detector, &cfg.seg);
            if seg.subtrajectories.iter().map(SubtrajRef::len).sum::<usize>() != traj.len() {
                return Err(PipelineError::Stage {
                    stage: "rse",
                    partition: None,
                    traj: Some(traj.id()),
                    message: "segmentation does not cover the trajectory".into(),
                });
            }
            let (st, stp) = emit_relations(traj, &seg.subtrajectories, &intervals, &seg.voting);
            Ok((intervals, seg, st, stp))
        })
        .collect();
    drop(matches);
    let mut intervals = Vec::new();
    let mut segmentations = Vec::new();
    let mut st_all = Vec::new();
    let mut stp = BTreeMap::new();
    for r in per_traj {
        let (iv, seg, st, stps) = r?;
        intervals.extend(iv);
        segmentations.push(seg);
        st_all.extend(st);
        for rec in stps {
            stp.insert((rec.sub_id, rec.other_traj), rec);
        }
    }
    timings.rse = secs(t);

    // similarity: regroup subtrajectories by partition
    let t = Instant::now();
    let mut part_st: Vec<Vec<STRecord>> = vec![Vec::new(); n_parts];
    for r in &st_all {
        for p in tp.assign_span(r.t_s, r.t_e).partitions {
            part_st[p].push(r.clone());
        }
    }
    let index = SegmentationIndex::new(st_all.iter().cloned());
    let sims: Vec<(PartitionSimilarity, f64)> = part_st
        .par_iter()
        .map(|st| {
            let t = Instant::now();
            let ps = build_sp(st, &stp, &index, jp.eps_sp);
            (ps, secs(t))
        })
        .collect();
    timings.similarity_per_partition = sims.iter().map(|s| s.1).collect();
    let similarities: Vec<PartitionSimilarity> = sims.into_iter().map(|s| s.0).collect();
    timings.similarity = secs(t);

    // clustering
    let t = Instant::now();
    let clustered: Vec<(PartitionClustering, f64)> = part_st
        .par_iter()
        .zip(similarities.par_iter())
        .enumerate()
        .map(|(p, (st, ps))| {
            let t = Instant::now();
            let th = resolve_thresholds(st, &ps.sp, &cfg.cluster);
            (cluster_partition(p, st, &ps.sp, th), secs(t))
        })
        .collect();
    timings.clustering_per_partition = clustered.iter().map(|c| c.1).collect();
    let clusterings: Vec<PartitionClustering> = clustered.into_iter().map(|c| c.0).collect();
    timings.clustering = secs(t);

    // refine
    let t = Instant::now();
    let partition_subs: Vec<BTreeSet<SubtrajId>> = part_st.iter().map(|st| st.iter().map(STRecord::sub_id).collect()).collect();
    let result = refine_results(&clusterings, &partition_subs).map_err(|e| PipelineError::Stage {
        stage: "refine",
        partition: match &e {
            crate::cluster::ClusterError::UnknownSubtrajectory { partition, .. }
            | crate::cluster::ClusterError::DanglingMember { partition, .. } => Some(*partition),
        },
        traj: None,
        message: e.to_string(),
    })?;
    timings.refine = secs(t);

    let mut pairs = PairIndex::default();
    for ps in &similarities {
        pairs.pairs.extend(ps.pairs.iter().map(|(k, v)| (*k, *v)));
    }
    pairs.cards = st_all.iter().map(|r| (r.sub_id(), r.card)).collect();
    let lemma1 = check_lemma1(&result, &pairs, jp.eps_sp);
    let metrics = Metrics {
        sscr: sscr(&result),
        rmse: rmse(&result, &pairs),
        cluster_count: result.cluster_count(),
        outlier_count: result.outlier_count(),
        subtrajectory_count: st_all.len(),
        lemma1_violations: lemma1.len(),
        point_matches,
        match_intervals: intervals.len(),
    };
    timings.total = secs(started);

    Ok(RunOutput {
        join_params: jp,
        partitioning: tp,
        intervals,
        segmentations,
        st: st_all,
        stp,
        similarities,
        clusterings,
        result,
        pairs,
        lemma1,
        metrics,
        timings,
    })
}

fn write(dir: &Path, name: &str, content: &str) -> Result<(), PipelineError> {
    let path = dir.join(name);
    std::fs::write(&path, content).map_err(|source| PipelineError::Io { path: path.display().to_string(), source })
}

/// `sub_id,traj_id,first,last`
pub fn subtrajectories_csv(out: &RunOutput) -> String {
    let mut s = String::from("sub_id,traj_id,first,last\n");
    for r in out.subtrajectories() {
        writeln!(s, "{},{},{},{}", r.sub_id(), r.traj_id, r.first, r.last).unwrap();
    }
    s
}

/// Writes the result files. Timings go to their own file so that every
/// other file is reproducible byte for byte.
pub fn write_outputs(out: &RunOutput, dir: &Path, dump_relations: bool) -> Result<(), PipelineError> {
    std::fs::create_dir_all(dir).map_err(|source| PipelineError::Io { path: dir.display().to_string(), source })?;
    write(dir, "clusters.csv", &out.result.clusters_csv())?;
    write(dir, "outliers.csv", &out.result.outliers_csv())?;
    write(dir, "subtrajectories.csv", &subtrajectories_csv(out))?;
    let jp = &out.join_params;
    let mut metrics = out.metrics.report();
    writeln!(metrics, "eps_sp = {:.6}\neps_t = {:.6}\ndelta_t = {:.6}", jp.eps_sp, jp.eps_t, jp.delta_t).unwrap();
    writeln!(metrics, "partitions = {}", out.partitioning.partition_count()).unwrap();
    write(dir, "metrics.txt", &metrics)?;
    write(dir, "timings.txt", &out.timings.report())?;
    write(dir, "partitioning.txt", &out.partitioning.to_text())?;
    if dump_relations {
        write(dir, "intervals.csv", &format_intervals(&out.intervals))?;
        let voting: String = out.segmentations.iter().map(|s| format_voting(&s.voting)).collect();
        write(dir, "voting.csv", &voting)?;
        let cuts: String = out.segmentations.iter().map(|s| format_cuts(s.voting.traj_id, &s.cuts)).collect();
        write(dir, "cuts.csv", &cuts)?;
        write(dir, "st.csv", &format_st(&out.st))?;
        write(dir, "stp.txt", &format_stp(out.stp.values()))?;
        for (p, ps) in out.similarities.iter().enumerate() {
            write(dir, &format!("sp.{p}.txt"), &format_sp(&ps.sp))?;
        }
    }
    Ok(())
}
