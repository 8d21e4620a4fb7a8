//! Scoring a clustering against ground truth.
//!
//! Every output subtrajectory takes the label of the ground-truth segment
//! covering most of its points, and all its points count with that label.
//! Predicted clusters are matched one-to-one to truth labels by an optimal
//! assignment over point counts; predicted outliers are correct exactly when
//! the truth says outlier.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use log::warn;
use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generate::GroundTruth;
use crate::model::{SubtrajId, SubtrajRef, TrajId};

#[derive(Debug, Error)]
pub enum EvaluateError {
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{file} line {line}: {message}")]
    Parse { file: String, line: usize, message: String },
}

/// Predicted assignment of one subtrajectory: the representative of its
/// cluster, or `None` for an outlier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Prediction {
    pub sub: SubtrajRef,
    pub cluster: Option<SubtrajId>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub f_measure: f64,
    pub total_points: usize,
    pub correct_points: usize,
    /// `(predicted cluster or "outlier", truth label or "outlier") -> points`.
    pub confusion: BTreeMap<(String, String), usize>,
    /// Truth label each predicted cluster was matched to.
    pub assignment: BTreeMap<String, String>,
}

const OUTLIER: &str = "outlier";

fn majority_label(sub: &SubtrajRef, truth: &[&crate::generate::TruthSegment]) -> Option<String> {
    let mut best: Option<(usize, &Option<String>)> = None;
    for seg in truth {
        let lo = seg.first.max(sub.first);
        let hi = seg.last.min(sub.last);
        if lo > hi {
            continue;
        }
        let overlap = hi - lo + 1;
        if best.is_none_or(|(b, _)| overlap > b) {
            best = Some((overlap, &seg.label));
        }
    }
    best.and_then(|(_, l)| l.clone())
}

pub fn evaluate(predictions: &[Prediction], truth: &GroundTruth) -> Evaluation {
    if predictions.is_empty() {
        warn!("empty result; all scores are zero");
        return Evaluation::default();
    }
    let mut by_traj: BTreeMap<TrajId, Vec<&crate::generate::TruthSegment>> = BTreeMap::new();
    for s in &truth.segments {
        by_traj.entry(s.traj_id).or_default().push(s);
    }

    // counts[(pred, truth)] in points
    let mut counts: BTreeMap<(Option<SubtrajId>, Option<String>), usize> = BTreeMap::new();
    for p in predictions {
        let segs = by_traj.get(&p.sub.traj_id).map(Vec::as_slice).unwrap_or(&[]);
        let label = majority_label(&p.sub, segs);
        *counts.entry((p.cluster, label)).or_default() += p.sub.len();
    }

    let clusters: Vec<SubtrajId> = counts.keys().filter_map(|k| k.0).collect::<BTreeSet<_>>().into_iter().collect();
    let labels: Vec<String> = counts.keys().filter_map(|k| k.1.clone()).collect::<BTreeSet<_>>().into_iter().collect();

    let mut matched: BTreeMap<SubtrajId, String> = BTreeMap::new();
    if !clusters.is_empty() && !labels.is_empty() {
        let n = clusters.len().max(labels.len());
        let mut w = Matrix::new(n, n, 0i64);
        for (i, c) in clusters.iter().enumerate() {
            for (j, l) in labels.iter().enumerate() {
                w[(i, j)] = counts.get(&(Some(*c), Some(l.clone()))).copied().unwrap_or(0) as i64;
            }
        }
        let (_, assign) = kuhn_munkres(&w);
        for (i, &j) in assign.iter().enumerate() {
            if i < clusters.len() && j < labels.len() && w[(i, j)] > 0 {
                matched.insert(clusters[i], labels[j].clone());
            }
        }
    }

    let total: usize = counts.values().sum();
    let correct: usize = counts
        .iter()
        .filter(|((c, l), _)| match (c, l) {
            (None, None) => true,
            (Some(c), Some(l)) => matched.get(c) == Some(l),
            _ => false,
        })
        .map(|(_, n)| n)
        .sum();

    // Per truth class F, weighted by class size.
    let pred_size = |c: Option<SubtrajId>| -> usize { counts.iter().filter(|((pc, _), _)| *pc == c).map(|(_, n)| n).sum() };
    let truth_size = |l: &Option<String>| -> usize { counts.iter().filter(|((_, tl), _)| tl == l).map(|(_, n)| n).sum() };
    let mut classes: Vec<Option<String>> = labels.iter().cloned().map(Some).collect();
    if truth_size(&None) > 0 {
        classes.push(None);
    }
    let (mut f_sum, mut weight) = (0.0, 0usize);
    for l in &classes {
        let size = truth_size(l);
        let pred = match l {
            None => Some(None),
            Some(l) => matched.iter().find(|(_, ml)| *ml == l).map(|(c, _)| Some(*c)),
        };
        let f = match pred {
            Some(c) => {
                let hit = counts.get(&(c, l.clone())).copied().unwrap_or(0);
                2.0 * hit as f64 / (pred_size(c) + size) as f64
            }
            None => 0.0,
        };
        f_sum += f * size as f64;
        weight += size;
    }

    let name = |c: &Option<SubtrajId>| c.map_or(OUTLIER.to_string(), |c| c.to_string());
    Evaluation {
        accuracy: correct as f64 / total as f64,
        f_measure: if weight == 0 { 0.0 } else { f_sum / weight as f64 },
        total_points: total,
        correct_points: correct,
        confusion: counts.iter().map(|((c, l), n)| ((name(c), l.clone().unwrap_or_else(|| OUTLIER.into())), *n)).collect(),
        assignment: matched.into_iter().map(|(c, l)| (c.to_string(), l)).collect(),
    }
}

fn read(path: &Path) -> Result<String, EvaluateError> {
    std::fs::read_to_string(path).map_err(|source| EvaluateError::Io { path: path.display().to_string(), source })
}

fn parse_sub(file: &str, line: usize, s: &str) -> Result<SubtrajId, EvaluateError> {
    s.parse().map_err(|e: crate::model::ModelError| EvaluateError::Parse { file: file.into(), line, message: e.to_string() })
}

/// Reads `subtrajectories.csv`, `clusters.csv` and `outliers.csv` from a
/// result directory.
pub fn load_predictions(dir: &Path) -> Result<Vec<Prediction>, EvaluateError> {
    let mut cluster_of: BTreeMap<SubtrajId, SubtrajId> = BTreeMap::new();
    for (i, line) in read(&dir.join("clusters.csv"))?.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(EvaluateError::Parse { file: "clusters.csv".into(), line: i + 1, message: "expected 4 fields".into() });
        }
        cluster_of.insert(parse_sub("clusters.csv", i + 1, f[2])?, parse_sub("clusters.csv", i + 1, f[1])?);
    }
    let mut out = Vec::new();
    for (i, line) in read(&dir.join("subtrajectories.csv"))?.lines().enumerate().skip(1) {
        let bad = |m: &str| EvaluateError::Parse { file: "subtrajectories.csv".into(), line: i + 1, message: m.into() };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(bad("expected sub_id,traj_id,first,last"));
        }
        let traj = TrajId(f[1].parse().map_err(|_| bad("traj_id"))?);
        let first: usize = f[2].parse().map_err(|_| bad("first"))?;
        let last: usize = f[3].parse().map_err(|_| bad("last"))?;
        let sub = SubtrajRef::new(traj, first, last);
        out.push(Prediction { sub, cluster: cluster_of.get(&sub.sub_id()).copied() });
    }
    Ok(out)
}

pub fn load_truth(path: &Path) -> Result<GroundTruth, EvaluateError> {
    GroundTruth::from_csv(&read(path)?).map_err(|e| EvaluateError::Parse { file: path.display().to_string(), line: 0, message: e.to_string() })
}
