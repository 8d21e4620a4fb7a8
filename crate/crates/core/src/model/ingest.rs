//! CSV ingestion (`traj_id,t,x,y`) and serialization.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Dataset, ModelError, Point, TrajId, Trajectory};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing column {0:?} in header")]
    MissingColumn(String),
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// What to do with a row that does not parse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ErrorMode {
    FailFast,
    #[default]
    Skip,
}

/// Column names and malformed-row policy.
#[derive(Debug, Clone)]
pub struct IngestOptions {
    pub traj_col: String,
    pub time_col: String,
    pub x_col: String,
    pub y_col: String,
    pub mode: ErrorMode,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            traj_col: "traj_id".into(),
            time_col: "t".into(),
            x_col: "x".into(),
            y_col: "y".into(),
            mode: ErrorMode::Skip,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowError {
    pub line: u64,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows_read: usize,
    pub rows_dropped: usize,
    pub duplicates: usize,
    pub trajectories: usize,
    pub errors: Vec<RowError>,
}

pub fn ingest_csv(path: impl AsRef<Path>, opts: &IngestOptions) -> Result<(Dataset, IngestReport), IngestError> {
    read_csv(File::open(path)?, opts)
}

/// Parses `traj_id,t,x,y` rows; points are grouped by trajectory and sorted
/// by time, and later rows repeating a `(traj_id, t)` pair are dropped.
pub fn read_csv<R: Read>(reader: R, opts: &IngestOptions) -> Result<(Dataset, IngestReport), IngestError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| IngestError::MissingColumn(name.to_string()))
    };
    let (ci, ct, cx, cy) = (col(&opts.traj_col)?, col(&opts.time_col)?, col(&opts.x_col)?, col(&opts.y_col)?);

    let mut report = IngestReport::default();
    let mut groups: BTreeMap<TrajId, Vec<Point>> = BTreeMap::new();
    let mut seen: HashSet<(TrajId, i64)> = HashSet::new();

    for record in rdr.records() {
        report.rows_read += 1;
        let line = report.rows_read as u64 + 1;
        let parsed = record.map_err(|e| e.to_string()).and_then(|r| {
            let field = |c: usize| r.get(c).ok_or_else(|| format!("missing field {c}"));
            let id: u64 = field(ci)?.parse().map_err(|e| format!("traj_id: {e}"))?;
            let t: i64 = field(ct)?.parse().map_err(|e| format!("t: {e}"))?;
            let x: f64 = field(cx)?.parse().map_err(|e| format!("x: {e}"))?;
            let y: f64 = field(cy)?.parse().map_err(|e| format!("y: {e}"))?;
            if !x.is_finite() || !y.is_finite() {
                return Err("non-finite coordinate".to_string());
            }
            Ok(Point::new(TrajId(id), t, x, y))
        });
        match parsed {
            Ok(p) => {
                if seen.insert((p.traj_id, p.t)) {
                    groups.entry(p.traj_id).or_default().push(p);
                } else {
                    report.duplicates += 1;
                    report.rows_dropped += 1;
                }
            }
            Err(message) => {
                if opts.mode == ErrorMode::FailFast {
                    return Err(IngestError::Row { line, message });
                }
                report.rows_dropped += 1;
                report.errors.push(RowError { line, message });
            }
        }
    }
    if report.rows_read == 0 {
        warn!("input contains no rows; dataset is empty");
    }

    let trajectories = groups
        .into_iter()
        .map(|(id, mut pts)| {
            pts.sort_by_key(|p| p.t);
            Trajectory::new(id, pts)
        })
        .collect::<Result<Vec<_>, _>>()?;
    report.trajectories = trajectories.len();
    Ok((Dataset::new(trajectories)?, report))
}

/// Writes the dataset as `traj_id,t,x,y`, trajectories in id order.
pub fn write_csv<W: Write>(dataset: &Dataset, mut out: W) -> std::io::Result<()> {
    writeln!(out, "traj_id,t,x,y")?;
    for p in dataset.points() {
        // `{}` on f64 prints the shortest string that parses back exactly.
        writeln!(out, "{},{},{},{}", p.traj_id, p.t, p.x, p.y)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(s: &str) -> (Dataset, IngestReport) {
        read_csv(s.as_bytes(), &IngestOptions::default()).unwrap()
    }

    #[test]
    fn single_trajectory_sorted() {
        let (ds, rep) = read("traj_id,t,x,y\n7,30,2,2\n7,10,0,0\n7,20,1,1\n");
        assert_eq!(rep.rows_read, 3);
        assert_eq!(ds.len(), 1);
        let tr = ds.get(TrajId(7)).unwrap();
        assert_eq!(tr.len(), 3);
        let ts: Vec<_> = tr.points().iter().map(|p| p.t).collect();
        assert_eq!(ts, vec![10, 20, 30]);
    }

    #[test]
    fn duplicate_timestamp_dropped() {
        let (ds, rep) = read("traj_id,t,x,y\n1,0,0,0\n1,0,5,5\n1,1,1,1\n");
        assert_eq!(rep.duplicates, 1);
        assert_eq!(rep.rows_dropped, 1);
        assert_eq!(ds.point_count(), 2);
        assert_eq!(ds.get(TrajId(1)).unwrap().point(0).x, 0.0);
    }

    #[test]
    fn malformed_rows_skip_or_fail() {
        let input = "traj_id,t,x,y\n1,0,0,0\n1,abc,0,0\n1,2,1,1\n";
        let (ds, rep) = read(input);
        assert_eq!(ds.point_count(), 2);
        assert_eq!(rep.errors.len(), 1);
        assert_eq!(rep.errors[0].line, 3);

        let opts = IngestOptions { mode: ErrorMode::FailFast, ..Default::default() };
        let err = read_csv(input.as_bytes(), &opts).unwrap_err();
        assert!(matches!(err, IngestError::Row { line: 3, .. }));
    }

    #[test]
    fn empty_file_gives_empty_dataset() {
        let (ds, rep) = read("traj_id,t,x,y\n");
        assert!(ds.is_empty());
        assert_eq!(rep.rows_read, 0);
    }

    #[test]
    fn custom_columns_and_missing_header() {
        let opts = IngestOptions { traj_col: "id".into(), time_col: "ts".into(), ..Default::default() };
        let (ds, _) = read_csv("ts,id,x,y\n5,2,1.5,2.5\n".as_bytes(), &opts).unwrap();
        assert_eq!(ds.get(TrajId(2)).unwrap().point(0).t, 5);
        assert!(matches!(read_csv("a,b\n".as_bytes(), &IngestOptions::default()), Err(IngestError::MissingColumn(_))));
    }

    #[test]
    fn write_then_read_round_trips() {
        let (ds, _) = read("traj_id,t,x,y\n1,0,0.1,0.2\n1,5,1e-7,3.3333333333333335\n2,1,-4.5,8\n");
        let mut buf = Vec::new();
        write_csv(&ds, &mut buf).unwrap();
        let (back, _) = read_csv(buf.as_slice(), &IngestOptions::default()).unwrap();
        assert_eq!(back, ds);
    }
}
