//! Pipeline configuration: flat `key = value` files plus overrides.

use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ClusterParams, DatasetManifest, JoinParams, SegParams};
use crate::partition::DEFAULT_SAMPLE_FRACTION;

pub use crate::segment::Detector;

pub const DEFAULT_EPS_SP_FRAC: f64 = 0.2;
pub const DEFAULT_EPS_T_FRAC: f64 = 0.5;
pub const DEFAULT_DELTA_T_FRAC: f64 = 0.5;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("invalid value {value:?} for {key}: {message}")]
    BadValue { key: String, value: String, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// How `eps_sp` is chosen. Only a single global value is supported; the
/// `adaptive` key is reserved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum EpsSpMode {
    #[default]
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Absolute spatial threshold; wins over `eps_sp_frac`.
    pub eps_sp: Option<f64>,
    /// Fraction of the bounding-box diagonal.
    pub eps_sp_frac: Option<f64>,
    /// Absolute temporal tolerance in seconds; wins over `eps_t_frac`.
    pub eps_t: Option<f64>,
    /// Multiple of the mean sampling gap.
    pub eps_t_frac: Option<f64>,
    pub delta_t: Option<f64>,
    pub delta_t_frac: Option<f64>,
    pub eps_sp_mode: EpsSpMode,
    pub seg: SegParams,
    pub detector: Detector,
    pub cluster: ClusterParams,
    pub partitions: usize,
    pub workers: usize,
    pub seed: u64,
    pub sample_fraction: f64,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub dump_relations: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            eps_sp: None,
            eps_sp_frac: None,
            eps_t: None,
            eps_t_frac: None,
            delta_t: None,
            delta_t_frac: None,
            eps_sp_mode: EpsSpMode::Fixed,
            seg: SegParams::default(),
            detector: Detector::Tsa1,
            cluster: ClusterParams::default(),
            partitions: 1,
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            seed: 0,
            sample_fraction: DEFAULT_SAMPLE_FRACTION,
            input: None,
            output: None,
            dump_relations: false,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        message: e.to_string(),
    })
}

/// Accepts `0.2` or `20%`.
fn parse_fraction(key: &str, value: &str) -> Result<f64, ConfigError> {
    match value.strip_suffix('%') {
        Some(p) => Ok(parse::<f64>(key, p.trim())? / 100.0),
        None => parse(key, value),
    }
}

impl PipelineConfig {
    pub fn from_str_config(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                message: format!("expected `key = value`, got {line:?}"),
            })?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::from_str_config(&text)
    }

    /// Sets one key. Used for both file lines and command-line overrides.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "eps_sp" => self.eps_sp = Some(parse(key, value)?),
            "eps_sp_frac" => self.eps_sp_frac = Some(parse_fraction(key, value)?),
            "eps_t" => self.eps_t = Some(parse(key, value)?),
            "eps_t_frac" => self.eps_t_frac = Some(parse_fraction(key, value)?),
            "delta_t" => self.delta_t = Some(parse(key, value)?),
            "delta_t_frac" => self.delta_t_frac = Some(parse_fraction(key, value)?),
            "eps_sp_mode" => match value {
                "fixed" => self.eps_sp_mode = EpsSpMode::Fixed,
                "adaptive" => {
                    return Err(ConfigError::BadValue {
                        key: key.into(),
                        value: value.into(),
                        message: "adaptive eps_sp is reserved and not implemented".into(),
                    })
                }
                _ => {
                    return Err(ConfigError::BadValue {
                        key: key.into(),
                        value: value.into(),
                        message: "expected `fixed`".into(),
                    })
                }
            },
            "w" => self.seg.w = parse(key, value)?,
            "tau" => self.seg.tau = parse(key, value)?,
            "detector" => {
                self.detector = value.parse().map_err(|message| ConfigError::BadValue {
                    key: key.into(),
                    value: value.into(),
                    message,
                })?
            }
            "alpha_sigma" => self.cluster.alpha_sigma = parse(key, value)?,
            "k_sigma" => self.cluster.k_sigma = parse(key, value)?,
            "partitions" => self.partitions = parse(key, value)?,
            "workers" => self.workers = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "sample_fraction" => self.sample_fraction = parse_fraction(key, value)?,
            "input" => self.input = Some(PathBuf::from(value)),
            "output" => self.output = Some(PathBuf::from(value)),
            "dump_relations" => self.dump_relations = parse(key, value)?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.workers == 0 {
            return bad("workers must be >= 1".into());
        }
        if self.partitions == 0 {
            return bad("partitions must be >= 1".into());
        }
        SegParams::new(self.seg.w, self.seg.tau).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        for (name, f) in [("eps_sp_frac", self.eps_sp_frac), ("sample_fraction", Some(self.sample_fraction))] {
            if let Some(f) = f {
                if !(f > 0.0 && f <= 1.0) {
                    return bad(format!("{name} must lie in (0, 1], got {f}"));
                }
            }
        }
        for (name, f) in [("eps_t_frac", self.eps_t_frac), ("delta_t_frac", self.delta_t_frac)] {
            if let Some(f) = f {
                if !(f.is_finite() && f >= 0.0) {
                    return bad(format!("{name} must be a finite non-negative multiple, got {f}"));
                }
            }
        }
        for (name, v) in [("alpha_sigma", self.cluster.alpha_sigma), ("k_sigma", self.cluster.k_sigma)] {
            if !v.is_finite() {
                return bad(format!("{name} must be finite"));
            }
        }
        Ok(())
    }

    /// Turns the relative/absolute threshold settings into concrete join
    /// parameters for a dataset.
    pub fn resolve_join_params(&self, manifest: &DatasetManifest) -> Result<JoinParams, ConfigError> {
        let pick = |name: &str, abs: Option<f64>, frac: Option<f64>, default: f64, base: f64| match (abs, frac) {
            (Some(a), Some(_)) => {
                warn!("both {name} and {name}_frac given; using the absolute value {a}");
                a
            }
            (Some(a), None) => a,
            (None, f) => f.unwrap_or(default) * base,
        };
        let eps_sp = pick("eps_sp", self.eps_sp, self.eps_sp_frac, DEFAULT_EPS_SP_FRAC, manifest.bbox.diagonal());
        let gap = manifest.mean_sampling_gap;
        let eps_t = pick("eps_t", self.eps_t, self.eps_t_frac, DEFAULT_EPS_T_FRAC, gap);
        let delta_t = pick("delta_t", self.delta_t, self.delta_t_frac, DEFAULT_DELTA_T_FRAC, gap);
        JoinParams::new(eps_sp, eps_t, delta_t).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Canonical `key = value` rendering of the resolved settings.
    pub fn to_config_string(&self) -> String {
        let mut lines = Vec::new();
        let opt = |k: &str, v: Option<f64>, lines: &mut Vec<String>| {
            if let Some(v) = v {
                lines.push(format!("{k} = {v}"));
            }
        };
        opt("eps_sp", self.eps_sp, &mut lines);
        opt("eps_sp_frac", self.eps_sp_frac, &mut lines);
        opt("eps_t", self.eps_t, &mut lines);
        opt("eps_t_frac", self.eps_t_frac, &mut lines);
        opt("delta_t", self.delta_t, &mut lines);
        opt("delta_t_frac", self.delta_t_frac, &mut lines);
        lines.push(format!("w = {}", self.seg.w));
        lines.push(format!("tau = {}", self.seg.tau));
        lines.push(format!("detector = {}", if self.detector == Detector::Tsa1 { "tsa1" } else { "tsa2" }));
        lines.push(format!("alpha_sigma = {}", self.cluster.alpha_sigma));
        lines.push(format!("k_sigma = {}", self.cluster.k_sigma));
        lines.push(format!("partitions = {}", self.partitions));
        lines.push(format!("workers = {}", self.workers));
        lines.push(format!("seed = {}", self.seed));
        lines.push(format!("sample_fraction = {}", self.sample_fraction));
        for (k, p) in [("input", &self.input), ("output", &self.output)] {
            if let Some(p) = p {
                lines.push(format!("{k} = {}", p.display()));
            }
        }
        lines.push(format!("dump_relations = {}", self.dump_relations));
        lines.join("\n") + "\n"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BoundingBox;

    fn manifest(w: f64, h: f64, gap: f64) -> DatasetManifest {
        DatasetManifest {
            trajectories: 1,
            points: 2,
            t_min: 0,
            t_max: 1,
            bbox: BoundingBox { min_x: 0.0, min_y: 0.0, max_x: w, max_y: h },
            mean_sampling_gap: gap,
        }
    }

    #[test]
    fn parses_key_values_and_comments() {
        let cfg = PipelineConfig::from_str_config("# run\neps_sp_frac = 20%\nw = 5 # window\ndetector = TSA2\npartitions=4\n").unwrap();
        assert_eq!(cfg.eps_sp_frac, Some(0.2));
        assert_eq!(cfg.seg.w, 5);
        assert_eq!(cfg.detector, Detector::Tsa2);
        assert_eq!(cfg.partitions, 4);
        assert!(matches!(PipelineConfig::from_str_config("nonsense"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(PipelineConfig::from_str_config("foo = 1"), Err(ConfigError::UnknownKey(_))));
        assert!(matches!(PipelineConfig::from_str_config("w = x"), Err(ConfigError::BadValue { .. })));
        assert!(PipelineConfig::from_str_config("eps_sp_mode = adaptive").is_err());
    }

    #[test]
    fn relative_resolution() {
        let cfg = PipelineConfig { eps_sp_frac: Some(0.2), ..Default::default() };
        let jp = cfg.resolve_join_params(&manifest(3.0, 4.0, 1200.0)).unwrap();
        assert!((jp.eps_sp - 1.0).abs() < 1e-12);
        assert_eq!(jp.eps_t, 600.0);
        assert_eq!(jp.delta_t, 600.0);
    }

    #[test]
    fn absolute_wins() {
        let cfg = PipelineConfig { eps_sp: Some(7.0), eps_sp_frac: Some(0.2), eps_t: Some(3.0), ..Default::default() };
        let jp = cfg.resolve_join_params(&manifest(3.0, 4.0, 10.0)).unwrap();
        assert_eq!((jp.eps_sp, jp.eps_t), (7.0, 3.0));
    }

    #[test]
    fn validation() {
        assert!(PipelineConfig { workers: 0, ..Default::default() }.validate().is_err());
        assert!(PipelineConfig { partitions: 0, ..Default::default() }.validate().is_err());
        assert!(PipelineConfig { eps_sp_frac: Some(1.5), ..Default::default() }.validate().is_err());
        assert!(PipelineConfig::default().validate().is_ok());
    }

    #[test]
    fn round_trip_through_text() {
        let mut cfg = PipelineConfig::default();
        cfg.set("eps_sp", "2.5").unwrap();
        cfg.set("tau", "0.4").unwrap();
        let back = PipelineConfig::from_str_config(&cfg.to_config_string()).unwrap();
        assert_eq!(back.eps_sp, Some(2.5));
        assert_eq!(back.seg.tau, 0.4);
    }
}
