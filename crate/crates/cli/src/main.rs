use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{error, info, warn};

use subclust_core::config::ConfigError;
use subclust_core::evaluate::{evaluate, load_predictions, load_truth};
use subclust_core::generate::{generate, GenOptions, Scenario};
use subclust_core::model::{ingest_csv, write_csv, IngestOptions};
use subclust_core::partition::{build_partitioning, PartitionError};
use subclust_core::pipeline::{run_pipeline, write_outputs, PipelineError};
use subclust_core::PipelineConfig;

#[derive(Parser)]
#[command(name = "subclust", version, about = "Subtrajectory clustering over temporal partitions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic scene with ground truth.
    Generate {
        #[arg(long, default_value = "star")]
        scenario: String,
        #[arg(long, default_value_t = 5)]
        replication: usize,
        /// Jitter as a fraction of the leg length.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the clustering pipeline.
    Run(Box<RunArgs>),
    /// Score a result directory against ground truth.
    Evaluate {
        #[arg(long)]
        result: PathBuf,
        #[arg(long)]
        truth: PathBuf,
    },
    /// Compute temporal partition borders.
    Partition {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(short = 'P', long = "partitions")]
        partitions: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        sample_fraction: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Absolute value, or a fraction of the diagonal with a `%` suffix.
    #[arg(long)]
    eps_sp: Option<String>,
    /// Seconds, or a multiple of the mean sampling gap with a `%` suffix.
    #[arg(long)]
    eps_t: Option<String>,
    #[arg(long)]
    delta_t: Option<String>,
    #[arg(long)]
    w: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    alpha_sigma: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    k_sigma: Option<f64>,
    #[arg(long)]
    partitions: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    detector: Option<String>,
    #[arg(long)]
    dump_relations: bool,
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Config(String),
    Data(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

/// `20%` sets the relative key, anything else the absolute one.
fn set_threshold(cfg: &mut PipelineConfig, key: &str, value: &str) -> Result<(), ConfigError> {
    if value.trim_end().ends_with('%') {
        cfg.set(&format!("{key}_frac"), value)?;
        match key {
            "eps_sp" => cfg.eps_sp = None,
            "eps_t" => cfg.eps_t = None,
            _ => cfg.delta_t = None,
        }
    } else {
        cfg.set(key, value)?;
    }
    Ok(())
}

fn build_config(a: &RunArgs) -> Result<PipelineConfig, ConfigError> {
    let mut cfg = match &a.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    for (k, v) in [("eps_sp", &a.eps_sp), ("eps_t", &a.eps_t), ("delta_t", &a.delta_t)] {
        if let Some(v) = v {
            set_threshold(&mut cfg, k, v)?;
        }
    }
    let mut set = |k: &str, v: Option<String>| v.map_or(Ok(()), |v| cfg.set(k, &v));
    set("w", a.w.map(|v| v.to_string()))?;
    set("tau", a.tau.map(|v| v.to_string()))?;
    set("alpha_sigma", a.alpha_sigma.map(|v| v.to_string()))?;
    set("k_sigma", a.k_sigma.map(|v| v.to_string()))?;
    set("partitions", a.partitions.map(|v| v.to_string()))?;
    set("workers", a.workers.map(|v| v.to_string()))?;
    set("seed", a.seed.map(|v| v.to_string()))?;
    set("detector", a.detector.clone())?;
    if a.dump_relations {
        cfg.dump_relations = true;
    }
    if let Some(p) = &a.input {
        cfg.input = Some(p.clone());
    }
    if let Some(p) = &a.out {
        cfg.output = Some(p.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    Failure::Data(format!("{}: {e}", path.display()))
}

fn run(a: RunArgs) -> Result<(), Failure> {
    let cfg = build_config(&a)?;
    let input = cfg.input.clone().ok_or_else(|| Failure::Config("no input file (--in or `input`)".into()))?;
    let output = cfg.output.clone().ok_or_else(|| Failure::Config("no output directory (--out or `output`)".into()))?;
    let (dataset, report) = ingest_csv(&input, &IngestOptions::default()).map_err(|e| Failure::Data(format!("{}: {e}", input.display())))?;
    if report.rows_dropped > 0 {
        warn!("dropped {} malformed rows", report.rows_dropped);
    }
    info!("read {} points in {} trajectories", dataset.point_count(), dataset.len());
    let out = run_pipeline(&dataset, &cfg).map_err(|e| match e {
        e if e.is_config_error() => Failure::Config(e.to_string()),
        e => Failure::Data(e.to_string()),
    })?;
    write_outputs(&out, &output, cfg.dump_relations).map_err(|e: PipelineError| Failure::Data(e.to_string()))?;
    print!("{}", out.metrics.report());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Generate { scenario, replication, noise, seed, out } => (|| {
            let scenario: Scenario = scenario.parse().map_err(|e: subclust_core::generate::GenerateError| Failure::Config(e.to_string()))?;
            let opts = GenOptions { replication, noise, seed, ..Default::default() };
            let g = generate(scenario, &opts).map_err(|e| Failure::Config(e.to_string()))?;
            std::fs::create_dir_all(&out).map_err(|e| io_err(&out, e))?;
            let data = out.join("data.csv");
            let f = std::fs::File::create(&data).map_err(|e| io_err(&data, e))?;
            write_csv(&g.dataset, std::io::BufWriter::new(f)).map_err(|e| io_err(&data, e))?;
            let truth = out.join("truth.csv");
            std::fs::write(&truth, g.truth.to_csv()).map_err(|e| io_err(&truth, e))?;
            let manifest = out.join("manifest.json");
            let m = g.dataset.manifest().expect("generated data is not empty");
            let json = serde_json::to_string_pretty(&m).expect("manifest serializes");
            std::fs::write(&manifest, json + "\n").map_err(|e| io_err(&manifest, e))?;
            println!("wrote {} trajectories to {}", g.dataset.len(), out.display());
            Ok(())
        })(),
        Command::Run(a) => run(*a),
        Command::Evaluate { result, truth } => (|| {
            let preds = load_predictions(&result).map_err(|e| Failure::Data(e.to_string()))?;
            let truth = load_truth(&truth).map_err(|e| Failure::Data(e.to_string()))?;
            let e = evaluate(&preds, &truth);
            println!("accuracy = {:.6}\nf_measure = {:.6}", e.accuracy, e.f_measure);
            println!("points = {} correct = {}", e.total_points, e.correct_points);
            for (c, l) in &e.assignment {
                println!("cluster {c} -> {l}");
            }
            for ((c, l), n) in &e.confusion {
                println!("confusion {c} {l} {n}");
            }
            Ok(())
        })(),
        Command::Partition { input, partitions, seed, sample_fraction, out } => (|| {
            let (dataset, _) = ingest_csv(&input, &IngestOptions::default()).map_err(|e| Failure::Data(format!("{}: {e}", input.display())))?;
            let frac = sample_fraction.unwrap_or(subclust_core::partition::DEFAULT_SAMPLE_FRACTION);
            let tp = build_partitioning(&dataset, partitions, frac, seed).map_err(|e| match e {
                PartitionError::ZeroPartitions | PartitionError::BadFraction(_) | PartitionError::Degenerate { .. } => Failure::Config(e.to_string()),
                e => Failure::Data(e.to_string()),
            })?;
            tp.save(&out).map_err(|e| Failure::Data(e.to_string()))?;
            Ok(())
        })(),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            error!("{m}");
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Data(m)) => {
            error!("{m}");
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
