use std::collections::BTreeMap;

use subclust_core::config::PipelineConfig;
use subclust_core::evaluate::{evaluate, load_predictions, load_truth};
use subclust_core::generate::{generate, random_scene, GenOptions, RandomOptions, Scenario};
use subclust_core::model::{Dataset, SubtrajId, TrajId, Trajectory};
use subclust_core::pipeline::{run_pipeline, write_outputs, PipelineError};
use subclust_core::{Detector, SubtrajRef};

fn tuned_star_config(detector: Detector) -> PipelineConfig {
    let mut c = PipelineConfig { workers: 2, eps_sp: Some(10.0), detector, ..Default::default() };
    c.seg.tau = 0.3;
    c.cluster.k_sigma = -2.0;
    c
}

#[test]
fn star_scene_recovers_ground_truth_with_tight_thresholds() {
    let g = generate(Scenario::Star, &GenOptions::default()).unwrap();
    for detector in [Detector::Tsa1, Detector::Tsa2] {
        let out = run_pipeline(&g.dataset, &tuned_star_config(detector)).unwrap();
        assert_eq!(out.metrics.cluster_count, 6, "{detector:?}");
        assert_eq!(out.metrics.outlier_count, 0);
        assert_eq!(out.metrics.lemma1_violations, 0);

        let dir = tempfile::tempdir().unwrap();
        write_outputs(&out, dir.path(), false).unwrap();
        std::fs::write(dir.path().join("truth.csv"), g.truth.to_csv()).unwrap();
        let preds = load_predictions(dir.path()).unwrap();
        let truth = load_truth(&dir.path().join("truth.csv")).unwrap();
        let e = evaluate(&preds, &truth);
        assert_eq!(e.accuracy, 1.0);
        assert_eq!(e.f_measure, 1.0);
        assert_eq!(e.assignment.len(), 6);
    }
}

#[test]
fn every_subtrajectory_is_reported_once_and_trajectories_are_covered() {
    let ds = random_scene(&RandomOptions { seed: 9, start_window: 2000, ..Default::default() }).dataset;
    let out = run_pipeline(&ds, &PipelineConfig { partitions: 3, workers: 2, ..Default::default() }).unwrap();
    let mut count: BTreeMap<SubtrajId, usize> = BTreeMap::new();
    for (rep, ms) in &out.result.clusters {
        *count.entry(*rep).or_default() += 1;
        for m in ms {
            *count.entry(m.sub_id).or_default() += 1;
        }
    }
    for o in &out.result.outliers {
        *count.entry(*o).or_default() += 1;
    }
    assert!(count.values().all(|&n| n == 1));
    assert_eq!(count.len(), out.metrics.subtrajectory_count);

    let mut per_traj: BTreeMap<TrajId, usize> = BTreeMap::new();
    for s in out.subtrajectories() {
        *per_traj.entry(s.traj_id).or_default() += s.len();
    }
    for t in ds.trajectories() {
        assert_eq!(per_traj[&t.id()], t.len());
    }
}

#[test]
fn synthetic_scenes_do_not_depend_on_partition_count() {
    let scenes = [
        generate(Scenario::Star, &GenOptions::default()).unwrap().dataset,
        generate(Scenario::Tsa, &GenOptions { replication: 1, ..Default::default() }).unwrap().dataset,
    ];
    for ds in &scenes {
        let results: Vec<_> = [1, 2, 4]
            .iter()
            .map(|&p| run_pipeline(ds, &PipelineConfig { partitions: p, workers: 1, ..Default::default() }).unwrap().result)
            .collect();
        let ids = |r: &subclust_core::ClusteringResult| {
            (
                r.clusters.iter().map(|(k, v)| (*k, v.iter().map(|m| m.sub_id).collect::<Vec<_>>())).collect::<Vec<_>>(),
                r.outliers.clone(),
            )
        };
        assert_eq!(ids(&results[0]), ids(&results[1]));
        assert_eq!(ids(&results[0]), ids(&results[2]));
    }
}

#[test]
fn worker_count_does_not_change_outputs() {
    let ds = random_scene(&RandomOptions { seed: 2, start_window: 1500, ..Default::default() }).dataset;
    let files = |workers| {
        let out = run_pipeline(&ds, &PipelineConfig { partitions: 4, workers, ..Default::default() }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_outputs(&out, dir.path(), true).unwrap();
        ["clusters.csv", "outliers.csv", "subtrajectories.csv", "metrics.txt", "sp.0.txt", "stp.txt", "voting.csv"]
            .map(|f| std::fs::read_to_string(dir.path().join(f)).unwrap())
    };
    assert_eq!(files(1), files(8));
}

#[test]
fn stage_report_lists_every_stage() {
    let g = generate(Scenario::Tsa, &GenOptions { replication: 2, ..Default::default() }).unwrap();
    let out = run_pipeline(&g.dataset, &PipelineConfig { partitions: 2, workers: 1, ..Default::default() }).unwrap();
    let report = out.timings.report();
    for key in ["join", "rse", "similarity", "clustering", "refine", "total"] {
        assert!(report.lines().any(|l| l.starts_with(&format!("{key} = "))), "missing {key}");
    }
    assert!(report.contains("join.partition.1 = "));
    assert_eq!(out.timings.join_per_partition.len(), 2);
}

#[test]
fn larger_delta_t_never_adds_intervals() {
    let ds = random_scene(&RandomOptions { seed: 4, ..Default::default() }).dataset;
    let n = |f: f64| run_pipeline(&ds, &PipelineConfig { delta_t_frac: Some(f), workers: 1, ..Default::default() }).unwrap().intervals.len();
    assert!(n(10.0) <= n(0.5));
    assert!(n(0.5) <= n(0.0));
}

#[test]
fn empty_dataset_and_oversized_partition_count_fail_cleanly() {
    let err = run_pipeline(&Dataset::default(), &PipelineConfig::default()).unwrap_err();
    assert!(matches!(err, PipelineError::Stage { stage: "ingest", .. }));
    assert!(!err.is_config_error());

    let t = Trajectory::from_samples(TrajId(1), &[(0, 0.0, 0.0), (1, 1.0, 0.0)]).unwrap();
    let ds = Dataset::new(vec![t]).unwrap();
    let err = run_pipeline(&ds, &PipelineConfig { partitions: 50, ..Default::default() }).unwrap_err();
    assert!(err.is_config_error(), "{err}");

    let err = run_pipeline(&ds, &PipelineConfig { workers: 0, ..Default::default() }).unwrap_err();
    assert!(err.is_config_error());
}

#[test]
fn relative_parameters_resolve_against_the_dataset() {
    // bounding box 3 x 4, sampling gap 1200 s
    let a = Trajectory::from_samples(TrajId(1), &[(0, 0.0, 0.0), (1200, 3.0, 4.0)]).unwrap();
    let b = Trajectory::from_samples(TrajId(2), &[(0, 1.0, 1.0), (1200, 2.0, 2.0), (2400, 2.0, 3.0)]).unwrap();
    let ds = Dataset::new(vec![a, b]).unwrap();
    let m = ds.manifest().unwrap();
    let jp = PipelineConfig::default().resolve_join_params(&m).unwrap();
    assert!((jp.eps_sp - 1.0).abs() < 1e-12);
    assert!((jp.eps_t - 600.0).abs() < 1e-12);
    assert!((jp.delta_t - 600.0).abs() < 1e-12);

    let cfg = PipelineConfig::from_str_config("eps_sp = 2.5\neps_sp_frac = 10%\neps_t_frac = 100%\n").unwrap();
    let jp = cfg.resolve_join_params(&m).unwrap();
    assert_eq!(jp.eps_sp, 2.5);
    assert!((jp.eps_t - 1200.0).abs() < 1e-12);
}

#[test]
fn config_file_round_trip() {
    let text = "# comment\neps_sp_frac = 15%\nw = 10\ntau = 0.4\ndetector = tsa2\nalpha_sigma = -1\nk_sigma = 1\npartitions = 3\nworkers = 2\nseed = 42\ndump_relations = true\n";
    let cfg = PipelineConfig::from_str_config(text).unwrap();
    assert_eq!(cfg.eps_sp_frac, Some(0.15));
    assert_eq!(cfg.seg.w, 10);
    assert_eq!(cfg.detector, Detector::Tsa2);
    assert_eq!(cfg.partitions, 3);
    let again = PipelineConfig::from_str_config(&cfg.to_config_string()).unwrap();
    assert_eq!(again, cfg);

    assert!(PipelineConfig::from_str_config("nonsense = 1").is_err());
    assert!(PipelineConfig::from_str_config("eps_sp_mode = adaptive").is_err());
    assert!(PipelineConfig::from_str_config("no equals sign").is_err());
    assert!(PipelineConfig::from_str_config("eps_sp_frac = 150%").unwrap().validate().is_err());
}

#[test]
fn subtrajectory_file_matches_segmentation() {
    let g = generate(Scenario::Tsa, &GenOptions { replication: 1, ..Default::default() }).unwrap();
    let out = run_pipeline(&g.dataset, &PipelineConfig { eps_sp: Some(10.0), detector: Detector::Tsa2, workers: 1, ..Default::default() }).unwrap();
    let text = subclust_core::pipeline::subtrajectories_csv(&out);
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 10);
    assert_eq!(rows[0], "1-0,1,0,49");
    assert_eq!(rows[1], "1-50,1,50,99");
    let subs: Vec<SubtrajRef> = out.subtrajectories().copied().collect();
    assert_eq!(subs[1], SubtrajRef::new(TrajId(1), 50, 99));
}
