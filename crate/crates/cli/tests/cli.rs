use std::path::Path;
use std::process::{Command, Output};

fn subclust(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_subclust")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn generate_run_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene");
    let res = dir.path().join("res");

    let g = subclust(&["generate", "--scenario", "star", "--replication", "5", "--seed", "1", "--out", p(&scene)]);
    assert!(g.status.success(), "{}", String::from_utf8_lossy(&g.stderr));
    for f in ["data.csv", "truth.csv", "manifest.json"] {
        assert!(scene.join(f).exists(), "{f}");
    }

    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "tau = 0.3\nk_sigma = -2\npartitions = 2\n").unwrap();
    let data = scene.join("data.csv");
    let r = subclust(&["run", "--config", p(&cfg), "--eps-sp", "10", "--workers", "2", "--dump-relations", "--in", p(&data), "--out", p(&res)]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    assert!(stdout(&r).contains("cluster_count = 6"), "{}", stdout(&r));
    for f in ["clusters.csv", "outliers.csv", "subtrajectories.csv", "metrics.txt", "timings.txt", "sp.0.txt", "sp.1.txt", "cuts.csv"] {
        assert!(res.join(f).exists(), "{f}");
    }

    let e = subclust(&["evaluate", "--result", p(&res), "--truth", p(&scene.join("truth.csv"))]);
    assert!(e.status.success());
    let text = stdout(&e);
    assert!(text.contains("accuracy = 1.000000"), "{text}");
    assert!(text.contains("f_measure = 1.000000"), "{text}");
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene");
    assert!(subclust(&["generate", "--scenario", "tsa", "--replication", "1", "--out", p(&scene)]).status.success());
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "detector = tsa1\neps_sp = 10\n").unwrap();
    let data = scene.join("data.csv");
    let run = |extra: &[&str], out: &str| {
        let out = dir.path().join(out);
        let mut args = vec!["run", "--config", p(&cfg), "--in", p(&data), "--out", p(&out), "--dump-relations"];
        args.extend_from_slice(extra);
        assert!(subclust(&args).status.success());
        std::fs::read_to_string(out.join("cuts.csv")).unwrap()
    };
    let tsa1 = run(&[], "a");
    let tsa2 = run(&["--detector", "tsa2"], "b");
    assert!(!tsa1.contains("1,50"));
    assert!(tsa2.contains("1,50"));
}

#[test]
fn relative_flags_accept_percentages() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene");
    assert!(subclust(&["generate", "--scenario", "tsa", "--out", p(&scene)]).status.success());
    let out = dir.path().join("res");
    let data = scene.join("data.csv");
    let r = subclust(&["run", "--eps-sp", "1%", "--eps-t", "50%", "--delta-t", "100%", "--in", p(&data), "--out", p(&out)]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let metrics = std::fs::read_to_string(out.join("metrics.txt")).unwrap();
    assert!(metrics.contains("delta_t = 10.000000"), "{metrics}");
}

#[test]
fn config_errors_exit_with_1() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, "no_such_key = 3\n").unwrap();
    let r = subclust(&["run", "--config", p(&bad), "--in", "x.csv", "--out", p(dir.path())]);
    assert_eq!(r.status.code(), Some(1));

    let r = subclust(&["run", "--workers", "0", "--in", "x.csv", "--out", p(dir.path())]);
    assert_eq!(r.status.code(), Some(1));

    let r = subclust(&["generate", "--scenario", "spiral", "--out", p(dir.path())]);
    assert_eq!(r.status.code(), Some(1));
}

#[test]
fn data_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.csv");
    let r = subclust(&["run", "--in", p(&missing), "--out", p(&dir.path().join("o"))]);
    assert_eq!(r.status.code(), Some(2));

    let garbage = dir.path().join("garbage.csv");
    std::fs::write(&garbage, "a,b\n1,2\n").unwrap();
    let r = subclust(&["run", "--in", p(&garbage), "--out", p(&dir.path().join("o"))]);
    assert_eq!(r.status.code(), Some(2));

    let r = subclust(&["evaluate", "--result", p(&dir.path().join("nothing")), "--truth", p(&garbage)]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn partition_writes_borders() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene");
    assert!(subclust(&["generate", "--scenario", "star", "--out", p(&scene)]).status.success());
    let borders = dir.path().join("borders.txt");
    let data = scene.join("data.csv");
    let r = subclust(&["partition", "--in", p(&data), "-P", "4", "--out", p(&borders)]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let tp = subclust_core::partition::TemporalPartitioning::load(&borders).unwrap();
    assert_eq!(tp.partition_count(), 4);

    let r = subclust(&["partition", "--in", p(&data), "-P", "0", "--out", p(&borders)]);
    assert_eq!(r.status.code(), Some(1));
}
