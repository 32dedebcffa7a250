use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use dntwin_core::harness::{
    plan_sweep, replay_experiment, run_experiment, run_sweep, Axis, ExperimentConfig, Manifest, Pipeline, RunStatus,
};
use dntwin_core::netmodel::{generate_trace, RequestTrace};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn smoke(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(&configs_dir().join(format!("smoke_{name}.toml"))).unwrap()
}

/// Every CSV has a header, a constant column count, and any column whose
/// name marks a rate or fraction stays in [0, 1].
fn check_csv(path: &Path) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().clone();
    assert!(!header.is_empty(), "{} has no header", path.display());
    let rate_cols: Vec<usize> = header
        .iter()
        .enumerate()
        .filter(|(_, h)| h.contains("rate") || h.ends_with("load"))
        .map(|(i, _)| i)
        .collect();
    let mut rows = 0;
    for rec in r.records() {
        let rec = rec.unwrap();
        assert_eq!(rec.len(), header.len(), "{}", path.display());
        for &c in &rate_cols {
            let v: f64 = rec[c].parse().unwrap();
            assert!((0.0..=1.0).contains(&v), "{}: {} = {v}", path.display(), &header[c]);
        }
        rows += 1;
    }
    assert!(rows > 0, "{} is empty", path.display());
}

fn check_metrics(path: &Path) {
    check_csv(path);
    let mut r = csv::Reader::from_path(path).unwrap();
    assert_eq!(r.headers().unwrap().iter().collect::<Vec<_>>(), ["metric", "value"]);
    for rec in r.records() {
        let rec = rec.unwrap();
        let v: f64 = rec[1].parse().unwrap();
        assert!(v.is_finite(), "{} is not finite", &rec[0]);
        if rec[0].contains("rate") || rec[0].ends_with("load") {
            assert!((0.0..=1.0).contains(&v), "{} = {v}", &rec[0]);
        }
    }
}

#[test]
fn example_configs_round_trip_to_a_fixed_point() {
    let mut seen = 0;
    for entry in fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            cfg.check_round_trip().unwrap();
            let canonical = cfg.to_toml().unwrap();
            let again = ExperimentConfig::from_toml_str(&canonical, "again").unwrap();
            assert_eq!(again.to_toml().unwrap(), canonical);
            assert_eq!(again.config_hash().unwrap(), cfg.config_hash().unwrap());
            seen += 1;
        }
    }
    assert!(seen >= 5);
}

#[test]
fn runs_are_byte_identical_and_schema_clean() {
    for name in ["caching", "fedtwin", "frl"] {
        let cfg = smoke(name);
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let sa = run_experiment(&cfg, a.path()).unwrap();
        let sb = run_experiment(&cfg, b.path()).unwrap();
        assert_eq!(sa.status, RunStatus::Ok);
        assert_eq!(sa.metrics, sb.metrics);
        assert_eq!(sa.config_hash, cfg.config_hash().unwrap());
        for art in &sa.artifacts {
            let x = fs::read(a.path().join(art)).unwrap();
            let y = fs::read(b.path().join(art)).unwrap();
            assert!(x == y, "{name}: {art} differs between runs");
            if art.ends_with(".csv") {
                check_csv(&a.path().join(art));
            }
        }
        check_metrics(&a.path().join("metrics.csv"));
        let manifest: Manifest = serde_json::from_slice(&fs::read(a.path().join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest.config_hash, sa.config_hash);
        assert!(manifest.files.contains_key("metrics.csv"));
        let summary: serde_json::Value = serde_json::from_slice(&fs::read(a.path().join("summary.json")).unwrap()).unwrap();
        assert_eq!(summary["status"], "ok");
    }
}

#[test]
fn different_seeds_change_results() {
    let cfg = smoke("caching");
    let mut other = cfg.clone();
    other.seed += 1;
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let sa = run_experiment(&cfg, a.path()).unwrap();
    let sb = run_experiment(&other, b.path()).unwrap();
    assert_ne!(sa.config_hash, sb.config_hash);
    assert_ne!(fs::read(a.path().join("eval_log.csv")).unwrap(), fs::read(b.path().join("eval_log.csv")).unwrap());
}

#[test]
fn sweep_merges_by_cell_and_survives_failures() {
    let base = smoke("fedtwin");
    let axes: Vec<Axis> = vec!["fedtwin.method.k=2,3".parse().unwrap()];
    let runs = plan_sweep(&base, &axes, 2).unwrap();
    assert_eq!(runs.len(), 4);
    let dir = tempfile::tempdir().unwrap();
    // A file where the third run's directory should go makes that run fail.
    let blocked = runs[2].config.output_dir.clone().unwrap();
    fs::write(dir.path().join(&blocked), "occupied").unwrap();
    let report = run_sweep(runs, dir.path(), 2).unwrap();
    assert_eq!(report.failures(), 1);
    assert!(report.outcomes[2].result.is_err());
    let cells: Vec<usize> = report.outcomes.iter().map(|o| o.run.cell).collect();
    assert_eq!(cells, [0, 0, 1, 1]);

    let mut r = csv::Reader::from_path(dir.path().join("aggregate.csv")).unwrap();
    let header: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, ["cell", "fedtwin.method.k", "metric", "runs", "failed", "mean", "min", "max"]);
    let mut by_cell: BTreeMap<(String, String), (String, String, f64, f64, f64)> = BTreeMap::new();
    for rec in r.records() {
        let rec = rec.unwrap();
        by_cell.insert(
            (rec[0].to_string(), rec[2].to_string()),
            (rec[3].to_string(), rec[4].to_string(), rec[5].parse().unwrap(), rec[6].parse().unwrap(), rec[7].parse().unwrap()),
        );
    }
    let (runs0, failed0, ..) = &by_cell[&("0".into(), "final_loss".into())];
    assert_eq!((runs0.as_str(), failed0.as_str()), ("2", "0"));
    let (runs1, failed1, mean, min, max) = &by_cell[&("1".into(), "final_loss".into())];
    assert_eq!((runs1.as_str(), failed1.as_str()), ("1", "1"));
    assert!(min <= mean && mean <= max);
    assert_eq!(by_cell[&("1".into(), "clusters".into())].2, 3.0);

    let runs_csv = fs::read_to_string(dir.path().join("runs.csv")).unwrap();
    assert_eq!(runs_csv.lines().filter(|l| l.contains(",failed,")).count(), 1);
}

#[test]
fn sweep_without_axes_is_a_single_run() {
    let base = smoke("fedtwin");
    let runs = plan_sweep(&base, &[], 1).unwrap();
    assert_eq!(runs.len(), 1);
    let dir = tempfile::tempdir().unwrap();
    let report = run_sweep(runs, dir.path(), 1).unwrap();
    assert_eq!(report.failures(), 0);
    check_csv(&dir.path().join("aggregate.csv"));
}

#[test]
fn frl_sweep_emits_attack_by_rule_heatmap() {
    let mut base = smoke("frl");
    base.frl.rounds = 1;
    base.frl.local_episodes = 2;
    let axes: Vec<Axis> = vec![
        "frl.attack=sign_flip,zero_update".parse().unwrap(),
        "frl.rule=mean,trimmed_mean(0.2)".parse().unwrap(),
    ];
    let dir = tempfile::tempdir().unwrap();
    let report = run_sweep(plan_sweep(&base, &axes, 1).unwrap(), dir.path(), 2).unwrap();
    assert_eq!(report.failures(), 0);
    let path = dir.path().join("heatmap.csv");
    check_csv(&path);
    let mut r = csv::Reader::from_path(&path).unwrap();
    let cells: Vec<(String, String)> = r.records().map(|x| x.unwrap()).map(|x| (x[0].to_string(), x[1].to_string())).collect();
    assert_eq!(
        cells,
        [
            ("sign_flip".into(), "mean".into()),
            ("sign_flip".into(), "trimmed_mean(0.2)".into()),
            ("zero_update".into(), "mean".into()),
            ("zero_update".into(), "trimmed_mean(0.2)".into()),
        ]
    );
}

#[test]
fn replay_evaluates_the_recorded_trace() {
    let cfg = smoke("caching");
    let net = &cfg.caching.config.env.network;
    let trace = generate_trace(net, 120, &mut ChaCha8Rng::seed_from_u64(99)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    trace.save(&path).unwrap();
    let loaded = RequestTrace::load(&path).unwrap();
    let s = replay_experiment(&cfg, &loaded, &dir.path().join("run")).unwrap();
    assert_eq!(s.metrics["requests"], trace.len() as f64);
    let again = replay_experiment(&cfg, &loaded, &dir.path().join("run2")).unwrap();
    assert_eq!(s.metrics, again.metrics);

    let mut bad = trace.clone();
    bad.requests[0].bs_id = net.num_bs as u32;
    let err_dir = dir.path().join("bad");
    assert!(replay_experiment(&cfg, &bad, &err_dir).is_err());
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(err_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["status"], "failed");
}

#[test]
fn run_dir_defaults_to_hash_under_root() {
    let cfg = ExperimentConfig::new(Pipeline::Fedtwin, 5);
    let dir = cfg.run_dir(Path::new("/x")).unwrap();
    let name = dir.file_name().unwrap().to_str().unwrap().to_string();
    assert!(name.starts_with("fedtwin-") && name.ends_with("-s5"), "{name}");
    let mut named = cfg.clone();
    named.output_dir = Some("mine".into());
    assert_eq!(named.run_dir(Path::new("/x")).unwrap(), Path::new("/x/mine"));
}
