use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn dntwin(args: &[&str], out_root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dntwin"))
        .args(args)
        .env("DNTWIN_OUT", out_root)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn validate_prints_hash_and_canonical_form() {
    let root = tempfile::tempdir().unwrap();
    let cfg = configs().join("frl_no_attack.toml");
    let o = dntwin(&["validate", cfg.to_str().unwrap()], root.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("config_hash = \""));
    assert!(text.contains("rule = \"mean\""));
}

#[test]
fn config_errors_exit_with_one_and_name_the_key() {
    let root = tempfile::tempdir().unwrap();
    let bad = root.path().join("bad.toml");

    fs::write(&bad, "pipeline = \"caching\"\n").unwrap();
    let o = dntwin(&["run", bad.to_str().unwrap()], root.path());
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("`seed`"), "{}", stderr(&o));

    fs::write(&bad, "pipeline = \"caching\"\nseed = 1\n[caching.config.dqn]\ngama = 0.9\n").unwrap();
    let o = dntwin(&["validate", bad.to_str().unwrap()], root.path());
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("caching.config.dqn.gama"), "{}", stderr(&o));

    fs::write(&bad, "pipeline = \"frl\"\nseed = 1\n[frl]\nagents = 0\n").unwrap();
    assert_eq!(code(&dntwin(&["run", bad.to_str().unwrap()], root.path())), 1);

    let cfg = configs().join("smoke_fedtwin.toml");
    let o = dntwin(&["sweep", cfg.to_str().unwrap(), "--axis", "fedtwin.method.k=2,zero"], root.path());
    assert_eq!(code(&o), 1, "{}", stderr(&o));

    assert_eq!(code(&dntwin(&["frobnicate"], root.path())), 1);
    assert_eq!(code(&dntwin(&["run", "/nonexistent/config.toml"], root.path())), 1);
}

#[test]
fn run_writes_under_output_root() {
    let root = tempfile::tempdir().unwrap();
    let cfg = configs().join("smoke_fedtwin.toml");
    let o = dntwin(&["run", cfg.to_str().unwrap()], root.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary["status"], "ok");
    let dir = root.path().join("smoke-fedtwin");
    for f in ["config.toml", "metrics.csv", "rounds.csv", "partition.json", "manifest.json", "summary.json"] {
        assert!(dir.join(f).is_file(), "missing {f}");
    }
}

#[test]
fn sweep_writes_aggregate_table() {
    let root = tempfile::tempdir().unwrap();
    let cfg = configs().join("smoke_fedtwin.toml");
    let out = root.path().join("sw");
    let o = dntwin(
        &["sweep", cfg.to_str().unwrap(), "--axis", "fedtwin.method.k=2,3", "--seeds", "2", "--jobs", "2", "--out", out.to_str().unwrap()],
        root.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let agg = fs::read_to_string(out.join("aggregate.csv")).unwrap();
    assert!(agg.starts_with("cell,fedtwin.method.k,metric,runs,failed,mean,min,max\n"));
    assert_eq!(fs::read_dir(&out).unwrap().filter(|e| e.as_ref().unwrap().path().is_dir()).count(), 4);
}

#[test]
fn replay_failures_exit_with_two() {
    let root = tempfile::tempdir().unwrap();
    let cfg = configs().join("smoke_caching.toml");
    let trace = root.path().join("trace.csv");
    // base station 99 does not exist in the configured network
    fs::write(&trace, "tick,content_id,client_id,bs_id\n0,1,1,99\n").unwrap();
    let o = dntwin(&["replay", trace.to_str().unwrap(), cfg.to_str().unwrap()], root.path());
    assert_eq!(code(&o), 2, "{}", stderr(&o));

    fs::write(&trace, "tick,content_id,client_id,bs_id\n0,1,1,0\n1,2,3,4\n").unwrap();
    let o = dntwin(&["replay", trace.to_str().unwrap(), cfg.to_str().unwrap()], root.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let frl = configs().join("smoke_frl.toml");
    let o = dntwin(&["replay", trace.to_str().unwrap(), frl.to_str().unwrap()], root.path());
    assert_eq!(code(&o), 1, "{}", stderr(&o));
}
