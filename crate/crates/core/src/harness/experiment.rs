//! Config-driven runs: strict loading, hashing, artifacts, sweeps and
//! trace replay.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::caching::{run_caching_with, CachingConfig, CachingVariant};
use super::merge::{from_value, overlay_value, parse_scalar, set_dotted};
use crate::error::{Error, Result};
use crate::fedtwin::{run_fedtwin, write_rounds_csv, FedTwinConfig};
use crate::netmodel::RequestTrace;
use crate::securefrl::{run_frl, write_frl_rounds_csv, write_heatmap_csv, FrlConfig, HeatmapCell};

/// Environment variable naming the directory runs are written under.
pub const OUTPUT_ROOT_ENV: &str = "DNTWIN_OUT";
const DEFAULT_OUTPUT_ROOT: &str = "runs";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    Caching,
    Fedtwin,
    Frl,
}

impl Pipeline {
    pub fn name(self) -> &'static str {
        match self {
            Self::Caching => "caching",
            Self::Fedtwin => "fedtwin",
            Self::Frl => "frl",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CachingRun {
    pub variant: CachingVariant,
    pub config: CachingConfig,
}

impl Default for CachingRun {
    fn default() -> Self {
        Self {
            variant: CachingVariant::Full,
            config: CachingConfig::default(),
        }
    }
}

/// Top-level experiment file. Only `pipeline` and `seed` are required; every
/// other key overrides a default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub pipeline: Pipeline,
    pub seed: u64,
    /// Run directory, relative to the output root unless absolute.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    #[serde(default)]
    pub caching: CachingRun,
    #[serde(default)]
    pub fedtwin: FedTwinConfig,
    #[serde(default)]
    pub frl: FrlConfig,
}

const REQUIRED_KEYS: [&str; 2] = ["pipeline", "seed"];

impl ExperimentConfig {
    pub fn new(pipeline: Pipeline, seed: u64) -> Self {
        Self {
            pipeline,
            seed,
            output_dir: None,
            caching: CachingRun::default(),
            fedtwin: FedTwinConfig::default(),
            frl: FrlConfig::default(),
        }
    }

    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self> {
        let table = toml::from_str::<toml::Table>(text).map_err(|e| Error::Config {
            path: String::new(),
            message: format!("{origin}: {}", e.message()),
        })?;
        Self::from_table(table, origin)
    }

    fn from_table(table: toml::Table, origin: &str) -> Result<Self> {
        for key in REQUIRED_KEYS {
            if !table.contains_key(key) {
                return Err(Error::Config {
                    path: key.to_string(),
                    message: format!("{origin}: missing required key"),
                });
            }
        }
        let cfg: Self = overlay_value(&Self::new(Pipeline::Caching, 0), toml::Value::Table(table), origin)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    /// Checks every parameter block, not only the active one.
    pub fn validate(&self) -> Result<()> {
        self.caching.config.validate()?;
        self.fedtwin.validate()?;
        self.frl.validate()?;
        if self.output_dir.as_deref() == Some("") {
            return Err(Error::Config {
                path: "output_dir".into(),
                message: "must not be empty".into(),
            });
        }
        Ok(())
    }

    /// Full config with every default spelled out.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config {
            path: String::new(),
            message: e.to_string(),
        })
    }

    /// Compact JSON with sorted keys; the input to [`Self::config_hash`].
    pub fn canonical_json(&self) -> Result<String> {
        Ok(serde_json::to_value(self)?.to_string())
    }

    /// SHA-256 of the canonical JSON, hex encoded.
    pub fn config_hash(&self) -> Result<String> {
        Ok(sha256_hex(self.canonical_json()?.as_bytes()))
    }

    /// Parses the canonical TOML back and checks it reproduces `self`.
    pub fn check_round_trip(&self) -> Result<()> {
        let again = Self::from_toml_str(&self.to_toml()?, "<canonical>")?;
        if &again != self || again.to_toml()? != self.to_toml()? {
            return Err(Error::Config {
                path: String::new(),
                message: "config does not round-trip to a fixed point".into(),
            });
        }
        Ok(())
    }

    /// Copy with dotted-key overrides applied, validated like a loaded file.
    pub fn with_overrides(&self, overrides: &[(String, toml::Value)]) -> Result<Self> {
        let mut value = toml::Value::try_from(self).map_err(|e| Error::Config {
            path: String::new(),
            message: e.to_string(),
        })?;
        for (key, v) in overrides {
            set_dotted(&mut value, key, v.clone())?;
        }
        let cfg: Self = from_value(value, "override")?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Directory a run of this config writes to under `root`.
    pub fn run_dir(&self, root: &Path) -> Result<PathBuf> {
        Ok(match &self.output_dir {
            Some(d) => root.join(d),
            None => root.join(format!("{}-{}-s{}", self.pipeline.name(), &self.config_hash()?[..12], self.seed)),
        })
    }
}

/// Output root from [`OUTPUT_ROOT_ENV`], defaulting to `./runs`.
pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_ENV)
        .filter(|v| !v.is_empty())
        .map_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT), PathBuf::from)
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub pipeline: Pipeline,
    pub seed: u64,
    pub config_hash: String,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub metrics: BTreeMap<String, f64>,
    pub wall_clock_secs: f64,
    /// Artifact paths relative to the run directory.
    pub artifacts: Vec<String>,
}

/// Artifact bookkeeping for one run directory.
struct Artifacts<'a> {
    dir: &'a Path,
    names: Vec<String>,
}

impl<'a> Artifacts<'a> {
    fn write(&mut self, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
        let path = self.dir.join(name);
        let mut w = BufWriter::new(File::create(&path).map_err(|e| Error::io(&path, e))?);
        f(&mut w)?;
        w.flush().map_err(|e| Error::io(&path, e))?;
        self.names.push(name.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            writeln!(w).map_err(|e| Error::io(name, e))
        })
    }
}

/// `metric,value` rows in key order.
pub fn write_metrics_csv<W: Write>(metrics: &BTreeMap<String, f64>, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["metric", "value"])?;
    for (k, v) in metrics {
        w.write_record([k.clone(), v.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("metrics csv", e))?;
    Ok(())
}

type Metrics = BTreeMap<String, f64>;

fn put(m: &mut Metrics, key: &str, value: f64) {
    m.insert(key.to_string(), value);
}

fn run_caching_pipeline(cfg: &ExperimentConfig, trace: Option<&RequestTrace>, out: &mut Artifacts) -> Result<Metrics> {
    let run = &cfg.caching;
    let o = run_caching_with(&run.config, run.variant, cfg.seed, trace)?;
    let mut m = Metrics::new();
    put(&mut m, "hit_rate", o.eval.hit_rate);
    put(&mut m, "requests", o.eval.requests as f64);
    put(&mut m, "max_avg_load", o.eval.max_avg_load);
    put(&mut m, "min_avg_load", o.eval.min_avg_load);
    put(&mut m, "max_bs_load", o.eval.max_bs_load);
    put(&mut m, "min_bs_load", o.eval.min_bs_load);
    put(&mut m, "interventions", o.eval.interventions as f64);
    put(&mut m, "intervention_rate", o.eval.intervention_rate);
    put(&mut m, "total_reward", o.eval.total_reward);
    put(&mut m, "train_hit_rate", o.train.hit_rate);
    put(&mut m, "train_intervention_rate", o.train.intervention_rate);
    if let Some(&l) = o.forecaster_losses.last() {
        put(&mut m, "forecaster_loss", l);
    }

    out.write("eval_log.csv", |w| o.eval_log.write_csv(w))?;
    out.write("station_loads.csv", |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record(["bs", "avg_load", "final_load"])?;
        for (bs, (a, f)) in o.eval.avg_loads.iter().zip(o.eval_log.final_loads()).enumerate() {
            c.write_record([bs.to_string(), a.to_string(), f.to_string()])?;
        }
        c.flush().map_err(|e| Error::io("station_loads.csv", e))
    })?;
    if !o.forecaster_losses.is_empty() {
        out.write("forecaster_losses.csv", |w| {
            let mut c = csv::Writer::from_writer(w);
            c.write_record(["epoch", "loss"])?;
            for (i, l) in o.forecaster_losses.iter().enumerate() {
                c.write_record([i.to_string(), l.to_string()])?;
            }
            c.flush().map_err(|e| Error::io("forecaster_losses.csv", e))
        })?;
    }
    Ok(m)
}

fn run_fedtwin_pipeline(cfg: &ExperimentConfig, out: &mut Artifacts) -> Result<Metrics> {
    let r = run_fedtwin(&cfg.fedtwin, cfg.seed)?;
    let mut m = Metrics::new();
    put(&mut m, "initial_loss", r.initial_loss);
    put(&mut m, "final_loss", r.final_loss());
    put(&mut m, "rounds", r.rounds.len() as f64);
    put(&mut m, "clusters", r.partition.cluster_count() as f64);
    put(&mut m, "modularity", r.partition.modularity);
    put(&mut m, "initial_modularity", r.initial_partition.modularity);
    put(&mut m, "reclusterings", r.reclusterings as f64);

    out.write("rounds.csv", |w| write_rounds_csv(&r.rounds, w))?;
    let partitions = BTreeMap::from([("initial", r.initial_partition.to_map()), ("final", r.partition.to_map())]);
    out.json("partition.json", &partitions)?;
    Ok(m)
}

/// Heatmap label of the attack, `none` when no agent is adversarial.
pub fn attack_label(cfg: &FrlConfig) -> String {
    if cfg.adversaries() == 0 {
        "none".into()
    } else {
        cfg.attack.label()
    }
}

fn run_frl_pipeline(cfg: &ExperimentConfig, out: &mut Artifacts) -> Result<Metrics> {
    let r = run_frl(&cfg.frl, cfg.seed)?;
    let rates: Vec<f64> = r.rounds.iter().map(|x| x.no_collision_rate).collect();
    let mut m = Metrics::new();
    put(&mut m, "no_collision_rate", r.final_rate());
    put(&mut m, "mean_no_collision_rate", rates.iter().sum::<f64>() / rates.len().max(1) as f64);
    put(&mut m, "min_no_collision_rate", rates.iter().copied().fold(f64::INFINITY, f64::min).min(1.0));
    put(&mut m, "rounds", r.rounds.len() as f64);
    put(&mut m, "adversaries", cfg.frl.adversaries() as f64);
    put(&mut m, "fallback_rounds", r.rounds.iter().filter(|x| x.fallback).count() as f64);
    put(
        &mut m,
        "mean_kept",
        r.rounds.iter().map(|x| x.kept as f64).sum::<f64>() / r.rounds.len().max(1) as f64,
    );

    out.write("rounds.csv", |w| write_frl_rounds_csv(&r.rounds, w))?;
    let cell = HeatmapCell {
        attack: attack_label(&cfg.frl),
        rule: cfg.frl.rule.label(),
        agents: cfg.frl.agents,
        no_collision_rate: r.final_rate(),
    };
    out.write("heatmap.csv", |w| write_heatmap_csv(&[cell], w))?;
    Ok(m)
}

/// Runs `cfg` into `dir`, writing `config.toml`, pipeline artifacts,
/// `metrics.csv`, `manifest.json` and `summary.json`. A failed run still
/// writes a summary with status `failed` next to whatever was produced.
pub fn run_experiment(cfg: &ExperimentConfig, dir: &Path) -> Result<RunSummary> {
    execute(cfg, dir, None)
}

/// Caching run evaluated on a recorded request trace.
pub fn replay_experiment(cfg: &ExperimentConfig, trace: &RequestTrace, dir: &Path) -> Result<RunSummary> {
    if cfg.pipeline != Pipeline::Caching {
        return Err(Error::Config {
            path: "pipeline".into(),
            message: format!("replay needs the caching pipeline, got {}", cfg.pipeline.name()),
        });
    }
    execute(cfg, dir, Some(trace))
}

fn execute(cfg: &ExperimentConfig, dir: &Path, trace: Option<&RequestTrace>) -> Result<RunSummary> {
    cfg.validate()?;
    let hash = cfg.config_hash()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Artifacts { dir, names: Vec::new() };
    let text = cfg.to_toml()?;
    out.write("config.toml", |w| w.write_all(text.as_bytes()).map_err(|e| Error::io("config.toml", e)))?;

    let start = Instant::now();
    let result = match cfg.pipeline {
        Pipeline::Caching => run_caching_pipeline(cfg, trace, &mut out),
        Pipeline::Fedtwin => run_fedtwin_pipeline(cfg, &mut out),
        Pipeline::Frl => run_frl_pipeline(cfg, &mut out),
    }
    .and_then(|m| {
        out.write("metrics.csv", |w| write_metrics_csv(&m, w))?;
        Ok(m)
    });
    let wall_clock_secs = start.elapsed().as_secs_f64();

    let (status, error, metrics) = match &result {
        Ok(m) => (RunStatus::Ok, None, m.clone()),
        Err(e) => (RunStatus::Failed, Some(e.to_string()), Metrics::new()),
    };
    let manifest = Manifest {
        pipeline: cfg.pipeline,
        seed: cfg.seed,
        config_hash: hash.clone(),
        status,
        files: out
            .names
            .iter()
            .map(|n| {
                let path = dir.join(n);
                let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
                Ok((n.clone(), sha256_hex(&bytes)))
            })
            .collect::<Result<_>>()?,
    };
    out.json("manifest.json", &manifest)?;
    let summary = RunSummary {
        pipeline: cfg.pipeline,
        seed: cfg.seed,
        config_hash: hash,
        status,
        error,
        metrics,
        wall_clock_secs,
        artifacts: out.names.clone(),
    };
    let summary_path = dir.join("summary.json");
    let f = File::create(&summary_path).map_err(|e| Error::io(&summary_path, e))?;
    serde_json::to_writer_pretty(BufWriter::new(f), &summary)?;
    result.map(|_| summary)
}

/// Content digests of a run's artifacts, keyed by the config hash.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub pipeline: Pipeline,
    pub seed: u64,
    pub config_hash: String,
    pub status: RunStatus,
    /// Artifact name to SHA-256 of its bytes.
    pub files: BTreeMap<String, String>,
}

/// One sweep axis: a dotted config key and the values it takes.
#[derive(Clone, Debug, PartialEq)]
pub struct Axis {
    pub key: String,
    pub values: Vec<String>,
}

impl FromStr for Axis {
    type Err = Error;

    /// Parses `key=v1,v2`; commas inside brackets or parentheses do not
    /// split values.
    fn from_str(s: &str) -> Result<Self> {
        let bad = |message: &str| Error::Config {
            path: s.to_string(),
            message: message.to_string(),
        };
        let (key, rest) = s.split_once('=').ok_or_else(|| bad("axis must look like key=v1,v2"))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(bad("empty axis key"));
        }
        let mut values = Vec::new();
        let (mut depth, mut cur) = (0i32, String::new());
        for ch in rest.chars() {
            match ch {
                '[' | '(' | '{' => depth += 1,
                ']' | ')' | '}' => depth -= 1,
                _ => {}
            }
            if ch == ',' && depth == 0 {
                values.push(std::mem::take(&mut cur).trim().to_string());
            } else {
                cur.push(ch);
            }
        }
        values.push(cur.trim().to_string());
        if depth != 0 || values.iter().any(String::is_empty) {
            return Err(bad("unbalanced brackets or empty value in axis"));
        }
        Ok(Self {
            key: key.to_string(),
            values,
        })
    }
}

/// One planned sweep run.
#[derive(Clone, Debug)]
pub struct SweepRun {
    pub cell: usize,
    /// `(key, value)` for each axis, in axis order.
    pub assignment: Vec<(String, String)>,
    pub config: ExperimentConfig,
}

/// Expands the axis cross-product times `seeds` consecutive seeds starting
/// at the base seed. Every cell config is built and validated up front.
pub fn plan_sweep(base: &ExperimentConfig, axes: &[Axis], seeds: usize) -> Result<Vec<SweepRun>> {
    if seeds == 0 {
        return Err(Error::Config {
            path: "seeds".into(),
            message: "need at least one seed".into(),
        });
    }
    let mut cells: Vec<Vec<(String, String)>> = vec![Vec::new()];
    for axis in axes {
        cells = cells
            .into_iter()
            .flat_map(|prefix| {
                axis.values.iter().map(move |v| {
                    let mut next = prefix.clone();
                    next.push((axis.key.clone(), v.clone()));
                    next
                })
            })
            .collect();
    }
    let mut runs = Vec::with_capacity(cells.len() * seeds);
    for (cell, assignment) in cells.into_iter().enumerate() {
        let overrides: Vec<(String, toml::Value)> =
            assignment.iter().map(|(k, v)| (k.clone(), parse_scalar(v))).collect();
        let cell_cfg = base.with_overrides(&overrides)?;
        for s in 0..seeds as u64 {
            let seed = base.seed.checked_add(s).ok_or_else(|| Error::invalid("seed overflow"))?;
            let mut config = cell_cfg.clone();
            config.seed = seed;
            config.output_dir = Some(format!("cell{cell:03}_seed{seed}"));
            runs.push(SweepRun {
                cell,
                assignment: assignment.clone(),
                config,
            });
        }
    }
    Ok(runs)
}

/// Hash of the base config, axes and seed count; names a sweep directory.
pub fn sweep_id(base: &ExperimentConfig, axes: &[Axis], seeds: usize) -> Result<String> {
    let mut text = base.canonical_json()?;
    for a in axes {
        text.push('\n');
        text.push_str(&a.key);
        text.push('=');
        text.push_str(&a.values.join(","));
    }
    text.push_str(&format!("\nseeds={seeds}"));
    Ok(sha256_hex(text.as_bytes()))
}

#[derive(Clone, Debug)]
pub struct SweepOutcome {
    pub run: SweepRun,
    pub result: std::result::Result<RunSummary, String>,
}

#[derive(Clone, Debug)]
pub struct SweepReport {
    pub dir: PathBuf,
    pub outcomes: Vec<SweepOutcome>,
}

impl SweepReport {
    pub fn failures(&self) -> usize {
        self.outcomes.iter().filter(|o| o.result.is_err()).count()
    }
}

/// Runs every planned config on a pool of `jobs` workers, each into its
/// own directory under `dir`, then writes `runs.csv`, `aggregate.csv` and,
/// for FRL sweeps, `heatmap.csv`. Failed runs are recorded, not fatal.
pub fn run_sweep(runs: Vec<SweepRun>, dir: &Path, jobs: usize) -> Result<SweepReport> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::invalid(e.to_string()))?;
    let results: Vec<std::result::Result<RunSummary, String>> = pool.install(|| {
        runs.par_iter()
            .map(|r| {
                let run_dir = r.config.run_dir(dir).map_err(|e| e.to_string())?;
                run_experiment(&r.config, &run_dir).map_err(|e| e.to_string())
            })
            .collect()
    });
    let report = SweepReport {
        dir: dir.to_path_buf(),
        outcomes: runs
            .into_iter()
            .zip(results)
            .map(|(run, result)| SweepOutcome { run, result })
            .collect(),
    };
    write_sweep_tables(&report)?;
    Ok(report)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn write_sweep_tables(report: &SweepReport) -> Result<()> {
    let Some(first) = report.outcomes.first() else {
        return Ok(());
    };
    let keys: Vec<String> = first.run.assignment.iter().map(|(k, _)| k.clone()).collect();

    let mut w = csv::Writer::from_writer(create(&report.dir.join("runs.csv"))?);
    w.write_record(["cell", "seed", "status", "config_hash", "dir", "error"])?;
    for o in &report.outcomes {
        let (status, hash, err) = match &o.result {
            Ok(s) => ("ok", s.config_hash.clone(), String::new()),
            Err(e) => ("failed", String::new(), e.clone()),
        };
        w.write_record([
            o.run.cell.to_string(),
            o.run.config.seed.to_string(),
            status.into(),
            hash,
            o.run.config.output_dir.clone().unwrap_or_default(),
            err,
        ])?;
    }
    w.flush().map_err(|e| Error::io("runs.csv", e))?;

    // Cells are contiguous in plan order.
    let mut cells: Vec<Vec<&SweepOutcome>> = Vec::new();
    for o in &report.outcomes {
        match cells.last_mut() {
            Some(c) if c[0].run.cell == o.run.cell => c.push(o),
            _ => cells.push(vec![o]),
        }
    }

    let mut w = csv::Writer::from_writer(create(&report.dir.join("aggregate.csv"))?);
    let mut header = vec!["cell".to_string()];
    header.extend(keys.iter().cloned());
    header.extend(["metric", "runs", "failed", "mean", "min", "max"].map(String::from));
    w.write_record(&header)?;
    for cell in &cells {
        let ok: Vec<&RunSummary> = cell.iter().filter_map(|o| o.result.as_ref().ok()).collect();
        let failed = cell.len() - ok.len();
        let metric_names: Vec<&String> = ok.first().map(|s| s.metrics.keys().collect()).unwrap_or_default();
        let prefix = |row: &mut Vec<String>| {
            row.push(cell[0].run.cell.to_string());
            row.extend(cell[0].run.assignment.iter().map(|(_, v)| v.clone()));
        };
        if metric_names.is_empty() {
            let mut row = Vec::new();
            prefix(&mut row);
            row.extend(["", "0", &failed.to_string(), "", "", ""].map(String::from));
            w.write_record(&row)?;
        }
        for name in metric_names {
            let vals: Vec<f64> = ok.iter().filter_map(|s| s.metrics.get(name).copied()).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut row = Vec::new();
            prefix(&mut row);
            row.extend([
                name.clone(),
                vals.len().to_string(),
                failed.to_string(),
                mean.to_string(),
                min.to_string(),
                max.to_string(),
            ]);
            w.write_record(&row)?;
        }
    }
    w.flush().map_err(|e| Error::io("aggregate.csv", e))?;

    if first.run.config.pipeline == Pipeline::Frl {
        let heat: Vec<HeatmapCell> = cells
            .iter()
            .filter_map(|cell| {
                let rates: Vec<f64> = cell
                    .iter()
                    .filter_map(|o| o.result.as_ref().ok())
                    .filter_map(|s| s.metrics.get("no_collision_rate").copied())
                    .collect();
                if rates.is_empty() {
                    return None;
                }
                let frl = &cell[0].run.config.frl;
                Some(HeatmapCell {
                    attack: attack_label(frl),
                    rule: frl.rule.label(),
                    agents: frl.agents,
                    no_collision_rate: rates.iter().sum::<f64>() / rates.len() as f64,
                })
            })
            .collect();
        write_heatmap_csv(&heat, create(&report.dir.join("heatmap.csv"))?)?;
    }
    Ok(())
}
