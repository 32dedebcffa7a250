use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::forecast::Forecaster;
use crate::error::{Error, Result};
use crate::netmodel::{sample_request, DiscreteSampler, Request, RequestTrace, Workload};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioLabel {
    Common,
    Rare,
}

/// A what-if episode: a request segment and the station loads it starts from.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub label: ScenarioLabel,
    pub trace: RequestTrace,
    pub initial_loads: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Requests per scenario.
    pub length: usize,
    /// Flattening temperature for rare scenarios.
    pub rare_temperature: f64,
    pub common_load: (f64, f64),
    pub rare_load: (f64, f64),
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            length: 64,
            rare_temperature: 3.0,
            common_load: (0.1, 0.5),
            rare_load: (0.5, 0.95),
        }
    }
}

fn tempered(probs: &[f32], temperature: f64) -> Vec<f64> {
    let inv = 1.0 / temperature;
    probs.iter().map(|&p| (p as f64).max(1e-300).powf(inv)).collect()
}

/// Samples `n` scenarios. Each is labeled rare with probability
/// `rarity_mix`; content ids are drawn autoregressively from the forecaster,
/// flattened by the rare temperature for rare scenarios. Clients and
/// stations follow the workload.
pub fn generate_scenarios<R: Rng + ?Sized>(
    forecaster: &Forecaster,
    workload: &Workload,
    cfg: &ScenarioConfig,
    n: usize,
    rarity_mix: f64,
    rng: &mut R,
) -> Result<Vec<Scenario>> {
    if n == 0 {
        return Err(Error::invalid("need at least one scenario"));
    }
    if !(0.0..=1.0).contains(&rarity_mix) {
        return Err(Error::invalid(format!("rarity_mix {rarity_mix} outside [0, 1]")));
    }
    if cfg.length == 0 || !(cfg.rare_temperature > 0.0) {
        return Err(Error::invalid("scenario length and temperature must be positive"));
    }
    let net = workload.config();
    if forecaster.vocab() != net.catalog_size {
        return Err(Error::DimensionMismatch {
            expected: net.catalog_size,
            actual: forecaster.vocab(),
        });
    }
    let model = &forecaster.model;
    let per_tick = net.requests_per_tick.max(1);
    (0..n)
        .map(|_| {
            let label = if rng.random::<f64>() < rarity_mix {
                ScenarioLabel::Rare
            } else {
                ScenarioLabel::Common
            };
            let temperature = match label {
                ScenarioLabel::Common => 1.0,
                ScenarioLabel::Rare => cfg.rare_temperature,
            };
            let mut h = model.initial_state();
            let mut requests = Vec::with_capacity(cfg.length);
            for i in 0..cfg.length {
                let probs = model.distribution(&h);
                let content = DiscreteSampler::new(&tempered(&probs, temperature))?.sample(rng);
                h = model.advance(&h, content)?;
                let tick = (i / per_tick) as u64;
                let placed = sample_request(workload, tick, rng);
                requests.push(Request {
                    content_id: content as u32,
                    ..placed
                });
            }
            let (lo, hi) = match label {
                ScenarioLabel::Common => cfg.common_load,
                ScenarioLabel::Rare => cfg.rare_load,
            };
            let initial_loads = (0..net.num_bs).map(|_| rng.random_range(lo..hi)).collect();
            Ok(Scenario {
                label,
                trace: RequestTrace { requests },
                initial_loads,
            })
        })
        .collect()
}

#[derive(Serialize)]
struct ManifestEntry<'a> {
    index: usize,
    label: ScenarioLabel,
    file: &'a str,
    requests: usize,
    initial_loads: &'a [f64],
}

#[derive(Serialize)]
struct ScenarioManifest<'a> {
    schema_version: u32,
    scenarios: Vec<ManifestEntry<'a>>,
}

/// Writes one trace CSV per scenario into `dir` plus `manifest.json`.
pub fn export_scenarios(scenarios: &[Scenario], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let names: Vec<String> = (0..scenarios.len()).map(|i| format!("scenario_{i:04}.csv")).collect();
    for (s, name) in scenarios.iter().zip(&names) {
        s.trace.save(&dir.join(name))?;
    }
    let manifest = ScenarioManifest {
        schema_version: 1,
        scenarios: scenarios
            .iter()
            .zip(&names)
            .enumerate()
            .map(|(index, (s, file))| ManifestEntry {
                index,
                label: s.label,
                file,
                requests: s.trace.len(),
                initial_loads: &s.initial_loads,
            })
            .collect(),
    };
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))
}
