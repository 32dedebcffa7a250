//! Federated training of a next-request forecaster across cluster twins:
//! synchronous rounds first, then asynchronous staleness-weighted mixing.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::aggregate::{aggregate_sync, apply_async, AsyncState, ModelUpdate, StalenessMode};
use super::cluster::{cluster, ClusterMethod, ClusterPartition};
use super::graph::{build_affinity, AffinityGraph, AffinityWeights, BsAttributes};
use super::reform::reform_clusters;
use crate::error::{Error, Result};
use crate::harness::SeedTree;
use crate::learncore::{Optimizer, OptimizerKind, ParamVector, SeqDims, SequenceModel};
use crate::netmodel::{zipf_pmf, DiscreteSampler, ZipfParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FedTwinConfig {
    pub num_bs: usize,
    /// Stations are scattered around this many region centres.
    pub regions: usize,
    /// Side length of the square deployment area.
    pub area: f64,
    pub region_spread: f64,
    pub coverage_radius: (f64, f64),
    pub backhaul: (f64, f64),
    pub catalog_size: usize,
    pub zipf_exponent: f64,
    /// When true each region ranks the catalog differently; otherwise every
    /// station draws from the same popularity law.
    pub heterogeneous: bool,
    pub requests_per_bs: usize,
    /// Tail of every station's sequence kept for evaluation.
    pub holdout_fraction: f64,
    pub eval_windows: usize,
    pub window: usize,
    pub embed: usize,
    pub hidden: usize,
    pub method: ClusterMethod,
    pub affinity: AffinityWeights,
    pub rounds: u64,
    /// First asynchronous round; defaults to half of `rounds`.
    pub switch_round: Option<u64>,
    pub participation: f64,
    pub local_steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub alpha0: f64,
    pub staleness: StalenessMode,
    /// The last cluster delivers its asynchronous update only once the
    /// global model has moved this many versions past its base; 0 disables.
    pub straggler_staleness: u64,
    /// Rounds between affinity refreshes; 0 disables reformation.
    pub reform_every: u64,
    pub drift_threshold: f64,
    /// Relative jitter applied to backhaul capacities at each refresh.
    pub backhaul_drift: f64,
}

impl Default for FedTwinConfig {
    fn default() -> Self {
        Self {
            num_bs: 20,
            regions: 5,
            area: 10.0,
            region_spread: 0.6,
            coverage_radius: (0.5, 1.5),
            backhaul: (1.0, 10.0),
            catalog_size: 40,
            zipf_exponent: 1.0,
            heterogeneous: false,
            requests_per_bs: 300,
            holdout_fraction: 0.2,
            eval_windows: 400,
            window: 8,
            embed: 8,
            hidden: 16,
            method: ClusterMethod::FixedK { k: 5 },
            affinity: AffinityWeights::default(),
            rounds: 30,
            switch_round: None,
            participation: 1.0,
            local_steps: 5,
            batch: 16,
            lr: 0.5,
            alpha0: 0.6,
            staleness: StalenessMode::Hyperbolic,
            straggler_staleness: 5,
            reform_every: 20,
            drift_threshold: 0.2,
            backhaul_drift: 0.1,
        }
    }
}

impl FedTwinConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_bs < 2 || self.regions == 0 {
            return Err(Error::invalid("need at least two stations and one region"));
        }
        ZipfParams::new(self.zipf_exponent, self.catalog_size)?;
        if self.window == 0 || self.embed == 0 || self.hidden == 0 || self.batch == 0 || self.local_steps == 0 {
            return Err(Error::invalid("window, model sizes, batch and local_steps must be >= 1"));
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(Error::invalid("holdout_fraction must lie in (0, 1)"));
        }
        let train = self.train_len();
        if train <= self.window || self.requests_per_bs - train <= self.window {
            return Err(Error::InsufficientData {
                needed: 2 * (self.window + 1),
                actual: self.requests_per_bs,
            });
        }
        if self.eval_windows == 0 {
            return Err(Error::invalid("eval_windows must be >= 1"));
        }
        if self.switch_round() > self.rounds {
            return Err(Error::invalid("switch_round exceeds rounds"));
        }
        if !(self.participation > 0.0 && self.participation <= 1.0) {
            return Err(Error::invalid("participation must lie in (0, 1]"));
        }
        if !(self.alpha0 > 0.0 && self.alpha0 <= 1.0) {
            return Err(Error::invalid("alpha0 must lie in (0, 1]"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid("lr must be positive"));
        }
        let (r0, r1) = self.coverage_radius;
        let (b0, b1) = self.backhaul;
        if !(r0 > 0.0 && r1 >= r0 && b0 > 0.0 && b1 >= b0 && self.area > 0.0 && self.region_spread >= 0.0) {
            return Err(Error::invalid("bad topology ranges"));
        }
        if !(0.0..1.0).contains(&self.backhaul_drift) || self.drift_threshold < 0.0 {
            return Err(Error::invalid("backhaul_drift must lie in [0, 1) and drift_threshold >= 0"));
        }
        if let ClusterMethod::FixedK { k } = self.method {
            if k == 0 || k > self.num_bs {
                return Err(Error::invalid(format!("cannot form {k} clusters from {} stations", self.num_bs)));
            }
        }
        Ok(())
    }

    pub fn switch_round(&self) -> u64 {
        self.switch_round.unwrap_or(self.rounds / 2)
    }

    fn train_len(&self) -> usize {
        let hold = (self.requests_per_bs as f64 * self.holdout_fraction).round() as usize;
        self.requests_per_bs.saturating_sub(hold)
    }

    fn dims(&self) -> SeqDims {
        SeqDims {
            vocab: self.catalog_size,
            embed: self.embed,
            hidden: self.hidden,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundMode {
    Sync,
    Async,
}

impl RoundMode {
    pub fn name(self) -> &'static str {
        match self {
            Self::Sync => "sync",
            Self::Async => "async",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u64,
    pub mode: RoundMode,
    pub global_loss: f64,
    pub participants: usize,
    pub max_staleness: u64,
}

#[derive(Clone, Debug)]
pub struct FedTwinReport {
    /// Held-out loss of the initial model.
    pub initial_loss: f64,
    pub rounds: Vec<RoundRecord>,
    pub initial_partition: ClusterPartition,
    pub partition: ClusterPartition,
    pub reclusterings: usize,
    pub final_params: ParamVector<f32>,
}

impl FedTwinReport {
    pub fn final_loss(&self) -> f64 {
        self.rounds.last().map_or(self.initial_loss, |r| r.global_loss)
    }
}

/// Centralised reference: one learner over every station's data.
#[derive(Clone, Debug)]
pub struct CentralReport {
    pub initial_loss: f64,
    pub losses: Vec<f64>,
    pub final_params: ParamVector<f32>,
}

impl CentralReport {
    pub fn final_loss(&self) -> f64 {
        self.losses.last().copied().unwrap_or(self.initial_loss)
    }
}

/// Request sequences and station attributes shared by every learner.
#[derive(Clone, Debug)]
pub struct FedTwinData {
    pub sequences: Vec<Vec<usize>>,
    pub attributes: Vec<BsAttributes>,
    train_len: usize,
    eval: Vec<(usize, usize)>,
}

impl FedTwinData {
    pub fn generate(cfg: &FedTwinConfig, seeds: &SeedTree) -> Result<Self> {
        cfg.validate()?;
        let mut rng = seeds.rng("fedtwin/topology");
        let centres: Vec<(f64, f64)> = (0..cfg.regions)
            .map(|_| (rng.random::<f64>() * cfg.area, rng.random::<f64>() * cfg.area))
            .collect();
        let pmf = zipf_pmf(&ZipfParams::new(cfg.zipf_exponent, cfg.catalog_size)?)?;
        let sampler = DiscreteSampler::new(&pmf)?;
        let shift = cfg.catalog_size / cfg.regions.max(1);
        let mut traffic = seeds.rng("fedtwin/traffic");
        let mut sequences = Vec::with_capacity(cfg.num_bs);
        let mut positions = Vec::with_capacity(cfg.num_bs);
        for bs in 0..cfg.num_bs {
            let region = bs % cfg.regions;
            let (cx, cy) = centres[region];
            let jitter = |r: &mut ChaCha8Rng| (r.random::<f64>() * 2.0 - 1.0) * cfg.region_spread;
            positions.push((cx + jitter(&mut rng), cy + jitter(&mut rng)));
            let offset = if cfg.heterogeneous { region * shift } else { 0 };
            sequences.push(
                (0..cfg.requests_per_bs)
                    .map(|_| (sampler.sample(&mut traffic) + offset) % cfg.catalog_size)
                    .collect::<Vec<_>>(),
            );
        }
        let train_len = cfg.train_len();
        let attributes = positions
            .into_iter()
            .zip(&sequences)
            .map(|(position, seq)| {
                let mut hist = vec![0.0; cfg.catalog_size];
                for &c in &seq[..train_len] {
                    hist[c] += 1.0;
                }
                hist.iter_mut().for_each(|h| *h /= train_len as f64);
                BsAttributes {
                    position,
                    backhaul_capacity: rng.random_range(cfg.backhaul.0..=cfg.backhaul.1),
                    coverage_radius: rng.random_range(cfg.coverage_radius.0..=cfg.coverage_radius.1),
                    traffic_histogram: hist,
                }
            })
            .collect();

        let mut eval: Vec<(usize, usize)> = (0..cfg.num_bs)
            .flat_map(|bs| (train_len..cfg.requests_per_bs - cfg.window).map(move |s| (bs, s)))
            .collect();
        eval.shuffle(&mut seeds.rng("fedtwin/eval"));
        eval.truncate(cfg.eval_windows);
        eval.sort_unstable();
        Ok(Self {
            sequences,
            attributes,
            train_len,
            eval,
        })
    }

    /// Training windows `(station, start)` of the given stations, in
    /// station order.
    pub fn train_windows(&self, stations: &[usize], window: usize) -> Vec<(usize, usize)> {
        stations
            .iter()
            .flat_map(|&bs| (0..self.train_len - window).map(move |s| (bs, s)))
            .collect()
    }

    fn batch(&self, picks: &[(usize, usize)], window: usize) -> (Vec<&[usize]>, Vec<usize>) {
        picks
            .iter()
            .map(|&(bs, s)| (&self.sequences[bs][s..s + window], self.sequences[bs][s + window]))
            .unzip()
    }

    /// Mean cross-entropy on the held-out windows.
    pub fn eval_loss(&self, model: &SequenceModel<f32>, window: usize) -> Result<f64> {
        let (w, t) = self.batch(&self.eval, window);
        Ok(model.loss(&w, &t)? as f64)
    }
}

/// `steps` minibatch SGD steps on windows drawn uniformly with replacement.
pub fn local_train(
    model: &mut SequenceModel<f32>,
    data: &FedTwinData,
    pool: &[(usize, usize)],
    cfg: &FedTwinConfig,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    if pool.is_empty() {
        return Err(Error::Empty("training windows"));
    }
    let mut opt = Optimizer::new(OptimizerKind::Sgd, cfg.lr as f32, Some(5.0));
    let mut picks = Vec::with_capacity(cfg.batch);
    for _ in 0..cfg.local_steps {
        picks.clear();
        picks.extend((0..cfg.batch).map(|_| pool[rng.random_range(0..pool.len())]));
        let (w, t) = data.batch(&picks, cfg.window);
        let (_, grad) = model.loss_and_grad(&w, &t)?;
        opt.step(model.params_mut(), &grad);
    }
    Ok(())
}

fn initial_model(cfg: &FedTwinConfig, seeds: &SeedTree) -> Result<SequenceModel<f32>> {
    SequenceModel::new(cfg.dims(), cfg.window, &mut seeds.rng("fedtwin/init"))
}

fn client_rng(seeds: &SeedTree, client: usize) -> ChaCha8Rng {
    seeds.rng(&format!("fedtwin/client/{client}"))
}

/// Trains one model on the pooled data of every station for the same number
/// of rounds, drawing from the stream of client 0.
pub fn run_centralized(cfg: &FedTwinConfig, seed: u64) -> Result<CentralReport> {
    let seeds = SeedTree::new(seed);
    let data = FedTwinData::generate(cfg, &seeds)?;
    let stations: Vec<usize> = (0..cfg.num_bs).collect();
    let pool = data.train_windows(&stations, cfg.window);
    let mut model = initial_model(cfg, &seeds)?;
    let mut rng = client_rng(&seeds, 0);
    let initial_loss = data.eval_loss(&model, cfg.window)?;
    let mut losses = Vec::with_capacity(cfg.rounds as usize);
    for _ in 0..cfg.rounds {
        local_train(&mut model, &data, &pool, cfg, &mut rng)?;
        losses.push(data.eval_loss(&model, cfg.window)?);
    }
    Ok(CentralReport {
        initial_loss,
        losses,
        final_params: model.params().clone(),
    })
}

struct Clients {
    partition: ClusterPartition,
    pools: Vec<Vec<(usize, usize)>>,
}

impl Clients {
    fn new(partition: ClusterPartition, data: &FedTwinData, window: usize) -> Self {
        let pools = (0..partition.cluster_count())
            .map(|c| data.train_windows(&partition.members(c), window))
            .collect();
        Self { partition, pools }
    }

    fn len(&self) -> usize {
        self.pools.len()
    }
}

/// An asynchronous update still in flight from the straggling cluster.
struct Pending {
    update: ModelUpdate<f32>,
}

fn train_update(
    base: &SequenceModel<f32>,
    data: &FedTwinData,
    pool: &[(usize, usize)],
    cfg: &FedTwinConfig,
    rng: &mut ChaCha8Rng,
    client: usize,
    version: u64,
) -> Result<ModelUpdate<f32>> {
    let mut local = base.clone();
    local_train(&mut local, data, pool, cfg, rng)?;
    ModelUpdate::new(local.params().clone(), client, version, pool.len() as u64)
}

fn jitter_backhaul(attrs: &mut [BsAttributes], drift: f64, rng: &mut ChaCha8Rng) {
    for a in attrs {
        a.backhaul_capacity *= 1.0 + rng.random_range(-drift..=drift);
    }
}

/// Runs the two-stage federated schedule and reports the held-out loss after
/// every round.
pub fn run_fedtwin(cfg: &FedTwinConfig, seed: u64) -> Result<FedTwinReport> {
    let seeds = SeedTree::new(seed);
    let mut data = FedTwinData::generate(cfg, &seeds)?;
    let mut graph: AffinityGraph = build_affinity(&data.attributes, &cfg.affinity)?;
    let initial_partition = cluster(&graph, cfg.method)?;
    let mut clients = Clients::new(initial_partition.clone(), &data, cfg.window);
    let mut rngs: Vec<ChaCha8Rng> = (0..clients.len()).map(|c| client_rng(&seeds, c)).collect();
    let mut participation_rng = seeds.rng("fedtwin/participation");
    let mut drift_rng = seeds.rng("fedtwin/drift");

    let mut model = initial_model(cfg, &seeds)?;
    let initial_loss = data.eval_loss(&model, cfg.window)?;
    let switch = cfg.switch_round();
    let mut async_state: Option<AsyncState<f32>> = None;
    let mut pending: Option<Pending> = None;
    let mut reclusterings = 0;
    let mut rounds = Vec::with_capacity(cfg.rounds as usize);

    for round in 0..cfg.rounds {
        if cfg.reform_every > 0 && round > 0 && round % cfg.reform_every == 0 {
            jitter_backhaul(&mut data.attributes, cfg.backhaul_drift, &mut drift_rng);
            let new_graph = build_affinity(&data.attributes, &cfg.affinity)?;
            let (partition, changed) =
                reform_clusters(&clients.partition, &graph, &new_graph, cfg.drift_threshold, cfg.method)?;
            graph = new_graph;
            if changed {
                reclusterings += 1;
                if partition != clients.partition {
                    clients = Clients::new(partition, &data, cfg.window);
                    while rngs.len() < clients.len() {
                        rngs.push(client_rng(&seeds, rngs.len()));
                    }
                    pending = None;
                }
            }
        }

        let record = if round < switch {
            let updates: Vec<ModelUpdate<f32>> = rngs[..clients.len()]
                .par_iter_mut()
                .enumerate()
                .map(|(c, rng)| train_update(&model, &data, &clients.pools[c], cfg, rng, c, round))
                .collect::<Result<_>>()?;
            let (params, ids) = aggregate_sync(&updates, cfg.participation, &mut participation_rng)?;
            *model.params_mut() = params;
            RoundRecord {
                round,
                mode: RoundMode::Sync,
                global_loss: 0.0,
                participants: ids.len(),
                max_staleness: 0,
            }
        } else {
            let state = match async_state.as_mut() {
                Some(s) => s,
                None => async_state.insert(AsyncState::new(model.params().clone(), cfg.alpha0, cfg.staleness)?),
            };
            let straggler = (cfg.straggler_staleness > 0 && clients.len() > 1).then(|| clients.len() - 1);
            let base = model.clone();
            let version = state.current_version;
            let fresh: Vec<usize> = (0..clients.len())
                .filter(|&c| Some(c) != straggler || pending.is_none())
                .collect();
            let mut trained: Vec<(usize, ModelUpdate<f32>)> = rngs[..clients.len()]
                .par_iter_mut()
                .enumerate()
                .filter(|(c, _)| fresh.contains(c))
                .map(|(c, rng)| Ok((c, train_update(&base, &data, &clients.pools[c], cfg, rng, c, version)?)))
                .collect::<Result<_>>()?;
            let mut applied = 0;
            let mut max_staleness = 0;
            for (c, update) in trained.drain(..) {
                if Some(c) == straggler {
                    pending = Some(Pending { update });
                    continue;
                }
                max_staleness = max_staleness.max(state.current_version - update.round_produced);
                apply_async(state, &update)?;
                applied += 1;
            }
            if let Some(p) = pending.take() {
                let tau = state.current_version - p.update.round_produced;
                if tau >= cfg.straggler_staleness {
                    max_staleness = max_staleness.max(tau);
                    apply_async(state, &p.update)?;
                    applied += 1;
                } else {
                    pending = Some(p);
                }
            }
            *model.params_mut() = state.global.clone();
            RoundRecord {
                round,
                mode: RoundMode::Async,
                global_loss: 0.0,
                participants: applied,
                max_staleness,
            }
        };
        rounds.push(RoundRecord {
            global_loss: data.eval_loss(&model, cfg.window)?,
            ..record
        });
    }

    Ok(FedTwinReport {
        initial_loss,
        rounds,
        initial_partition,
        partition: clients.partition,
        reclusterings,
        final_params: model.params().clone(),
    })
}

/// Per-round CSV: `round,mode,global_loss,participants,max_staleness`.
pub fn write_rounds_csv<W: Write>(records: &[RoundRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["round", "mode", "global_loss", "participants", "max_staleness"])?;
    for r in records {
        w.write_record([
            r.round.to_string(),
            r.mode.name().to_string(),
            format!("{:.6}", r.global_loss),
            r.participants.to_string(),
            r.max_staleness.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("rounds csv", e))?;
    Ok(())
}
