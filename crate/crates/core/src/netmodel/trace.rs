use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::zipf::{zipf_pmf, DiscreteSampler, ZipfParams};
use crate::error::{Error, Result};

/// Physical network and workload parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub catalog_size: usize,
    pub zipf_exponent: f64,
    pub num_clients: usize,
    pub num_bs: usize,
    pub requests_per_tick: usize,
    /// Zipf exponent of client activity; 0 makes every client equally active.
    pub client_skew: f64,
    pub cache_capacity: usize,
    /// Requests one base station can serve per tick.
    pub service_capacity: usize,
    pub load_window: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            catalog_size: 200,
            zipf_exponent: 0.8,
            num_clients: 20,
            num_bs: 5,
            requests_per_tick: 10,
            client_skew: 1.0,
            cache_capacity: 150,
            service_capacity: 4,
            load_window: 50,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        self.zipf()?;
        if self.num_bs == 0 || self.num_clients == 0 {
            return Err(Error::invalid("need at least one base station and one client"));
        }
        if self.cache_capacity == 0 || self.service_capacity == 0 || self.load_window == 0 {
            return Err(Error::invalid("cache capacity, service capacity and load window must be >= 1"));
        }
        if !self.client_skew.is_finite() || self.client_skew < 0.0 {
            return Err(Error::invalid("client_skew must be finite and >= 0"));
        }
        Ok(())
    }

    pub fn zipf(&self) -> Result<ZipfParams> {
        ZipfParams::new(self.zipf_exponent, self.catalog_size)
    }

    /// Home base station of a client (round-robin pinning).
    pub fn home_bs(&self, client: usize) -> usize {
        client % self.num_bs
    }
}

/// One content demand.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Request {
    #[serde(rename = "tick")]
    pub time: u64,
    pub content_id: u32,
    pub client_id: u32,
    pub bs_id: u32,
}

/// Chronologically ordered requests.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RequestTrace {
    pub requests: Vec<Request>,
}

/// Samplers built once from a [`NetworkConfig`].
#[derive(Clone, Debug)]
pub struct Workload {
    config: NetworkConfig,
    content: DiscreteSampler,
    clients: DiscreteSampler,
}

impl Workload {
    pub fn new(config: &NetworkConfig) -> Result<Self> {
        config.validate()?;
        let content = DiscreteSampler::zipf(&config.zipf()?)?;
        let clients = DiscreteSampler::new(&zipf_pmf(&ZipfParams::new(config.client_skew, config.num_clients)?)?)?;
        Ok(Self {
            config: config.clone(),
            content,
            clients,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }
}

pub fn sample_request<R: Rng + ?Sized>(workload: &Workload, tick: u64, rng: &mut R) -> Request {
    let content_id = workload.content.sample(rng) as u32;
    let client = workload.clients.sample(rng);
    Request {
        time: tick,
        content_id,
        client_id: client as u32,
        bs_id: workload.config.home_bs(client) as u32,
    }
}

pub fn generate_trace<R: Rng + ?Sized>(config: &NetworkConfig, ticks: u64, rng: &mut R) -> Result<RequestTrace> {
    let workload = Workload::new(config)?;
    let mut requests = Vec::with_capacity(ticks as usize * config.requests_per_tick);
    for t in 0..ticks {
        for _ in 0..config.requests_per_tick {
            requests.push(sample_request(&workload, t, rng));
        }
    }
    Ok(RequestTrace { requests })
}

impl RequestTrace {
    pub fn len(&self) -> usize {
        self.requests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.requests.is_empty()
    }

    pub fn content_ids(&self) -> Vec<usize> {
        self.requests.iter().map(|r| r.content_id as usize).collect()
    }

    pub fn is_chronological(&self) -> bool {
        self.requests.windows(2).all(|w| w[0].time <= w[1].time)
    }

    /// Normalized content histogram over a catalog of `size` items.
    pub fn histogram(&self, size: usize) -> Vec<f64> {
        let mut h = vec![0.0; size];
        for r in &self.requests {
            if let Some(slot) = h.get_mut(r.content_id as usize) {
                *slot += 1.0;
            }
        }
        let n = self.requests.len().max(1) as f64;
        h.iter_mut().for_each(|v| *v /= n);
        h
    }

    /// Checks ids against a network configuration.
    pub fn validate(&self, config: &NetworkConfig) -> Result<()> {
        for r in &self.requests {
            if r.content_id as usize >= config.catalog_size
                || r.bs_id as usize >= config.num_bs
                || r.client_id as usize >= config.num_clients
            {
                return Err(Error::invalid(format!("request {r:?} outside network configuration")));
            }
        }
        if !self.is_chronological() {
            return Err(Error::Ordering("trace is not chronological".into()));
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for r in &self.requests {
            w.serialize(r)?;
        }
        if self.requests.is_empty() {
            w.write_record(["tick", "content_id", "client_id", "bs_id"])?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let headers = r.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["tick", "content_id", "client_id", "bs_id"] {
            return Err(Error::invalid(format!("unexpected trace header {headers:?}")));
        }
        let requests = r.deserialize().collect::<std::result::Result<Vec<Request>, _>>()?;
        Ok(Self { requests })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(f)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(f)
    }
}
