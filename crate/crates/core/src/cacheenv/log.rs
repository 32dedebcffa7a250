use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};

/// One row of the episode CSV.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LogRow {
    pub tick: u64,
    pub bs: usize,
    pub hit: bool,
    pub reward: f64,
    pub intervened: bool,
    pub max_load: f64,
    pub min_load: f64,
}

/// Per-step records plus running load statistics.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EpisodeLog {
    pub rows: Vec<LogRow>,
    load_sums: Vec<f64>,
    final_loads: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CacheMetrics {
    pub requests: usize,
    pub hits: usize,
    pub hit_rate: f64,
    /// Largest and smallest station load at the end of the episode.
    pub max_bs_load: f64,
    pub min_bs_load: f64,
    /// Per-station load averaged over every step of the episode.
    pub avg_loads: Vec<f64>,
    pub max_avg_load: f64,
    pub min_avg_load: f64,
    pub interventions: usize,
    pub intervention_rate: f64,
    pub total_reward: f64,
}

impl EpisodeLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a step; `loads` are all station loads after the step.
    pub fn record(&mut self, tick: u64, bs: usize, hit: bool, reward: f64, intervened: bool, loads: &[f64]) {
        if self.load_sums.len() != loads.len() {
            self.load_sums = vec![0.0; loads.len()];
        }
        for (s, l) in self.load_sums.iter_mut().zip(loads) {
            *s += l;
        }
        self.final_loads = loads.to_vec();
        let (max_load, min_load) = extremes(loads);
        self.rows.push(LogRow {
            tick,
            bs,
            hit,
            reward,
            intervened,
            max_load,
            min_load,
        });
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn final_loads(&self) -> &[f64] {
        &self.final_loads
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["tick", "bs", "hit", "reward", "intervened", "max_load", "min_load"])?;
        for r in &self.rows {
            w.write_record([
                r.tick.to_string(),
                r.bs.to_string(),
                u8::from(r.hit).to_string(),
                format!("{:.6}", r.reward),
                u8::from(r.intervened).to_string(),
                format!("{:.6}", r.max_load),
                format!("{:.6}", r.min_load),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

fn extremes(xs: &[f64]) -> (f64, f64) {
    xs.iter()
        .fold((f64::NEG_INFINITY, f64::INFINITY), |(hi, lo), &x| (hi.max(x), lo.min(x)))
}

pub fn metrics(log: &EpisodeLog) -> Result<CacheMetrics> {
    if log.rows.is_empty() {
        return Err(Error::Empty("episode log"));
    }
    let requests = log.rows.len();
    let hits = log.rows.iter().filter(|r| r.hit).count();
    let interventions = log.rows.iter().filter(|r| r.intervened).count();
    let (max_bs_load, min_bs_load) = extremes(&log.final_loads);
    let avg_loads: Vec<f64> = log.load_sums.iter().map(|s| s / requests as f64).collect();
    let (max_avg_load, min_avg_load) = extremes(&avg_loads);
    Ok(CacheMetrics {
        requests,
        hits,
        hit_rate: hits as f64 / requests as f64,
        max_bs_load,
        min_bs_load,
        avg_loads,
        max_avg_load,
        min_avg_load,
        interventions,
        intervention_rate: interventions as f64 / requests as f64,
        total_reward: log.rows.iter().map(|r| r.reward).sum(),
    })
}
