use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Content catalog with dense ids `0..size`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContentCatalog {
    pub size: usize,
}

impl ContentCatalog {
    pub fn new(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::invalid("catalog must hold at least one item"));
        }
        Ok(Self { size })
    }

    pub fn contains(&self, id: u32) -> bool {
        (id as usize) < self.size
    }
}

/// Zipf popularity: item `i` is requested with probability proportional to
/// `1 / (i + 1)^exponent`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZipfParams {
    pub exponent: f64,
    pub catalog_size: usize,
}

impl ZipfParams {
    pub fn new(exponent: f64, catalog_size: usize) -> Result<Self> {
        let p = Self {
            exponent,
            catalog_size,
        };
        p.validate()?;
        Ok(p)
    }

    /// `exponent = 0` is accepted as the uniform limit.
    pub fn validate(&self) -> Result<()> {
        if !self.exponent.is_finite() || self.exponent < 0.0 {
            return Err(Error::invalid(format!("zipf exponent must be finite and >= 0, got {}", self.exponent)));
        }
        if self.catalog_size == 0 {
            return Err(Error::invalid("zipf catalog is empty"));
        }
        Ok(())
    }
}

pub fn zipf_pmf(params: &ZipfParams) -> Result<Vec<f64>> {
    params.validate()?;
    let weights: Vec<f64> = (1..=params.catalog_size)
        .map(|r| (r as f64).powf(-params.exponent))
        .collect();
    let total: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / total).collect())
}

/// Inverse-CDF sampler over an arbitrary finite distribution.
#[derive(Clone, Debug)]
pub struct DiscreteSampler {
    cdf: Vec<f64>,
}

impl DiscreteSampler {
    pub fn new(weights: &[f64]) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Empty("sampler weights"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid("sampler weights must be finite and non-negative"));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::invalid("sampler weights sum to zero"));
        }
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = weights
            .iter()
            .map(|w| {
                acc += w / total;
                acc
            })
            .collect();
        *cdf.last_mut().unwrap() = 1.0;
        Ok(Self { cdf })
    }

    pub fn zipf(params: &ZipfParams) -> Result<Self> {
        Self::new(&zipf_pmf(params)?)
    }

    pub fn len(&self) -> usize {
        self.cdf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cdf.is_empty()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let idx = self.cdf.partition_point(|&c| c <= u);
        idx.min(self.cdf.len() - 1)
    }
}
