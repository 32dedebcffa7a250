use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub const PARAM_SCHEMA_VERSION: u32 = 1;

/// Shape description carried next to every flat parameter vector.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub kind: String,
    pub dims: Vec<usize>,
    /// Sequence window length; only meaningful for recurrent models.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
}

impl Manifest {
    pub fn new(kind: impl Into<String>, dims: Vec<usize>) -> Self {
        Self {
            kind: kind.into(),
            dims,
            window: None,
        }
    }
}

/// A flat parameter vector plus the manifest that says how to read it.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector<T> {
    values: Vec<T>,
    manifest: Manifest,
}

/// JSON sidecar written next to a parameter blob.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Sidecar {
    schema_version: u32,
    kind: String,
    dims: Vec<usize>,
    #[serde(rename = "W", default, skip_serializing_if = "Option::is_none")]
    window: Option<usize>,
    len: usize,
}

impl<T: Real> ParamVector<T> {
    pub fn new(values: Vec<T>, manifest: Manifest) -> Self {
        Self { values, manifest }
    }

    pub fn zeros(len: usize, manifest: Manifest) -> Self {
        Self::new(vec![T::zero(); len], manifest)
    }

    pub fn from_slice(values: &[T]) -> Self {
        Self::new(values.to_vec(), Manifest::new("flat", vec![values.len()]))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<T> {
        self.values
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.values.len() == other.values.len() && self.manifest == other.manifest
    }

    pub fn with_values(&self, values: Vec<T>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        Self::new(values, self.manifest.clone())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        self.with_values(self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn l2_distance(&self, other: &Self) -> T {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| (a - b) * (a - b))
            .fold(T::zero(), |acc, x| acc + x)
            .sqrt()
    }

    pub fn norm(&self) -> T {
        self.values
            .iter()
            .fold(T::zero(), |acc, &x| acc + x * x)
            .sqrt()
    }

    pub fn cast<U: Real>(&self) -> ParamVector<U> {
        ParamVector::new(
            self.values.iter().map(|v| U::lit(v.to_f64_lossy())).collect(),
            self.manifest.clone(),
        )
    }

    /// Writes the values as little-endian `f32` to `path` and a JSON sidecar
    /// to `path` with `.json` appended.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::with_capacity(self.values.len() * 4);
        for v in &self.values {
            let x = v.to_f32().unwrap_or(f32::NAN);
            bytes.extend_from_slice(&x.to_le_bytes());
        }
        fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
        let sidecar = Sidecar {
            schema_version: PARAM_SCHEMA_VERSION,
            kind: self.manifest.kind.clone(),
            dims: self.manifest.dims.clone(),
            window: self.manifest.window,
            len: self.values.len(),
        };
        let side = sidecar_path(path);
        let json = serde_json::to_string_pretty(&sidecar)?;
        fs::write(&side, json).map_err(|e| Error::io(side, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let side = sidecar_path(path);
        let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
        let sidecar: Sidecar = serde_json::from_str(&text)?;
        if sidecar.schema_version != PARAM_SCHEMA_VERSION {
            return Err(Error::invalid(format!(
                "unsupported parameter schema version {}",
                sidecar.schema_version
            )));
        }
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.len() != sidecar.len * 4 {
            return Err(Error::DimensionMismatch {
                expected: sidecar.len * 4,
                actual: bytes.len(),
            });
        }
        let values = bytes
            .chunks_exact(4)
            .map(|c| T::lit(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
            .collect();
        Ok(Self::new(
            values,
            Manifest {
                kind: sidecar.kind,
                dims: sidecar.dims,
                window: sidecar.window,
            },
        ))
    }
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}
