use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fedtwin::ModelUpdate;
use crate::learncore::ParamVector;
use crate::scalar::Real;

/// Model-poisoning applied by an adversarial agent to its honest update.
/// Written in configs as its label, e.g. `"scaled_update(10)"`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum AttackSpec {
    SignFlip,
    GaussianNoise { sigma: f64 },
    ScaledUpdate { factor: f64 },
    ZeroUpdate,
}

impl AttackSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::GaussianNoise { sigma } if !(sigma >= 0.0 && sigma.is_finite()) => {
                Err(Error::invalid(format!("noise sigma {sigma} must be finite and >= 0")))
            }
            Self::ScaledUpdate { factor } if !factor.is_finite() => Err(Error::invalid("scale factor must be finite")),
            _ => Ok(()),
        }
    }

    /// Short label used in tables, e.g. `gaussian_noise(0.1)`.
    pub fn label(&self) -> String {
        match self {
            Self::SignFlip => "sign_flip".into(),
            Self::GaussianNoise { sigma } => format!("gaussian_noise({sigma})"),
            Self::ScaledUpdate { factor } => format!("scaled_update({factor})"),
            Self::ZeroUpdate => "zero_update".into(),
        }
    }
}

impl FromStr for AttackSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let spec = match parse_call(s)? {
            ("sign_flip", None) => Self::SignFlip,
            ("zero_update", None) => Self::ZeroUpdate,
            ("gaussian_noise", Some(sigma)) => Self::GaussianNoise { sigma },
            ("scaled_update", Some(factor)) => Self::ScaledUpdate { factor },
            _ => return Err(Error::invalid(format!("unknown attack `{s}`"))),
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl TryFrom<String> for AttackSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<AttackSpec> for String {
    fn from(a: AttackSpec) -> String {
        a.label()
    }
}

/// Splits `name(arg)` into the name and the numeric argument.
pub(crate) fn parse_call(s: &str) -> Result<(&str, Option<f64>)> {
    let s = s.trim();
    match s.split_once('(') {
        None => Ok((s, None)),
        Some((name, rest)) => {
            let arg = rest
                .strip_suffix(')')
                .ok_or_else(|| Error::invalid(format!("missing `)` in `{s}`")))?;
            let value = arg
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::invalid(format!("bad numeric argument in `{s}`")))?;
            Ok((name.trim(), Some(value)))
        }
    }
}

/// Poisoned copy of `params`. Only the noise attack draws from `rng`. The
/// result may be non-finite when scaling overflows.
pub fn attacked_params<T: Real, R: Rng + ?Sized>(
    params: &ParamVector<T>,
    spec: &AttackSpec,
    rng: &mut R,
) -> Result<ParamVector<T>> {
    spec.validate()?;
    Ok(match *spec {
        AttackSpec::SignFlip => params.map(|x| -x),
        AttackSpec::ScaledUpdate { factor } => params.map(|x| x * T::lit(factor)),
        AttackSpec::ZeroUpdate => params.map(|_| T::zero()),
        AttackSpec::GaussianNoise { sigma } => {
            if sigma == 0.0 {
                params.clone()
            } else {
                let normal = Normal::new(0.0, sigma).map_err(|e| Error::invalid(e.to_string()))?;
                let values = params.as_slice().iter().map(|&x| x + T::lit(normal.sample(rng))).collect();
                params.with_values(values)
            }
        }
    })
}

/// Returns the poisoned copy of `update`, keeping its metadata.
pub fn apply_attack<T: Real, R: Rng + ?Sized>(
    update: &ModelUpdate<T>,
    spec: &AttackSpec,
    rng: &mut R,
) -> Result<ModelUpdate<T>> {
    let params = attacked_params(&update.params, spec, rng)?;
    ModelUpdate::new(params, update.client_id, update.round_produced, update.sample_count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn update(v: &[f64]) -> ModelUpdate<f64> {
        ModelUpdate::new(ParamVector::from_slice(v), 3, 1, 10).unwrap()
    }

    #[test]
    fn sign_flip_negates() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = apply_attack(&update(&[1.0, -2.0]), &AttackSpec::SignFlip, &mut rng).unwrap();
        assert_eq!(out.params.as_slice(), &[-1.0, 2.0]);
        assert_eq!((out.client_id, out.sample_count), (3, 10));
    }

    #[test]
    fn scale_zero_is_zero_update() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let u = update(&[1.5, -2.0, 7.0]);
        let a = apply_attack(&u, &AttackSpec::ScaledUpdate { factor: 0.0 }, &mut rng).unwrap();
        let b = apply_attack(&u, &AttackSpec::ZeroUpdate, &mut rng).unwrap();
        assert_eq!(a.params.as_slice(), b.params.as_slice());
        let c = apply_attack(&u, &AttackSpec::ScaledUpdate { factor: 10.0 }, &mut rng).unwrap();
        assert_eq!(c.params.as_slice(), &[15.0, -20.0, 70.0]);
    }

    #[test]
    fn zero_sigma_noise_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let u = update(&[1.0, 2.0]);
        assert_eq!(apply_attack(&u, &AttackSpec::GaussianNoise { sigma: 0.0 }, &mut rng).unwrap(), u);
    }

    #[test]
    fn noise_has_requested_spread() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u = update(&vec![0.0; 20_000]);
        let out = apply_attack(&u, &AttackSpec::GaussianNoise { sigma: 0.5 }, &mut rng).unwrap();
        let n = out.params.len() as f64;
        let mean = out.params.as_slice().iter().sum::<f64>() / n;
        let var = out.params.as_slice().iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 0.02);
        assert!((var.sqrt() - 0.5).abs() < 0.01);
    }

    #[test]
    fn labels_round_trip() {
        for a in [
            AttackSpec::SignFlip,
            AttackSpec::ZeroUpdate,
            AttackSpec::GaussianNoise { sigma: 0.1 },
            AttackSpec::ScaledUpdate { factor: 10.0 },
        ] {
            assert_eq!(a.label().parse::<AttackSpec>().unwrap(), a);
        }
        assert_eq!(AttackSpec::ScaledUpdate { factor: 10.0 }.label(), "scaled_update(10)");
        assert!("sign_flip(2)".parse::<AttackSpec>().is_err());
        assert!("gaussian_noise(-1)".parse::<AttackSpec>().is_err());
        assert!("gaussian_noise(0.1".parse::<AttackSpec>().is_err());
    }

    #[test]
    fn negative_sigma_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(apply_attack(&update(&[1.0]), &AttackSpec::GaussianNoise { sigma: -1.0 }, &mut rng).is_err());
    }
}
