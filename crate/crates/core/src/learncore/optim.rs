use serde::{Deserialize, Serialize};

use super::params::ParamVector;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// First-order optimizer with optional global-norm gradient clipping.
#[derive(Clone, Debug)]
pub struct Optimizer<T> {
    kind: OptimizerKind,
    lr: T,
    clip_norm: Option<T>,
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
}

impl<T: Real> Optimizer<T> {
    pub fn new(kind: OptimizerKind, lr: T, clip_norm: Option<T>) -> Self {
        Self {
            kind,
            lr,
            clip_norm,
            m: Vec::new(),
            v: Vec::new(),
            t: 0,
        }
    }

    pub fn sgd(lr: T) -> Self {
        Self::new(OptimizerKind::Sgd, lr, None)
    }

    pub fn adam(lr: T) -> Self {
        Self::new(OptimizerKind::Adam, lr, None)
    }

    pub fn lr(&self) -> T {
        self.lr
    }

    pub fn set_lr(&mut self, lr: T) {
        self.lr = lr;
    }

    pub fn reset(&mut self) {
        self.m.clear();
        self.v.clear();
        self.t = 0;
    }

    pub fn step(&mut self, params: &mut ParamVector<T>, grad: &ParamVector<T>) {
        let mut scale = T::one();
        if let Some(max) = self.clip_norm {
            let norm = grad.norm();
            if norm > max && norm.is_finite() {
                scale = max / norm;
            }
        }
        let p = params.as_mut_slice();
        let g = grad.as_slice();
        match self.kind {
            OptimizerKind::Sgd => {
                let step = self.lr * scale;
                for (pi, &gi) in p.iter_mut().zip(g) {
                    *pi -= step * gi;
                }
            }
            OptimizerKind::Adam => {
                if self.m.len() != p.len() {
                    self.m = vec![T::zero(); p.len()];
                    self.v = vec![T::zero(); p.len()];
                    self.t = 0;
                }
                self.t += 1;
                let (b1, b2, eps) = (T::lit(0.9), T::lit(0.999), T::lit(1e-8));
                let c1 = T::one() - b1.powi(self.t);
                let c2 = T::one() - b2.powi(self.t);
                let lr_t = self.lr * c2.sqrt() / c1;
                for i in 0..p.len() {
                    let gi = g[i] * scale;
                    self.m[i] = b1 * self.m[i] + (T::one() - b1) * gi;
                    self.v[i] = b2 * self.v[i] + (T::one() - b2) * gi * gi;
                    p[i] -= lr_t * self.m[i] / (self.v[i].sqrt() + eps);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_step_is_plain_descent() {
        let mut p = ParamVector::from_slice(&[1.0f64, 2.0]);
        let g = ParamVector::from_slice(&[0.5, -1.0]);
        Optimizer::sgd(0.1).step(&mut p, &g);
        assert_eq!(p.as_slice(), &[0.95, 2.1]);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut p = ParamVector::from_slice(&[0.0f64, 0.0]);
        let g = ParamVector::from_slice(&[3.0, -0.01]);
        Optimizer::adam(0.01).step(&mut p, &g);
        assert!((p.as_slice()[0] + 0.01).abs() < 1e-6);
        assert!((p.as_slice()[1] - 0.01).abs() < 1e-5);
    }

    #[test]
    fn clipping_bounds_the_step() {
        let mut p = ParamVector::from_slice(&[0.0f64, 0.0]);
        let g = ParamVector::from_slice(&[30.0, 40.0]);
        Optimizer::new(OptimizerKind::Sgd, 1.0, Some(5.0)).step(&mut p, &g);
        assert!((p.norm() - 5.0).abs() < 1e-12);
    }
}
