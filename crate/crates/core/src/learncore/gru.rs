//! Gated recurrent cell with hand-written backpropagation through time.
//!
//! Parameter block layout (input size `I`, hidden size `H`):
//! `Wz Wr Wn` (each `H x I`), `Uz Ur Un` (each `H x H`), then the biases
//! `bz br bn cn` (each `H`). The candidate state uses the reset gate on the
//! recurrent term: `n = tanh(Wn x + bn + r * (Un h + cn))`.

use crate::scalar::{axpy, dot, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GruShape {
    pub input: usize,
    pub hidden: usize,
}

/// Values retained from one forward step for the backward pass.
#[derive(Clone, Debug)]
pub struct GruStepCache<T> {
    pub x: Vec<T>,
    pub h_prev: Vec<T>,
    pub z: Vec<T>,
    pub r: Vec<T>,
    pub n: Vec<T>,
    /// `Un h + cn`, before the reset gate is applied.
    pub hn: Vec<T>,
}

struct Blocks {
    wz: usize,
    wr: usize,
    wn: usize,
    uz: usize,
    ur: usize,
    un: usize,
    bz: usize,
    br: usize,
    bn: usize,
    cn: usize,
}

impl GruShape {
    pub fn param_count(&self) -> usize {
        let (i, h) = (self.input, self.hidden);
        3 * h * i + 3 * h * h + 4 * h
    }

    fn blocks(&self) -> Blocks {
        let (i, h) = (self.input, self.hidden);
        let wz = 0;
        let wr = wz + h * i;
        let wn = wr + h * i;
        let uz = wn + h * i;
        let ur = uz + h * h;
        let un = ur + h * h;
        let bz = un + h * h;
        let br = bz + h;
        let bn = br + h;
        let cn = bn + h;
        Blocks {
            wz,
            wr,
            wn,
            uz,
            ur,
            un,
            bz,
            br,
            bn,
            cn,
        }
    }

    /// One forward step. `p` is this cell's parameter block.
    pub fn step<T: Real>(&self, p: &[T], x: &[T], h: &[T]) -> (Vec<T>, GruStepCache<T>) {
        let (ni, nh) = (self.input, self.hidden);
        let b = self.blocks();
        let row = |base: usize, j: usize, width: usize| &p[base + j * width..base + (j + 1) * width];
        let mut z = vec![T::zero(); nh];
        let mut r = vec![T::zero(); nh];
        let mut n = vec![T::zero(); nh];
        let mut hn = vec![T::zero(); nh];
        let mut h_new = vec![T::zero(); nh];
        for j in 0..nh {
            z[j] = sigmoid(dot(row(b.wz, j, ni), x) + dot(row(b.uz, j, nh), h) + p[b.bz + j]);
            r[j] = sigmoid(dot(row(b.wr, j, ni), x) + dot(row(b.ur, j, nh), h) + p[b.br + j]);
            hn[j] = dot(row(b.un, j, nh), h) + p[b.cn + j];
        }
        for j in 0..nh {
            n[j] = (dot(row(b.wn, j, ni), x) + p[b.bn + j] + r[j] * hn[j]).tanh();
            h_new[j] = (T::one() - z[j]) * n[j] + z[j] * h[j];
        }
        let cache = GruStepCache {
            x: x.to_vec(),
            h_prev: h.to_vec(),
            z,
            r,
            n,
            hn,
        };
        (h_new, cache)
    }

    /// Backward through one step. Accumulates parameter gradients into `g`
    /// and returns `(dx, dh_prev)`.
    pub fn step_backward<T: Real>(
        &self,
        p: &[T],
        cache: &GruStepCache<T>,
        dh: &[T],
        g: &mut [T],
    ) -> (Vec<T>, Vec<T>) {
        let (ni, nh) = (self.input, self.hidden);
        let b = self.blocks();
        let one = T::one();
        let mut dx = vec![T::zero(); ni];
        let mut dh_prev = vec![T::zero(); nh];
        for j in 0..nh {
            let (z, r, n, hn) = (cache.z[j], cache.r[j], cache.n[j], cache.hn[j]);
            let dn = dh[j] * (one - z);
            let dz = dh[j] * (cache.h_prev[j] - n);
            dh_prev[j] += dh[j] * z;
            let da_n = dn * (one - n * n);
            let dr = da_n * hn;
            let dhn = da_n * r;
            let da_z = dz * z * (one - z);
            let da_r = dr * r * (one - r);

            axpy(da_n, &cache.x, &mut g[b.wn + j * ni..b.wn + (j + 1) * ni]);
            axpy(da_z, &cache.x, &mut g[b.wz + j * ni..b.wz + (j + 1) * ni]);
            axpy(da_r, &cache.x, &mut g[b.wr + j * ni..b.wr + (j + 1) * ni]);
            axpy(dhn, &cache.h_prev, &mut g[b.un + j * nh..b.un + (j + 1) * nh]);
            axpy(da_z, &cache.h_prev, &mut g[b.uz + j * nh..b.uz + (j + 1) * nh]);
            axpy(da_r, &cache.h_prev, &mut g[b.ur + j * nh..b.ur + (j + 1) * nh]);
            g[b.bn + j] += da_n;
            g[b.cn + j] += dhn;
            g[b.bz + j] += da_z;
            g[b.br + j] += da_r;

            axpy(da_n, &p[b.wn + j * ni..b.wn + (j + 1) * ni], &mut dx);
            axpy(da_z, &p[b.wz + j * ni..b.wz + (j + 1) * ni], &mut dx);
            axpy(da_r, &p[b.wr + j * ni..b.wr + (j + 1) * ni], &mut dx);
            axpy(dhn, &p[b.un + j * nh..b.un + (j + 1) * nh], &mut dh_prev);
            axpy(da_z, &p[b.uz + j * nh..b.uz + (j + 1) * nh], &mut dh_prev);
            axpy(da_r, &p[b.ur + j * nh..b.ur + (j + 1) * nh], &mut dh_prev);
        }
        (dx, dh_prev)
    }
}

#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Scalar loss `sum(c * h_T)` over a short unrolled sequence.
    fn unrolled_loss(shape: GruShape, p: &[f64], xs: &[Vec<f64>], h0: &[f64], c: &[f64]) -> f64 {
        let mut h = h0.to_vec();
        for x in xs {
            h = shape.step(p, x, &h).0;
        }
        h.iter().zip(c).map(|(a, b)| a * b).sum()
    }

    #[test]
    fn bptt_matches_central_differences_on_8_dim_cell() {
        let shape = GruShape { input: 8, hidden: 8 };
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..5 {
            let p: Vec<f64> = (0..shape.param_count()).map(|_| rng.random_range(-0.6..0.6)).collect();
            let xs: Vec<Vec<f64>> = (0..4)
                .map(|_| (0..8).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            let h0: Vec<f64> = (0..8).map(|_| rng.random_range(-0.5..0.5)).collect();
            let c: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();

            let mut caches = Vec::new();
            let mut h = h0.clone();
            for x in &xs {
                let (hn, cache) = shape.step(&p, x, &h);
                caches.push(cache);
                h = hn;
            }
            let mut g = vec![0.0; p.len()];
            let mut dh = c.clone();
            for cache in caches.iter().rev() {
                dh = shape.step_backward(&p, cache, &dh, &mut g).1;
            }

            let eps = 1e-6;
            let mut num = vec![0.0; p.len()];
            for k in 0..p.len() {
                let mut pp = p.clone();
                pp[k] += eps;
                let up = unrolled_loss(shape, &pp, &xs, &h0, &c);
                pp[k] -= 2.0 * eps;
                let down = unrolled_loss(shape, &pp, &xs, &h0, &c);
                num[k] = (up - down) / (2.0 * eps);
            }
            let diff: f64 = g.iter().zip(&num).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let scale = g.iter().map(|a| a * a).sum::<f64>().sqrt().max(num.iter().map(|a| a * a).sum::<f64>().sqrt());
            assert!(diff / scale < 1e-4, "relative error {}", diff / scale);
        }
    }

    #[test]
    fn sigmoid_is_stable_for_large_inputs() {
        assert_eq!(sigmoid(1000.0f64), 1.0);
        assert_eq!(sigmoid(-1000.0f64), 0.0);
        assert!((sigmoid(0.0f32) - 0.5).abs() < 1e-7);
    }
}
