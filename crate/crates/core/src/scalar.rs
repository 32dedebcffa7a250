//! Scalar abstraction shared by the learning and aggregation code.
//!
//! Everything numeric that is exchanged between agents (parameter vectors,
//! gradients, aggregates) is generic over [`Real`], so the same code runs in
//! `f32` for simulation and in `f64` for finite-difference checks.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

pub trait Real:
    Float + FromPrimitive + ToPrimitive + NumAssign + Default + Debug + Display + Sum + Send + Sync + 'static
{
    /// Converts an `f64` literal. Panics only for values the type cannot
    /// represent at all, which never happens for `f32`/`f64`.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).unwrap_or_else(Self::infinity)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Dot product with a fixed eight-lane accumulation order.
///
/// The lane split lets the compiler vectorize while keeping the reduction
/// order identical on every run.
#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = T::zero();
    for (x, y) in ra.iter().zip(rb) {
        tail += *x * *y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// `y += alpha * x`
#[inline]
pub fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * *xi;
    }
}

/// Index of the largest finite entry; ties go to the lowest index. NaN
/// entries are skipped and an all-NaN (or empty) slice yields 0.
pub fn argmax<T: Real>(values: &[T]) -> usize {
    let mut best: Option<(usize, T)> = None;
    for (i, &v) in values.iter().enumerate() {
        if v.is_nan() {
            continue;
        }
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i).unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_matches_naive() {
        let a: Vec<f64> = (0..19).map(|i| i as f64 * 0.5 - 3.0).collect();
        let b: Vec<f64> = (0..19).map(|i| (i as f64).sin()).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-12);
    }

    #[test]
    fn argmax_ties_and_nan() {
        assert_eq!(argmax(&[1.0f32, 3.0, 3.0, 2.0]), 1);
        assert_eq!(argmax(&[f32::NAN, 0.5, f32::NAN]), 1);
        assert_eq!(argmax::<f32>(&[f32::NAN, f32::NAN]), 0);
        assert_eq!(argmax::<f64>(&[]), 0);
    }

    #[test]
    fn argmax_invariant_under_positive_affine_map() {
        let q = [0.3f64, -1.2, 0.3, 0.9, 0.9];
        let scaled: Vec<f64> = q.iter().map(|v| 3.5 * v + 10.0).collect();
        assert_eq!(argmax(&q), argmax(&scaled));
        assert_eq!(argmax(&q), 3);
    }
}
