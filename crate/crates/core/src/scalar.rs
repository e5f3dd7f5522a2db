//! Scalar abstraction shared by every numerical kernel.
//!
//! All grid, quadrature and solver code is written against [`Real`] so that
//! the same routines run in `f64` (the default everywhere in the CLI) and in
//! `f32` for cheap exploratory runs.

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

/// Floating point type usable by the library.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }

    fn pi() -> Self {
        Self::lit(std::f64::consts::PI)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Fixed-order pairwise summation; results depend only on the slice order.
pub fn pairwise_sum<T: Real>(xs: &[T]) -> T {
    const BLOCK: usize = 64;
    if xs.len() <= BLOCK {
        let mut acc = T::zero();
        for &x in xs {
            acc += x;
        }
        acc
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

/// Surface area of the unit sphere `S^{k-1}` in `R^k`.
pub fn sphere_area<T: Real>(k: usize) -> T {
    // |S^{k-1}| = 2 pi^{k/2} / Gamma(k/2), evaluated by the recursion
    // |S^{k+1}| = 2 pi / k * |S^{k-1}|.
    let mut a = [2.0_f64, 2.0 * std::f64::consts::PI];
    if k == 0 {
        return T::zero();
    }
    if k <= 2 {
        return T::lit(a[k - 1]);
    }
    let mut kk = 2;
    while kk < k {
        let next = 2.0 * std::f64::consts::PI / (kk as f64 - 1.0) * a[0];
        a = [a[1], next];
        kk += 1;
    }
    T::lit(a[1])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_areas() {
        let pi = std::f64::consts::PI;
        assert!((sphere_area::<f64>(1) - 2.0).abs() < 1e-14);
        assert!((sphere_area::<f64>(2) - 2.0 * pi).abs() < 1e-14);
        assert!((sphere_area::<f64>(3) - 4.0 * pi).abs() < 1e-13);
        assert!((sphere_area::<f64>(4) - 2.0 * pi * pi).abs() < 1e-12);
        assert!((sphere_area::<f64>(5) - 8.0 * pi * pi / 3.0).abs() < 1e-12);
    }

    #[test]
    fn pairwise_matches_naive() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64).sin()).collect();
        let naive: f64 = xs.iter().sum();
        assert!((pairwise_sum(&xs) - naive).abs() < 1e-10);
        let xs32: Vec<f32> = xs.iter().map(|&x| x as f32).collect();
        assert!((pairwise_sum(&xs32) as f64 - naive).abs() < 1e-3);
    }
}
