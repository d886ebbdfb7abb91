//! Unitary 1-D discrete Fourier transform.
//!
//! `forward` computes `X_k = N^{-1/2} sum_n x_n e^{-2 pi i k n / N}` and
//! `inverse` its adjoint, so the pair is an isometry.

use std::fmt;
use std::sync::Arc;

pub use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Planned transforms of a fixed length, shareable across threads.
#[derive(Clone)]
pub struct Dft {
    len: usize,
    scale: f64,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Dft {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Dft").field("len", &self.len).finish()
    }
}

impl Dft {
    pub fn new(len: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            len,
            scale: if len == 0 { 1.0 } else { 1.0 / (len as f64).sqrt() },
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// In-place forward transform.
    ///
    /// # Panics
    /// If `buf.len()` differs from the planned length.
    pub fn forward_in_place(&self, buf: &mut [Complex64]) {
        assert_eq!(buf.len(), self.len, "buffer length differs from planned DFT length");
        self.forward.process(buf);
        buf.iter_mut().for_each(|c| *c *= self.scale);
    }

    /// In-place inverse transform.
    ///
    /// # Panics
    /// If `buf.len()` differs from the planned length.
    pub fn inverse_in_place(&self, buf: &mut [Complex64]) {
        assert_eq!(buf.len(), self.len, "buffer length differs from planned DFT length");
        self.inverse.process(buf);
        buf.iter_mut().for_each(|c| *c *= self.scale);
    }

    pub fn forward(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut buf = x.to_vec();
        self.forward_in_place(&mut buf);
        buf
    }

    pub fn inverse(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut buf = x.to_vec();
        self.inverse_in_place(&mut buf);
        buf
    }

    pub fn forward_real(&self, x: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward_in_place(&mut buf);
        buf
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn naive(x: &[Complex64], sign: f64) -> Vec<Complex64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(j, v)| v * Complex64::from_polar(1.0, sign * 2.0 * PI * (k * j % n) as f64 / n as f64))
                    .sum::<Complex64>()
                    / (n as f64).sqrt()
            })
            .collect()
    }

    #[test]
    fn matches_direct_sum() {
        let x: Vec<Complex64> = (0..12).map(|i| Complex64::new((i as f64).sin(), (i as f64 * 0.3).cos())).collect();
        let d = Dft::new(12);
        for (a, b) in d.forward(&x).iter().zip(naive(&x, -1.0)) {
            assert!((a - b).norm() < 1e-12);
        }
        for (a, b) in d.inverse(&x).iter().zip(naive(&x, 1.0)) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn constant_is_dc_only() {
        let d = Dft::new(8);
        let f = d.forward_real(&[-60.0; 8]);
        assert!((f[0].re + 60.0 * 8f64.sqrt()).abs() < 1e-12);
        assert!(f[1..].iter().all(|c| c.norm() < 1e-12));
    }

    proptest! {
        #[test]
        fn round_trip_and_parseval(vals in prop::collection::vec(-100.0f64..100.0, 1..64)) {
            let d = Dft::new(vals.len());
            let x: Vec<Complex64> = vals.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            let f = d.forward(&x);
            let back = d.inverse(&f);
            let peak = vals.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
            for (a, b) in back.iter().zip(&x) {
                prop_assert!((a - b).norm() <= 1e-9 * peak);
            }
            let e0: f64 = x.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            let e1: f64 = f.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            prop_assert!((e0 - e1).abs() <= 1e-9 * e0.max(f64::MIN_POSITIVE));
        }
    }
}
