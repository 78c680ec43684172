//! Multidimensional complex FFT over row-major arrays with equal axis lengths.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub struct FftNd {
    dim: usize,
    m: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FftNd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "FftNd({}^{})", self.m, self.dim)
    }
}

impl FftNd {
    pub fn new(dim: usize, m: usize) -> Self {
        let mut planner = FftPlanner::new();
        FftNd { dim, m, forward: planner.plan_fft_forward(m), inverse: planner.plan_fft_inverse(m) }
    }

    pub fn len(&self) -> usize {
        self.m.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    pub fn axis_len(&self) -> usize {
        self.m
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(data, &self.forward);
    }

    /// Inverse transform including the `1/len` normalisation.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, &self.inverse);
        let s = 1.0 / self.len() as f64;
        for z in data.iter_mut() {
            *z *= s;
        }
    }

    fn run(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        assert_eq!(data.len(), self.len());
        let m = self.m;
        let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
        // last axis is contiguous
        plan.process_with_scratch(data, &mut scratch);
        let mut line = vec![Complex64::default(); m];
        for axis in 0..self.dim - 1 {
            let stride = m.pow((self.dim - 1 - axis) as u32);
            let block = stride * m;
            for start in (0..data.len()).step_by(block) {
                for off in 0..stride {
                    let base = start + off;
                    for (i, z) in line.iter_mut().enumerate() {
                        *z = data[base + i * stride];
                    }
                    plan.process_with_scratch(&mut line, &mut scratch);
                    for (i, z) in line.iter().enumerate() {
                        data[base + i * stride] = *z;
                    }
                }
            }
        }
    }
}

/// Signed wavenumber index for position `j` on an axis of length `m`.
pub fn signed_index(j: usize, m: usize) -> i64 {
    if j < m / 2 { j as i64 } else { j as i64 - m as i64 }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_single_mode() {
        let f = FftNd::new(2, 8);
        let mut a: Vec<Complex64> = (0..64).map(|i| Complex64::new((i as f64 * 0.37).sin(), 0.0)).collect();
        let orig = a.clone();
        f.forward(&mut a);
        f.inverse(&mut a);
        for (x, y) in a.iter().zip(&orig) {
            assert!((x - y).norm() < 1e-12);
        }
        // e^{2 pi i (1*j0 + 2*j1)/8} lands in bin (1,2)
        let mut b: Vec<Complex64> = (0..64)
            .map(|i| {
                let (j0, j1) = (i / 8, i % 8);
                Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * (j0 + 2 * j1) as f64 / 8.0)
            })
            .collect();
        f.forward(&mut b);
        for (i, z) in b.iter().enumerate() {
            let want = if i == 8 + 2 { 64.0 } else { 0.0 };
            assert!((z.re - want).abs() < 1e-9 && z.im.abs() < 1e-9);
        }
    }
}
