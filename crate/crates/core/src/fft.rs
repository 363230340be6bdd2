//! Three-dimensional complex DFT on x-fastest arrays, built from 1D rustfft
//! plans along each axis.
//!
//! `forward` computes `sum_m g_m exp(-i 2 pi n.m / N)`; `inverse` is the
//! unnormalized `exp(+i ...)` sum. Callers divide by the node count where the
//! normalized inverse is wanted.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub struct Fft3 {
    dims: [usize; 3],
    forward: [Arc<dyn Fft<f64>>; 3],
    inverse: [Arc<dyn Fft<f64>>; 3],
}

impl std::fmt::Debug for Fft3 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft3").field("dims", &self.dims).finish()
    }
}

impl Fft3 {
    pub fn new(dims: [usize; 3]) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            dims,
            forward: dims.map(|n| planner.plan_fft_forward(n)),
            inverse: dims.map(|n| planner.plan_fft_inverse(n)),
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(&self.forward, data);
    }

    pub fn inverse(&self, data: &mut [Complex64]) {
        self.run(&self.inverse, data);
    }

    fn run(&self, plans: &[Arc<dyn Fft<f64>>; 3], data: &mut [Complex64]) {
        assert_eq!(data.len(), self.len(), "FFT buffer length mismatch");
        let [nx, ny, nz] = self.dims;

        // x lines are contiguous
        plans[0].process(data);

        // y lines: gather one z-plane into nx lines of length ny
        let mut lines = vec![Complex64::default(); nx * ny.max(nz)];
        for k in 0..nz {
            let plane = &mut data[k * nx * ny..(k + 1) * nx * ny];
            for j in 0..ny {
                for i in 0..nx {
                    lines[i * ny + j] = plane[i + nx * j];
                }
            }
            plans[1].process(&mut lines[..nx * ny]);
            for j in 0..ny {
                for i in 0..nx {
                    plane[i + nx * j] = lines[i * ny + j];
                }
            }
        }

        // z lines: for each y row, gather nx lines of length nz
        for j in 0..ny {
            for k in 0..nz {
                for i in 0..nx {
                    lines[i * nz + k] = data[i + nx * (j + ny * k)];
                }
            }
            plans[2].process(&mut lines[..nx * nz]);
            for k in 0..nz {
                for i in 0..nx {
                    data[i + nx * (j + ny * k)] = lines[i * nz + k];
                }
            }
        }
    }
}

/// Signed mode number of FFT-order index `i` on an axis of length `n`:
/// `0..n/2` map to themselves, the rest to `i - n` (so even `n` yields
/// `[-n/2, n/2 - 1]`).
#[inline]
pub fn signed_mode(i: usize, n: usize) -> i64 {
    if i < n.div_ceil(2) {
        i as i64
    } else {
        i as i64 - n as i64
    }
}
