//! Type-1 and type-2 non-uniform FFTs on the periodic box with a Gaussian
//! spreading window, plus direct-summation references.
//!
//! Type 1: `f_hat(k) = sum_j w_j exp(-i k.x_j)` for `k` in the mode set.
//! Type 2: `f(x_j) = sum_k f_hat(k) exp(i k.x_j)`.
//!
//! The fast type-1 pipeline spreads onto an oversampled grid of `M = sigma N`
//! points per axis, runs a forward FFT, keeps the `N` central modes and divides
//! out the window transform. Type 2 runs the exact adjoint of that linear map.
//! Spreading goes through a padded grid (`half_width` extra nodes per side)
//! that is folded back periodically, so the inner loops never wrap.

use std::f64::consts::PI;
use std::ops::{AddAssign, Mul};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::fft::Fft3;

/// Oversampling factor used when none is given.
pub const DEFAULT_OVERSAMPLING: f64 = 2.0;
/// Smallest accuracy the Gaussian window can deliver in double precision.
pub const MIN_EPSILON: f64 = 1e-12;

const SPREAD_CHUNK: usize = 1 << 16;
/// Edge, in fine cells, of the blocks used to order particle traversal.
const LOCALITY_BLOCK: usize = 8;

/// Fourier modes `k_d = 2 pi n_d / L_d`, `n_d` in `[-N_d/2, N_d/2 - 1]`.
///
/// Coefficients are stored in centred order: flat index `i + Nx (j + Ny k)`
/// holds mode `(i - Nx/2, j - Ny/2, k - Nz/2)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModeSet {
    counts: [usize; 3],
    extent: [f64; 3],
}

impl ModeSet {
    pub fn new(counts: [usize; 3], extent: [f64; 3]) -> Result<Self> {
        for d in 0..3 {
            if counts[d] < 2 || counts[d] % 2 != 0 {
                return Err(Error::InvalidParameter(format!(
                    "mode count per dimension must be even and >= 2, got {}",
                    counts[d]
                )));
            }
            if !(extent[d] > 0.0 && extent[d].is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "domain extent must be positive, got {}",
                    extent[d]
                )));
            }
        }
        Ok(Self { counts, extent })
    }

    pub fn counts(&self) -> [usize; 3] {
        self.counts
    }

    pub fn extent(&self) -> [f64; 3] {
        self.extent
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Integer mode triple at a flat index.
    pub fn mode(&self, idx: usize) -> [i64; 3] {
        let [nx, ny, _] = self.counts;
        let c = [idx % nx, (idx / nx) % ny, idx / (nx * ny)];
        std::array::from_fn(|d| c[d] as i64 - (self.counts[d] / 2) as i64)
    }

    pub fn wavevector(&self, idx: usize) -> [f64; 3] {
        let n = self.mode(idx);
        std::array::from_fn(|d| 2.0 * PI * n[d] as f64 / self.extent[d])
    }

    pub fn index_of(&self, n: [i64; 3]) -> Option<usize> {
        let mut c = [0usize; 3];
        for d in 0..3 {
            let shifted = n[d] + (self.counts[d] / 2) as i64;
            if shifted < 0 || shifted >= self.counts[d] as i64 {
                return None;
            }
            c[d] = shifted as usize;
        }
        Some(c[0] + self.counts[0] * (c[1] + self.counts[1] * c[2]))
    }
}

/// Complex values indexed by a [`ModeSet`].
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralCoefficients {
    pub modes: ModeSet,
    pub values: Vec<Complex64>,
}

impl SpectralCoefficients {
    pub fn zeros(modes: ModeSet) -> Self {
        Self {
            modes,
            values: vec![Complex64::default(); modes.len()],
        }
    }

    pub fn get(&self, n: [i64; 3]) -> Option<Complex64> {
        self.modes.index_of(n).map(|i| self.values[i])
    }
}

/// Gaussian spreading window `exp(-theta^2 / (4 tau_d))` on the oversampled
/// grid, where `theta = 2 pi x / L_d`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WindowSpec {
    pub sigma: f64,
    /// Mode counts this window was built for.
    pub modes: [usize; 3],
    /// Oversampled grid size per dimension.
    pub fine: [usize; 3],
    /// Fine-grid nodes spread to on each side of the nearest node.
    pub half_width: usize,
    pub tau: [f64; 3],
    pub epsilon: f64,
}

impl WindowSpec {
    pub fn support(&self) -> usize {
        2 * self.half_width + 1
    }
}

/// Chooses the window for accuracy `epsilon`.
///
/// The half-width grows like `log(1/epsilon)`; `tau` follows the
/// Greengard-Lee balance between truncation and aliasing.
pub fn select_window_parameters(epsilon: f64, sigma: f64, modes: [usize; 3]) -> Result<WindowSpec> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must lie in (0, 1), got {epsilon}"
        )));
    }
    if epsilon < MIN_EPSILON {
        return Err(Error::InvalidParameter(format!(
            "epsilon {epsilon:e} is below the supported minimum {MIN_EPSILON:e}"
        )));
    }
    if !(sigma > 1.0) {
        return Err(Error::InvalidParameter(format!(
            "oversampling factor must exceed 1, got {sigma}"
        )));
    }
    let half_width = window_half_width(epsilon, sigma);
    let fine = modes.map(|n| {
        let m = (sigma * n as f64).ceil() as usize;
        m + m % 2
    });
    for &m in &fine {
        if 2 * half_width + 1 > m {
            return Err(Error::WindowAccuracyUnreachable {
                epsilon,
                half_width,
                fine: m,
            });
        }
    }
    // effective oversampling after rounding M up
    let tau = std::array::from_fn(|d| {
        let s = fine[d] as f64 / modes[d] as f64;
        PI * half_width as f64 / ((modes[d] * modes[d]) as f64 * s * (s - 0.5))
    });
    Ok(WindowSpec {
        sigma,
        modes,
        fine,
        half_width,
        tau,
        epsilon,
    })
}

fn window_half_width(epsilon: f64, sigma: f64) -> usize {
    let w = (1.0 / epsilon).ln() * (sigma - 0.5) / (PI * (sigma - 1.0));
    w.ceil() as usize
}

/// Direct evaluation of the type-1 sum; `O(N_p N_m)`.
pub fn nudft_type1_bruteforce(points: &[Vec<f64>; 3], weights: &[Complex64], modes: &ModeSet) -> SpectralCoefficients {
    assert_eq!(points[0].len(), weights.len());
    let mut out = SpectralCoefficients::zeros(*modes);
    for (idx, value) in out.values.iter_mut().enumerate() {
        let k = modes.wavevector(idx);
        let mut acc = Complex64::default();
        for (j, w) in weights.iter().enumerate() {
            let phase = -(k[0] * points[0][j] + k[1] * points[1][j] + k[2] * points[2][j]);
            acc += w * Complex64::from_polar(1.0, phase);
        }
        *value = acc;
    }
    out
}

/// Direct evaluation of the type-2 sum; `O(N_p N_m)`.
pub fn nudft_type2_bruteforce(coeffs: &SpectralCoefficients, points: &[Vec<f64>; 3]) -> Vec<Complex64> {
    let modes = &coeffs.modes;
    let wave: Vec<[f64; 3]> = (0..modes.len()).map(|i| modes.wavevector(i)).collect();
    (0..points[0].len())
        .map(|j| {
            let x = [points[0][j], points[1][j], points[2][j]];
            coeffs
                .values
                .iter()
                .zip(&wave)
                .map(|(c, k)| c * Complex64::from_polar(1.0, k[0] * x[0] + k[1] * x[1] + k[2] * x[2]))
                .sum()
        })
        .collect()
}

trait Sample: Copy + Default + Send + Sync + AddAssign + Mul<f64, Output = Self> {}
impl Sample for f64 {}
impl Sample for Complex64 {}
impl Sample for Triple {}

/// Three real field components stored together.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
struct Triple([f64; 3]);

impl AddAssign for Triple {
    fn add_assign(&mut self, rhs: Self) {
        for (a, b) in self.0.iter_mut().zip(rhs.0) {
            *a += b;
        }
    }
}

impl Mul<f64> for Triple {
    type Output = Self;

    fn mul(self, rhs: f64) -> Self {
        Triple(self.0.map(|v| v * rhs))
    }
}

/// Planned NUFFT for one mode set and window.
pub struct Nufft {
    modes: ModeSet,
    window: WindowSpec,
    fft: Fft3,
    padded: [usize; 3],
    /// Padded index -> fine index, per axis.
    fold: [Vec<usize>; 3],
    /// Deconvolution factor per centred mode index, per axis.
    deconvolution: [Vec<f64>; 3],
    /// exp(-(l h)^2 / 4tau) for l = 0..=w, per axis.
    gaussian_tail: [Vec<f64>; 3],
    exec: Execution,
}

impl std::fmt::Debug for Nufft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Nufft")
            .field("modes", &self.modes)
            .field("window", &self.window)
            .finish()
    }
}

/// Per-particle window footprint: first padded index and weights per axis.
struct Footprint {
    start: [usize; 3],
    weights: [Vec<f64>; 3],
}

impl Nufft {
    pub fn new(modes: ModeSet, window: WindowSpec, exec: Execution) -> Result<Self> {
        if window.modes != modes.counts() {
            return Err(Error::InvalidParameter(format!(
                "window built for modes {:?}, transform has {:?}",
                window.modes,
                modes.counts()
            )));
        }
        let w = window.half_width;
        let padded = window.fine.map(|m| m + 2 * w + 1);
        let fold = std::array::from_fn(|d| {
            let m = window.fine[d];
            (0..padded[d]).map(|p| (p + m - w) % m).collect()
        });
        let deconvolution = std::array::from_fn(|d| {
            let n = modes.counts()[d];
            let tau = window.tau[d];
            let m = window.fine[d] as f64;
            (0..n)
                .map(|i| {
                    let k = i as f64 - (n / 2) as f64;
                    (PI / tau).sqrt() / m * (k * k * tau).exp()
                })
                .collect()
        });
        let gaussian_tail = std::array::from_fn(|d| {
            let h = 2.0 * PI / window.fine[d] as f64;
            (0..=w)
                .map(|l| {
                    let t = l as f64 * h;
                    (-t * t / (4.0 * window.tau[d])).exp()
                })
                .collect()
        });
        Ok(Self {
            modes,
            window,
            fft: Fft3::new(window.fine),
            padded,
            fold,
            deconvolution,
            gaussian_tail,
            exec,
        })
    }

    pub fn modes(&self) -> &ModeSet {
        &self.modes
    }

    pub fn window(&self) -> &WindowSpec {
        &self.window
    }

    fn footprint(&self, x: [f64; 3]) -> Footprint {
        let w = self.window.half_width;
        let mut start = [0usize; 3];
        let weights = std::array::from_fn(|d| {
            let m = self.window.fine[d];
            let u = x[d] / self.modes.extent()[d] * m as f64;
            let centre = u.round();
            // padded index of fine node `centre - w`
            start[d] = centre as usize;
            let h = 2.0 * PI / m as f64;
            let inv4tau = 1.0 / (4.0 * self.window.tau[d]);
            // exp(-(t0 + l h)^2 / 4tau) = exp(-t0^2/4tau) * r^l * exp(-(l h)^2/4tau)
            let t0 = (centre - u) * h;
            let base = (-t0 * t0 * inv4tau).exp();
            let ratio = (-2.0 * t0 * h * inv4tau).exp();
            let table = &self.gaussian_tail[d];
            let mut k = vec![0.0; 2 * w + 1];
            k[w] = base;
            let (mut up, mut down) = (base, base);
            let inv_ratio = ratio.recip();
            for l in 1..=w {
                up *= ratio;
                down *= inv_ratio;
                k[w + l] = up * table[l];
                k[w - l] = down * table[l];
            }
            k
        });
        Footprint { start, weights }
    }

    fn spread<T: Sample>(&self, points: &[Vec<f64>; 3], weights: &[T]) -> Vec<T> {
        let [px, py, pz] = self.padded;
        let len = px * py * pz;
        let order = self.locality_order(points);
        let buffers = exec::map_chunks(self.exec, weights.len(), SPREAD_CHUNK, |range| {
            let mut grid = vec![T::default(); len];
            for &j in &order[range] {
                let fp = self.footprint([points[0][j], points[1][j], points[2][j]]);
                let [kx, ky, kz] = &fp.weights;
                for (c, wz) in kz.iter().enumerate() {
                    let vz = weights[j] * *wz;
                    let plane = (fp.start[2] + c) * py;
                    for (b, wy) in ky.iter().enumerate() {
                        let vyz = vz * *wy;
                        let row = (plane + fp.start[1] + b) * px + fp.start[0];
                        for (cell, wx) in grid[row..row + kx.len()].iter_mut().zip(kx) {
                            *cell += vyz * *wx;
                        }
                    }
                }
            }
            grid
        });
        let mut buffers = buffers.into_iter();
        let mut total = buffers.next().unwrap_or_else(|| vec![T::default(); len]);
        for b in buffers {
            total.iter_mut().zip(b).for_each(|(t, v)| *t += v);
        }
        total
    }

    fn fold_to_fine<T: Sample>(&self, padded: &[T]) -> Vec<Complex64>
    where
        Complex64: From<T>,
    {
        let [mx, my, _] = self.window.fine;
        let [px, py, pz] = self.padded;
        let mut fine = vec![Complex64::default(); self.fft.len()];
        for p2 in 0..pz {
            let f2 = self.fold[2][p2];
            for p1 in 0..py {
                let f1 = self.fold[1][p1];
                let row = (p2 * py + p1) * px;
                let out = mx * (f1 + my * f2);
                for p0 in 0..px {
                    fine[out + self.fold[0][p0]] += Complex64::from(padded[row + p0]);
                }
            }
        }
        fine
    }

    fn unfold_from_fine<T: Sample>(&self, fine: &[T]) -> Vec<T> {
        let [mx, my, _] = self.window.fine;
        let [px, py, pz] = self.padded;
        let mut padded = Vec::with_capacity(px * py * pz);
        for p2 in 0..pz {
            let f2 = self.fold[2][p2];
            for p1 in 0..py {
                let base = mx * (self.fold[1][p1] + my * f2);
                padded.extend(self.fold[0].iter().map(|&f0| fine[base + f0]));
            }
        }
        padded
    }

    /// Visits every mode with its fine-grid index and deconvolution factor.
    fn for_each_mode(&self, mut f: impl FnMut(usize, usize, f64)) {
        let [nx, ny, nz] = self.modes.counts();
        let [mx, my, mz] = self.window.fine;
        let wrap = |i: usize, n: usize, m: usize| (i + m - n / 2) % m;
        let mut idx = 0;
        for k in 0..nz {
            let fk = wrap(k, nz, mz);
            let dk = self.deconvolution[2][k];
            for j in 0..ny {
                let fj = wrap(j, ny, my);
                let djk = dk * self.deconvolution[1][j];
                for i in 0..nx {
                    let fi = wrap(i, nx, mx);
                    f(idx, fi + mx * (fj + my * fk), djk * self.deconvolution[0][i]);
                    idx += 1;
                }
            }
        }
    }

    fn finish_type1(&self, mut fine: Vec<Complex64>) -> SpectralCoefficients {
        self.fft.forward(&mut fine);
        let mut out = SpectralCoefficients::zeros(self.modes);
        self.for_each_mode(|idx, f, d| out.values[idx] = fine[f] * d);
        out
    }

    fn fine_from_coefficients(&self, coeffs: &SpectralCoefficients) -> Vec<Complex64> {
        assert_eq!(coeffs.modes, self.modes, "coefficients on a different mode set");
        let mut fine = vec![Complex64::default(); self.fft.len()];
        self.for_each_mode(|idx, f, d| fine[f] = coeffs.values[idx] * d);
        self.fft.inverse(&mut fine);
        fine
    }

    /// Type-1 transform of complex weights.
    pub fn type1(&self, points: &[Vec<f64>; 3], weights: &[Complex64]) -> SpectralCoefficients {
        assert_eq!(points[0].len(), weights.len());
        let padded = self.spread(points, weights);
        self.finish_type1(self.fold_to_fine(&padded))
    }

    /// Type-1 transform of real weights (spreads on a real grid).
    pub fn type1_real(&self, points: &[Vec<f64>; 3], weights: &[f64]) -> SpectralCoefficients {
        assert_eq!(points[0].len(), weights.len());
        let padded = self.spread(points, weights);
        self.finish_type1(self.fold_to_fine(&padded))
    }

    /// Type-2 transform evaluated at every point.
    pub fn type2(&self, coeffs: &SpectralCoefficients, points: &[Vec<f64>; 3]) -> Vec<Complex64> {
        let padded = self.unfold_from_fine(&self.fine_from_coefficients(coeffs));
        self.interpolate(&padded, points)
    }

    /// Real parts of three type-2 transforms sharing one set of points.
    pub fn type2_real_batch(&self, coeffs: [&SpectralCoefficients; 3], points: &[Vec<f64>; 3]) -> Vec<[f64; 3]> {
        let fine: Vec<Vec<Complex64>> = coeffs.iter().map(|c| self.fine_from_coefficients(c)).collect();
        let interleaved: Vec<Triple> = (0..self.fft.len())
            .map(|i| Triple([fine[0][i].re, fine[1][i].re, fine[2][i].re]))
            .collect();
        let padded = self.unfold_from_fine(&interleaved);
        self.interpolate(&padded, points).into_iter().map(|t| t.0).collect()
    }

    /// Particle indices sorted by block of fine cells, so consecutive
    /// particles touch nearby grid rows. Counting sort; stable.
    fn locality_order(&self, points: &[Vec<f64>; 3]) -> Vec<usize> {
        let fine = self.window.fine;
        let extent = self.modes.extent();
        let blocks = fine.map(|m| m.div_ceil(LOCALITY_BLOCK));
        let block = |j: usize| -> usize {
            let b: [usize; 3] = std::array::from_fn(|d| {
                let cell = (points[d][j] / extent[d] * fine[d] as f64).floor().max(0.0) as usize;
                (cell / LOCALITY_BLOCK).min(blocks[d] - 1)
            });
            b[0] + blocks[0] * (b[1] + blocks[1] * b[2])
        };
        let n = points[0].len();
        let keys: Vec<usize> = (0..n).map(block).collect();
        let mut start = vec![0usize; blocks.iter().product::<usize>() + 1];
        for &k in &keys {
            start[k + 1] += 1;
        }
        for i in 1..start.len() {
            start[i] += start[i - 1];
        }
        let mut order = vec![0usize; n];
        for (j, &k) in keys.iter().enumerate() {
            order[start[k]] = j;
            start[k] += 1;
        }
        order
    }

    fn interpolate<T: Sample>(&self, grid: &[T], points: &[Vec<f64>; 3]) -> Vec<T> {
        let [px, py, _] = self.padded;
        let order = self.locality_order(points);
        let sorted = exec::map_chunks(self.exec, order.len(), exec::PARTICLE_CHUNK, |range| {
            order[range]
                .iter()
                .map(|&j| {
                    let fp = self.footprint([points[0][j], points[1][j], points[2][j]]);
                    let [kx, ky, kz] = &fp.weights;
                    let mut acc = T::default();
                    for (c, wz) in kz.iter().enumerate() {
                        let plane = (fp.start[2] + c) * py;
                        let mut acc_z = T::default();
                        for (b, wy) in ky.iter().enumerate() {
                            let row = (plane + fp.start[1] + b) * px + fp.start[0];
                            let mut line = T::default();
                            for (v, wx) in grid[row..row + kx.len()].iter().zip(kx) {
                                line += *v * *wx;
                            }
                            acc_z += line * *wy;
                        }
                        acc += acc_z * *wz;
                    }
                    acc
                })
                .collect::<Vec<T>>()
        });
        let mut out = vec![T::default(); order.len()];
        for (&j, v) in order.iter().zip(sorted.into_iter().flatten()) {
            out[j] = v;
        }
        out
    }
}

/// One-shot type-1 NUFFT.
pub fn nufft_type1(
    points: &[Vec<f64>; 3],
    weights: &[Complex64],
    modes: &ModeSet,
    window: &WindowSpec,
) -> Result<SpectralCoefficients> {
    Ok(Nufft::new(*modes, *window, Execution::default())?.type1(points, weights))
}

/// One-shot type-2 NUFFT.
pub fn nufft_type2(coeffs: &SpectralCoefficients, points: &[Vec<f64>; 3], window: &WindowSpec) -> Result<Vec<Complex64>> {
    Ok(Nufft::new(coeffs.modes, *window, Execution::default())?.type2(coeffs, points))
}
