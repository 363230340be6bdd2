//! Pseudo-spectral Poisson solve on the periodic grid.
//!
//! `phi_hat(k) = rho_hat(k) / |k|^2` for `k != 0`, `phi_hat(0) = 0`, and
//! `E_hat(k) = -i k phi_hat(k)`. The derivative of the unpaired Nyquist row
//! (`n_d = -N_d/2`) along `d` is set to zero so the inverse transform of a real
//! field stays real.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::{signed_mode, Fft3};
use crate::mesh::{ScalarGrid, UniformMesh, VectorGrid};

/// Relative imaginary residue above which the inverse transform is rejected.
pub const MAX_IMAGINARY_RESIDUE: f64 = 1e-8;

#[derive(Debug)]
pub struct FftPoissonSolver {
    mesh: UniformMesh,
    fft: Fft3,
    /// Physical wave numbers per axis in FFT order.
    wavenumbers: [Vec<f64>; 3],
    /// Derivative symbols per axis; zero on the unpaired Nyquist index.
    derivative: [Vec<f64>; 3],
}

impl FftPoissonSolver {
    pub fn new(mesh: UniformMesh) -> Self {
        let cells = mesh.cells();
        let extent = mesh.extent();
        let wavenumbers = [0, 1, 2].map(|d| {
            let n = cells[d];
            (0..n)
                .map(|i| 2.0 * std::f64::consts::PI * signed_mode(i, n) as f64 / extent[d])
                .collect::<Vec<_>>()
        });
        let derivative = [0, 1, 2].map(|d| {
            let n = cells[d];
            wavenumbers[d]
                .iter()
                .enumerate()
                .map(|(i, &k)| if n % 2 == 0 && i == n / 2 { 0.0 } else { k })
                .collect()
        });
        Self {
            mesh,
            fft: Fft3::new(cells),
            wavenumbers,
            derivative,
        }
    }

    pub fn mesh(&self) -> &UniformMesh {
        &self.mesh
    }

    /// Squared wave-vector norm at FFT-order flat index.
    fn k_squared(&self, idx: usize) -> f64 {
        let [i, j, k] = self.mesh.owned_coords(idx);
        self.wavenumbers[0][i].powi(2) + self.wavenumbers[1][j].powi(2) + self.wavenumbers[2][k].powi(2)
    }

    fn to_spectrum(&self, grid: &ScalarGrid) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = grid
            .owned_values()
            .into_iter()
            .map(|v| Complex64::new(v, 0.0))
            .collect();
        self.fft.forward(&mut data);
        data
    }

    fn to_real(&self, mut spectrum: Vec<Complex64>) -> Result<ScalarGrid> {
        self.fft.inverse(&mut spectrum);
        let scale = 1.0 / spectrum.len() as f64;
        let (mut re_max, mut im_max) = (0.0f64, 0.0f64);
        let owned: Vec<f64> = spectrum
            .iter()
            .map(|c| {
                re_max = re_max.max((c.re * scale).abs());
                im_max = im_max.max((c.im * scale).abs());
                c.re * scale
            })
            .collect();
        if im_max > MAX_IMAGINARY_RESIDUE * re_max.max(f64::MIN_POSITIVE) {
            return Err(Error::BrokenSymmetry {
                imag: im_max,
                real: re_max,
            });
        }
        Ok(ScalarGrid::from_owned(self.mesh, &owned))
    }

    /// Potential and field for the charge density `rho` (zero mode removed).
    pub fn solve(&self, rho: &ScalarGrid) -> Result<(ScalarGrid, VectorGrid)> {
        assert_eq!(rho.mesh(), &self.mesh, "density lives on a different mesh");
        let mut phi_hat = self.to_spectrum(rho);
        for (idx, c) in phi_hat.iter_mut().enumerate() {
            let k2 = self.k_squared(idx);
            *c = if idx == 0 { Complex64::default() } else { *c / k2 };
        }
        let components = [0, 1, 2].map(|d| {
            let e_hat: Vec<Complex64> = phi_hat
                .iter()
                .enumerate()
                .map(|(idx, &p)| {
                    let kd = self.derivative[d][self.mesh.owned_coords(idx)[d]];
                    // -i k phi
                    Complex64::new(kd * p.im, -kd * p.re)
                })
                .collect();
            self.to_real(e_hat)
        });
        let [ex, ey, ez] = components;
        let field = VectorGrid::from_components([ex?, ey?, ez?]);
        let phi = self.to_real(phi_hat)?;
        Ok((phi, field))
    }

    /// Applies the spectral Laplacian `-|k|^2` to a grid field.
    pub fn laplacian(&self, grid: &ScalarGrid) -> Result<ScalarGrid> {
        let mut data = self.to_spectrum(grid);
        for (idx, c) in data.iter_mut().enumerate() {
            *c *= -self.k_squared(idx);
        }
        self.to_real(data)
    }
}

/// One-shot spectral solve; plans a fresh FFT each call.
pub fn solve_poisson_fft(rho: &ScalarGrid) -> Result<(ScalarGrid, VectorGrid)> {
    FftPoissonSolver::new(*rho.mesh()).solve(rho)
}
