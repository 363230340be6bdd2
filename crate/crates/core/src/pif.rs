//! Particle-in-Fourier field solve.
//!
//! Charges go straight to Fourier space with a type-1 transform, Poisson is
//! solved mode by mode, and the field returns to the particles through a
//! type-2 transform. There is no real-space charge grid.
//!
//! With `rho_hat(k) = sum_j q_j exp(-i k.x_j)` the density is
//! `rho(x) = (1/V) sum_k rho_hat(k) exp(i k.x)`, so
//! `phi_hat = rho_hat / (V |k|^2)` and `E_hat = -i k phi_hat`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::fft::{signed_mode, Fft3};
use crate::mesh::{field_energy_component, ScalarGrid, UniformMesh, VectorGrid};
use crate::nufft::{nudft_type1_bruteforce, nudft_type2_bruteforce, ModeSet, Nufft, SpectralCoefficients, WindowSpec};
use crate::particles::ParticleEnsemble;

/// How charges and fields move between particles and modes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FourierTransport {
    Nufft(WindowSpec),
    /// Direct summation; exact but `O(N_p N_m)`.
    Direct,
}

#[derive(Debug)]
enum Plan {
    Nufft(Nufft),
    Direct,
}

/// Output of one PIF solve.
#[derive(Clone, Debug)]
pub struct PifSolution {
    pub rho_hat: SpectralCoefficients,
    pub e_hat: [SpectralCoefficients; 3],
    pub field_at_particles: Vec<[f64; 3]>,
}

#[derive(Debug)]
pub struct PifSolver {
    modes: ModeSet,
    plan: Plan,
}

impl PifSolver {
    pub fn new(modes: ModeSet, transport: FourierTransport, exec: Execution) -> Result<Self> {
        let plan = match transport {
            FourierTransport::Nufft(window) => Plan::Nufft(Nufft::new(modes, window, exec)?),
            FourierTransport::Direct => Plan::Direct,
        };
        Ok(Self { modes, plan })
    }

    pub fn modes(&self) -> &ModeSet {
        &self.modes
    }

    /// `rho_hat` of the particle charges, zero mode included.
    pub fn deposit(&self, ensemble: &ParticleEnsemble) -> SpectralCoefficients {
        let q = ensemble.macro_charge();
        match &self.plan {
            Plan::Nufft(plan) => plan.type1_real(&ensemble.positions, &vec![q; ensemble.len()]),
            Plan::Direct => {
                let w = vec![Complex64::new(q, 0.0); ensemble.len()];
                nudft_type1_bruteforce(&ensemble.positions, &w, &self.modes)
            }
        }
    }

    /// Mode-wise Poisson solve and spectral gradient. The zero mode is
    /// dropped (neutralizing background), as is every mode with some
    /// `n_d = -N_d/2`: those have no `-n` partner in the set, and keeping them
    /// would make `E` non-Hermitian.
    pub fn solve_modes(&self, rho_hat: &SpectralCoefficients) -> [SpectralCoefficients; 3] {
        assert_eq!(rho_hat.modes, self.modes, "density on a different mode set");
        let volume: f64 = self.modes.extent().iter().product();
        let nyquist = self.modes.counts().map(|c| -((c / 2) as i64));
        let mut e_hat: [SpectralCoefficients; 3] = std::array::from_fn(|_| SpectralCoefficients::zeros(self.modes));
        for (idx, rho) in rho_hat.values.iter().enumerate() {
            let n = self.modes.mode(idx);
            if n == [0, 0, 0] || (0..3).any(|d| n[d] == nyquist[d]) {
                continue;
            }
            let k = self.modes.wavevector(idx);
            let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
            let phi = rho / (volume * k2);
            for d in 0..3 {
                e_hat[d].values[idx] = Complex64::new(k[d] * phi.im, -k[d] * phi.re);
            }
        }
        e_hat
    }

    /// Real field at the given positions.
    pub fn interpolate(&self, e_hat: &[SpectralCoefficients; 3], positions: &[Vec<f64>; 3]) -> Vec<[f64; 3]> {
        match &self.plan {
            Plan::Nufft(plan) => plan.type2_real_batch([&e_hat[0], &e_hat[1], &e_hat[2]], positions),
            Plan::Direct => {
                let values: Vec<Vec<Complex64>> = e_hat.iter().map(|c| nudft_type2_bruteforce(c, positions)).collect();
                (0..positions[0].len())
                    .map(|j| [values[0][j].re, values[1][j].re, values[2][j].re])
                    .collect()
            }
        }
    }

    pub fn solve(&self, ensemble: &ParticleEnsemble) -> PifSolution {
        let rho_hat = self.deposit(ensemble);
        let e_hat = self.solve_modes(&rho_hat);
        let field_at_particles = self.interpolate(&e_hat, &ensemble.positions);
        PifSolution {
            rho_hat,
            e_hat,
            field_at_particles,
        }
    }
}

/// One-shot PIF solve through the fast transforms.
pub fn pif_field_solve(ensemble: &ParticleEnsemble, modes: &ModeSet, window: &WindowSpec) -> Result<PifSolution> {
    Ok(PifSolver::new(*modes, FourierTransport::Nufft(*window), Execution::default())?.solve(ensemble))
}

/// Evaluates `E` on the nodes of a mesh whose cell counts equal the mode
/// counts, by an inverse uniform DFT.
pub fn pif_field_grid(e_hat: &[SpectralCoefficients; 3], mesh: &UniformMesh) -> Result<VectorGrid> {
    let modes = e_hat[0].modes;
    if mesh.cells() != modes.counts() || mesh.extent() != modes.extent() {
        return Err(Error::InvalidMesh(format!(
            "mesh {:?} / {:?} does not match mode set {:?} / {:?}",
            mesh.cells(),
            mesh.extent(),
            modes.counts(),
            modes.extent()
        )));
    }
    let cells = mesh.cells();
    let fft = Fft3::new(cells);
    let components = std::array::from_fn(|d| {
        let mut data = vec![Complex64::default(); fft.len()];
        for (idx, slot) in data.iter_mut().enumerate() {
            let [i, j, k] = mesh.owned_coords(idx);
            let n = [
                signed_mode(i, cells[0]),
                signed_mode(j, cells[1]),
                signed_mode(k, cells[2]),
            ];
            // signed_mode puts the unpaired index at +N/2; the mode set stores it at -N/2
            let n: [i64; 3] = std::array::from_fn(|a| {
                if n[a] == (cells[a] / 2) as i64 {
                    -n[a]
                } else {
                    n[a]
                }
            });
            *slot = e_hat[d].get(n).unwrap_or_default();
        }
        fft.inverse(&mut data);
        let owned: Vec<f64> = data.iter().map(|c| c.re).collect();
        ScalarGrid::from_owned(*mesh, &owned)
    });
    Ok(VectorGrid::from_components(components))
}

/// `0.5 * integral(E_d^2)` of the PIF field, using the grid diagnostic.
pub fn pif_field_energy(e_hat: &[SpectralCoefficients; 3], mesh: &UniformMesh, d: usize) -> Result<f64> {
    Ok(field_energy_component(&pif_field_grid(e_hat, mesh)?, d))
}
