//! Electrostatic Vlasov-Poisson particle-in-cell simulation on a periodic box.
//!
//! Four interchangeable field solvers share one particle pipeline:
//! pseudo-spectral FFT ([`spectral`]), matrix-free finite-difference PCG
//! ([`pcg`]), matrix-free trilinear finite elements ([`fem`]) and
//! particle-in-Fourier through non-uniform FFTs ([`pif`], [`nufft`]). The
//! [`driver`] module runs the weak Landau damping benchmark and records
//! per-phase diagnostics.

pub mod cli;
pub mod driver;
pub mod error;
pub mod exec;
pub mod fft;
pub mod mesh;
pub mod nufft;
pub mod particles;
pub mod fem;
pub mod pcg;
pub mod pif;
pub mod spectral;

pub use error::{Error, Result};
pub use exec::Execution;
