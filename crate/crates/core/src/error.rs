use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite particle position {value} in dimension {dim} (particle {index})")]
    NonFinitePosition { index: usize, dim: usize, value: f64 },

    #[error("CG did not converge in {iterations} iterations (relative residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("preconditioner is indefinite: <r, M^-1 r> = {0:e}")]
    IndefinitePreconditioner(f64),

    #[error("spectral solve produced imaginary residue {imag:e} relative to {real:e}")]
    BrokenSymmetry { imag: f64, real: f64 },

    #[error("window cannot reach accuracy {epsilon:e}: needs half-width {half_width} on a fine grid of {fine} points")]
    WindowAccuracyUnreachable {
        epsilon: f64,
        half_width: usize,
        fine: usize,
    },

    #[error("fewer than 3 usable energy peaks ({0})")]
    InsufficientPeaks(usize),

    #[error("step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Cli(#[from] clap::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
