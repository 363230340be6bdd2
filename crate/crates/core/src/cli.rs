//! Command-line and config-file front end.
//!
//! A config file holds `key = value` lines with `#` comments. Keys are the
//! long flag names (`ssor-omega` or `ssor_omega`); list values are separated
//! by whitespace and switches take `true` or `false`. Flags given on the
//! command line win over the file.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{CommandFactory, FromArgMatches, Parser};

use crate::driver::{SimConfig, SolverKind};
use crate::error::{Error, Result};
use crate::pcg::{PreconditionerKind, DEFAULT_SSOR_INNER, DEFAULT_SSOR_OMEGA, DEFAULT_SSOR_OUTER};

#[derive(Parser, Debug, Default, Clone, PartialEq)]
#[command(name = "picbench", about = "Electrostatic PIC/PIF Landau damping benchmark")]
pub struct CliArgs {
    /// Field solver.
    #[arg(long, value_parser = ["fft", "pcg", "fem", "pif"])]
    pub solver: Option<String>,
    /// Cells per dimension: one value for a cube or three.
    #[arg(long, num_args = 1..=3, value_name = "N")]
    pub grid: Option<Vec<usize>>,
    /// Particles per cell.
    #[arg(long)]
    pub ppc: Option<usize>,
    /// Perturbation amplitude.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Perturbation wave number; the box side is 2 pi / kmode.
    #[arg(long)]
    pub kmode: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// CG tolerance, or NUFFT accuracy for pif.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long, value_parser = ["none", "jacobi", "ssor"])]
    pub precond: Option<String>,
    #[arg(long)]
    pub ssor_omega: Option<f64>,
    #[arg(long)]
    pub ssor_inner: Option<usize>,
    #[arg(long)]
    pub ssor_outer: Option<usize>,
    /// External magnetic field.
    #[arg(long, num_args = 3, value_names = ["BX", "BY", "BZ"], allow_negative_numbers = true)]
    pub bext: Option<Vec<f64>>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Serial kernels only.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub deterministic: Option<bool>,
    /// key = value file with defaults for any flag.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Diagnostics CSV path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Print the fitted energy decay slope.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub fit_damping: Option<bool>,
}

impl CliArgs {
    /// Fields of `self`, falling back to `other`.
    fn or(self, other: CliArgs) -> CliArgs {
        CliArgs {
            solver: self.solver.or(other.solver),
            grid: self.grid.or(other.grid),
            ppc: self.ppc.or(other.ppc),
            alpha: self.alpha.or(other.alpha),
            kmode: self.kmode.or(other.kmode),
            dt: self.dt.or(other.dt),
            steps: self.steps.or(other.steps),
            tol: self.tol.or(other.tol),
            precond: self.precond.or(other.precond),
            ssor_omega: self.ssor_omega.or(other.ssor_omega),
            ssor_inner: self.ssor_inner.or(other.ssor_inner),
            ssor_outer: self.ssor_outer.or(other.ssor_outer),
            bext: self.bext.or(other.bext),
            seed: self.seed.or(other.seed),
            deterministic: self.deterministic.or(other.deterministic),
            config: self.config.or(other.config),
            out: self.out.or(other.out),
            fit_damping: self.fit_damping.or(other.fit_damping),
        }
    }
}

/// Everything the binary needs from its arguments.
#[derive(Clone, Debug, PartialEq)]
pub struct CliOptions {
    pub config: SimConfig,
    pub fit_damping: bool,
}

fn parse_args<I, T>(argv: I) -> Result<CliArgs>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = CliArgs::command().try_get_matches_from(argv)?;
    Ok(CliArgs::from_arg_matches(&matches)?)
}

/// Turns config-file text into flag tokens.
fn config_tokens(text: &str, origin: &Path) -> Result<Vec<String>> {
    let mut tokens = vec!["picbench".to_string()];
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::InvalidParameter(format!("{}:{}: expected 'key = value'", origin.display(), n + 1))
        })?;
        let key = key.trim().replace('_', "-");
        if key == "config" {
            return Err(Error::InvalidParameter(format!(
                "{}:{}: config files cannot include other config files",
                origin.display(),
                n + 1
            )));
        }
        tokens.push(format!("--{key}"));
        tokens.extend(value.split_whitespace().map(str::to_string));
    }
    Ok(tokens)
}

fn build(args: CliArgs) -> Result<CliOptions> {
    let mut config = SimConfig::default();
    if let Some(s) = &args.solver {
        config.solver = s.parse::<SolverKind>()?;
    }
    if let Some(g) = &args.grid {
        config.grid = match g.as_slice() {
            [n] => [*n; 3],
            [x, y, z] => [*x, *y, *z],
            _ => return Err(Error::InvalidParameter("--grid takes one or three values".into())),
        };
    }
    if let Some(v) = args.ppc {
        config.particles_per_cell = v;
    }
    if let Some(v) = args.alpha {
        config.alpha = v;
    }
    if let Some(v) = args.kmode {
        config.kmode = v;
    }
    if let Some(v) = args.dt {
        config.dt = v;
    }
    if let Some(v) = args.steps {
        config.steps = v;
    }
    if let Some(v) = args.tol {
        config.tolerance = v;
    }
    let ssor_given = args.ssor_omega.is_some() || args.ssor_inner.is_some() || args.ssor_outer.is_some();
    config.preconditioner = match args.precond.as_deref() {
        None | Some("none") => PreconditionerKind::None,
        Some("jacobi") => PreconditionerKind::Jacobi,
        Some(_) => PreconditionerKind::Ssor {
            omega: args.ssor_omega.unwrap_or(DEFAULT_SSOR_OMEGA),
            inner: args.ssor_inner.unwrap_or(DEFAULT_SSOR_INNER),
            outer: args.ssor_outer.unwrap_or(DEFAULT_SSOR_OUTER),
        },
    };
    if ssor_given && !matches!(config.preconditioner, PreconditionerKind::Ssor { .. }) {
        return Err(Error::InvalidParameter(
            "--ssor-omega/--ssor-inner/--ssor-outer require --precond ssor".into(),
        ));
    }
    if let Some(b) = &args.bext {
        config.bext = [b[0], b[1], b[2]];
    }
    if let Some(v) = args.seed {
        config.seed = v;
    }
    config.deterministic = args.deterministic.unwrap_or(false);
    if let Some(p) = args.out {
        config.output = p;
    }
    config.validate()?;
    Ok(CliOptions {
        config,
        fit_damping: args.fit_damping.unwrap_or(false),
    })
}

/// Parses `argv` (program name first), merging a `--config` file if given.
pub fn parse_cli<I, T>(argv: I) -> Result<CliOptions>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let explicit = parse_args(argv)?;
    let merged = match &explicit.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            let from_file = parse_args(config_tokens(&text, path)?)?;
            explicit.or(from_file)
        }
        None => explicit,
    };
    build(merged)
}
