//! Simulation configuration, the PIC/PIF time loop, diagnostics and damping
//! fits.
//!
//! Initialization samples the Landau ensemble, solves for the field at the
//! initial positions and kicks velocities back by half a step. That first
//! solve doubles as the step-0 solve. Each step then runs
//! scatter, solve, gather, push and periodic update, and records one
//! [`DiagnosticsRow`] for the field at the start of the step.

use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::fem::FemPoissonSolver;
use crate::mesh::{field_energy_component, ScalarGrid, UniformMesh, VectorGrid};
use crate::nufft::{select_window_parameters, ModeSet, DEFAULT_OVERSAMPLING};
use crate::particles::{apply_periodic, gather_cic, half_kick_back, push, sample_landau, scatter_cic, ParticleEnsemble, RngSeed};
use crate::pcg::{CgConfig, PcgPoissonSolver, PreconditionerKind, DEFAULT_TOLERANCE};
use crate::pif::{pif_field_grid, FourierTransport, PifSolver};
use crate::spectral::FftPoissonSolver;

/// Exact CSV header of the diagnostics file.
pub const CSV_HEADER: [&str; 10] = [
    "step",
    "time",
    "ex_energy",
    "total_energy",
    "solver_iterations",
    "t_scatter",
    "t_solve",
    "t_gather",
    "t_push",
    "t_update",
];

/// Energy peaks below this are treated as noise by [`fit_damping_rate`].
pub const PEAK_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverKind {
    Fft,
    Pcg,
    Fem,
    Pif,
}

impl SolverKind {
    pub const ALL: [SolverKind; 4] = [SolverKind::Fft, SolverKind::Pcg, SolverKind::Fem, SolverKind::Pif];
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolverKind::Fft => "fft",
            SolverKind::Pcg => "pcg",
            SolverKind::Fem => "fem",
            SolverKind::Pif => "pif",
        })
    }
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fft" => Ok(SolverKind::Fft),
            "pcg" => Ok(SolverKind::Pcg),
            "fem" => Ok(SolverKind::Fem),
            "pif" => Ok(SolverKind::Pif),
            other => Err(Error::InvalidParameter(format!(
                "unknown solver '{other}' (expected fft, pcg, fem or pif)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub solver: SolverKind,
    pub grid: [usize; 3],
    pub particles_per_cell: usize,
    pub alpha: f64,
    pub kmode: f64,
    pub dt: f64,
    pub steps: usize,
    /// CG relative-residual tolerance, or NUFFT accuracy for `pif`.
    pub tolerance: f64,
    pub preconditioner: PreconditionerKind,
    pub bext: [f64; 3],
    pub seed: u64,
    /// Forces the serial kernels.
    pub deterministic: bool,
    pub output: PathBuf,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            solver: SolverKind::Fft,
            grid: [32; 3],
            particles_per_cell: 8,
            alpha: 0.05,
            kmode: 0.5,
            dt: 0.05,
            steps: 10,
            tolerance: DEFAULT_TOLERANCE,
            preconditioner: PreconditionerKind::None,
            bext: [0.0; 3],
            seed: 42,
            deterministic: false,
            output: PathBuf::from("diagnostics.csv"),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
            }
        };
        positive("kmode", self.kmode)?;
        positive("dt", self.dt)?;
        positive("tolerance", self.tolerance)?;
        if self.particles_per_cell == 0 {
            return Err(Error::InvalidParameter("particles per cell must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::InvalidParameter(format!("alpha must lie in [0, 1), got {}", self.alpha)));
        }
        if self.bext.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidParameter("external field must be finite".into()));
        }
        match (self.solver, self.preconditioner) {
            (SolverKind::Fft | SolverKind::Pif, PreconditionerKind::Jacobi | PreconditionerKind::Ssor { .. }) => {
                return Err(Error::InvalidParameter(format!(
                    "solver {} has no linear solve; a preconditioner cannot be set",
                    self.solver
                )));
            }
            (SolverKind::Fem, PreconditionerKind::Ssor { .. }) => {
                return Err(Error::InvalidParameter(
                    "fem supports only the jacobi preconditioner".into(),
                ));
            }
            _ => {}
        }
        self.mesh()?;
        self.cg_config().validate()
    }

    /// Box side `2 pi / kmode` in every dimension.
    pub fn extent(&self) -> [f64; 3] {
        [2.0 * std::f64::consts::PI / self.kmode; 3]
    }

    pub fn mesh(&self) -> Result<UniformMesh> {
        UniformMesh::new(self.grid, self.extent())
    }

    pub fn execution(&self) -> Execution {
        if self.deterministic {
            Execution::Serial
        } else {
            Execution::Parallel
        }
    }

    pub fn cg_config(&self) -> CgConfig {
        CgConfig {
            tolerance: self.tolerance,
            preconditioner: self.preconditioner,
            ..CgConfig::default()
        }
    }
}

/// Wall-clock seconds per loop phase.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PhaseTimes {
    pub scatter: f64,
    pub solve: f64,
    pub gather: f64,
    pub push: f64,
    pub update: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiagnosticsRow {
    pub step: usize,
    pub time: f64,
    pub ex_energy: f64,
    pub total_energy: f64,
    pub solver_iterations: usize,
    pub times: PhaseTimes,
}

enum FieldSolver {
    Fft(FftPoissonSolver),
    Pcg(PcgPoissonSolver),
    Fem(FemPoissonSolver),
    Pif(PifSolver),
}

/// Field at the particles plus the diagnostics of one solve.
struct FieldPhase {
    at_particles: Vec<[f64; 3]>,
    ex_energy: f64,
    total_energy: f64,
    iterations: usize,
    scatter: f64,
    solve: f64,
    gather: f64,
}

fn energies(field: &VectorGrid) -> (f64, f64) {
    let per: Vec<f64> = (0..3).map(|d| field_energy_component(field, d)).collect();
    (per[0], per.iter().sum())
}

/// A Landau damping run that can be advanced one step at a time.
pub struct Simulation {
    config: SimConfig,
    mesh: UniformMesh,
    ensemble: ParticleEnsemble,
    solver: FieldSolver,
    exec: Execution,
    phi: Option<ScalarGrid>,
    pending: Option<FieldPhase>,
    step: usize,
}

impl Simulation {
    pub fn new(config: SimConfig) -> Result<Self> {
        config.validate()?;
        let mesh = config.mesh()?;
        let exec = config.execution();
        let ensemble = sample_landau(&mesh, config.particles_per_cell, config.alpha, config.kmode, RngSeed(config.seed))?;
        let solver = match config.solver {
            SolverKind::Fft => FieldSolver::Fft(FftPoissonSolver::new(mesh)),
            SolverKind::Pcg => FieldSolver::Pcg(PcgPoissonSolver::new(mesh, config.cg_config(), exec)?),
            SolverKind::Fem => FieldSolver::Fem(FemPoissonSolver::new(mesh, config.cg_config(), exec)?),
            SolverKind::Pif => {
                let modes = ModeSet::new(mesh.cells(), mesh.extent())?;
                let window = select_window_parameters(config.tolerance, DEFAULT_OVERSAMPLING, mesh.cells())?;
                FieldSolver::Pif(PifSolver::new(modes, FourierTransport::Nufft(window), exec)?)
            }
        };
        let mut sim = Self {
            config,
            mesh,
            ensemble,
            solver,
            exec,
            phi: None,
            pending: None,
            step: 0,
        };
        let first = sim.field_phase().map_err(|e| Error::AtStep {
            step: 0,
            source: Box::new(e),
        })?;
        half_kick_back(&mut sim.ensemble, &first.at_particles, sim.config.dt);
        sim.pending = Some(first);
        Ok(sim)
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn mesh(&self) -> &UniformMesh {
        &self.mesh
    }

    pub fn ensemble(&self) -> &ParticleEnsemble {
        &self.ensemble
    }

    /// Index of the next step to run.
    pub fn step_index(&self) -> usize {
        self.step
    }

    fn field_phase(&mut self) -> Result<FieldPhase> {
        let exec = self.exec;
        if let FieldSolver::Pif(pif) = &self.solver {
            let t0 = Instant::now();
            let rho_hat = pif.deposit(&self.ensemble);
            let t1 = Instant::now();
            let e_hat = pif.solve_modes(&rho_hat);
            let t2 = Instant::now();
            let at_particles = pif.interpolate(&e_hat, &self.ensemble.positions);
            let t3 = Instant::now();
            let (ex_energy, total_energy) = energies(&pif_field_grid(&e_hat, &self.mesh)?);
            return Ok(FieldPhase {
                at_particles,
                ex_energy,
                total_energy,
                iterations: 0,
                scatter: (t1 - t0).as_secs_f64(),
                solve: (t2 - t1).as_secs_f64(),
                gather: (t3 - t2).as_secs_f64(),
            });
        }

        let t0 = Instant::now();
        let rho = scatter_cic(&self.ensemble, &self.mesh, exec);
        let t1 = Instant::now();
        let (field, iterations) = match &self.solver {
            FieldSolver::Fft(s) => (s.solve(&rho)?.1, 0),
            FieldSolver::Pcg(s) => {
                let sol = s.solve(&rho, self.phi.as_ref())?;
                self.phi = Some(sol.phi);
                (sol.field, sol.iterations)
            }
            FieldSolver::Fem(s) => {
                let sol = s.solve(&rho, self.phi.as_ref())?;
                self.phi = Some(sol.phi);
                (sol.field, sol.iterations)
            }
            FieldSolver::Pif(_) => unreachable!(),
        };
        let t2 = Instant::now();
        let at_particles = gather_cic(&field, &self.ensemble.positions, exec);
        let t3 = Instant::now();
        let (ex_energy, total_energy) = energies(&field);
        Ok(FieldPhase {
            at_particles,
            ex_energy,
            total_energy,
            iterations,
            scatter: (t1 - t0).as_secs_f64(),
            solve: (t2 - t1).as_secs_f64(),
            gather: (t3 - t2).as_secs_f64(),
        })
    }

    /// Runs one step and returns the diagnostics of the field it used.
    pub fn step(&mut self) -> Result<DiagnosticsRow> {
        let step = self.step;
        let at_step = |e: Error| Error::AtStep {
            step,
            source: Box::new(e),
        };
        let field = match self.pending.take() {
            Some(f) => f,
            None => self.field_phase().map_err(at_step)?,
        };
        let t0 = Instant::now();
        push(&mut self.ensemble, &field.at_particles, self.config.dt, self.config.bext, self.exec);
        let t1 = Instant::now();
        apply_periodic(&mut self.ensemble, &self.mesh).map_err(at_step)?;
        let t2 = Instant::now();
        self.step += 1;
        Ok(DiagnosticsRow {
            step,
            time: step as f64 * self.config.dt,
            ex_energy: field.ex_energy,
            total_energy: field.total_energy,
            solver_iterations: field.iterations,
            times: PhaseTimes {
                scatter: field.scatter,
                solve: field.solve,
                gather: field.gather,
                push: (t1 - t0).as_secs_f64(),
                update: (t2 - t1).as_secs_f64(),
            },
        })
    }
}

/// Runs `config.steps` steps. With zero steps nothing is initialized.
pub fn run_simulation(config: &SimConfig) -> Result<Vec<DiagnosticsRow>> {
    config.validate()?;
    if config.steps == 0 {
        return Ok(Vec::new());
    }
    let mut sim = Simulation::new(config.clone())?;
    (0..config.steps).map(|_| sim.step()).collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DampingFit {
    /// Slope of `log(energy)` at the peaks; `-2 gamma` for amplitude rate `gamma`.
    pub slope: f64,
    pub peaks: usize,
}

/// Least-squares line through `(t, ln E)` at the local maxima of the energy.
///
/// A sample is a peak when it is no smaller than either neighbour, so a flat
/// series yields slope zero. Peaks below [`PEAK_FLOOR`] are dropped.
pub fn fit_damping_rate(series: &[(f64, f64)]) -> Result<DampingFit> {
    let peaks: Vec<(f64, f64)> = series
        .windows(3)
        .filter(|w| w[1].1 >= w[0].1 && w[1].1 >= w[2].1 && w[1].1 >= PEAK_FLOOR)
        .map(|w| (w[1].0, w[1].1.ln()))
        .collect();
    if peaks.len() < 3 {
        return Err(Error::InsufficientPeaks(peaks.len()));
    }
    let n = peaks.len() as f64;
    let tm = peaks.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = peaks.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = peaks.iter().map(|p| (p.0 - tm) * (p.1 - ym)).sum();
    let sxx: f64 = peaks.iter().map(|p| (p.0 - tm).powi(2)).sum();
    Ok(DampingFit {
        slope: sxy / sxx,
        peaks: peaks.len(),
    })
}

fn float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes the diagnostics CSV to any sink.
pub fn write_csv_to<W: Write>(rows: &[DiagnosticsRow], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        let t = &r.times;
        w.write_record([
            r.step.to_string(),
            float(r.time),
            float(r.ex_energy),
            float(r.total_energy),
            r.solver_iterations.to_string(),
            float(t.scatter),
            float(t.solve),
            float(t.gather),
            float(t.push),
            float(t.update),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv(rows: &[DiagnosticsRow], path: &Path) -> Result<()> {
    write_csv_to(rows, std::fs::File::create(path)?)
}

pub fn read_csv_from<R: Read>(source: R) -> Result<Vec<DiagnosticsRow>> {
    let mut r = csv::Reader::from_reader(source);
    if r.headers()?.iter().ne(CSV_HEADER) {
        return Err(Error::InvalidParameter("unexpected diagnostics header".into()));
    }
    r.records()
        .map(|rec| {
            let rec = rec?;
            let field = |i: usize| -> Result<&str> {
                rec.get(i)
                    .ok_or_else(|| Error::InvalidParameter(format!("missing column {}", CSV_HEADER[i])))
            };
            let f = |i: usize| -> Result<f64> {
                field(i)?
                    .parse()
                    .map_err(|_| Error::InvalidParameter(format!("bad value in column {}", CSV_HEADER[i])))
            };
            let u = |i: usize| -> Result<usize> {
                field(i)?
                    .parse()
                    .map_err(|_| Error::InvalidParameter(format!("bad value in column {}", CSV_HEADER[i])))
            };
            Ok(DiagnosticsRow {
                step: u(0)?,
                time: f(1)?,
                ex_energy: f(2)?,
                total_energy: f(3)?,
                solver_iterations: u(4)?,
                times: PhaseTimes {
                    scatter: f(5)?,
                    solve: f(6)?,
                    gather: f(7)?,
                    push: f(8)?,
                    update: f(9)?,
                },
            })
        })
        .collect()
}

pub fn read_csv(path: &Path) -> Result<Vec<DiagnosticsRow>> {
    read_csv_from(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(solver: SolverKind) -> SimConfig {
        SimConfig {
            solver,
            grid: [8; 3],
            particles_per_cell: 2,
            steps: 4,
            ..SimConfig::default()
        }
    }

    #[test]
    fn zero_steps_do_nothing() {
        let cfg = SimConfig { steps: 0, ..small(SolverKind::Fft) };
        assert!(run_simulation(&cfg).unwrap().is_empty());
    }

    #[test]
    fn contradictory_settings_are_rejected() {
        for (solver, precond) in [
            (SolverKind::Pif, PreconditionerKind::default_ssor()),
            (SolverKind::Pif, PreconditionerKind::Jacobi),
            (SolverKind::Fft, PreconditionerKind::Jacobi),
            (SolverKind::Fem, PreconditionerKind::default_ssor()),
        ] {
            let cfg = SimConfig { preconditioner: precond, ..small(solver) };
            assert!(cfg.validate().is_err(), "{solver} {precond:?}");
        }
        assert!(SimConfig { alpha: 1.0, ..small(SolverKind::Fft) }.validate().is_err());
        assert!(SimConfig { dt: 0.0, ..small(SolverKind::Fft) }.validate().is_err());
        assert!(SimConfig { grid: [2, 8, 8], ..small(SolverKind::Fft) }.validate().is_err());
    }

    #[test]
    fn rows_are_consistent_for_every_solver() {
        for solver in SolverKind::ALL {
            let rows = run_simulation(&small(solver)).unwrap();
            assert_eq!(rows.len(), 4);
            for (i, r) in rows.iter().enumerate() {
                assert_eq!(r.step, i);
                assert!((r.time - i as f64 * 0.05).abs() < 1e-15);
                assert!(r.ex_energy >= 0.0 && r.total_energy >= r.ex_energy);
                let t = r.times;
                assert!([t.scatter, t.solve, t.gather, t.push, t.update].iter().all(|v| *v >= 0.0));
                match solver {
                    SolverKind::Fft | SolverKind::Pif => assert_eq!(r.solver_iterations, 0),
                    _ => assert!(r.solver_iterations >= 1),
                }
            }
        }
    }

    #[test]
    fn step_errors_carry_the_step_index() {
        let cfg = SimConfig {
            solver: SolverKind::Pcg,
            tolerance: 1e-300,
            ..small(SolverKind::Pcg)
        };
        match Simulation::new(cfg) {
            Err(Error::AtStep { step: 0, source }) => {
                assert!(matches!(*source, Error::NonConvergence { .. }), "{source:?}")
            }
            other => panic!("unexpected {:?}", other.err()),
        }
    }

    #[test]
    fn damping_fit_on_synthetic_series() {
        let (gamma, omega) = (0.1533, 1.4);
        let series: Vec<(f64, f64)> = (0..1250)
            .map(|i| {
                let t = i as f64 * 0.05;
                (t, (-2.0 * gamma * t).exp() * (omega * t).sin().powi(2))
            })
            .collect();
        let fit = fit_damping_rate(&series).unwrap();
        assert!((fit.slope + 0.3066).abs() <= 0.01 * 0.3066, "{}", fit.slope);
        assert!(fit.peaks >= 6);

        let flat: Vec<(f64, f64)> = (0..20).map(|i| (i as f64, 2.0)).collect();
        assert_eq!(fit_damping_rate(&flat).unwrap().slope, 0.0);

        let monotone: Vec<(f64, f64)> = (0..20).map(|i| (i as f64, (-(i as f64)).exp())).collect();
        assert!(matches!(fit_damping_rate(&monotone), Err(Error::InsufficientPeaks(0))));
    }

    #[test]
    fn csv_round_trip() {
        let rows = run_simulation(&small(SolverKind::Fft)).unwrap();
        let mut buf = Vec::new();
        write_csv_to(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(&CSV_HEADER.join(",")));
        assert_eq!(read_csv_from(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn solver_names_parse() {
        for s in SolverKind::ALL {
            assert_eq!(s.to_string().parse::<SolverKind>().unwrap(), s);
        }
        assert!("spectral".parse::<SolverKind>().is_err());
    }
}
