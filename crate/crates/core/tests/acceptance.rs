//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! The four full Landau runs (32^3 cells, 8 particles per cell, 1250 steps)
//! are computed once and shared by the criteria that need them. Exits with a
//! non-zero status when any criterion fails.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use common::dispersion::energy_decay_slope;
use common::oracles::nufft::random_case;
use common::oracles::{dense_fd_matrix, dense_fem_matrix, dense_solve, manufactured, max_abs_diff};
use pic_core::cli::parse_cli;
use pic_core::driver::{
    fit_damping_rate, read_csv, run_simulation, write_csv, write_csv_to, DiagnosticsRow, SimConfig, Simulation,
    SolverKind, CSV_HEADER,
};
use pic_core::fem::{assemble_load, FemPoissonSolver};
use pic_core::mesh::{integrate, ScalarGrid, UniformMesh};
use pic_core::particles::{apply_periodic, gather_cic, push, sample_landau, scatter_cic, ParticleEnsemble, RngSeed};
use pic_core::pcg::{CgConfig, PcgPoissonSolver, PreconditionerKind};
use pic_core::spectral::FftPoissonSolver;
use pic_core::mesh::VectorGrid;
use pic_core::Execution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LANDAU_GRID: usize = 32;
const LANDAU_STEPS: usize = 1250;
const DAMPING_TOLERANCE: f64 = 0.15;
const PEAK_AGREEMENT: f64 = 0.05;
const NUFFT_EPSILON: f64 = 1e-4;
const ADJOINT_TOLERANCE: f64 = 1e-12;
const ORDER_TOLERANCE: f64 = 0.15;
const DENSE_MATCH: f64 = 1e-6;

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

/// A full Landau run plus the charge bookkeeping at both ends.
struct LandauRun {
    solver: SolverKind,
    rows: Vec<DiagnosticsRow>,
    count: [usize; 2],
    charge: [f64; 2],
    grid_charge: [f64; 2],
    seconds: f64,
}

fn landau_config(solver: SolverKind) -> SimConfig {
    SimConfig {
        solver,
        grid: [LANDAU_GRID; 3],
        steps: LANDAU_STEPS,
        ..SimConfig::default()
    }
}

/// Neumaier summation, so the particle charge sum is not limited by
/// accumulation error over 10^5+ equal terms.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        comp += if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
        sum = t;
    }
    sum + comp
}

fn charges(sim: &Simulation) -> (usize, f64, f64) {
    let ens = sim.ensemble();
    let sum = compensated_sum((0..ens.len()).map(|_| ens.macro_charge()));
    let grid = integrate(&scatter_cic(ens, sim.mesh(), Execution::Serial));
    (ens.len(), sum, grid)
}

fn landau_run(solver: SolverKind) -> LandauRun {
    let start = Instant::now();
    let config = landau_config(solver);
    let mut sim = Simulation::new(config.clone()).expect("landau setup");
    let (n0, q0, g0) = charges(&sim);
    let rows: Vec<DiagnosticsRow> = (0..config.steps).map(|_| sim.step().expect("landau step")).collect();
    let (n1, q1, g1) = charges(&sim);
    let seconds = start.elapsed().as_secs_f64();
    eprintln!("  {solver} run: {seconds:.0} s");
    LandauRun {
        solver,
        rows,
        count: [n0, n1],
        charge: [q0, q1],
        grid_charge: [g0, g1],
        seconds,
    }
}

fn energy_series(rows: &[DiagnosticsRow]) -> Vec<(f64, f64)> {
    rows.iter().map(|r| (r.time, r.ex_energy)).collect()
}

/// Indices of local maxima, using the same rule as the damping fit.
fn peak_indices(e: &[f64]) -> Vec<usize> {
    (1..e.len().saturating_sub(1))
        .filter(|&i| e[i] >= e[i - 1] && e[i] >= e[i + 1])
        .collect()
}

/// Median of the second half of the trace, i.e. the thermal noise level.
fn noise_floor(rows: &[DiagnosticsRow]) -> f64 {
    let mut tail: Vec<f64> = rows[rows.len() / 2..].iter().map(|r| r.ex_energy).collect();
    tail.sort_by(f64::total_cmp);
    tail[tail.len() / 2]
}

fn damping_rate(runs: &[LandauRun]) -> Verdict {
    let reference = energy_decay_slope(0.5);
    let mut pass = true;
    let mut parts = vec![format!("reference {reference:.4}")];
    for run in runs {
        let floor = noise_floor(&run.rows);
        match fit_damping_rate(&energy_series(&run.rows)) {
            Ok(fit) => {
                let ok = (fit.slope - reference).abs() <= DAMPING_TOLERANCE * reference.abs();
                pass &= ok;
                parts.push(format!(
                    "{} {:.4} over {} peaks (E0 {:.3}, noise floor {:.3})",
                    run.solver, fit.slope, fit.peaks, run.rows[0].ex_energy, floor
                ));
            }
            Err(e) => {
                pass = false;
                parts.push(format!("{} fit failed: {e}", run.solver));
            }
        }
    }
    Verdict::new(pass, parts.join("; "))
}

fn cross_solver(runs: &[LandauRun]) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for (i, a) in runs.iter().enumerate() {
        for b in &runs[i + 1..] {
            let ea: Vec<f64> = a.rows.iter().map(|r| r.ex_energy).collect();
            let eb: Vec<f64> = b.rows.iter().map(|r| r.ex_energy).collect();
            let mut worst: f64 = 0.0;
            let mut sampled = 0;
            for (x, y) in [(&ea, &eb), (&eb, &ea)] {
                for p in peak_indices(x) {
                    worst = worst.max((x[p] - y[p]).abs() / x[p]);
                    sampled += 1;
                }
            }
            pass &= worst <= PEAK_AGREEMENT;
            parts.push(format!("{}/{} worst {:.1}% over {} peaks", a.solver, b.solver, 100.0 * worst, sampled));
        }
    }
    let e0 = |k: SolverKind| runs.iter().find(|r| r.solver == k).map(|r| r.rows[0].ex_energy);
    if let (Some(fft), Some(pif)) = (e0(SolverKind::Fft), e0(SolverKind::Pif)) {
        let rel = (pif - fft).abs() / fft;
        pass &= rel <= PEAK_AGREEMENT;
        parts.push(format!("pif vs fft at t=0 {:.2}%", 100.0 * rel));
    }
    Verdict::new(pass, parts.join("; "))
}

fn nufft_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let (mut worst, mut worst_adjoint): (f64, f64) = (0.0, 0.0);
    for case in 0..50 {
        let n = [8, 16][case % 2];
        let np = [10, 1000][(case / 2) % 2];
        let extent = std::array::from_fn(|_| rng.gen_range(0.5..15.0));
        let e = random_case(n, np, NUFFT_EPSILON, extent, &mut rng);
        worst = worst.max(e.type1).max(e.type2);
        worst_adjoint = worst_adjoint.max(e.adjoint);
    }
    Verdict::new(
        worst <= NUFFT_EPSILON && worst_adjoint <= ADJOINT_TOLERANCE,
        format!("50 cases, worst normalized error {worst:.2e}, worst adjoint gap {worst_adjoint:.2e}"),
    )
}

fn manufactured_error(kind: SolverKind, n: usize) -> f64 {
    let mesh = UniformMesh::cubic(n, 1.0).unwrap();
    let (phi, rho) = manufactured(mesh);
    let config = CgConfig {
        tolerance: 1e-12,
        ..CgConfig::default()
    };
    let exec = Execution::default();
    let got = match kind {
        SolverKind::Pcg => PcgPoissonSolver::new(mesh, config, exec).unwrap().solve(&rho, None).unwrap().phi,
        SolverKind::Fem => FemPoissonSolver::new(mesh, config, exec).unwrap().solve(&rho, None).unwrap().phi,
        _ => FftPoissonSolver::new(mesh).solve(&rho).unwrap().0,
    };
    max_abs_diff(&got.owned_values(), &phi.owned_values())
}

fn convergence_orders() -> Verdict {
    let order = |k| (manufactured_error(k, 16) / manufactured_error(k, 32)).log2();
    let (pcg, fem) = (order(SolverKind::Pcg), order(SolverKind::Fem));
    let fft = manufactured_error(SolverKind::Fft, 16);
    Verdict::new(
        (pcg - 2.0).abs() <= ORDER_TOLERANCE && (fem - 2.0).abs() <= ORDER_TOLERANCE && fft <= 1e-12,
        format!("pcg order {pcg:.3}, fem order {fem:.3}, fft single-mode error {fft:.1e}"),
    )
}

fn dense_oracles() -> Verdict {
    let mesh = UniformMesh::cubic(8, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let values: Vec<f64> = (0..mesh.node_count()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let rho = ScalarGrid::from_owned(mesh, &values);
    let config = CgConfig {
        tolerance: 1e-8,
        ..CgConfig::default()
    };
    let exec = Execution::default();
    let pcg = PcgPoissonSolver::new(mesh, config, exec).unwrap().solve(&rho, None).unwrap().phi;
    let fem = FemPoissonSolver::new(mesh, config, exec).unwrap().solve(&rho, None).unwrap().phi;
    let pcg_ref = dense_solve(&dense_fd_matrix(&mesh), &rho.owned_values());
    let fem_ref = dense_solve(&dense_fem_matrix(&mesh), &assemble_load(&rho));
    let dp = max_abs_diff(&pcg.owned_values(), &pcg_ref);
    let df = max_abs_diff(&fem.owned_values(), &fem_ref);
    Verdict::new(
        dp <= DENSE_MATCH && df <= DENSE_MATCH,
        format!("8^3 at tol 1e-8: pcg {dp:.1e}, fem {df:.1e}"),
    )
}

fn first_solve_iterations(solver: SolverKind, preconditioner: PreconditionerKind) -> usize {
    let config = SimConfig {
        preconditioner,
        steps: 1,
        ..landau_config(solver)
    };
    run_simulation(&config).expect("step-1 solve")[0].solver_iterations
}

fn preconditioning() -> Verdict {
    let pcg_plain = first_solve_iterations(SolverKind::Pcg, PreconditionerKind::None);
    let pcg_ssor = first_solve_iterations(SolverKind::Pcg, PreconditionerKind::default_ssor());
    let fem_plain = first_solve_iterations(SolverKind::Fem, PreconditionerKind::None);
    let fem_jacobi = first_solve_iterations(SolverKind::Fem, PreconditionerKind::Jacobi);
    Verdict::new(
        pcg_ssor <= pcg_plain && fem_jacobi <= fem_plain,
        format!("pcg {pcg_plain} -> ssor {pcg_ssor}; fem {fem_plain} -> jacobi {fem_jacobi}"),
    )
}

/// CSV text with the wall-clock columns dropped.
fn csv_without_timers(rows: &[DiagnosticsRow]) -> Vec<String> {
    let mut buf = Vec::new();
    write_csv_to(rows, &mut buf).unwrap();
    String::from_utf8(buf)
        .unwrap()
        .lines()
        .map(|l| l.split(',').take(5).collect::<Vec<_>>().join(","))
        .collect()
}

fn conservation_and_determinism(runs: &[LandauRun]) -> Verdict {
    let mut parts = Vec::new();

    let charge_ok = runs.iter().all(|r| {
        r.count[0] == r.count[1]
            && r.charge[0] == r.charge[1]
            && r.grid_charge.iter().all(|g| (g - r.charge[0]).abs() <= 1e-12 * r.charge[0].abs())
    });
    parts.push(format!("charge exact over {} full runs: {charge_ok}", runs.len()));

    let mesh = UniformMesh::new([12, 10, 8], [3.0, 2.0, 2.5]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let n = 5000;
    let pos: [Vec<f64>; 3] = std::array::from_fn(|d| (0..n).map(|_| rng.gen_range(0.0..mesh.extent()[d])).collect());
    let ens = ParticleEnsemble::new(pos, [vec![0.0; n], vec![0.0; n], vec![0.0; n]], 0.37, 1.0);
    let g: [ScalarGrid; 3] = std::array::from_fn(|_| {
        let v: Vec<f64> = (0..mesh.node_count()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        ScalarGrid::from_owned(mesh, &v)
    });
    let lhs: f64 = scatter_cic(&ens, &mesh, Execution::default())
        .owned_values()
        .iter()
        .zip(g[0].owned_values())
        .map(|(r, v)| r * v * mesh.cell_volume())
        .sum();
    let rhs: f64 = gather_cic(&VectorGrid::from_components(g), &ens.positions, Execution::default())
        .iter()
        .map(|e| ens.macro_charge() * e[0])
        .sum();
    let adjoint_gap = (lhs - rhs).abs() / lhs.abs();
    let adjoint_ok = adjoint_gap <= ADJOINT_TOLERANCE;
    parts.push(format!("scatter/gather adjoint gap {adjoint_gap:.1e}"));

    let det = SimConfig {
        deterministic: true,
        steps: 100,
        ..landau_config(SolverKind::Fft)
    };
    let first = run_simulation(&det).unwrap();
    let second = run_simulation(&det).unwrap();
    let parallel = run_simulation(&SimConfig {
        deterministic: false,
        ..det.clone()
    })
    .unwrap();
    let bitwise = csv_without_timers(&first) == csv_without_timers(&second)
        && csv_without_timers(&first) == csv_without_timers(&parallel);
    parts.push(format!("deterministic fft CSV bitwise identical: {bitwise}"));

    let boris_mesh = UniformMesh::cubic(8, 10.0).unwrap();
    let mut ens = sample_landau(&boris_mesh, 2, 0.0, 2.0 * std::f64::consts::PI / 10.0, RngSeed(3)).unwrap();
    let speed = |e: &ParticleEnsemble| -> Vec<f64> {
        (0..e.len()).map(|j| e.velocity(j).iter().map(|v| v * v).sum::<f64>().sqrt()).collect()
    };
    let v0 = speed(&ens);
    let zero = vec![[0.0; 3]; ens.len()];
    for _ in 0..1000 {
        push(&mut ens, &zero, 0.1, [0.3, -0.2, 1.0], Execution::default());
        apply_periodic(&mut ens, &boris_mesh).unwrap();
    }
    let drift = speed(&ens).iter().zip(&v0).map(|(a, b)| (a - b).abs() / b).fold(0.0, f64::max);
    let boris_ok = drift <= 1e-13;
    parts.push(format!("Boris speed drift {drift:.1e}"));

    Verdict::new(charge_ok && adjoint_ok && bitwise && boris_ok, parts.join("; "))
}

fn plumbing(runs: &[LandauRun]) -> Verdict {
    let mut parts = Vec::new();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("diagnostics.csv");
    let rows = &runs[0].rows;
    write_csv(rows, &path).unwrap();
    let round_trip = read_csv(&path).map(|back| &back == rows).unwrap_or(false);
    let header_ok = std::fs::read_to_string(&path)
        .unwrap()
        .lines()
        .next()
        .is_some_and(|h| h == CSV_HEADER.join(","));
    parts.push(format!("csv round trip: {round_trip}, header: {header_ok}"));

    let rejected = [
        "--solver pif --precond ssor",
        "--solver pif --precond jacobi",
        "--solver fft --precond ssor",
        "--solver fem --precond ssor",
    ]
    .iter()
    .all(|args| parse_cli(std::iter::once("picbench").chain(args.split_whitespace())).is_err());
    parts.push(format!("contradictory flags rejected: {rejected}"));

    let timers_ok = runs.iter().all(|r| {
        r.rows.iter().all(|row| {
            let t = row.times;
            [t.scatter, t.solve, t.gather, t.push, t.update].iter().all(|v| v.is_finite() && *v >= 0.0)
        })
    });
    parts.push(format!("timers non-negative in all runs: {timers_ok}"));
    Verdict::new(round_trip && header_ok && rejected && timers_ok, parts.join("; "))
}

fn main() -> ExitCode {
    let start = Instant::now();
    eprintln!("running {LANDAU_STEPS}-step Landau cases at {LANDAU_GRID}^3");
    let runs: Vec<LandauRun> = SolverKind::ALL.iter().map(|&s| landau_run(s)).collect();
    let landau_seconds: f64 = runs.iter().map(|r| r.seconds).sum();

    let criteria: [(&str, Verdict); 8] = [
        ("landau damping rate", damping_rate(&runs)),
        ("cross-solver equivalence", cross_solver(&runs)),
        ("nufft oracle equivalence", nufft_oracle()),
        ("convergence orders", convergence_orders()),
        ("small-instance dense oracles", dense_oracles()),
        ("preconditioning direction", preconditioning()),
        ("conservation and determinism", conservation_and_determinism(&runs)),
        ("plumbing", plumbing(&runs)),
    ];

    println!();
    let mut failed = 0;
    for (i, (name, v)) in criteria.iter().enumerate() {
        println!("{} {}. {}: {}", if v.pass { "PASS" } else { "FAIL" }, i + 1, name, v.detail);
        failed += usize::from(!v.pass);
    }
    println!(
        "\n{} of {} criteria passed ({:.0} s total, {:.0} s in Landau runs)",
        criteria.len() - failed,
        criteria.len(),
        start.elapsed().as_secs_f64(),
        landau_seconds
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
