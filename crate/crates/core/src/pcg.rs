//! Matrix-free second-order finite-difference Poisson solve by preconditioned
//! conjugate gradients.
//!
//! The operator is `A = -Laplacian_h` with periodic wrap: symmetric positive
//! semi-definite with constants in its nullspace. CG works on the mean-zero
//! subspace; the iterate and every preconditioned residual are projected onto
//! it.

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::mesh::{gradient_central, ScalarGrid, UniformMesh, VectorGrid};

/// SSOR relaxation factor used by default.
pub const DEFAULT_SSOR_OMEGA: f64 = std::f64::consts::FRAC_PI_2;
pub const DEFAULT_SSOR_INNER: usize = 4;
pub const DEFAULT_SSOR_OUTER: usize = 2;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

/// Matrix-free linear operator on flat vectors.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

/// Row-wise access used by relaxation sweeps.
pub trait RowAccess {
    fn dim(&self) -> usize;
    fn diagonal(&self, i: usize) -> f64;
    /// `sum_{j != i} A_ij z_j`.
    fn off_diagonal_dot(&self, i: usize, z: &[f64]) -> f64;
}

pub trait Preconditioner {
    /// `z ~ M^-1 r`; must be a fixed symmetric positive definite linear map.
    fn apply(&self, r: &[f64], z: &mut [f64]);
}

/// `M = I`.
pub struct IdentityPreconditioner;

impl Preconditioner for IdentityPreconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
    }
}

/// `z = r / diag(A)`.
#[derive(Clone, Debug)]
pub struct JacobiPreconditioner {
    inverse_diagonal: Vec<f64>,
}

impl JacobiPreconditioner {
    pub fn from_diagonal(diagonal: &[f64]) -> Self {
        Self {
            inverse_diagonal: diagonal.iter().map(|d| 1.0 / d).collect(),
        }
    }
}

impl Preconditioner for JacobiPreconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        for ((z, r), w) in z.iter_mut().zip(r).zip(&self.inverse_diagonal) {
            *z = r * w;
        }
    }
}

/// Symmetric successive over-relaxation applied as a fixed linear operator:
/// `outer` rounds of `inner` forward then `inner` backward lexicographic
/// sweeps on `A z = r`, starting from `z = 0`.
pub struct SsorPreconditioner<'a, A: RowAccess> {
    operator: &'a A,
    omega: f64,
    inner: usize,
    outer: usize,
}

impl<'a, A: RowAccess> SsorPreconditioner<'a, A> {
    pub fn new(operator: &'a A, omega: f64, inner: usize, outer: usize) -> Result<Self> {
        if !(omega > 0.0 && omega < 2.0) {
            return Err(Error::InvalidParameter(format!(
                "SSOR omega must lie in (0, 2), got {omega}"
            )));
        }
        Ok(Self {
            operator,
            omega,
            inner,
            outer,
        })
    }

    fn relax(&self, r: &[f64], z: &mut [f64], i: usize) {
        let a = self.operator;
        let gs = (r[i] - a.off_diagonal_dot(i, z)) / a.diagonal(i);
        z[i] = (1.0 - self.omega) * z[i] + self.omega * gs;
    }
}

impl<A: RowAccess> Preconditioner for SsorPreconditioner<'_, A> {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let n = self.operator.dim();
        z.iter_mut().for_each(|v| *v = 0.0);
        for _ in 0..self.outer {
            for _ in 0..self.inner {
                for i in 0..n {
                    self.relax(r, z, i);
                }
            }
            for _ in 0..self.inner {
                for i in (0..n).rev() {
                    self.relax(r, z, i);
                }
            }
        }
    }
}

/// Seven-point `-Laplacian_h` on the periodic mesh.
#[derive(Clone, Debug)]
pub struct StencilOperator {
    mesh: UniformMesh,
    inv_h2: [f64; 3],
    /// Periodic neighbour indices per axis: (previous, next) for each coordinate.
    neighbours: [Vec<(usize, usize)>; 3],
    exec: Execution,
}

impl StencilOperator {
    pub fn new(mesh: UniformMesh, exec: Execution) -> Self {
        let cells = mesh.cells();
        Self {
            mesh,
            inv_h2: mesh.spacing().map(|h| 1.0 / (h * h)),
            neighbours: cells.map(|n| (0..n).map(|i| ((i + n - 1) % n, (i + 1) % n)).collect()),
            exec,
        }
    }

    pub fn mesh(&self) -> &UniformMesh {
        &self.mesh
    }

    /// The constant diagonal `sum_d 2 / h_d^2`.
    pub fn diagonal_value(&self) -> f64 {
        2.0 * self.inv_h2.iter().sum::<f64>()
    }

    #[inline]
    fn neighbour_sum(&self, i: usize, j: usize, k: usize, z: &[f64]) -> f64 {
        let m = &self.mesh;
        let (im, ip) = self.neighbours[0][i];
        let (jm, jp) = self.neighbours[1][j];
        let (km, kp) = self.neighbours[2][k];
        self.inv_h2[0] * (z[m.owned_index(im, j, k)] + z[m.owned_index(ip, j, k)])
            + self.inv_h2[1] * (z[m.owned_index(i, jm, k)] + z[m.owned_index(i, jp, k)])
            + self.inv_h2[2] * (z[m.owned_index(i, j, km)] + z[m.owned_index(i, j, kp)])
    }
}

impl LinearOperator for StencilOperator {
    fn dim(&self) -> usize {
        self.mesh.node_count()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let [nx, ny, _] = self.mesh.cells();
        let diag = self.diagonal_value();
        exec::for_each_chunk_mut(self.exec, y, nx * ny, |offset, plane| {
            let k = offset / (nx * ny);
            for j in 0..ny {
                for i in 0..nx {
                    let c = self.mesh.owned_index(i, j, k);
                    plane[i + nx * j] = diag * x[c] - self.neighbour_sum(i, j, k, x);
                }
            }
        });
    }
}

impl RowAccess for StencilOperator {
    fn dim(&self) -> usize {
        self.mesh.node_count()
    }

    fn diagonal(&self, _i: usize) -> f64 {
        self.diagonal_value()
    }

    #[inline]
    fn off_diagonal_dot(&self, idx: usize, z: &[f64]) -> f64 {
        let [i, j, k] = self.mesh.owned_coords(idx);
        -self.neighbour_sum(i, j, k, z)
    }
}

/// `y = -Laplacian_h x` using the ghost layer of `x` (ghosts must be synced).
pub fn apply_laplacian_fd(x: &ScalarGrid) -> ScalarGrid {
    let mesh = *x.mesh();
    let [nx, ny, nz] = mesh.cells().map(|n| n as isize);
    let inv_h2 = mesh.spacing().map(|h| 1.0 / (h * h));
    let mut out = Vec::with_capacity(mesh.node_count());
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let c = x.get(i, j, k);
                out.push(
                    inv_h2[0] * (2.0 * c - x.get(i + 1, j, k) - x.get(i - 1, j, k))
                        + inv_h2[1] * (2.0 * c - x.get(i, j + 1, k) - x.get(i, j - 1, k))
                        + inv_h2[2] * (2.0 * c - x.get(i, j, k + 1) - x.get(i, j, k - 1)),
                );
            }
        }
    }
    ScalarGrid::from_owned(mesh, &out)
}

/// `z = r / diag(A)` for the finite-difference operator.
pub fn apply_jacobi(r: &ScalarGrid) -> ScalarGrid {
    let diag = StencilOperator::new(*r.mesh(), Execution::Serial).diagonal_value();
    let z: Vec<f64> = r.owned_values().iter().map(|v| v / diag).collect();
    ScalarGrid::from_owned(*r.mesh(), &z)
}

/// SSOR approximation of `A^-1 r` for the finite-difference operator.
pub fn apply_ssor(r: &ScalarGrid, omega: f64, inner: usize, outer: usize) -> Result<ScalarGrid> {
    let op = StencilOperator::new(*r.mesh(), Execution::Serial);
    let ssor = SsorPreconditioner::new(&op, omega, inner, outer)?;
    let rv = r.owned_values();
    let mut z = vec![0.0; rv.len()];
    ssor.apply(&rv, &mut z);
    Ok(ScalarGrid::from_owned(*r.mesh(), &z))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PreconditionerKind {
    None,
    Jacobi,
    Ssor { omega: f64, inner: usize, outer: usize },
}

impl PreconditionerKind {
    pub fn default_ssor() -> Self {
        PreconditionerKind::Ssor {
            omega: DEFAULT_SSOR_OMEGA,
            inner: DEFAULT_SSOR_INNER,
            outer: DEFAULT_SSOR_OUTER,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgConfig {
    /// Target for `||b - A x|| / ||b||`.
    pub tolerance: f64,
    /// Defaults to ten times the largest cell count.
    pub max_iterations: Option<usize>,
    pub preconditioner: PreconditionerKind,
    pub warm_start: bool,
}

impl Default for CgConfig {
    fn default() -> Self {
        Self {
            tolerance: DEFAULT_TOLERANCE,
            max_iterations: None,
            preconditioner: PreconditionerKind::None,
            warm_start: true,
        }
    }
}

impl CgConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "CG tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if let PreconditionerKind::Ssor { omega, .. } = self.preconditioner {
            if !(omega > 0.0 && omega < 2.0) {
                return Err(Error::InvalidParameter(format!(
                    "SSOR omega must lie in (0, 2), got {omega}"
                )));
            }
        }
        Ok(())
    }

    pub fn iteration_limit(&self, mesh: &UniformMesh) -> usize {
        self.max_iterations
            .unwrap_or_else(|| 10 * mesh.cells().into_iter().max().unwrap_or(1))
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CgReport {
    pub iterations: usize,
    pub relative_residual: f64,
    /// Relative residual after each iteration, starting with the initial guess.
    pub residual_history: Vec<f64>,
}

fn remove_mean(exec: Execution, v: &mut [f64]) {
    let mean = exec::sum(exec, v) / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
}

/// Rejects `r.z` that is negative beyond rounding.
fn check_curvature(exec: Execution, rz: f64, r: &[f64], z: &[f64]) -> Result<()> {
    let rr = exec::dot(exec, r, r);
    let scale = rr.max((rr * exec::dot(exec, z, z)).sqrt());
    if rz < -1e-12 * scale {
        Err(Error::IndefinitePreconditioner(rz))
    } else {
        Ok(())
    }
}

/// Preconditioned CG for `A x = b` on the mean-zero subspace.
///
/// `b` must have zero mean. Returns the mean-free solution and a report, or
/// [`Error::NonConvergence`] once `max_iterations` is exhausted.
pub fn cg_solve(
    op: &dyn LinearOperator,
    preconditioner: &dyn Preconditioner,
    b: &[f64],
    x0: &[f64],
    tolerance: f64,
    max_iterations: usize,
    exec: Execution,
) -> Result<(Vec<f64>, CgReport)> {
    let n = op.dim();
    assert_eq!(b.len(), n);
    assert_eq!(x0.len(), n);
    let norm = |v: &[f64]| exec::dot(exec, v, v).sqrt();

    let b_norm = norm(b);
    if b_norm == 0.0 {
        return Ok((
            vec![0.0; n],
            CgReport {
                iterations: 0,
                relative_residual: 0.0,
                residual_history: vec![0.0],
            },
        ));
    }

    let mut x = x0.to_vec();
    remove_mean(exec, &mut x);
    let mut r = vec![0.0; n];
    op.apply(&x, &mut r);
    r.iter_mut().zip(b).for_each(|(r, b)| *r = b - *r);

    let mut rel = norm(&r) / b_norm;
    let mut history = vec![rel];
    if rel <= tolerance {
        return Ok((
            x,
            CgReport {
                iterations: 0,
                relative_residual: rel,
                residual_history: history,
            },
        ));
    }

    let mut z = vec![0.0; n];
    preconditioner.apply(&r, &mut z);
    remove_mean(exec, &mut z);
    let mut rz = exec::dot(exec, &r, &z);
    check_curvature(exec, rz, &r, &z)?;
    if rz <= 0.0 {
        return Err(Error::NonConvergence {
            iterations: 0,
            residual: rel,
        });
    }
    let mut p = z.clone();
    let mut q = vec![0.0; n];

    for iteration in 1..=max_iterations {
        op.apply(&p, &mut q);
        let pq = exec::dot(exec, &p, &q);
        if pq <= 0.0 {
            // Krylov space exhausted: residual is already orthogonal to everything reachable
            break;
        }
        let alpha = rz / pq;
        x.iter_mut().zip(&p).for_each(|(x, p)| *x += alpha * p);
        r.iter_mut().zip(&q).for_each(|(r, q)| *r -= alpha * q);

        rel = norm(&r) / b_norm;
        history.push(rel);
        if rel <= tolerance {
            remove_mean(exec, &mut x);
            return Ok((
                x,
                CgReport {
                    iterations: iteration,
                    relative_residual: rel,
                    residual_history: history,
                },
            ));
        }

        preconditioner.apply(&r, &mut z);
        remove_mean(exec, &mut z);
        let rz_next = exec::dot(exec, &r, &z);
        check_curvature(exec, rz_next, &r, &z)?;
        if rz_next <= 0.0 {
            // residual at rounding level; cannot make further progress
            break;
        }
        let beta = rz_next / rz;
        rz = rz_next;
        p.iter_mut().zip(&z).for_each(|(p, z)| *p = z + beta * *p);
    }
    Err(Error::NonConvergence {
        iterations: history.len() - 1,
        residual: rel,
    })
}

/// Potential, field and CG iteration count of a grid Poisson solve.
#[derive(Clone, Debug)]
pub struct GridSolution {
    pub phi: ScalarGrid,
    pub field: VectorGrid,
    pub iterations: usize,
}

/// Finite-difference PCG Poisson solver with cached operator.
#[derive(Debug)]
pub struct PcgPoissonSolver {
    operator: StencilOperator,
    config: CgConfig,
    exec: Execution,
}

impl PcgPoissonSolver {
    pub fn new(mesh: UniformMesh, config: CgConfig, exec: Execution) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            operator: StencilOperator::new(mesh, exec),
            config,
            exec,
        })
    }

    pub fn config(&self) -> &CgConfig {
        &self.config
    }

    /// Solves `A phi = rho - mean(rho)`; warm-starts from `previous_phi` when
    /// the config allows it.
    pub fn solve(&self, rho: &ScalarGrid, previous_phi: Option<&ScalarGrid>) -> Result<GridSolution> {
        let mesh = *self.operator.mesh();
        let mut b = rho.owned_values();
        remove_mean(self.exec, &mut b);
        let x0 = match previous_phi {
            Some(phi) if self.config.warm_start => phi.owned_values(),
            _ => vec![0.0; b.len()],
        };
        let limit = self.config.iteration_limit(&mesh);
        let tol = self.config.tolerance;
        let op = &self.operator;
        let (x, report) = match self.config.preconditioner {
            PreconditionerKind::None => {
                cg_solve(op, &IdentityPreconditioner, &b, &x0, tol, limit, self.exec)?
            }
            PreconditionerKind::Jacobi => {
                let diag = vec![op.diagonal_value(); b.len()];
                let jacobi = JacobiPreconditioner::from_diagonal(&diag);
                cg_solve(op, &jacobi, &b, &x0, tol, limit, self.exec)?
            }
            PreconditionerKind::Ssor { omega, inner, outer } => {
                let ssor = SsorPreconditioner::new(op, omega, inner, outer)?;
                cg_solve(op, &ssor, &b, &x0, tol, limit, self.exec)?
            }
        };
        let phi = ScalarGrid::from_owned(mesh, &x);
        let field = gradient_central(&phi, self.exec);
        Ok(GridSolution {
            phi,
            field,
            iterations: report.iterations,
        })
    }
}

pub fn solve_poisson_pcg(
    rho: &ScalarGrid,
    config: &CgConfig,
    previous_phi: Option<&ScalarGrid>,
) -> Result<GridSolution> {
    PcgPoissonSolver::new(*rho.mesh(), *config, Execution::default())?.solve(rho, previous_phi)
}
