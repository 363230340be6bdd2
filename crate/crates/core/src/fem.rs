//! Matrix-free finite element Poisson solve with trilinear (first-order
//! Lagrange) hexahedral elements on the periodic uniform mesh.
//!
//! Local vertex `a` of an element sits at offset `(a & 1, (a >> 1) & 1,
//! (a >> 2) & 1)` from the element's lower corner. Degrees of freedom are the
//! owned mesh nodes; periodicity lives entirely in the DOF map.

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::mesh::{gradient_central, ScalarGrid, UniformMesh};
use crate::pcg::{
    cg_solve, CgConfig, GridSolution, IdentityPreconditioner, JacobiPreconditioner, LinearOperator,
    PreconditionerKind,
};

#[inline]
pub fn vertex_offset(a: usize) -> [usize; 3] {
    [a & 1, (a >> 1) & 1, (a >> 2) & 1]
}

/// Trilinear reference element on `[0, 1]^3` with the 2x2x2 Gauss rule.
pub struct ReferenceHexElement;

impl ReferenceHexElement {
    pub const VERTICES: usize = 8;

    /// 2-point Gauss-Legendre nodes and weights on `[0, 1]`.
    pub fn gauss_rule() -> ([f64; 2], [f64; 2]) {
        let d = 0.5 / 3f64.sqrt();
        ([0.5 - d, 0.5 + d], [0.5, 0.5])
    }

    pub fn basis(a: usize, xi: [f64; 3]) -> f64 {
        let o = vertex_offset(a);
        (0..3)
            .map(|d| if o[d] == 1 { xi[d] } else { 1.0 - xi[d] })
            .product()
    }

    /// Gradient with respect to reference coordinates.
    pub fn basis_gradient(a: usize, xi: [f64; 3]) -> [f64; 3] {
        let o = vertex_offset(a);
        let f = |d: usize| if o[d] == 1 { xi[d] } else { 1.0 - xi[d] };
        let df = |d: usize| if o[d] == 1 { 1.0 } else { -1.0 };
        [
            df(0) * f(1) * f(2),
            f(0) * df(1) * f(2),
            f(0) * f(1) * df(2),
        ]
    }
}

/// 8x8 element stiffness `A^e_ab = integral(grad b_a . grad b_b)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElementStiffness(pub [[f64; 8]; 8]);

impl ElementStiffness {
    pub fn entry(&self, a: usize, b: usize) -> f64 {
        self.0[a][b]
    }
}

/// Element stiffness for spacing `h`, integrated with the 2x2x2 Gauss rule
/// (exact for this integrand on an axis-aligned box).
pub fn compute_element_stiffness(h: [f64; 3]) -> ElementStiffness {
    let (points, weights) = ReferenceHexElement::gauss_rule();
    let jac_det = h[0] * h[1] * h[2];
    let mut ke = [[0.0; 8]; 8];
    for (qx, wx) in points.iter().zip(weights) {
        for (qy, wy) in points.iter().zip(weights) {
            for (qz, wz) in points.iter().zip(weights) {
                let xi = [*qx, *qy, *qz];
                let w = wx * wy * wz * jac_det;
                let grads: [[f64; 3]; 8] = std::array::from_fn(|a| {
                    let g = ReferenceHexElement::basis_gradient(a, xi);
                    [g[0] / h[0], g[1] / h[1], g[2] / h[2]]
                });
                for a in 0..8 {
                    for b in a..8 {
                        let dot: f64 = (0..3).map(|d| grads[a][d] * grads[b][d]).sum();
                        ke[a][b] += w * dot;
                    }
                }
            }
        }
    }
    for a in 0..8 {
        for b in 0..a {
            ke[a][b] = ke[b][a];
        }
    }
    ElementStiffness(ke)
}

/// Element-local vertex to global node map with periodic identification.
#[derive(Clone, Copy, Debug)]
pub struct PeriodicDofMap {
    cells: [usize; 3],
}

impl PeriodicDofMap {
    pub fn new(mesh: &UniformMesh) -> Self {
        Self {
            cells: mesh.cells(),
        }
    }

    pub fn dof_count(&self) -> usize {
        self.cells.iter().product()
    }

    pub fn element_count(&self) -> usize {
        self.dof_count()
    }

    /// Global DOFs of element `(ex, ey, ez)` in local vertex order.
    #[inline]
    pub fn element_dofs(&self, e: [usize; 3]) -> [usize; 8] {
        let [nx, ny, nz] = self.cells;
        let xs = [e[0], if e[0] + 1 == nx { 0 } else { e[0] + 1 }];
        let ys = [e[1], if e[1] + 1 == ny { 0 } else { e[1] + 1 }];
        let zs = [e[2], if e[2] + 1 == nz { 0 } else { e[2] + 1 }];
        std::array::from_fn(|a| {
            let o = vertex_offset(a);
            xs[o[0]] + nx * (ys[o[1]] + ny * zs[o[2]])
        })
    }

    /// Element that has global node `n` as local vertex `a`.
    #[inline]
    pub fn element_of(&self, node: [usize; 3], a: usize) -> [usize; 3] {
        let o = vertex_offset(a);
        std::array::from_fn(|d| (node[d] + self.cells[d] - o[d]) % self.cells[d])
    }
}

/// Global stiffness action `y = sum_e scatter(A^e gather_e(x))`.
#[derive(Clone, Debug)]
pub struct FemOperator {
    mesh: UniformMesh,
    stiffness: ElementStiffness,
    dofs: PeriodicDofMap,
    exec: Execution,
}

impl FemOperator {
    pub fn new(mesh: UniformMesh, exec: Execution) -> Self {
        Self {
            mesh,
            stiffness: compute_element_stiffness(mesh.spacing()),
            dofs: PeriodicDofMap::new(&mesh),
            exec,
        }
    }

    pub fn stiffness(&self) -> &ElementStiffness {
        &self.stiffness
    }

    pub fn dof_map(&self) -> &PeriodicDofMap {
        &self.dofs
    }

    /// Diagonal of the assembled matrix, accumulated through the DOF map.
    pub fn diagonal(&self) -> Vec<f64> {
        let mut diag = vec![0.0; self.dofs.dof_count()];
        self.for_each_element(|dofs| {
            for (a, &g) in dofs.iter().enumerate() {
                diag[g] += self.stiffness.0[a][a];
            }
        });
        diag
    }

    fn for_each_element(&self, mut f: impl FnMut([usize; 8])) {
        let [nx, ny, nz] = self.mesh.cells();
        for ez in 0..nz {
            for ey in 0..ny {
                for ex in 0..nx {
                    f(self.dofs.element_dofs([ex, ey, ez]));
                }
            }
        }
    }

    /// Sequential element loop with scatter-accumulation.
    fn apply_element_loop(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        let ke = &self.stiffness.0;
        self.for_each_element(|dofs| {
            let xe: [f64; 8] = dofs.map(|g| x[g]);
            for a in 0..8 {
                let row = &ke[a];
                let mut acc = 0.0;
                for b in 0..8 {
                    acc += row[b] * xe[b];
                }
                y[dofs[a]] += acc;
            }
        });
    }

    /// Node-parallel form: each node sums the rows of `A^e` it owns in its
    /// eight adjacent elements. Same operator, no write conflicts.
    fn apply_node_pull(&self, x: &[f64], y: &mut [f64]) {
        let [nx, ny, _] = self.mesh.cells();
        let ke = &self.stiffness.0;
        exec::for_each_chunk_mut(Execution::Parallel, y, nx * ny, |offset, plane| {
            for (local, out) in plane.iter_mut().enumerate() {
                let node = self.mesh.owned_coords(offset + local);
                let mut acc = 0.0;
                for (a, row) in ke.iter().enumerate() {
                    let dofs = self.dofs.element_dofs(self.dofs.element_of(node, a));
                    for b in 0..8 {
                        acc += row[b] * x[dofs[b]];
                    }
                }
                *out = acc;
            }
        });
    }
}

impl LinearOperator for FemOperator {
    fn dim(&self) -> usize {
        self.dofs.dof_count()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        if self.exec.is_parallel() {
            self.apply_node_pull(x, y);
        } else {
            self.apply_element_loop(x, y);
        }
    }
}

/// Matrix-free global stiffness action.
pub fn evaluate_ax(mesh: &UniformMesh, x: &[f64], exec: Execution) -> Vec<f64> {
    let op = FemOperator::new(*mesh, exec);
    let mut y = vec![0.0; x.len()];
    op.apply(x, &mut y);
    y
}

/// Lumped load `b_j = rho_j hx hy hz`.
pub fn assemble_load(rho: &ScalarGrid) -> Vec<f64> {
    let vol = rho.mesh().cell_volume();
    rho.owned_values().into_iter().map(|v| v * vol).collect()
}

/// `z = r / diag(A)` using the assembled FEM diagonal.
pub fn jacobi_precond_fem(mesh: &UniformMesh, r: &[f64]) -> Vec<f64> {
    let diag = FemOperator::new(*mesh, Execution::Serial).diagonal();
    r.iter().zip(diag).map(|(r, d)| r / d).collect()
}

#[derive(Debug)]
pub struct FemPoissonSolver {
    operator: FemOperator,
    jacobi: Option<JacobiPreconditioner>,
    config: CgConfig,
    exec: Execution,
}

impl FemPoissonSolver {
    pub fn new(mesh: UniformMesh, config: CgConfig, exec: Execution) -> Result<Self> {
        config.validate()?;
        let operator = FemOperator::new(mesh, exec);
        let jacobi = match config.preconditioner {
            PreconditionerKind::None => None,
            PreconditionerKind::Jacobi => Some(JacobiPreconditioner::from_diagonal(&operator.diagonal())),
            PreconditionerKind::Ssor { .. } => {
                return Err(Error::InvalidParameter(
                    "the FEM solver supports only the Jacobi preconditioner".into(),
                ))
            }
        };
        Ok(Self {
            operator,
            jacobi,
            config,
            exec,
        })
    }

    pub fn solve(&self, rho: &ScalarGrid, previous_phi: Option<&ScalarGrid>) -> Result<GridSolution> {
        let mesh = self.operator.mesh;
        let mut b = assemble_load(rho);
        let mean = exec::sum(self.exec, &b) / b.len() as f64;
        b.iter_mut().for_each(|v| *v -= mean);
        let x0 = match previous_phi {
            Some(phi) if self.config.warm_start => phi.owned_values(),
            _ => vec![0.0; b.len()],
        };
        let limit = self.config.iteration_limit(&mesh);
        let tol = self.config.tolerance;
        let (x, report) = match &self.jacobi {
            Some(j) => cg_solve(&self.operator, j, &b, &x0, tol, limit, self.exec)?,
            None => cg_solve(&self.operator, &IdentityPreconditioner, &b, &x0, tol, limit, self.exec)?,
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

pub fn solve_poisson_fem(
    rho: &ScalarGrid,
    config: &CgConfig,
    previous_phi: Option<&ScalarGrid>,
) -> Result<GridSolution> {
    FemPoissonSolver::new(*rho.mesh(), *config, Execution::Serial)?.solve(rho, previous_phi)
}
