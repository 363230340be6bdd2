//! Periodic uniform Cartesian mesh and node-centred fields with a one-cell
//! ghost shell.
//!
//! Fields store owned nodes `0..N_d` per dimension plus one ghost node on each
//! side; after [`ScalarGrid::sync_ghosts`] ghost `-1` holds owned `N_d - 1` and
//! ghost `N_d` holds owned `0`. Storage is x-fastest in both the padded and the
//! flat owned layouts.

use crate::error::{Error, Result};
use crate::exec::{self, Execution};

/// Minimum nodes per dimension (central stencils and CIC both need this).
pub const MIN_CELLS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UniformMesh {
    cells: [usize; 3],
    extent: [f64; 3],
    spacing: [f64; 3],
}

impl UniformMesh {
    pub fn new(cells: [usize; 3], extent: [f64; 3]) -> Result<Self> {
        for d in 0..3 {
            if cells[d] < MIN_CELLS {
                return Err(Error::InvalidMesh(format!(
                    "dimension {d} has {} cells, need at least {MIN_CELLS}",
                    cells[d]
                )));
            }
            if !(extent[d].is_finite() && extent[d] > 0.0) {
                return Err(Error::InvalidMesh(format!(
                    "dimension {d} has non-positive extent {}",
                    extent[d]
                )));
            }
        }
        let spacing = [0, 1, 2].map(|d| extent[d] / cells[d] as f64);
        Ok(Self {
            cells,
            extent,
            spacing,
        })
    }

    pub fn cubic(n: usize, length: f64) -> Result<Self> {
        Self::new([n; 3], [length; 3])
    }

    pub fn cells(&self) -> [usize; 3] {
        self.cells
    }

    pub fn extent(&self) -> [f64; 3] {
        self.extent
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn node_count(&self) -> usize {
        self.cells.iter().product()
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing[0] * self.spacing[1] * self.spacing[2]
    }

    pub fn volume(&self) -> f64 {
        self.extent[0] * self.extent[1] * self.extent[2]
    }

    /// Flat index of an owned node.
    #[inline]
    pub fn owned_index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.cells[0] * (j + self.cells[1] * k)
    }

    /// Inverse of [`owned_index`](Self::owned_index).
    #[inline]
    pub fn owned_coords(&self, idx: usize) -> [usize; 3] {
        let [nx, ny, _] = self.cells;
        [idx % nx, (idx / nx) % ny, idx / (nx * ny)]
    }

    /// Physical position of an owned node.
    pub fn node_position(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        [
            i as f64 * self.spacing[0],
            j as f64 * self.spacing[1],
            k as f64 * self.spacing[2],
        ]
    }

    pub(crate) fn padded_dims(&self) -> [usize; 3] {
        self.cells.map(|n| n + 2)
    }

    /// Padded index for node coordinates in `-1..=N_d`.
    #[inline]
    pub(crate) fn padded_index(&self, i: isize, j: isize, k: isize) -> usize {
        let [px, py, _] = self.padded_dims();
        (i + 1) as usize + px * ((j + 1) as usize + py * (k + 1) as usize)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarGrid {
    mesh: UniformMesh,
    values: Vec<f64>,
}

impl ScalarGrid {
    pub fn zeros(mesh: UniformMesh) -> Self {
        let len = mesh.padded_dims().iter().product();
        Self {
            mesh,
            values: vec![0.0; len],
        }
    }

    /// Builds a grid from owned values in x-fastest order; ghosts are synced.
    pub fn from_owned(mesh: UniformMesh, owned: &[f64]) -> Self {
        assert_eq!(owned.len(), mesh.node_count(), "owned length mismatch");
        let mut grid = Self::zeros(mesh);
        let [nx, ny, nz] = mesh.cells;
        for k in 0..nz {
            for j in 0..ny {
                let src = mesh.owned_index(0, j, k);
                let dst = mesh.padded_index(0, j as isize, k as isize);
                grid.values[dst..dst + nx].copy_from_slice(&owned[src..src + nx]);
            }
        }
        grid.sync_ghosts();
        grid
    }

    /// Samples `f` at every owned node position; ghosts are synced.
    pub fn from_fn(mesh: UniformMesh, f: impl Fn([f64; 3]) -> f64) -> Self {
        let owned: Vec<f64> = (0..mesh.node_count())
            .map(|idx| {
                let [i, j, k] = mesh.owned_coords(idx);
                f(mesh.node_position(i, j, k))
            })
            .collect();
        Self::from_owned(mesh, &owned)
    }

    pub fn mesh(&self) -> &UniformMesh {
        &self.mesh
    }

    /// Owned values in x-fastest order.
    pub fn owned_values(&self) -> Vec<f64> {
        let mesh = &self.mesh;
        let [nx, ny, nz] = mesh.cells;
        let mut out = Vec::with_capacity(mesh.node_count());
        for k in 0..nz {
            for j in 0..ny {
                let src = mesh.padded_index(0, j as isize, k as isize);
                out.extend_from_slice(&self.values[src..src + nx]);
            }
        }
        out
    }

    /// Value at node coordinates in `-1..=N_d` (ghosts included).
    #[inline]
    pub fn get(&self, i: isize, j: isize, k: isize) -> f64 {
        self.values[self.mesh.padded_index(i, j, k)]
    }

    /// Sets an owned node. Ghosts are stale until the next sync.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, value: f64) {
        let idx = self.mesh.padded_index(i as isize, j as isize, k as isize);
        self.values[idx] = value;
    }

    pub(crate) fn raw(&self) -> &[f64] {
        &self.values
    }

    /// Fills the ghost shell by periodic wrap of owned values.
    pub fn sync_ghosts(&mut self) {
        let [nx, ny, nz] = self.mesh.cells.map(|n| n as isize);
        let wrap = |c: isize, n: isize| -> isize {
            if c < 0 {
                c + n
            } else if c >= n {
                c - n
            } else {
                c
            }
        };
        for k in -1..=nz {
            for j in -1..=ny {
                let interior_row = (0..nz).contains(&k) && (0..ny).contains(&j);
                let mut copy = |i: isize| {
                    let src = self.mesh.padded_index(wrap(i, nx), wrap(j, ny), wrap(k, nz));
                    let dst = self.mesh.padded_index(i, j, k);
                    self.values[dst] = self.values[src];
                };
                if interior_row {
                    copy(-1);
                    copy(nx);
                } else {
                    for i in -1..=nx {
                        copy(i);
                    }
                }
            }
        }
    }

    /// Owned-node mean.
    pub fn mean(&self) -> f64 {
        self.owned_values().iter().sum::<f64>() / self.mesh.node_count() as f64
    }
}

/// Three node-centred components sharing one mesh.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorGrid {
    components: [ScalarGrid; 3],
}

impl VectorGrid {
    pub fn zeros(mesh: UniformMesh) -> Self {
        Self {
            components: [0, 1, 2].map(|_| ScalarGrid::zeros(mesh)),
        }
    }

    pub fn from_components(components: [ScalarGrid; 3]) -> Self {
        assert!(
            components[1].mesh == components[0].mesh && components[2].mesh == components[0].mesh,
            "vector components must share a mesh"
        );
        Self { components }
    }

    pub fn mesh(&self) -> &UniformMesh {
        &self.components[0].mesh
    }

    pub fn component(&self, d: usize) -> &ScalarGrid {
        &self.components[d]
    }

    pub fn components(&self) -> &[ScalarGrid; 3] {
        &self.components
    }

    pub fn sync_ghosts(&mut self) {
        self.components.iter_mut().for_each(ScalarGrid::sync_ghosts);
    }
}

/// `E = -grad(phi)` by second-order central differences at every owned node.
///
/// `phi` must have synced ghosts; the result has synced ghosts.
pub fn gradient_central(phi: &ScalarGrid, exec: Execution) -> VectorGrid {
    let mesh = *phi.mesh();
    let [nx, ny, _] = mesh.cells;
    let [px, py, _] = mesh.padded_dims();
    let strides = [1, px, px * py];
    let raw = phi.raw();
    let components = [0, 1, 2].map(|d| {
        let scale = -0.5 / mesh.spacing[d];
        let stride = strides[d];
        let mut owned = vec![0.0; mesh.node_count()];
        // one z-plane per chunk
        exec::for_each_chunk_mut(exec, &mut owned, nx * ny, |offset, plane| {
            let k = offset / (nx * ny);
            for j in 0..ny {
                let base = mesh.padded_index(0, j as isize, k as isize);
                let row = &mut plane[j * nx..(j + 1) * nx];
                for (i, out) in row.iter_mut().enumerate() {
                    let c = base + i;
                    *out = scale * (raw[c + stride] - raw[c - stride]);
                }
            }
        });
        ScalarGrid::from_owned(mesh, &owned)
    });
    VectorGrid { components }
}

/// `sum(owned) * hx * hy * hz`, accumulated node by node in owned order.
pub fn integrate(grid: &ScalarGrid) -> f64 {
    let vol = grid.mesh.cell_volume();
    grid.owned_values().iter().map(|v| v * vol).sum()
}

/// `0.5 * integral(E_d^2)` in units with unit permittivity.
pub fn field_energy_component(field: &VectorGrid, d: usize) -> f64 {
    let comp = field.component(d);
    let vol = comp.mesh.cell_volume();
    0.5 * comp.owned_values().iter().map(|v| v * v * vol).sum::<f64>()
}
