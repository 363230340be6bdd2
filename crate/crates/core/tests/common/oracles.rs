//! Independent references for the grid solvers: explicitly assembled dense
//! operators and a manufactured periodic solution.

use nalgebra::{DMatrix, DVector};
use pic_core::fem::compute_element_stiffness;
use pic_core::mesh::{ScalarGrid, UniformMesh};

fn index(mesh: &UniformMesh, c: [isize; 3]) -> usize {
    let n = mesh.cells();
    let w: [usize; 3] = std::array::from_fn(|d| c[d].rem_euclid(n[d] as isize) as usize);
    mesh.owned_index(w[0], w[1], w[2])
}

/// `-Laplacian` with the 7-point stencil, assembled row by row.
pub fn dense_fd_matrix(mesh: &UniformMesh) -> DMatrix<f64> {
    let n = mesh.node_count();
    let h = mesh.spacing();
    let mut a = DMatrix::zeros(n, n);
    for row in 0..n {
        let c = mesh.owned_coords(row).map(|v| v as isize);
        for d in 0..3 {
            let inv = 1.0 / (h[d] * h[d]);
            a[(row, row)] += 2.0 * inv;
            for s in [-1, 1] {
                let mut nb = c;
                nb[d] += s;
                a[(row, index(mesh, nb))] -= inv;
            }
        }
    }
    a
}

/// Global trilinear stiffness matrix assembled element by element.
pub fn dense_fem_matrix(mesh: &UniformMesh) -> DMatrix<f64> {
    let n = mesh.node_count();
    let ke = compute_element_stiffness(mesh.spacing());
    let cells = mesh.cells();
    let mut k = DMatrix::zeros(n, n);
    for ez in 0..cells[2] as isize {
        for ey in 0..cells[1] as isize {
            for ex in 0..cells[0] as isize {
                let dofs: Vec<usize> = (0..8)
                    .map(|a| index(mesh, [ex + (a & 1) as isize, ey + ((a >> 1) & 1) as isize, ez + ((a >> 2) & 1) as isize]))
                    .collect();
                for a in 0..8 {
                    for b in 0..8 {
                        k[(dofs[a], dofs[b])] += ke.entry(a, b);
                    }
                }
            }
        }
    }
    k
}

/// Mean-free solution of a singular periodic system `A x = b - mean(b)`,
/// through the regularized matrix `A + 1 1^T`.
pub fn dense_solve(a: &DMatrix<f64>, b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mean = b.iter().sum::<f64>() / n as f64;
    let rhs = DVector::from_iterator(n, b.iter().map(|v| v - mean));
    let reg = a + DMatrix::from_element(n, n, 1.0);
    reg.lu().solve(&rhs).expect("regularized operator is nonsingular").iter().copied().collect()
}

/// `phi = cos(kx) cos(ky) cos(kz)` with one wavelength per box side, and
/// the density `rho = -Laplacian(phi)`.
pub fn manufactured(mesh: UniformMesh) -> (ScalarGrid, ScalarGrid) {
    let k: [f64; 3] = std::array::from_fn(|d| 2.0 * std::f64::consts::PI / mesh.extent()[d]);
    let phi = move |x: [f64; 3]| (k[0] * x[0]).cos() * (k[1] * x[1]).cos() * (k[2] * x[2]).cos();
    let k2: f64 = k.iter().map(|v| v * v).sum();
    (ScalarGrid::from_fn(mesh, phi), ScalarGrid::from_fn(mesh, move |x| k2 * phi(x)))
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub mod nufft {
    use num_complex::Complex64;
    use pic_core::nufft::{
        nudft_type1_bruteforce, nudft_type2_bruteforce, select_window_parameters, ModeSet, Nufft, SpectralCoefficients,
    };
    use pic_core::Execution;
    use rand::Rng;
    use rand_chacha::ChaCha8Rng;

    pub fn points(n: usize, extent: [f64; 3], rng: &mut ChaCha8Rng) -> [Vec<f64>; 3] {
        std::array::from_fn(|d| (0..n).map(|_| rng.gen_range(0.0..extent[d])).collect())
    }

    pub fn complex(n: usize, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
        (0..n).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect()
    }

    /// One random case against the direct sums.
    pub struct CaseErrors {
        /// `max |fast - direct| / sum |w|` for type 1.
        pub type1: f64,
        /// `max |fast - direct| / sum |f_hat|` for type 2.
        pub type2: f64,
        /// `|<type1 w, g> - <w, type2 g>| / |<type1 w, g>|`.
        pub adjoint: f64,
    }

    pub fn random_case(n: usize, np: usize, eps: f64, extent: [f64; 3], rng: &mut ChaCha8Rng) -> CaseErrors {
        let modes = ModeSet::new([n; 3], extent).unwrap();
        let window = select_window_parameters(eps, 2.0, [n; 3]).unwrap();
        let plan = Nufft::new(modes, window, Execution::default()).unwrap();
        let x = points(np, extent, rng);
        let w = complex(np, rng);
        let fast1 = plan.type1(&x, &w);
        let slow1 = nudft_type1_bruteforce(&x, &w, &modes);
        let norm1: f64 = w.iter().map(|v| v.norm()).sum();
        let type1 = fast1.values.iter().zip(&slow1.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max) / norm1;

        let g = SpectralCoefficients { modes, values: complex(modes.len(), rng) };
        let norm2: f64 = g.values.iter().map(|v| v.norm()).sum();
        let fast2 = plan.type2(&g, &x);
        let slow2 = nudft_type2_bruteforce(&g, &x);
        let type2 = fast2.iter().zip(&slow2).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max) / norm2;

        let lhs: Complex64 = fast1.values.iter().zip(&g.values).map(|(a, b)| a.conj() * b).sum();
        let rhs: Complex64 = w.iter().zip(&fast2).map(|(a, b)| a.conj() * b).sum();
        CaseErrors { type1, type2, adjoint: (lhs - rhs).norm() / lhs.norm() }
    }
}
