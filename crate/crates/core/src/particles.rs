//! Macro-particle storage, Landau initial sampling, cloud-in-cell scatter and
//! gather, the leapfrog/Boris push and the periodic position update.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exec::{self, Execution, PARTICLE_CHUNK};
use crate::mesh::{ScalarGrid, UniformMesh, VectorGrid};

/// Electron charge in normalized plasma units.
pub const ELECTRON_CHARGE: f64 = -1.0;
/// Electron mass in normalized plasma units.
pub const ELECTRON_MASS: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct RngSeed(pub u64);

/// Structure-of-arrays particle storage with uniform macro weights.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleEnsemble {
    pub positions: [Vec<f64>; 3],
    pub velocities: [Vec<f64>; 3],
    macro_charge: f64,
    macro_mass: f64,
    species_charge: f64,
    species_mass: f64,
}

impl ParticleEnsemble {
    /// Electron ensemble with explicit per-particle charge and mass.
    pub fn new(
        positions: [Vec<f64>; 3],
        velocities: [Vec<f64>; 3],
        macro_charge: f64,
        macro_mass: f64,
    ) -> Self {
        let n = positions[0].len();
        assert!(
            positions.iter().chain(&velocities).all(|v| v.len() == n),
            "all coordinate arrays must have the same length"
        );
        Self {
            positions,
            velocities,
            macro_charge,
            macro_mass,
            species_charge: ELECTRON_CHARGE,
            species_mass: ELECTRON_MASS,
        }
    }

    pub fn len(&self) -> usize {
        self.positions[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn macro_charge(&self) -> f64 {
        self.macro_charge
    }

    pub fn macro_mass(&self) -> f64 {
        self.macro_mass
    }

    pub fn species_charge(&self) -> f64 {
        self.species_charge
    }

    pub fn species_mass(&self) -> f64 {
        self.species_mass
    }

    pub fn charge_to_mass(&self) -> f64 {
        self.species_charge / self.species_mass
    }

    pub fn total_charge(&self) -> f64 {
        self.macro_charge * self.len() as f64
    }

    pub fn position(&self, j: usize) -> [f64; 3] {
        [0, 1, 2].map(|d| self.positions[d][j])
    }

    pub fn velocity(&self, j: usize) -> [f64; 3] {
        [0, 1, 2].map(|d| self.velocities[d][j])
    }
}

/// Draws the weak-Landau-damping initial ensemble.
///
/// Each position coordinate follows `(1 + alpha cos(k x)) / L` on `[0, L)`
/// independently per dimension; each velocity component is standard normal.
/// Macro charge is `q_e V / N_p` and macro mass `m_e V / N_p` (unit mean
/// density).
pub fn sample_landau(
    mesh: &UniformMesh,
    particles_per_cell: usize,
    alpha: f64,
    kmode: f64,
    seed: RngSeed,
) -> Result<ParticleEnsemble> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::InvalidParameter(format!(
            "alpha must lie in [0, 1), got {alpha}"
        )));
    }
    if particles_per_cell == 0 {
        return Err(Error::InvalidParameter(
            "particles per cell must be positive".into(),
        ));
    }
    let extent = mesh.extent();
    for (d, l) in extent.iter().enumerate() {
        let wavelengths = kmode * l / (2.0 * std::f64::consts::PI);
        if !((wavelengths - 1.0).abs() < 1e-10) {
            return Err(Error::InvalidParameter(format!(
                "kmode * L must equal 2 pi in every dimension (dimension {d}: {})",
                kmode * l
            )));
        }
    }
    let count = particles_per_cell * mesh.node_count();

    let mut pos_rng = ChaCha8Rng::seed_from_u64(seed.0);
    pos_rng.set_stream(0);
    let mut positions = [0, 1, 2].map(|_| Vec::with_capacity(count));
    for _ in 0..count {
        for (d, coords) in positions.iter_mut().enumerate() {
            let u: f64 = pos_rng.gen();
            coords.push(invert_landau_cdf(u, alpha, kmode, extent[d]));
        }
    }

    let mut vel_rng = ChaCha8Rng::seed_from_u64(seed.0);
    vel_rng.set_stream(1);
    let mut normals = BoxMuller::default();
    let mut velocities = [0, 1, 2].map(|_| Vec::with_capacity(count));
    for _ in 0..count {
        for coords in velocities.iter_mut() {
            coords.push(normals.sample(&mut vel_rng));
        }
    }

    let weight = mesh.volume() / count as f64;
    Ok(ParticleEnsemble {
        positions,
        velocities,
        macro_charge: ELECTRON_CHARGE * weight,
        macro_mass: ELECTRON_MASS * weight,
        species_charge: ELECTRON_CHARGE,
        species_mass: ELECTRON_MASS,
    })
}

/// Solves `(x + (alpha / k) sin(k x)) / L = u` for `x` in `[0, L)`.
///
/// Newton from `u L`, falling back to bisection whenever a step leaves the
/// current bracket.
fn invert_landau_cdf(u: f64, alpha: f64, k: f64, length: f64) -> f64 {
    let target = u * length;
    let (mut lo, mut hi) = (0.0, length);
    let mut x = target;
    for _ in 0..100 {
        let residual = x + alpha / k * (k * x).sin() - target;
        if residual == 0.0 {
            break;
        }
        if residual > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let slope = 1.0 + alpha * (k * x).cos();
        let mut next = x - residual / slope;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let done = (next - x).abs() <= 1e-12 * length;
        x = next;
        if done {
            break;
        }
    }
    if x >= length {
        0.0
    } else {
        x.max(0.0)
    }
}

#[derive(Default)]
struct BoxMuller {
    spare: Option<f64>,
}

impl BoxMuller {
    fn sample<R: Rng>(&mut self, rng: &mut R) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // u1 in (0, 1] keeps the log finite
        let u1 = 1.0 - rng.gen::<f64>();
        let u2: f64 = rng.gen();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (2.0 * std::f64::consts::PI * u2).sin_cos();
        self.spare = Some(r * s);
        r * c
    }
}

/// Lower node index and fractional offset along one axis.
#[inline]
fn cic_axis(x: f64, inv_h: f64, n: usize) -> (usize, f64) {
    let s = x * inv_h;
    let i = (s.floor().max(0.0) as usize).min(n - 1);
    (i, s - i as f64)
}

/// Deposits charge density with trilinear (cloud-in-cell) weights.
///
/// Particles are binned in fixed chunks, each into a private buffer; the
/// buffers are summed in chunk order so the result does not depend on the
/// execution mode.
pub fn scatter_cic(ensemble: &ParticleEnsemble, mesh: &UniformMesh, exec: Execution) -> ScalarGrid {
    let [nx, ny, nz] = mesh.cells();
    let inv_h = mesh.spacing().map(|h| 1.0 / h);
    let density = ensemble.macro_charge / mesh.cell_volume();
    let [xs, ys, zs] = &ensemble.positions;

    let buffers = exec::map_chunks(exec, ensemble.len(), PARTICLE_CHUNK, |range| {
        let mut rho = vec![0.0; mesh.node_count()];
        for j in range {
            let (i0, fx) = cic_axis(xs[j], inv_h[0], nx);
            let (j0, fy) = cic_axis(ys[j], inv_h[1], ny);
            let (k0, fz) = cic_axis(zs[j], inv_h[2], nz);
            let i1 = if i0 + 1 == nx { 0 } else { i0 + 1 };
            let j1 = if j0 + 1 == ny { 0 } else { j0 + 1 };
            let k1 = if k0 + 1 == nz { 0 } else { k0 + 1 };
            let wx = [1.0 - fx, fx];
            let wy = [1.0 - fy, fy];
            let wz = [(1.0 - fz) * density, fz * density];
            for (kk, wz) in [k0, k1].into_iter().zip(wz) {
                for (jj, wy) in [j0, j1].into_iter().zip(wy) {
                    let row = nx * (jj + ny * kk);
                    let wyz = wy * wz;
                    rho[row + i0] += wx[0] * wyz;
                    rho[row + i1] += wx[1] * wyz;
                }
            }
        }
        rho
    });

    let mut buffers = buffers.into_iter();
    let mut total = buffers
        .next()
        .unwrap_or_else(|| vec![0.0; mesh.node_count()]);
    for b in buffers {
        total.iter_mut().zip(b).for_each(|(t, v)| *t += v);
    }
    ScalarGrid::from_owned(*mesh, &total)
}

/// Trilinear interpolation of every field component at every position.
///
/// `field` must have synced ghosts.
pub fn gather_cic(field: &VectorGrid, positions: &[Vec<f64>; 3], exec: Execution) -> Vec<[f64; 3]> {
    let mesh = *field.mesh();
    let [nx, ny, nz] = mesh.cells();
    let inv_h = mesh.spacing().map(|h| 1.0 / h);
    let comps = field.components();
    let raws = [comps[0].raw(), comps[1].raw(), comps[2].raw()];
    let [px, py, _] = mesh.padded_dims();
    let (sy, sz) = (px, px * py);
    let [xs, ys, zs] = positions;

    let mut out = vec![[0.0; 3]; xs.len()];
    exec::for_each_chunk_mut(exec, &mut out, PARTICLE_CHUNK, |offset, chunk| {
        for (local, value) in chunk.iter_mut().enumerate() {
            let j = offset + local;
            let (i0, fx) = cic_axis(xs[j], inv_h[0], nx);
            let (j0, fy) = cic_axis(ys[j], inv_h[1], ny);
            let (k0, fz) = cic_axis(zs[j], inv_h[2], nz);
            let base = mesh.padded_index(i0 as isize, j0 as isize, k0 as isize);
            let w = [
                (1.0 - fx) * (1.0 - fy) * (1.0 - fz),
                fx * (1.0 - fy) * (1.0 - fz),
                (1.0 - fx) * fy * (1.0 - fz),
                fx * fy * (1.0 - fz),
                (1.0 - fx) * (1.0 - fy) * fz,
                fx * (1.0 - fy) * fz,
                (1.0 - fx) * fy * fz,
                fx * fy * fz,
            ];
            let idx = [
                base,
                base + 1,
                base + sy,
                base + sy + 1,
                base + sz,
                base + sz + 1,
                base + sz + sy,
                base + sz + sy + 1,
            ];
            for d in 0..3 {
                value[d] = w.iter().zip(idx).map(|(w, c)| w * raws[d][c]).sum();
            }
        }
    });
    out
}

/// Advances velocities by one step and drifts positions.
///
/// With a zero magnetic field this is the leapfrog kick-drift
/// `v += (q/m) E dt; x += v dt`. Otherwise the velocity update is the Boris
/// half-kick, rotation, half-kick. Positions are not wrapped; see
/// [`apply_periodic`].
pub fn push(
    ensemble: &mut ParticleEnsemble,
    field_at_particles: &[[f64; 3]],
    dt: f64,
    b_ext: [f64; 3],
    exec: Execution,
) {
    assert_eq!(field_at_particles.len(), ensemble.len());
    let qm = ensemble.charge_to_mass();
    let magnetized = b_ext.iter().any(|&b| b != 0.0);
    // Boris rotation vectors
    let t = b_ext.map(|b| qm * b * 0.5 * dt);
    let t2 = t[0] * t[0] + t[1] * t[1] + t[2] * t[2];
    let s = t.map(|c| 2.0 * c / (1.0 + t2));

    let n = ensemble.len();
    let [x, y, z] = &mut ensemble.positions;
    let [vx, vy, vz] = &mut ensemble.velocities;
    let kernel = |range: std::ops::Range<usize>,
                  pos: [&mut [f64]; 3],
                  vel: [&mut [f64]; 3]| {
        let [x, y, z] = pos;
        let [vx, vy, vz] = vel;
        for (local, e) in field_at_particles[range].iter().enumerate() {
            let mut v = [vx[local], vy[local], vz[local]];
            if magnetized {
                let h = 0.5 * qm * dt;
                let vm = [v[0] + h * e[0], v[1] + h * e[1], v[2] + h * e[2]];
                let vp = add(vm, cross(vm, t));
                let vr = add(vm, cross(vp, s));
                v = [vr[0] + h * e[0], vr[1] + h * e[1], vr[2] + h * e[2]];
            } else {
                for d in 0..3 {
                    v[d] += qm * e[d] * dt;
                }
            }
            vx[local] = v[0];
            vy[local] = v[1];
            vz[local] = v[2];
            x[local] += v[0] * dt;
            y[local] += v[1] * dt;
            z[local] += v[2] * dt;
        }
    };

    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        let c = PARTICLE_CHUNK;
        (
            x.par_chunks_mut(c),
            y.par_chunks_mut(c),
            z.par_chunks_mut(c),
            vx.par_chunks_mut(c),
            vy.par_chunks_mut(c),
            vz.par_chunks_mut(c),
        )
            .into_par_iter()
            .enumerate()
            .for_each(|(ci, (x, y, z, vx, vy, vz))| {
                let start = ci * c;
                kernel(start..start + x.len(), [x, y, z], [vx, vy, vz]);
            });
        return;
    }
    let _ = exec;
    kernel(0..n, [x, y, z], [vx, vy, vz]);
}

/// `v -= (q/m) E dt / 2`: staggers velocities back to `t = -dt/2` before the
/// first leapfrog step.
pub fn half_kick_back(ensemble: &mut ParticleEnsemble, field_at_particles: &[[f64; 3]], dt: f64) {
    let h = 0.5 * ensemble.charge_to_mass() * dt;
    for d in 0..3 {
        for (v, e) in ensemble.velocities[d].iter_mut().zip(field_at_particles) {
            *v -= h * e[d];
        }
    }
}

/// Wraps every coordinate into `[0, L_d)`.
pub fn apply_periodic(ensemble: &mut ParticleEnsemble, mesh: &UniformMesh) -> Result<()> {
    let extent = mesh.extent();
    for (d, coords) in ensemble.positions.iter_mut().enumerate() {
        let l = extent[d];
        for (index, x) in coords.iter_mut().enumerate() {
            if !x.is_finite() {
                return Err(Error::NonFinitePosition {
                    index,
                    dim: d,
                    value: *x,
                });
            }
            if *x < 0.0 || *x >= l {
                let w = x.rem_euclid(l);
                *x = if w >= l { 0.0 } else { w };
            }
        }
    }
    Ok(())
}

#[inline]
fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
fn add(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}
