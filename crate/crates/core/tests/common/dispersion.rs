//! Linear Landau dispersion relation for a Maxwellian electron plasma.
//!
//! `1 + (1/k^2) (1 + zeta Z(zeta)) = 0` with `zeta = omega / (k sqrt 2)` and
//! `Z` the plasma dispersion function.

use num_complex::Complex64;

/// Plasma dispersion function from its entire power series
/// `Z(z) = i sqrt(pi) exp(-z^2) - 2 z sum_n (-2 z^2)^n / (2n+1)!!`.
pub fn plasma_z(z: Complex64) -> Complex64 {
    let i = Complex64::new(0.0, 1.0);
    let m = -2.0 * z * z;
    let mut term = Complex64::new(1.0, 0.0);
    let mut sum = term;
    for n in 1..400 {
        term *= m / (2 * n + 1) as f64;
        sum += term;
        if term.norm() < 1e-18 * sum.norm() {
            break;
        }
    }
    i * std::f64::consts::PI.sqrt() * (-z * z).exp() - 2.0 * z * sum
}

pub fn dispersion(omega: Complex64, k: f64) -> Complex64 {
    let zeta = omega / (k * std::f64::consts::SQRT_2);
    1.0 + (1.0 + zeta * plasma_z(zeta)) / (k * k)
}

/// Least-damped root near the Bohm-Gross frequency, by secant iteration.
pub fn landau_root(k: f64) -> Complex64 {
    let mut a = Complex64::new((1.0 + 3.0 * k * k).sqrt(), -0.05);
    let mut b = a + Complex64::new(0.01, -0.01);
    let (mut fa, mut fb) = (dispersion(a, k), dispersion(b, k));
    for _ in 0..100 {
        let c = b - fb * (b - a) / (fb - fa);
        a = b;
        fa = fb;
        b = c;
        fb = dispersion(b, k);
        if (b - a).norm() < 1e-14 {
            break;
        }
    }
    b
}

/// Slope of `ln(field energy)`: twice the imaginary part of the root.
pub fn energy_decay_slope(k: f64) -> f64 {
    2.0 * landau_root(k).im
}
