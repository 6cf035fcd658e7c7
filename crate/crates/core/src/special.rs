//! Special functions and small geometric constants.

use std::f64::consts::PI;

pub use statrs::function::gamma::{gamma, ln_gamma};

/// Surface area of the unit sphere in `R^d`.
pub fn sphere_area(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    2.0 * PI.powf(h) / gamma(h)
}

/// Volume of the unit ball in `R^d`.
pub fn ball_volume(d: usize) -> f64 {
    sphere_area(d) / d as f64
}

/// Bessel function of the first kind of order zero.
pub fn bessel_j0(x: f64) -> f64 {
    let x = x.abs();
    if x > 60.0 {
        // Hankel asymptotic expansion, three terms in each of P and Q.
        let y = 1.0 / (x * x);
        let p = 1.0 - 9.0 / 128.0 * y + 3675.0 / 32768.0 * y * y;
        let q = (-1.0 / 8.0 + 75.0 / 1024.0 * y - 59535.0 / 262_144.0 * y * y) / x;
        let chi = x - PI / 4.0;
        return (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin());
    }
    // Periodic trapezoid on J0(x) = (1/2pi) int_0^{2pi} cos(x sin th) dth; the
    // aliasing error is of order J_M(x), negligible once M exceeds x by ~30.
    let m = (x.ceil() as usize + 32).max(32);
    let mut s = 0.0;
    for j in 0..m {
        let th = 2.0 * PI * j as f64 / m as f64;
        s += (x * th.sin()).cos();
    }
    s / m as f64
}

/// Radial kernel of the inverse Fourier transform of a radial function:
/// `(2 pi)^{-d} int_{R^d} g(|xi|) e^{i xi.x} dxi = int_0^inf g(k) k^{d-1} K_d(k |x|) dk`.
pub fn radial_fourier_kernel(d: usize, kr: f64) -> f64 {
    match d {
        1 => kr.cos() / PI,
        2 => bessel_j0(kr) / (2.0 * PI),
        3 => {
            let s = if kr.abs() < 1e-4 {
                1.0 - kr * kr / 6.0 + kr.powi(4) / 120.0
            } else {
                kr.sin() / kr
            };
            s / (2.0 * PI * PI)
        }
        _ => panic!("radial Fourier kernel implemented for d <= 3 only"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_areas() {
        assert!((sphere_area(1) - 2.0).abs() < 1e-14);
        assert!((sphere_area(2) - 2.0 * PI).abs() < 1e-13);
        assert!((sphere_area(3) - 4.0 * PI).abs() < 1e-13);
    }

    #[test]
    fn j0_reference_values() {
        // Abramowitz & Stegun table 9.1
        assert!((bessel_j0(0.0) - 1.0).abs() < 1e-15);
        assert!((bessel_j0(1.0) - 0.765_197_686_557_966_6).abs() < 1e-14);
        assert!((bessel_j0(10.0) + 0.245_935_764_451_348_3).abs() < 1e-13);
        // continuity across the switch to the asymptotic branch
        let a = bessel_j0(60.0 - 1e-9);
        let b = bessel_j0(60.0 + 1e-9);
        assert!((a - b).abs() < 1e-8);
    }
}
