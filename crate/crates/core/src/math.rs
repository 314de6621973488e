//! Scalar and small-matrix helpers that work without `std`.

use nalgebra::{Matrix3, Vector3};

pub use libm::{asin, atan2, cos, fabs, sin, sqrt};

/// Skew-symmetric matrix `[w]x` such that `[w]x v = w × v`.
pub fn skew(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// Wraps an angle into (-π, π].
pub fn wrap_angle(a: f64) -> f64 {
    use core::f64::consts::PI;
    let two_pi = 2.0 * PI;
    let mut w = a - two_pi * libm::floor((a + PI) / two_pi);
    // floor maps odd multiples of π to -π; the interval is open at -π.
    if w <= -PI {
        w += two_pi;
    }
    w
}

/// Largest absolute entry of a 3×3 matrix.
pub fn max_abs(m: &Matrix3<f64>) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(fabs(*v)))
}

/// `x^n` for a non-negative integer exponent.
pub fn powi(x: f64, n: u32) -> f64 {
    let mut acc = 1.0;
    for _ in 0..n {
        acc *= x;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;

    #[test]
    fn wrap_covers_half_open_interval() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert!((wrap_angle(0.1) - 0.1).abs() < 1e-15);
        assert!((wrap_angle(-7.0) - (-7.0 + 2.0 * PI)).abs() < 1e-12);
    }

    #[test]
    fn skew_matches_cross_product() {
        let w = Vector3::new(0.3, -1.2, 2.0);
        let v = Vector3::new(-0.7, 0.4, 1.1);
        assert!((skew(&w) * v - w.cross(&v)).norm() < 1e-15);
    }

    #[test]
    fn powi_small_exponents() {
        assert_eq!(powi(2.0, 0), 1.0);
        assert_eq!(powi(-0.5, 3), -0.125);
        assert_eq!(powi(0.0, 0), 1.0);
    }
}
