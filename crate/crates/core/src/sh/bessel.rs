//! Spherical Bessel and Hankel functions and array mode strengths.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sphere boundary condition of the array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ArrayKind {
    /// Microphones suspended in free field (acoustically transparent).
    Open,
    /// Microphones flush-mounted on a rigid baffle.
    #[default]
    Rigid,
}

impl std::str::FromStr for ArrayKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "open" => Ok(ArrayKind::Open),
            "rigid" => Ok(ArrayKind::Rigid),
            other => Err(Error::InvalidArgument(format!("unknown array kind '{other}'"))),
        }
    }
}

const SERIES_LIMIT: f64 = 0.1;

/// Power series `j_n(x) = x^n Σ_k (-x²/2)^k / (k! (2n+2k+1)!!)`.
fn j_series(n: usize, x: f64) -> f64 {
    let mut lead = 1.0;
    for k in 1..=n {
        lead *= x / (2 * k + 1) as f64;
    }
    let q = -0.5 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..40 {
        term *= q / (k as f64 * (2 * n + 2 * k + 1) as f64);
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    lead * sum
}

/// Miller downward recurrence, normalized with `Σ_k (2k+1) j_k(x)^2 = 1`.
fn j_miller(n: usize, x: f64) -> f64 {
    let start = n + 20 + (x as usize) + ((40 * n) as f64).sqrt() as usize;
    let mut vals = vec![0.0; start + 2];
    vals[start] = 1e-300;
    for k in (1..=start).rev() {
        vals[k - 1] = (2 * k + 1) as f64 / x * vals[k] - vals[k + 1];
        if vals[k - 1].abs() > 1e250 {
            vals.iter_mut().for_each(|v| *v *= 1e-250);
        }
    }
    let scale = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    vals.iter_mut().for_each(|v| *v /= scale);
    let norm = vals
        .iter()
        .enumerate()
        .map(|(k, v)| (2 * k + 1) as f64 * v * v)
        .sum::<f64>()
        .sqrt();
    // sign from whichever of j_0, j_1 is better conditioned
    let (s, c) = x.sin_cos();
    let j0 = s / x;
    let j1 = s / (x * x) - c / x;
    let sign = if j0.abs() >= j1.abs() {
        (j0 * vals[0]).signum()
    } else {
        (j1 * vals[1]).signum()
    };
    sign * vals[n] / norm
}

/// Spherical Bessel function of the first kind `j_n(x)`.
///
/// Negative arguments use the parity relation `j_n(-x) = (-1)^n j_n(x)`.
pub fn sph_bessel_j(n: usize, x: f64) -> f64 {
    if x < 0.0 {
        let v = sph_bessel_j(n, -x);
        return if n % 2 == 0 { v } else { -v };
    }
    if x == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    if x < SERIES_LIMIT {
        return j_series(n, x);
    }
    if (n as f64) > x {
        return j_miller(n, x);
    }
    let (s, c) = x.sin_cos();
    let mut prev = s / x;
    if n == 0 {
        return prev;
    }
    let mut cur = s / (x * x) - c / x;
    for k in 1..n {
        let next = (2 * k + 1) as f64 / x * cur - prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Spherical Bessel function of the second kind `y_n(x)`, by upward recurrence.
pub fn sph_bessel_y(n: usize, x: f64) -> Result<f64> {
    if x <= 0.0 {
        return Err(Error::Singular(format!("y_{n}({x}) is singular for x <= 0")));
    }
    let (s, c) = x.sin_cos();
    let mut prev = -c / x;
    if n == 0 {
        return Ok(prev);
    }
    let mut cur = -c / (x * x) - s / x;
    for k in 1..n {
        let next = (2 * k + 1) as f64 / x * cur - prev;
        prev = cur;
        cur = next;
    }
    Ok(cur)
}

/// Spherical Hankel function of the first kind `h_n(x) = j_n(x) + i y_n(x)`.
pub fn sph_hankel_h(n: usize, x: f64) -> Result<Complex64> {
    if x <= 0.0 {
        return Err(Error::Singular(format!("h_{n}({x}) is singular for x <= 0")));
    }
    Ok(Complex64::new(sph_bessel_j(n, x), sph_bessel_y(n, x)?))
}

/// `j'_n(x)` from `f'_n = f_{n-1} - (n+1)/x f_n` (and `j'_0 = -j_1`).
pub fn sph_bessel_j_deriv(n: usize, x: f64) -> f64 {
    if n == 0 {
        return -sph_bessel_j(1, x);
    }
    if x == 0.0 {
        return if n == 1 { 1.0 / 3.0 } else { 0.0 };
    }
    sph_bessel_j(n - 1, x) - (n + 1) as f64 / x * sph_bessel_j(n, x)
}

pub fn sph_bessel_y_deriv(n: usize, x: f64) -> Result<f64> {
    if n == 0 {
        return Ok(-sph_bessel_y(1, x)?);
    }
    Ok(sph_bessel_y(n - 1, x)? - (n + 1) as f64 / x * sph_bessel_y(n, x)?)
}

pub fn sph_hankel_h_deriv(n: usize, x: f64) -> Result<Complex64> {
    Ok(Complex64::new(sph_bessel_j_deriv(n, x), sph_bessel_y_deriv(n, x)?))
}

/// Modal response `b_n(kr)` of an open or rigid spherical array.
///
/// Open: `j_n(kr)`. Rigid: `j_n(kr) - j'_n(kr)/h'_n(kr) · h_n(kr)`.
pub fn mode_strength(n: usize, kr: f64, kind: ArrayKind) -> Result<Complex64> {
    if kr < 0.0 || !kr.is_finite() {
        return Err(Error::InvalidArgument(format!("kr = {kr} must be finite and >= 0")));
    }
    match kind {
        ArrayKind::Open => Ok(Complex64::new(sph_bessel_j(n, kr), 0.0)),
        ArrayKind::Rigid => {
            if kr == 0.0 {
                return Err(Error::Singular("rigid mode strength at kr = 0".into()));
            }
            let j = sph_bessel_j(n, kr);
            let jd = sph_bessel_j_deriv(n, kr);
            let h = sph_hankel_h(n, kr)?;
            let hd = sph_hankel_h_deriv(n, kr)?;
            Ok(Complex64::new(j, 0.0) - h * (jd / hd))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_2, PI};

    /// Independent oracle: Taylor series of sin and cos.
    fn sin_series(x: f64) -> f64 {
        let mut term = x;
        let mut sum = x;
        for k in 1..60 {
            term *= -x * x / ((2 * k) as f64 * (2 * k + 1) as f64);
            sum += term;
        }
        sum
    }

    fn cos_series(x: f64) -> f64 {
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..60 {
            term *= -x * x / ((2 * k - 1) as f64 * (2 * k) as f64);
            sum += term;
        }
        sum
    }

    #[test]
    fn values_at_origin() {
        assert_eq!(sph_bessel_j(0, 0.0), 1.0);
        assert_eq!(sph_bessel_j(2, 0.0), 0.0);
    }

    #[test]
    fn j0_at_one() {
        assert_abs_diff_eq!(sph_bessel_j(0, 1.0), 0.841_470_984_807_896_5, epsilon = 1e-15);
    }

    #[test]
    fn h0_closed_form() {
        let h = sph_hankel_h(0, 1.0).unwrap();
        assert_abs_diff_eq!(h.re, 0.841_470_984_807_896_5, epsilon = 1e-15);
        assert_abs_diff_eq!(h.im, -0.540_302_305_868_139_8, epsilon = 1e-15);
        let h = sph_hankel_h(0, FRAC_PI_2).unwrap();
        assert_abs_diff_eq!(h.im, 0.0, epsilon = 1e-16);
    }

    #[test]
    fn h1_against_series_oracle() {
        let x = 1.0;
        let (s, c) = (sin_series(x), cos_series(x));
        let j1 = s / (x * x) - c / x;
        let y1 = -c / (x * x) - s / x;
        let h = sph_hankel_h(1, x).unwrap();
        assert_abs_diff_eq!(h.re, j1, epsilon = 1e-14);
        assert_abs_diff_eq!(h.im, y1, epsilon = 1e-14);
    }

    #[test]
    fn hankel_singular_at_zero() {
        assert!(sph_hankel_h(0, 0.0).is_err());
        assert!(sph_bessel_y(3, 0.0).is_err());
    }

    #[test]
    fn branches_agree_at_boundaries() {
        // series / Miller / upward must join continuously
        for n in 0..=12 {
            for &x in &[SERIES_LIMIT * 0.999, SERIES_LIMIT * 1.001] {
                let a = j_series(n, x);
                let b = j_miller(n, x);
                assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300), "n={n} x={x}");
            }
            let x = n as f64 + 0.5;
            if n > 0 {
                let up = sph_bessel_j(n, x);
                let mi = j_miller(n, x);
                assert!((up - mi).abs() < 1e-12, "n={n}");
            }
        }
    }

    #[test]
    fn small_argument_asymptotics() {
        // j_n(x) ~ x^n / (2n+1)!!
        let x = 1e-4;
        assert_abs_diff_eq!(sph_bessel_j(3, x) / (x * x * x / 105.0), 1.0, epsilon = 1e-8);
    }

    #[test]
    fn wronskian() {
        for n in 0..=10 {
            let mut x: f64 = 0.1;
            while x <= 50.0 {
                let w = sph_bessel_j(n, x) * sph_bessel_y_deriv(n, x).unwrap()
                    - sph_bessel_j_deriv(n, x) * sph_bessel_y(n, x).unwrap();
                let expect = 1.0 / (x * x);
                assert!(
                    (w - expect).abs() <= 1e-10 * expect.max(1.0),
                    "n={n} x={x} w={w} expect={expect}"
                );
                x *= 1.13;
            }
        }
    }

    #[test]
    fn open_mode_strength_is_bessel() {
        let b = mode_strength(0, 1.0, ArrayKind::Open).unwrap();
        assert_abs_diff_eq!(b.re, 0.841_470_984_807_896_5, epsilon = 1e-15);
        assert_eq!(mode_strength(3, 0.0, ArrayKind::Open).unwrap().norm(), 0.0);
    }

    #[test]
    fn rigid_mode_strength_has_no_null() {
        assert!(sph_bessel_j(0, PI).abs() < 1e-15);
        let b = mode_strength(0, PI, ArrayKind::Rigid).unwrap();
        assert!(b.norm() > 0.1, "|b_0(π)| = {}", b.norm());
        assert!(mode_strength(0, 0.0, ArrayKind::Rigid).is_err());
    }

    #[test]
    fn rigid_mode_strength_wronskian_form() {
        // b_n = i / ((kr)^2 h'_n(kr)) for the rigid sphere
        for n in 0..=4 {
            for &x in &[0.3, 1.0, 2.5, 4.0] {
                let b = mode_strength(n, x, ArrayKind::Rigid).unwrap();
                let alt = Complex64::new(0.0, 1.0) / (sph_hankel_h_deriv(n, x).unwrap() * x * x);
                assert!((b - alt).norm() < 1e-12 * alt.norm().max(1.0), "n={n} x={x}");
            }
        }
    }
}
