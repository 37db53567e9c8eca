use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A direction on the unit sphere: colatitude `theta` in `[0, π]` and
/// azimuth `phi` in `[0, 2π)`, both in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphericalDirection {
    theta: f64,
    phi: f64,
}

impl SphericalDirection {
    pub fn new(theta: f64, phi: f64) -> Result<Self> {
        if !theta.is_finite() || !phi.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "non-finite direction ({theta}, {phi})"
            )));
        }
        // Tolerate round-off just outside the closed interval.
        let eps = 1e-12;
        if !(-eps..=PI + eps).contains(&theta) {
            return Err(Error::InvalidArgument(format!(
                "colatitude {theta} rad outside [0, π]"
            )));
        }
        Ok(Self {
            theta: theta.clamp(0.0, PI),
            phi: phi.rem_euclid(TAU),
        })
    }

    pub fn from_degrees(theta_deg: f64, phi_deg: f64) -> Result<Self> {
        Self::new(theta_deg.to_radians(), phi_deg.to_radians())
    }

    /// Direction of a (not necessarily unit) cartesian vector.
    pub fn from_cartesian(v: [f64; 3]) -> Result<Self> {
        let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if r == 0.0 || !r.is_finite() {
            return Err(Error::InvalidArgument("zero-length direction vector".into()));
        }
        let theta = (v[2] / r).clamp(-1.0, 1.0).acos();
        let phi = v[1].atan2(v[0]);
        Self::new(theta, phi)
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn to_degrees(&self) -> (f64, f64) {
        (self.theta.to_degrees(), self.phi.to_degrees())
    }

    pub fn unit_vector(&self) -> [f64; 3] {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        [st * cp, st * sp, ct]
    }

    /// Great-circle angle to another direction, in radians.
    pub fn angle_to(&self, other: &SphericalDirection) -> f64 {
        let a = self.unit_vector();
        let b = other.unit_vector();
        let cross = [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ];
        let sin = (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt();
        sin.atan2(a[0] * b[0] + a[1] * b[1] + a[2] * b[2])
    }
}

/// Order/degree pair `(n, m)` with `|m| <= n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModeIndex {
    n: usize,
    m: i64,
}

impl ModeIndex {
    pub fn new(n: usize, m: i64) -> Result<Self> {
        if m.unsigned_abs() as usize > n {
            return Err(Error::InvalidModeIndex { n, m });
        }
        Ok(Self { n, m })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> i64 {
        self.m
    }

    /// Position in mode-major ordering `(0,0), (1,-1), (1,0), (1,1), ...`.
    pub fn linear(&self) -> usize {
        ((self.n * self.n + self.n) as i64 + self.m) as usize
    }

    pub fn from_linear(idx: usize) -> Self {
        let mut n = (idx as f64).sqrt().floor() as usize;
        // guard against sqrt rounding
        while (n + 1) * (n + 1) <= idx {
            n += 1;
        }
        while n * n > idx {
            n -= 1;
        }
        let m = idx as i64 - (n * n + n) as i64;
        Self { n, m }
    }

    /// All indices up to and including `order`, mode-major.
    pub fn up_to(order: usize) -> impl Iterator<Item = ModeIndex> {
        (0..=order).flat_map(|n| (-(n as i64)..=n as i64).map(move |m| ModeIndex { n, m }))
    }
}

/// Number of modes `(N+1)^2` up to order `N`.
pub fn mode_count(order: usize) -> usize {
    (order + 1) * (order + 1)
}

/// Fully normalized associated Legendre values `sqrt((2n+1)/4π (n-m)!/(n+m)!) P_n^m(x)`
/// for `0 <= m <= n <= order`, Condon-Shortley phase included. Indexed `[n][m]`.
fn normalized_legendre(order: usize, x: f64) -> Vec<Vec<f64>> {
    let s = (1.0 - x * x).max(0.0).sqrt();
    let mut out = vec![Vec::new(); order + 1];
    for (n, row) in out.iter_mut().enumerate() {
        row.resize(n + 1, 0.0);
    }
    // Sectoral seeds: P̄_m^m = -sqrt((2m+1)/(2m)) s P̄_{m-1}^{m-1}.
    out[0][0] = (1.0 / (4.0 * PI)).sqrt();
    for m in 1..=order {
        let f = ((2 * m + 1) as f64 / (2 * m) as f64).sqrt();
        out[m][m] = -f * s * out[m - 1][m - 1];
    }
    for m in 0..order {
        out[m + 1][m] = ((2 * m + 3) as f64).sqrt() * x * out[m][m];
    }
    for m in 0..=order {
        for n in (m + 2)..=order {
            let nf = n as f64;
            let mf = m as f64;
            let a = ((4.0 * nf * nf - 1.0) / (nf * nf - mf * mf)).sqrt();
            let b = (((nf - 1.0) * (nf - 1.0) - mf * mf) / (4.0 * (nf - 1.0) * (nf - 1.0) - 1.0))
                .sqrt();
            out[n][m] = a * (x * out[n - 1][m] - b * out[n - 2][m]);
        }
    }
    out
}

/// Complex orthonormal spherical harmonic `Y_nm(θ, φ)`.
pub fn sph_harmonic(idx: ModeIndex, dir: &SphericalDirection) -> Complex64 {
    let table = normalized_legendre(idx.n, dir.theta.cos());
    harmonic_from_table(&table, idx.n, idx.m, dir.phi)
}

fn harmonic_from_table(table: &[Vec<f64>], n: usize, m: i64, phi: f64) -> Complex64 {
    let am = m.unsigned_abs() as usize;
    let p = table[n][am];
    let pos = Complex64::from_polar(p, am as f64 * phi);
    if m >= 0 {
        pos
    } else if am % 2 == 0 {
        pos.conj()
    } else {
        -pos.conj()
    }
}

/// All harmonics up to `order` at one direction, mode-major.
pub fn sph_harmonics_upto(order: usize, dir: &SphericalDirection) -> Vec<Complex64> {
    let table = normalized_legendre(order, dir.theta.cos());
    ModeIndex::up_to(order)
        .map(|idx| harmonic_from_table(&table, idx.n, idx.m, dir.phi))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zeroth_harmonic_is_constant() {
        let y = sph_harmonic(ModeIndex::new(0, 0).unwrap(), &SphericalDirection::new(1.1, 4.0).unwrap());
        assert_abs_diff_eq!(y.re, 0.282_094_791_773_878_1, epsilon = 1e-14);
        assert_abs_diff_eq!(y.im, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn polar_value_of_dipole() {
        let y = sph_harmonic(ModeIndex::new(1, 0).unwrap(), &SphericalDirection::new(0.0, 0.0).unwrap());
        assert_abs_diff_eq!(y.re, (3.0 / (4.0 * PI)).sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn condon_shortley_sign_on_equator() {
        // -sqrt(3/8π) sin θ e^{iφ} at θ = π/2, φ = 0
        let y = sph_harmonic(
            ModeIndex::new(1, 1).unwrap(),
            &SphericalDirection::new(PI / 2.0, 0.0).unwrap(),
        );
        assert_abs_diff_eq!(y.re, -0.345_494_149_471_335_5, epsilon = 1e-12);
        assert_abs_diff_eq!(y.im, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn closed_forms_order_two() {
        let dir = SphericalDirection::new(0.7, 1.3).unwrap();
        let (st, ct) = dir.theta().sin_cos();
        let y20 = sph_harmonic(ModeIndex::new(2, 0).unwrap(), &dir);
        assert_abs_diff_eq!(y20.re, (5.0 / (16.0 * PI)).sqrt() * (3.0 * ct * ct - 1.0), epsilon = 1e-13);
        let y21 = sph_harmonic(ModeIndex::new(2, 1).unwrap(), &dir);
        let expect = Complex64::from_polar(-(15.0 / (8.0 * PI)).sqrt() * st * ct, dir.phi());
        assert_abs_diff_eq!((y21 - expect).norm(), 0.0, epsilon = 1e-13);
        let y22 = sph_harmonic(ModeIndex::new(2, 2).unwrap(), &dir);
        let expect = Complex64::from_polar(0.25 * (15.0 / (2.0 * PI)).sqrt() * st * st, 2.0 * dir.phi());
        assert_abs_diff_eq!((y22 - expect).norm(), 0.0, epsilon = 1e-13);
    }

    #[test]
    fn negative_degree_symmetry() {
        let dir = SphericalDirection::new(2.1, 5.5).unwrap();
        for n in 0..=6usize {
            for m in 1..=n as i64 {
                let pos = sph_harmonic(ModeIndex::new(n, m).unwrap(), &dir);
                let neg = sph_harmonic(ModeIndex::new(n, -m).unwrap(), &dir);
                let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                assert_abs_diff_eq!((neg - sign * pos.conj()).norm(), 0.0, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn invalid_index_rejected() {
        assert!(ModeIndex::new(1, 2).is_err());
        assert!(ModeIndex::new(3, -4).is_err());
    }

    #[test]
    fn linear_index_round_trip() {
        for (i, idx) in ModeIndex::up_to(7).enumerate() {
            assert_eq!(idx.linear(), i);
            assert_eq!(ModeIndex::from_linear(i), idx);
        }
    }

    #[test]
    fn batch_matches_single() {
        let dir = SphericalDirection::new(0.3, 2.9).unwrap();
        let all = sph_harmonics_upto(5, &dir);
        for idx in ModeIndex::up_to(5) {
            assert_abs_diff_eq!((all[idx.linear()] - sph_harmonic(idx, &dir)).norm(), 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn direction_normalization() {
        let d = SphericalDirection::new(1.0, -0.5).unwrap();
        assert!((d.phi() - (TAU - 0.5)).abs() < 1e-15);
        assert!(SphericalDirection::new(3.5, 0.0).is_err());
        let c = SphericalDirection::from_cartesian([0.0, 1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(c.theta(), PI / 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.phi(), PI / 2.0, epsilon = 1e-15);
    }
}
