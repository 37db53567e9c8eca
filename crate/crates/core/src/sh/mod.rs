//! Special-function kernels for spherical-harmonic sound-field processing.
//!
//! Harmonics are the orthonormal complex family with the Condon-Shortley
//! phase,
//!
//! ```text
//! Y_nm(θ, φ) = sqrt((2n+1)/(4π) · (n-m)!/(n+m)!) · P_n^m(cos θ) · e^{imφ}
//! ```
//!
//! where `P_n^m` carries the `(-1)^m` factor. With this convention
//! `Y_{n,-m} = (-1)^m conj(Y_nm)` and the plane-wave expansion
//! `e^{ik ŷ·x} = Σ 4π i^n Y*_nm(ŷ) j_n(kr) Y_nm(x̂)` holds as written.

mod bessel;
mod harmonics;
mod wigner;

pub use bessel::{
    mode_strength, sph_bessel_j, sph_bessel_j_deriv, sph_bessel_y, sph_bessel_y_deriv,
    sph_hankel_h, sph_hankel_h_deriv, ArrayKind,
};
pub use harmonics::{mode_count, sph_harmonic, sph_harmonics_upto, ModeIndex, SphericalDirection};
pub use wigner::{triple_harmonic_integral, wigner3j};

/// `i^n` for integer `n` (negative allowed).
pub fn i_pow(n: i64) -> num_complex::Complex64 {
    use num_complex::Complex64;
    match n.rem_euclid(4) {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}
