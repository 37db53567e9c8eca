//! Wigner-3j symbols (Racah sum in log-factorial form) and the integral of
//! a product of three spherical harmonics.

use std::f64::consts::PI;
use std::sync::OnceLock;

const MAX_FACTORIAL: usize = 256;

fn ln_factorial(n: usize) -> f64 {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    let table = TABLE.get_or_init(|| {
        let mut t = vec![0.0; MAX_FACTORIAL + 1];
        for k in 1..=MAX_FACTORIAL {
            t[k] = t[k - 1] + (k as f64).ln();
        }
        t
    });
    table[n]
}

/// Wigner-3j symbol `(j1 j2 j3; m1 m2 m3)` for integer angular momenta.
///
/// Selection-rule violations (triangle inequality, `m1+m2+m3 != 0`,
/// `|m_i| > j_i`) give 0.
pub fn wigner3j(j1: usize, j2: usize, j3: usize, m1: i64, m2: i64, m3: i64) -> f64 {
    let (ij1, ij2, ij3) = (j1 as i64, j2 as i64, j3 as i64);
    if m1 + m2 + m3 != 0 || m1.abs() > ij1 || m2.abs() > ij2 || m3.abs() > ij3 {
        return 0.0;
    }
    if ij3 < (ij1 - ij2).abs() || ij3 > ij1 + ij2 {
        return 0.0;
    }
    let big_j = j1 + j2 + j3;
    assert!(big_j < MAX_FACTORIAL, "wigner3j: angular momenta too large");
    if m1 == 0 && m2 == 0 && m3 == 0 && big_j % 2 == 1 {
        return 0.0;
    }

    let lf = |v: i64| ln_factorial(v as usize);
    let ln_delta = lf(ij1 + ij2 - ij3) + lf(ij1 - ij2 + ij3) + lf(-ij1 + ij2 + ij3)
        - lf(ij1 + ij2 + ij3 + 1);
    let ln_pref = 0.5
        * (ln_delta
            + lf(ij1 + m1)
            + lf(ij1 - m1)
            + lf(ij2 + m2)
            + lf(ij2 - m2)
            + lf(ij3 + m3)
            + lf(ij3 - m3));

    let k_min = 0.max(ij2 - ij3 - m1).max(ij1 - ij3 + m2);
    let k_max = (ij1 + ij2 - ij3).min(ij1 - m1).min(ij2 + m2);
    let mut sum = 0.0;
    for k in k_min..=k_max {
        let ln_den = lf(k)
            + lf(ij3 - ij2 + k + m1)
            + lf(ij3 - ij1 + k - m2)
            + lf(ij1 + ij2 - ij3 - k)
            + lf(ij1 - k - m1)
            + lf(ij2 - k + m2);
        let term = (ln_pref - ln_den).exp();
        if k % 2 == 0 {
            sum += term;
        } else {
            sum -= term;
        }
    }
    if (ij1 - ij2 - m3).rem_euclid(2) == 1 {
        -sum
    } else {
        sum
    }
}

/// `W = ∫ Y_vu(ŷ) Y*_nm(ŷ) Y_n'm'(ŷ) dŷ`, via
/// `(-1)^m sqrt((2v+1)(2n+1)(2n'+1)/4π) (v n n'; 0 0 0)(v n n'; u -m m')`.
pub fn triple_harmonic_integral(v: usize, n: usize, n_p: usize, u: i64, m: i64, m_p: i64) -> f64 {
    if (v + n + n_p) % 2 == 1 {
        return 0.0;
    }
    let w0 = wigner3j(v, n, n_p, 0, 0, 0);
    if w0 == 0.0 {
        return 0.0;
    }
    let wm = wigner3j(v, n, n_p, u, -m, m_p);
    let sign = if m.rem_euclid(2) == 1 { -1.0 } else { 1.0 };
    let norm = (((2 * v + 1) * (2 * n + 1) * (2 * n_p + 1)) as f64 / (4.0 * PI)).sqrt();
    sign * norm * w0 * wm
}
