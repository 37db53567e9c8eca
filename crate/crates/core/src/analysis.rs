//! Sound-field coefficients from microphone spectra.
//!
//! Per bin, the coefficients are a least-squares spherical-harmonic fit of
//! the capsule pressures at the array order, divided by the mode strength:
//!
//! ```text
//! α_nm(τ,k) = (1/b_n(kr)) Σ_q [Y⁺]_{nm,q} P_q(τ,k)
//! ```
//!
//! where `Y⁺` is the pseudo-inverse of the `Q × (N_array+1)²` harmonic
//! matrix. On a geometry with exact uniform quadrature this is the plain
//! `(4π/Q) Σ_q P_q Y*_nm(x̂_q)` sum. Only modes up to the bin's effective
//! order are kept; the rest are zero.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scene::ArrayGeometry;
use crate::sh::{mode_count, mode_strength, ArrayKind, ModeIndex};
use crate::stft::{Spectrogram, StftConfig};

/// Open-array modes whose strength falls below this fraction of the
/// strongest mode at the same bin are dropped.
const RELIABILITY_THRESHOLD: f64 = 1e-2;
const FIT_TOLERANCE: f64 = 1e-10;

/// `min(⌈kr⌉, N_array)`, at least 1.
pub fn effective_order(k: f64, geom: &ArrayGeometry) -> usize {
    capped_order(k * geom.radius, geom.order)
}

fn capped_order(kr: f64, cap: usize) -> usize {
    (kr.ceil() as usize).max(1).min(cap)
}

/// Coefficients of every bin for one STFT frame.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientFrame {
    pub tau: usize,
    /// Modes per bin, `(N+1)²` for the analyzer order `N`.
    pub modes: usize,
    /// Row-major `bins × modes`, mode-major within a bin.
    pub coeffs: Vec<Complex64>,
    /// Highest valid order at each bin; higher modes are zero.
    pub order_per_bin: Vec<usize>,
}

impl CoefficientFrame {
    pub fn zeros(tau: usize, order_per_bin: Vec<usize>, order: usize) -> Self {
        let modes = mode_count(order);
        Self {
            tau,
            modes,
            coeffs: vec![Complex64::new(0.0, 0.0); modes * order_per_bin.len()],
            order_per_bin,
        }
    }

    pub fn n_bins(&self) -> usize {
        self.order_per_bin.len()
    }

    pub fn bin(&self, k: usize) -> &[Complex64] {
        &self.coeffs[k * self.modes..(k + 1) * self.modes]
    }

    pub fn bin_mut(&mut self, k: usize) -> &mut [Complex64] {
        &mut self.coeffs[k * self.modes..(k + 1) * self.modes]
    }
}

#[derive(Debug, Clone)]
struct BinPlan {
    order: usize,
    /// `1/b_n` for `n <= order`.
    inv_strength: Vec<Complex64>,
}

/// Precomputed extraction for one geometry, framing and order cap.
#[derive(Debug, Clone)]
pub struct SphericalAnalyzer {
    order: usize,
    n_mics: usize,
    /// `(N_array+1)² × Q` least-squares fit, row-major.
    fit: Vec<Complex64>,
    bins: Vec<BinPlan>,
}

impl SphericalAnalyzer {
    /// Analyzer keeping modes up to `order` (at most the array order).
    pub fn new(geom: &ArrayGeometry, cfg: &StftConfig, order: usize) -> Result<Self> {
        geom.validate()?;
        cfg.validate()?;
        if order > geom.order {
            return Err(Error::InvalidArgument(format!(
                "analysis order {order} exceeds array order {}",
                geom.order
            )));
        }
        let q = geom.n_mics();
        let fit_modes = mode_count(geom.order);
        let rows = geom.harmonic_matrix(geom.order);
        let y = DMatrix::from_fn(q, fit_modes, |i, j| rows[i][j]);
        let svd = y.svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if !(smin > FIT_TOLERANCE * smax) {
            return Err(Error::Singular(format!(
                "microphone layout cannot resolve order {} (singular values {smin:e} / {smax:e})",
                geom.order
            )));
        }
        let pinv = svd
            .pseudo_inverse(FIT_TOLERANCE * smax)
            .map_err(|e| Error::Numerical(e.to_string()))?;
        let fit = (0..fit_modes)
            .flat_map(|i| (0..q).map(move |j| (i, j)))
            .map(|(i, j)| pinv[(i, j)])
            .collect();

        let bins = (0..cfg.n_bins())
            .map(|k| bin_plan(cfg.bin_wavenumber(k) * geom.radius, order, geom.kind))
            .collect::<Result<_>>()?;
        Ok(Self {
            order,
            n_mics: q,
            fit,
            bins,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn n_bins(&self) -> usize {
        self.bins.len()
    }

    pub fn order_per_bin(&self) -> Vec<usize> {
        self.bins.iter().map(|b| b.order).collect()
    }

    /// Coefficients of one bin from the `Q` capsule pressures, written to `out`
    /// (length `(N+1)²`).
    pub fn extract_bin(&self, k: usize, pressures: &[Complex64], out: &mut [Complex64]) {
        let plan = &self.bins[k];
        out.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        for idx in ModeIndex::up_to(plan.order) {
            let i = idx.linear();
            let row = &self.fit[i * self.n_mics..(i + 1) * self.n_mics];
            let s: Complex64 = row.iter().zip(pressures).map(|(a, p)| a * p).sum();
            out[i] = s * plan.inv_strength[idx.n()];
        }
    }

    /// Coefficients of every frame.
    pub fn extract(&self, mic_spectra: &[Spectrogram]) -> Result<Vec<CoefficientFrame>> {
        if mic_spectra.len() != self.n_mics {
            return Err(Error::DimensionMismatch(format!(
                "{} spectrograms for a {}-microphone array",
                mic_spectra.len(),
                self.n_mics
            )));
        }
        let first = &mic_spectra[0];
        if first.n_bins() != self.bins.len() {
            return Err(Error::ConfigMismatch(format!(
                "spectra have {} bins, analyzer expects {}",
                first.n_bins(),
                self.bins.len()
            )));
        }
        if mic_spectra.iter().any(|s| !s.same_framing(first)) {
            return Err(Error::ConfigMismatch("microphone spectra differ in framing".into()));
        }
        let orders = self.order_per_bin();
        Ok((0..first.n_frames())
            .into_par_iter()
            .map(|t| {
                let mut frame = CoefficientFrame::zeros(t, orders.clone(), self.order);
                let mut pressures = vec![Complex64::new(0.0, 0.0); self.n_mics];
                for k in 0..self.bins.len() {
                    for (p, s) in pressures.iter_mut().zip(mic_spectra) {
                        *p = s.get(t, k);
                    }
                    self.extract_bin(k, &pressures, frame.bin_mut(k));
                }
                frame
            })
            .collect())
    }
}

fn bin_plan(kr: f64, cap: usize, kind: ArrayKind) -> Result<BinPlan> {
    if kr == 0.0 {
        // only the monopole has a finite, nonzero response at DC
        return Ok(BinPlan {
            order: 0,
            inv_strength: vec![Complex64::new(1.0, 0.0)],
        });
    }
    let order = capped_order(kr, cap);
    let b: Vec<Complex64> = (0..=order).map(|n| mode_strength(n, kr, kind)).collect::<Result<_>>()?;
    let mut usable = order;
    if kind == ArrayKind::Open {
        let peak = b.iter().map(|v| v.norm()).fold(0.0, f64::max);
        if let Some(n) = b.iter().position(|v| v.norm() < RELIABILITY_THRESHOLD * peak) {
            usable = n.saturating_sub(1);
        }
    }
    Ok(BinPlan {
        order: usable,
        inv_strength: b[..=usable].iter().map(|v| v.inv()).collect(),
    })
}

/// Extract coefficients at the full array order.
pub fn extract_coefficients(
    mic_spectra: &[Spectrogram],
    geom: &ArrayGeometry,
    cfg: &StftConfig,
) -> Result<Vec<CoefficientFrame>> {
    SphericalAnalyzer::new(geom, cfg, geom.order)?.extract(mic_spectra)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::scene::plane_wave_pressure;
    use crate::sh::{i_pow, sph_harmonics_upto, SphericalDirection};

    fn open_geometry() -> ArrayGeometry {
        ArrayGeometry {
            kind: ArrayKind::Open,
            ..ArrayGeometry::default()
        }
    }

    fn spectra_from_bins(cfg: &StftConfig, n_mics: usize, per_bin: impl Fn(usize) -> Vec<Complex64>) -> Vec<Spectrogram> {
        let mut out: Vec<Spectrogram> = (0..n_mics).map(|_| Spectrogram::zeros(*cfg, 1, 0)).collect();
        for k in 0..cfg.n_bins() {
            for (q, p) in per_bin(k).into_iter().enumerate() {
                out[q].set(0, k, p);
            }
        }
        out
    }

    #[test]
    fn effective_order_examples() {
        let geom = ArrayGeometry::default();
        let k = |kr: f64| kr / geom.radius;
        assert_eq!(effective_order(k(3.2), &geom), 4);
        assert_eq!(effective_order(k(9.0), &geom), 4);
        assert_eq!(effective_order(k(0.3), &geom), 1);
        assert_eq!(effective_order(0.0, &geom), 1);
    }

    #[test]
    fn zero_spectra_give_zero_coefficients() {
        let geom = ArrayGeometry::default();
        let cfg = StftConfig::default();
        let spectra = spectra_from_bins(&cfg, 32, |_| vec![Complex64::new(0.0, 0.0); 32]);
        let frames = extract_coefficients(&spectra, &geom, &cfg).unwrap();
        assert!(frames[0].coeffs.iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn open_plane_wave_coefficients() {
        let geom = open_geometry();
        let cfg = StftConfig::default();
        let dir = SphericalDirection::from_degrees(70.0, 200.0).unwrap();
        let spectra = spectra_from_bins(&cfg, 32, |k| plane_wave_pressure(&dir, &geom, cfg.bin_wavenumber(k)).unwrap());
        let frames = extract_coefficients(&spectra, &geom, &cfg).unwrap();
        let y = sph_harmonics_upto(4, &dir);
        for k in 1..cfg.n_bins() {
            let order = frames[0].order_per_bin[k];
            for idx in ModeIndex::up_to(order) {
                let expect = 4.0 * PI * i_pow(idx.n() as i64) * y[idx.linear()].conj();
                let got = frames[0].bin(k)[idx.linear()];
                if expect.norm() > 1e-9 {
                    assert!((got - expect).norm() / expect.norm() < 0.02, "bin {k} {idx:?}");
                }
            }
        }
    }

    #[test]
    fn extraction_is_linear() {
        let geom = ArrayGeometry::default();
        let cfg = StftConfig::default();
        let a = SphericalDirection::from_degrees(90.0, 0.0).unwrap();
        let b = SphericalDirection::from_degrees(90.0, 180.0).unwrap();
        let pa = |k| plane_wave_pressure(&a, &geom, cfg.bin_wavenumber(k)).unwrap();
        let pb = |k| plane_wave_pressure(&b, &geom, cfg.bin_wavenumber(k)).unwrap();
        let fa = extract_coefficients(&spectra_from_bins(&cfg, 32, pa), &geom, &cfg).unwrap();
        let fb = extract_coefficients(&spectra_from_bins(&cfg, 32, pb), &geom, &cfg).unwrap();
        let sum = |k| pa(k).iter().zip(pb(k)).map(|(x, y)| x + y).collect();
        let fs = extract_coefficients(&spectra_from_bins(&cfg, 32, sum), &geom, &cfg).unwrap();
        for i in 0..fs[0].coeffs.len() {
            let d = fs[0].coeffs[i] - fa[0].coeffs[i] - fb[0].coeffs[i];
            assert!(d.norm() < 1e-10 * (1.0 + fs[0].coeffs[i].norm()));
        }
    }

    #[test]
    fn synthesized_field_round_trip() {
        // pressures from known coefficients up to the array order; the fit is exact
        let geom = ArrayGeometry::default();
        let cfg = StftConfig::default();
        let analyzer = SphericalAnalyzer::new(&geom, &cfg, 4).unwrap();
        let mics = geom.harmonic_matrix(4);
        for k in [40usize, 90, 128] {
            let kr = cfg.bin_wavenumber(k) * geom.radius;
            let order = analyzer.order_per_bin()[k];
            let alpha: Vec<Complex64> = (0..25)
                .map(|i| {
                    let n = ModeIndex::from_linear(i).n();
                    if n <= order {
                        Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 1.3).cos())
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                })
                .collect();
            let b: Vec<Complex64> = (0..=4).map(|n| mode_strength(n, kr, geom.kind).unwrap()).collect();
            let p: Vec<Complex64> = mics
                .iter()
                .map(|row| (0..25).map(|i| alpha[i] * b[ModeIndex::from_linear(i).n()] * row[i]).sum())
                .collect();
            let mut out = vec![Complex64::new(0.0, 0.0); 25];
            analyzer.extract_bin(k, &p, &mut out);
            let err: f64 = alpha.iter().zip(&out).map(|(a, o)| (a - o).norm_sqr()).sum::<f64>().sqrt();
            let norm: f64 = alpha.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
            assert!(err / norm < 1e-10, "bin {k}: {}", err / norm);
        }
    }

    #[test]
    fn rigid_strength_bounded_in_band() {
        let geom = ArrayGeometry::default();
        let cfg = StftConfig::default();
        for k in 1..cfg.n_bins() {
            let kr = cfg.bin_wavenumber(k) * geom.radius;
            for n in 0..=effective_order(cfg.bin_wavenumber(k), &geom) {
                assert!(mode_strength(n, kr, ArrayKind::Rigid).unwrap().norm() > 1e-3, "bin {k} n {n}");
            }
        }
    }

    #[test]
    fn dc_keeps_only_monopole() {
        let geom = ArrayGeometry::default();
        let analyzer = SphericalAnalyzer::new(&geom, &StftConfig::default(), 4).unwrap();
        assert_eq!(analyzer.order_per_bin()[0], 0);
        assert_eq!(analyzer.order_per_bin()[1], 1);
    }

    #[test]
    fn channel_mismatch_rejected() {
        let geom = ArrayGeometry::default();
        let cfg = StftConfig::default();
        let spectra = spectra_from_bins(&cfg, 31, |_| vec![Complex64::new(1.0, 0.0); 31]);
        assert!(matches!(
            extract_coefficients(&spectra, &geom, &cfg),
            Err(Error::DimensionMismatch(_))
        ));
    }
}
