//! Maximum-directivity beamforming with a PSD-driven Wiener post-filter.
//!
//! The beamformer steered at `ŷ_ℓ` weights every mode uniformly,
//!
//! ```text
//! Z_ℓ(τ,k) = Σ_nm i^{-n} / (N+1)² · α_nm(τ,k) Y_nm(ŷ_ℓ),
//! ```
//!
//! with `N` the bin's effective order, and has unit response toward `ŷ_ℓ`.
//! The post-filter scales it by `Φ_ℓ / (Σ_ℓ' Φ_ℓ' + Φ_r)` with the
//! reverberant power `Φ_r = Γ_00 / √(4π)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::analysis::CoefficientFrame;
use crate::error::{Error, Result};
use crate::estimator::{PsdEstimate, PsdTrack};
use crate::sh::{i_pow, mode_count, sph_harmonics_upto, ModeIndex, SphericalDirection};
use crate::stft::{Spectrogram, Stft, StftConfig};

/// Wiener denominators below this fraction of the frame's beamformer power
/// give zero gain.
const GAIN_GUARD: f64 = 1e-12;

/// Beamformer weights `i^{-n} Y_nm(ŷ) / (N_k+1)²` for every bin.
#[derive(Debug, Clone)]
pub struct Beamformer {
    weights: Vec<Vec<Complex64>>,
}

impl Beamformer {
    pub fn new(dir: &SphericalDirection, order_per_bin: &[usize]) -> Self {
        let top = order_per_bin.iter().copied().max().unwrap_or(0);
        let y = sph_harmonics_upto(top, dir);
        let weights = order_per_bin
            .iter()
            .map(|&order| {
                let norm = 1.0 / mode_count(order) as f64;
                ModeIndex::up_to(order)
                    .map(|idx| i_pow(-(idx.n() as i64)) * y[idx.linear()] * norm)
                    .collect()
            })
            .collect();
        Self { weights }
    }

    /// Output of every bin of one frame.
    pub fn apply(&self, frame: &CoefficientFrame) -> Result<Vec<Complex64>> {
        if frame.n_bins() != self.weights.len() {
            return Err(Error::DimensionMismatch(format!(
                "frame has {} bins, beamformer {}",
                frame.n_bins(),
                self.weights.len()
            )));
        }
        Ok(self
            .weights
            .iter()
            .enumerate()
            .map(|(k, w)| w.iter().zip(frame.bin(k)).map(|(a, b)| a * b).sum())
            .collect())
    }
}

/// Beamformer output per bin for one frame steered at `dir`.
pub fn beamform(frame: &CoefficientFrame, dir: &SphericalDirection) -> Result<Vec<Complex64>> {
    Beamformer::new(dir, &frame.order_per_bin).apply(frame)
}

/// Beamformer spectrograms for every direction over a coefficient sequence.
pub fn beamform_all(
    frames: &[CoefficientFrame],
    dirs: &[SphericalDirection],
    cfg: &StftConfig,
    signal_len: usize,
) -> Result<Vec<Spectrogram>> {
    let first = frames
        .first()
        .ok_or_else(|| Error::InvalidArgument("no coefficient frames".into()))?;
    if first.n_bins() != cfg.n_bins() {
        return Err(Error::ConfigMismatch(format!(
            "coefficients have {} bins, framing has {}",
            first.n_bins(),
            cfg.n_bins()
        )));
    }
    dirs.par_iter()
        .map(|d| {
            let bf = Beamformer::new(d, &first.order_per_bin);
            let mut out = Spectrogram::zeros(*cfg, frames.len(), signal_len);
            for (t, f) in frames.iter().enumerate() {
                out.frame_mut(t).copy_from_slice(&bf.apply(f)?);
            }
            Ok(out)
        })
        .collect()
}

/// `Φ_r = Γ_00 / √(4π)`, never negative.
pub fn reverberant_power(est: &PsdEstimate) -> f64 {
    reverberant_power_from_gamma00(est.gamma00())
}

pub fn reverberant_power_from_gamma00(gamma00: f64) -> f64 {
    (gamma00 / (4.0 * PI).sqrt()).max(0.0)
}

/// Wiener gains `Φ_ℓ / (Σ Φ + Φ_r)`; all zero when the denominator is at or
/// below `floor`.
pub fn wiener_gains(phi: &[f64], reverb: f64, floor: f64) -> Vec<f64> {
    let denom: f64 = phi.iter().map(|p| p.max(0.0)).sum::<f64>() + reverb.max(0.0);
    if !(denom > floor) {
        return vec![0.0; phi.len()];
    }
    phi.iter().map(|p| (p.max(0.0) / denom).clamp(0.0, 1.0)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeparationOutput {
    /// Post-filtered spectra `Ŝ_ℓ`.
    pub spectra: Vec<Spectrogram>,
    pub waveforms: Vec<Vec<f64>>,
    /// Beamformer outputs `Z_ℓ` before the post-filter.
    pub beamformer: Vec<Spectrogram>,
    pub beamformer_waveforms: Vec<Vec<f64>>,
}

/// Apply the post-filter frame by frame using the estimates of the same frame.
pub fn wiener_separate(z: &[Spectrogram], track: &PsdTrack, stft: &Stft) -> Result<SeparationOutput> {
    let l = z.len();
    if l == 0 || l != track.n_sources() {
        return Err(Error::DimensionMismatch(format!(
            "{l} beamformer outputs for {} estimated sources",
            track.n_sources()
        )));
    }
    let first = &z[0];
    if z.iter().any(|s| !s.same_framing(first)) {
        return Err(Error::ConfigMismatch("beamformer outputs differ in framing".into()));
    }
    if first.n_frames() != track.n_frames() || first.n_bins() != track.n_bins() {
        return Err(Error::DimensionMismatch(format!(
            "beamformer outputs are {}×{}, PSD track {}×{}",
            first.n_frames(),
            first.n_bins(),
            track.n_frames(),
            track.n_bins()
        )));
    }

    let mut spectra: Vec<Spectrogram> = z.iter().map(Spectrogram::zeros_like).collect();
    for t in 0..first.n_frames() {
        let power = z.iter().map(|s| s.frame(t).iter().map(|v| v.norm_sqr()).sum::<f64>()).sum::<f64>()
            / first.n_bins() as f64;
        let floor = GAIN_GUARD * power;
        for k in 0..first.n_bins() {
            let reverb = reverberant_power_from_gamma00(track.gamma00(t, k));
            let gains = wiener_gains(track.phi(t, k), reverb, floor);
            for (ell, g) in gains.iter().enumerate() {
                spectra[ell].set(t, k, z[ell].get(t, k) * *g);
            }
        }
    }
    let waveforms = spectra.par_iter().map(|s| stft.synthesize(s)).collect::<Result<_>>()?;
    let beamformer_waveforms = z.par_iter().map(|s| stft.synthesize(s)).collect::<Result<_>>()?;
    Ok(SeparationOutput {
        spectra,
        waveforms,
        beamformer: z.to_vec(),
        beamformer_waveforms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plane_wave_frame(dir: &SphericalDirection, order: usize) -> CoefficientFrame {
        let mut f = CoefficientFrame::zeros(0, vec![order], order);
        let y = sph_harmonics_upto(order, dir);
        for idx in ModeIndex::up_to(order) {
            f.bin_mut(0)[idx.linear()] = 4.0 * PI * i_pow(idx.n() as i64) * y[idx.linear()].conj();
        }
        f
    }

    #[test]
    fn distortionless_toward_steering_direction() {
        let dir = SphericalDirection::from_degrees(63.0, 301.0).unwrap();
        for order in 0..=4 {
            let z = beamform(&plane_wave_frame(&dir, order), &dir).unwrap();
            assert!((z[0] - Complex64::new(1.0, 0.0)).norm() < 1e-10, "order {order}: {}", z[0]);
        }
    }

    #[test]
    fn zero_input_zero_output() {
        let f = CoefficientFrame::zeros(0, vec![2, 4], 4);
        let z = beamform(&f, &SphericalDirection::from_degrees(10.0, 0.0).unwrap()).unwrap();
        assert!(z.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn orthogonal_steering_in_sidelobe() {
        let src = SphericalDirection::from_degrees(90.0, 0.0).unwrap();
        let look = SphericalDirection::from_degrees(90.0, 90.0).unwrap();
        let z = beamform(&plane_wave_frame(&src, 4), &look).unwrap();
        assert!(z[0].norm() < 0.2, "{}", z[0].norm());
    }

    #[test]
    fn reverberant_power_examples() {
        let est = |g: f64| PsdEstimate {
            phi: vec![],
            gamma: vec![Complex64::new(g, 0.0)],
            imag_residue: 0.0,
        };
        assert!((reverberant_power(&est((4.0 * PI).sqrt())) - 1.0).abs() < 1e-15);
        assert_eq!(reverberant_power(&est(0.0)), 0.0);
        let anechoic = PsdEstimate {
            phi: vec![1.0],
            gamma: vec![],
            imag_residue: 0.0,
        };
        assert_eq!(reverberant_power(&anechoic), 0.0);
    }

    #[test]
    fn gain_examples() {
        assert_eq!(wiener_gains(&[1.0, 0.0, 0.0, 0.0], 0.0, 0.0), vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(wiener_gains(&[2.0; 4], 0.0, 0.0), vec![0.25; 4]);
        assert_eq!(wiener_gains(&[1e-20, 0.0], 0.0, 1e-12), vec![0.0, 0.0]);
        let g = wiener_gains(&[1.0, 3.0], 4.0, 0.0);
        assert!((g[0] - 0.125).abs() < 1e-15 && (g[1] - 0.375).abs() < 1e-15);
    }

    #[test]
    fn post_filter_bounds_energy() {
        let cfg = StftConfig::default();
        let stft = Stft::new(cfg).unwrap();
        let mut z: Vec<Spectrogram> = (0..2).map(|_| Spectrogram::zeros(cfg, 12, 1408)).collect();
        let mut track = PsdTrack::zeros(12, cfg.bin_freqs(), 2, 1);
        for t in 0..12 {
            for k in 0..cfg.n_bins() {
                let x = (t * 7 + k) as f64;
                z[0].set(t, k, Complex64::new(x.sin(), x.cos()));
                z[1].set(t, k, Complex64::new((0.3 * x).cos(), 0.5));
                let est = PsdEstimate {
                    phi: vec![x.sin().abs(), (0.2 * x).cos().abs()],
                    gamma: vec![Complex64::new((0.1 * x).sin().abs(), 0.0)],
                    imag_residue: 0.0,
                };
                track.set(t, k, &est).unwrap();
            }
        }
        let out = wiener_separate(&z, &track, &stft).unwrap();
        for t in 0..12 {
            for k in 0..cfg.n_bins() {
                let before: f64 = z.iter().map(|s| s.get(t, k).norm_sqr()).sum();
                let after: f64 = out.spectra.iter().map(|s| s.get(t, k).norm_sqr()).sum();
                assert!(after <= before + 1e-15);
            }
        }
        assert_eq!(out.waveforms.len(), 2);
        assert_eq!(out.waveforms[0].len(), 1408);
    }

    #[test]
    fn source_count_mismatch_rejected() {
        let cfg = StftConfig::default();
        let z = vec![Spectrogram::zeros(cfg, 3, 256)];
        let track = PsdTrack::zeros(3, cfg.bin_freqs(), 2, 1);
        assert!(wiener_separate(&z, &track, &Stft::new(cfg).unwrap()).is_err());
    }
}
