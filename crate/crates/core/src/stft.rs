//! Short-time Fourier analysis and weighted overlap-add synthesis.
//!
//! Framing: the signal is zero-padded by half a frame at both ends and
//! frames start every `hop` samples, so a signal of `len` samples yields
//! `1 + len / hop` frames (integer division). Synthesis divides the
//! overlap-added, window-weighted frames by the accumulated squared window,
//! which makes analysis followed by synthesis an identity for any window
//! whose squared overlap sum is nonzero.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StftConfig {
    pub fft_size: usize,
    pub hop: usize,
    pub sample_rate: f64,
}

impl Default for StftConfig {
    /// 256-point frames (32 ms at 8 kHz) with 50% overlap.
    fn default() -> Self {
        Self {
            fft_size: 256,
            hop: 128,
            sample_rate: 8000.0,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.fft_size < 2 || !self.fft_size.is_power_of_two() {
            return Err(Error::InvalidArgument(format!(
                "fft_size {} must be a power of two >= 2",
                self.fft_size
            )));
        }
        if self.hop == 0 || self.fft_size % self.hop != 0 {
            return Err(Error::InvalidArgument(format!(
                "hop {} must divide fft_size {}",
                self.hop, self.fft_size
            )));
        }
        if !(self.sample_rate > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "sample rate {} must be positive",
                self.sample_rate
            )));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Center frequency of bin `k` in Hz.
    pub fn bin_freq(&self, k: usize) -> f64 {
        k as f64 * self.sample_rate / self.fft_size as f64
    }

    /// Acoustic wavenumber `2πf/c` of bin `k`.
    pub fn bin_wavenumber(&self, k: usize) -> f64 {
        2.0 * PI * self.bin_freq(k) / crate::SPEED_OF_SOUND
    }

    /// Center frequencies of all bins.
    pub fn bin_freqs(&self) -> Vec<f64> {
        (0..self.n_bins()).map(|k| self.bin_freq(k)).collect()
    }

    pub fn frame_count(&self, len: usize) -> usize {
        1 + len / self.hop
    }

    /// Periodic Hann window.
    pub fn window(&self) -> Vec<f64> {
        let n = self.fft_size as f64;
        (0..self.fft_size)
            .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n).cos())
            .collect()
    }
}

/// One-sided STFT: `n_frames × n_bins` complex values, row-major by frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    data: Vec<Complex64>,
    n_frames: usize,
    n_bins: usize,
    config: StftConfig,
    signal_len: usize,
}

impl Spectrogram {
    pub fn zeros(config: StftConfig, n_frames: usize, signal_len: usize) -> Self {
        let n_bins = config.n_bins();
        Self {
            data: vec![Complex64::new(0.0, 0.0); n_frames * n_bins],
            n_frames,
            n_bins,
            config,
            signal_len,
        }
    }

    /// Spectrogram with the same framing as `self`, all zeros.
    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.config, self.n_frames, self.signal_len)
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    /// Length of the time signal this spectrogram represents.
    pub fn signal_len(&self) -> usize {
        self.signal_len
    }

    pub fn bin_freqs(&self) -> Vec<f64> {
        (0..self.n_bins).map(|k| self.config.bin_freq(k)).collect()
    }

    pub fn frame(&self, t: usize) -> &[Complex64] {
        &self.data[t * self.n_bins..(t + 1) * self.n_bins]
    }

    pub fn frame_mut(&mut self, t: usize) -> &mut [Complex64] {
        &mut self.data[t * self.n_bins..(t + 1) * self.n_bins]
    }

    pub fn get(&self, t: usize, k: usize) -> Complex64 {
        self.data[t * self.n_bins + k]
    }

    pub fn set(&mut self, t: usize, k: usize, v: Complex64) {
        self.data[t * self.n_bins + k] = v;
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn same_framing(&self, other: &Spectrogram) -> bool {
        self.n_frames == other.n_frames
            && self.n_bins == other.n_bins
            && self.config == other.config
            && self.signal_len == other.signal_len
    }
}

/// Reusable forward/inverse transform for one configuration.
pub struct Stft {
    config: StftConfig,
    window: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Stft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Stft").field("config", &self.config).finish()
    }
}

impl Stft {
    pub fn new(config: StftConfig) -> Result<Self> {
        config.validate()?;
        let mut planner = FftPlanner::new();
        Ok(Self {
            window: config.window(),
            forward: planner.plan_fft_forward(config.fft_size),
            inverse: planner.plan_fft_inverse(config.fft_size),
            config,
        })
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn analyze(&self, signal: &[f64]) -> Result<Spectrogram> {
        let n = self.config.fft_size;
        if signal.len() < n {
            return Err(Error::SignalTooShort {
                len: signal.len(),
                min: n,
            });
        }
        let pad = n / 2;
        let n_frames = self.config.frame_count(signal.len());
        let mut spec = Spectrogram::zeros(self.config, n_frames, signal.len());
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for t in 0..n_frames {
            let start = (t * self.config.hop) as isize - pad as isize;
            for (i, b) in buf.iter_mut().enumerate() {
                let idx = start + i as isize;
                let x = if idx >= 0 && (idx as usize) < signal.len() {
                    signal[idx as usize]
                } else {
                    0.0
                };
                *b = Complex64::new(x * self.window[i], 0.0);
            }
            self.forward.process(&mut buf);
            let nb = spec.n_bins;
            spec.frame_mut(t).copy_from_slice(&buf[..nb]);
        }
        Ok(spec)
    }

    pub fn synthesize(&self, spec: &Spectrogram) -> Result<Vec<f64>> {
        if spec.config != self.config || spec.n_bins != self.config.n_bins() {
            return Err(Error::ConfigMismatch(format!(
                "spectrogram framed with {:?}, synthesizer configured with {:?}",
                spec.config, self.config
            )));
        }
        let n = self.config.fft_size;
        let pad = n / 2;
        let hop = self.config.hop;
        let total = (spec.n_frames.saturating_sub(1)) * hop + n;
        let mut out = vec![0.0; total];
        let mut norm = vec![0.0; total];
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        let scale = 1.0 / n as f64;
        for t in 0..spec.n_frames {
            let frame = spec.frame(t);
            buf[..spec.n_bins].copy_from_slice(frame);
            for k in spec.n_bins..n {
                buf[k] = frame[n - k].conj();
            }
            // one-sided spectra of real frames: DC and Nyquist are real
            buf[0].im = 0.0;
            buf[n / 2].im = 0.0;
            self.inverse.process(&mut buf);
            let off = t * hop;
            for i in 0..n {
                let w = self.window[i];
                out[off + i] += w * buf[i].re * scale;
                norm[off + i] += w * w;
            }
        }
        Ok((0..spec.signal_len)
            .map(|i| {
                let j = i + pad;
                if j < total && norm[j] > 1e-12 {
                    out[j] / norm[j]
                } else {
                    0.0
                }
            })
            .collect())
    }
}

/// Convenience wrapper around [`Stft::analyze`].
pub fn analyze(signal: &[f64], cfg: &StftConfig) -> Result<Spectrogram> {
    Stft::new(*cfg)?.analyze(signal)
}

/// Convenience wrapper around [`Stft::synthesize`].
pub fn synthesize(spec: &Spectrogram, cfg: &StftConfig) -> Result<Vec<f64>> {
    Stft::new(*cfg)?.synthesize(spec)
}
