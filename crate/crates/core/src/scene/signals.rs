//! Source signal generators.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TARGET_RMS: f64 = 0.1;

/// What a source emits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SourceSignal {
    /// Explicit samples at a given rate.
    Samples { data: Vec<f64>, sample_rate: f64 },
    /// Gaussian white noise of the given duration in seconds.
    WhiteNoise { duration: f64 },
    /// Synthetic syllabic signal: voiced harmonic bursts with formant
    /// shaping and unvoiced noise bursts, separated by pauses. Sparse in
    /// time-frequency like running speech.
    SpeechLike { duration: f64 },
}

impl SourceSignal {
    /// Materialize the signal at `sample_rate`, drawing randomness from `rng`.
    pub fn render<R: Rng + ?Sized>(&self, sample_rate: f64, rng: &mut R) -> Result<Vec<f64>> {
        match self {
            SourceSignal::Samples { data, sample_rate: sr } => {
                if (sr - sample_rate).abs() > 1e-9 {
                    return Err(Error::ConfigMismatch(format!(
                        "source sampled at {sr} Hz, scene runs at {sample_rate} Hz"
                    )));
                }
                Ok(data.clone())
            }
            SourceSignal::WhiteNoise { duration } => {
                let len = sample_count(*duration, sample_rate)?;
                Ok((0..len)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(rng);
                        TARGET_RMS * z
                    })
                    .collect())
            }
            SourceSignal::SpeechLike { duration } => {
                let len = sample_count(*duration, sample_rate)?;
                Ok(speech_like(len, sample_rate, rng))
            }
        }
    }
}

fn sample_count(duration: f64, sample_rate: f64) -> Result<usize> {
    if !(duration > 0.0) {
        return Err(Error::InvalidArgument(format!("duration {duration} must be positive")));
    }
    Ok((duration * sample_rate).round() as usize)
}

fn speech_like<R: Rng + ?Sized>(len: usize, fs: f64, rng: &mut R) -> Vec<f64> {
    let mut out = vec![0.0; len];
    let nyquist = fs / 2.0;
    let mut cursor = (rng.random_range(0.0..0.15) * fs) as usize;
    while cursor < len {
        let dur = (rng.random_range(0.08..0.35) * fs) as usize;
        let end = (cursor + dur).min(len);
        let level = rng.random_range(0.3..1.0);
        if rng.random_bool(0.8) {
            let f0_start: f64 = rng.random_range(90.0..260.0);
            let f0_end = f0_start * rng.random_range(0.8..1.2);
            let formants = [
                (rng.random_range(300.0..900.0), rng.random_range(80.0..160.0)),
                (rng.random_range(900.0..2500.0), rng.random_range(100.0..220.0)),
                (rng.random_range(2200.0..3600.0), rng.random_range(150.0..300.0)),
            ];
            let max_h = (0.95 * nyquist / f0_start.min(f0_end)).floor() as usize;
            let amps: Vec<f64> = (1..=max_h)
                .map(|h| {
                    let f = h as f64 * 0.5 * (f0_start + f0_end);
                    let shape: f64 = formants
                        .iter()
                        .map(|(fc, bw)| (-0.5 * ((f - fc) / bw).powi(2)).exp())
                        .sum();
                    (0.05 + shape) / (h as f64).sqrt()
                })
                .collect();
            let phases: Vec<f64> = (0..max_h).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
            let mut base_phase = 0.0;
            for i in cursor..end {
                let frac = (i - cursor) as f64 / dur as f64;
                let f0 = f0_start + (f0_end - f0_start) * frac;
                base_phase += 2.0 * PI * f0 / fs;
                let env = (PI * frac).sin().powi(2);
                let mut s = 0.0;
                for (h, (a, p)) in amps.iter().zip(&phases).enumerate() {
                    if (h + 1) as f64 * f0 < nyquist {
                        s += a * ((h + 1) as f64 * base_phase + p).sin();
                    }
                }
                out[i] += level * env * s;
            }
        } else {
            let mut prev = 0.0;
            for i in cursor..end {
                let frac = (i - cursor) as f64 / dur as f64;
                let env = (PI * frac).sin().powi(2);
                let w: f64 = StandardNormal.sample(rng);
                // first difference tilts the burst toward high frequencies
                out[i] += 0.5 * level * env * (w - prev);
                prev = w;
            }
        }
        cursor = end + (rng.random_range(0.03..0.2) * fs) as usize;
    }
    let rms = (out.iter().map(|x| x * x).sum::<f64>() / len.max(1) as f64).sqrt();
    if rms > 0.0 {
        out.iter_mut().for_each(|x| *x *= TARGET_RMS / rms);
    }
    out
}
