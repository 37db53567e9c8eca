//! Multichannel WAV input and output.

use std::path::Path;

use clap::ValueEnum;
use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{CliError, CliResult, WithPath};

#[derive(Debug, Clone, PartialEq)]
pub struct Wav {
    pub sample_rate: f64,
    /// One vector per channel, samples scaled to [-1, 1) for PCM input.
    pub channels: Vec<Vec<f64>>,
}

/// Sample encoding for written files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum BitDepth {
    Pcm16,
    Pcm24,
    #[default]
    Float32,
}

pub fn read_wav(path: &Path) -> CliResult<Wav> {
    let mut reader = WavReader::open(path).at(path)?;
    let spec = reader.spec();
    let n_ch = spec.channels as usize;
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()
            .at(path)?,
        (SampleFormat::Int, bits @ (8 | 16 | 24 | 32)) => {
            let scale = 1.0 / (1u64 << (bits - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| f64::from(v) * scale))
                .collect::<Result<_, _>>()
                .at(path)?
        }
        (fmt, bits) => {
            return Err(CliError::io(path, format!("unsupported sample format {fmt:?} at {bits} bits")));
        }
    };
    let mut channels = vec![Vec::with_capacity(interleaved.len() / n_ch.max(1)); n_ch];
    for frame in interleaved.chunks_exact(n_ch) {
        for (ch, &v) in channels.iter_mut().zip(frame) {
            ch.push(v);
        }
    }
    Ok(Wav {
        sample_rate: f64::from(spec.sample_rate),
        channels,
    })
}

pub fn write_wav(path: &Path, channels: &[Vec<f64>], sample_rate: f64, depth: BitDepth) -> CliResult<()> {
    let len = channels.first().map_or(0, Vec::len);
    if channels.is_empty() || channels.iter().any(|c| c.len() != len) {
        return Err(CliError::config(format!("{}: channels must be non-empty and equally long", path.display())));
    }
    if sample_rate.fract() != 0.0 || !(1.0..=f64::from(u32::MAX)).contains(&sample_rate) {
        return Err(CliError::config(format!("sample rate {sample_rate} cannot be stored in a WAV header")));
    }
    let (bits, format) = match depth {
        BitDepth::Pcm16 => (16, SampleFormat::Int),
        BitDepth::Pcm24 => (24, SampleFormat::Int),
        BitDepth::Float32 => (32, SampleFormat::Float),
    };
    let spec = WavSpec {
        channels: u16::try_from(channels.len()).map_err(|_| CliError::config("too many channels for WAV"))?,
        sample_rate: sample_rate as u32,
        bits_per_sample: bits,
        sample_format: format,
    };
    let mut writer = WavWriter::create(path, spec).at(path)?;
    for i in 0..len {
        for ch in channels {
            let v = ch[i];
            match depth {
                BitDepth::Float32 => writer.write_sample(v as f32),
                BitDepth::Pcm16 | BitDepth::Pcm24 => {
                    let scale = (1i64 << (bits - 1)) as f64;
                    writer.write_sample((v * scale).round().clamp(-scale, scale - 1.0) as i32)
                }
            }
            .at(path)?;
        }
    }
    writer.finalize().at(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_round_trip_is_f32_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let ch = vec![vec![0.1, -0.25, 1.0 / 3.0], vec![0.0, 0.5, -0.7]];
        write_wav(&path, &ch, 8000.0, BitDepth::Float32).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.sample_rate, 8000.0);
        for (a, b) in ch.iter().zip(&back.channels) {
            for (x, y) in a.iter().zip(b) {
                assert_eq!(*x as f32 as f64, *y);
            }
        }
    }

    #[test]
    fn pcm_depths_round_trip_within_one_step() {
        let dir = tempfile::tempdir().unwrap();
        for (depth, bits) in [(BitDepth::Pcm16, 16), (BitDepth::Pcm24, 24)] {
            let path = dir.path().join(format!("{bits}.wav"));
            let ch = vec![vec![0.3, -0.6, 0.999, -1.0]];
            write_wav(&path, &ch, 16000.0, depth).unwrap();
            let back = read_wav(&path).unwrap();
            let step = 1.0 / (1u64 << (bits - 1)) as f64;
            for (x, y) in ch[0].iter().zip(&back.channels[0]) {
                assert!((x - y).abs() <= step, "{bits} bits: {x} vs {y}");
            }
        }
    }

    #[test]
    fn ragged_channels_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let err = write_wav(&dir.path().join("x.wav"), &[vec![0.0; 3], vec![0.0; 2]], 8000.0, BitDepth::Float32);
        assert!(matches!(err, Err(CliError::Config(_))));
    }

    #[test]
    fn missing_file_is_config_error() {
        assert!(matches!(read_wav(Path::new("/nonexistent/x.wav")), Err(CliError::Config(_))));
    }
}
