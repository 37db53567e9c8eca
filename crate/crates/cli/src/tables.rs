//! CSV outputs: PSD tracks, per-source spectrograms, reverberant terms and
//! coefficient dumps. Floats are written in shortest round-trip form, so a
//! value read back is bit-identical to the one written.

use std::path::Path;

use num_complex::Complex64;
use shpsd::analysis::CoefficientFrame;
use shpsd::estimator::{PsdEstimate, PsdTrack};
use shpsd::sh::ModeIndex;
use shpsd::stft::StftConfig;

use crate::error::{CliError, CliResult, WithPath};

fn writer(path: &Path) -> CliResult<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).at(path)
}

/// `frame, bin_hz, phi_1..phi_L, gamma_00`, one row per frame and bin.
pub fn write_psd(path: &Path, track: &PsdTrack) -> CliResult<()> {
    let mut w = writer(path)?;
    let mut header = vec!["frame".to_string(), "bin_hz".to_string()];
    header.extend((1..=track.n_sources()).map(|l| format!("phi_{l}")));
    header.push("gamma_00".into());
    w.write_record(&header).at(path)?;
    for t in 0..track.n_frames() {
        for (k, f) in track.bin_freqs().iter().enumerate() {
            let mut row = vec![t.to_string(), f.to_string()];
            row.extend(track.phi(t, k).iter().map(f64::to_string));
            row.push(track.gamma00(t, k).to_string());
            w.write_record(&row).at(path)?;
        }
    }
    w.flush().at(path)
}

/// Read a table written by [`write_psd`] back into a track with `Γ_00` as
/// the only reverberant term.
pub fn read_psd(path: &Path) -> CliResult<PsdTrack> {
    let mut r = csv::Reader::from_path(path).at(path)?;
    let header = r.headers().at(path)?.clone();
    let n_sources = header.iter().filter(|h| h.starts_with("phi_")).count();
    let expected = n_sources + 3;
    if n_sources == 0 || header.len() != expected || &header[0] != "frame" || &header[expected - 1] != "gamma_00" {
        return Err(CliError::io(path, "expected columns frame, bin_hz, phi_1..phi_L, gamma_00"));
    }
    let mut rows: Vec<(usize, f64, Vec<f64>, f64)> = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.at(path)?;
        let bad = |what: &str| CliError::io(path, format!("row {}: bad {what}", line + 2));
        let frame = rec[0].parse::<usize>().map_err(|_| bad("frame"))?;
        let parse = |i: usize| rec[i].parse::<f64>().map_err(|_| bad(&header[i]));
        let phi = (2..2 + n_sources).map(parse).collect::<CliResult<Vec<_>>>()?;
        rows.push((frame, parse(1)?, phi, parse(expected - 1)?));
    }
    let bin_freqs: Vec<f64> = rows.iter().take_while(|r| r.0 == 0).map(|r| r.1).collect();
    let n_bins = bin_freqs.len();
    if n_bins == 0 || rows.len() % n_bins != 0 {
        return Err(CliError::io(path, "rows do not form a frames × bins grid"));
    }
    let n_frames = rows.len() / n_bins;
    let mut track = PsdTrack::zeros(n_frames, bin_freqs, n_sources, 1);
    for (i, (frame, freq, phi, g)) in rows.into_iter().enumerate() {
        let (t, k) = (i / n_bins, i % n_bins);
        if frame != t || freq != track.bin_freqs()[k] {
            return Err(CliError::io(path, format!("row {} out of frame/bin order", i + 2)));
        }
        let est = PsdEstimate {
            phi,
            gamma: vec![Complex64::new(g, 0.0)],
            imag_residue: 0.0,
        };
        track.set(t, k, &est)?;
    }
    Ok(track)
}

/// Long-format spectrogram of one source: `frame, time_s, bin_hz, psd`.
pub fn write_spectrogram(path: &Path, track: &PsdTrack, source: usize, cfg: &StftConfig) -> CliResult<()> {
    write_power(path, track.n_frames(), track.bin_freqs(), cfg, |t, k| track.phi(t, k)[source])
}

/// Long-format power grid `frame, time_s, bin_hz, psd` from any cell accessor.
pub fn write_power(
    path: &Path,
    n_frames: usize,
    bin_freqs: &[f64],
    cfg: &StftConfig,
    power: impl Fn(usize, usize) -> f64,
) -> CliResult<()> {
    let mut w = writer(path)?;
    w.write_record(["frame", "time_s", "bin_hz", "psd"]).at(path)?;
    for t in 0..n_frames {
        let time = (t * cfg.hop) as f64 / cfg.sample_rate;
        for (k, f) in bin_freqs.iter().enumerate() {
            w.write_record([t.to_string(), time.to_string(), f.to_string(), power(t, k).to_string()])
                .at(path)?;
        }
    }
    w.flush().at(path)
}

/// Every reverberant term: `frame, bin_hz` then real and imaginary parts of
/// each `Γ_vu`, columns named `gamma_v_u_re` and `gamma_v_u_im`.
pub fn write_reverb_terms(path: &Path, track: &PsdTrack) -> CliResult<()> {
    let mut w = writer(path)?;
    let mut header = vec!["frame".to_string(), "bin_hz".to_string()];
    for idx in ModeIndex::up_to(reverb_order(track.n_reverb())) {
        header.push(format!("gamma_{}_{}_re", idx.n(), idx.m()));
        header.push(format!("gamma_{}_{}_im", idx.n(), idx.m()));
    }
    w.write_record(&header).at(path)?;
    for t in 0..track.n_frames() {
        for (k, f) in track.bin_freqs().iter().enumerate() {
            let mut row = vec![t.to_string(), f.to_string()];
            for g in track.gamma(t, k) {
                row.push(g.re.to_string());
                row.push(g.im.to_string());
            }
            w.write_record(&row).at(path)?;
        }
    }
    w.flush().at(path)
}

fn reverb_order(n_reverb: usize) -> usize {
    (n_reverb as f64).sqrt().round() as usize - 1
}

/// Sound-field coefficients: `frame, bin_hz, n, m, re, im`, modes above a
/// bin's effective order omitted.
pub fn write_coefficients(path: &Path, frames: &[CoefficientFrame], bin_freqs: &[f64]) -> CliResult<()> {
    let mut w = writer(path)?;
    w.write_record(["frame", "bin_hz", "n", "m", "re", "im"]).at(path)?;
    for f in frames {
        for (k, hz) in bin_freqs.iter().enumerate() {
            for idx in ModeIndex::up_to(f.order_per_bin[k]) {
                let c = f.bin(k)[idx.linear()];
                w.write_record([
                    f.tau.to_string(),
                    hz.to_string(),
                    idx.n().to_string(),
                    idx.m().to_string(),
                    c.re.to_string(),
                    c.im.to_string(),
                ])
                .at(path)?;
            }
        }
    }
    w.flush().at(path)
}
