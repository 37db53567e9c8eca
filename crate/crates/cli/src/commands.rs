use std::fs;
use std::path::Path;
use std::time::Instant;

use shpsd::estimator::PsdTrack;
use shpsd::metrics::{self, EvalReport, LogErrorOptions};
use shpsd::pipeline::{self, BenchConfig, EstimatorConfig};
use shpsd::scene::{render_scene, ArrayGeometry, RoomSpec};
use shpsd::separator::{beamform_all, wiener_separate, SeparationOutput};
use shpsd::sh::SphericalDirection;
use shpsd::stft::{Stft, StftConfig};

use crate::audio::{read_wav, write_wav};
use crate::config::{self, SceneConfig, StftSection};
use crate::error::{CliError, CliResult, WithPath};
use crate::tables;
use crate::{BenchArgs, EstimateArgs, EstimatorArgs, EvaluateArgs, SceneArgs, SeparateArgs, SimulateArgs, StftArgs};

/// Everything a recording needs to be processed.
struct Setup {
    geom: ArrayGeometry,
    stft: StftConfig,
    estimator: EstimatorConfig,
    dirs: Vec<SphericalDirection>,
}

fn stft_from(section: &StftSection, a: &StftArgs) -> CliResult<StftConfig> {
    config::stft_config(section, a.fft_size, a.hop, a.sample_rate)
}

fn estimator_from(base: EstimatorConfig, a: &EstimatorArgs) -> EstimatorConfig {
    EstimatorConfig {
        beta: a.beta.unwrap_or(base.beta),
        reverb_order: a.reverb_order.unwrap_or(base.reverb_order),
        order: a.order.unwrap_or(base.order),
        model: a.model.unwrap_or(base.model),
    }
}

fn setup(scene: &SceneArgs, stft: &StftArgs, est: &EstimatorArgs) -> CliResult<Setup> {
    let cfg = match (&scene.config, &scene.metadata) {
        (Some(p), _) => SceneConfig::from_file(p)?,
        (None, Some(p)) => config::scene_from_metadata(p)?,
        (None, None) => SceneConfig::default(),
    };
    let dirs = if scene.doas.is_empty() {
        cfg.directions()?
    } else {
        scene
            .doas
            .iter()
            .map(|&(t, p)| SphericalDirection::from_degrees(t, p))
            .collect::<shpsd::Result<_>>()?
    };
    if dirs.is_empty() {
        return Err(CliError::config("no source directions: pass --doa or a config listing sources"));
    }
    Ok(Setup {
        geom: cfg.geometry()?,
        stft: stft_from(&cfg.stft, stft)?,
        estimator: estimator_from(cfg.estimator, est),
        dirs,
    })
}

fn read_recording(path: &Path, s: &Setup) -> CliResult<Vec<Vec<f64>>> {
    let wav = read_wav(path)?;
    if wav.channels.len() != s.geom.n_mics() {
        return Err(CliError::io(
            path,
            format!("{} channels, array has {} microphones", wav.channels.len(), s.geom.n_mics()),
        ));
    }
    if wav.sample_rate != s.stft.sample_rate {
        return Err(CliError::io(
            path,
            format!("sampled at {} Hz, processing expects {} Hz", wav.sample_rate, s.stft.sample_rate),
        ));
    }
    Ok(wav.channels)
}

fn check_finite(track: &PsdTrack) -> CliResult<()> {
    let finite = (0..track.n_frames())
        .all(|t| (0..track.n_bins()).all(|k| track.phi(t, k).iter().all(|v| v.is_finite()) && track.gamma00(t, k).is_finite()));
    if finite {
        Ok(())
    } else {
        Err(CliError::Numerical("PSD estimates contain non-finite values".into()))
    }
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).at(dir)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).at(path)?;
    fs::write(path, text + "\n").at(path)
}

pub fn simulate(a: &SimulateArgs) -> CliResult<()> {
    let cfg = SceneConfig::from_file(&a.config)?;
    let stft = stft_from(&cfg.stft, &a.stft)?;
    let geom = cfg.geometry()?;
    let mut room = RoomSpec::from(&cfg.room);
    if let Some(t60) = a.t60 {
        room.t60 = t60;
    }
    let sources = cfg.source_specs()?;
    let rec = render_scene(&sources, &room, &geom, &stft, a.seed.unwrap_or(cfg.seed))?;

    create_dir(&a.out)?;
    write_wav(&a.out.join("mix.wav"), &rec.mic_signals, stft.sample_rate, a.bit_depth)?;
    for (l, stem) in rec.ground_truth.iter().enumerate() {
        write_wav(&a.out.join(format!("source_{}.wav", l + 1)), std::slice::from_ref(stem), stft.sample_rate, a.bit_depth)?;
    }
    write_json(&a.out.join("metadata.json"), &rec.metadata)?;
    println!(
        "wrote {} channels x {} samples ({:.2} s) and {} source stems to {}",
        rec.mic_signals.len(),
        rec.n_samples(),
        rec.n_samples() as f64 / stft.sample_rate,
        rec.ground_truth.len(),
        a.out.display()
    );
    Ok(())
}

pub fn estimate(a: &EstimateArgs) -> CliResult<()> {
    let s = setup(&a.scene, &a.stft, &a.estimator)?;
    let mics = read_recording(&a.input, &s)?;
    let start = Instant::now();
    let est = pipeline::estimate(&mics, &s.geom, &s.stft, &s.dirs, &s.estimator)?;
    let seconds = start.elapsed().as_secs_f64();
    check_finite(&est.track)?;

    tables::write_psd(&a.out, &est.track)?;
    if let Some(dir) = &a.spectrogram_dir {
        create_dir(dir)?;
        for l in 0..est.track.n_sources() {
            tables::write_spectrogram(&dir.join(format!("source_{}_psd.csv", l + 1)), &est.track, l, &s.stft)?;
        }
    }
    if let Some(p) = &a.reverb_out {
        tables::write_reverb_terms(p, &est.track)?;
    }
    if let Some(p) = &a.coefficients {
        tables::write_coefficients(p, &est.coefficients, &s.stft.bin_freqs())?;
    }
    println!(
        "{} sources, {} reverberant terms, {} frames x {} bins in {seconds:.2} s; max imaginary residue {:.3e}",
        est.track.n_sources(),
        est.track.n_reverb(),
        est.track.n_frames(),
        est.track.n_bins(),
        est.track.max_imag_residue()
    );
    Ok(())
}

fn separate_with_table(mics: &[Vec<f64>], s: &Setup, table: &Path) -> CliResult<SeparationOutput> {
    let track = tables::read_psd(table)?;
    if track.n_sources() != s.dirs.len() {
        return Err(CliError::io(
            table,
            format!("{} sources in table, {} directions given", track.n_sources(), s.dirs.len()),
        ));
    }
    let coeffs = pipeline::coefficients(mics, &s.geom, &s.stft, s.estimator.order)?;
    if track.n_frames() != coeffs.len() || track.bin_freqs() != s.stft.bin_freqs().as_slice() {
        return Err(CliError::io(
            table,
            format!(
                "{} frames x {} bins, recording gives {} x {}",
                track.n_frames(),
                track.n_bins(),
                coeffs.len(),
                s.stft.n_bins()
            ),
        ));
    }
    let z = beamform_all(&coeffs, &s.dirs, &s.stft, mics[0].len())?;
    Ok(wiener_separate(&z, &track, &Stft::new(s.stft)?)?)
}

pub fn separate(a: &SeparateArgs) -> CliResult<()> {
    let s = setup(&a.scene, &a.stft, &a.estimator)?;
    let mics = read_recording(&a.input, &s)?;
    let sep = match &a.psd {
        Some(table) => separate_with_table(&mics, &s, table)?,
        None => {
            let (est, sep) = pipeline::process(&mics, &s.geom, &s.stft, &s.dirs, &s.estimator)?;
            check_finite(&est.track)?;
            sep
        }
    };

    create_dir(&a.out)?;
    let rate = s.stft.sample_rate;
    for (l, w) in sep.waveforms.iter().enumerate() {
        write_wav(&a.out.join(format!("separated_{}.wav", l + 1)), std::slice::from_ref(w), rate, a.bit_depth)?;
    }
    if a.beamformer {
        for (l, w) in sep.beamformer_waveforms.iter().enumerate() {
            write_wav(&a.out.join(format!("beamformer_{}.wav", l + 1)), std::slice::from_ref(w), rate, a.bit_depth)?;
        }
    }
    if let Some(dir) = &a.spectrogram_dir {
        create_dir(dir)?;
        for (l, spec) in sep.spectra.iter().enumerate() {
            let path = dir.join(format!("separated_{}_power.csv", l + 1));
            tables::write_power(&path, spec.n_frames(), &spec.bin_freqs(), &s.stft, |t, k| spec.get(t, k).norm_sqr())?;
        }
    }
    println!("wrote {} separated sources to {}", sep.waveforms.len(), a.out.display());
    Ok(())
}

/// Mono signals sharing one sample rate.
fn read_mono(paths: &[std::path::PathBuf]) -> CliResult<(Vec<Vec<f64>>, f64)> {
    let mut rate = None;
    let mut out = Vec::with_capacity(paths.len());
    for p in paths {
        let wav = read_wav(p)?;
        if wav.channels.len() != 1 {
            return Err(CliError::io(p, format!("expected a mono file, found {} channels", wav.channels.len())));
        }
        if *rate.get_or_insert(wav.sample_rate) != wav.sample_rate {
            return Err(CliError::io(p, "sample rate differs from the other files"));
        }
        out.extend(wav.channels);
    }
    Ok((out, rate.unwrap_or(StftConfig::default().sample_rate)))
}

pub fn evaluate(a: &EvaluateArgs) -> CliResult<()> {
    if a.estimates.len() != a.references.len() {
        return Err(CliError::config(format!(
            "{} estimates for {} references",
            a.estimates.len(),
            a.references.len()
        )));
    }
    let (estimates, rate) = read_mono(&a.estimates)?;
    let (references, ref_rate) = read_mono(&a.references)?;
    if rate != ref_rate {
        return Err(CliError::config(format!("estimates at {rate} Hz, references at {ref_rate} Hz")));
    }
    let mut report = EvalReport::from_sir(metrics::sir(&estimates, &references)?);
    if !a.beamformer.is_empty() {
        if a.beamformer.len() != a.references.len() {
            return Err(CliError::config(format!(
                "{} beamformer outputs for {} references",
                a.beamformer.len(),
                a.references.len()
            )));
        }
        let (bf, _) = read_mono(&a.beamformer)?;
        report = report.with_beamformer(metrics::sir(&bf, &references)?);
    }
    if let Some(table) = &a.psd {
        let track = tables::read_psd(table)?;
        let section = StftSection {
            sample_rate: Some(rate),
            ..StftSection::default()
        };
        let stft = stft_from(&section, &a.stft)?;
        let opts = LogErrorOptions {
            skip_frames: a.skip_frames,
            ..LogErrorOptions::default()
        };
        report.psd_log_error_db = pipeline::psd_errors(&track, &references, &stft, a.beta, &opts)?;
    }
    print!("{}", report.to_table());
    if let Some(p) = &a.report {
        write_json(p, &report)?;
    }
    Ok(())
}

pub fn bench(a: &BenchArgs) -> CliResult<()> {
    let mut cfg: BenchConfig = match &a.config {
        Some(p) => config::load(p)?,
        None => BenchConfig::default(),
    };
    cfg.runs = a.runs.unwrap_or(cfg.runs);
    cfg.seed = a.seed.unwrap_or(cfg.seed);
    cfg.duration = a.duration.unwrap_or(cfg.duration);
    if let Some(sig) = a.signal {
        cfg.signal = sig.into();
    }
    cfg.stft = StftConfig {
        fft_size: a.stft.fft_size.unwrap_or(cfg.stft.fft_size),
        hop: a.stft.hop.unwrap_or(cfg.stft.hop),
        sample_rate: a.stft.sample_rate.unwrap_or(cfg.stft.sample_rate),
    };
    cfg.estimator = estimator_from(cfg.estimator, &a.estimator);

    let start = Instant::now();
    let report = pipeline::run_bench(&cfg)?;
    let seconds = start.elapsed().as_secs_f64();
    print!("{}", report.to_table());
    println!("{} runs per cell, seed {}, {seconds:.1} s", report.runs, report.seed);
    if let Some(p) = &a.report {
        write_json(p, &report)?;
    }
    Ok(())
}
