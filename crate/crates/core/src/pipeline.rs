//! End-to-end processing: microphone signals to PSD tracks, separated
//! sources and scores, plus the batch experiment behind the SIR tables.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{CoefficientFrame, SphericalAnalyzer};
use crate::error::{Error, Result};
use crate::estimator::{estimate_track, PsdTrack, ReverbModel, TranslationMatrix};
use crate::metrics::{self, mean, psd_log_error, reference_psd, EvalReport, LogErrorOptions, PowerSpectrogram, RuntimeStats};
use crate::scene::{render_scene, ArrayGeometry, RoomSpec, SceneRecording, SourceSignal, SourceSpec};
use crate::separator::{beamform_all, wiener_separate, SeparationOutput};
use crate::sh::SphericalDirection;
use crate::stft::{Spectrogram, Stft, StftConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    /// EWMA smoothing factor.
    pub beta: f64,
    /// Reverberant SH order `V`.
    pub reverb_order: usize,
    /// Highest SH order used for estimation.
    pub order: usize,
    pub model: ReverbModel,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            beta: 0.4,
            reverb_order: 2,
            order: 4,
            model: ReverbModel::Full,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self, geom: &ArrayGeometry) -> Result<()> {
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::InvalidArgument(format!("beta {} outside [0, 1]", self.beta)));
        }
        if self.order == 0 || self.order > geom.order {
            return Err(Error::InvalidArgument(format!(
                "estimation order {} must lie in 1..={}",
                self.order, geom.order
            )));
        }
        Ok(())
    }
}

/// Intermediate and final products of the estimation stage.
#[derive(Debug, Clone)]
pub struct Estimation {
    pub coefficients: Vec<CoefficientFrame>,
    pub track: PsdTrack,
    pub matrix: TranslationMatrix,
    pub signal_len: usize,
}

/// Sound-field coefficients of multichannel time signals.
pub fn coefficients(
    mic_signals: &[Vec<f64>],
    geom: &ArrayGeometry,
    stft_cfg: &StftConfig,
    order: usize,
) -> Result<Vec<CoefficientFrame>> {
    if mic_signals.len() != geom.n_mics() {
        return Err(Error::DimensionMismatch(format!(
            "{} channels for a {}-microphone array",
            mic_signals.len(),
            geom.n_mics()
        )));
    }
    let len = mic_signals[0].len();
    if mic_signals.iter().any(|s| s.len() != len) {
        return Err(Error::DimensionMismatch("channels differ in length".into()));
    }
    let stft = Stft::new(*stft_cfg)?;
    let spectra: Vec<Spectrogram> = mic_signals.par_iter().map(|s| stft.analyze(s)).collect::<Result<_>>()?;
    SphericalAnalyzer::new(geom, stft_cfg, order)?.extract(&spectra)
}

/// PSD estimation from microphone signals and known source directions.
pub fn estimate(
    mic_signals: &[Vec<f64>],
    geom: &ArrayGeometry,
    stft_cfg: &StftConfig,
    dirs: &[SphericalDirection],
    cfg: &EstimatorConfig,
) -> Result<Estimation> {
    cfg.validate(geom)?;
    let matrix = TranslationMatrix::new(dirs, cfg.order, cfg.reverb_order)?;
    let coefficients = coefficients(mic_signals, geom, stft_cfg, cfg.order)?;
    let track = estimate_track(&coefficients, &matrix, cfg.beta, cfg.model, stft_cfg.bin_freqs())?;
    Ok(Estimation {
        coefficients,
        track,
        matrix,
        signal_len: mic_signals[0].len(),
    })
}

/// Beamform toward every source and apply the post-filter.
pub fn separate(est: &Estimation, stft_cfg: &StftConfig) -> Result<SeparationOutput> {
    let z = beamform_all(&est.coefficients, est.matrix.source_dirs(), stft_cfg, est.signal_len)?;
    wiener_separate(&z, &est.track, &Stft::new(*stft_cfg)?)
}

/// Estimation followed by separation.
pub fn process(
    mic_signals: &[Vec<f64>],
    geom: &ArrayGeometry,
    stft_cfg: &StftConfig,
    dirs: &[SphericalDirection],
    cfg: &EstimatorConfig,
) -> Result<(Estimation, SeparationOutput)> {
    let est = estimate(mic_signals, geom, stft_cfg, dirs, cfg)?;
    let sep = separate(&est, stft_cfg)?;
    Ok((est, sep))
}

/// Mean PSD log error of every source against its clean stem.
pub fn psd_errors(
    track: &PsdTrack,
    ground_truth: &[Vec<f64>],
    stft_cfg: &StftConfig,
    beta: f64,
    opts: &LogErrorOptions,
) -> Result<Vec<f64>> {
    if ground_truth.len() != track.n_sources() {
        return Err(Error::DimensionMismatch(format!(
            "{} stems for {} estimated sources",
            ground_truth.len(),
            track.n_sources()
        )));
    }
    let stft = Stft::new(*stft_cfg)?;
    ground_truth
        .iter()
        .enumerate()
        .map(|(l, stem)| {
            let reference = reference_psd(stem, &stft, beta)?;
            let est = PowerSpectrogram::new(track.n_frames(), track.n_bins(), track.source_psd(l))?;
            psd_log_error(&est, &reference, opts)
        })
        .collect()
}

/// SIR of the post-filtered and beamformer-only outputs against the stems.
pub fn evaluate(sep: &SeparationOutput, ground_truth: &[Vec<f64>]) -> Result<EvalReport> {
    let sir = metrics::sir(&sep.waveforms, ground_truth)?;
    let bf = metrics::sir(&sep.beamformer_waveforms, ground_truth)?;
    Ok(EvalReport::from_sir(sir).with_beamformer(bf))
}

/// Process a rendered scene and score it.
pub fn run_scene(rec: &SceneRecording, cfg: &EstimatorConfig) -> Result<(Estimation, SeparationOutput, EvalReport)> {
    let start = Instant::now();
    let stft_cfg = rec.metadata.stft;
    let dirs = rec.source_directions();
    let (est, sep) = process(&rec.mic_signals, &rec.metadata.geometry, &stft_cfg, &dirs, cfg)?;
    let seconds = start.elapsed().as_secs_f64();
    let mut report = if dirs.len() >= 2 {
        evaluate(&sep, &rec.ground_truth)?
    } else {
        EvalReport::from_sir(Vec::new())
    };
    report.psd_log_error_db = psd_errors(&est.track, &rec.ground_truth, &stft_cfg, cfg.beta, &LogErrorOptions::default())?;
    report.runtime = Some(RuntimeStats {
        seconds,
        frames: est.track.n_frames(),
        realtime_factor: seconds / (rec.n_samples() as f64 / stft_cfg.sample_rate),
    });
    Ok((est, sep, report))
}

/// Kind of signal the bench sources emit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchSignal {
    #[default]
    SpeechLike,
    WhiteNoise,
}

/// Batch experiment: seeded random scenes per (source count, t60) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub runs: usize,
    pub seed: u64,
    /// Seconds of audio per source.
    pub duration: f64,
    /// Common colatitude of all sources, degrees.
    pub colatitude_deg: f64,
    pub distance: f64,
    pub signal: BenchSignal,
    /// Source counts of the anechoic row.
    pub source_counts: Vec<usize>,
    /// Reverberation times of the reverberant row.
    pub t60s: Vec<f64>,
    /// Source count of the reverberant row.
    pub reverberant_sources: usize,
    pub room: RoomSpec,
    pub geometry: ArrayGeometry,
    pub stft: StftConfig,
    pub estimator: EstimatorConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            runs: 20,
            seed: 2019,
            duration: 4.0,
            colatitude_deg: 75.0,
            distance: 2.0,
            signal: BenchSignal::SpeechLike,
            source_counts: vec![4, 6, 8],
            t60s: vec![0.2, 0.3, 0.5],
            reverberant_sources: 4,
            room: RoomSpec::default(),
            geometry: ArrayGeometry::default(),
            stft: StftConfig::default(),
            estimator: EstimatorConfig::default(),
        }
    }
}

/// Mean scores of one table cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchCell {
    pub sources: usize,
    pub t60: f64,
    pub mean_sir_db: f64,
    pub mean_beamformer_sir_db: f64,
    /// Mean SIR of each run.
    pub run_sir_db: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub runs: usize,
    pub seed: u64,
    pub anechoic: Vec<BenchCell>,
    pub reverberant: Vec<BenchCell>,
}

impl BenchReport {
    /// Two-row table: anechoic cells by source count, reverberant cells by t60.
    pub fn to_table(&self) -> String {
        let row = |label: &str, heads: Vec<String>, cells: &[BenchCell], pick: fn(&BenchCell) -> f64| {
            let mut s = format!("| {label:<22} |");
            for h in &heads {
                s.push_str(&format!(" {h:>10} |"));
            }
            s.push('\n');
            s.push_str(&format!("| {:<22} |", ""));
            for c in cells {
                s.push_str(&format!(" {:>10.2} |", pick(c)));
            }
            s.push('\n');
            s
        };
        let an_heads: Vec<String> = self.anechoic.iter().map(|c| format!("L={}", c.sources)).collect();
        let rv_heads: Vec<String> = self.reverberant.iter().map(|c| format!("T60={:.1}s", c.t60)).collect();
        let rv_label = format!("Reverberant (L={})", self.reverberant.first().map_or(0, |c| c.sources));
        let mut s = format!("Average SIR (dB) over {} runs per cell\n", self.runs);
        s.push_str(&row("Non-reverberant", an_heads.clone(), &self.anechoic, |c| c.mean_sir_db));
        s.push_str(&row(&rv_label, rv_heads.clone(), &self.reverberant, |c| c.mean_sir_db));
        s.push_str("Beamformer only\n");
        s.push_str(&row("Non-reverberant", an_heads, &self.anechoic, |c| c.mean_beamformer_sir_db));
        s.push_str(&row(&rv_label, rv_heads, &self.reverberant, |c| c.mean_beamformer_sir_db));
        s
    }
}

/// Seed of one run within a cell.
fn run_seed(base: u64, sources: usize, t60: f64, run: usize) -> u64 {
    let cell = (sources as u64) << 40 ^ ((t60 * 1000.0).round() as u64) << 20;
    base.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ cell ^ run as u64
}

/// Sources at uniformly random azimuths on a common colatitude.
pub fn bench_sources(cfg: &BenchConfig, n_sources: usize, seed: u64) -> Result<Vec<SourceSpec>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let signal = match cfg.signal {
        BenchSignal::SpeechLike => SourceSignal::SpeechLike { duration: cfg.duration },
        BenchSignal::WhiteNoise => SourceSignal::WhiteNoise { duration: cfg.duration },
    };
    (0..n_sources)
        .map(|_| {
            let phi = rng.random_range(0.0..360.0);
            Ok(SourceSpec {
                direction: SphericalDirection::from_degrees(cfg.colatitude_deg, phi)?,
                signal: signal.clone(),
                distance: cfg.distance,
            })
        })
        .collect()
}

/// Render and score one scene of a cell.
pub fn bench_run(cfg: &BenchConfig, n_sources: usize, t60: f64, run: usize) -> Result<EvalReport> {
    let seed = run_seed(cfg.seed, n_sources, t60, run);
    let sources = bench_sources(cfg, n_sources, seed)?;
    let room = RoomSpec { t60, ..cfg.room.clone() };
    let rec = render_scene(&sources, &room, &cfg.geometry, &cfg.stft, seed)?;
    let (est, sep) = process(&rec.mic_signals, &cfg.geometry, &cfg.stft, &rec.source_directions(), &cfg.estimator)?;
    drop(est);
    evaluate(&sep, &rec.ground_truth)
}

/// All runs of one cell, in parallel.
pub fn bench_cell(cfg: &BenchConfig, n_sources: usize, t60: f64) -> Result<BenchCell> {
    let reports: Vec<EvalReport> = (0..cfg.runs)
        .into_par_iter()
        .map(|run| bench_run(cfg, n_sources, t60, run))
        .collect::<Result<_>>()?;
    let run_sir_db: Vec<f64> = reports.iter().map(|r| r.mean_sir_db).collect();
    let bf: Vec<f64> = reports.iter().filter_map(|r| r.mean_beamformer_sir_db).collect();
    Ok(BenchCell {
        sources: n_sources,
        t60,
        mean_sir_db: mean(&run_sir_db),
        mean_beamformer_sir_db: mean(&bf),
        run_sir_db,
    })
}

pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    if cfg.runs == 0 {
        return Err(Error::InvalidArgument("bench needs at least one run per cell".into()));
    }
    if cfg.source_counts.iter().chain([&cfg.reverberant_sources]).any(|&l| l < 2) {
        return Err(Error::InvalidArgument("SIR needs at least two sources per scene".into()));
    }
    let anechoic = cfg
        .source_counts
        .iter()
        .map(|&l| bench_cell(cfg, l, 0.0))
        .collect::<Result<_>>()?;
    let reverberant = cfg
        .t60s
        .iter()
        .map(|&t| bench_cell(cfg, cfg.reverberant_sources, t))
        .collect::<Result<_>>()?;
    Ok(BenchReport {
        runs: cfg.runs,
        seed: cfg.seed,
        anechoic,
        reverberant,
    })
}
