//! The full model on a reverberant field that matches its assumptions: a
//! target plane wave plus many mutually incoherent plane waves from
//! directions spread uniformly over the sphere.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shpsd::estimator::ReverbModel;
use shpsd::metrics::{mean, LogErrorOptions};
use shpsd::pipeline::{self, EstimatorConfig};
use shpsd::scene::{render_scene, ArrayGeometry, RoomSpec, SourceSignal, SourceSpec};
use shpsd::sh::SphericalDirection;
use shpsd::stft::StftConfig;

const DIFFUSE_WAVES: usize = 120;

fn diffuse_mixture(gain: f64) -> (Vec<Vec<f64>>, Vec<f64>, SphericalDirection) {
    let cfg = StftConfig::default();
    let geom = ArrayGeometry::default();
    let room = RoomSpec::with_t60(0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let signal = SourceSignal::WhiteNoise { duration: 2.0 };
    let target_dir = SphericalDirection::from_degrees(75.0, 40.0).unwrap();
    let target = render_scene(&[SourceSpec::new(target_dir, signal.clone())], &room, &geom, &cfg, 3).unwrap();
    let waves: Vec<SourceSpec> = (0..DIFFUSE_WAVES)
        .map(|_| {
            let z: f64 = rng.random_range(-1.0..1.0);
            let dir = SphericalDirection::from_degrees(z.acos().to_degrees(), rng.random_range(0.0..360.0)).unwrap();
            SourceSpec {
                distance: 1.2,
                ..SourceSpec::new(dir, signal.clone())
            }
        })
        .collect();
    let field = render_scene(&waves, &room, &geom, &cfg, 4).unwrap();
    let mix = target
        .mic_signals
        .iter()
        .zip(&field.mic_signals)
        .map(|(t, f)| t.iter().zip(f).map(|(a, b)| a + gain * b).collect())
        .collect();
    (mix, target.ground_truth[0].clone(), target_dir)
}

fn log_error(mix: &[Vec<f64>], truth: &[f64], dir: SphericalDirection, model: ReverbModel, beta: f64) -> f64 {
    let cfg = StftConfig::default();
    let est_cfg = EstimatorConfig {
        model,
        beta,
        ..EstimatorConfig::default()
    };
    let est = pipeline::estimate(mix, &ArrayGeometry::default(), &cfg, &[dir], &est_cfg).unwrap();
    let opts = LogErrorOptions {
        skip_frames: 20,
        ..LogErrorOptions::default()
    };
    mean(&pipeline::psd_errors(&est.track, &[truth.to_vec()], &cfg, beta, &opts).unwrap())
}

#[test]
fn full_model_beats_reverb_ignored_on_incoherent_field() {
    let (mix, truth, dir) = diffuse_mixture(0.1);
    let full = log_error(&mix, &truth, dir, ReverbModel::Full, 0.95);
    let anechoic = log_error(&mix, &truth, dir, ReverbModel::Anechoic, 0.95);
    assert!(full + 0.5 < anechoic, "full {full:.2} dB, reverb ignored {anechoic:.2} dB");
}

#[test]
fn full_model_tracks_diffuse_level() {
    let (mix, _, dir) = diffuse_mixture(0.1);
    let est_cfg = EstimatorConfig {
        beta: 0.95,
        ..EstimatorConfig::default()
    };
    let cfg = StftConfig::default();
    let est = pipeline::estimate(&mix, &ArrayGeometry::default(), &cfg, &[dir], &est_cfg).unwrap();
    let quiet = pipeline::estimate(&diffuse_mixture(0.02).0, &ArrayGeometry::default(), &cfg, &[dir], &est_cfg).unwrap();
    let g = mean(&est.track.gamma00_track()[40 * cfg.n_bins()..]);
    let g_quiet = mean(&quiet.track.gamma00_track()[40 * cfg.n_bins()..]);
    // power scales with the square of the field gain
    let ratio = g / g_quiet;
    assert!((ratio / 25.0).log10().abs() * 10.0 < 1.5, "Γ00 ratio {ratio:.1}, expected 25");
}
