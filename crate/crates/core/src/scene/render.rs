//! Scene rendering in the STFT domain.
//!
//! Each path from source to array is a far-field plane wave. Per bin the
//! microphone transfer function of source ℓ is
//!
//! ```text
//! H_ℓq(k) = Σ_images g e^{-ik d} · p_q(ŷ_image, k)
//! ```
//!
//! with `p_q` the plane-wave array response built from the modal expansion
//! (so rigid-sphere scattering is included), and the microphone spectra are
//! `P_q(τ,k) = Σ_ℓ S_ℓ(τ,k) H_ℓq(k)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::geometry::ArrayGeometry;
use super::room::{image_sources, ImageSource, RoomSpec};
use super::signals::SourceSignal;
use crate::error::{Error, Result};
use crate::sh::{i_pow, mode_count, mode_strength, sph_harmonics_upto, ModeIndex, SphericalDirection};
use crate::stft::{Spectrogram, Stft, StftConfig};

/// Minimum number of STFT frames a scene must span.
const MIN_FRAMES: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub direction: SphericalDirection,
    pub signal: SourceSignal,
    /// Distance from the array center in meters.
    #[serde(default = "default_distance")]
    pub distance: f64,
}

fn default_distance() -> f64 {
    2.0
}

impl SourceSpec {
    pub fn new(direction: SphericalDirection, signal: SourceSignal) -> Self {
        Self {
            direction,
            signal,
            distance: default_distance(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceMetadata {
    pub theta_deg: f64,
    pub phi_deg: f64,
    pub distance: f64,
    pub position: [f64; 3],
    pub image_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneMetadata {
    pub sources: Vec<SourceMetadata>,
    pub room: RoomSpec,
    pub geometry: ArrayGeometry,
    pub stft: StftConfig,
    pub seed: u64,
    pub reflection_coefficient: f64,
    pub image_order: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneRecording {
    /// `Q × samples` microphone signals.
    pub mic_signals: Vec<Vec<f64>>,
    /// Direct-path signal of each source at the array center.
    pub ground_truth: Vec<Vec<f64>>,
    /// Source signals as emitted.
    pub dry_sources: Vec<Vec<f64>>,
    pub metadata: SceneMetadata,
}

impl SceneRecording {
    pub fn n_samples(&self) -> usize {
        self.mic_signals.first().map_or(0, Vec::len)
    }

    pub fn source_directions(&self) -> Vec<SphericalDirection> {
        self.metadata
            .sources
            .iter()
            .map(|s| SphericalDirection::from_degrees(s.theta_deg, s.phi_deg).expect("stored directions are valid"))
            .collect()
    }
}

/// SH order used to render a plane wave at `kr`: `min(⌈kr⌉ + 2, N_array)`.
pub fn render_order(kr: f64, array_order: usize) -> usize {
    ((kr.ceil() as usize) + 2).min(array_order)
}

/// Mode strengths `b_0..b_order` at `kr`; at `kr = 0` only the monopole survives.
fn mode_strengths(geom: &ArrayGeometry, kr: f64, order: usize) -> Result<Vec<Complex64>> {
    if kr == 0.0 {
        let mut b = vec![Complex64::new(0.0, 0.0); order + 1];
        b[0] = Complex64::new(1.0, 0.0);
        return Ok(b);
    }
    (0..=order).map(|n| mode_strength(n, kr, geom.kind)).collect()
}

/// Pressure at every capsule for a unit-amplitude plane wave from `dir`,
/// via the modal expansion truncated at [`render_order`].
pub fn plane_wave_pressure(dir: &SphericalDirection, geom: &ArrayGeometry, k: f64) -> Result<Vec<Complex64>> {
    if !(k >= 0.0) {
        return Err(Error::InvalidArgument(format!("wavenumber {k} must be >= 0")));
    }
    let kr = k * geom.radius;
    let order = render_order(kr, geom.order);
    let b = mode_strengths(geom, kr, order)?;
    let y_src = sph_harmonics_upto(order, dir);
    let coeffs: Vec<Complex64> = ModeIndex::up_to(order)
        .map(|idx| 4.0 * PI * i_pow(idx.n() as i64) * y_src[idx.linear()].conj())
        .collect();
    let mics = geom.harmonic_matrix(order);
    Ok(pressure_from_coeffs(&coeffs, &b, &mics, order))
}

/// `p_q = Σ_nm a_nm b_n Y_nm(x_q)`.
fn pressure_from_coeffs(
    coeffs: &[Complex64],
    b: &[Complex64],
    mic_harmonics: &[Vec<Complex64>],
    order: usize,
) -> Vec<Complex64> {
    let scaled: Vec<Complex64> = ModeIndex::up_to(order)
        .map(|idx| coeffs[idx.linear()] * b[idx.n()])
        .collect();
    mic_harmonics
        .iter()
        .map(|row| scaled.iter().zip(row).map(|(a, y)| a * y).sum())
        .collect()
}

struct SourcePaths {
    images: Vec<ImageSource>,
    /// `4π i^n Y*_nm(ŷ_image)` per image, modes up to the array order.
    modal: Vec<Vec<Complex64>>,
}

impl SourcePaths {
    fn new(images: Vec<ImageSource>, order: usize) -> Self {
        let modal = images
            .iter()
            .map(|img| {
                let y = sph_harmonics_upto(order, &img.direction);
                ModeIndex::up_to(order)
                    .map(|idx| 4.0 * PI * i_pow(idx.n() as i64) * y[idx.linear()].conj())
                    .collect()
            })
            .collect();
        Self { images, modal }
    }

    /// Sound-field coefficients of the summed paths at wavenumber `k`.
    fn field_coeffs(&self, k: f64, order: usize) -> Vec<Complex64> {
        let nm = mode_count(order);
        let mut acc = vec![Complex64::new(0.0, 0.0); nm];
        for (img, modal) in self.images.iter().zip(&self.modal) {
            let w = Complex64::from_polar(img.gain, -k * img.distance);
            for (a, m) in acc.iter_mut().zip(&modal[..nm]) {
                *a += w * m;
            }
        }
        acc
    }

    fn direct_gain(&self, k: f64) -> Complex64 {
        let d = &self.images[0];
        Complex64::from_polar(d.gain, -k * d.distance)
    }
}

/// Render the microphone signals of a scene.
///
/// Source signals are drawn from a ChaCha generator seeded with `seed`,
/// in source order, before any parallel work; output is bit-identical for
/// a given seed.
pub fn render_scene(
    sources: &[SourceSpec],
    room: &RoomSpec,
    geom: &ArrayGeometry,
    cfg: &StftConfig,
    seed: u64,
) -> Result<SceneRecording> {
    if sources.is_empty() {
        return Err(Error::InvalidArgument("scene needs at least one source".into()));
    }
    geom.validate()?;
    room.validate()?;
    let stft = Stft::new(*cfg)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dry: Vec<Vec<f64>> = sources
        .iter()
        .map(|s| s.signal.render(cfg.sample_rate, &mut rng))
        .collect::<Result<_>>()?;
    let len = dry.iter().map(Vec::len).max().unwrap_or(0);
    let min_len = cfg.fft_size + (MIN_FRAMES - 1) * cfg.hop;
    if len < min_len {
        return Err(Error::SignalTooShort { len, min: min_len });
    }
    dry.iter_mut().for_each(|s| s.resize(len, 0.0));

    let mut paths = Vec::with_capacity(sources.len());
    let mut source_meta = Vec::with_capacity(sources.len());
    for s in sources {
        if !(s.distance > 0.0) {
            return Err(Error::InvalidArgument(format!("source distance {} must be positive", s.distance)));
        }
        let u = s.direction.unit_vector();
        let a = room.array_position;
        let pos = [a[0] + s.distance * u[0], a[1] + s.distance * u[1], a[2] + s.distance * u[2]];
        let images = image_sources(room, pos, a)?;
        let (theta_deg, phi_deg) = s.direction.to_degrees();
        source_meta.push(SourceMetadata {
            theta_deg,
            phi_deg,
            distance: s.distance,
            position: pos,
            image_count: images.len(),
        });
        paths.push(SourcePaths::new(images, geom.order));
    }

    let spectra: Vec<Spectrogram> = dry.iter().map(|s| stft.analyze(s)).collect::<Result<_>>()?;
    let n_bins = cfg.n_bins();
    let n_mics = geom.n_mics();
    let mic_harmonics = geom.harmonic_matrix(geom.order);

    // transfer[k][ℓ][q] and direct[k][ℓ]
    let transfers: Vec<(Vec<Vec<Complex64>>, Vec<Complex64>)> = (0..n_bins)
        .into_par_iter()
        .map(|k| {
            let wavenumber = cfg.bin_wavenumber(k);
            let kr = wavenumber * geom.radius;
            let order = render_order(kr, geom.order);
            let b = mode_strengths(geom, kr, order)?;
            let h = paths
                .iter()
                .map(|p| pressure_from_coeffs(&p.field_coeffs(wavenumber, order), &b, &mic_harmonics, order))
                .collect();
            let d = paths.iter().map(|p| p.direct_gain(wavenumber)).collect();
            Ok((h, d))
        })
        .collect::<Result<_>>()?;

    let template = &spectra[0];
    let mic_signals: Vec<Vec<f64>> = (0..n_mics)
        .into_par_iter()
        .map(|q| {
            let mut spec = template.zeros_like();
            for t in 0..spec.n_frames() {
                let frame = spec.frame_mut(t);
                for (k, out) in frame.iter_mut().enumerate() {
                    let h = &transfers[k].0;
                    *out = spectra.iter().enumerate().map(|(l, s)| s.get(t, k) * h[l][q]).sum();
                }
            }
            stft.synthesize(&spec)
        })
        .collect::<Result<_>>()?;

    let ground_truth: Vec<Vec<f64>> = spectra
        .par_iter()
        .enumerate()
        .map(|(l, s)| {
            let mut spec = s.clone();
            for t in 0..spec.n_frames() {
                for (k, v) in spec.frame_mut(t).iter_mut().enumerate() {
                    *v *= transfers[k].1[l];
                }
            }
            stft.synthesize(&spec)
        })
        .collect::<Result<_>>()?;

    Ok(SceneRecording {
        mic_signals,
        ground_truth,
        dry_sources: dry,
        metadata: SceneMetadata {
            sources: source_meta,
            room: room.clone(),
            geometry: geom.clone(),
            stft: *cfg,
            seed,
            reflection_coefficient: room.reflection_coefficient(),
            image_order: room.image_order(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sh::ArrayKind;
    use crate::SPEED_OF_SOUND;

    fn open_geometry() -> ArrayGeometry {
        ArrayGeometry {
            kind: ArrayKind::Open,
            ..ArrayGeometry::default()
        }
    }

    fn noise_source(theta: f64, phi: f64) -> SourceSpec {
        SourceSpec::new(
            SphericalDirection::from_degrees(theta, phi).unwrap(),
            SourceSignal::WhiteNoise { duration: 0.4 },
        )
    }

    #[test]
    fn open_plane_wave_matches_exponential() {
        let geom = open_geometry();
        let dir = SphericalDirection::from_degrees(63.0, 210.0).unwrap();
        let u = dir.unit_vector();
        // truncation at min(⌈kr⌉+2, 4) stays within 1% up to kr ≈ 1.5
        for &kr in &[0.3, 0.5, 0.9, 1.5] {
            let k = kr / geom.radius;
            let p = plane_wave_pressure(&dir, &geom, k).unwrap();
            for (q, pq) in p.iter().enumerate() {
                let x = geom.mic_position(q);
                let exact = Complex64::from_polar(1.0, k * (u[0] * x[0] + u[1] * x[1] + u[2] * x[2]));
                assert!((pq - exact).norm() < 0.01, "kr={kr} q={q} err={}", (pq - exact).norm());
            }
        }
    }

    #[test]
    fn low_frequency_pressure_is_unity() {
        for geom in [open_geometry(), ArrayGeometry::default()] {
            let dir = SphericalDirection::from_degrees(30.0, 40.0).unwrap();
            let p = plane_wave_pressure(&dir, &geom, 1e-3).unwrap();
            assert!(p.iter().all(|v| (v - Complex64::new(1.0, 0.0)).norm() < 1e-4));
        }
    }

    #[test]
    fn rigid_pressure_nonzero_at_open_null() {
        let geom = ArrayGeometry::default();
        let k = PI / geom.radius; // j_0(kr) = 0
        let dir = SphericalDirection::from_degrees(90.0, 0.0).unwrap();
        let p = plane_wave_pressure(&dir, &geom, k).unwrap();
        assert!(p.iter().all(|v| v.norm() > 1e-3));
    }

    #[test]
    fn far_field_model_within_three_percent() {
        // spherical wave from 2 m versus the plane-wave approximation
        let geom = open_geometry();
        let d = 2.0;
        let dir = SphericalDirection::from_degrees(75.0, 120.0).unwrap();
        let u = dir.unit_vector();
        let src = [d * u[0], d * u[1], d * u[2]];
        let cfg = StftConfig::default();
        for k_idx in 1..cfg.n_bins() {
            let k = cfg.bin_wavenumber(k_idx);
            for q in 0..geom.n_mics() {
                let x = geom.mic_position(q);
                let r = ((src[0] - x[0]).powi(2) + (src[1] - x[1]).powi(2) + (src[2] - x[2]).powi(2)).sqrt();
                let exact = Complex64::from_polar(1.0 / r, -k * r);
                let plane = Complex64::from_polar(1.0 / d, -k * d)
                    * Complex64::from_polar(1.0, k * (u[0] * x[0] + u[1] * x[1] + u[2] * x[2]));
                let rel = (plane.norm() - exact.norm()).abs() / exact.norm();
                assert!(rel < 0.03, "bin {k_idx} mic {q}: {rel}");
            }
        }
    }

    #[test]
    fn render_is_deterministic() {
        let srcs = vec![noise_source(80.0, 10.0), noise_source(80.0, 150.0)];
        let room = RoomSpec {
            t60: 0.3,
            max_image_order: Some(3),
            ..RoomSpec::default()
        };
        let geom = ArrayGeometry::default();
        let cfg = StftConfig::default();
        let a = render_scene(&srcs, &room, &geom, &cfg, 9).unwrap();
        let b = render_scene(&srcs, &room, &geom, &cfg, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.mic_signals.len(), 32);
        assert!(a.mic_signals.iter().all(|s| s.len() == 3200));
        let c = render_scene(&srcs, &room, &geom, &cfg, 10).unwrap();
        assert_ne!(a.mic_signals, c.mic_signals);
    }

    #[test]
    fn rendering_is_linear_in_sources() {
        let cfg = StftConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let sig = |rng: &mut ChaCha8Rng| SourceSignal::Samples {
            data: SourceSignal::WhiteNoise { duration: 0.3 }.render(cfg.sample_rate, rng).unwrap(),
            sample_rate: cfg.sample_rate,
        };
        let a = SourceSpec::new(SphericalDirection::from_degrees(90.0, 0.0).unwrap(), sig(&mut rng));
        let b = SourceSpec::new(SphericalDirection::from_degrees(90.0, 180.0).unwrap(), sig(&mut rng));
        let room = RoomSpec::anechoic();
        let geom = ArrayGeometry::default();
        let both = render_scene(&[a.clone(), b.clone()], &room, &geom, &cfg, 0).unwrap();
        let ra = render_scene(&[a], &room, &geom, &cfg, 0).unwrap();
        let rb = render_scene(&[b], &room, &geom, &cfg, 0).unwrap();
        for q in 0..geom.n_mics() {
            for i in 0..both.n_samples() {
                let sum = ra.mic_signals[q][i] + rb.mic_signals[q][i];
                assert!((both.mic_signals[q][i] - sum).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn anechoic_ground_truth_is_delayed_scaled_source() {
        let cfg = StftConfig::default();
        // a delay of a whole number of samples: d = 40 samples · c / fs
        let d = 40.0 * SPEED_OF_SOUND / cfg.sample_rate;
        let mut src = noise_source(90.0, 45.0);
        src.distance = d;
        let rec = render_scene(&[src], &RoomSpec::anechoic(), &ArrayGeometry::default(), &cfg, 2).unwrap();
        let dry = &rec.dry_sources[0];
        let gt = &rec.ground_truth[0];
        // per-frame linear phase acts as a circular shift of each windowed frame,
        // so a few percent of the energy wraps around
        let mut err = 0.0;
        let mut energy = 0.0;
        for i in 400..2800 {
            err += (gt[i] - dry[i - 40] / d).powi(2);
            energy += (dry[i - 40] / d).powi(2);
        }
        assert!(err / energy < 0.1, "relative error {}", err / energy);
    }

    #[test]
    fn reverberation_adds_energy() {
        let srcs = vec![noise_source(80.0, 10.0)];
        let geom = ArrayGeometry::default();
        let cfg = StftConfig::default();
        let energy = |t60: f64| {
            let rec = render_scene(&srcs, &RoomSpec::with_t60(t60), &geom, &cfg, 5).unwrap();
            rec.mic_signals.iter().flatten().map(|x| x * x).sum::<f64>()
        };
        let e = [energy(0.0), energy(0.2), energy(0.5)];
        assert!(e[0] < e[1] && e[1] < e[2], "{e:?}");
    }

    #[test]
    fn short_or_empty_scenes_rejected() {
        let geom = ArrayGeometry::default();
        let cfg = StftConfig::default();
        let room = RoomSpec::anechoic();
        assert!(render_scene(&[], &room, &geom, &cfg, 0).is_err());
        let short = SourceSpec::new(
            SphericalDirection::from_degrees(90.0, 0.0).unwrap(),
            SourceSignal::WhiteNoise { duration: 0.05 },
        );
        assert!(matches!(
            render_scene(&[short], &room, &geom, &cfg, 0),
            Err(Error::SignalTooShort { .. })
        ));
    }
}
