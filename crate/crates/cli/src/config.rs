//! Scene and experiment configuration files.
//!
//! TOML is the primary format; files ending in `.json` are read as JSON.
//! Angles are in degrees and relative paths resolve against the directory
//! of the file that names them.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use shpsd::pipeline::EstimatorConfig;
use shpsd::scene::{ArrayGeometry, RoomSpec, SceneMetadata, SourceSignal, SourceSpec};
use shpsd::sh::{ArrayKind, SphericalDirection};
use shpsd::stft::StftConfig;

use crate::audio;
use crate::error::{CliError, CliResult, WithPath};

pub fn load<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).at(path)?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        serde_json::from_str(&text).at(path)
    } else {
        toml::from_str(&text).at(path)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoomConfig {
    pub dimensions: [f64; 3],
    pub t60: f64,
    pub max_image_order: Option<u32>,
    pub array_position: [f64; 3],
}

impl Default for RoomConfig {
    fn default() -> Self {
        let r = RoomSpec::default();
        Self {
            dimensions: r.dimensions,
            t60: r.t60,
            max_image_order: r.max_image_order,
            array_position: r.array_position,
        }
    }
}

impl From<&RoomConfig> for RoomSpec {
    fn from(c: &RoomConfig) -> Self {
        RoomSpec {
            dimensions: c.dimensions,
            t60: c.t60,
            max_image_order: c.max_image_order,
            array_position: c.array_position,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArrayConfig {
    pub radius: f64,
    pub kind: ArrayKind,
    pub order: usize,
    /// CSV of `theta_deg,phi_deg` rows; the bundled 32-capsule layout when absent.
    pub geometry: Option<PathBuf>,
}

impl Default for ArrayConfig {
    fn default() -> Self {
        let g = ArrayGeometry::default();
        Self {
            radius: g.radius,
            kind: g.kind,
            order: g.order,
            geometry: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StftSection {
    pub fft_size: Option<usize>,
    pub hop: Option<usize>,
    pub sample_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SignalConfig {
    WhiteNoise { duration: f64 },
    SpeechLike { duration: f64 },
    /// One channel of a WAV file, which must be at the scene sample rate.
    Wav {
        path: PathBuf,
        #[serde(default)]
        channel: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub theta_deg: f64,
    pub phi_deg: f64,
    #[serde(default = "default_distance")]
    pub distance: f64,
    /// Needed to simulate; ignored when only the direction is used.
    pub signal: Option<SignalConfig>,
}

fn default_distance() -> f64 {
    2.0
}

impl SourceConfig {
    pub fn direction(&self) -> CliResult<SphericalDirection> {
        Ok(SphericalDirection::from_degrees(self.theta_deg, self.phi_deg)?)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub seed: u64,
    pub room: RoomConfig,
    pub array: ArrayConfig,
    pub stft: StftSection,
    pub estimator: EstimatorConfig,
    pub sources: Vec<SourceConfig>,
    /// Directory relative paths resolve against; set on load.
    #[serde(skip)]
    pub base_dir: PathBuf,
    /// Exact layout recovered from scene metadata; takes precedence over `array`.
    #[serde(skip)]
    pub recorded_geometry: Option<ArrayGeometry>,
}

impl SceneConfig {
    pub fn from_file(path: &Path) -> CliResult<Self> {
        let mut cfg: Self = load(path)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn geometry(&self) -> CliResult<ArrayGeometry> {
        if let Some(g) = &self.recorded_geometry {
            return Ok(g.clone());
        }
        let a = &self.array;
        let geom = match &a.geometry {
            Some(p) => {
                let path = self.resolve(p);
                let text = fs::read_to_string(&path).at(&path)?;
                ArrayGeometry::from_csv(&text, a.radius, a.kind, a.order).at(&path)?
            }
            None => ArrayGeometry::new(a.radius, ArrayGeometry::default().mic_dirs, a.kind, a.order)?,
        };
        Ok(geom)
    }

    pub fn directions(&self) -> CliResult<Vec<SphericalDirection>> {
        self.sources.iter().map(SourceConfig::direction).collect()
    }

    /// Sources ready for rendering, loading any WAV signals.
    pub fn source_specs(&self) -> CliResult<Vec<SourceSpec>> {
        if self.sources.is_empty() {
            return Err(CliError::config("scene config lists no sources"));
        }
        self.sources
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let signal = match &s.signal {
                    None => return Err(CliError::config(format!("source {} has no signal", i + 1))),
                    Some(SignalConfig::WhiteNoise { duration }) => SourceSignal::WhiteNoise { duration: *duration },
                    Some(SignalConfig::SpeechLike { duration }) => SourceSignal::SpeechLike { duration: *duration },
                    Some(SignalConfig::Wav { path, channel }) => {
                        let wav = audio::read_wav(&self.resolve(path))?;
                        let data = wav.channels.get(*channel).cloned().ok_or_else(|| {
                            CliError::config(format!(
                                "{}: channel {channel} requested, file has {}",
                                path.display(),
                                wav.channels.len()
                            ))
                        })?;
                        SourceSignal::Samples {
                            data,
                            sample_rate: wav.sample_rate,
                        }
                    }
                };
                Ok(SourceSpec {
                    direction: s.direction()?,
                    signal,
                    distance: s.distance,
                })
            })
            .collect()
    }
}

/// Scene settings recovered from a metadata file written by `simulate`.
pub fn scene_from_metadata(path: &Path) -> CliResult<SceneConfig> {
    let meta: SceneMetadata = load(path)?;
    meta.geometry.validate()?;
    let sources = meta
        .sources
        .iter()
        .map(|s| SourceConfig {
            theta_deg: s.theta_deg,
            phi_deg: s.phi_deg,
            distance: s.distance,
            signal: None,
        })
        .collect();
    Ok(SceneConfig {
        seed: meta.seed,
        room: RoomConfig {
            dimensions: meta.room.dimensions,
            t60: meta.room.t60,
            max_image_order: meta.room.max_image_order,
            array_position: meta.room.array_position,
        },
        array: ArrayConfig {
            radius: meta.geometry.radius,
            kind: meta.geometry.kind,
            order: meta.geometry.order,
            geometry: None,
        },
        stft: StftSection {
            fft_size: Some(meta.stft.fft_size),
            hop: Some(meta.stft.hop),
            sample_rate: Some(meta.stft.sample_rate),
        },
        estimator: EstimatorConfig::default(),
        sources,
        base_dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
        recorded_geometry: Some(meta.geometry),
    })
}

/// Parse a `theta,phi` pair in degrees.
pub fn parse_doa(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected THETA,PHI in degrees, got '{s}'"))?;
    let theta = a.trim().parse::<f64>().map_err(|e| format!("colatitude '{a}': {e}"))?;
    let phi = b.trim().parse::<f64>().map_err(|e| format!("azimuth '{b}': {e}"))?;
    Ok((theta, phi))
}

/// STFT settings: flag, then config file, then default.
pub fn stft_config(section: &StftSection, fft_size: Option<usize>, hop: Option<usize>, sample_rate: Option<f64>) -> CliResult<StftConfig> {
    let d = StftConfig::default();
    let cfg = StftConfig {
        fft_size: fft_size.or(section.fft_size).unwrap_or(d.fft_size),
        hop: hop.or(section.hop).unwrap_or(d.hop),
        sample_rate: sample_rate.or(section.sample_rate).unwrap_or(d.sample_rate),
    };
    cfg.validate()?;
    Ok(cfg)
}
