use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sh::{mode_count, sph_harmonics_upto, ArrayKind, SphericalDirection};

/// 32-point near-uniform layout (icosahedron plus dodecahedron vertices).
const PENTAKIS_32: &str = include_str!("../../data/pentakis32.csv");

/// Microphone layout on a sphere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub radius: f64,
    pub mic_dirs: Vec<SphericalDirection>,
    pub kind: ArrayKind,
    /// Highest spherical-harmonic order the layout resolves.
    pub order: usize,
}

impl Default for ArrayGeometry {
    /// Fourth-order rigid sphere of radius 4.2 cm with 32 capsules.
    fn default() -> Self {
        Self {
            radius: 0.042,
            mic_dirs: parse_direction_csv(PENTAKIS_32).expect("bundled geometry parses"),
            kind: ArrayKind::Rigid,
            order: 4,
        }
    }
}

impl ArrayGeometry {
    pub fn new(radius: f64, mic_dirs: Vec<SphericalDirection>, kind: ArrayKind, order: usize) -> Result<Self> {
        let geom = Self {
            radius,
            mic_dirs,
            kind,
            order,
        };
        geom.validate()?;
        Ok(geom)
    }

    /// Geometry from CSV rows of `theta_deg,phi_deg` (an optional header line is skipped).
    pub fn from_csv(text: &str, radius: f64, kind: ArrayKind, order: usize) -> Result<Self> {
        Self::new(radius, parse_direction_csv(text)?, kind, order)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0) {
            return Err(Error::InvalidArgument(format!("array radius {} must be positive", self.radius)));
        }
        let need = mode_count(self.order);
        if self.mic_dirs.len() < need {
            return Err(Error::InvalidArgument(format!(
                "{} microphones cannot resolve order {} (need {need})",
                self.mic_dirs.len(),
                self.order
            )));
        }
        for (i, a) in self.mic_dirs.iter().enumerate() {
            for b in &self.mic_dirs[i + 1..] {
                if a.angle_to(b) < 1e-9 {
                    return Err(Error::InvalidArgument("duplicate microphone direction".into()));
                }
            }
        }
        Ok(())
    }

    pub fn n_mics(&self) -> usize {
        self.mic_dirs.len()
    }

    /// Cartesian capsule position relative to the array center.
    pub fn mic_position(&self, q: usize) -> [f64; 3] {
        let u = self.mic_dirs[q].unit_vector();
        [u[0] * self.radius, u[1] * self.radius, u[2] * self.radius]
    }

    /// `Y_nm(θ_q, φ_q)` for every capsule, one row per microphone, modes up to `order`.
    pub fn harmonic_matrix(&self, order: usize) -> Vec<Vec<Complex64>> {
        self.mic_dirs.iter().map(|d| sph_harmonics_upto(order, d)).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("theta_deg,phi_deg\n");
        for d in &self.mic_dirs {
            let (t, p) = d.to_degrees();
            s.push_str(&format!("{t},{p}\n"));
        }
        s
    }
}

fn parse_direction_csv(text: &str) -> Result<Vec<SphericalDirection>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 2 {
            return Err(Error::InvalidArgument(format!(
                "geometry line {}: expected 2 fields, got {}",
                lineno + 1,
                fields.len()
            )));
        }
        match (fields[0].parse::<f64>(), fields[1].parse::<f64>()) {
            (Ok(t), Ok(p)) => out.push(SphericalDirection::from_degrees(t, p)?),
            _ if out.is_empty() && lineno == 0 => continue, // header
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "geometry line {}: cannot parse '{line}'",
                    lineno + 1
                )))
            }
        }
    }
    Ok(out)
}
