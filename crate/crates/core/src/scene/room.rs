//! Shoebox image-source model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sh::SphericalDirection;
use crate::SPEED_OF_SOUND;

/// Images whose reflection gain falls below this (-60 dB energy) are not
/// generated when the image order is chosen automatically.
const AUTO_ORDER_GAIN_FLOOR: f64 = 1e-3;
const AUTO_ORDER_CAP: u32 = 24;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomSpec {
    /// Room extent along x, y, z in meters.
    pub dimensions: [f64; 3],
    /// Reverberation time in seconds; 0 renders an anechoic field.
    pub t60: f64,
    /// Highest reflection order; `None` picks one from `t60`.
    #[serde(default)]
    pub max_image_order: Option<u32>,
    /// Array center in room coordinates.
    pub array_position: [f64; 3],
}

impl Default for RoomSpec {
    fn default() -> Self {
        Self {
            dimensions: [6.0, 7.0, 6.0],
            t60: 0.0,
            max_image_order: None,
            array_position: [3.0, 3.5, 1.5],
        }
    }
}

/// One propagation path: arrival direction seen from the array, amplitude gain and delay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageSource {
    pub direction: SphericalDirection,
    pub gain: f64,
    pub distance: f64,
    pub delay: f64,
    pub reflections: u32,
}

impl RoomSpec {
    pub fn anechoic() -> Self {
        Self::default()
    }

    pub fn with_t60(t60: f64) -> Self {
        Self {
            t60,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimensions.iter().any(|d| !(*d > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "room dimensions {:?} must be positive",
                self.dimensions
            )));
        }
        if !(self.t60 >= 0.0) {
            return Err(Error::InvalidArgument(format!("t60 {} must be >= 0", self.t60)));
        }
        self.check_inside(&self.array_position, "array")
    }

    fn check_inside(&self, p: &[f64; 3], what: &str) -> Result<()> {
        for axis in 0..3 {
            if !(p[axis] > 0.0 && p[axis] < self.dimensions[axis]) {
                return Err(Error::InvalidArgument(format!(
                    "{what} position {p:?} outside room {:?}",
                    self.dimensions
                )));
            }
        }
        Ok(())
    }

    pub fn volume(&self) -> f64 {
        self.dimensions.iter().product()
    }

    pub fn surface_area(&self) -> f64 {
        let [x, y, z] = self.dimensions;
        2.0 * (x * y + y * z + x * z)
    }

    /// Uniform wall pressure-reflection coefficient from Eyring's formula
    /// `T60 = 24 ln(10) V / (-c S ln(1 - a))`.
    pub fn reflection_coefficient(&self) -> f64 {
        if self.t60 == 0.0 {
            return 0.0;
        }
        let energy = (-24.0 * std::f64::consts::LN_10 * self.volume()
            / (SPEED_OF_SOUND * self.surface_area() * self.t60))
            .exp();
        energy.sqrt()
    }

    /// Reflection order used for rendering.
    pub fn image_order(&self) -> u32 {
        if self.t60 == 0.0 {
            return 0;
        }
        if let Some(order) = self.max_image_order {
            return order;
        }
        let beta = self.reflection_coefficient();
        let order = (AUTO_ORDER_GAIN_FLOOR.ln() / (2.0 * beta.ln())).ceil();
        (order.max(1.0) as u32).min(AUTO_ORDER_CAP)
    }
}

/// Enumerate image sources up to the room's reflection order. The direct
/// path comes first.
pub fn image_sources(room: &RoomSpec, source_pos: [f64; 3], array_pos: [f64; 3]) -> Result<Vec<ImageSource>> {
    room.validate()?;
    room.check_inside(&source_pos, "source")?;
    room.check_inside(&array_pos, "array")?;
    let order = room.image_order() as i64;
    let beta = room.reflection_coefficient();

    let mut out = Vec::new();
    let mut push = |img: [f64; 3], refl: u32| -> Result<()> {
        let d = [img[0] - array_pos[0], img[1] - array_pos[1], img[2] - array_pos[2]];
        let dist = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        if dist <= 0.0 {
            return Err(Error::InvalidArgument("source coincides with array".into()));
        }
        out.push(ImageSource {
            direction: SphericalDirection::from_cartesian(d)?,
            gain: beta.powi(refl as i32) / dist,
            distance: dist,
            delay: dist / SPEED_OF_SOUND,
            reflections: refl,
        });
        Ok(())
    };
    push(source_pos, 0)?;
    if order == 0 {
        return Ok(out);
    }

    // Per axis, image coordinate (1-2p) x_s + 2 n L with |n - p| + |n| reflections.
    let axis_images = |axis: usize| -> Vec<(f64, u32)> {
        let len = room.dimensions[axis];
        let xs = source_pos[axis];
        let mut v = Vec::new();
        for n in -order..=order {
            for p in 0..=1i64 {
                let refl = ((n - p).abs() + n.abs()) as u32;
                if refl as i64 <= order {
                    let sign = if p == 1 { -1.0 } else { 1.0 };
                    v.push((sign * xs + 2.0 * n as f64 * len, refl));
                }
            }
        }
        v
    };
    let ax = axis_images(0);
    let ay = axis_images(1);
    let az = axis_images(2);
    for &(x, rx) in &ax {
        for &(y, ry) in &ay {
            if rx + ry > order as u32 {
                continue;
            }
            for &(z, rz) in &az {
                let refl = rx + ry + rz;
                if refl == 0 || refl > order as u32 {
                    continue;
                }
                push([x, y, z], refl)?;
            }
        }
    }
    Ok(out)
}
