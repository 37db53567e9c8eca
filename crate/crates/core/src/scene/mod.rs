//! Synthetic spherical-array recordings: far-field sources, shoebox
//! image-source reverberation and per-source direct-path ground truth.

mod geometry;
mod render;
mod room;
mod signals;

pub use geometry::ArrayGeometry;
pub use render::{
    plane_wave_pressure, render_order, render_scene, SceneMetadata, SceneRecording, SourceMetadata,
    SourceSpec,
};
pub use room::{image_sources, ImageSource, RoomSpec};
pub use signals::SourceSignal;
