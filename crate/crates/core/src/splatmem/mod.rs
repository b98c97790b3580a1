//! The persistent forward model: an online isotropic-splat reconstruction
//! built from privileged RGB-D frames, rendered at queried poses and
//! refined on stored views.

mod cloud;
mod raster;

pub use cloud::{InsertStats, RenderResult, SplatCloud, SplatConfig, SNAPSHOT_MAGIC};
pub use raster::{Composite, Contribution, RasterConfig, SplatView};
