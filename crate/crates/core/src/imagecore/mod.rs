//! Raster primitives: images, binary masks, morphology and connected
//! components.

pub mod components;
pub mod io;
pub mod morphology;
pub mod raster;

pub use components::{connected_components, label, ConnectedComponent, Connectivity};
pub use morphology::{dilate, erode, opening, MorphologyConfig, StructuringElement};
pub use raster::{mask_from_nonblack, BinaryMask, Raster, RasterImage};
