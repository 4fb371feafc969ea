//! Near-field photometric stereo.
//!
//! The crate reconstructs depth and normals of an object photographed under a
//! small ring of point lights placed close to the camera. Each iteration of the
//! reconstruction converts the near-field intensities into far-field
//! reflectance samples using the current depth estimate, predicts a normal per
//! pixel from those samples and integrates the normal field back into depth.
//!
//! Everything here is pure computation over in-memory buffers and builds
//! without `std`. File formats and the command-line driver live in the `nfps`
//! crate.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod datagen;
mod error;
pub mod geometry;
pub mod grid;
pub mod integrate;
pub mod lighting;
pub mod obsmap;
mod par;
pub mod pipeline;
pub mod predict;
pub mod reflectance;
pub mod scene;

pub use error::{Error, Result};
pub use grid::{Grid, Image, Mask};

/// Camera-frame 3-vector (meters for points, unitless for directions).
pub type Vec3 = nalgebra::Vector3<f64>;

/// Deterministic random stream used everywhere randomness is needed.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Creates the random stream for item `index` of a run seeded with `seed`.
///
/// Streams for different indices are independent, so per-item work can be
/// scheduled in any order without changing the output.
pub fn item_rng(seed: u64, index: u64) -> Rng {
    use rand::SeedableRng;
    let mut rng = Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
