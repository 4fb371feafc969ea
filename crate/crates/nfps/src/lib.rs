//! File formats and the `nfps` command-line driver for near-field
//! photometric stereo.
//!
//! Images, depth, normals and masks are PFM files; light rigs are text files
//! of `light` blocks; datasets and network checkpoints use small binary
//! formats. Runs are configured with TOML.

pub mod binfmt;
pub mod cli;
pub mod commands;
pub mod config;
mod error;
pub mod pfm;
pub mod rig;

pub use error::{exit, CliError, Result};
