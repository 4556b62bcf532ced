//! Occlusion-aware 3D reconstruction at desk scale.
//!
//! The crate covers 2D and 3D occlusion simulation, image patch tokens with
//! per-token visibility weights, mask-weighted attention, a voxel structure
//! latent, rectified-flow training and sampling, and point-cloud metrics.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

mod error;

pub use error::{Error, Result};

pub mod attention;
pub mod dataset;
pub mod flow;
pub mod io;
pub mod masks2d;
pub mod mesh;
pub mod mesh_occlusion;
pub mod metrics;
pub mod patch_tokens;
pub mod rng;
pub mod slat;
