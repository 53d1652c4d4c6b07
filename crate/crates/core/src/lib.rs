//! Watertight surface reconstruction from unoriented point clouds.
//!
//! Fits a sinusoidal MLP as a signed distance field and regularizes its
//! curvature with finite-difference stencils evaluated in per-point tangent
//! frames. All training gradients come from a first-order reverse-mode tape;
//! the curvature terms never require second-order automatic differentiation.

pub mod error;
pub mod fd_curvature;
pub mod frames;
pub mod io;
pub mod losses;
pub mod mesh;
pub mod metrics;
pub mod oracles;
pub mod rng;
pub mod sampling;
pub mod siren;
pub mod tape;
pub mod trainer;
pub mod vec3;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
