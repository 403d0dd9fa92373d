//! Gradient distance fields for open (non-watertight) surfaces.
//!
//! A gradient distance field maps every query point `x` to the vector
//! `v = x̂ − x` that points at the closest surface point `x̂`. Its norm is the
//! unsigned distance and its direction the unit gradient, but unlike the
//! unsigned distance each component crosses zero smoothly at the surface.
//!
//! The crate is organised as a pipeline:
//!
//! - [`geometry`]: mesh I/O, normalization, exact closest-point queries and
//!   training point sampling.
//! - [`field`]: ground-truth vectors, the `v ↔ (u, g)` algebra and the target
//!   adapters for the UDF and closest-surface-point baselines.
//! - [`neural`]: a from-scratch MLP with reverse-mode gradients, Adam, the
//!   losses, single-shape fitting, auto-decoder training and latent fitting.
//! - [`meshing`]: lattice evaluation and gradient-sign marching cubes.
//! - [`metrics`]: Chamfer distance, normal consistency and near-surface field
//!   errors.
//! - [`demo2d`]: the 2D open-contour comparison of UDF and GDF regression.

pub mod demo2d;
pub mod error;
pub mod field;
pub mod geometry;
pub mod meshing;
pub mod metrics;
pub mod neural;

pub use error::{Error, Result};
