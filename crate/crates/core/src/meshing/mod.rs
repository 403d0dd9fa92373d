//! Lattice evaluation of distance fields and gradient-sign marching cubes.

mod extract;
mod grid;
mod tables;

pub use extract::{crossing_parameter, extract_mesh, hole_metric, pseudo_signs, ExtractionConfig};
pub use grid::{evaluate_grid, evaluate_grid_blocked, FieldGrid, DEFAULT_BLOCK};

use crate::geometry::Aabb;
use crate::neural::{NeuralField, NeuralQuery};
use crate::Result;

/// Samples a neural field on a lattice over `bounds`.
pub fn evaluate_neural_grid(
    field: &NeuralField,
    code: Option<&[f32]>,
    resolution: [usize; 3],
    bounds: Aabb,
) -> Result<FieldGrid> {
    evaluate_grid(&NeuralQuery::new(field, code), resolution, bounds)
}
