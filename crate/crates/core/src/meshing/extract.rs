use std::collections::HashMap;

use nalgebra::Point3;

use super::grid::FieldGrid;
use super::tables::{EDGE_TABLE, TRIANGLE_TABLE};
use crate::geometry::{Bvh, TriangleMesh};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractionConfig {
    /// Cells whose smallest corner distance is at least this many cell diagonals are skipped.
    pub far_cutoff: f64,
    /// A corner takes the anchor's sign when `dot(g, g_anchor)` exceeds this.
    pub sign_dot_threshold: f64,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self {
            far_cutoff: 3.0,
            sign_dot_threshold: 0.0,
        }
    }
}

impl ExtractionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.far_cutoff > 0.0) {
            return Err(Error::InvalidInput(format!(
                "far cutoff must be positive, got {}",
                self.far_cutoff
            )));
        }
        Ok(())
    }
}

/// Corner offsets in table order.
const CORNERS: [[usize; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [1, 1, 1],
    [0, 1, 1],
];

/// Corner pair of each cube edge, lower-coordinate corner first.
const EDGES: [[usize; 2]; 12] = [
    [0, 1],
    [1, 2],
    [3, 2],
    [0, 3],
    [4, 5],
    [5, 6],
    [7, 6],
    [4, 7],
    [0, 4],
    [1, 5],
    [2, 6],
    [3, 7],
];

fn edge_axis(e: [usize; 2]) -> usize {
    let (a, b) = (CORNERS[e[0]], CORNERS[e[1]]);
    (0..3).find(|&k| a[k] != b[k]).expect("edge spans one axis")
}

/// Pseudo-signs of the eight corners of a cell: `true` marks the anchor's side.
///
/// The anchor is the corner of smallest distance among those with a gradient; every
/// other corner is on its side iff its gradient agrees with the anchor's. Returns
/// `None` when no corner has a gradient.
pub fn pseudo_signs(
    u: &[f64; 8],
    g: &[nalgebra::Vector3<f64>; 8],
    threshold: f64,
) -> Option<[bool; 8]> {
    let anchor = (0..8)
        .filter(|&c| g[c] != nalgebra::Vector3::zeros())
        .min_by(|&a, &b| u[a].total_cmp(&u[b]))?;
    let mut signs = [false; 8];
    for c in 0..8 {
        signs[c] = c == anchor || g[c].dot(&g[anchor]) > threshold;
    }
    Some(signs)
}

/// Position of the surface crossing between two nodes from their unsigned distances.
pub fn crossing_parameter(u1: f64, u2: f64) -> f64 {
    let s = u1 + u2;
    if s > 0.0 {
        u1 / s
    } else {
        0.5
    }
}

/// Triangulates the zero level set of the grid's unsigned distance using gradient
/// pseudo-signs per cell. Vertices on the same lattice edge are shared between cells.
pub fn extract_mesh(grid: &FieldGrid, config: &ExtractionConfig) -> Result<TriangleMesh> {
    config.validate()?;
    let [rx, ry, rz] = grid.resolution;
    let cutoff = config.far_cutoff * grid.cell_size().norm();
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    let mut edge_vertex: HashMap<(usize, usize), u32> = HashMap::new();
    let mut u = [0.0; 8];
    let mut g = [nalgebra::Vector3::zeros(); 8];
    let mut ids = [0usize; 8];

    for k in 0..rz {
        for j in 0..ry {
            for i in 0..rx {
                for (c, off) in CORNERS.iter().enumerate() {
                    ids[c] = grid.index(i + off[0], j + off[1], k + off[2]);
                    u[c] = grid.u[ids[c]];
                    g[c] = grid.g[ids[c]];
                }
                if u.iter().all(|&x| x >= cutoff) {
                    continue;
                }
                let Some(signs) = pseudo_signs(&u, &g, config.sign_dot_threshold) else {
                    continue;
                };
                let case = (0..8)
                    .filter(|&c| !signs[c])
                    .fold(0usize, |acc, c| acc | (1 << c));
                if EDGE_TABLE[case] == 0 {
                    continue;
                }
                let mut local = [u32::MAX; 12];
                for (e, pair) in EDGES.iter().enumerate() {
                    if EDGE_TABLE[case] & (1 << e) == 0 {
                        continue;
                    }
                    let key = (ids[pair[0]], edge_axis(*pair));
                    local[e] = *edge_vertex.entry(key).or_insert_with(|| {
                        let [a, b] = *pair;
                        let t = crossing_parameter(u[a], u[b]);
                        let pa = node(grid, i, j, k, a);
                        let pb = node(grid, i, j, k, b);
                        vertices.push(pa + (pb - pa) * t);
                        (vertices.len() - 1) as u32
                    });
                }
                for tri in TRIANGLE_TABLE[case].chunks_exact(3) {
                    if tri[0] < 0 {
                        break;
                    }
                    triangles.push([
                        local[tri[0] as usize],
                        local[tri[1] as usize],
                        local[tri[2] as usize],
                    ]);
                }
            }
        }
    }
    Ok(TriangleMesh::new(vertices, triangles))
}

fn node(grid: &FieldGrid, i: usize, j: usize, k: usize, corner: usize) -> Point3<f64> {
    let o = CORNERS[corner];
    grid.node_position(i + o[0], j + o[1], k + o[2])
}

/// Fraction of `samples` lying within `epsilon` of `mesh`; 0 for an empty mesh.
pub fn hole_metric(mesh: &TriangleMesh, samples: &[Point3<f64>], epsilon: f64) -> f64 {
    if mesh.is_empty() || samples.is_empty() {
        return 0.0;
    }
    let bvh = Bvh::build(mesh);
    let covered = samples
        .iter()
        .filter(|p| bvh.closest_point(mesh, p).distance < epsilon)
        .count();
    covered as f64 / samples.len() as f64
}
