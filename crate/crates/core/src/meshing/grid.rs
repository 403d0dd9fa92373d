use std::fs;
use std::path::Path;

use nalgebra::{Point3, Vector3};
use rayon::prelude::*;

use crate::field::{Decomposition, DistanceQuery};
use crate::geometry::{self, Aabb};
use crate::{Error, Result};

const GRID_MAGIC: &[u8; 4] = b"GDFG";

/// Default edge length, in nodes, of the sub-blocks a lattice is evaluated in.
pub const DEFAULT_BLOCK: usize = 32;

/// Distances and unit gradients sampled on a regular lattice.
///
/// `resolution` counts cells per axis; there are `resolution + 1` nodes per axis and
/// node `(i, j, k)` is stored at `i + nx·(j + ny·k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrid {
    pub resolution: [usize; 3],
    pub bounds: Aabb,
    pub u: Vec<f64>,
    pub g: Vec<Vector3<f64>>,
}

impl FieldGrid {
    pub fn nodes_per_axis(&self) -> [usize; 3] {
        self.resolution.map(|r| r + 1)
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes_per_axis().iter().product()
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        let [nx, ny, _] = self.nodes_per_axis();
        i + nx * (j + ny * k)
    }

    pub fn coords(&self, index: usize) -> [usize; 3] {
        let [nx, ny, _] = self.nodes_per_axis();
        [index % nx, (index / nx) % ny, index / (nx * ny)]
    }

    pub fn cell_size(&self) -> Vector3<f64> {
        cell_size(&self.bounds, self.resolution)
    }

    pub fn node_position(&self, i: usize, j: usize, k: usize) -> Point3<f64> {
        node_position(&self.bounds, self.resolution, [i, j, k])
    }

    pub fn decomposition(&self, index: usize) -> Decomposition {
        Decomposition {
            u: self.u[index],
            g: self.g[index],
        }
    }

    /// Writes the `GDFG` dump: magic, resolution (3 × `u32`), bounds min/max
    /// (6 × `f32`), then `u` and `g` per node as little-endian `f32`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = Vec::with_capacity(40 + 16 * self.num_nodes());
        out.extend_from_slice(GRID_MAGIC);
        for r in self.resolution {
            out.extend_from_slice(&(r as u32).to_le_bytes());
        }
        for c in self.bounds.min.iter().chain(self.bounds.max.iter()) {
            out.extend_from_slice(&(*c as f32).to_le_bytes());
        }
        for u in &self.u {
            out.extend_from_slice(&(*u as f32).to_le_bytes());
        }
        for g in &self.g {
            for c in g.iter() {
                out.extend_from_slice(&(*c as f32).to_le_bytes());
            }
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = geometry::read_all(path)?;
        if bytes.len() < 40 || &bytes[..4] != GRID_MAGIC {
            return Err(Error::format(path, 0, "not a GDFG grid dump"));
        }
        let word = |i: usize| -> [u8; 4] { bytes[i..i + 4].try_into().unwrap() };
        let resolution = [0, 1, 2].map(|a| u32::from_le_bytes(word(4 + 4 * a)) as usize);
        let b = [0, 1, 2, 3, 4, 5].map(|a| f32::from_le_bytes(word(16 + 4 * a)) as f64);
        let bounds = Aabb::new(Point3::new(b[0], b[1], b[2]), Point3::new(b[3], b[4], b[5]));
        let n: usize = resolution.iter().map(|r| r + 1).product();
        if bytes.len() != 40 + 16 * n {
            return Err(Error::format(
                path,
                0,
                format!(
                    "expected {} bytes for a {resolution:?} grid, found {}",
                    40 + 16 * n,
                    bytes.len()
                ),
            ));
        }
        let f = |i: usize| f32::from_le_bytes(word(40 + 4 * i)) as f64;
        let u = (0..n).map(f).collect();
        let g = (0..n)
            .map(|i| Vector3::new(f(n + 3 * i), f(n + 3 * i + 1), f(n + 3 * i + 2)))
            .collect();
        Ok(Self {
            resolution,
            bounds,
            u,
            g,
        })
    }
}

fn cell_size(bounds: &Aabb, resolution: [usize; 3]) -> Vector3<f64> {
    let e = bounds.extent();
    Vector3::new(
        e.x / resolution[0] as f64,
        e.y / resolution[1] as f64,
        e.z / resolution[2] as f64,
    )
}

fn node_position(bounds: &Aabb, resolution: [usize; 3], ijk: [usize; 3]) -> Point3<f64> {
    let mut p = bounds.min;
    for a in 0..3 {
        let t = ijk[a] as f64 / resolution[a] as f64;
        p[a] = bounds.min[a] * (1.0 - t) + bounds.max[a] * t;
    }
    p
}

/// Samples `field` at every lattice node, in cubic blocks of `DEFAULT_BLOCK` nodes.
pub fn evaluate_grid(
    field: &dyn DistanceQuery,
    resolution: [usize; 3],
    bounds: Aabb,
) -> Result<FieldGrid> {
    evaluate_grid_blocked(field, resolution, bounds, DEFAULT_BLOCK)
}

/// As [`evaluate_grid`] with an explicit block edge length; the result does not
/// depend on it.
pub fn evaluate_grid_blocked(
    field: &dyn DistanceQuery,
    resolution: [usize; 3],
    bounds: Aabb,
    block: usize,
) -> Result<FieldGrid> {
    if resolution.contains(&0) {
        return Err(Error::InvalidInput(format!(
            "grid resolution must be positive, got {resolution:?}"
        )));
    }
    if block == 0 {
        return Err(Error::InvalidInput("block size must be positive".into()));
    }
    if bounds.is_empty() || (0..3).any(|a| bounds.extent()[a] <= 0.0) {
        return Err(Error::InvalidInput("grid bounds have no volume".into()));
    }
    let nodes = resolution.map(|r| r + 1);
    let blocks = nodes.map(|n| n.div_ceil(block));
    let block_ids: Vec<[usize; 3]> = (0..blocks[2])
        .flat_map(|bz| {
            (0..blocks[1]).flat_map(move |by| (0..blocks[0]).map(move |bx| [bx, by, bz]))
        })
        .collect();

    let results: Vec<(Vec<usize>, Vec<Decomposition>)> = block_ids
        .par_iter()
        .map(|b| {
            let lo = [0, 1, 2].map(|a| b[a] * block);
            let hi = [0, 1, 2].map(|a| ((b[a] + 1) * block).min(nodes[a]));
            let mut ids = Vec::new();
            let mut points = Vec::new();
            for k in lo[2]..hi[2] {
                for j in lo[1]..hi[1] {
                    for i in lo[0]..hi[0] {
                        ids.push(i + nodes[0] * (j + nodes[1] * k));
                        points.push(node_position(&bounds, resolution, [i, j, k]));
                    }
                }
            }
            field.query(&points).map(|d| (ids, d))
        })
        .collect::<Result<_>>()?;

    let n = nodes.iter().product();
    let mut grid = FieldGrid {
        resolution,
        bounds,
        u: vec![0.0; n],
        g: vec![Vector3::zeros(); n],
    };
    for (ids, values) in results {
        for (id, d) in ids.into_iter().zip(values) {
            if !d.u.is_finite() || d.g.iter().any(|c| !c.is_finite()) {
                return Err(Error::NonFiniteField {
                    node: grid.coords(id),
                });
            }
            grid.u[id] = d.u;
            grid.g[id] = d.g;
        }
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FnField;

    fn sphere(r: f64) -> impl Fn(&Point3<f64>) -> Vector3<f64> + Sync {
        move |p| {
            let n = p.coords.norm();
            if n == 0.0 {
                Vector3::new(r, 0.0, 0.0)
            } else {
                p.coords * ((r - n) / n)
            }
        }
    }

    #[test]
    fn sphere_center_distance_is_radius() {
        let grid =
            evaluate_grid(&FnField(sphere(0.3)), [4, 4, 4], Aabb::centered_cube(0.5)).unwrap();
        let c = grid.index(2, 2, 2);
        assert_eq!(grid.node_position(2, 2, 2), Point3::origin());
        assert!((grid.u[c] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn plane_gradients_point_at_plane() {
        let plane = FnField(|p: &Point3<f64>| Vector3::new(0.0, 0.0, -p.z));
        let grid = evaluate_grid(&plane, [8, 8, 8], Aabb::centered_cube(0.5)).unwrap();
        assert_eq!(grid.g[grid.index(3, 3, 7)], Vector3::new(0.0, 0.0, -1.0));
        assert_eq!(grid.g[grid.index(3, 3, 1)], Vector3::new(0.0, 0.0, 1.0));
        assert_eq!(grid.g[grid.index(3, 3, 4)], Vector3::zeros());
    }

    #[test]
    fn blocking_does_not_change_values() {
        let f = FnField(sphere(0.31));
        let b = Aabb::centered_cube(0.5);
        let a = evaluate_grid_blocked(&f, [33, 20, 17], b, 1).unwrap();
        let c = evaluate_grid_blocked(&f, [33, 20, 17], b, 32).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn non_finite_values_name_the_node() {
        let f = FnField(|p: &Point3<f64>| {
            if p.x > 0.4 && p.y > 0.4 && p.z > 0.4 {
                Vector3::new(f64::NAN, 0.0, 0.0)
            } else {
                Vector3::new(1.0, 0.0, 0.0)
            }
        });
        let err = evaluate_grid(&f, [2, 2, 2], Aabb::centered_cube(0.5)).unwrap_err();
        assert!(matches!(err, Error::NonFiniteField { node: [2, 2, 2] }));
    }

    #[test]
    fn dump_round_trip() {
        let grid =
            evaluate_grid(&FnField(sphere(0.25)), [5, 6, 7], Aabb::centered_cube(0.5)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.gdfg");
        grid.save(&path).unwrap();
        let back = FieldGrid::load(&path).unwrap();
        assert_eq!(back.resolution, grid.resolution);
        for i in 0..grid.num_nodes() {
            assert_eq!(back.u[i], grid.u[i] as f32 as f64);
        }
        assert!(FieldGrid::load(dir.path().join("missing")).is_err());
    }
}
