//! Small procedural surfaces, mostly open, used as synthetic test shapes.

use std::f64::consts::PI;

use nalgebra::Point3;

use super::mesh::TriangleMesh;

/// Triangulates an `(nu + 1) × (nv + 1)` vertex lattice produced by `f(s, t)` over
/// `[0, 1]²`.
fn lattice(nu: usize, nv: usize, f: impl Fn(f64, f64) -> Point3<f64>) -> TriangleMesh {
    let mut vertices = Vec::with_capacity((nu + 1) * (nv + 1));
    for j in 0..=nv {
        for i in 0..=nu {
            vertices.push(f(i as f64 / nu as f64, j as f64 / nv as f64));
        }
    }
    let id = |i: usize, j: usize| (i + (nu + 1) * j) as u32;
    let mut triangles = Vec::with_capacity(2 * nu * nv);
    for j in 0..nv {
        for i in 0..nu {
            triangles.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            triangles.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    TriangleMesh::new(vertices, triangles)
}

/// Axis-aligned square `[-half, half]²` in the plane `z = height`, split into `n × n` quads.
pub fn plane_patch(n: usize, half: f64, height: f64) -> TriangleMesh {
    lattice(n, n, |s, t| {
        Point3::new(-half + 2.0 * half * s, -half + 2.0 * half * t, height)
    })
}

/// Upper half of a sphere of `radius` centred at the origin, open along the equator.
pub fn hemisphere_patch(n: usize, radius: f64) -> TriangleMesh {
    let mut mesh = lattice(4 * n, n, |s, t| {
        let phi = 2.0 * PI * s;
        let theta = 0.5 * PI * t;
        Point3::new(
            radius * theta.cos() * phi.cos(),
            radius * theta.cos() * phi.sin(),
            radius * theta.sin(),
        )
    });
    mesh.drop_degenerate();
    mesh
}

/// Half of an open cylinder of `radius` around the z axis, spanning `z ∈ [-half_height, half_height]`
/// and the angles `[0, π]`.
pub fn cylinder_patch(n: usize, radius: f64, half_height: f64) -> TriangleMesh {
    lattice(2 * n, n, |s, t| {
        let phi = PI * s;
        Point3::new(
            radius * phi.cos(),
            radius * phi.sin(),
            -half_height + 2.0 * half_height * t,
        )
    })
}

/// Closed latitude/longitude sphere with shared poles.
pub fn uv_sphere(n: usize, radius: f64) -> TriangleMesh {
    let rings = n.max(2);
    let segments = 2 * rings;
    let mut vertices = vec![Point3::new(0.0, 0.0, radius)];
    for r in 1..rings {
        let theta = PI * r as f64 / rings as f64;
        for s in 0..segments {
            let phi = 2.0 * PI * s as f64 / segments as f64;
            vertices.push(Point3::new(
                radius * theta.sin() * phi.cos(),
                radius * theta.sin() * phi.sin(),
                radius * theta.cos(),
            ));
        }
    }
    vertices.push(Point3::new(0.0, 0.0, -radius));
    let south = (vertices.len() - 1) as u32;
    let ring = |r: usize, s: usize| (1 + (r - 1) * segments + s % segments) as u32;
    let mut triangles = Vec::new();
    for s in 0..segments {
        triangles.push([0, ring(1, s), ring(1, s + 1)]);
        triangles.push([south, ring(rings - 1, s + 1), ring(rings - 1, s)]);
    }
    for r in 1..rings - 1 {
        for s in 0..segments {
            triangles.push([ring(r, s), ring(r + 1, s), ring(r + 1, s + 1)]);
            triangles.push([ring(r, s), ring(r + 1, s + 1), ring(r, s + 1)]);
        }
    }
    TriangleMesh::new(vertices, triangles)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plane_patch_is_a_disk() {
        let m = plane_patch(4, 0.5, 0.0);
        assert_eq!(m.num_triangles(), 32);
        assert_eq!(m.euler_characteristic(), 1);
        assert!((m.surface_area() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sphere_is_closed() {
        let m = uv_sphere(8, 0.4);
        assert_eq!(m.euler_characteristic(), 2);
        assert_eq!(m.boundary_edge_count(), 0);
        m.validate().unwrap();
    }

    #[test]
    fn open_patches_have_boundaries() {
        let c = cylinder_patch(6, 0.3, 0.2);
        assert!(c.boundary_edge_count() > 0);
        assert_eq!(c.euler_characteristic(), 1);
        let h = hemisphere_patch(6, 0.4);
        assert!(h.boundary_edge_count() > 0);
        assert!(!h.triangles.is_empty());
    }
}
