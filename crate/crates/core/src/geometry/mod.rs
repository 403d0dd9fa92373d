//! Mesh I/O, normalization, exact closest-point queries and training-point sampling.

mod bvh;
mod io;
mod kdtree;
mod mesh;
mod sampling;
pub mod shapes;

pub use bvh::{closest_point_on_segment, closest_point_on_triangle, Bvh, ClosestPointResult};
pub(crate) use io::read_all;
pub use io::{load_mesh, load_raw, save_mesh, write_obj, write_ply, LoadReport, MeshFormat};
pub use kdtree::PointIndex;
pub use mesh::{normalize_mesh, Aabb, NormalizeTransform, TriangleMesh, DEGENERATE_AREA};
pub(crate) use sampling::gaussian_vector;
pub use sampling::{sample_training_points, seeded_rng, SamplingConfig, SurfaceSampler};

/// Exact nearest surface point of `q` on `mesh`, using `bvh` built from the same mesh.
pub fn closest_point_mesh(
    bvh: &Bvh,
    mesh: &TriangleMesh,
    q: &nalgebra::Point3<f64>,
) -> ClosestPointResult {
    bvh.closest_point(mesh, q)
}
