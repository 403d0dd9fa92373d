//! Reconstruction metrics: Chamfer distance, normal consistency, Hausdorff distance
//! and near-surface distance/gradient errors of a field.

use std::fmt;

use nalgebra::Point3;
use rayon::prelude::*;

use crate::field::{DistanceQuery, MeshField};
use crate::geometry::{seeded_rng, Aabb, Bvh, PointIndex, SurfaceSampler, TriangleMesh};
use crate::meshing::FieldGrid;
use crate::{Error, Result};

/// Default number of surface samples per mesh.
pub const DEFAULT_SAMPLES: usize = 30_000;

/// Chamfer values are reported multiplied by this.
pub const CD_SCALE: f64 = 1e4;

fn surface_samples(
    mesh: &TriangleMesh,
    n: usize,
    seed: u64,
    which: &str,
) -> Result<Vec<(Point3<f64>, usize)>> {
    if mesh.is_empty() {
        return Err(Error::InvalidInput(format!("{which} mesh is empty")));
    }
    if n == 0 {
        return Err(Error::InvalidInput("sample count must be positive".into()));
    }
    let sampler = SurfaceSampler::new(mesh)?;
    Ok(sampler.sample_n(n, &mut seeded_rng(seed)))
}

/// Mean nearest-neighbour distance (squared or not) from `from` to `to`.
fn mean_nn(from: &[(Point3<f64>, usize)], to: &PointIndex, squared: bool) -> f64 {
    let d: Vec<f64> = from
        .par_iter()
        .map(|(p, _)| {
            let (_, d2) = to.nearest(p).expect("non-empty index");
            if squared {
                d2
            } else {
                d2.sqrt()
            }
        })
        .collect();
    d.iter().sum::<f64>() / d.len() as f64
}

/// Symmetric Chamfer distance between point samples of two meshes.
///
/// Each mesh gets `n_samples` area-weighted samples drawn with `seed`, so swapping
/// the arguments gives exactly the same value. With `squared` the inner distance is
/// squared.
pub fn chamfer(
    a: &TriangleMesh,
    b: &TriangleMesh,
    n_samples: usize,
    seed: u64,
    squared: bool,
) -> Result<f64> {
    let sa = surface_samples(a, n_samples, seed, "first")?;
    let sb = surface_samples(b, n_samples, seed, "second")?;
    let ia = PointIndex::new(sa.iter().map(|s| s.0).collect());
    let ib = PointIndex::new(sb.iter().map(|s| s.0).collect());
    Ok(mean_nn(&sa, &ib, squared) + mean_nn(&sb, &ia, squared))
}

/// Chamfer distance with squared inner distances.
pub fn chamfer_l2(a: &TriangleMesh, b: &TriangleMesh, n_samples: usize, seed: u64) -> Result<f64> {
    chamfer(a, b, n_samples, seed, true)
}

fn mean_abs_cos(
    from: &[(Point3<f64>, usize)],
    from_mesh: &TriangleMesh,
    to: &TriangleMesh,
    bvh: &Bvh,
) -> f64 {
    let c: Vec<f64> = from
        .par_iter()
        .map(|(p, t)| {
            let n_from = from_mesh.triangle_normal(*t);
            let hit = bvh.closest_point(to, p);
            n_from.dot(&to.triangle_normal(hit.triangle_id)).abs()
        })
        .collect();
    c.iter().sum::<f64>() / c.len() as f64
}

/// Mean `|cos|` between face normals at samples of one mesh and the face normal at the
/// nearest point of the other, averaged over both directions. Orientation is ignored.
pub fn normal_consistency(
    a: &TriangleMesh,
    b: &TriangleMesh,
    n_samples: usize,
    seed: u64,
) -> Result<f64> {
    let sa = surface_samples(a, n_samples, seed, "first")?;
    let sb = surface_samples(b, n_samples, seed, "second")?;
    let ba = Bvh::build(a);
    let bb = Bvh::build(b);
    Ok(0.5 * (mean_abs_cos(&sa, a, b, &bb) + mean_abs_cos(&sb, b, a, &ba)))
}

/// Largest distance from a sample of one mesh (or one of its vertices) to the other mesh.
pub fn hausdorff(a: &TriangleMesh, b: &TriangleMesh, n_samples: usize, seed: u64) -> Result<f64> {
    let sa = surface_samples(a, n_samples, seed, "first")?;
    let sb = surface_samples(b, n_samples, seed, "second")?;
    let one_way = |from: &[(Point3<f64>, usize)], verts: &[Point3<f64>], to: &TriangleMesh| {
        let bvh = Bvh::build(to);
        from.iter()
            .map(|s| &s.0)
            .chain(verts)
            .map(|p| bvh.closest_point(to, p).distance)
            .fold(0.0, f64::max)
    };
    Ok(one_way(&sa, &a.vertices, b).max(one_way(&sb, &b.vertices, a)))
}

/// Hausdorff distance between a mesh and a surface known through points on it and
/// its distance function.
pub fn hausdorff_to_surface(
    mesh: &TriangleMesh,
    surface_points: &[Point3<f64>],
    surface_distance: impl Fn(&Point3<f64>) -> f64,
    n_samples: usize,
    seed: u64,
) -> Result<f64> {
    let samples = surface_samples(mesh, n_samples, seed, "reconstructed")?;
    let to_surface = samples
        .iter()
        .map(|s| &s.0)
        .chain(&mesh.vertices)
        .map(&surface_distance)
        .fold(0.0, f64::max);
    let bvh = Bvh::build(mesh);
    let to_mesh = surface_points
        .iter()
        .map(|p| bvh.closest_point(mesh, p).distance)
        .fold(0.0, f64::max);
    Ok(to_surface.max(to_mesh))
}

/// Distance and gradient errors of a field at lattice nodes near the true surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldError {
    /// Mean `|u_pred − u_true|`.
    pub dist_err: f64,
    /// Mean L1 norm of `g_pred − g_true`.
    pub grad_err: f64,
    /// Number of nodes that qualified.
    pub nodes: usize,
}

/// Compares `field` with the exact field of `gt` at the nodes of a `resolution`³
/// lattice over `bounds` whose true distance is below `threshold_cells` cell sizes.
pub fn near_surface_field_error(
    field: &dyn DistanceQuery,
    gt: &TriangleMesh,
    resolution: usize,
    bounds: Aabb,
    threshold_cells: f64,
) -> Result<FieldError> {
    if resolution == 0 {
        return Err(Error::InvalidInput("resolution must be positive".into()));
    }
    let truth = MeshField::new(gt);
    let grid = FieldGrid {
        resolution: [resolution; 3],
        bounds,
        u: Vec::new(),
        g: Vec::new(),
    };
    let cell = grid.cell_size().max();
    let threshold = threshold_cells * cell;
    let nodes: Vec<Point3<f64>> = (0..grid.num_nodes())
        .map(|id| {
            let [i, j, k] = grid.coords(id);
            grid.node_position(i, j, k)
        })
        .collect();
    let exact = truth.query(&nodes)?;
    let (close, close_truth): (Vec<Point3<f64>>, Vec<_>) = nodes
        .iter()
        .zip(&exact)
        .filter(|(_, d)| d.u < threshold)
        .map(|(p, d)| (*p, *d))
        .unzip();
    if close.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no lattice node lies within {threshold_cells} cells of the surface"
        )));
    }
    let predicted = field.query(&close)?;
    let mut dist = 0.0;
    let mut grad = 0.0;
    for (p, t) in predicted.iter().zip(&close_truth) {
        dist += (p.u - t.u).abs();
        grad += (p.g - t.g).abs().sum();
    }
    let n = close.len() as f64;
    Ok(FieldError {
        dist_err: dist / n,
        grad_err: grad / n,
        nodes: close.len(),
    })
}

/// One evaluated reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub method: String,
    pub shape: String,
    /// Chamfer distance × 10⁴.
    pub cd_x1e4: f64,
    /// Normal consistency in percent.
    pub nc_pct: f64,
    pub dist_err: Option<f64>,
    pub grad_err: Option<f64>,
    pub n_samples: usize,
    pub seed: u64,
}

impl EvalReport {
    pub const CSV_HEADER: &'static str =
        "method,shape,cd_x1e4,nc_pct,dist_err,grad_err,n_samples,seed";

    /// Chamfer distance and normal consistency of `pred` against `gt`.
    pub fn compare_meshes(
        method: &str,
        shape: &str,
        pred: &TriangleMesh,
        gt: &TriangleMesh,
        n_samples: usize,
        seed: u64,
        squared: bool,
    ) -> Result<Self> {
        let cd = chamfer(pred, gt, n_samples, seed, squared)?;
        let nc = normal_consistency(pred, gt, n_samples, seed)?;
        Ok(Self {
            method: method.to_string(),
            shape: shape.to_string(),
            cd_x1e4: cd * CD_SCALE,
            nc_pct: nc * 100.0,
            dist_err: None,
            grad_err: None,
            n_samples,
            seed,
        })
    }

    pub fn with_field_error(mut self, err: &FieldError) -> Self {
        self.dist_err = Some(err.dist_err);
        self.grad_err = Some(err.grad_err);
        self
    }

    /// CSV row matching [`Self::CSV_HEADER`]; missing field errors are left empty.
    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{}",
            csv_field(&self.method),
            csv_field(&self.shape),
            self.cd_x1e4,
            self.nc_pct,
            opt(self.dist_err),
            opt(self.grad_err),
            self.n_samples,
            self.seed
        )
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.3e}")).unwrap_or_else(|| "-".into());
        writeln!(f, "method     {}", self.method)?;
        writeln!(f, "shape      {}", self.shape)?;
        writeln!(f, "CD (x1e4)  {:.4}", self.cd_x1e4)?;
        writeln!(f, "NC (%)     {:.2}", self.nc_pct)?;
        writeln!(f, "dist err   {}", opt(self.dist_err))?;
        writeln!(f, "grad err   {}", opt(self.grad_err))?;
        write!(f, "samples    {} (seed {})", self.n_samples, self.seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(z: f64) -> TriangleMesh {
        TriangleMesh::new(
            vec![
                Point3::new(0.0, 0.0, z),
                Point3::new(1.0, 0.0, z),
                Point3::new(1.0, 1.0, z),
                Point3::new(0.0, 1.0, z),
            ],
            vec![[0, 1, 2], [0, 2, 3]],
        )
    }

    #[test]
    fn identical_meshes_have_zero_chamfer() {
        let m = square(0.0);
        assert!(chamfer_l2(&m, &m, 2000, 1).unwrap() < 1e-12);
        assert!((normal_consistency(&m, &m, 2000, 1).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn chamfer_is_symmetric() {
        let a = square(0.0);
        let b = square(0.1).map_vertices(|p| Point3::new(p.x * 0.8, p.y, p.z + p.x * 0.1));
        assert_eq!(
            chamfer_l2(&a, &b, 3000, 4).unwrap(),
            chamfer_l2(&b, &a, 3000, 4).unwrap()
        );
    }

    #[test]
    fn flipped_orientation_keeps_consistency() {
        let a = square(0.0);
        let mut b = a.clone();
        for t in &mut b.triangles {
            t.swap(1, 2);
        }
        assert!((normal_consistency(&a, &b, 1000, 0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_mesh_is_rejected() {
        let a = square(0.0);
        assert!(matches!(
            chamfer_l2(&a, &TriangleMesh::default(), 10, 0),
            Err(Error::InvalidInput(_))
        ));
        assert!(normal_consistency(&TriangleMesh::default(), &a, 10, 0).is_err());
    }

    #[test]
    fn csv_row_has_header_arity() {
        let r = EvalReport {
            method: "gdf".into(),
            shape: "a,b".into(),
            cd_x1e4: 1.5,
            nc_pct: 99.0,
            dist_err: Some(0.001),
            grad_err: None,
            n_samples: 10,
            seed: 3,
        };
        assert_eq!(r.csv_row(), "gdf,\"a,b\",1.5,99,0.001,,10,3");
    }
}
