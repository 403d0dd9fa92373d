//! Ground-truth gradient distance vectors and the algebra relating `v`, `u` and `g`.
//!
//! For a query `x` with closest surface point `x̂`, the field value is `v = x̂ − x`.
//! `u = ‖v‖` is the unsigned distance and `g = v / u` the unit direction towards the
//! surface. On the surface `u = 0` and `g` is the null vector.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{Point3, Vector3};
use rayon::prelude::*;

use crate::geometry::{self, Bvh, SamplingConfig, TriangleMesh};
use crate::{Error, Result};

/// Distances below this are treated as zero and get a null gradient.
pub const ZERO_DISTANCE: f64 = 1e-12;

/// Query point paired with its field vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GdfSample {
    pub x: Point3<f64>,
    pub v: Vector3<f64>,
}

impl GdfSample {
    pub fn closest_point(&self) -> Point3<f64> {
        self.x + self.v
    }
}

/// Unsigned distance and unit gradient recovered from a field vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decomposition {
    pub u: f64,
    pub g: Vector3<f64>,
}

impl Decomposition {
    pub fn recompose(&self) -> Vector3<f64> {
        self.g * self.u
    }
}

pub fn decompose(v: &Vector3<f64>) -> Decomposition {
    let u = v.norm();
    if u < ZERO_DISTANCE {
        Decomposition {
            u: 0.0,
            g: Vector3::zeros(),
        }
    } else {
        Decomposition { u, g: v / u }
    }
}

/// What a network is trained to output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Representation {
    /// The field vector `v`.
    Gdf,
    /// The unsigned distance `‖v‖`.
    Udf,
    /// The closest surface point `x + v`, as an absolute position.
    Csp,
}

impl Representation {
    pub const ALL: [Representation; 3] = [
        Representation::Gdf,
        Representation::Udf,
        Representation::Csp,
    ];

    /// Output width for a field over `spatial_dim`-dimensional space.
    pub fn output_dim(self, spatial_dim: usize) -> usize {
        match self {
            Representation::Udf => 1,
            Representation::Gdf | Representation::Csp => spatial_dim,
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Representation::Gdf => 0,
            Representation::Udf => 1,
            Representation::Csp => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Representation::Gdf),
            1 => Ok(Representation::Udf),
            2 => Ok(Representation::Csp),
            _ => Err(Error::InvalidInput(format!(
                "unknown representation tag {tag}"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Representation::Gdf => "gdf",
            Representation::Udf => "udf",
            Representation::Csp => "csp",
        }
    }
}

impl std::str::FromStr for Representation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gdf" => Ok(Representation::Gdf),
            "udf" => Ok(Representation::Udf),
            "csp" => Ok(Representation::Csp),
            _ => Err(Error::InvalidInput(format!("unknown representation '{s}'"))),
        }
    }
}

impl std::fmt::Display for Representation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Regression target: up to three components, `dim` of which are used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Target {
    values: [f64; 3],
    dim: usize,
}

impl Target {
    pub fn as_slice(&self) -> &[f64] {
        &self.values[..self.dim]
    }
}

pub fn target_for(representation: Representation, sample: &GdfSample) -> Target {
    match representation {
        Representation::Gdf => Target {
            values: sample.v.into(),
            dim: 3,
        },
        Representation::Udf => Target {
            values: [sample.v.norm(), 0.0, 0.0],
            dim: 1,
        },
        Representation::Csp => Target {
            values: sample.closest_point().coords.into(),
            dim: 3,
        },
    }
}

/// Ground truth at `x`: the vector to the exact nearest point of `mesh`.
pub fn gdf_ground_truth(bvh: &Bvh, mesh: &TriangleMesh, x: &Point3<f64>) -> GdfSample {
    let hit = bvh.closest_point(mesh, x);
    GdfSample {
        x: *x,
        v: hit.point - x,
    }
}

/// Query points with their ground-truth field vectors, all for one shape.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingSet {
    pub samples: Vec<GdfSample>,
    pub shape_id: u32,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Shortens every `v` longer than `max_distance` to that length. Not applied by default.
    pub fn clamp_distances(&mut self, max_distance: f64) {
        for s in &mut self.samples {
            let n = s.v.norm();
            if n > max_distance {
                s.v *= max_distance / n;
            }
        }
    }
}

pub fn ground_truth_for_points(
    mesh: &TriangleMesh,
    bvh: &Bvh,
    points: &[Point3<f64>],
) -> Vec<GdfSample> {
    points
        .par_iter()
        .map(|x| gdf_ground_truth(bvh, mesh, x))
        .collect()
}

/// Samples query points around a normalized mesh and attaches ground-truth vectors.
pub fn build_training_set(mesh: &TriangleMesh, config: &SamplingConfig) -> Result<TrainingSet> {
    let points = geometry::sample_training_points(mesh, config)?;
    let bvh = Bvh::build(mesh);
    Ok(TrainingSet {
        samples: ground_truth_for_points(mesh, &bvh, &points),
        shape_id: 0,
    })
}

/// A field that can be queried for `(u, g)` at arbitrary points.
pub trait DistanceQuery: Sync {
    fn query(&self, points: &[Point3<f64>]) -> Result<Vec<Decomposition>>;
}

/// Exact field of a mesh, answered by closest-point queries.
#[derive(Debug, Clone)]
pub struct MeshField<'a> {
    pub mesh: &'a TriangleMesh,
    pub bvh: Bvh,
}

impl<'a> MeshField<'a> {
    pub fn new(mesh: &'a TriangleMesh) -> Self {
        Self {
            bvh: Bvh::build(mesh),
            mesh,
        }
    }

    pub fn vector(&self, x: &Point3<f64>) -> Vector3<f64> {
        gdf_ground_truth(&self.bvh, self.mesh, x).v
    }
}

impl DistanceQuery for MeshField<'_> {
    fn query(&self, points: &[Point3<f64>]) -> Result<Vec<Decomposition>> {
        Ok(points
            .par_iter()
            .map(|x| decompose(&self.vector(x)))
            .collect())
    }
}

/// Closure-backed field, for analytic surfaces.
pub struct FnField<F>(pub F);

impl<F> DistanceQuery for FnField<F>
where
    F: Fn(&Point3<f64>) -> Vector3<f64> + Sync,
{
    fn query(&self, points: &[Point3<f64>]) -> Result<Vec<Decomposition>> {
        Ok(points.iter().map(|p| decompose(&(self.0)(p))).collect())
    }
}

const SAMPLE_MAGIC: &[u8; 4] = b"GDFS";
const SAMPLE_VERSION: u32 = 1;

/// Writes the binary sample cache: magic, version, count, then six `f32` per record.
pub fn write_sample_cache(set: &TrainingSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut write = || -> std::io::Result<()> {
        w.write_all(SAMPLE_MAGIC)?;
        w.write_all(&SAMPLE_VERSION.to_le_bytes())?;
        w.write_all(&(set.samples.len() as u64).to_le_bytes())?;
        for s in &set.samples {
            for c in [s.x.x, s.x.y, s.x.z, s.v.x, s.v.y, s.v.z] {
                w.write_all(&(c as f32).to_le_bytes())?;
            }
        }
        w.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

pub fn read_sample_cache(path: impl AsRef<Path>, shape_id: u32) -> Result<TrainingSet> {
    let path = path.as_ref();
    let bytes = geometry::read_all(path)?;
    if bytes.len() < 16 || &bytes[..4] != SAMPLE_MAGIC {
        return Err(Error::format(path, 0, "not a GDFS sample cache"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != SAMPLE_VERSION {
        return Err(Error::format(
            path,
            0,
            format!("unsupported GDFS version {version}"),
        ));
    }
    let count = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body = &bytes[16..];
    if body.len() != count * 24 {
        return Err(Error::format(
            path,
            0,
            format!("expected {count} records, found {} bytes", body.len()),
        ));
    }
    let samples = body
        .chunks_exact(24)
        .map(|rec| {
            let f = |i: usize| f32::from_le_bytes(rec[i * 4..i * 4 + 4].try_into().unwrap()) as f64;
            GdfSample {
                x: Point3::new(f(0), f(1), f(2)),
                v: Vector3::new(f(3), f(4), f(5)),
            }
        })
        .collect();
    Ok(TrainingSet { samples, shape_id })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::seeded_rng;
    use proptest::prelude::*;
    use rand::Rng;

    /// Square patch [-0.4, 0.4]² in the z = 0 plane.
    fn patch() -> TriangleMesh {
        TriangleMesh::new(
            vec![
                Point3::new(-0.4, -0.4, 0.0),
                Point3::new(0.4, -0.4, 0.0),
                Point3::new(0.4, 0.4, 0.0),
                Point3::new(-0.4, 0.4, 0.0),
            ],
            vec![[0, 1, 2], [0, 2, 3]],
        )
    }

    #[test]
    fn decompose_examples() {
        let d = decompose(&Vector3::new(3.0, 0.0, 4.0));
        assert_eq!(d.u, 5.0);
        assert!((d.g - Vector3::new(0.6, 0.0, 0.8)).norm() < 1e-15);
        let d = decompose(&Vector3::zeros());
        assert_eq!(d.u, 0.0);
        assert_eq!(d.g, Vector3::zeros());
        let d = decompose(&Vector3::new(1e-13, 0.0, 0.0));
        assert_eq!(d.g, Vector3::zeros());
    }

    proptest! {
        #[test]
        fn recompose_is_identity(x in -10.0f64..10.0, y in -10.0f64..10.0, z in -10.0f64..10.0) {
            let v = Vector3::new(x, y, z);
            let d = decompose(&v);
            prop_assert!((d.recompose() - v).norm() <= 1e-12 * v.norm().max(1.0));
            if d.u > 0.0 {
                prop_assert!((d.g.norm() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn targets_per_representation() {
        let s = GdfSample {
            x: Point3::origin(),
            v: Vector3::new(1.0, 2.0, 2.0),
        };
        assert_eq!(
            target_for(Representation::Gdf, &s).as_slice(),
            &[1.0, 2.0, 2.0]
        );
        assert_eq!(target_for(Representation::Udf, &s).as_slice(), &[3.0]);
        assert_eq!(
            target_for(Representation::Csp, &s).as_slice(),
            &[1.0, 2.0, 2.0]
        );
        let s = GdfSample {
            x: Point3::new(1.0, 1.0, 1.0),
            ..s
        };
        assert_eq!(
            target_for(Representation::Csp, &s).as_slice(),
            &[2.0, 3.0, 3.0]
        );
        for r in Representation::ALL {
            assert_eq!(Representation::from_tag(r.tag()).unwrap(), r);
            assert_eq!(r.name().parse::<Representation>().unwrap(), r);
            assert_eq!(target_for(r, &s).as_slice().len(), r.output_dim(3));
        }
    }

    #[test]
    fn ground_truth_above_plane() {
        let mesh = patch();
        let bvh = Bvh::build(&mesh);
        let s = gdf_ground_truth(&bvh, &mesh, &Point3::new(0.1, 0.05, 0.3));
        assert!((s.v - Vector3::new(0.0, 0.0, -0.3)).norm() < 1e-15);
        let on = Point3::new(0.1, -0.2, 0.0);
        assert!(gdf_ground_truth(&bvh, &mesh, &on).v.norm() < 1e-15);
    }

    #[test]
    fn sign_flips_once_across_plane() {
        let mesh = patch();
        let field = MeshField::new(&mesh);
        let dir = Vector3::new(0.3, -0.2, 1.0).normalize();
        let crossing = Point3::new(0.05, 0.1, 0.0);
        let ts: Vec<f64> = (-20..=20).map(|k| k as f64 * 0.005).collect();
        let vs: Vec<Vector3<f64>> = ts
            .iter()
            .map(|t| field.vector(&(crossing + dir * *t)))
            .collect();
        let signs: Vec<f64> = vs
            .iter()
            .filter(|v| v.z.abs() > 1e-12)
            .map(|v| v.z.signum())
            .collect();
        let flips = signs.windows(2).filter(|w| w[0] != w[1]).count();
        assert_eq!(flips, 1);
        let (zero, _) = vs
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
            .unwrap();
        assert_eq!(ts[zero], 0.0);
        assert!(vs[zero].norm() < 1e-12);
        assert!(vs[..zero].iter().all(|v| v.z > 0.0));
        assert!(vs[zero + 1..].iter().all(|v| v.z < 0.0));
        // Only the normal component survives on a planar patch.
        assert!(vs.iter().all(|v| v.x.abs() < 1e-12 && v.y.abs() < 1e-12));
    }

    #[test]
    fn gradient_matches_analytic_plane_distance() {
        let mesh = patch();
        let field = MeshField::new(&mesh);
        let mut rng = seeded_rng(2);
        for _ in 0..200 {
            let x = Point3::new(
                rng.random_range(-0.3..0.3),
                rng.random_range(-0.3..0.3),
                rng.random_range(-0.05..0.05),
            );
            if x.z == 0.0 {
                continue;
            }
            let g = decompose(&field.vector(&x)).g;
            // d(x) = |z|, ∇d = sign(z)·ez, g = −∇d.
            let expected = Vector3::new(0.0, 0.0, -x.z.signum());
            assert!((g - expected).norm() < 1e-9);
        }
    }

    #[test]
    fn plane_samples_land_on_plane() {
        let mesh = patch();
        let config = SamplingConfig {
            seed: 5,
            ..SamplingConfig::with_counts(950, 50)
        };
        let set = build_training_set(&mesh, &config).unwrap();
        assert_eq!(set.len(), 1000);
        for s in &set.samples {
            let p = s.closest_point();
            assert!(p.z.abs() < 1e-9);
            assert!(p.x.abs() <= 0.4 + 1e-9 && p.y.abs() <= 0.4 + 1e-9);
        }
        let other = build_training_set(&mesh, &SamplingConfig { seed: 6, ..config }).unwrap();
        assert_ne!(other.samples[0].x, set.samples[0].x);
    }

    #[test]
    fn cache_round_trip_is_bitwise() {
        let mesh = patch();
        let set = build_training_set(&mesh, &SamplingConfig::with_counts(300, 20)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.gdfs");
        let p2 = dir.path().join("b.gdfs");
        write_sample_cache(&set, &p1).unwrap();
        let back = read_sample_cache(&p1, 0).unwrap();
        assert_eq!(back.len(), set.len());
        for (a, b) in back.samples.iter().zip(&set.samples) {
            assert_eq!(a.x.x, b.x.x as f32 as f64);
            assert_eq!(a.v.z, b.v.z as f32 as f64);
        }
        write_sample_cache(&back, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        let bytes = std::fs::read(&p1).unwrap();
        assert_eq!(&bytes[..4], b"GDFS");
        assert_eq!(bytes.len(), 16 + 24 * 320);
    }

    #[test]
    fn truncated_cache_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.gdfs");
        let mut bytes = b"GDFS".to_vec();
        bytes.extend(1u32.to_le_bytes());
        bytes.extend(2u64.to_le_bytes());
        bytes.extend([0u8; 30]);
        std::fs::write(&p, bytes).unwrap();
        assert!(matches!(
            read_sample_cache(&p, 0),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn clamping_is_opt_in() {
        let mut set = TrainingSet {
            samples: vec![GdfSample {
                x: Point3::origin(),
                v: Vector3::new(0.0, 3.0, 4.0),
            }],
            shape_id: 0,
        };
        set.clamp_distances(1.0);
        assert!((set.samples[0].v - Vector3::new(0.0, 0.6, 0.8)).norm() < 1e-15);
    }
}
