use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::mesh::TriangleMesh;
use crate::{Error, Result};

/// Deterministic RNG used throughout the crate.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// How training query points are drawn around a normalized mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingConfig {
    /// Surface samples perturbed by Gaussian offsets.
    pub n_near_surface: usize,
    /// Samples uniform in `[-uniform_half_extent, uniform_half_extent]³`.
    pub n_uniform: usize,
    /// Offset standard deviations as fractions of the bounding-box diagonal. The first
    /// half of the near-surface points uses `sigma_near[0]`, the second half `sigma_near[1]`.
    pub sigma_near: [f64; 2],
    pub uniform_half_extent: f64,
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            n_near_surface: 400_000,
            n_uniform: 20_000,
            sigma_near: [0.005, 0.0005],
            uniform_half_extent: 0.55,
            seed: 0,
        }
    }
}

impl SamplingConfig {
    pub fn with_counts(n_near_surface: usize, n_uniform: usize) -> Self {
        Self {
            n_near_surface,
            n_uniform,
            ..Self::default()
        }
    }

    pub fn total(&self) -> usize {
        self.n_near_surface + self.n_uniform
    }
}

/// Area-weighted point sampler over the faces of a mesh.
#[derive(Debug, Clone)]
pub struct SurfaceSampler<'a> {
    mesh: &'a TriangleMesh,
    cdf: Vec<f64>,
}

impl<'a> SurfaceSampler<'a> {
    pub fn new(mesh: &'a TriangleMesh) -> Result<Self> {
        let mut cdf = Vec::with_capacity(mesh.triangles.len());
        let mut acc = 0.0;
        for t in 0..mesh.triangles.len() {
            acc += mesh.triangle_area(t);
            cdf.push(acc);
        }
        if !(acc > 0.0) {
            return Err(Error::InvalidInput("mesh has zero surface area".into()));
        }
        for c in &mut cdf {
            *c /= acc;
        }
        Ok(Self { mesh, cdf })
    }

    /// One uniformly distributed surface point and the face it lies on.
    pub fn sample(&self, rng: &mut impl Rng) -> (Point3<f64>, usize) {
        let r: f64 = rng.random();
        let t = self
            .cdf
            .partition_point(|&c| c <= r)
            .min(self.cdf.len() - 1);
        let [a, b, c] = self.mesh.triangle(t);
        let s: f64 = rng.random::<f64>().sqrt();
        let w: f64 = rng.random();
        let p = a.coords * (1.0 - s) + b.coords * (s * (1.0 - w)) + c.coords * (s * w);
        (Point3::from(p), t)
    }

    pub fn sample_n(&self, n: usize, rng: &mut impl Rng) -> Vec<(Point3<f64>, usize)> {
        (0..n).map(|_| self.sample(rng)).collect()
    }
}

/// Training query points: near-surface samples (in two Gaussian shells) followed by
/// uniform volume samples. Deterministic in `config.seed`.
pub fn sample_training_points(
    mesh: &TriangleMesh,
    config: &SamplingConfig,
) -> Result<Vec<Point3<f64>>> {
    let mut rng = seeded_rng(config.seed);
    let sampler = SurfaceSampler::new(mesh)?;
    let diag = mesh.bounds().diagonal();
    let sigmas = [config.sigma_near[0] * diag, config.sigma_near[1] * diag];
    let n_first = config.n_near_surface - config.n_near_surface / 2;
    let mut points = Vec::with_capacity(config.total());
    for i in 0..config.n_near_surface {
        let sigma = if i < n_first { sigmas[0] } else { sigmas[1] };
        let (p, _) = sampler.sample(&mut rng);
        let offset = gaussian_vector(&mut rng) * sigma;
        points.push(p + offset);
    }
    let h = config.uniform_half_extent;
    for _ in 0..config.n_uniform {
        let p = Point3::new(
            rng.random_range(-h..h),
            rng.random_range(-h..h),
            rng.random_range(-h..h),
        );
        points.push(p);
    }
    Ok(points)
}

pub(crate) fn gaussian_vector(rng: &mut impl Rng) -> Vector3<f64> {
    Vector3::new(
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
    )
}
