//! Fitting a latent code of a trained auto-decoder to a raw point cloud.

use nalgebra::Point3;
use ndarray::Array2;
use rand::Rng;

use super::adam::{AdamConfig, AdamState};
use super::loss::{self, Loss};
use super::model::{LatentTable, NeuralField};
use super::train::RegressionData;
use crate::geometry::{gaussian_vector, seeded_rng, Aabb, PointIndex};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LatentFitConfig {
    pub iterations: usize,
    pub batch_size: usize,
    /// Number of pseudo-supervised query points built from the cloud.
    pub n_queries: usize,
    /// Perturbation scales as fractions of the cloud's bounding-box diagonal.
    pub sigma_near: [f64; 2],
    /// Adds uniform-volume queries (5% of the total) in `[-h, h]³` when set.
    pub uniform_half_extent: Option<f64>,
    pub init_std: f64,
    pub loss: Loss,
    pub optimizer: AdamConfig,
    pub seed: u64,
}

impl Default for LatentFitConfig {
    fn default() -> Self {
        Self {
            iterations: 800,
            batch_size: 4096,
            n_queries: 50_000,
            sigma_near: [0.005, 0.0005],
            uniform_half_extent: None,
            init_std: 0.01,
            loss: Loss::L1,
            optimizer: AdamConfig::with_learning_rate(1e-3),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentFit {
    pub code: Vec<f32>,
    pub losses: Vec<f64>,
}

/// Query points around `cloud` paired with vectors to their nearest cloud point.
///
/// The cloud stands in for the surface: the targets are exact for the samples, not
/// for the surface they came from.
pub fn pseudo_ground_truth(
    cloud: &[Point3<f64>],
    config: &LatentFitConfig,
) -> Result<RegressionData> {
    if cloud.is_empty() {
        return Err(Error::InvalidInput("point cloud is empty".into()));
    }
    let index = PointIndex::new(cloud.to_vec());
    let diagonal = Aabb::from_points(cloud.iter()).diagonal();
    let mut rng = seeded_rng(config.seed);
    let n_uniform = if config.uniform_half_extent.is_some() {
        config.n_queries / 20
    } else {
        0
    };
    let n_near = config.n_queries - n_uniform;
    let mut queries = Vec::with_capacity(config.n_queries);
    for i in 0..n_near {
        let sigma = if i < n_near / 2 {
            config.sigma_near[0]
        } else {
            config.sigma_near[1]
        } * diagonal;
        let p = cloud[rng.random_range(0..cloud.len())];
        queries.push(p + gaussian_vector(&mut rng) * sigma);
    }
    if let Some(h) = config.uniform_half_extent {
        for _ in 0..n_uniform {
            queries.push(Point3::new(
                rng.random_range(-h..h),
                rng.random_range(-h..h),
                rng.random_range(-h..h),
            ));
        }
    }
    let mut points = Vec::with_capacity(queries.len() * 3);
    let mut vectors = Vec::with_capacity(queries.len() * 3);
    for q in &queries {
        let (j, _) = index.nearest(q).expect("non-empty cloud");
        let v = index.points()[j] - q;
        points.extend([q.x, q.y, q.z]);
        vectors.extend([v.x, v.y, v.z]);
    }
    RegressionData::new(3, points, vectors)
}

/// Optimizes a fresh code for `cloud` with the network weights frozen.
pub fn fit_latent(
    cloud: &[Point3<f64>],
    field: &NeuralField,
    config: &LatentFitConfig,
) -> Result<LatentFit> {
    let data = pseudo_ground_truth(cloud, config)?;
    fit_latent_to(&data, field, config)
}

/// As [`fit_latent`], on prepared query/vector pairs.
pub fn fit_latent_to(
    data: &RegressionData,
    field: &NeuralField,
    config: &LatentFitConfig,
) -> Result<LatentFit> {
    let cfg = *field.config();
    if cfg.latent_len == 0 {
        return Err(Error::InvalidInput("network takes no latent code".into()));
    }
    if data.is_empty() {
        return Err(Error::InvalidInput("no query points to fit against".into()));
    }
    if config.batch_size == 0 {
        return Err(Error::InvalidInput("batch size must be positive".into()));
    }
    let dim = cfg.spatial_dim;
    if data.dim != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: data.dim,
        });
    }
    let mut rng = seeded_rng(config.seed ^ 0x6c61_7465_6e74);
    let mut code = LatentTable::random(1, cfg.latent_len, config.init_std, &mut rng)
        .codes
        .remove(0);
    let targets = data.targets(field.representation);
    let out_dim = cfg.output_dim;
    let mut state = AdamState::<f32>::new(cfg.latent_len);
    let mut losses = Vec::with_capacity(config.iterations);
    let batch = config.batch_size;
    let mut inputs = Array2::<f32>::zeros((batch, cfg.input_dim()));
    let mut batch_targets = vec![0.0f32; batch * out_dim];
    let mut g = [0.0f32; 3];

    for iter in 0..config.iterations {
        for r in 0..batch {
            let i = rng.random_range(0..data.len());
            for k in 0..dim {
                inputs[[r, k]] = data.points[i * dim + k] as f32;
            }
            for (k, c) in code.iter().enumerate() {
                inputs[[r, dim + k]] = *c;
            }
            batch_targets[r * out_dim..(r + 1) * out_dim]
                .copy_from_slice(&targets[i * out_dim..(i + 1) * out_dim]);
        }
        let trace = field.mlp.forward_trace(inputs.view())?;
        let mut d_out = Array2::<f32>::zeros((batch, out_dim));
        let mut total = 0.0f64;
        for r in 0..batch {
            let pred = trace.output.row(r).to_vec();
            let t = &batch_targets[r * out_dim..(r + 1) * out_dim];
            total += loss::evaluate(&config.loss, &pred, t, Some(&mut g[..out_dim])) as f64;
            for k in 0..out_dim {
                d_out[[r, k]] = g[k] / batch as f32;
            }
        }
        let mean = total / batch as f64;
        if !mean.is_finite() {
            return Err(Error::Diverged {
                iteration: iter,
                loss: mean,
            });
        }
        losses.push(mean);
        let d_in = field
            .mlp
            .backward(&trace, d_out, None, true)
            .expect("input gradient requested");
        let mut grad = vec![0.0f32; cfg.latent_len];
        for r in 0..batch {
            for (k, gk) in grad.iter_mut().enumerate() {
                *gk += d_in[[r, dim + k]];
            }
        }
        let lr = config.optimizer.rate_at(iter, config.iterations);
        state.update(&mut code, &grad, lr, &config.optimizer);
    }
    Ok(LatentFit { code, losses })
}
