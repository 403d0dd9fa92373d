//! Single-shape fitting and auto-decoder training.

use ndarray::Array2;
use rand::Rng;

use super::adam::{AdamConfig, AdamState, NetworkOptimizer};
use super::loss::{self, Loss};
use super::mlp::{Mlp, MlpConfig};
use super::model::{LatentTable, NeuralField};
use crate::field::{Representation, TrainingSet};
use crate::geometry::seeded_rng;
use crate::{Error, Result};

/// Query points and their field vectors, flattened for training.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionData {
    pub dim: usize,
    /// Row-major `n × dim`.
    pub points: Vec<f64>,
    /// Row-major `n × dim`, the vector from each point to its closest surface point.
    pub vectors: Vec<f64>,
}

impl RegressionData {
    pub fn new(dim: usize, points: Vec<f64>, vectors: Vec<f64>) -> Result<Self> {
        if points.len() != vectors.len() || !points.len().is_multiple_of(dim) {
            return Err(Error::InvalidInput(format!(
                "{} point coordinates vs {} vector coordinates in {dim}D",
                points.len(),
                vectors.len()
            )));
        }
        Ok(Self {
            dim,
            points,
            vectors,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    /// Regression targets for `representation`, row-major `n × output_dim`.
    pub fn targets(&self, representation: Representation) -> Vec<f32> {
        let mut out = Vec::with_capacity(self.len() * representation.output_dim(self.dim));
        for i in 0..self.len() {
            let (x, v) = (self.point(i), self.vector(i));
            match representation {
                Representation::Gdf => out.extend(v.iter().map(|c| *c as f32)),
                Representation::Udf => out.push(v.iter().map(|c| c * c).sum::<f64>().sqrt() as f32),
                Representation::Csp => out.extend(x.iter().zip(v).map(|(a, b)| (a + b) as f32)),
            }
        }
        out
    }
}

impl From<&TrainingSet> for RegressionData {
    fn from(set: &TrainingSet) -> Self {
        Self {
            dim: 3,
            points: set
                .samples
                .iter()
                .flat_map(|s| [s.x.x, s.x.y, s.x.z])
                .collect(),
            vectors: set
                .samples
                .iter()
                .flat_map(|s| [s.v.x, s.v.y, s.v.z])
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub loss: Loss,
    pub optimizer: AdamConfig,
    /// Standard deviation of the initial latent codes.
    pub latent_init_std: f64,
    /// Weight of an optional `‖C‖²` penalty on latent codes (0 disables it).
    pub latent_regularization: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 30_000,
            batch_size: 32_000,
            seed: 0,
            loss: Loss::L1,
            optimizer: AdamConfig::default(),
            latent_init_std: 0.01,
            latent_regularization: 0.0,
        }
    }
}

/// Mean batch loss at every iteration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub losses: Vec<f64>,
}

impl TrainReport {
    /// Mean of the `window` losses ending at (and including) iteration `end`.
    pub fn moving_average(&self, end: usize, window: usize) -> f64 {
        let start = (end + 1).saturating_sub(window);
        let slice = &self.losses[start..=end];
        slice.iter().sum::<f64>() / slice.len() as f64
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.losses.last().copied()
    }
}

fn check_config(config: &TrainConfig, representation: Representation) -> Result<()> {
    if config.batch_size == 0 {
        return Err(Error::InvalidInput("batch size must be positive".into()));
    }
    if let Loss::Composite(w) = &config.loss {
        w.validate()?;
        if representation != Representation::Gdf {
            return Err(Error::InvalidInput(format!(
                "the composite loss applies to gdf outputs, not {representation}"
            )));
        }
    }
    Ok(())
}

/// Mean loss over the batch and ∂(mean loss)/∂output.
fn batch_loss(loss: &Loss, output: &Array2<f32>, targets: &[f32]) -> (f64, Array2<f32>) {
    let (rows, cols) = output.dim();
    let mut d_out = Array2::<f32>::zeros((rows, cols));
    let mut total = 0.0f64;
    let scale = 1.0 / rows as f32;
    let mut g = [0.0f32; 3];
    for i in 0..rows {
        let pred = output.row(i);
        let pred = pred.as_slice().expect("contiguous output rows");
        let target = &targets[i * cols..(i + 1) * cols];
        total += loss::evaluate(loss, pred, target, Some(&mut g[..cols])) as f64;
        for k in 0..cols {
            d_out[[i, k]] = g[k] * scale;
        }
    }
    (total / rows as f64, d_out)
}

/// Fits one network to one shape.
pub fn train_single(
    data: &RegressionData,
    mlp_config: MlpConfig,
    representation: Representation,
    config: &TrainConfig,
) -> Result<(NeuralField, TrainReport)> {
    if data.is_empty() {
        return Err(Error::InvalidInput("empty training set".into()));
    }
    if mlp_config.latent_len != 0 {
        return Err(Error::InvalidInput(
            "single-shape fitting takes no latent code".into(),
        ));
    }
    if mlp_config.spatial_dim != data.dim {
        return Err(Error::DimensionMismatch {
            expected: mlp_config.spatial_dim,
            actual: data.dim,
        });
    }
    check_config(config, representation)?;
    let mut rng = seeded_rng(config.seed);
    let mut field = NeuralField::init(mlp_config, representation, &mut rng)?;
    let targets = data.targets(representation);
    let out_dim = mlp_config.output_dim;
    let dim = data.dim;
    let mut optimizer = NetworkOptimizer::new(&field.mlp.layers, config.optimizer);
    let mut report = TrainReport::default();
    let batch = config.batch_size;
    let mut inputs = Array2::<f32>::zeros((batch, dim));
    let mut batch_targets = vec![0.0f32; batch * out_dim];

    for iter in 0..config.iterations {
        for r in 0..batch {
            let i = rng.random_range(0..data.len());
            for k in 0..dim {
                inputs[[r, k]] = data.points[i * dim + k] as f32;
            }
            batch_targets[r * out_dim..(r + 1) * out_dim]
                .copy_from_slice(&targets[i * out_dim..(i + 1) * out_dim]);
        }
        let trace = field.mlp.forward_trace(inputs.view())?;
        let (mean_loss, d_out) = batch_loss(&config.loss, &trace.output, &batch_targets);
        if !mean_loss.is_finite() {
            return Err(Error::Diverged {
                iteration: iter,
                loss: mean_loss,
            });
        }
        report.losses.push(mean_loss);
        let mut grads = field.mlp.zero_grads();
        field.mlp.backward(&trace, d_out, Some(&mut grads), false);
        let lr = config.optimizer.rate_at(iter, config.iterations);
        optimizer.step(&mut field.mlp.layers, &grads, lr);
    }
    Ok((field, report))
}

/// Jointly fits network weights and one latent code per shape.
///
/// Each batch row picks a shape uniformly, then a point uniformly within that shape.
/// A code only moves when its shape appears in the batch.
pub fn train_autodecoder(
    shapes: &[RegressionData],
    mlp_config: MlpConfig,
    representation: Representation,
    config: &TrainConfig,
) -> Result<(NeuralField, LatentTable, TrainReport)> {
    if shapes.is_empty() {
        return Err(Error::InvalidInput(
            "auto-decoder needs at least one shape".into(),
        ));
    }
    if let Some(i) = shapes.iter().position(RegressionData::is_empty) {
        return Err(Error::InvalidInput(format!("shape {i} has no samples")));
    }
    if shapes.iter().any(|s| s.dim != mlp_config.spatial_dim) {
        return Err(Error::DimensionMismatch {
            expected: mlp_config.spatial_dim,
            actual: shapes
                .iter()
                .find(|s| s.dim != mlp_config.spatial_dim)
                .unwrap()
                .dim,
        });
    }
    check_config(config, representation)?;
    let mut rng = seeded_rng(config.seed);
    let mut field = NeuralField::init(mlp_config, representation, &mut rng)?;
    let latent_len = mlp_config.latent_len;
    let mut latents =
        LatentTable::random(shapes.len(), latent_len, config.latent_init_std, &mut rng);
    let targets: Vec<Vec<f32>> = shapes.iter().map(|s| s.targets(representation)).collect();
    let dim = mlp_config.spatial_dim;
    let out_dim = mlp_config.output_dim;
    let mut optimizer = NetworkOptimizer::new(&field.mlp.layers, config.optimizer);
    let mut code_states: Vec<AdamState<f32>> = (0..shapes.len())
        .map(|_| AdamState::new(latent_len))
        .collect();
    let mut report = TrainReport::default();
    let batch = config.batch_size;
    let mut inputs = Array2::<f32>::zeros((batch, dim + latent_len));
    let mut batch_targets = vec![0.0f32; batch * out_dim];
    let mut batch_shapes = vec![0usize; batch];

    for iter in 0..config.iterations {
        for r in 0..batch {
            let s = rng.random_range(0..shapes.len());
            let i = rng.random_range(0..shapes[s].len());
            batch_shapes[r] = s;
            for k in 0..dim {
                inputs[[r, k]] = shapes[s].points[i * dim + k] as f32;
            }
            for (k, c) in latents.codes[s].iter().enumerate() {
                inputs[[r, dim + k]] = *c;
            }
            batch_targets[r * out_dim..(r + 1) * out_dim]
                .copy_from_slice(&targets[s][i * out_dim..(i + 1) * out_dim]);
        }
        let trace = field.mlp.forward_trace(inputs.view())?;
        let (mut mean_loss, d_out) = batch_loss(&config.loss, &trace.output, &batch_targets);
        let mut grads = field.mlp.zero_grads();
        let d_in = field
            .mlp
            .backward(&trace, d_out, Some(&mut grads), latent_len > 0);

        let mut code_grads = vec![vec![0.0f32; latent_len]; shapes.len()];
        let mut present = vec![false; shapes.len()];
        if let Some(d_in) = &d_in {
            for r in 0..batch {
                let s = batch_shapes[r];
                present[s] = true;
                for k in 0..latent_len {
                    code_grads[s][k] += d_in[[r, dim + k]];
                }
            }
        }
        if config.latent_regularization > 0.0 {
            let lam = config.latent_regularization;
            for (s, code) in latents.codes.iter().enumerate() {
                if present[s] {
                    mean_loss += lam * code.iter().map(|c| (*c as f64).powi(2)).sum::<f64>();
                    for (g, c) in code_grads[s].iter_mut().zip(code) {
                        *g += (2.0 * lam) as f32 * c;
                    }
                }
            }
        }
        if !mean_loss.is_finite() {
            return Err(Error::Diverged {
                iteration: iter,
                loss: mean_loss,
            });
        }
        report.losses.push(mean_loss);
        let lr = config.optimizer.rate_at(iter, config.iterations);
        optimizer.step(&mut field.mlp.layers, &grads, lr);
        for s in 0..shapes.len() {
            if present[s] {
                code_states[s].update(&mut latents.codes[s], &code_grads[s], lr, &config.optimizer);
            }
        }
    }
    Ok((field, latents, report))
}

/// Parameter gradients of the mean loss, for checking against finite differences.
pub fn parameter_gradients(
    mlp: &Mlp<f64>,
    inputs: &Array2<f64>,
    targets: &[f64],
    loss: &Loss,
) -> Result<(f64, Vec<super::mlp::Layer<f64>>)> {
    let trace = mlp.forward_trace(inputs.view())?;
    let (rows, cols) = trace.output.dim();
    let mut d_out = Array2::<f64>::zeros((rows, cols));
    let mut total = 0.0;
    let mut g = [0.0f64; 3];
    for i in 0..rows {
        let pred = trace.output.row(i).to_vec();
        total += loss::evaluate(
            loss,
            &pred,
            &targets[i * cols..(i + 1) * cols],
            Some(&mut g[..cols]),
        );
        for k in 0..cols {
            d_out[[i, k]] = g[k] / rows as f64;
        }
    }
    let mut grads = mlp.zero_grads();
    mlp.backward(&trace, d_out, Some(&mut grads), false);
    Ok((total / rows as f64, grads))
}

/// Mean loss of `mlp` on a batch, in double precision.
pub fn mean_loss(
    mlp: &Mlp<f64>,
    inputs: &Array2<f64>,
    targets: &[f64],
    loss: &Loss,
) -> Result<f64> {
    let out = mlp.forward(inputs.view())?;
    let cols = out.ncols();
    let mut total = 0.0;
    for i in 0..out.nrows() {
        let pred = out.row(i).to_vec();
        total += loss::evaluate(loss, &pred, &targets[i * cols..(i + 1) * cols], None);
    }
    Ok(total / out.nrows() as f64)
}
