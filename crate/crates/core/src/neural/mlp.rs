//! Fully connected network with rectifier hidden layers and a linear output,
//! with hand-written reverse-mode differentiation.
//!
//! Batches are row-major: one sample per row. Every layer computes
//! `z = a · Wᵀ + b`; hidden layers then apply `max(z, 0)`.

use std::fmt::Debug;

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView2, Axis};
use num_traits::{Float, FromPrimitive};
use rand::Rng;

use crate::{Error, Result};

/// Scalar type the network can run in. Training uses `f32`; gradient checks use `f64`.
pub trait Real:
    ndarray::LinalgScalar + Float + FromPrimitive + Debug + Send + Sync + 'static
{
    fn from_f64_lossy(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).unwrap()
    }
    fn to_f64_lossy(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).unwrap()
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MlpConfig {
    /// Number of linear layers, including the output layer.
    pub depth: usize,
    /// Hidden width.
    pub width: usize,
    /// Dimension of the query points (3, or 2 for planar fields).
    pub spatial_dim: usize,
    /// Length of the per-shape latent code appended to the input; 0 for single shapes.
    pub latent_len: usize,
    pub output_dim: usize,
}

impl MlpConfig {
    pub fn new(
        depth: usize,
        width: usize,
        spatial_dim: usize,
        latent_len: usize,
        output_dim: usize,
    ) -> Self {
        Self {
            depth,
            width,
            spatial_dim,
            latent_len,
            output_dim,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.spatial_dim + self.latent_len
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth < 2 {
            return Err(Error::InvalidInput(format!(
                "depth must be >= 2, got {}",
                self.depth
            )));
        }
        if self.width < 1 {
            return Err(Error::InvalidInput("width must be >= 1".into()));
        }
        if !(1..=3).contains(&self.output_dim) {
            return Err(Error::InvalidInput(format!(
                "output_dim must be 1, 2 or 3, got {}",
                self.output_dim
            )));
        }
        if !(2..=3).contains(&self.spatial_dim) {
            return Err(Error::InvalidInput(format!(
                "spatial_dim must be 2 or 3, got {}",
                self.spatial_dim
            )));
        }
        Ok(())
    }

    /// `(fan_out, fan_in)` of every layer.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        (0..self.depth)
            .map(|l| {
                let fan_in = if l == 0 { self.input_dim() } else { self.width };
                let fan_out = if l + 1 == self.depth {
                    self.output_dim
                } else {
                    self.width
                };
                (fan_out, fan_in)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    /// `fan_out × fan_in`.
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Real> Layer<T> {
    fn zeros(fan_out: usize, fan_in: usize) -> Self {
        Self {
            weight: Array2::zeros((fan_out, fan_in)),
            bias: Array1::zeros(fan_out),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    pub config: MlpConfig,
    pub layers: Vec<Layer<T>>,
}

/// Per-layer activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Trace<T> {
    /// `inputs[l]` is the input of layer `l` (post-rectifier for `l > 0`).
    inputs: Vec<Array2<T>>,
    pub output: Array2<T>,
}

impl<T: Real> Mlp<T> {
    pub fn zeros(config: MlpConfig) -> Result<Self> {
        config.validate()?;
        let layers = config
            .layer_shapes()
            .into_iter()
            .map(|(o, i)| Layer::zeros(o, i))
            .collect();
        Ok(Self { config, layers })
    }

    /// Uniform initialization scaled by fan-in: `±√(6/fan_in)` for rectified layers,
    /// `±√(3/fan_in)` for the linear output. Biases start at zero.
    pub fn init(config: MlpConfig, rng: &mut impl Rng) -> Result<Self> {
        let mut mlp = Self::zeros(config)?;
        let depth = mlp.layers.len();
        for (l, layer) in mlp.layers.iter_mut().enumerate() {
            let fan_in = layer.weight.ncols() as f64;
            let bound = if l + 1 == depth {
                (3.0 / fan_in).sqrt()
            } else {
                (6.0 / fan_in).sqrt()
            };
            layer
                .weight
                .mapv_inplace(|_| T::from_f64_lossy(rng.random_range(-bound..bound)));
        }
        Ok(mlp)
    }

    pub fn cast<U: Real>(&self) -> Mlp<U> {
        Mlp {
            config: self.config,
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    weight: l.weight.mapv(|x| U::from_f64_lossy(x.to_f64_lossy())),
                    bias: l.bias.mapv(|x| U::from_f64_lossy(x.to_f64_lossy())),
                })
                .collect(),
        }
    }

    pub fn num_parameters(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    /// Zeroed gradient buffers shaped like the parameters.
    pub fn zero_grads(&self) -> Vec<Layer<T>> {
        self.layers
            .iter()
            .map(|l| Layer::zeros(l.weight.nrows(), l.weight.ncols()))
            .collect()
    }

    fn check_input(&self, x: &ArrayView2<T>) -> Result<()> {
        if x.ncols() != self.config.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.config.input_dim(),
                actual: x.ncols(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: ArrayView2<T>) -> Result<Array2<T>> {
        self.check_input(&x)?;
        let mut a = x.to_owned();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            a = affine(&a.view(), layer);
            if l < last {
                a.mapv_inplace(relu);
            }
        }
        Ok(a)
    }

    pub fn forward_trace(&self, x: ArrayView2<T>) -> Result<Trace<T>> {
        self.check_input(&x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut a = x.to_owned();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = affine(&a.view(), layer);
            if l < last {
                z.mapv_inplace(relu);
            }
            inputs.push(a);
            a = z;
        }
        Ok(Trace { inputs, output: a })
    }

    /// Propagates `d_output` (∂L/∂output, one row per sample) back through the network.
    ///
    /// Parameter gradients are accumulated into `grads` when given. Returns ∂L/∂input
    /// when `want_input_grad` is set.
    pub fn backward(
        &self,
        trace: &Trace<T>,
        d_output: Array2<T>,
        mut grads: Option<&mut [Layer<T>]>,
        want_input_grad: bool,
    ) -> Option<Array2<T>> {
        let mut dz = d_output;
        for l in (0..self.layers.len()).rev() {
            let a_in = &trace.inputs[l];
            if let Some(g) = grads.as_deref_mut() {
                general_mat_mul(T::one(), &dz.t(), a_in, T::one(), &mut g[l].weight);
                g[l].bias
                    .zip_mut_with(&dz.sum_axis(Axis(0)), |a, &b| *a = *a + b);
            }
            if l == 0 && !want_input_grad {
                return None;
            }
            let w = &self.layers[l].weight;
            let mut da = Array2::zeros((dz.nrows(), w.ncols()));
            general_mat_mul(T::one(), &dz, w, T::zero(), &mut da);
            if l > 0 {
                // Rectifier derivative: the layer input is the previous layer's rectified output.
                ndarray::Zip::from(&mut da).and(a_in).for_each(|d, &a| {
                    if a <= T::zero() {
                        *d = T::zero();
                    }
                });
            }
            dz = da;
        }
        Some(dz)
    }
}

#[inline]
fn relu<T: Real>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        T::zero()
    }
}

fn affine<T: Real>(a: &ArrayView2<T>, layer: &Layer<T>) -> Array2<T> {
    let mut z = Array2::from_shape_fn((a.nrows(), layer.bias.len()), |(_, j)| layer.bias[j]);
    general_mat_mul(T::one(), a, &layer.weight.t(), T::one(), &mut z);
    z
}
