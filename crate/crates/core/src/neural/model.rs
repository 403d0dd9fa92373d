use nalgebra::{Point3, Vector3};
use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::mlp::{Mlp, MlpConfig};
use crate::field::{Decomposition, DistanceQuery, Representation, ZERO_DISTANCE};
use crate::{Error, Result};

/// Points evaluated per network call when querying large sets.
pub const EVAL_CHUNK: usize = 16_384;

/// A trained (or freshly initialized) network together with what its output means.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralField {
    pub mlp: Mlp<f32>,
    pub representation: Representation,
}

/// Per-shape latent codes of an auto-decoder.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LatentTable {
    pub codes: Vec<Vec<f32>>,
}

impl LatentTable {
    /// `count` codes drawn from a zero-mean normal with standard deviation `std`.
    pub fn random(count: usize, len: usize, std: f64, rng: &mut impl Rng) -> Self {
        let normal = Normal::new(0.0, std).expect("valid standard deviation");
        let codes = (0..count)
            .map(|_| (0..len).map(|_| normal.sample(rng) as f32).collect())
            .collect();
        Self { codes }
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn code_len(&self) -> usize {
        self.codes.first().map_or(0, Vec::len)
    }

    pub fn get(&self, i: usize) -> Option<&[f32]> {
        self.codes.get(i).map(Vec::as_slice)
    }
}

/// Distances and unit gradients for a batch of points in `dim`-dimensional space.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldValues {
    pub dim: usize,
    pub u: Vec<f64>,
    /// Row-major `n × dim`.
    pub g: Vec<f64>,
}

impl FieldValues {
    pub fn gradient(&self, i: usize) -> &[f64] {
        &self.g[i * self.dim..(i + 1) * self.dim]
    }

    /// `u·g`, the field vector pointing at the surface.
    pub fn vector(&self, i: usize) -> Vec<f64> {
        self.gradient(i).iter().map(|g| g * self.u[i]).collect()
    }
}

impl NeuralField {
    pub fn new(mlp: Mlp<f32>, representation: Representation) -> Result<Self> {
        let expected = representation.output_dim(mlp.config.spatial_dim);
        if mlp.config.output_dim != expected {
            return Err(Error::InvalidInput(format!(
                "{representation} over {}D needs output_dim {expected}, network has {}",
                mlp.config.spatial_dim, mlp.config.output_dim
            )));
        }
        Ok(Self {
            mlp,
            representation,
        })
    }

    pub fn init(
        config: MlpConfig,
        representation: Representation,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Self::new(Mlp::init(config, rng)?, representation)
    }

    pub fn config(&self) -> &MlpConfig {
        &self.mlp.config
    }

    pub fn spatial_dim(&self) -> usize {
        self.mlp.config.spatial_dim
    }

    fn check_code(&self, code: Option<&[f32]>) -> Result<()> {
        let len = code.map_or(0, <[f32]>::len);
        if len != self.mlp.config.latent_len {
            return Err(Error::DimensionMismatch {
                expected: self.mlp.config.latent_len,
                actual: len,
            });
        }
        Ok(())
    }

    /// Network input rows `[x, code]` for flat row-major `points`.
    pub fn inputs(&self, points: &[f64], code: Option<&[f32]>) -> Result<Array2<f32>> {
        self.check_code(code)?;
        let dim = self.spatial_dim();
        if !points.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: points.len() % dim,
            });
        }
        let n = points.len() / dim;
        let width = self.mlp.config.input_dim();
        let code = code.unwrap_or(&[]);
        Ok(Array2::from_shape_fn((n, width), |(i, j)| {
            if j < dim {
                points[i * dim + j] as f32
            } else {
                code[j - dim]
            }
        }))
    }

    /// Raw network output for one point.
    pub fn forward(&self, x: &[f64], code: Option<&[f32]>) -> Result<Vec<f32>> {
        if x.len() != self.spatial_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.spatial_dim(),
                actual: x.len(),
            });
        }
        Ok(self.forward_batch(x, code)?.row(0).to_vec())
    }

    /// Raw network output for flat row-major `points`.
    pub fn forward_batch(&self, points: &[f64], code: Option<&[f32]>) -> Result<Array2<f32>> {
        let inputs = self.inputs(points, code)?;
        self.mlp.forward(inputs.view())
    }

    pub fn forward_inputs(&self, inputs: ArrayView2<f32>) -> Result<Array2<f32>> {
        self.mlp.forward(inputs)
    }

    /// Distance and unit gradient at every point. Vector-valued representations yield
    /// the gradient directly from the output; the scalar one uses the input gradient of
    /// the network, negated so that it points towards the surface.
    pub fn evaluate(&self, points: &[f64], code: Option<&[f32]>) -> Result<FieldValues> {
        let dim = self.spatial_dim();
        let mut values = FieldValues {
            dim,
            u: Vec::with_capacity(points.len() / dim),
            g: Vec::with_capacity(points.len()),
        };
        for chunk in points.chunks(EVAL_CHUNK * dim) {
            let inputs = self.inputs(chunk, code)?;
            match self.representation {
                Representation::Gdf | Representation::Csp => {
                    let out = self.mlp.forward(inputs.view())?;
                    for (i, row) in out.rows().into_iter().enumerate() {
                        let v: Vec<f64> = (0..dim)
                            .map(|k| {
                                let o = row[k] as f64;
                                if self.representation == Representation::Csp {
                                    o - chunk[i * dim + k]
                                } else {
                                    o
                                }
                            })
                            .collect();
                        push_decomposed(&mut values, &v);
                    }
                }
                Representation::Udf => {
                    let trace = self.mlp.forward_trace(inputs.view())?;
                    let ones = Array2::ones((inputs.nrows(), 1));
                    let dx = self
                        .mlp
                        .backward(&trace, ones, None, true)
                        .expect("input gradient requested");
                    for i in 0..inputs.nrows() {
                        values.u.push((trace.output[[i, 0]] as f64).max(0.0));
                        let grad: Vec<f64> = (0..dim).map(|k| dx[[i, k]] as f64).collect();
                        let norm = grad.iter().map(|x| x * x).sum::<f64>().sqrt();
                        if norm > 0.0 && norm.is_finite() {
                            values.g.extend(grad.iter().map(|x| -x / norm));
                        } else {
                            values.g.extend(std::iter::repeat_n(0.0, dim));
                        }
                    }
                }
            }
        }
        Ok(values)
    }

    /// Convenience for 3D fields.
    pub fn decompositions(
        &self,
        points: &[Point3<f64>],
        code: Option<&[f32]>,
    ) -> Result<Vec<Decomposition>> {
        let flat: Vec<f64> = points.iter().flat_map(|p| [p.x, p.y, p.z]).collect();
        let values = self.evaluate(&flat, code)?;
        Ok((0..points.len())
            .map(|i| {
                let g = values.gradient(i);
                Decomposition {
                    u: values.u[i],
                    g: Vector3::new(g[0], g[1], g[2]),
                }
            })
            .collect())
    }
}

fn push_decomposed(values: &mut FieldValues, v: &[f64]) {
    let u = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if u < ZERO_DISTANCE || !u.is_finite() {
        values.u.push(if u.is_finite() { 0.0 } else { u });
        values.g.extend(std::iter::repeat_n(0.0, v.len()));
    } else {
        values.u.push(u);
        values.g.extend(v.iter().map(|x| x / u));
    }
}

/// A neural field bound to one latent code, usable wherever a [`DistanceQuery`] is.
#[derive(Debug, Clone, Copy)]
pub struct NeuralQuery<'a> {
    pub field: &'a NeuralField,
    pub code: Option<&'a [f32]>,
}

impl<'a> NeuralQuery<'a> {
    pub fn new(field: &'a NeuralField, code: Option<&'a [f32]>) -> Self {
        Self { field, code }
    }
}

impl DistanceQuery for NeuralQuery<'_> {
    fn query(&self, points: &[Point3<f64>]) -> Result<Vec<Decomposition>> {
        self.field.decompositions(points, self.code)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::seeded_rng;

    #[test]
    fn output_dim_must_match_representation() {
        let mlp = Mlp::zeros(MlpConfig::new(2, 4, 3, 0, 1)).unwrap();
        assert!(NeuralField::new(mlp.clone(), Representation::Gdf).is_err());
        assert!(NeuralField::new(mlp, Representation::Udf).is_ok());
    }

    #[test]
    fn code_length_is_checked() {
        let mut rng = seeded_rng(0);
        let f = NeuralField::init(MlpConfig::new(2, 4, 3, 2, 3), Representation::Gdf, &mut rng)
            .unwrap();
        assert!(f.forward(&[0.0, 0.0, 0.0], None).is_err());
        assert!(f.forward(&[0.0, 0.0, 0.0], Some(&[0.1, 0.2])).is_ok());
        assert!(f.forward(&[0.0, 0.0], Some(&[0.1, 0.2])).is_err());
    }

    #[test]
    fn csp_gradient_points_from_query_to_prediction() {
        // Zero network: the predicted closest point is the origin.
        let mlp = Mlp::zeros(MlpConfig::new(2, 4, 3, 0, 3)).unwrap();
        let f = NeuralField::new(mlp, Representation::Csp).unwrap();
        let d = f
            .decompositions(&[Point3::new(0.0, 0.0, 2.0)], None)
            .unwrap();
        assert_eq!(d[0].u, 2.0);
        assert_eq!(d[0].g, Vector3::new(0.0, 0.0, -1.0));
    }

    #[test]
    fn udf_gradient_points_downhill() {
        // u(x) = relu(x0) via a hand-set 2-layer net; downhill is −x.
        let mut mlp = Mlp::<f32>::zeros(MlpConfig::new(2, 1, 3, 0, 1)).unwrap();
        mlp.layers[0].weight[[0, 0]] = 1.0;
        mlp.layers[1].weight[[0, 0]] = 1.0;
        let f = NeuralField::new(mlp, Representation::Udf).unwrap();
        let d = f
            .decompositions(&[Point3::new(0.25, 0.1, 0.0)], None)
            .unwrap();
        assert_eq!(d[0].u, 0.25);
        assert_eq!(d[0].g, Vector3::new(-1.0, 0.0, 0.0));
    }

    #[test]
    fn latent_codes_have_declared_spread() {
        let mut rng = seeded_rng(3);
        let t = LatentTable::random(200, 64, 0.01, &mut rng);
        let mean_norm: f64 = t
            .codes
            .iter()
            .map(|c| c.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt())
            .sum::<f64>()
            / 200.0;
        let expected = 0.01 * 64f64.sqrt();
        assert!((mean_norm / expected - 1.0).abs() < 0.5);
    }
}
