//! Per-sample regression losses and their gradients with respect to the prediction.

use nalgebra::Vector3;

use super::mlp::Real;
use crate::field::ZERO_DISTANCE;
use crate::{Error, Result};

/// Lower bound on `‖pred‖` when normalizing in the direction term.
pub const NORM_EPSILON: f64 = 1e-8;

/// Weights of the vector, direction and distance terms of the composite loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda_adf: f64,
    pub lambda_grad: f64,
    pub lambda_udf: f64,
}

impl LossWeights {
    /// The weighting used for the full-scale garment experiments.
    pub const REFERENCE: LossWeights = LossWeights {
        lambda_adf: 100.0,
        lambda_grad: 4.0,
        lambda_udf: 50.0,
    };

    /// Reduces the composite loss to the plain L1 vector loss.
    pub const PLAIN: LossWeights = LossWeights {
        lambda_adf: 1.0,
        lambda_grad: 0.0,
        lambda_udf: 0.0,
    };

    pub fn new(lambda_adf: f64, lambda_grad: f64, lambda_udf: f64) -> Result<Self> {
        let w = Self {
            lambda_adf,
            lambda_grad,
            lambda_udf,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.lambda_adf, self.lambda_grad, self.lambda_udf];
        if all.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "loss weights must be non-negative: {all:?}"
            )));
        }
        if all.iter().all(|w| *w == 0.0) {
            return Err(Error::InvalidInput("loss weights are all zero".into()));
        }
        Ok(())
    }
}

/// Training objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Loss {
    /// Sum of absolute component differences against the representation's target.
    L1,
    /// Vector, direction and distance terms; only meaningful for vector-field targets.
    Composite(LossWeights),
}

#[inline]
fn sign<T: Real>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else if x < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// `Σ |pred − target|`; writes the subgradient `sign(pred − target)` into `grad`.
pub fn l1<T: Real>(pred: &[T], target: &[T], grad: Option<&mut [T]>) -> T {
    debug_assert_eq!(pred.len(), target.len());
    if let Some(g) = grad {
        for ((gi, &p), &t) in g.iter_mut().zip(pred).zip(target) {
            *gi = sign(p - t);
        }
    }
    pred.iter()
        .zip(target)
        .fold(T::zero(), |acc, (&p, &t)| acc + (p - t).abs())
}

/// `λ_adf·Σ|p − v| + λ_grad·Σ|p/max(‖p‖, ε) − g| + λ_udf·|‖p‖ − u|` with `(u, g)` recovered
/// from the target vector `v`.
pub fn composite<T: Real>(pred: &[T], v: &[T], weights: &LossWeights, grad: Option<&mut [T]>) -> T {
    debug_assert_eq!(pred.len(), v.len());
    let dim = pred.len();
    let wa = T::from_f64_lossy(weights.lambda_adf);
    let wg = T::from_f64_lossy(weights.lambda_grad);
    let wu = T::from_f64_lossy(weights.lambda_udf);
    let eps = T::from_f64_lossy(NORM_EPSILON);

    let mut u = v.iter().fold(T::zero(), |a, &x| a + x * x).sqrt();
    let mut g = [T::zero(); 3];
    if u.to_f64_lossy() < ZERO_DISTANCE {
        u = T::zero();
    } else {
        for i in 0..dim {
            g[i] = v[i] / u;
        }
    }
    let r = pred.iter().fold(T::zero(), |a, &x| a + x * x).sqrt();
    let s = r.max(eps);

    let mut loss_adf = T::zero();
    let mut loss_grad = T::zero();
    let mut e = [T::zero(); 3];
    for i in 0..dim {
        loss_adf = loss_adf + (pred[i] - v[i]).abs();
        let n = pred[i] / s;
        loss_grad = loss_grad + (n - g[i]).abs();
        e[i] = sign(n - g[i]);
    }
    let loss_udf = (r - u).abs();

    if let Some(out) = grad {
        let ep = (0..dim).fold(T::zero(), |a, i| a + e[i] * pred[i]);
        let su = sign(r - u);
        for j in 0..dim {
            let mut dj = wa * sign(pred[j] - v[j]) + wg * e[j] / s;
            if r > eps {
                dj = dj - wg * ep * pred[j] / (r * r * r);
            }
            if r > T::zero() {
                dj = dj + wu * su * pred[j] / r;
            }
            out[j] = dj;
        }
    }
    wa * loss_adf + wg * loss_grad + wu * loss_udf
}

/// Loss of one prediction against its target under `loss`.
pub fn evaluate<T: Real>(loss: &Loss, pred: &[T], target: &[T], grad: Option<&mut [T]>) -> T {
    match loss {
        Loss::L1 => l1(pred, target, grad),
        Loss::Composite(w) => composite(pred, target, w, grad),
    }
}

/// Plain vector loss between a predicted and a target field vector.
pub fn loss_gdf(pred: &Vector3<f64>, target: &Vector3<f64>) -> f64 {
    l1(pred.as_slice(), target.as_slice(), None)
}

pub fn loss_composite(pred: &Vector3<f64>, target: &Vector3<f64>, weights: &LossWeights) -> f64 {
    composite(pred.as_slice(), target.as_slice(), weights, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::seeded_rng;
    use rand::Rng;

    fn random_vec(rng: &mut impl Rng) -> Vector3<f64> {
        Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        )
    }

    #[test]
    fn l1_examples() {
        let t = Vector3::new(0.2, -0.1, 0.4);
        assert_eq!(loss_gdf(&t, &t), 0.0);
        assert_eq!(
            loss_gdf(&Vector3::new(1.0, 0.0, 0.0), &Vector3::zeros()),
            1.0
        );
    }

    #[test]
    fn l1_gradient_is_sign_pattern() {
        let mut rng = seeded_rng(4);
        for _ in 0..100 {
            let p = random_vec(&mut rng);
            let t = random_vec(&mut rng);
            let mut g = [0.0; 3];
            l1(p.as_slice(), t.as_slice(), Some(&mut g));
            for k in 0..3 {
                assert_eq!(g[k], (p[k] - t[k]).signum());
                let h = 1e-6;
                let mut pp = p;
                pp[k] += h;
                let mut pm = p;
                pm[k] -= h;
                let fd = (loss_gdf(&pp, &t) - loss_gdf(&pm, &t)) / (2.0 * h);
                assert!((fd - g[k]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn composite_vanishes_at_target() {
        let mut rng = seeded_rng(5);
        for _ in 0..100 {
            let t = random_vec(&mut rng);
            assert!(loss_composite(&t, &t, &LossWeights::REFERENCE) < 1e-12);
        }
        assert_eq!(
            loss_composite(
                &Vector3::zeros(),
                &Vector3::zeros(),
                &LossWeights::REFERENCE
            ),
            0.0
        );
    }

    #[test]
    fn composite_with_plain_weights_is_l1() {
        let mut rng = seeded_rng(6);
        for _ in 0..1000 {
            let p = random_vec(&mut rng);
            let t = random_vec(&mut rng);
            assert_eq!(
                loss_composite(&p, &t, &LossWeights::PLAIN),
                loss_gdf(&p, &t)
            );
        }
    }

    #[test]
    fn composite_gradient_matches_finite_differences() {
        let mut rng = seeded_rng(7);
        let w = LossWeights::REFERENCE;
        for _ in 0..200 {
            let p = random_vec(&mut rng);
            let t = random_vec(&mut rng);
            let mut g = [0.0; 3];
            composite(p.as_slice(), t.as_slice(), &w, Some(&mut g));
            let h = 1e-7;
            for k in 0..3 {
                let mut pp = p;
                pp[k] += h;
                let mut pm = p;
                pm[k] -= h;
                let fd = (loss_composite(&pp, &t, &w) - loss_composite(&pm, &t, &w)) / (2.0 * h);
                assert!(
                    (fd - g[k]).abs() < 1e-4 * (1.0 + g[k].abs()),
                    "fd {fd} vs {}",
                    g[k]
                );
            }
        }
    }

    #[test]
    fn zero_prediction_is_finite() {
        let mut g = [0.0f64; 3];
        let l: f64 = composite(
            &[0.0, 0.0, 0.0],
            &[0.1, 0.0, 0.0],
            &LossWeights::REFERENCE,
            Some(&mut g),
        );
        assert!(l.is_finite() && g.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn weights_validation() {
        assert!(LossWeights::new(0.0, 0.0, 0.0).is_err());
        assert!(LossWeights::new(-1.0, 0.0, 1.0).is_err());
        assert!(LossWeights::new(100.0, 4.0, 50.0).is_ok());
    }
}
