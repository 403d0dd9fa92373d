//! Adam with a step-decay learning-rate schedule.

use super::mlp::{Layer, Real};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Multiplier applied at each schedule boundary.
    pub decay: f64,
    /// Number of equal phases the run is split into; the rate decays entering each new phase.
    pub phases: usize,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            decay: 0.75,
            phases: 4,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }

    /// Learning rate at 0-based iteration `iter` of a `total`-iteration run. Boundary
    /// `k` sits at `⌈k·total/phases⌉`; from there on the rate is `base · decay^k`.
    pub fn rate_at(&self, iter: usize, total: usize) -> f64 {
        let passed = (1..self.phases)
            .filter(|&k| iter >= (k * total).div_ceil(self.phases))
            .count();
        self.learning_rate * self.decay.powi(passed as i32)
    }
}

/// First/second moment estimates for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    m: Vec<T>,
    v: Vec<T>,
    step: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn update(&mut self, params: &mut [T], grads: &[T], lr: f64, cfg: &AdamConfig) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.step += 1;
        let b1 = T::from_f64_lossy(cfg.beta1);
        let b2 = T::from_f64_lossy(cfg.beta2);
        let one = T::one();
        let bc1 = 1.0 - cfg.beta1.powi(self.step as i32);
        let bc2 = 1.0 - cfg.beta2.powi(self.step as i32);
        // Bias correction folded into the step size.
        let step_size = T::from_f64_lossy(lr * bc2.sqrt() / bc1);
        let eps = T::from_f64_lossy(cfg.epsilon * bc2.sqrt());
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = b1 * self.m[i] + (one - b1) * g;
            self.v[i] = b2 * self.v[i] + (one - b2) * g * g;
            params[i] = params[i] - step_size * self.m[i] / (self.v[i].sqrt() + eps);
        }
    }
}

/// Adam state for every tensor of a network.
#[derive(Debug, Clone)]
pub struct NetworkOptimizer<T> {
    pub config: AdamConfig,
    states: Vec<(AdamState<T>, AdamState<T>)>,
}

impl<T: Real> NetworkOptimizer<T> {
    pub fn new(layers: &[Layer<T>], config: AdamConfig) -> Self {
        Self {
            config,
            states: layers
                .iter()
                .map(|l| (AdamState::new(l.weight.len()), AdamState::new(l.bias.len())))
                .collect(),
        }
    }

    pub fn step(&mut self, layers: &mut [Layer<T>], grads: &[Layer<T>], lr: f64) {
        for ((layer, grad), (sw, sb)) in layers.iter_mut().zip(grads).zip(&mut self.states) {
            sw.update(
                layer.weight.as_slice_mut().expect("contiguous weights"),
                grad.weight.as_slice().expect("contiguous grads"),
                lr,
                &self.config,
            );
            sb.update(
                layer.bias.as_slice_mut().expect("contiguous bias"),
                grad.bias.as_slice().expect("contiguous grads"),
                lr,
                &self.config,
            );
        }
    }
}
