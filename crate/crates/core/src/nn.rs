//! Building blocks shared by the steering CNN and the autoencoder: dense
//! layers, Glorot-uniform init, the Adam update and a flat view over model
//! parameters.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub batch: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch: 32,
            epochs: 200,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 || self.epochs == 0 {
            return Err(Error::InvalidArgument(format!(
                "batch and epochs must be >= 1 (batch={}, epochs={})",
                self.batch, self.epochs
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Uniform on `+-sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform(rng: &mut impl Rng, fan_in: usize, fan_out: usize, len: usize) -> Vec<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..len).map(|_| rng.random_range(-limit..=limit)).collect()
}

/// Fully connected layer; `weights` is `(outputs, inputs)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl DenseLayer {
    pub fn glorot(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let w = glorot_uniform(rng, inputs, outputs, inputs * outputs);
        Self {
            weights: Array2::from_shape_vec((outputs, inputs), w).expect("shape matches length"),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weights: Array2::zeros((outputs, inputs)),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn from_parts(inputs: usize, outputs: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if weights.len() != inputs * outputs || bias.len() != outputs {
            return Err(Error::DimensionMismatch(format!(
                "dense {inputs}->{outputs} needs {} weights and {outputs} biases, got {} and {}",
                inputs * outputs,
                weights.len(),
                bias.len()
            )));
        }
        Ok(Self {
            weights: Array2::from_shape_vec((outputs, inputs), weights).expect("checked"),
            bias: Array1::from(bias),
        })
    }

    pub fn inputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.nrows()
    }

    /// `x` is `(batch, inputs)`; returns pre-activations `(batch, outputs)`.
    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut z = x.dot(&self.weights.t());
        z += &self.bias;
        z
    }

    /// Given the upstream gradient `dz` `(batch, outputs)` and the layer input
    /// `x`, returns `(dW, db)` and, if requested, `dx`.
    pub fn backward(
        &self,
        x: &Array2<f64>,
        dz: &Array2<f64>,
        need_input_grad: bool,
    ) -> (DenseGrad, Option<Array2<f64>>) {
        let grad = DenseGrad {
            weights: dz.t().dot(x),
            bias: dz.sum_axis(Axis(0)),
        };
        let dx = need_input_grad.then(|| dz.dot(&self.weights));
        (grad, dx)
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(self.bias.iter()).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone)]
pub struct DenseGrad {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

pub fn relu_inplace(z: &mut Array2<f64>) {
    z.mapv_inplace(|v| v.max(0.0));
}

/// Zeroes `grad` wherever the forward activation was clipped by ReLU.
pub fn relu_backward_inplace(grad: &mut Array2<f64>, activation: &Array2<f64>) {
    ndarray::Zip::from(grad).and(activation).for_each(|g, &a| {
        if a <= 0.0 {
            *g = 0.0;
        }
    });
}

#[inline]
pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Models whose parameters can be viewed as an ordered list of slices.
///
/// The flat order (tensor by tensor, each row-major) is also the order of the
/// gradients returned by the models' `loss_and_gradient` methods.
pub trait Parameters {
    fn param_slices(&self) -> Vec<&[f64]>;
    fn param_slices_mut(&mut self) -> Vec<&mut [f64]>;

    fn param_count(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }

    fn params_flat(&self) -> Vec<f64> {
        self.param_slices().concat()
    }

    fn set_params_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count(), "flat parameter length");
        let mut offset = 0;
        for s in self.param_slices_mut() {
            s.copy_from_slice(&flat[offset..offset + s.len()]);
            offset += s.len();
        }
    }
}

/// Moments smaller than this are flushed to zero. Once a unit stops
/// receiving gradient its first moment decays geometrically into the
/// subnormal range, where arithmetic is very slow.
const MOMENT_FLOOR: f64 = 1e-200;

/// Adam with bias-corrected moments.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(learning_rate: f64, sizes: impl IntoIterator<Item = usize>) -> Self {
        let (m, v) = sizes.into_iter().map(|n| (vec![0.0; n], vec![0.0; n])).unzip();
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m,
            v,
        }
    }

    pub fn for_model(learning_rate: f64, model: &impl Parameters) -> Self {
        Self::new(learning_rate, model.param_slices().iter().map(|s| s.len()))
    }

    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: &[&[f64]]) {
        assert_eq!(params.len(), self.m.len(), "tensor count");
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step);
        let bc2 = 1.0 - self.beta2.powi(self.step);
        let step_size = self.learning_rate / bc1;
        let inv_sqrt_bc2 = 1.0 / bc2.sqrt();
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            let n = p.len();
            let (g, m, v) = (&g[..n], &mut m[..n], &mut v[..n]);
            for i in 0..n {
                let gi = g[i];
                let m_new = b1 * m[i] + (1.0 - b1) * gi;
                let v_new = b2 * v[i] + (1.0 - b2) * gi * gi;
                let m_new = if m_new.abs() < MOMENT_FLOOR { 0.0 } else { m_new };
                let v_new = if v_new < MOMENT_FLOOR { 0.0 } else { v_new };
                m[i] = m_new;
                v[i] = v_new;
                p[i] -= step_size * m_new / (v_new.sqrt() * inv_sqrt_bc2 + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn glorot_respects_limit() {
        let mut rng = crate::rng::stream(1, 0);
        let w = glorot_uniform(&mut rng, 10, 20, 1000);
        let lim = (6.0f64 / 30.0).sqrt();
        assert!(w.iter().all(|v| v.abs() <= lim));
        assert!(w.iter().any(|v| *v > 0.0) && w.iter().any(|v| *v < 0.0));
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut p = vec![1.0, -2.0];
        let mut adam = Adam::new(0.1, [2]);
        adam.step(vec![p.as_mut_slice()], &[&[3.0, -0.5]]);
        assert!((p[0] - 0.9).abs() < 1e-7);
        assert!((p[1] + 1.9).abs() < 1e-7);
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let mut x = vec![5.0];
        let mut adam = Adam::new(0.05, [1]);
        for _ in 0..2000 {
            let g = [2.0 * (x[0] - 1.5)];
            adam.step(vec![x.as_mut_slice()], &[&g]);
        }
        assert!((x[0] - 1.5).abs() < 1e-3);
    }

    #[test]
    fn idle_moments_flush_to_zero() {
        let mut p = vec![0.0];
        let mut adam = Adam::new(1e-3, [1]);
        adam.step(vec![p.as_mut_slice()], &[&[1e-3]]);
        for _ in 0..5000 {
            adam.step(vec![p.as_mut_slice()], &[&[0.0]]);
        }
        assert_eq!(adam.m[0][0], 0.0);
        assert!(adam.v[0][0] > 0.0);
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
        assert!((sigmoid(2.0) + sigmoid(-2.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn dense_forward_backward_shapes() {
        let mut rng = crate::rng::stream(2, 0);
        let layer = DenseLayer::glorot(5, 3, &mut rng);
        let x = Array2::from_elem((4, 5), 0.5);
        let z = layer.forward(&x);
        assert_eq!(z.dim(), (4, 3));
        let (g, dx) = layer.backward(&x, &Array2::ones((4, 3)), true);
        assert_eq!(g.weights.dim(), (3, 5));
        assert_eq!(g.bias.len(), 3);
        assert_eq!(dx.unwrap().dim(), (4, 5));
    }
}
