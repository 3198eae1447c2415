//! Fully-connected layer: `y = activation(W x + b)` with `W` stored row-major
//! as `[out_dim x in_dim]`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::Activation;
use crate::num::{real, Real};

#[derive(Debug, Clone)]
pub struct DenseLayer<R: Real> {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
    /// Row-major `[out_dim x in_dim]`.
    pub weights: Vec<R>,
    pub bias: Vec<R>,
}

impl<R: Real> DenseLayer<R> {
    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::InvalidInput("dense layer dims must be > 0".into()));
        }
        Ok(Self {
            in_dim,
            out_dim,
            activation,
            weights: vec![R::zero(); in_dim * out_dim],
            bias: vec![R::zero(); out_dim],
        })
    }

    /// Seeded init: He-uniform for relu layers, Xavier-uniform otherwise.
    pub fn init<G: Rng>(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut G,
    ) -> Result<Self> {
        let mut layer = Self::zeros(in_dim, out_dim, activation)?;
        let limit = init_limit(activation, in_dim, out_dim);
        for w in &mut layer.weights {
            *w = real::<R>(rng.random_range(-limit..limit));
        }
        Ok(layer)
    }

    pub fn forward(&self, input: &[R], output: &mut [R]) {
        debug_assert_eq!(input.len(), self.in_dim);
        debug_assert_eq!(output.len(), self.out_dim);
        for (o, out) in output.iter_mut().enumerate() {
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            let mut sum = self.bias[o];
            for (w, x) in row.iter().zip(input) {
                sum = w.mul_add(*x, sum);
            }
            *out = self.activation.apply(sum);
        }
    }

    /// Backward for one sample. `d_input` is overwritten, parameter gradients
    /// are accumulated (`+=`) so batches can share one gradient buffer.
    pub fn backward(
        &self,
        input: &[R],
        output: &[R],
        d_output: &[R],
        d_input: &mut [R],
        d_weights: &mut [R],
        d_bias: &mut [R],
    ) {
        debug_assert_eq!(input.len(), self.in_dim);
        debug_assert_eq!(output.len(), self.out_dim);
        debug_assert_eq!(d_output.len(), self.out_dim);
        debug_assert_eq!(d_input.len(), self.in_dim);
        debug_assert_eq!(d_weights.len(), self.weights.len());
        debug_assert_eq!(d_bias.len(), self.out_dim);

        for v in d_input.iter_mut() {
            *v = R::zero();
        }
        for o in 0..self.out_dim {
            let dz = d_output[o] * self.activation.grad_from_output(output[o]);
            if dz == R::zero() {
                continue;
            }
            d_bias[o] += dz;
            let row = o * self.in_dim;
            for i in 0..self.in_dim {
                d_weights[row + i] = dz.mul_add(input[i], d_weights[row + i]);
                d_input[i] = self.weights[row + i].mul_add(dz, d_input[i]);
            }
        }
    }
}

pub(crate) fn init_limit(activation: Activation, fan_in: usize, fan_out: usize) -> f64 {
    match activation {
        Activation::Relu => (6.0 / fan_in as f64).sqrt(),
        _ => (6.0 / (fan_in + fan_out) as f64).sqrt(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_layer_passes_input_through() {
        // W = I, b = 0.
        let mut layer = DenseLayer::<f64>::zeros(2, 2, Activation::Identity).unwrap();
        layer.weights[0] = 1.0;
        layer.weights[3] = 1.0;
        let mut out = [0.0; 2];
        layer.forward(&[0.3, 0.7], &mut out);
        assert_eq!(out, [0.3, 0.7]);
    }

    #[test]
    fn sigmoid_layer_matches_direct_evaluation() {
        let mut layer = DenseLayer::<f64>::zeros(2, 1, Activation::Sigmoid).unwrap();
        layer.weights = vec![1.0, 1.0];
        layer.bias = vec![-1.0];
        let mut out = [0.0];
        layer.forward(&[1.0, 1.0], &mut out);
        assert!((out[0] - 0.7310585786300049).abs() < 1e-12);
    }

    #[test]
    fn scalar_linear_loss_gradient_is_input() {
        // y = Wx, loss = y (scalar output): dL/dW = x^T.
        let mut layer = DenseLayer::<f64>::zeros(3, 1, Activation::Identity).unwrap();
        layer.weights = vec![0.2, -0.4, 0.9];
        let x = [1.5, -2.0, 0.25];
        let mut y = [0.0];
        layer.forward(&x, &mut y);
        let mut d_input = [0.0; 3];
        let mut d_weights = [0.0; 3];
        let mut d_bias = [0.0];
        layer.backward(&x, &y, &[1.0], &mut d_input, &mut d_weights, &mut d_bias);
        assert_eq!(d_weights, x);
        assert_eq!(d_bias, [1.0]);
    }

    #[test]
    fn zero_output_gradient_gives_zero_parameter_gradients() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        use rand::SeedableRng;
        let layer = DenseLayer::<f64>::init(4, 3, Activation::Sigmoid, &mut rng).unwrap();
        let x = [0.1, 0.2, 0.3, 0.4];
        let mut y = [0.0; 3];
        layer.forward(&x, &mut y);
        let mut d_input = [0.0; 4];
        let mut d_weights = [0.0; 12];
        let mut d_bias = [0.0; 3];
        layer.backward(
            &x,
            &y,
            &[0.0; 3],
            &mut d_input,
            &mut d_weights,
            &mut d_bias,
        );
        assert!(d_weights.iter().all(|&g| g == 0.0));
        assert!(d_bias.iter().all(|&g| g == 0.0));
        assert!(d_input.iter().all(|&g| g == 0.0));
    }
}
