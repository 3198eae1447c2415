//! Central finite-difference verification of analytic gradients.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::Net;
use crate::num::{real, Real};

/// A differentiable loss over a batch of network outputs.
pub trait BatchLoss<R: Real> {
    fn value(&self, outputs: &[Vec<R>]) -> R;
    /// dLoss/dOutput for every sample, matching `value`.
    fn output_grads(&self, outputs: &[Vec<R>]) -> Vec<Vec<R>>;
}

/// `max_i |a_i - n_i| / max(|a_i|, |n_i|, 1e-12)`.
pub fn max_relative_error<R: Real>(analytic: &[R], numeric: &[R]) -> R {
    debug_assert_eq!(analytic.len(), numeric.len());
    let floor = real::<R>(1e-12);
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(R::zero(), |m, e| m.max(e))
}

/// Batch gradient of `loss` w.r.t. every network parameter, flattened in
/// parameter order.
pub fn analytic_gradient<R: Real, L: BatchLoss<R>>(
    net: &Net<R>,
    inputs: &[Vec<R>],
    loss: &L,
) -> Result<Vec<R>> {
    let mut grads = net.zero_grads();
    let acts: Vec<_> = inputs
        .iter()
        .map(|x| net.forward(x))
        .collect::<Result<_>>()?;
    let outputs: Vec<Vec<R>> = acts.iter().map(|a| a.output().to_vec()).collect();
    let d_outputs = loss.output_grads(&outputs);
    for (a, d) in acts.iter().zip(&d_outputs) {
        net.backward(a, d, &mut grads)?;
    }
    Ok(grads.flat())
}

/// Central-difference gradient of `loss` over the parameter indices in
/// `params`, in the same order.
pub fn numeric_gradient<R: Real, L: BatchLoss<R>>(
    net: &Net<R>,
    inputs: &[Vec<R>],
    loss: &L,
    epsilon: R,
    params: &[usize],
) -> Result<Vec<R>> {
    let mut probe = net.clone();
    let eval = |net: &Net<R>| -> Result<R> {
        let outputs: Vec<Vec<R>> = inputs
            .iter()
            .map(|x| net.infer(x))
            .collect::<Result<_>>()?;
        Ok(loss.value(&outputs))
    };
    let mut out = Vec::with_capacity(params.len());
    for &i in params {
        let orig = probe.param(i);
        probe.set_param(i, orig + epsilon);
        let plus = eval(&probe)?;
        probe.set_param(i, orig - epsilon);
        let minus = eval(&probe)?;
        probe.set_param(i, orig);
        out.push((plus - minus) / (real::<R>(2.0) * epsilon));
    }
    Ok(out)
}

/// Compares analytic and central finite-difference gradients of `loss` on
/// `inputs` and returns the maximum relative error over the checked
/// parameters. Never mutates the network.
///
/// With `sample = Some((k, seed))` only `k` seeded parameter picks per layer
/// are differenced numerically, which keeps the check tractable on large
/// convolutional stacks; `None` checks every parameter.
pub fn grad_check<R: Real, L: BatchLoss<R>>(
    net: &Net<R>,
    inputs: &[Vec<R>],
    loss: &L,
    epsilon: R,
    sample: Option<(usize, u64)>,
) -> Result<R> {
    if epsilon < real(1e-6) || epsilon > real(1e-3) {
        return Err(Error::InvalidInput(format!(
            "finite-difference epsilon {epsilon} outside [1e-6, 1e-3]"
        )));
    }
    let analytic = analytic_gradient(net, inputs, loss)?;
    let indices = match sample {
        None => (0..net.param_count()).collect::<Vec<_>>(),
        Some((per_layer, seed)) => sampled_indices(net, per_layer, seed),
    };
    let numeric = numeric_gradient(net, inputs, loss, epsilon, &indices)?;
    let picked: Vec<R> = indices.iter().map(|&i| analytic[i]).collect();
    Ok(max_relative_error(&picked, &numeric))
}

fn sampled_indices<R: Real>(net: &Net<R>, per_layer: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices = Vec::new();
    let mut base = 0usize;
    for layer in net.layers() {
        let n = layer.weight_count() + layer.bias_count();
        if n <= per_layer {
            indices.extend(base..base + n);
        } else {
            let picks = rand::seq::index::sample(&mut rng, n, per_layer);
            indices.extend(picks.iter().map(|i| base + i));
        }
        base += n;
    }
    indices.sort_unstable();
    indices
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, DenseLayer, Layer};

    /// Loss: sum of all outputs across the batch (analytically linear).
    struct SumLoss;

    impl BatchLoss<f64> for SumLoss {
        fn value(&self, outputs: &[Vec<f64>]) -> f64 {
            outputs.iter().flat_map(|o| o.iter()).sum()
        }

        fn output_grads(&self, outputs: &[Vec<f64>]) -> Vec<Vec<f64>> {
            outputs.iter().map(|o| vec![1.0; o.len()]).collect()
        }
    }

    #[test]
    fn linear_loss_checks_to_rounding_error() {
        let mut l = DenseLayer::<f64>::zeros(3, 2, Activation::Identity).unwrap();
        l.weights = vec![0.5, -0.25, 1.0, 0.75, 0.1, -0.6];
        l.bias = vec![0.2, -0.3];
        let net = Net::new(vec![Layer::Dense(l)]).unwrap();
        let inputs = vec![vec![0.4, -0.9, 0.3], vec![-0.2, 0.5, 0.8]];
        let err = grad_check(&net, &inputs, &SumLoss, 1e-4, None).unwrap();
        assert!(err <= 1e-10, "max rel err {err}");
    }

    #[test]
    fn corrupted_gradient_reports_half() {
        let mut l = DenseLayer::<f64>::zeros(2, 1, Activation::Identity).unwrap();
        l.weights = vec![0.3, -0.7];
        let net = Net::new(vec![Layer::Dense(l)]).unwrap();
        let inputs = vec![vec![0.9, 0.4]];
        let analytic: Vec<f64> = analytic_gradient(&net, &inputs, &SumLoss)
            .unwrap()
            .iter()
            .map(|g| g * 2.0)
            .collect();
        let indices: Vec<usize> = (0..net.param_count()).collect();
        let numeric = numeric_gradient(&net, &inputs, &SumLoss, 1e-4, &indices).unwrap();
        let err = max_relative_error(&analytic, &numeric);
        assert!((err - 0.5).abs() < 1e-6, "expected ~0.5, got {err}");
    }

    #[test]
    fn epsilon_outside_range_is_rejected() {
        let l = DenseLayer::<f64>::zeros(2, 1, Activation::Identity).unwrap();
        let net = Net::new(vec![Layer::Dense(l)]).unwrap();
        let inputs = vec![vec![0.0, 0.0]];
        assert!(grad_check(&net, &inputs, &SumLoss, 1e-2, None).is_err());
        assert!(grad_check(&net, &inputs, &SumLoss, 1e-7, None).is_err());
    }
}
