//! Minimal deterministic neural-network substrate: dense and small
//! convolution layers with hand-derived gradients, a momentum SGD optimizer,
//! and a finite-difference gradient checker.

mod activation;
pub mod checkpoint;
mod conv;
mod dense;
pub mod gradcheck;
mod sgd;

pub use activation::Activation;
pub use conv::ConvLayer;
pub use dense::DenseLayer;
pub use gradcheck::{grad_check, max_relative_error, BatchLoss};
pub(crate) use sgd::sgd_step_with_lr;
pub use sgd::{sgd_step, SgdConfig, SgdState};

use crate::error::{Error, Result};
use crate::num::Real;

#[derive(Debug, Clone)]
pub enum Layer<R: Real> {
    Dense(DenseLayer<R>),
    Conv(ConvLayer<R>),
}

impl<R: Real> Layer<R> {
    pub fn in_len(&self) -> usize {
        match self {
            Layer::Dense(l) => l.in_dim,
            Layer::Conv(l) => l.in_len(),
        }
    }

    pub fn out_len(&self) -> usize {
        match self {
            Layer::Dense(l) => l.out_dim,
            Layer::Conv(l) => l.out_len(),
        }
    }

    pub fn weight_count(&self) -> usize {
        match self {
            Layer::Dense(l) => l.weights.len(),
            Layer::Conv(l) => l.kernels.len(),
        }
    }

    pub fn bias_count(&self) -> usize {
        match self {
            Layer::Dense(l) => l.bias.len(),
            Layer::Conv(l) => l.bias.len(),
        }
    }

    pub fn weights(&self) -> &[R] {
        match self {
            Layer::Dense(l) => &l.weights,
            Layer::Conv(l) => &l.kernels,
        }
    }

    pub fn weights_mut(&mut self) -> &mut [R] {
        match self {
            Layer::Dense(l) => &mut l.weights,
            Layer::Conv(l) => &mut l.kernels,
        }
    }

    pub fn bias(&self) -> &[R] {
        match self {
            Layer::Dense(l) => &l.bias,
            Layer::Conv(l) => &l.bias,
        }
    }

    pub fn bias_mut(&mut self) -> &mut [R] {
        match self {
            Layer::Dense(l) => &mut l.bias,
            Layer::Conv(l) => &mut l.bias,
        }
    }

    fn forward(&self, input: &[R], output: &mut [R]) {
        match self {
            Layer::Dense(l) => l.forward(input, output),
            Layer::Conv(l) => l.forward(input, output),
        }
    }

    fn backward(
        &self,
        input: &[R],
        output: &[R],
        d_output: &[R],
        d_input: &mut [R],
        grads: &mut LayerGrads<R>,
    ) {
        match self {
            Layer::Dense(l) => l.backward(
                input,
                output,
                d_output,
                d_input,
                &mut grads.weights,
                &mut grads.bias,
            ),
            Layer::Conv(l) => l.backward(
                input,
                output,
                d_output,
                d_input,
                &mut grads.weights,
                &mut grads.bias,
            ),
        }
    }

    /// Analytic FLOP count for one forward pass (2 per multiply-accumulate).
    pub fn flops(&self) -> f64 {
        match self {
            Layer::Dense(l) => 2.0 * (l.in_dim * l.out_dim) as f64,
            Layer::Conv(l) => {
                2.0 * (l.out_ch * l.out_h() * l.out_w() * l.in_ch * l.kh * l.kw) as f64
            }
        }
    }
}

/// Per-layer gradient (or velocity) buffers shaped like the layer parameters.
#[derive(Debug, Clone)]
pub struct LayerGrads<R: Real> {
    pub weights: Vec<R>,
    pub bias: Vec<R>,
}

/// Gradient buffers for a whole network.
#[derive(Debug, Clone)]
pub struct NetGrads<R: Real> {
    pub layers: Vec<LayerGrads<R>>,
}

impl<R: Real> NetGrads<R> {
    pub fn zero(&mut self) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|g| *g = R::zero());
            l.bias.iter_mut().for_each(|g| *g = R::zero());
        }
    }

    pub fn scale(&mut self, factor: R) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|g| *g = *g * factor);
            l.bias.iter_mut().for_each(|g| *g = *g * factor);
        }
    }

    pub fn flat(&self) -> Vec<R> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }
}

/// All activations produced by one forward pass: `values[0]` is the input,
/// `values[i]` the output of layer `i - 1`.
#[derive(Debug, Clone)]
pub struct Activations<R: Real> {
    pub values: Vec<Vec<R>>,
}

impl<R: Real> Activations<R> {
    pub fn output(&self) -> &[R] {
        self.values.last().expect("forward produced activations")
    }
}

/// A feed-forward stack of layers. Consecutive layers must agree on their
/// flattened lengths (conv output is consumed in CHW order).
#[derive(Debug, Clone)]
pub struct Net<R: Real> {
    layers: Vec<Layer<R>>,
}

impl<R: Real> Net<R> {
    pub fn new(layers: Vec<Layer<R>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidInput("network needs at least one layer".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_len() != pair[1].in_len() {
                return Err(Error::DimensionMismatch(format!(
                    "layer {} outputs {} values but layer {} expects {}",
                    i,
                    pair[0].out_len(),
                    i + 1,
                    pair[1].in_len()
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer<R>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<R>] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_len()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("nonempty").out_len()
    }

    /// Runs the network, returning every intermediate activation.
    pub fn forward(&self, input: &[R]) -> Result<Activations<R>> {
        if input.len() != self.input_dim() {
            return Err(Error::DimensionMismatch(format!(
                "input has {} values, network expects {}",
                input.len(),
                self.input_dim()
            )));
        }
        let mut values = Vec::with_capacity(self.layers.len() + 1);
        values.push(input.to_vec());
        for layer in &self.layers {
            let mut out = vec![R::zero(); layer.out_len()];
            layer.forward(values.last().expect("activation"), &mut out);
            values.push(out);
        }
        Ok(Activations { values })
    }

    /// Output of the network for `input`, discarding intermediates.
    pub fn infer(&self, input: &[R]) -> Result<Vec<R>> {
        Ok(self.forward(input)?.values.pop().expect("output"))
    }

    /// Backpropagates `d_output` through activations produced by a matching
    /// [`Net::forward`] call. Parameter gradients are accumulated into
    /// `grads`; the gradient w.r.t. the input is returned.
    pub fn backward(
        &self,
        acts: &Activations<R>,
        d_output: &[R],
        grads: &mut NetGrads<R>,
    ) -> Result<Vec<R>> {
        if acts.values.len() != self.layers.len() + 1
            || grads.layers.len() != self.layers.len()
            || acts
                .values
                .iter()
                .skip(1)
                .zip(&self.layers)
                .any(|(a, l)| a.len() != l.out_len())
            || acts.values[0].len() != self.input_dim()
        {
            return Err(Error::InvalidInput(
                "activations do not match this network; rerun forward".into(),
            ));
        }
        if d_output.len() != self.output_dim() {
            return Err(Error::DimensionMismatch(format!(
                "output gradient has {} values, network produces {}",
                d_output.len(),
                self.output_dim()
            )));
        }
        let mut d_out = d_output.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let mut d_in = vec![R::zero(); layer.in_len()];
            layer.backward(
                &acts.values[i],
                &acts.values[i + 1],
                &d_out,
                &mut d_in,
                &mut grads.layers[i],
            );
            d_out = d_in;
        }
        Ok(d_out)
    }

    /// Zeroed gradient buffers shaped like this network.
    pub fn zero_grads(&self) -> NetGrads<R> {
        NetGrads {
            layers: self
                .layers
                .iter()
                .map(|l| LayerGrads {
                    weights: vec![R::zero(); l.weight_count()],
                    bias: vec![R::zero(); l.bias_count()],
                })
                .collect(),
        }
    }

    /// Applies one SGD step (see [`sgd_step`]) to every parameter.
    pub fn sgd_step(
        &mut self,
        grads: &NetGrads<R>,
        state: &mut SgdState<R>,
        cfg: &SgdConfig<R>,
        epoch: usize,
    ) -> Result<()> {
        let lr = cfg.lr_at_epoch(epoch);
        for ((layer, g), v) in self
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut state.velocity.layers)
        {
            sgd::sgd_step_with_lr(layer.weights_mut(), &g.weights, &mut v.weights, cfg, lr)?;
            sgd::sgd_step_with_lr(layer.bias_mut(), &g.bias, &mut v.bias, cfg, lr)?;
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight_count() + l.bias_count())
            .sum()
    }

    /// Flat parameter accessor used by the gradient checker: weights then
    /// bias, layer by layer.
    pub fn param(&self, index: usize) -> R {
        let (layer, offset) = self.locate(index);
        let l = &self.layers[layer];
        if offset < l.weight_count() {
            l.weights()[offset]
        } else {
            l.bias()[offset - l.weight_count()]
        }
    }

    pub fn set_param(&mut self, index: usize, value: R) {
        let (layer, offset) = self.locate(index);
        let l = &mut self.layers[layer];
        let wc = l.weight_count();
        if offset < wc {
            l.weights_mut()[offset] = value;
        } else {
            l.bias_mut()[offset - wc] = value;
        }
    }

    fn locate(&self, index: usize) -> (usize, usize) {
        let mut rest = index;
        for (i, l) in self.layers.iter().enumerate() {
            let n = l.weight_count() + l.bias_count();
            if rest < n {
                return (i, rest);
            }
            rest -= n;
        }
        panic!("parameter index {index} out of range");
    }

    /// Analytic FLOPs for one forward pass.
    pub fn flops(&self) -> f64 {
        self.layers.iter().map(|l| l.flops()).sum()
    }
}
