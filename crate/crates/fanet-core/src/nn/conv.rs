//! 2-D convolution layer over CHW tensors with zero padding.
//!
//! Spatial output size per axis is `floor((in + 2*pad - k)/stride) + 1`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::dense::init_limit;
use crate::nn::Activation;
use crate::num::{real, Real};

#[derive(Debug, Clone)]
pub struct ConvLayer<R: Real> {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub activation: Activation,
    /// `[out_ch x in_ch x kh x kw]`, row-major.
    pub kernels: Vec<R>,
    pub bias: Vec<R>,
}

impl<R: Real> ConvLayer<R> {
    pub fn zeros(
        in_ch: usize,
        out_ch: usize,
        kh: usize,
        kw: usize,
        stride: usize,
        pad: usize,
        in_h: usize,
        in_w: usize,
        activation: Activation,
    ) -> Result<Self> {
        if in_ch == 0 || out_ch == 0 || kh == 0 || kw == 0 || stride == 0 {
            return Err(Error::InvalidInput("conv layer dims must be > 0".into()));
        }
        if in_h + 2 * pad < kh || in_w + 2 * pad < kw {
            return Err(Error::InvalidInput(format!(
                "kernel {kh}x{kw} larger than padded input {in_h}x{in_w} (pad {pad})"
            )));
        }
        Ok(Self {
            in_ch,
            out_ch,
            kh,
            kw,
            stride,
            pad,
            in_h,
            in_w,
            activation,
            kernels: vec![R::zero(); out_ch * in_ch * kh * kw],
            bias: vec![R::zero(); out_ch],
        })
    }

    #[allow(clippy::too_many_arguments)]
    pub fn init<G: Rng>(
        in_ch: usize,
        out_ch: usize,
        kh: usize,
        kw: usize,
        stride: usize,
        pad: usize,
        in_h: usize,
        in_w: usize,
        activation: Activation,
        rng: &mut G,
    ) -> Result<Self> {
        let mut layer = Self::zeros(in_ch, out_ch, kh, kw, stride, pad, in_h, in_w, activation)?;
        let fan_in = in_ch * kh * kw;
        let fan_out = out_ch * kh * kw;
        let limit = init_limit(activation, fan_in, fan_out);
        for k in &mut layer.kernels {
            *k = real::<R>(rng.random_range(-limit..limit));
        }
        Ok(layer)
    }

    pub fn out_h(&self) -> usize {
        (self.in_h + 2 * self.pad - self.kh) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.in_w + 2 * self.pad - self.kw) / self.stride + 1
    }

    pub fn in_len(&self) -> usize {
        self.in_ch * self.in_h * self.in_w
    }

    pub fn out_len(&self) -> usize {
        self.out_ch * self.out_h() * self.out_w()
    }

    pub fn forward(&self, input: &[R], output: &mut [R]) {
        debug_assert_eq!(input.len(), self.in_len());
        debug_assert_eq!(output.len(), self.out_len());
        let (oh, ow) = (self.out_h(), self.out_w());
        let plane = self.in_h * self.in_w;
        let ksize = self.kh * self.kw;
        for o in 0..self.out_ch {
            let kbase = o * self.in_ch * ksize;
            for y in 0..oh {
                for x in 0..ow {
                    let mut sum = self.bias[o];
                    for c in 0..self.in_ch {
                        let kofs = kbase + c * ksize;
                        let iofs = c * plane;
                        for ky in 0..self.kh {
                            let iy = (y * self.stride + ky) as isize - self.pad as isize;
                            if iy < 0 || iy >= self.in_h as isize {
                                continue;
                            }
                            let irow = iofs + iy as usize * self.in_w;
                            let krow = kofs + ky * self.kw;
                            for kx in 0..self.kw {
                                let ix = (x * self.stride + kx) as isize - self.pad as isize;
                                if ix < 0 || ix >= self.in_w as isize {
                                    continue;
                                }
                                sum = self.kernels[krow + kx]
                                    .mul_add(input[irow + ix as usize], sum);
                            }
                        }
                    }
                    output[(o * oh + y) * ow + x] = self.activation.apply(sum);
                }
            }
        }
    }

    /// Backward for one sample; `d_input` overwritten, parameter gradients
    /// accumulated.
    pub fn backward(
        &self,
        input: &[R],
        output: &[R],
        d_output: &[R],
        d_input: &mut [R],
        d_kernels: &mut [R],
        d_bias: &mut [R],
    ) {
        debug_assert_eq!(input.len(), self.in_len());
        debug_assert_eq!(output.len(), self.out_len());
        debug_assert_eq!(d_output.len(), self.out_len());
        debug_assert_eq!(d_input.len(), self.in_len());
        debug_assert_eq!(d_kernels.len(), self.kernels.len());
        debug_assert_eq!(d_bias.len(), self.out_ch);

        for v in d_input.iter_mut() {
            *v = R::zero();
        }
        let (oh, ow) = (self.out_h(), self.out_w());
        let plane = self.in_h * self.in_w;
        let ksize = self.kh * self.kw;
        for o in 0..self.out_ch {
            let kbase = o * self.in_ch * ksize;
            for y in 0..oh {
                for x in 0..ow {
                    let oidx = (o * oh + y) * ow + x;
                    let dz = d_output[oidx] * self.activation.grad_from_output(output[oidx]);
                    if dz == R::zero() {
                        continue;
                    }
                    d_bias[o] += dz;
                    for c in 0..self.in_ch {
                        let kofs = kbase + c * ksize;
                        let iofs = c * plane;
                        for ky in 0..self.kh {
                            let iy = (y * self.stride + ky) as isize - self.pad as isize;
                            if iy < 0 || iy >= self.in_h as isize {
                                continue;
                            }
                            let irow = iofs + iy as usize * self.in_w;
                            let krow = kofs + ky * self.kw;
                            for kx in 0..self.kw {
                                let ix = (x * self.stride + kx) as isize - self.pad as isize;
                                if ix < 0 || ix >= self.in_w as isize {
                                    continue;
                                }
                                let ii = irow + ix as usize;
                                d_kernels[krow + kx] = dz.mul_add(input[ii], d_kernels[krow + kx]);
                                d_input[ii] = self.kernels[krow + kx].mul_add(dz, d_input[ii]);
                            }
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_ones_kernel_sums_the_window() {
        // 1-channel 3x3 conv, all-ones kernel, stride 1, pad 0, all-ones 3x3
        // image: single output equal to 9.
        let mut layer =
            ConvLayer::<f64>::zeros(1, 1, 3, 3, 1, 0, 3, 3, Activation::Identity).unwrap();
        layer.kernels.iter_mut().for_each(|k| *k = 1.0);
        let input = vec![1.0; 9];
        let mut out = vec![0.0; 1];
        layer.forward(&input, &mut out);
        assert_eq!(out[0], 9.0);
    }

    #[test]
    fn output_size_follows_stride_and_padding() {
        let layer =
            ConvLayer::<f64>::zeros(1, 4, 3, 3, 2, 1, 11, 7, Activation::Relu).unwrap();
        assert_eq!(layer.out_h(), (11 + 2 - 3) / 2 + 1);
        assert_eq!(layer.out_w(), (7 + 2 - 3) / 2 + 1);
    }

    #[test]
    fn kernel_larger_than_input_is_rejected() {
        let err = ConvLayer::<f64>::zeros(1, 1, 5, 5, 1, 0, 3, 3, Activation::Identity);
        assert!(err.is_err());
    }
}
