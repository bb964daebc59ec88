//! Weight initialization.
//!
//! Constants: Glorot-uniform limit `sqrt(6 / (fan_in + fan_out))` for input
//! kernels, the same scaled-uniform rule on the square recurrent kernels,
//! zero biases except the LSTM forget gate, which starts at 1.0.

use crate::rng::RngState;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub fn glorot_uniform<T: Scalar>(
    shape: &[usize],
    fan_in: usize,
    fan_out: usize,
    rng: &mut RngState,
) -> Tensor<T> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::uniform(shape, T::from_f64(-limit), T::from_f64(limit), rng)
}

/// Dense kernel `[in, out]`.
pub fn dense_kernel<T: Scalar>(in_dim: usize, out_dim: usize, rng: &mut RngState) -> Tensor<T> {
    glorot_uniform(&[in_dim, out_dim], in_dim, out_dim, rng)
}

/// Recurrent kernel `[hidden, hidden]`.
pub fn recurrent_kernel<T: Scalar>(hidden: usize, rng: &mut RngState) -> Tensor<T> {
    glorot_uniform(&[hidden, hidden], hidden, hidden, rng)
}

/// Convolution kernel `[filters, width, in_chan]`; fans count the receptive
/// field.
pub fn conv_kernel<T: Scalar>(
    filters: usize,
    width: usize,
    in_chan: usize,
    rng: &mut RngState,
) -> Tensor<T> {
    glorot_uniform(&[filters, width, in_chan], width * in_chan, width * filters, rng)
}
