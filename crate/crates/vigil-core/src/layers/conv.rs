//! Valid 1-D convolution over time with ReLU activation.

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::layers::init;
use crate::params::{Binding, ParamId, ParamStore};
use crate::rng::RngState;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct Conv1d {
    pub kernels: ParamId,
    pub bias: ParamId,
    pub filters: usize,
    pub width: usize,
}

impl Conv1d {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        in_chan: usize,
        filters: usize,
        width: usize,
        rng: &mut RngState,
    ) -> Result<Conv1d> {
        let kernels = store.add(
            format!("{name}.kernels"),
            init::conv_kernel(filters, width, in_chan, rng),
            true,
        )?;
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[filters]), true)?;
        Ok(Conv1d {
            kernels,
            bias,
            filters,
            width,
        })
    }

    /// `[batch, time, in_chan]` → ReLU(conv) `[batch, time-width+1, filters]`.
    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, bind: &Binding, x: Var) -> Result<Var> {
        let y = g.conv1d(x, bind.var(self.kernels), bind.var(self.bias))?;
        g.relu(y)
    }
}
