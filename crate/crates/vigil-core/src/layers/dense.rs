//! Affine output head.

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::layers::init;
use crate::params::{Binding, ParamId, ParamStore};
use crate::rng::RngState;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Dense {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut RngState,
    ) -> Result<Dense> {
        let weight = store.add(
            format!("{name}.weight"),
            init::dense_kernel(in_dim, out_dim, rng),
            true,
        )?;
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[out_dim]), true)?;
        Ok(Dense { weight, bias })
    }

    /// `[batch, in] · W + b`
    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, bind: &Binding, x: Var) -> Result<Var> {
        let y = g.matmul(x, bind.var(self.weight))?;
        g.add_bias(y, bind.var(self.bias))
    }
}
