//! Named parameter registry shared by layers, optimizers and checkpoints.
//!
//! Parameters live outside any graph. Each training step binds them into a
//! fresh [`Graph`] as leaves, runs forward/backward there, and reads the
//! gradients back out through the binding.

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Handle to one parameter tensor in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub trainable: bool,
}

/// Ordered collection of uniquely named parameters.
#[derive(Debug, Clone, Default)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore { params: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>, trainable: bool) -> Result<ParamId> {
        let name = name.into();
        if self.params.iter().any(|p| p.name == name) {
            return Err(Error::Config(format!("duplicate parameter name '{name}'")));
        }
        self.params.push(Param {
            name,
            value,
            trainable,
        });
        Ok(ParamId(self.params.len() - 1))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Param<T> {
        &self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].value
    }

    pub fn set_value(&mut self, id: ParamId, value: Tensor<T>) -> Result<()> {
        let cur = &self.params[id.0];
        if cur.value.shape() != value.shape() {
            return Err(Error::shape("set_value", cur.value.shape(), value.shape()));
        }
        self.params[id.0].value = value;
        Ok(())
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.params[id.0].value
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param<T>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    /// Deep-copy of every value, in registry order.
    pub fn snapshot(&self) -> Vec<Tensor<T>> {
        self.params.iter().map(|p| p.value.clone()).collect()
    }

    pub fn restore(&mut self, snapshot: &[Tensor<T>]) -> Result<()> {
        if snapshot.len() != self.params.len() {
            return Err(Error::Contract(format!(
                "snapshot holds {} tensors, store holds {}",
                snapshot.len(),
                self.params.len()
            )));
        }
        for (p, s) in self.params.iter_mut().zip(snapshot) {
            if p.value.shape() != s.shape() {
                return Err(Error::shape("restore", p.value.shape(), s.shape()));
            }
            p.value = s.clone();
        }
        Ok(())
    }
}

/// Graph leaves for every parameter of a store, for one forward/backward pass.
pub struct Binding {
    vars: Vec<Var>,
}

impl Binding {
    /// Insert all parameters as leaves: differentiable when trainable,
    /// constant otherwise.
    pub fn bind<T: Scalar>(graph: &mut Graph<T>, store: &ParamStore<T>) -> Binding {
        let vars = store
            .params
            .iter()
            .map(|p| {
                if p.trainable {
                    graph.param(p.value.clone())
                } else {
                    graph.leaf(p.value.clone())
                }
            })
            .collect();
        Binding { vars }
    }

    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    /// Gradients in registry order; `None` for parameters without one
    /// (untrainable, or backward not run).
    pub fn grads<'g, T: Scalar>(&self, graph: &'g Graph<T>) -> Vec<Option<&'g [T]>> {
        self.vars.iter().map(|&v| graph.grad(v)).collect()
    }
}
