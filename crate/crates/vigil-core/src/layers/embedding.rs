//! Embedding table and lookup layer. Row 0 is the padding row: always zero,
//! never updated.

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::params::{Binding, ParamId, ParamStore};
use crate::rng::RngState;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Index of the padding row in every embedding table.
pub const PAD_ROW: u32 = 0;

/// A `[vocab, dim]` embedding matrix with the padding row pinned to zero.
#[derive(Debug, Clone)]
pub struct EmbeddingTable<T> {
    pub weights: Tensor<T>,
    pub trainable: bool,
}

impl<T: Scalar> EmbeddingTable<T> {
    /// Wrap a weight matrix, zeroing the padding row.
    pub fn new(mut weights: Tensor<T>, trainable: bool) -> Result<Self> {
        if weights.rank() != 2 {
            return Err(Error::shape("embedding_table", weights.shape(), &[0, 0]));
        }
        let dim = weights.shape()[1];
        for v in &mut weights.data_mut()[..dim] {
            *v = T::zero();
        }
        Ok(EmbeddingTable { weights, trainable })
    }

    /// Fresh table with uniform entries in [-0.05, 0.05] and a zero pad row.
    pub fn random(vocab: usize, dim: usize, trainable: bool, rng: &mut RngState) -> Self {
        let lim = T::from_f64(0.05);
        let weights = Tensor::uniform(&[vocab, dim], -lim, lim, rng);
        Self::new(weights, trainable).expect("rank-2 by construction")
    }

    pub fn vocab_size(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.weights.shape()[1]
    }
}

/// Lookup layer over a registered embedding table.
#[derive(Debug, Clone)]
pub struct Embedding {
    pub table: ParamId,
}

impl Embedding {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        table: EmbeddingTable<T>,
    ) -> Result<Embedding> {
        let id = store.add(name, table.weights, table.trainable)?;
        Ok(Embedding { table: id })
    }

    /// Look up `[batch * seq_len]` ids as `[batch, seq_len, dim]` vectors.
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        bind: &Binding,
        ids: &[u32],
        seq_len: usize,
    ) -> Result<Var> {
        g.embedding(bind.var(self.table), ids, seq_len, PAD_ROW)
    }
}
