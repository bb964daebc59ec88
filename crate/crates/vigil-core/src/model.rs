//! The three classifier architectures, assembled from the layer library.
//!
//! All share an embedding layer, 1-D spatial dropout, a valid-padding
//! convolution stage, global max pooling and a 3-way dense head. The
//! flagship stacks a bidirectional GRU and two parallel bidirectional LSTM
//! blocks between dropout and convolution.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::layers::{Bidirectional, Conv1d, Dense, Embedding, EmbeddingTable, SpatialDropout1d};
use crate::params::{Binding, ParamStore};
use crate::rng::RngState;
use crate::scalar::Scalar;
use crate::text::dataset::NUM_CLASSES;
use crate::text::vocab::EncodedBatch;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "textcnn")]
    TextCnn,
    #[serde(rename = "bigru-cnn")]
    BiGruCnn,
    #[serde(rename = "bigru-lstm-cnn")]
    BiGruLstmCnn,
}

impl ModelKind {
    /// Display name as used in result tables.
    pub fn display_name(&self) -> &'static str {
        match self {
            ModelKind::TextCnn => "TextCNN",
            ModelKind::BiGruCnn => "Bi-GRU-CNN",
            ModelKind::BiGruLstmCnn => "Bi-GRU-LSTM-CNN",
        }
    }

    pub fn parse_cli(s: &str) -> Result<ModelKind> {
        match s {
            "textcnn" => Ok(ModelKind::TextCnn),
            "bigru-cnn" => Ok(ModelKind::BiGruCnn),
            "bigru-lstm-cnn" => Ok(ModelKind::BiGruLstmCnn),
            other => Err(Error::Config(format!(
                "unknown model '{other}'; expected textcnn, bigru-cnn or bigru-lstm-cnn"
            ))),
        }
    }
}

/// Declarative description of one architecture plus its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub max_len: usize,
    pub embed_dim: usize,
    pub dropout_rate: f64,
    pub lstm_units: usize,
    pub gru_units: usize,
    pub conv_filters: usize,
    pub kernel_widths: Vec<usize>,
    pub num_classes: usize,
    pub embeddings_trainable: bool,
}

impl ModelSpec {
    /// Defaults for a kind. TextCNN uses parallel widths {3,4,5} with 100
    /// filters each; the recurrent models use one width-3 convolution with
    /// 64 filters.
    pub fn new(kind: ModelKind) -> ModelSpec {
        let (conv_filters, kernel_widths) = match kind {
            ModelKind::TextCnn => (100, vec![3, 4, 5]),
            _ => (64, vec![3]),
        };
        ModelSpec {
            kind,
            max_len: 220,
            embed_dim: 300,
            dropout_rate: 0.2,
            lstm_units: 112,
            gru_units: 112,
            conv_filters,
            kernel_widths,
            num_classes: NUM_CLASSES,
            embeddings_trainable: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("max_len", self.max_len),
            ("embed_dim", self.embed_dim),
            ("lstm_units", self.lstm_units),
            ("gru_units", self.gru_units),
            ("conv_filters", self.conv_filters),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout_rate must be in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        if self.kernel_widths.is_empty() {
            return Err(Error::Config("kernel_widths must not be empty".into()));
        }
        for &w in &self.kernel_widths {
            if w < 1 || w > self.max_len {
                return Err(Error::Config(format!(
                    "kernel width {w} outside [1, max_len={}]",
                    self.max_len
                )));
            }
        }
        if self.num_classes != NUM_CLASSES {
            return Err(Error::Config(format!(
                "num_classes must be {NUM_CLASSES}, got {}",
                self.num_classes
            )));
        }
        Ok(())
    }
}

#[derive(Debug)]
enum Topology {
    TextCnn {
        convs: Vec<Conv1d>,
        dense: Dense,
    },
    BiGruCnn {
        gru: Bidirectional,
        conv: Conv1d,
        dense: Dense,
    },
    BiGruLstmCnn {
        gru: Bidirectional,
        lstm_a: Bidirectional,
        lstm_b: Bidirectional,
        conv: Conv1d,
        dense: Dense,
    },
}

/// One classification per input row.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: u8,
    pub probs: [f64; NUM_CLASSES],
}

/// A built architecture: spec, parameter registry and layer stack.
#[derive(Debug)]
pub struct Model<T: Scalar> {
    spec: ModelSpec,
    store: ParamStore<T>,
    embedding: Embedding,
    dropout: SpatialDropout1d,
    topology: Topology,
}

impl<T: Scalar> Model<T> {
    /// Assemble the architecture described by `spec` around an embedding
    /// table. Layer parameters are drawn from `rng`.
    pub fn build(
        spec: ModelSpec,
        table: EmbeddingTable<T>,
        rng: &mut RngState,
    ) -> Result<Model<T>> {
        spec.validate()?;
        if table.dim() != spec.embed_dim {
            return Err(Error::Config(format!(
                "embedding table dimension {} does not match spec embed_dim {}",
                table.dim(),
                spec.embed_dim
            )));
        }
        let mut store = ParamStore::new();
        let mut table = table;
        table.trainable = spec.embeddings_trainable;
        let embedding = Embedding::new(&mut store, "embedding.weight", table)?;
        let dropout = SpatialDropout1d::new(spec.dropout_rate)?;

        let topology = match spec.kind {
            ModelKind::TextCnn => {
                let convs = spec
                    .kernel_widths
                    .iter()
                    .map(|&w| {
                        Conv1d::new(
                            &mut store,
                            &format!("conv{w}"),
                            spec.embed_dim,
                            spec.conv_filters,
                            w,
                            rng,
                        )
                    })
                    .collect::<Result<Vec<_>>>()?;
                let dense = Dense::new(
                    &mut store,
                    "dense",
                    spec.conv_filters * spec.kernel_widths.len(),
                    spec.num_classes,
                    rng,
                )?;
                Topology::TextCnn { convs, dense }
            }
            ModelKind::BiGruCnn => {
                let gru = Bidirectional::gru(&mut store, "gru", spec.embed_dim, spec.gru_units, rng)?;
                let conv = Conv1d::new(
                    &mut store,
                    "conv",
                    gru.out_channels(),
                    spec.conv_filters,
                    spec.kernel_widths[0],
                    rng,
                )?;
                let dense = Dense::new(&mut store, "dense", spec.conv_filters, spec.num_classes, rng)?;
                Topology::BiGruCnn { gru, conv, dense }
            }
            ModelKind::BiGruLstmCnn => {
                let gru = Bidirectional::gru(&mut store, "gru", spec.embed_dim, spec.gru_units, rng)?;
                let lstm_a =
                    Bidirectional::lstm(&mut store, "lstm1", gru.out_channels(), spec.lstm_units, rng)?;
                let lstm_b =
                    Bidirectional::lstm(&mut store, "lstm2", gru.out_channels(), spec.lstm_units, rng)?;
                let conv = Conv1d::new(
                    &mut store,
                    "conv",
                    lstm_a.out_channels() + lstm_b.out_channels(),
                    spec.conv_filters,
                    spec.kernel_widths[0],
                    rng,
                )?;
                let dense = Dense::new(&mut store, "dense", spec.conv_filters, spec.num_classes, rng)?;
                Topology::BiGruLstmCnn {
                    gru,
                    lstm_a,
                    lstm_b,
                    conv,
                    dense,
                }
            }
        };
        Ok(Model {
            spec,
            store,
            embedding,
            dropout,
            topology,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn store(&self) -> &ParamStore<T> {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    /// Vocabulary size the model was built for (embedding rows).
    pub fn vocab_size(&self) -> usize {
        self.store.value(self.embedding.table).shape()[0]
    }

    /// Trainable parameter count; the frozen PAD embedding row is excluded.
    pub fn param_count(&self) -> usize {
        self.store
            .iter()
            .filter(|(_, p)| p.trainable)
            .map(|(id, p)| {
                let mut n = p.value.numel();
                if id == self.embedding.table {
                    n -= self.spec.embed_dim;
                }
                n
            })
            .sum()
    }

    /// Training-mode forward pass: dropout active, mask draws from `rng`.
    pub fn forward_train(
        &self,
        g: &mut Graph<T>,
        bind: &Binding,
        ids: &[u32],
        rng: &mut RngState,
    ) -> Result<Var> {
        self.forward(g, bind, ids, Some(rng))
    }

    /// Inference-mode forward pass: dropout is the identity.
    pub fn forward_infer(&self, g: &mut Graph<T>, bind: &Binding, ids: &[u32]) -> Result<Var> {
        self.forward(g, bind, ids, None)
    }

    fn forward(
        &self,
        g: &mut Graph<T>,
        bind: &Binding,
        ids: &[u32],
        rng: Option<&mut RngState>,
    ) -> Result<Var> {
        let x = self.embedding.forward(g, bind, ids, self.spec.max_len)?;
        let x = match rng {
            Some(rng) => self.dropout.forward(g, x, true, rng)?,
            None => x,
        };
        match &self.topology {
            Topology::TextCnn { convs, dense } => {
                let pooled = convs
                    .iter()
                    .map(|conv| {
                        let h = conv.forward(g, bind, x)?;
                        g.global_max_pool(h)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let feat = if pooled.len() == 1 {
                    pooled[0]
                } else {
                    g.concat_last(&pooled)?
                };
                dense.forward(g, bind, feat)
            }
            Topology::BiGruCnn { gru, conv, dense } => {
                let seq = gru.forward(g, bind, x)?;
                let h = conv.forward(g, bind, seq)?;
                let feat = g.global_max_pool(h)?;
                dense.forward(g, bind, feat)
            }
            Topology::BiGruLstmCnn {
                gru,
                lstm_a,
                lstm_b,
                conv,
                dense,
            } => {
                let seq = gru.forward(g, bind, x)?;
                let a = lstm_a.forward(g, bind, seq)?;
                let b = lstm_b.forward(g, bind, seq)?;
                let merged = g.concat_last(&[a, b])?;
                let h = conv.forward(g, bind, merged)?;
                let feat = g.global_max_pool(h)?;
                dense.forward(g, bind, feat)
            }
        }
    }

    /// Classify a batch: softmax over the logits, argmax with ties broken
    /// toward the lowest label.
    pub fn predict(&self, batch: &EncodedBatch) -> Result<Vec<Prediction>> {
        if batch.max_len() != self.spec.max_len {
            return Err(Error::Config(format!(
                "batch encoded to width {} but model expects {}",
                batch.max_len(),
                self.spec.max_len
            )));
        }
        let c = self.spec.num_classes;
        let mut out = Vec::with_capacity(batch.len());
        // Bounded graph size per chunk.
        const CHUNK: usize = 64;
        let mut start = 0;
        while start < batch.len() {
            let end = (start + CHUNK).min(batch.len());
            let ids = &batch.ids()[start * batch.max_len()..end * batch.max_len()];
            let mut g = Graph::new();
            let bind = Binding::bind(&mut g, &self.store);
            let logits = self.forward_infer(&mut g, &bind, ids)?;
            let data = g.value(logits).data();
            for row in 0..(end - start) {
                let logit_row = &data[row * c..(row + 1) * c];
                out.push(classify_row(logit_row));
            }
            start = end;
        }
        Ok(out)
    }
}

fn classify_row<T: Scalar>(logits: &[T]) -> Prediction {
    let mut maxv = logits[0].into_f64();
    for v in &logits[1..] {
        maxv = maxv.max(v.into_f64());
    }
    let exps: Vec<f64> = logits.iter().map(|v| (v.into_f64() - maxv).exp()).collect();
    let denom: f64 = exps.iter().sum();
    let mut probs = [0.0; NUM_CLASSES];
    for (p, e) in probs.iter_mut().zip(&exps) {
        *p = e / denom;
    }
    let mut label = 0usize;
    for (i, p) in probs.iter().enumerate() {
        if *p > probs[label] {
            label = i;
        }
    }
    Prediction {
        label: label as u8,
        probs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mini_spec(kind: ModelKind) -> ModelSpec {
        ModelSpec {
            max_len: 6,
            embed_dim: 4,
            lstm_units: 3,
            gru_units: 3,
            conv_filters: 2,
            kernel_widths: vec![3],
            ..ModelSpec::new(kind)
        }
    }

    fn mini_model(kind: ModelKind) -> Model<f32> {
        let mut rng = RngState::new(99);
        let table = EmbeddingTable::random(9, 4, true, &mut rng);
        Model::build(mini_spec(kind), table, &mut rng).unwrap()
    }

    #[test]
    fn all_three_kinds_build_and_produce_logits() {
        for kind in [ModelKind::TextCnn, ModelKind::BiGruCnn, ModelKind::BiGruLstmCnn] {
            let model = mini_model(kind);
            let mut g = Graph::new();
            let bind = Binding::bind(&mut g, model.store());
            let ids = vec![1u32; 2 * 6];
            let logits = model.forward_infer(&mut g, &bind, &ids).unwrap();
            assert_eq!(g.value(logits).shape(), &[2, 3], "{kind:?}");
        }
    }

    #[test]
    fn flagship_merged_channel_count() {
        // Two parallel Bi-LSTM blocks at 112 per direction: 2 × 2 × 112.
        let spec = ModelSpec::new(ModelKind::BiGruLstmCnn);
        let mut rng = RngState::new(1);
        let table = EmbeddingTable::<f32>::random(5, 300, true, &mut rng);
        let model = Model::build(spec, table, &mut rng).unwrap();
        let Topology::BiGruLstmCnn { lstm_a, lstm_b, .. } = &model.topology else {
            unreachable!()
        };
        assert_eq!(lstm_a.out_channels() + lstm_b.out_channels(), 448);
    }

    #[test]
    fn textcnn_concat_width() {
        let spec = ModelSpec::new(ModelKind::TextCnn);
        assert_eq!(spec.conv_filters * spec.kernel_widths.len(), 300);
    }

    #[test]
    fn dense_only_param_count() {
        // dense(4 → 3) = 4·3 + 3 = 15
        let mut store = ParamStore::<f32>::new();
        let mut rng = RngState::new(2);
        Dense::new(&mut store, "dense", 4, 3, &mut rng).unwrap();
        let total: usize = store.iter().map(|(_, p)| p.value.numel()).sum();
        assert_eq!(total, 15);
    }

    #[test]
    fn freezing_embeddings_changes_trainable_count() {
        let mut rng = RngState::new(3);
        let vocab = 9;
        let spec = mini_spec(ModelKind::BiGruCnn);
        let frozen = ModelSpec {
            embeddings_trainable: false,
            ..spec.clone()
        };
        let m1: Model<f32> = Model::build(
            spec,
            EmbeddingTable::random(vocab, 4, true, &mut rng),
            &mut rng,
        )
        .unwrap();
        let m2: Model<f32> = Model::build(
            frozen,
            EmbeddingTable::random(vocab, 4, true, &mut rng),
            &mut rng,
        )
        .unwrap();
        assert_eq!(m1.param_count() - m2.param_count(), vocab * 4 - 4);
    }

    #[test]
    fn uniform_logits_tie_break_to_lowest_label() {
        let p = classify_row(&[0.0f64, 0.0, 0.0]);
        assert_eq!(p.label, 0);
        for v in p.probs {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn probabilities_sum_to_one() {
        let p = classify_row(&[2.5f64, -1.0, 0.3]);
        let sum: f64 = p.probs.iter().sum();
        assert!((sum - 1.0).abs() < 1e-6);
    }

    #[test]
    fn batch_forward_is_permutation_equivariant() {
        let model = mini_model(ModelKind::BiGruLstmCnn);
        let rows: Vec<Vec<u32>> = vec![
            vec![1, 2, 3, 0, 0, 0],
            vec![4, 5, 6, 7, 8, 0],
            vec![2, 2, 2, 2, 2, 2],
        ];
        let flat: Vec<u32> = rows.iter().flatten().copied().collect();
        let swapped: Vec<u32> = [2, 0, 1]
            .iter()
            .flat_map(|&i: &usize| rows[i].clone())
            .collect();

        let mut g1 = Graph::new();
        let bind1 = Binding::bind(&mut g1, model.store());
        let l1 = model.forward_infer(&mut g1, &bind1, &flat).unwrap();
        let mut g2 = Graph::new();
        let bind2 = Binding::bind(&mut g2, model.store());
        let l2 = model.forward_infer(&mut g2, &bind2, &swapped).unwrap();

        for (orig_row, new_row) in [(2usize, 0usize), (0, 1), (1, 2)] {
            for c in 0..3 {
                assert_eq!(g1.value(l1).at(orig_row, c), g2.value(l2).at(new_row, c));
            }
        }
    }

    #[test]
    fn spec_round_trips_through_json() {
        let spec = ModelSpec::new(ModelKind::BiGruLstmCnn);
        let json = serde_json::to_string(&spec).unwrap();
        assert!(json.contains("bigru-lstm-cnn"));
        let back: ModelSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
    }
}
