//! Differentiable layers: embedding lookup, spatial dropout, 1-D
//! convolution, pooling (via [`crate::graph::Graph::global_max_pool`]),
//! LSTM/GRU cells with a bidirectional wrapper, and the dense head.

pub mod conv;
pub mod dense;
pub mod dropout;
pub mod embedding;
pub mod init;
pub mod recurrent;

pub use conv::Conv1d;
pub use dense::Dense;
pub use dropout::SpatialDropout1d;
pub use embedding::{Embedding, EmbeddingTable, PAD_ROW};
pub use recurrent::{Bidirectional, GateParams, GruCell, LstmCell, RnnCell};
