pub mod checkpoint;
pub mod cli;
pub mod embedding_io;
pub mod error;
pub mod eval;
pub mod methods;
pub mod nn;

pub use embedding_io::{AlignedEmbeddingSet, EmbeddingTable, TableFormat};
pub use eval::{EvalEntry, SimilarityDataset};
pub use error::{Error, Result};
pub use nn::{Activation, DenseNet, LossKind, TrainConfig};
pub use methods::{MetaConfig, MetaMethod, MetaModel, MethodSpec};
