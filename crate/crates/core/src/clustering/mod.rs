//! Phrase clustering (k-means over embeddings) and resume topic models (LDA).

pub mod kmeans;
pub mod lda;

pub use kmeans::{kmeans_fit, KMeansConfig, KMeansModel};
pub use lda::{lda_fit, LdaConfig, LdaModel};
