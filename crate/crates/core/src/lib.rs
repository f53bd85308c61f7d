//! Resume to job matching.
//!
//! Resumes are parsed into structured records, turned into fixed-layout
//! feature vectors (manual, cluster and embedding features computed from the
//! job history *before* the current job), and used to train tree-based and
//! neural classifiers for four targets of the current job: degree, salary
//! band, company size band and position. Classifier outputs are combined by
//! majority or probability-sum voting and evaluated by precision and top-N
//! recall against a most-frequent-label baseline.

pub mod clustering;
pub mod corpus;
pub mod embeddings;
pub mod ensemble;
pub mod error;
pub mod estimators;
pub mod evaluation;
pub mod features;
pub mod pipeline;
pub mod synth;

pub use corpus::{build_corpus, parse_resume, split, Corpus, Resume, TargetLabels, Task, WorkExperience, YearMonth};
pub use embeddings::{train_skipgram, EmbeddingTable, PhraseSequence, SkipGramConfig};
pub use error::{Error, Result};
pub use estimators::{FeatureSet, Matrix, ModelKind, TrainedModel};
pub use evaluation::{EvaluationReport, Method};
pub use features::{featurize, FeatureVector, FEATURE_WIDTH};
pub use pipeline::{Pipeline, RunConfig};
