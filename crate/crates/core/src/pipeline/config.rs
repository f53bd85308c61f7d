//! Run configuration, read from TOML. Every field has a default.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::clustering::{KMeansConfig, LdaConfig};
use crate::corpus::YearMonth;
use crate::embeddings::SkipGramConfig;
use crate::error::{Error, Result};
use crate::estimators::{ForestParams, GbtParams, ModelParams, NeuralParams};
use crate::evaluation::Method;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; per-stage seeds are derived from it.
    pub seed: u64,
    /// Worker threads (0 = rayon default). Skip-gram training is only
    /// reproducible with 1 thread; every other stage is reproducible at any count.
    pub threads: usize,
    pub paths: PathsConfig,
    pub corpus: CorpusConfig,
    pub embedding: EmbeddingConfig,
    pub clustering: ClusteringConfig,
    pub models: ModelsConfig,
    pub grid: GridConfig,
    pub ensemble: EnsembleConfig,
    pub evaluation: EvaluationConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            threads: 1,
            paths: PathsConfig::default(),
            corpus: CorpusConfig::default(),
            embedding: EmbeddingConfig::default(),
            clustering: ClusteringConfig::default(),
            models: ModelsConfig::default(),
            grid: GridConfig::default(),
            ensemble: EnsembleConfig::default(),
            evaluation: EvaluationConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Newline-delimited resume records.
    pub input: PathBuf,
    pub artifacts: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            input: PathBuf::from("data/synthetic_2000.jsonl"),
            artifacts: PathBuf::from("artifacts"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub top_k: usize,
    pub test_fraction: f64,
    /// `YYYY-M` month that open-ended jobs end at; the latest closed date in the input when unset.
    pub reference_date: Option<String>,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            top_k: 32,
            test_fraction: 0.2,
            reference_date: None,
        }
    }
}

impl CorpusConfig {
    pub fn reference(&self) -> Result<Option<YearMonth>> {
        match &self.reference_date {
            None => Ok(None),
            Some(s) => YearMonth::parse(s)
                .map(Some)
                .ok_or_else(|| Error::config(format!("corpus.reference_date {s:?} is not a year-month"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub min_count: u64,
    pub learning_rate: f64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        let d = SkipGramConfig::default();
        Self {
            dim: d.dim,
            window: d.window,
            negatives: d.negatives,
            epochs: d.epochs,
            min_count: d.min_count,
            learning_rate: d.learning_rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusteringConfig {
    /// Coarse and fine k-means cluster counts.
    pub kmeans_k: [usize; 2],
    pub kmeans_max_iter: usize,
    pub kmeans_n_init: usize,
    /// Small and large LDA topic counts.
    pub lda_topics: [usize; 2],
    pub lda_iterations: usize,
    /// Document-topic prior; `50 / topics` when unset.
    pub lda_alpha: Option<f64>,
    pub lda_beta: f64,
    pub lda_fold_in_iterations: usize,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        let km = KMeansConfig::new(64, 0);
        let lda = LdaConfig::new(32, 0);
        Self {
            kmeans_k: [64, 128],
            kmeans_max_iter: km.max_iter,
            kmeans_n_init: km.n_init,
            lda_topics: [32, 64],
            lda_iterations: 200,
            lda_alpha: None,
            lda_beta: lda.beta,
            lda_fold_in_iterations: lda.fold_in_iterations,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelsConfig {
    pub forest: ForestParams,
    pub gbt: GbtParams,
    pub neural: NeuralParams,
}

impl ModelsConfig {
    pub fn params(&self) -> ModelParams {
        ModelParams {
            forest: self.forest,
            gbt: self.gbt,
            neural: self.neural,
        }
    }
}

/// Optional hyperparameter search on a validation slice of the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub enabled: bool,
    pub validation_fraction: f64,
    pub forest_trees: Vec<usize>,
    pub forest_depth: Vec<usize>,
    pub gbt_rounds: Vec<usize>,
    pub gbt_depth: Vec<usize>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            validation_fraction: 0.2,
            forest_trees: vec![50, 100],
            forest_depth: vec![8, 12],
            gbt_rounds: vec![20, 40],
            gbt_depth: vec![3, 5],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    /// Method keys, e.g. `gbt-all`, `rf-all`, `cnn-all`, `lstm-all`.
    pub members: Vec<String>,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            members: [Method::GbtAll, Method::RfAll, Method::CnnAll, Method::RecurrentAll]
                .iter()
                .map(|m| m.key())
                .collect(),
        }
    }
}

impl EnsembleConfig {
    pub fn methods(&self) -> Result<Vec<Method>> {
        self.members
            .iter()
            .map(|k| match Method::from_key(k) {
                Some(m) if Method::BASE.contains(&m) => Ok(m),
                _ => Err(Error::config(format!(
                    "unknown ensemble member {k:?}; expected one of {}",
                    Method::BASE.iter().map(|m| m.key()).collect::<Vec<_>>().join(", ")
                ))),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub n_values: Vec<usize>,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            n_values: vec![2, 3, 4],
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        RunConfig::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("run config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.corpus.top_k == 0 {
            return Err(Error::config("corpus.top_k must be >= 1"));
        }
        if !(self.corpus.test_fraction > 0.0 && self.corpus.test_fraction < 1.0) {
            return Err(Error::config("corpus.test_fraction must lie in (0, 1)"));
        }
        self.corpus.reference()?;
        if self.embedding.dim == 0 {
            return Err(Error::config("embedding.dim must be >= 1"));
        }
        if self.clustering.kmeans_k.contains(&0) || self.clustering.lda_topics.iter().any(|&t| t < 2) {
            return Err(Error::config("k-means needs k >= 1 and LDA needs >= 2 topics"));
        }
        if self.evaluation.n_values.is_empty() || self.evaluation.n_values.contains(&0) {
            return Err(Error::config("evaluation.n_values must be non-empty and >= 1"));
        }
        if self.ensemble.methods()?.is_empty() {
            return Err(Error::config("ensemble.members is empty"));
        }
        if self.grid.enabled && !(self.grid.validation_fraction > 0.0 && self.grid.validation_fraction < 1.0) {
            return Err(Error::config("grid.validation_fraction must lie in (0, 1)"));
        }
        Ok(())
    }

    pub fn skipgram(&self) -> SkipGramConfig {
        SkipGramConfig {
            dim: self.embedding.dim,
            window: self.embedding.window,
            negatives: self.embedding.negatives,
            epochs: self.embedding.epochs,
            min_count: self.embedding.min_count,
            learning_rate: self.embedding.learning_rate,
            seed: self.seed,
            threads: self.threads.max(1),
        }
    }

    pub fn kmeans(&self, which: usize, k: usize) -> KMeansConfig {
        KMeansConfig {
            k,
            seed: self.seed.wrapping_add(100 + which as u64),
            max_iter: self.clustering.kmeans_max_iter,
            tol: KMeansConfig::new(k, 0).tol,
            n_init: self.clustering.kmeans_n_init,
        }
    }

    pub fn lda(&self, which: usize) -> LdaConfig {
        let topics = self.clustering.lda_topics[which];
        LdaConfig {
            topics,
            alpha: self.clustering.lda_alpha,
            beta: self.clustering.lda_beta,
            iterations: self.clustering.lda_iterations,
            seed: self.seed.wrapping_add(200 + which as u64),
            fold_in_iterations: self.clustering.lda_fold_in_iterations,
        }
    }
}
