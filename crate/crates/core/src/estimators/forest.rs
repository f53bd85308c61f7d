//! Random forest: bootstrap-sampled Gini trees with per-node feature subsets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{DecisionTree, TreeParams};
use super::{validate_training_set, Matrix};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub trees: usize,
    pub max_depth: usize,
    pub feature_fraction: Option<f64>,
    pub min_samples_leaf: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            trees: 100,
            max_depth: 12,
            feature_fraction: None,
            min_samples_leaf: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<DecisionTree>,
    pub tree_seeds: Vec<u64>,
    pub n_classes: usize,
    pub params: ForestParams,
}

pub(crate) fn derive_seed(seed: u64, stream: u64) -> u64 {
    seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

pub fn train_random_forest(
    x: &Matrix,
    y: &[usize],
    n_classes: usize,
    params: &ForestParams,
    seed: u64,
) -> Result<ForestModel> {
    validate_training_set(x, y, n_classes)?;
    if y.iter().all(|&c| c == y[0]) {
        log::warn!("random forest: single-class training labels, model is a constant predictor");
    }
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_samples_leaf: params.min_samples_leaf,
        feature_fraction: params.feature_fraction,
    };
    let tree_seeds: Vec<u64> = (0..params.trees as u64).map(|t| derive_seed(seed, t)).collect();
    // Each tree depends only on its own seed, so parallel training is reproducible.
    let trees = tree_seeds
        .par_iter()
        .map(|&s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let bootstrap: Vec<usize> = (0..x.rows).map(|_| rng.random_range(0..x.rows)).collect();
            DecisionTree::fit(x, y, n_classes, &bootstrap, &tree_params, &mut rng)
        })
        .collect();
    Ok(ForestModel {
        trees,
        tree_seeds,
        n_classes,
        params: *params,
    })
}

impl ForestModel {
    /// Mean of the per-tree leaf distributions.
    pub fn predict_proba(&self, row: &[f64]) -> Vec<f64> {
        let mut p = vec![0.0; self.n_classes];
        for t in &self.trees {
            for (acc, v) in p.iter_mut().zip(t.predict_proba(row)) {
                *acc += v;
            }
        }
        p.iter_mut().for_each(|v| *v /= self.trees.len() as f64);
        p
    }
}
