//! Base classifiers: random forest, gradient-boosted trees, CNN and LSTM.
//!
//! Every trained model maps a feature vector to a class-probability vector.

pub mod forest;
pub mod gbt;
pub mod grid;
pub mod neural;
pub mod tree;

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureVector, FEATURE_WIDTH, LAYOUT_VERSION, MANUAL_RANGE, SEMANTIC_RANGE};

pub use forest::{train_random_forest, ForestModel, ForestParams};
pub use gbt::{train_gbt, BoostedModel, GbtParams};
pub use grid::{grid_search, GridCell, GridResult};
pub use neural::{train_neural, NeuralKind, NeuralModel, NeuralParams};
pub use tree::{DecisionTree, TreeParams};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Matrix> {
        if data.len() != rows * cols {
            return Err(Error::Shape {
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Matrix> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::Shape {
                    expected: cols,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Matrix::new(rows.len(), cols, data)
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    /// Copy of a contiguous column range.
    pub fn columns(&self, range: Range<usize>) -> Matrix {
        let mut data = Vec::with_capacity(self.rows * range.len());
        for i in 0..self.rows {
            data.extend_from_slice(&self.row(i)[range.clone()]);
        }
        Matrix {
            rows: self.rows,
            cols: range.len(),
            data,
        }
    }

    /// Copy of the given rows, in order.
    pub fn select_rows(&self, rows: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(rows.len() * self.cols);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        Matrix {
            rows: rows.len(),
            cols: self.cols,
            data,
        }
    }
}

pub(crate) fn validate_training_set(x: &Matrix, y: &[usize], n_classes: usize) -> Result<()> {
    if x.rows == 0 {
        return Err(Error::argument("training set is empty"));
    }
    if y.len() != x.rows {
        return Err(Error::Shape {
            expected: x.rows,
            found: y.len(),
        });
    }
    if let Some(&bad) = y.iter().find(|&&c| c >= n_classes) {
        return Err(Error::Label(format!("class id {bad} outside 0..{n_classes}")));
    }
    if let Some(i) = x.data.iter().position(|v| !v.is_finite()) {
        return Err(Error::Training(format!(
            "non-finite input at row {}, column {}",
            i / x.cols.max(1),
            i % x.cols.max(1)
        )));
    }
    Ok(())
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn softmax_in_place(s: &mut [f64]) {
    let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in s.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in s.iter_mut() {
        *v /= total;
    }
}

/// Which block of the feature vector a tree model sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FeatureSet {
    Manual,
    Semantic,
    All,
}

impl FeatureSet {
    pub fn range(self) -> Range<usize> {
        match self {
            FeatureSet::Manual => MANUAL_RANGE,
            FeatureSet::Semantic => SEMANTIC_RANGE,
            FeatureSet::All => 0..FEATURE_WIDTH,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureSet::Manual => "manual",
            FeatureSet::Semantic => "semantic",
            FeatureSet::All => "all",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    Gbt,
    Forest,
    Cnn,
    Recurrent,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Gbt, ModelKind::Forest, ModelKind::Cnn, ModelKind::Recurrent];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Gbt => "gbt",
            ModelKind::Forest => "rf",
            ModelKind::Cnn => "cnn",
            ModelKind::Recurrent => "recurrent",
        }
    }

    pub fn from_name(s: &str) -> Option<ModelKind> {
        ModelKind::ALL.into_iter().find(|k| k.name() == s)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

// Boxing the neural variant would buy nothing: a model is built once per task.
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Model {
    Forest(ForestModel),
    Boosted(BoostedModel),
    Neural(NeuralModel),
}

/// A fitted model together with the feature layout it was trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub kind: ModelKind,
    pub feature_set: FeatureSet,
    pub layout_version: u32,
    pub n_classes: usize,
    /// Global feature indices zeroed before training and prediction.
    #[serde(default)]
    pub masked: Vec<usize>,
    pub model: Model,
}

fn zero_columns(x: &Matrix, masked: &[usize]) -> Matrix {
    let mut out = x.clone();
    for i in 0..out.rows {
        for &c in masked {
            out.data[i * out.cols + c] = 0.0;
        }
    }
    out
}

impl TrainedModel {
    /// Trains `kind` on the columns of `feature_set`. Neural models always read
    /// the full vector (semantic grid plus side path) and require `All`.
    pub fn train(
        kind: ModelKind,
        feature_set: FeatureSet,
        x: &Matrix,
        y: &[usize],
        n_classes: usize,
        params: &ModelParams,
        seed: u64,
    ) -> Result<TrainedModel> {
        Self::train_masked(kind, feature_set, x, y, n_classes, params, seed, &[])
    }

    /// As [`TrainedModel::train`], with the `masked` columns held at zero.
    #[allow(clippy::too_many_arguments)]
    pub fn train_masked(
        kind: ModelKind,
        feature_set: FeatureSet,
        x: &Matrix,
        y: &[usize],
        n_classes: usize,
        params: &ModelParams,
        seed: u64,
        masked: &[usize],
    ) -> Result<TrainedModel> {
        if x.cols != FEATURE_WIDTH {
            return Err(Error::Shape {
                expected: FEATURE_WIDTH,
                found: x.cols,
            });
        }
        if let Some(&c) = masked.iter().find(|&&c| c >= FEATURE_WIDTH) {
            return Err(Error::argument(format!(
                "masked column {c} is outside the feature vector"
            )));
        }
        let masked_x;
        let x = if masked.is_empty() {
            x
        } else {
            masked_x = zero_columns(x, masked);
            &masked_x
        };
        let model = match kind {
            ModelKind::Gbt | ModelKind::Forest => {
                let sub = if feature_set == FeatureSet::All {
                    x.clone()
                } else {
                    x.columns(feature_set.range())
                };
                if kind == ModelKind::Gbt {
                    Model::Boosted(train_gbt(&sub, y, n_classes, &params.gbt, seed)?)
                } else {
                    Model::Forest(train_random_forest(&sub, y, n_classes, &params.forest, seed)?)
                }
            }
            ModelKind::Cnn | ModelKind::Recurrent => {
                if feature_set != FeatureSet::All {
                    return Err(Error::config("neural models consume the full feature vector"));
                }
                let nk = if kind == ModelKind::Cnn {
                    NeuralKind::Cnn
                } else {
                    NeuralKind::Recurrent
                };
                Model::Neural(train_neural(nk, x, y, n_classes, &params.neural, seed)?)
            }
        };
        Ok(TrainedModel {
            kind,
            feature_set,
            layout_version: LAYOUT_VERSION,
            n_classes,
            masked: masked.to_vec(),
            model,
        })
    }

    pub fn predict_proba(&self, x: &FeatureVector) -> Result<Vec<f64>> {
        if x.layout_version != self.layout_version {
            return Err(Error::config(format!(
                "feature layout v{} does not match model layout v{}",
                x.layout_version, self.layout_version
            )));
        }
        self.predict_row(&x.values)
    }

    /// Prediction from a raw full-width row (layout assumed current).
    pub fn predict_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != FEATURE_WIDTH {
            return Err(Error::Shape {
                expected: FEATURE_WIDTH,
                found: row.len(),
            });
        }
        let zeroed;
        let row = if self.masked.is_empty() {
            row
        } else {
            let mut r = row.to_vec();
            for &c in &self.masked {
                r[c] = 0.0;
            }
            zeroed = r;
            &zeroed
        };
        let sub = &row[self.feature_set.range()];
        Ok(match &self.model {
            Model::Forest(m) => m.predict_proba(sub),
            Model::Boosted(m) => m.predict_proba(sub),
            Model::Neural(m) => m.predict_proba(row),
        })
    }

    /// Split usage in global feature-vector indices; `None` for neural models.
    pub fn feature_usage(&self) -> Option<FeatureUsage> {
        let offset = self.feature_set.range().start;
        let mut usage = match &self.model {
            Model::Forest(m) => feature_usage(m.trees.iter().flat_map(|t| t.split_features())),
            Model::Boosted(m) => feature_usage(m.rounds.iter().flatten().flat_map(|t| t.split_features())),
            Model::Neural(_) => return None,
        };
        usage.tallies = usage.tallies.into_iter().map(|(f, n)| (f + offset, n)).collect();
        Some(usage)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub forest: ForestParams,
    pub gbt: GbtParams,
    pub neural: NeuralParams,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureUsage {
    /// Number of distinct features with at least one split.
    pub used: usize,
    /// Feature index to split count.
    pub tallies: BTreeMap<usize, usize>,
}

/// Tallies split features from any sequence of split nodes.
pub fn feature_usage(splits: impl IntoIterator<Item = usize>) -> FeatureUsage {
    let mut tallies = BTreeMap::new();
    for f in splits {
        *tallies.entry(f).or_insert(0) += 1;
    }
    FeatureUsage {
        used: tallies.len(),
        tallies,
    }
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::tree::Node;
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matrix_shape_is_checked() {
        assert!(matches!(
            Matrix::new(2, 2, vec![0.0; 3]),
            Err(Error::Shape { expected: 4, found: 3 })
        ));
        let m = Matrix::new(2, 3, (0..6).map(f64::from).collect()).unwrap();
        assert_eq!(m.row(1), &[3.0, 4.0, 5.0]);
        assert_eq!(m.columns(1..3).data, vec![1.0, 2.0, 4.0, 5.0]);
        assert_eq!(m.select_rows(&[1, 1]).data, vec![3.0, 4.0, 5.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
        assert_eq!(argmax(&[1.0]), 0);
    }

    #[test]
    fn validation_errors() {
        let x = Matrix::new(2, 1, vec![0.0, 1.0]).unwrap();
        assert!(matches!(validate_training_set(&x, &[0], 2), Err(Error::Shape { .. })));
        assert!(matches!(validate_training_set(&x, &[0, 2], 2), Err(Error::Label(_))));
        let bad = Matrix::new(1, 1, vec![f64::NAN]).unwrap();
        assert!(matches!(validate_training_set(&bad, &[0], 2), Err(Error::Training(_))));
        let empty = Matrix::new(0, 1, vec![]).unwrap();
        assert!(matches!(validate_training_set(&empty, &[], 2), Err(Error::Argument(_))));
    }

    fn random_set(seed: u64, n: usize, k: usize) -> (Matrix, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..n * FEATURE_WIDTH).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = Matrix::new(n, FEATURE_WIDTH, data).unwrap();
        let y = (0..n)
            .map(|i| {
                if x.get(i, 3) + x.get(i, 200) > 0.0 {
                    1
                } else {
                    rng.random_range(0..k)
                }
            })
            .collect();
        (x, y)
    }

    #[test]
    fn depth_zero_model_uses_no_features() {
        let (x, y) = random_set(1, 30, 3);
        let params = ModelParams {
            gbt: GbtParams {
                rounds: 2,
                max_depth: 0,
                ..Default::default()
            },
            ..Default::default()
        };
        let m = TrainedModel::train(ModelKind::Gbt, FeatureSet::All, &x, &y, 3, &params, 0).unwrap();
        assert_eq!(m.feature_usage().unwrap().used, 0);
    }

    #[test]
    fn single_split_on_feature_seven() {
        let tree = DecisionTree {
            nodes: vec![
                Node::Split {
                    feature: 7,
                    threshold: 0.5,
                    left: 1,
                    right: 2,
                },
                Node::Leaf {
                    probabilities: vec![1.0, 0.0],
                },
                Node::Leaf {
                    probabilities: vec![0.0, 1.0],
                },
            ],
            n_classes: 2,
            max_depth: 1,
            min_samples_leaf: 1,
        };
        let u = feature_usage(tree.split_features());
        assert_eq!(u.used, 1);
        assert_eq!(u.tallies, BTreeMap::from([(7, 1)]));
    }

    #[test]
    fn usage_matches_independent_walk_with_offset() {
        let (x, y) = random_set(2, 60, 3);
        let params = ModelParams {
            forest: ForestParams {
                trees: 5,
                max_depth: 4,
                ..Default::default()
            },
            ..Default::default()
        };
        let m = TrainedModel::train(ModelKind::Forest, FeatureSet::Semantic, &x, &y, 3, &params, 3).unwrap();
        let Model::Forest(f) = &m.model else { panic!() };
        // recursive walk from each root, independent of the node-array scan
        fn walk(nodes: &[Node], i: usize, out: &mut BTreeMap<usize, usize>) {
            if let Node::Split {
                feature, left, right, ..
            } = &nodes[i]
            {
                *out.entry(*feature + SEMANTIC_RANGE.start).or_insert(0) += 1;
                walk(nodes, *left, out);
                walk(nodes, *right, out);
            }
        }
        let mut oracle = BTreeMap::new();
        for t in &f.trees {
            walk(&t.nodes, 0, &mut oracle);
        }
        let u = m.feature_usage().unwrap();
        assert_eq!(u.tallies, oracle);
        assert_eq!(u.used, oracle.len());
        assert!(u.tallies.keys().all(|k| SEMANTIC_RANGE.contains(k)));
    }

    #[test]
    fn layout_mismatch_is_config_error() {
        let (x, y) = random_set(3, 20, 2);
        let params = ModelParams {
            forest: ForestParams {
                trees: 2,
                ..Default::default()
            },
            ..Default::default()
        };
        let m = TrainedModel::train(ModelKind::Forest, FeatureSet::All, &x, &y, 2, &params, 0).unwrap();
        let v = FeatureVector {
            values: x.row(0).to_vec(),
            layout_version: LAYOUT_VERSION + 1,
        };
        assert!(matches!(m.predict_proba(&v), Err(Error::Config(_))));
        let ok = FeatureVector {
            values: x.row(0).to_vec(),
            layout_version: LAYOUT_VERSION,
        };
        let p = m.predict_proba(&ok).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn all_tree_outputs_are_distributions() {
        let (x, y) = random_set(4, 50, 4);
        let params = ModelParams {
            forest: ForestParams {
                trees: 4,
                ..Default::default()
            },
            gbt: GbtParams {
                rounds: 3,
                ..Default::default()
            },
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for kind in [ModelKind::Gbt, ModelKind::Forest] {
            for fs in [FeatureSet::Manual, FeatureSet::Semantic, FeatureSet::All] {
                let m = TrainedModel::train(kind, fs, &x, &y, 4, &params, 1).unwrap();
                for _ in 0..20 {
                    let row: Vec<f64> = (0..FEATURE_WIDTH).map(|_| rng.random_range(-2.0..2.0)).collect();
                    let p = m.predict_row(&row).unwrap();
                    assert!(p.iter().all(|&v| v >= 0.0));
                    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn masked_columns_are_ignored() {
        let (mut x, _) = random_set(5, 80, 2);
        // label is a copy of column 3
        let y: Vec<usize> = (0..x.rows).map(|i| usize::from(x.get(i, 3) > 0.0)).collect();
        for i in 0..x.rows {
            x.data[i * x.cols + 3] = if y[i] == 1 { 1.0 } else { -1.0 };
        }
        let params = ModelParams {
            gbt: GbtParams {
                rounds: 3,
                ..Default::default()
            },
            ..Default::default()
        };
        let m = TrainedModel::train_masked(ModelKind::Gbt, FeatureSet::All, &x, &y, 2, &params, 1, &[3]).unwrap();
        assert!(m.feature_usage().unwrap().tallies.keys().all(|&f| f != 3));
        let mut row = x.row(0).to_vec();
        let before = m.predict_row(&row).unwrap();
        row[3] = 1e6;
        assert_eq!(m.predict_row(&row).unwrap(), before);
        assert!(
            TrainedModel::train_masked(ModelKind::Gbt, FeatureSet::All, &x, &y, 2, &params, 1, &[FEATURE_WIDTH])
                .is_err()
        );
    }
}
