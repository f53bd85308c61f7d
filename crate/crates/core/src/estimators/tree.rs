//! CART classification tree with Gini impurity.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Fraction of features examined per node; `None` means `sqrt(d)` features.
    pub feature_fraction: Option<f64>,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: 12,
            min_samples_leaf: 1,
            feature_fraction: None,
        }
    }
}

impl TreeParams {
    pub fn features_per_node(&self, n_features: usize) -> usize {
        let k = match self.feature_fraction {
            Some(f) => (f * n_features as f64).round() as usize,
            None => (n_features as f64).sqrt().round() as usize,
        };
        k.clamp(1, n_features.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        probabilities: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
    pub n_classes: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
    /// `sum_c n_left,c^2 / n_left + sum_c n_right,c^2 / n_right`; larger is purer.
    pub purity: f64,
}

fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m >= b {
        a
    } else {
        m
    }
}

/// Best Gini split of `samples` over `features` (scanned in the given order,
/// thresholds ascending). Minimizing the weighted child Gini is the same as
/// maximizing `purity`; the first maximum wins. Returns `None` when no split
/// leaves at least `min_leaf` samples on both sides.
pub fn best_split(
    x: &Matrix,
    y: &[usize],
    samples: &[usize],
    features: &[usize],
    n_classes: usize,
    min_leaf: usize,
) -> Option<SplitChoice> {
    let n = samples.len();
    let mut total = vec![0u64; n_classes];
    for &s in samples {
        total[y[s]] += 1;
    }
    let mut order: Vec<usize> = samples.to_vec();
    let mut left = vec![0u64; n_classes];
    let mut best: Option<SplitChoice> = None;
    for &f in features {
        order.sort_by(|&a, &b| x.get(a, f).total_cmp(&x.get(b, f)));
        left.iter_mut().for_each(|c| *c = 0);
        let total_sq: u64 = total.iter().map(|c| c * c).sum();
        let mut left_sq = 0u64;
        let mut right_sq = total_sq;
        for i in 0..n - 1 {
            let c = y[order[i]];
            // moving one sample of class c from right to left
            let r = total[c] - left[c];
            right_sq = right_sq - r * r + (r - 1) * (r - 1);
            left_sq = left_sq - left[c] * left[c] + (left[c] + 1) * (left[c] + 1);
            left[c] += 1;
            let (v, next) = (x.get(order[i], f), x.get(order[i + 1], f));
            let n_left = i + 1;
            if v == next || n_left < min_leaf || n - n_left < min_leaf {
                continue;
            }
            let purity = left_sq as f64 / n_left as f64 + right_sq as f64 / (n - n_left) as f64;
            if best.is_none_or(|b| purity > b.purity) {
                best = Some(SplitChoice {
                    feature: f,
                    threshold: midpoint(v, next),
                    purity,
                });
            }
        }
    }
    best
}

struct Builder<'a, R: Rng> {
    x: &'a Matrix,
    y: &'a [usize],
    n_classes: usize,
    params: &'a TreeParams,
    rng: &'a mut R,
    nodes: Vec<Node>,
}

impl<R: Rng> Builder<'_, R> {
    fn leaf(&self, samples: &[usize]) -> Node {
        let mut p = vec![0.0; self.n_classes];
        for &s in samples {
            p[self.y[s]] += 1.0;
        }
        p.iter_mut().for_each(|v| *v /= samples.len() as f64);
        Node::Leaf { probabilities: p }
    }

    fn grow(&mut self, samples: &[usize], depth: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf {
            probabilities: Vec::new(),
        });
        let first = self.y[samples[0]];
        let pure = samples.iter().all(|&s| self.y[s] == first);
        let min_leaf = self.params.min_samples_leaf.max(1);
        if pure || depth >= self.params.max_depth || samples.len() < 2 * min_leaf {
            self.nodes[id] = self.leaf(samples);
            return id;
        }
        let d = self.x.cols;
        let k = self.params.features_per_node(d);
        let mut features: Vec<usize> = if k == d {
            (0..d).collect()
        } else {
            sample(self.rng, d, k).into_vec()
        };
        features.sort_unstable();
        let Some(choice) = best_split(self.x, self.y, samples, &features, self.n_classes, min_leaf) else {
            self.nodes[id] = self.leaf(samples);
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = samples
            .iter()
            .partition(|&&s| self.x.get(s, choice.feature) <= choice.threshold);
        let left = self.grow(&l, depth + 1);
        let right = self.grow(&r, depth + 1);
        self.nodes[id] = Node::Split {
            feature: choice.feature,
            threshold: choice.threshold,
            left,
            right,
        };
        id
    }
}

impl DecisionTree {
    /// Fits on `samples` (row indices, repeats allowed for bootstrap draws).
    pub fn fit<R: Rng>(
        x: &Matrix,
        y: &[usize],
        n_classes: usize,
        samples: &[usize],
        params: &TreeParams,
        rng: &mut R,
    ) -> DecisionTree {
        assert!(!samples.is_empty(), "tree needs at least one sample");
        let mut b = Builder {
            x,
            y,
            n_classes,
            params,
            rng,
            nodes: Vec::new(),
        };
        b.grow(samples, 0);
        DecisionTree {
            nodes: b.nodes,
            n_classes,
            max_depth: params.max_depth,
            min_samples_leaf: params.min_samples_leaf,
        }
    }

    pub fn predict_proba(&self, row: &[f64]) -> &[f64] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { probabilities } => return probabilities,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    /// Longest root-to-leaf path in splits.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn split_features(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Split { feature, .. } => Some(*feature),
            Node::Leaf { .. } => None,
        })
    }
}
