//! Multiclass gradient-boosted regression trees (second-order, exact greedy).
//!
//! Each round fits one regression tree per class to the gradient
//! `g = p - y` and hessian `h = p (1 - p)` of the softmax cross-entropy.
//! Split gain is
//! `1/2 [G_L^2/(H_L+lambda) + G_R^2/(H_R+lambda) - G^2/(H+lambda)] - gamma`
//! and leaf weights are `-G / (H + lambda)`, scaled by the learning rate at
//! prediction time. Trees grow level by level over feature columns presorted
//! once per training run.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{softmax_in_place, validate_training_set, Matrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbtParams {
    pub rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub lambda: f64,
    pub min_child_weight: f64,
    /// Minimum gain for a split.
    pub gamma: f64,
    /// Row fraction sampled per round.
    pub subsample: f64,
    /// Feature fraction sampled per tree.
    pub colsample: f64,
}

impl Default for GbtParams {
    fn default() -> Self {
        Self {
            rounds: 60,
            learning_rate: 0.1,
            max_depth: 3,
            lambda: 1.0,
            min_child_weight: 1.0,
            gamma: 0.0,
            subsample: 1.0,
            colsample: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RegressionNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        weight: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<RegressionNode>,
}

impl RegressionTree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                RegressionNode::Leaf { weight } => return *weight,
                RegressionNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn split_features(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            RegressionNode::Split { feature, .. } => Some(*feature),
            RegressionNode::Leaf { .. } => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedModel {
    pub n_classes: usize,
    pub params: GbtParams,
    pub seed: u64,
    /// `rounds[r][k]` is the tree for class `k` in round `r`.
    pub rounds: Vec<Vec<RegressionTree>>,
    /// Mean training log-loss before the first round and after each round.
    pub train_loss: Vec<f64>,
}

impl BoostedModel {
    pub fn raw_scores(&self, row: &[f64]) -> Vec<f64> {
        let mut s = vec![0.0; self.n_classes];
        for round in &self.rounds {
            for (k, tree) in round.iter().enumerate() {
                s[k] += self.params.learning_rate * tree.predict(row);
            }
        }
        s
    }

    pub fn predict_proba(&self, row: &[f64]) -> Vec<f64> {
        let mut s = self.raw_scores(row);
        softmax_in_place(&mut s);
        s
    }
}

/// Column indices sorted by value, computed once and shared by every tree.
struct Presorted {
    columns: Vec<Vec<u32>>,
}

impl Presorted {
    fn new(x: &Matrix) -> Self {
        let columns = (0..x.cols)
            .into_par_iter()
            .map(|f| {
                let mut idx: Vec<u32> = (0..x.rows as u32).collect();
                idx.sort_by(|&a, &b| x.get(a as usize, f).total_cmp(&x.get(b as usize, f)));
                idx
            })
            .collect();
        Self { columns }
    }
}

const INACTIVE: u32 = u32::MAX;

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

struct TreeGrower<'a> {
    x: &'a Matrix,
    presorted: &'a Presorted,
    params: &'a GbtParams,
}

impl TreeGrower<'_> {
    fn score(&self, g: f64, h: f64) -> f64 {
        g * g / (h + self.params.lambda)
    }

    /// `rows_in` marks the rows used by this tree; `features` lists the columns it may split on.
    fn grow(&self, grad: &[f64], hess: &[f64], rows_in: &[bool], features: &[usize]) -> RegressionTree {
        let n = self.x.rows;
        let lambda = self.params.lambda;
        let mut nodes: Vec<RegressionNode> = vec![RegressionNode::Leaf { weight: 0.0 }];
        // position of each row in the current level's active node list
        let mut slot: Vec<u32> = (0..n).map(|r| if rows_in[r] { 0 } else { INACTIVE }).collect();
        let (g0, h0) = (0..n)
            .filter(|&r| rows_in[r])
            .fold((0.0, 0.0), |(g, h), r| (g + grad[r], h + hess[r]));
        // (node id, G, H)
        let mut active: Vec<(usize, f64, f64)> = vec![(0, g0, h0)];

        for _depth in 0..self.params.max_depth {
            if active.is_empty() {
                break;
            }
            let m = active.len();
            let mut best: Vec<Option<Candidate>> = vec![None; m];
            let mut gl = vec![0.0; m];
            let mut hl = vec![0.0; m];
            let mut last = vec![f64::NAN; m];
            for &f in features {
                gl.iter_mut().for_each(|v| *v = 0.0);
                hl.iter_mut().for_each(|v| *v = 0.0);
                last.iter_mut().for_each(|v| *v = f64::NAN);
                for &r in &self.presorted.columns[f] {
                    let r = r as usize;
                    let s = slot[r];
                    if s == INACTIVE {
                        continue;
                    }
                    let s = s as usize;
                    let v = self.x.get(r, f);
                    if !last[s].is_nan() && v > last[s] {
                        let (_, g, h) = active[s];
                        let (gr, hr) = (g - gl[s], h - hl[s]);
                        if hl[s] >= self.params.min_child_weight && hr >= self.params.min_child_weight {
                            let gain = 0.5 * (self.score(gl[s], hl[s]) + self.score(gr, hr) - self.score(g, h))
                                - self.params.gamma;
                            if best[s].is_none_or(|b| gain > b.gain) {
                                let mid = last[s] + (v - last[s]) / 2.0;
                                best[s] = Some(Candidate {
                                    gain,
                                    feature: f,
                                    threshold: if mid >= v { last[s] } else { mid },
                                });
                            }
                        }
                    }
                    gl[s] += grad[r];
                    hl[s] += hess[r];
                    last[s] = v;
                }
            }

            let mut next: Vec<(usize, f64, f64)> = Vec::new();
            // maps current slot -> (left slot, right slot) in `next`
            let mut routes: Vec<Option<(usize, Candidate)>> = vec![None; m];
            for (s, &(node, g, h)) in active.iter().enumerate() {
                match best[s] {
                    Some(c) if c.gain > 0.0 => {
                        let left = nodes.len();
                        nodes.push(RegressionNode::Leaf { weight: 0.0 });
                        nodes.push(RegressionNode::Leaf { weight: 0.0 });
                        nodes[node] = RegressionNode::Split {
                            feature: c.feature,
                            threshold: c.threshold,
                            left,
                            right: left + 1,
                        };
                        routes[s] = Some((next.len(), c));
                        next.push((left, 0.0, 0.0));
                        next.push((left + 1, 0.0, 0.0));
                    }
                    _ => {
                        nodes[node] = RegressionNode::Leaf {
                            weight: -g / (h + lambda),
                        }
                    }
                }
            }
            for r in 0..n {
                if slot[r] == INACTIVE {
                    continue;
                }
                match routes[slot[r] as usize] {
                    Some((base, c)) => {
                        let s = if self.x.get(r, c.feature) <= c.threshold {
                            base
                        } else {
                            base + 1
                        };
                        next[s].1 += grad[r];
                        next[s].2 += hess[r];
                        slot[r] = s as u32;
                    }
                    None => slot[r] = INACTIVE,
                }
            }
            active = next;
        }
        for &(node, g, h) in &active {
            nodes[node] = RegressionNode::Leaf {
                weight: -g / (h + lambda),
            };
        }
        RegressionTree { nodes }
    }
}

fn mean_log_loss(scores: &[f64], y: &[usize], k: usize) -> f64 {
    let mut total = 0.0;
    let mut p = vec![0.0; k];
    for (i, &label) in y.iter().enumerate() {
        p.copy_from_slice(&scores[i * k..(i + 1) * k]);
        softmax_in_place(&mut p);
        total -= p[label].max(1e-300).ln();
    }
    total / y.len() as f64
}

pub fn train_gbt(x: &Matrix, y: &[usize], n_classes: usize, params: &GbtParams, seed: u64) -> Result<BoostedModel> {
    validate_training_set(x, y, n_classes)?;
    if n_classes < 2 {
        return Err(Error::config("gradient boosting needs at least 2 classes"));
    }
    if !(params.subsample > 0.0 && params.subsample <= 1.0 && params.colsample > 0.0 && params.colsample <= 1.0) {
        return Err(Error::config("subsample and colsample must lie in (0, 1]"));
    }
    let n = x.rows;
    let k = n_classes;
    let presorted = Presorted::new(x);
    let grower = TreeGrower {
        x,
        presorted: &presorted,
        params,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scores = vec![0.0; n * k];
    let mut train_loss = vec![mean_log_loss(&scores, y, k)];
    let mut rounds = Vec::with_capacity(params.rounds);
    let mut probs = vec![0.0; k];
    let mut grad = vec![vec![0.0; n]; k];
    let mut hess = vec![vec![0.0; n]; k];

    for round in 0..params.rounds {
        for i in 0..n {
            probs.copy_from_slice(&scores[i * k..(i + 1) * k]);
            softmax_in_place(&mut probs);
            for c in 0..k {
                let target = if y[i] == c { 1.0 } else { 0.0 };
                grad[c][i] = probs[c] - target;
                hess[c][i] = (probs[c] * (1.0 - probs[c])).max(1e-16);
            }
        }
        for c in 0..k {
            if let Some(i) = (0..n).find(|&i| !grad[c][i].is_finite() || !hess[c][i].is_finite()) {
                return Err(Error::Training(format!(
                    "non-finite gradient at round {round}, class {c}, row {i}: g = {}, h = {}",
                    grad[c][i], hess[c][i]
                )));
            }
        }
        let rows_in: Vec<bool> = if params.subsample < 1.0 {
            (0..n).map(|_| rng.random::<f64>() < params.subsample).collect()
        } else {
            vec![true; n]
        };
        let feature_sets: Vec<Vec<usize>> = (0..k)
            .map(|_| {
                let take = ((params.colsample * x.cols as f64).round() as usize).clamp(1, x.cols);
                let mut f = if take == x.cols {
                    (0..x.cols).collect()
                } else {
                    sample(&mut rng, x.cols, take).into_vec()
                };
                f.sort_unstable();
                f
            })
            .collect();
        let trees: Vec<RegressionTree> = (0..k)
            .into_par_iter()
            .map(|c| grower.grow(&grad[c], &hess[c], &rows_in, &feature_sets[c]))
            .collect();
        for i in 0..n {
            let row = x.row(i);
            for (c, tree) in trees.iter().enumerate() {
                scores[i * k + c] += params.learning_rate * tree.predict(row);
            }
        }
        let loss = mean_log_loss(&scores, y, k);
        if !loss.is_finite() {
            return Err(Error::Training(format!("training loss became {loss} at round {round}")));
        }
        train_loss.push(loss);
        rounds.push(trees);
    }

    Ok(BoostedModel {
        n_classes,
        params: *params,
        seed,
        rounds,
        train_loss,
    })
}
