//! Small neural classifiers over the 38 x 10 phrase-embedding grid.
//!
//! Both networks share a head: the body output, optionally concatenated with
//! the 167 manual and cluster features, feeds a ReLU dense layer and a
//! softmax. All parameters live in one flat `f64` vector so the gradient can be
//! checked against finite differences entry by entry.

mod cnn;
mod lstm;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{softmax_in_place, validate_training_set, Matrix};
use crate::embeddings::EMBEDDING_DIM;
use crate::error::{Error, Result};
use crate::features::{FEATURE_WIDTH, SEMANTIC_RANGE, SEQUENCE_STEPS};

/// Samples per gradient work unit. Fixed so the reduction order does not depend on the thread count.
const GRADIENT_CHUNK: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NeuralKind {
    Cnn,
    Recurrent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NeuralParams {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Gradient L2-norm ceiling; 0 disables clipping.
    pub clip_norm: f64,
    /// L2 penalty coefficient added to the clipped gradient.
    pub weight_decay: f64,
    /// Share of the training rows held out to pick the best epoch; 0 trains on
    /// every row for exactly `epochs` epochs.
    pub validation_fraction: f64,
    /// Epochs without a validation improvement before training stops.
    pub patience: usize,
    pub filters: usize,
    pub kernel: usize,
    pub pool: usize,
    pub recurrent_hidden: usize,
    pub dense_hidden: usize,
    /// Feed the manual and cluster features into the dense layer as well.
    pub side_path: bool,
}

impl Default for NeuralParams {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 32,
            learning_rate: 0.02,
            momentum: 0.9,
            clip_norm: 5.0,
            weight_decay: 0.03,
            validation_fraction: 0.0,
            patience: 3,
            filters: 32,
            kernel: 3,
            pool: 2,
            recurrent_hidden: 64,
            dense_hidden: 64,
            side_path: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub kind: NeuralKind,
    pub steps: usize,
    pub channels: usize,
    /// Width of the side input (0 when the side path is off).
    pub side: usize,
    pub filters: usize,
    pub kernel: usize,
    pub pool: usize,
    pub recurrent_hidden: usize,
    pub dense_hidden: usize,
    pub classes: usize,
}

impl Architecture {
    pub fn new(kind: NeuralKind, params: &NeuralParams, classes: usize) -> Result<Architecture> {
        let a = Architecture {
            kind,
            steps: SEQUENCE_STEPS,
            channels: EMBEDDING_DIM,
            side: if params.side_path {
                FEATURE_WIDTH - SEMANTIC_RANGE.len()
            } else {
                0
            },
            filters: params.filters,
            kernel: params.kernel,
            pool: params.pool,
            recurrent_hidden: params.recurrent_hidden,
            dense_hidden: params.dense_hidden,
            classes,
        };
        a.check()?;
        Ok(a)
    }

    fn check(&self) -> Result<()> {
        if self.classes < 2 || self.dense_hidden == 0 {
            return Err(Error::config(
                "network needs at least 2 classes and a non-empty dense layer",
            ));
        }
        match self.kind {
            NeuralKind::Cnn if self.filters == 0 || self.kernel == 0 || self.pool == 0 || self.kernel > self.steps => {
                Err(Error::config(
                    "convolution needs filters, pool >= 1 and 1 <= kernel <= steps",
                ))
            }
            NeuralKind::Cnn if cnn::pooled_len(self) == 0 => {
                Err(Error::config("pool window longer than the conv output"))
            }
            NeuralKind::Recurrent if self.recurrent_hidden == 0 => {
                Err(Error::config("recurrent hidden size must be >= 1"))
            }
            _ => Ok(()),
        }
    }

    fn body_params(&self) -> usize {
        match self.kind {
            NeuralKind::Cnn => cnn::param_count(self),
            NeuralKind::Recurrent => lstm::param_count(self),
        }
    }

    fn body_width(&self) -> usize {
        match self.kind {
            NeuralKind::Cnn => cnn::output_width(self),
            NeuralKind::Recurrent => lstm::output_width(self),
        }
    }

    fn head_input(&self) -> usize {
        self.body_width() + self.side
    }

    pub fn parameter_count(&self) -> usize {
        let (u, d, k) = (self.head_input(), self.dense_hidden, self.classes);
        self.body_params() + d * u + d + k * d + k
    }
}

/// Per-column standardization fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &Matrix) -> Standardizer {
        let n = x.rows as f64;
        let mut mean = vec![0.0; x.cols];
        for i in 0..x.rows {
            for (m, v) in mean.iter_mut().zip(x.row(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; x.cols];
        for i in 0..x.rows {
            for ((s, v), m) in var.iter_mut().zip(x.row(i)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .iter()
            .map(|s| (s / n).sqrt())
            .map(|s| if s > 1e-12 { s } else { 1.0 })
            .collect();
        Standardizer { mean, scale }
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuralModel {
    pub arch: Architecture,
    pub params: NeuralParams,
    pub seed: u64,
    pub standardizer: Standardizer,
    pub weights: Vec<f64>,
    /// Mean minibatch loss per completed epoch.
    pub train_loss: Vec<f64>,
    /// Held-out loss per completed epoch, when a validation slice is used.
    #[serde(default)]
    pub validation_loss: Vec<f64>,
    /// Epoch whose weights were kept.
    #[serde(default)]
    pub best_epoch: Option<usize>,
}

/// Momentum buffer for [`NeuralModel::sgd_step`].
#[derive(Debug, Clone)]
pub struct Momentum {
    pub velocity: Vec<f64>,
}

impl Momentum {
    pub fn new(model: &NeuralModel) -> Momentum {
        Momentum {
            velocity: vec![0.0; model.weights.len()],
        }
    }
}

struct Head {
    /// Head input `u`.
    input: Vec<f64>,
    hidden_pre: Vec<f64>,
    hidden: Vec<f64>,
    probs: Vec<f64>,
}

enum BodyCache {
    Cnn(cnn::Cache),
    Lstm(lstm::Cache),
}

impl NeuralModel {
    /// Untrained network with seeded weights. Conv and dense layers use He-uniform
    /// initialization, recurrent weights `U(-1/sqrt(h), 1/sqrt(h))`, biases zero
    /// except the forget gate, which starts at 1.
    pub fn initialize(
        kind: NeuralKind,
        params: &NeuralParams,
        classes: usize,
        standardizer: Standardizer,
        seed: u64,
    ) -> Result<NeuralModel> {
        let arch = Architecture::new(kind, params, classes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::with_capacity(arch.parameter_count());
        let mut uniform = |n: usize, bound: f64, out: &mut Vec<f64>| {
            out.extend((0..n).map(|_| {
                if bound > 0.0 {
                    rng.random_range(-bound..bound)
                } else {
                    0.0
                }
            }));
        };
        match kind {
            NeuralKind::Cnn => {
                let fan_in = (arch.kernel * arch.channels) as f64;
                uniform(
                    arch.filters * arch.kernel * arch.channels,
                    (6.0 / fan_in).sqrt(),
                    &mut weights,
                );
                uniform(arch.filters, 0.0, &mut weights);
            }
            NeuralKind::Recurrent => {
                let h = arch.recurrent_hidden;
                let bound = 1.0 / (h as f64).sqrt();
                uniform(4 * h * arch.channels + 4 * h * h, bound, &mut weights);
                let start = weights.len();
                uniform(4 * h, 0.0, &mut weights);
                let fb = lstm::forget_bias_range(&arch);
                let body_start = start - (4 * h * arch.channels + 4 * h * h);
                for v in &mut weights[body_start + fb.start..body_start + fb.end] {
                    *v = 1.0;
                }
            }
        }
        let (u, d, k) = (arch.head_input(), arch.dense_hidden, arch.classes);
        uniform(d * u, (6.0 / u as f64).sqrt(), &mut weights);
        uniform(d, 0.0, &mut weights);
        uniform(k * d, (6.0 / (d + k) as f64).sqrt(), &mut weights);
        uniform(k, 0.0, &mut weights);
        debug_assert_eq!(weights.len(), arch.parameter_count());
        Ok(NeuralModel {
            arch,
            params: *params,
            seed,
            standardizer,
            weights,
            train_loss: Vec::new(),
            validation_loss: Vec::new(),
            best_epoch: None,
        })
    }

    fn split_weights(&self) -> (&[f64], &[f64]) {
        self.weights.split_at(self.arch.body_params())
    }

    fn forward(&self, z: &[f64]) -> (BodyCache, Head) {
        let a = &self.arch;
        let (wb, wh) = self.split_weights();
        let seq = &z[SEMANTIC_RANGE];
        let mut input = vec![0.0; a.head_input()];
        let bw = a.body_width();
        let cache = match a.kind {
            NeuralKind::Cnn => BodyCache::Cnn(cnn::forward(a, wb, seq, &mut input[..bw])),
            NeuralKind::Recurrent => BodyCache::Lstm(lstm::forward(a, wb, seq, &mut input[..bw])),
        };
        if a.side > 0 {
            let mut k = bw;
            for (j, &v) in z.iter().enumerate() {
                if !SEMANTIC_RANGE.contains(&j) {
                    input[k] = v;
                    k += 1;
                }
            }
        }
        let (u, d, k) = (a.head_input(), a.dense_hidden, a.classes);
        let (w1, rest) = wh.split_at(d * u);
        let (b1, rest) = rest.split_at(d);
        let (w2, b2) = rest.split_at(k * d);
        let hidden_pre: Vec<f64> = (0..d)
            .map(|r| {
                b1[r]
                    + w1[r * u..(r + 1) * u]
                        .iter()
                        .zip(&input)
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
            })
            .collect();
        let hidden: Vec<f64> = hidden_pre.iter().map(|v| v.max(0.0)).collect();
        let mut probs: Vec<f64> = (0..k)
            .map(|r| {
                b2[r]
                    + w2[r * d..(r + 1) * d]
                        .iter()
                        .zip(&hidden)
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
            })
            .collect();
        softmax_in_place(&mut probs);
        (
            cache,
            Head {
                input,
                hidden_pre,
                hidden,
                probs,
            },
        )
    }

    /// Cross-entropy of one standardized row; adds its gradient into `g`.
    fn backward(&self, z: &[f64], label: usize, g: &mut [f64]) -> f64 {
        let a = &self.arch;
        let (cache, head) = self.forward(z);
        let (wb, wh) = self.split_weights();
        let (u, d, k) = (a.head_input(), a.dense_hidden, a.classes);
        let w1 = &wh[..d * u];
        let w2 = &wh[d * u + d..d * u + d + k * d];
        let (gb_body, g_head) = g.split_at_mut(a.body_params());
        let (gw1, rest) = g_head.split_at_mut(d * u);
        let (gb1, rest) = rest.split_at_mut(d);
        let (gw2, gb2) = rest.split_at_mut(k * d);

        let mut dlogits = head.probs.clone();
        dlogits[label] -= 1.0;
        let mut dhidden = vec![0.0; d];
        for r in 0..k {
            gb2[r] += dlogits[r];
            for j in 0..d {
                gw2[r * d + j] += dlogits[r] * head.hidden[j];
                dhidden[j] += dlogits[r] * w2[r * d + j];
            }
        }
        let mut dinput = vec![0.0; a.body_width()];
        for j in 0..d {
            if head.hidden_pre[j] <= 0.0 {
                continue;
            }
            let dh = dhidden[j];
            gb1[j] += dh;
            let row = &w1[j * u..(j + 1) * u];
            for (gv, xv) in gw1[j * u..(j + 1) * u].iter_mut().zip(&head.input) {
                *gv += dh * xv;
            }
            for (dv, wv) in dinput.iter_mut().zip(row) {
                *dv += dh * wv;
            }
        }
        let seq = &z[SEMANTIC_RANGE];
        match &cache {
            BodyCache::Cnn(c) => cnn::backward(a, seq, c, &dinput, gb_body),
            BodyCache::Lstm(c) => lstm::backward(a, wb, seq, c, &dinput, gb_body),
        }
        -head.probs[label].max(1e-300).ln()
    }

    pub fn predict_proba(&self, row: &[f64]) -> Vec<f64> {
        self.forward(&self.standardizer.apply(row)).1.probs
    }

    fn batch_gradient(&self, rows: &[&[f64]], labels: &[usize]) -> (f64, Vec<f64>) {
        let n = self.weights.len();
        let parts: Vec<(f64, Vec<f64>)> = rows
            .par_chunks(GRADIENT_CHUNK)
            .zip(labels.par_chunks(GRADIENT_CHUNK))
            .map(|(rs, ls)| {
                let mut g = vec![0.0; n];
                let loss = rs
                    .iter()
                    .zip(ls)
                    .map(|(r, &l)| self.backward(r, l, &mut g))
                    .sum::<f64>();
                (loss, g)
            })
            .collect();
        let mut loss = 0.0;
        let mut grad = vec![0.0; n];
        for (l, g) in parts {
            loss += l;
            for (a, b) in grad.iter_mut().zip(g) {
                *a += b;
            }
        }
        let m = rows.len() as f64;
        grad.iter_mut().for_each(|v| *v /= m);
        (loss / m, grad)
    }

    /// Mean cross-entropy over raw (unstandardized) rows and its gradient with respect to `weights`.
    pub fn loss_and_gradient(&self, x: &Matrix, y: &[usize]) -> (f64, Vec<f64>) {
        let z: Vec<Vec<f64>> = (0..x.rows).map(|i| self.standardizer.apply(x.row(i))).collect();
        let rows: Vec<&[f64]> = z.iter().map(Vec::as_slice).collect();
        self.batch_gradient(&rows, y)
    }

    /// Mean cross-entropy over raw rows.
    pub fn loss(&self, x: &Matrix, y: &[usize]) -> f64 {
        let total: f64 = (0..x.rows)
            .map(|i| -self.predict_proba(x.row(i))[y[i]].max(1e-300).ln())
            .sum();
        total / x.rows as f64
    }

    /// One clipped momentum-SGD update on standardized rows; returns the pre-update batch loss.
    fn step(&mut self, rows: &[&[f64]], labels: &[usize], momentum: &mut Momentum) -> std::result::Result<f64, String> {
        let (loss, mut grad) = self.batch_gradient(rows, labels);
        if !loss.is_finite() {
            return Err(format!("batch loss is {loss}"));
        }
        let norm = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() {
            return Err(format!("gradient norm is {norm}"));
        }
        if self.params.clip_norm > 0.0 && norm > self.params.clip_norm {
            let s = self.params.clip_norm / norm;
            grad.iter_mut().for_each(|v| *v *= s);
        }
        let (lr, mu, wd) = (
            self.params.learning_rate,
            self.params.momentum,
            self.params.weight_decay,
        );
        let updated: Vec<f64> = momentum
            .velocity
            .iter_mut()
            .zip(&grad)
            .zip(&self.weights)
            .map(|((v, g), w)| {
                *v = mu * *v - lr * (g + wd * w);
                w + *v
            })
            .collect();
        if updated.iter().any(|w| !w.is_finite()) {
            return Err("weights became non-finite".into());
        }
        self.weights = updated;
        Ok(loss)
    }

    /// One update on raw rows. Returns the batch loss before the update.
    pub fn sgd_step(&mut self, x: &Matrix, y: &[usize], momentum: &mut Momentum) -> Result<f64> {
        let z: Vec<Vec<f64>> = (0..x.rows).map(|i| self.standardizer.apply(x.row(i))).collect();
        let rows: Vec<&[f64]> = z.iter().map(Vec::as_slice).collect();
        let before = self.clone();
        self.step(&rows, y, momentum).map_err(|message| Error::NonFinite {
            epoch: 0,
            step: 0,
            message,
            checkpoint: Some(Box::new(before)),
        })
    }
}

/// Trains a CNN or LSTM classifier on full-width feature rows.
///
/// Minibatch order is drawn from `seed`; per-batch gradients are reduced in a
/// fixed order, so results do not depend on the rayon thread count.
pub fn train_neural(
    kind: NeuralKind,
    x: &Matrix,
    y: &[usize],
    n_classes: usize,
    params: &NeuralParams,
    seed: u64,
) -> Result<NeuralModel> {
    validate_training_set(x, y, n_classes)?;
    if x.cols != FEATURE_WIDTH {
        return Err(Error::Shape {
            expected: FEATURE_WIDTH,
            found: x.cols,
        });
    }
    if params.batch_size == 0 {
        return Err(Error::config("batch size must be >= 1"));
    }
    if !(0.0..1.0).contains(&params.validation_fraction) {
        return Err(Error::config("validation fraction must lie in [0, 1)"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5DEE_CE66_D1CE_F00D);
    let mut order: Vec<usize> = (0..x.rows).collect();
    let n_val = (x.rows as f64 * params.validation_fraction).round() as usize;
    let held_out: Vec<usize> = if n_val > 0 && n_val < x.rows {
        order.shuffle(&mut rng);
        let held = order.split_off(x.rows - n_val);
        order.sort_unstable();
        held
    } else {
        Vec::new()
    };
    let standardizer = Standardizer::fit(&x.select_rows(&order));
    let mut model = NeuralModel::initialize(kind, params, n_classes, standardizer, seed)?;
    let z: Vec<Vec<f64>> = (0..x.rows).map(|i| model.standardizer.apply(x.row(i))).collect();
    let val_loss = |m: &NeuralModel| {
        held_out
            .par_iter()
            .map(|&i| -m.forward(&z[i]).1.probs[y[i]].max(1e-300).ln())
            .collect::<Vec<f64>>()
            .iter()
            .sum::<f64>()
            / held_out.len() as f64
    };
    let mut best: Option<(f64, usize, Vec<f64>)> = None;
    let mut momentum = Momentum::new(&model);
    let mut step = 0;
    for epoch in 0..params.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0;
        for batch in order.chunks(params.batch_size) {
            let rows: Vec<&[f64]> = batch.iter().map(|&i| z[i].as_slice()).collect();
            let labels: Vec<usize> = batch.iter().map(|&i| y[i]).collect();
            let before_weights = model.weights.clone();
            match model.step(&rows, &labels, &mut momentum) {
                Ok(loss) => {
                    total += loss;
                    batches += 1;
                }
                Err(message) => {
                    model.weights = before_weights;
                    return Err(Error::NonFinite {
                        epoch,
                        step,
                        message,
                        checkpoint: Some(Box::new(model)),
                    });
                }
            }
            step += 1;
        }
        let mean = total / batches as f64;
        log::debug!("{kind:?} epoch {epoch}: mean batch loss {mean:.5}");
        model.train_loss.push(mean);
        if held_out.is_empty() {
            continue;
        }
        let v = val_loss(&model);
        model.validation_loss.push(v);
        if best.as_ref().is_none_or(|b| v < b.0) {
            best = Some((v, epoch, model.weights.clone()));
        } else if epoch - best.as_ref().unwrap().1 >= params.patience {
            break;
        }
    }
    if let Some((_, epoch, weights)) = best {
        model.weights = weights;
        model.best_epoch = Some(epoch);
    } else {
        model.best_epoch = params.epochs.checked_sub(1);
    }
    Ok(model)
}
