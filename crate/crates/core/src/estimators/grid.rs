//! Exhaustive hyperparameter grid search scored by validation precision.

use serde::{Deserialize, Serialize};

use super::{argmax, BoostedModel, ForestModel, ForestParams, GbtParams, Matrix, NeuralModel};
use crate::error::{Error, Result};

/// Anything that yields class probabilities for a feature row.
pub trait Classifier {
    fn predict_proba(&self, row: &[f64]) -> Vec<f64>;
}

impl Classifier for ForestModel {
    fn predict_proba(&self, row: &[f64]) -> Vec<f64> {
        ForestModel::predict_proba(self, row)
    }
}

impl Classifier for BoostedModel {
    fn predict_proba(&self, row: &[f64]) -> Vec<f64> {
        BoostedModel::predict_proba(self, row)
    }
}

impl Classifier for NeuralModel {
    fn predict_proba(&self, row: &[f64]) -> Vec<f64> {
        NeuralModel::predict_proba(self, row)
    }
}

/// A grid point that can describe itself as named columns of the surface table.
pub trait GridPoint {
    fn columns(&self) -> Vec<(&'static str, String)>;
}

impl GridPoint for ForestParams {
    fn columns(&self) -> Vec<(&'static str, String)> {
        vec![
            ("trees", self.trees.to_string()),
            ("max_depth", self.max_depth.to_string()),
        ]
    }
}

impl GridPoint for GbtParams {
    fn columns(&self) -> Vec<(&'static str, String)> {
        vec![
            ("rounds", self.rounds.to_string()),
            ("max_depth", self.max_depth.to_string()),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell<P> {
    pub params: P,
    /// Validation precision; `None` when training failed.
    pub precision: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult<P> {
    pub best: P,
    pub best_index: usize,
    pub best_precision: f64,
    pub cells: Vec<GridCell<P>>,
}

impl<P: GridPoint> GridResult<P> {
    /// Comma-separated surface, one row per grid cell in grid order; failed cells read `NA`.
    pub fn surface_csv(&self) -> String {
        let mut out = String::new();
        if let Some(first) = self.cells.first() {
            let names: Vec<&str> = first.params.columns().iter().map(|c| c.0).collect();
            out.push_str(&names.join(","));
            out.push_str(",precision\n");
        }
        for cell in &self.cells {
            let values: Vec<String> = cell.params.columns().into_iter().map(|c| c.1).collect();
            out.push_str(&values.join(","));
            match cell.precision {
                Some(p) => out.push_str(&format!(",{p:.6}\n")),
                None => out.push_str(",NA\n"),
            }
        }
        out
    }
}

fn precision_of<M: Classifier>(model: &M, x: &Matrix, y: &[usize]) -> f64 {
    let hits = (0..x.rows)
        .filter(|&i| argmax(&model.predict_proba(x.row(i))) == y[i])
        .count();
    hits as f64 / x.rows as f64
}

/// Trains every grid cell on `train`, scores it on `validation`, and keeps
/// the best. Ties go to the earlier cell. A cell whose training fails is
/// recorded with its error and skipped.
pub fn grid_search<P, M, F>(
    grid: &[P],
    train: (&Matrix, &[usize]),
    validation: (&Matrix, &[usize]),
    trainer: F,
) -> Result<GridResult<P>>
where
    P: Clone,
    M: Classifier,
    F: Fn(&P, &Matrix, &[usize]) -> Result<M>,
{
    if grid.is_empty() {
        return Err(Error::argument("parameter grid is empty"));
    }
    if validation.0.rows == 0 || validation.0.rows != validation.1.len() {
        return Err(Error::argument("validation set is empty or misaligned"));
    }
    let mut cells = Vec::with_capacity(grid.len());
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in grid.iter().enumerate() {
        match trainer(p, train.0, train.1) {
            Ok(model) => {
                let prec = precision_of(&model, validation.0, validation.1);
                if best.is_none_or(|(_, b)| prec > b) {
                    best = Some((i, prec));
                }
                cells.push(GridCell {
                    params: p.clone(),
                    precision: Some(prec),
                    error: None,
                });
            }
            Err(e) => {
                log::warn!("grid cell {i} failed: {e}");
                cells.push(GridCell {
                    params: p.clone(),
                    precision: None,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    let (best_index, best_precision) = best.ok_or_else(|| Error::Training("every grid cell failed to train".into()))?;
    Ok(GridResult {
        best: grid[best_index].clone(),
        best_index,
        best_precision,
        cells,
    })
}
