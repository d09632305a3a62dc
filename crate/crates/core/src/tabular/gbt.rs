//! Squared-error gradient boosting with an L2 penalty on leaf values.
//!
//! Every round fits a variance-reduction tree to the current residuals and
//! sets each leaf to `sum(residuals) / (count + lambda)`; the model adds
//! `learning_rate` times that tree. For `0 < learning_rate <= 2` and
//! `lambda >= 0` each round cannot increase the training squared loss.

use serde::{Deserialize, Serialize};

use super::tree::{rows_and_labels, TreeBuilder, TreeNode, TreeParams};
use crate::data::Feature;
use crate::preprocess::TabularSample;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbtParams {
    pub n_estimators: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub lambda: f64,
    pub min_samples_leaf: usize,
}

impl Default for GbtParams {
    fn default() -> Self {
        GbtParams {
            n_estimators: 50,
            learning_rate: 0.1,
            max_depth: 5,
            lambda: 1.0,
            min_samples_leaf: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub trees: Vec<TreeNode>,
    pub base_score: f64,
    pub params: GbtParams,
    /// Mean squared training error before boosting and after each round.
    pub train_loss: Vec<f64>,
}

impl GbtModel {
    /// `base_score + learning_rate * sum(tree outputs)` before clipping.
    pub fn raw_predict(&self, x: &[f64; Feature::COUNT]) -> f64 {
        self.base_score + self.params.learning_rate * self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }

    pub fn predict(&self, x: &[f64; Feature::COUNT]) -> f64 {
        self.raw_predict(x).max(0.0)
    }
}

fn mse(residuals: &[f64]) -> f64 {
    residuals.iter().map(|r| r * r).sum::<f64>() / residuals.len() as f64
}

pub fn fit_gbt(samples: &[TabularSample], params: GbtParams) -> Result<GbtModel> {
    if samples.is_empty() {
        return Err(Error::invalid("cannot boost on zero samples"));
    }
    if !(params.learning_rate.is_finite() && params.learning_rate > 0.0) {
        return Err(Error::invalid(format!("learning rate must be positive, got {}", params.learning_rate)));
    }
    if !(params.lambda.is_finite() && params.lambda >= 0.0) {
        return Err(Error::invalid(format!("lambda must be non-negative, got {}", params.lambda)));
    }
    let (x, y) = rows_and_labels(samples);
    let base_score = y.iter().sum::<f64>() / y.len() as f64;
    let mut residuals: Vec<f64> = y.iter().map(|v| v - base_score).collect();
    let mut train_loss = vec![mse(&residuals)];
    let indices: Vec<usize> = (0..samples.len()).collect();
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_samples_leaf: params.min_samples_leaf,
    };
    let mut trees = Vec::with_capacity(params.n_estimators);
    for _ in 0..params.n_estimators {
        let tree = TreeBuilder {
            x: &x,
            y: &residuals,
            params: tree_params,
            leaf_lambda: params.lambda,
        }
        .build(&indices);
        for (r, row) in residuals.iter_mut().zip(&x) {
            *r -= params.learning_rate * tree.predict(row);
        }
        train_loss.push(mse(&residuals));
        trees.push(tree);
    }
    Ok(GbtModel {
        trees,
        base_score,
        params,
        train_loss,
    })
}
