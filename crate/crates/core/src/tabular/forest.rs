//! Bagged regression trees.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::tree::{rows_and_labels, TreeBuilder, TreeNode, TreeParams};
use crate::data::Feature;
use crate::preprocess::TabularSample;
use crate::{rng, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_estimators: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Draw a full-size resample with replacement per tree. Off only in tests.
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_estimators: 50,
            max_depth: 5,
            min_samples_leaf: 1,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<TreeNode>,
    pub params: ForestParams,
    /// Tree `t` was grown from `rng::stream(seed, t)`.
    pub seed: u64,
}

impl ForestModel {
    /// Mean of the per-tree predictions, clipped at zero.
    pub fn predict(&self, x: &[f64; Feature::COUNT]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
        (sum / self.trees.len() as f64).max(0.0)
    }
}

pub fn fit_random_forest(samples: &[TabularSample], params: ForestParams, seed: u64) -> Result<ForestModel> {
    if samples.is_empty() {
        return Err(Error::invalid("cannot fit a forest on zero samples"));
    }
    if params.n_estimators == 0 {
        return Err(Error::invalid("n_estimators must be at least 1"));
    }
    let (x, y) = rows_and_labels(samples);
    let builder = TreeBuilder {
        x: &x,
        y: &y,
        params: TreeParams {
            max_depth: params.max_depth,
            min_samples_leaf: params.min_samples_leaf,
        },
        leaf_lambda: 0.0,
    };
    let n = samples.len();
    // Each tree owns its stream, so the result does not depend on fit order.
    let trees = (0..params.n_estimators)
        .map(|t| {
            let indices: Vec<usize> = if params.bootstrap {
                let mut r = rng::stream(seed, t as u64);
                (0..n).map(|_| r.gen_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            builder.build(&indices)
        })
        .collect();
    Ok(ForestModel { trees, params, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tabular::tree::fit_tree;

    fn samples(n: usize) -> Vec<TabularSample> {
        (0..n)
            .map(|i| {
                let a = (i as f64 * 0.37).fract();
                let b = (i as f64 * 0.71).fract();
                TabularSample {
                    fire_id: i as u64,
                    features: [a, b, 0.5 * a, 0.0, b * b],
                    radius_km: 5.0,
                    label: 10.0 * a + 3.0 * b,
                }
            })
            .collect()
    }

    fn leaf(value: f64) -> TreeNode {
        TreeNode::Leaf { value, n_samples: 1 }
    }

    #[test]
    fn single_tree_without_bootstrap_equals_fit_tree() {
        let s = samples(30);
        let params = ForestParams {
            n_estimators: 1,
            max_depth: 4,
            min_samples_leaf: 1,
            bootstrap: false,
        };
        let forest = fit_random_forest(&s, params, 9).unwrap();
        let tree = fit_tree(&s, TreeParams { max_depth: 4, min_samples_leaf: 1 }).unwrap();
        for x in &s {
            assert_eq!(forest.predict(&x.features), tree.predict(&x.features).max(0.0));
        }
    }

    #[test]
    fn same_seed_same_forest() {
        let s = samples(40);
        let p = ForestParams { n_estimators: 5, ..Default::default() };
        assert_eq!(fit_random_forest(&s, p, 3).unwrap(), fit_random_forest(&s, p, 3).unwrap());
        assert_ne!(fit_random_forest(&s, p, 3).unwrap(), fit_random_forest(&s, p, 4).unwrap());
    }

    #[test]
    fn prediction_is_clipped_mean() {
        let model = |values: &[f64]| ForestModel {
            trees: values.iter().map(|&v| leaf(v)).collect(),
            params: ForestParams::default(),
            seed: 0,
        };
        let x = [0.0; 5];
        assert_eq!(model(&[3.0, 3.0, 3.0]).predict(&x), 3.0);
        assert_eq!(model(&[2.0, 4.0]).predict(&x), 3.0);
        assert_eq!(model(&[-1.0, 0.0]).predict(&x), 0.0);
    }

    #[test]
    fn rejects_empty_input_and_zero_trees() {
        assert!(fit_random_forest(&[], ForestParams::default(), 0).is_err());
        let p = ForestParams { n_estimators: 0, ..Default::default() };
        assert!(fit_random_forest(&samples(3), p, 0).is_err());
    }
}
