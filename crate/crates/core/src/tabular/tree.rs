//! CART regression tree with exhaustive variance-reduction splits.

use serde::{Deserialize, Serialize};

use crate::data::Feature;
use crate::preprocess::TabularSample;
use crate::{Error, Result};

pub type Row = [f64; Feature::COUNT];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Leaf {
        value: f64,
        n_samples: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        /// Drop in summed squared error produced by this split.
        gain: f64,
        n_samples: usize,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    pub fn predict(&self, x: &Row) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { value, .. } => return *value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => node = if x[*feature] <= *threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    /// Adds every split's gain to its feature slot.
    pub fn accumulate_importance(&self, acc: &mut [f64; Feature::COUNT]) {
        if let TreeNode::Split {
            feature,
            gain,
            left,
            right,
            ..
        } = self
        {
            acc[*feature] += gain;
            left.accumulate_importance(acc);
            right.accumulate_importance(acc);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: 5,
            min_samples_leaf: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

pub(crate) struct TreeBuilder<'a> {
    pub x: &'a [Row],
    pub y: &'a [f64],
    pub params: TreeParams,
    /// Leaf value is `sum / (count + leaf_lambda)`; zero gives the mean.
    pub leaf_lambda: f64,
}

impl TreeBuilder<'_> {
    pub fn build(&self, indices: &[usize]) -> TreeNode {
        let mut idx = indices.to_vec();
        self.grow(&mut idx, 0)
    }

    fn leaf(&self, idx: &[usize]) -> TreeNode {
        let sum: f64 = idx.iter().map(|&i| self.y[i]).sum();
        TreeNode::Leaf {
            value: sum / (idx.len() as f64 + self.leaf_lambda),
            n_samples: idx.len(),
        }
    }

    fn grow(&self, idx: &mut [usize], depth: usize) -> TreeNode {
        let first = self.y[idx[0]];
        let pure = idx.iter().all(|&i| self.y[i] == first);
        if depth >= self.params.max_depth || pure || idx.len() < 2 * self.params.min_samples_leaf.max(1) {
            return self.leaf(idx);
        }
        let Some(split) = best_split(self.x, self.y, idx, self.params.min_samples_leaf) else {
            return self.leaf(idx);
        };
        let n_samples = idx.len();
        let mid = partition(idx, |&i| self.x[i][split.feature] <= split.threshold);
        let (l, r) = idx.split_at_mut(mid);
        TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            gain: split.gain,
            n_samples,
            left: Box::new(self.grow(l, depth + 1)),
            right: Box::new(self.grow(r, depth + 1)),
        }
    }
}

/// Stable in-place partition; returns the count satisfying `pred`.
fn partition(idx: &mut [usize], pred: impl Fn(&usize) -> bool) -> usize {
    let (yes, no): (Vec<usize>, Vec<usize>) = idx.iter().partition(|i| pred(i));
    let mid = yes.len();
    idx[..mid].copy_from_slice(&yes);
    idx[mid..].copy_from_slice(&no);
    mid
}

/// Best variance-reduction split over all features and midpoint thresholds.
///
/// Ties keep the earliest candidate (lowest feature, then lowest threshold).
/// Returns `None` when no split with positive gain respects `min_samples_leaf`.
pub fn best_split(x: &[Row], y: &[f64], idx: &[usize], min_samples_leaf: usize) -> Option<SplitChoice> {
    let n = idx.len();
    let min_leaf = min_samples_leaf.max(1);
    if n < 2 * min_leaf {
        return None;
    }
    let mean = idx.iter().map(|&i| y[i]).sum::<f64>() / n as f64;
    let mut order = idx.to_vec();
    let mut best: Option<SplitChoice> = None;
    for feature in 0..Feature::COUNT {
        order.sort_by(|&a, &b| x[a][feature].total_cmp(&x[b][feature]));
        let total: f64 = order.iter().map(|&i| y[i] - mean).sum();
        let mut left_sum = 0.0;
        for p in 1..n {
            left_sum += y[order[p - 1]] - mean;
            let (lo, hi) = (x[order[p - 1]][feature], x[order[p]][feature]);
            if lo == hi || p < min_leaf || n - p < min_leaf {
                continue;
            }
            let right_sum = total - left_sum;
            let gain = left_sum * left_sum / p as f64 + right_sum * right_sum / (n - p) as f64 - total * total / n as f64;
            if gain > best.map_or(0.0, |b| b.gain) {
                best = Some(SplitChoice {
                    feature,
                    threshold: lo + (hi - lo) / 2.0,
                    gain,
                });
            }
        }
    }
    best
}

pub(crate) fn rows_and_labels(samples: &[TabularSample]) -> (Vec<Row>, Vec<f64>) {
    samples.iter().map(|s| (s.features, s.label)).unzip()
}

/// Fits a single regression tree on all samples.
pub fn fit_tree(samples: &[TabularSample], params: TreeParams) -> Result<TreeNode> {
    if samples.is_empty() {
        return Err(Error::invalid("cannot fit a tree on zero samples"));
    }
    let (x, y) = rows_and_labels(samples);
    let indices: Vec<usize> = (0..samples.len()).collect();
    Ok(TreeBuilder {
        x: &x,
        y: &y,
        params,
        leaf_lambda: 0.0,
    }
    .build(&indices))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(id: u64, f0: f64, label: f64) -> TabularSample {
        TabularSample {
            fire_id: id,
            features: [f0, 0.0, 0.0, 0.0, 0.0],
            radius_km: 5.0,
            label,
        }
    }

    #[test]
    fn constant_labels_give_single_leaf() {
        let s: Vec<_> = (0..6).map(|i| sample(i, i as f64, 4.5)).collect();
        let tree = fit_tree(&s, TreeParams { max_depth: 5, min_samples_leaf: 1 }).unwrap();
        assert_eq!(tree, TreeNode::Leaf { value: 4.5, n_samples: 6 });
    }

    #[test]
    fn step_function_depth_one() {
        let s = vec![sample(0, 0.0, 0.0), sample(1, 1.0, 0.0), sample(2, 2.0, 10.0), sample(3, 3.0, 10.0)];
        let tree = fit_tree(&s, TreeParams { max_depth: 1, min_samples_leaf: 1 }).unwrap();
        match &tree {
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
                gain,
                ..
            } => {
                assert_eq!(*feature, 0);
                assert_eq!(*threshold, 1.5);
                assert_eq!(**left, TreeNode::Leaf { value: 0.0, n_samples: 2 });
                assert_eq!(**right, TreeNode::Leaf { value: 10.0, n_samples: 2 });
                assert!((gain - 100.0).abs() < 1e-12);
            }
            leaf => panic!("expected a split, got {leaf:?}"),
        }
    }

    #[test]
    fn depth_zero_is_mean_leaf() {
        let s = vec![sample(0, 0.0, 1.0), sample(1, 1.0, 2.0), sample(2, 2.0, 6.0)];
        let tree = fit_tree(&s, TreeParams { max_depth: 0, min_samples_leaf: 1 }).unwrap();
        assert_eq!(tree, TreeNode::Leaf { value: 3.0, n_samples: 3 });
    }

    #[test]
    fn empty_samples_rejected() {
        assert!(matches!(fit_tree(&[], TreeParams::default()), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn min_samples_leaf_respected() {
        let s: Vec<_> = (0..10).map(|i| sample(i, i as f64, (i * i) as f64)).collect();
        let tree = fit_tree(&s, TreeParams { max_depth: 10, min_samples_leaf: 3 }).unwrap();
        fn check(node: &TreeNode) {
            match node {
                TreeNode::Leaf { n_samples, .. } => assert!(*n_samples >= 3),
                TreeNode::Split { left, right, .. } => {
                    check(left);
                    check(right);
                }
            }
        }
        check(&tree);
    }

    #[test]
    fn full_depth_interpolates_distinct_points() {
        let s: Vec<_> = (0..8).map(|i| sample(i, i as f64 * 0.3, (i as f64).sin())).collect();
        let tree = fit_tree(&s, TreeParams { max_depth: 20, min_samples_leaf: 1 }).unwrap();
        assert!(tree.depth() <= 20);
        for x in &s {
            assert_eq!(tree.predict(&x.features), x.label);
        }
    }
}
