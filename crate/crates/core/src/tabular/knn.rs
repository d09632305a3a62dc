//! Brute-force k-nearest-neighbour regression.

use serde::{Deserialize, Serialize};

use crate::data::Feature;
use crate::preprocess::TabularSample;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub samples: Vec<TabularSample>,
    pub k: usize,
}

pub fn fit_knn(samples: &[TabularSample], k: usize) -> Result<KnnModel> {
    if k == 0 || k > samples.len() {
        return Err(Error::invalid(format!(
            "k = {k} outside 1..={} (number of stored samples)",
            samples.len()
        )));
    }
    Ok(KnnModel {
        samples: samples.to_vec(),
        k,
    })
}

pub fn euclidean(a: &[f64; Feature::COUNT], b: &[f64; Feature::COUNT]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Mean label of the `k` nearest stored samples.
///
/// Distance ties go to the lower fire id; labels are summed nearest first.
pub fn predict_knn(model: &KnnModel, query: &[f64; Feature::COUNT]) -> f64 {
    let mut scored: Vec<(f64, u64, f64)> = model
        .samples
        .iter()
        .map(|s| (euclidean(&s.features, query), s.fire_id, s.label))
        .collect();
    let by_distance = |a: &(f64, u64, f64), b: &(f64, u64, f64)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    let k = model.k;
    if k < scored.len() {
        scored.select_nth_unstable_by(k - 1, by_distance);
        scored.truncate(k);
    }
    scored.sort_by(by_distance);
    scored.iter().map(|s| s.2).sum::<f64>() / k as f64
}
