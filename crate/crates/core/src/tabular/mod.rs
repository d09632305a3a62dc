//! Tabular regressors over the five per-fire feature means.
//!
//! All fits are deterministic given their seed and all predictions are
//! clipped at zero, since durations cannot be negative.

mod forest;
mod gbt;
mod knn;
mod tree;

use serde::{Deserialize, Serialize};

use crate::data::Feature;
use crate::{Error, Result};

pub use forest::{fit_random_forest, ForestModel, ForestParams};
pub use gbt::{fit_gbt, GbtModel, GbtParams};
pub use knn::{euclidean, fit_knn, predict_knn, KnnModel};
pub use tree::{best_split, fit_tree, Row, SplitChoice, TreeNode, TreeParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TabularModel {
    Forest(ForestModel),
    Knn(KnnModel),
    Gbt(GbtModel),
}

impl TabularModel {
    pub fn predict(&self, x: &[f64; Feature::COUNT]) -> f64 {
        match self {
            TabularModel::Forest(m) => m.predict(x),
            TabularModel::Knn(m) => predict_knn(m, x),
            TabularModel::Gbt(m) => m.predict(x),
        }
    }

    /// Self-describing JSON text; floats round-trip exactly.
    pub fn to_text(&self) -> String {
        serde_json::to_string(self).expect("tabular models serialise")
    }

    pub fn from_text(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::invalid(format!("bad tabular model text: {e}")))
    }
}

/// Total split gain per feature over all trees, normalised to sum to one.
///
/// A model without any split gets the uniform vector.
pub fn feature_importance(model: &TabularModel) -> Result<[f64; Feature::COUNT]> {
    let trees = match model {
        TabularModel::Forest(m) => &m.trees,
        TabularModel::Gbt(m) => &m.trees,
        TabularModel::Knn(_) => {
            return Err(Error::UnsupportedModel("feature importance needs a tree-based model".into()))
        }
    };
    let mut acc = [0.0; Feature::COUNT];
    for t in trees {
        t.accumulate_importance(&mut acc);
    }
    let total: f64 = acc.iter().sum();
    if total > 0.0 {
        acc.iter_mut().for_each(|v| *v /= total);
    } else {
        acc = [1.0 / Feature::COUNT as f64; Feature::COUNT];
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::TabularSample;

    fn planted(n: usize) -> Vec<TabularSample> {
        (0..n)
            .map(|i| {
                let f: [f64; 5] = std::array::from_fn(|j| ((i * (j + 3)) as f64 * 0.6180339).fract());
                TabularSample {
                    fire_id: i as u64,
                    features: f,
                    radius_km: 5.0,
                    label: 20.0 * f[0] * f[0],
                }
            })
            .collect()
    }

    #[test]
    fn importance_finds_the_only_informative_feature() {
        let s = planted(80);
        let forest = TabularModel::Forest(fit_random_forest(&s, ForestParams { n_estimators: 10, ..Default::default() }, 1).unwrap());
        let gbt = TabularModel::Gbt(fit_gbt(&s, GbtParams { n_estimators: 10, ..Default::default() }).unwrap());
        for model in [forest, gbt] {
            let imp = feature_importance(&model).unwrap();
            assert!((imp.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(imp[1..].iter().all(|&v| v < imp[0]), "{imp:?}");
        }
    }

    #[test]
    fn importance_of_leaf_only_model_is_uniform() {
        let s = planted(10);
        let model = TabularModel::Gbt(
            fit_gbt(&s, GbtParams { n_estimators: 3, max_depth: 0, ..Default::default() }).unwrap(),
        );
        assert_eq!(feature_importance(&model).unwrap(), [0.2; 5]);
    }

    #[test]
    fn importance_rejects_knn() {
        let model = TabularModel::Knn(fit_knn(&planted(5), 2).unwrap());
        assert!(matches!(feature_importance(&model), Err(Error::UnsupportedModel(_))));
    }

    #[test]
    fn text_round_trip_is_lossless() {
        let s = planted(40);
        let models = [
            TabularModel::Forest(fit_random_forest(&s, ForestParams { n_estimators: 4, ..Default::default() }, 5).unwrap()),
            TabularModel::Gbt(fit_gbt(&s, GbtParams { n_estimators: 4, ..Default::default() }).unwrap()),
            TabularModel::Knn(fit_knn(&s, 3).unwrap()),
        ];
        for m in models {
            let back = TabularModel::from_text(&m.to_text()).unwrap();
            assert_eq!(back, m);
        }
        assert!(TabularModel::from_text("{\"kind\":\"svm\"}").is_err());
    }
}
