//! Exhaustive grid search.
//!
//! Every configuration of the Cartesian product is trained on the training
//! set and scored on the evaluation set. Passing the test split (as the CLI
//! does) tunes on test data; a held-out validation split avoids that leak.
//!
//! Results file: UTF-8 CSV headed `index,<params..>,relative_rmse,worst_case_accuracy`
//! with one row per configuration, then a blank line and the same header
//! with the single best row.

use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::evaluation::{accuracy_curve, relative_rmse, worst_case_accuracy, DEFAULT_STEP_DAYS};
use crate::fsutil::write_atomic;
use crate::pipeline::{fit, Family, ModelConfig, PrepConfig, PreparedSet};
use crate::{rng, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMetric {
    /// Lower is better.
    #[default]
    RelativeRmse,
    /// Higher is better.
    WorstCaseAccuracy,
}

impl fmt::Display for SelectionMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SelectionMetric::RelativeRmse => "relative_rmse",
            SelectionMetric::WorstCaseAccuracy => "worst_case_accuracy",
        })
    }
}

impl FromStr for SelectionMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "relative_rmse" => Ok(SelectionMetric::RelativeRmse),
            "worst_case_accuracy" => Ok(SelectionMetric::WorstCaseAccuracy),
            other => Err(Error::invalid(format!(
                "unknown selection metric {other:?} (expected relative_rmse or worst_case_accuracy)"
            ))),
        }
    }
}

/// Ordered candidate values per parameter, in text form.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpace {
    family: Family,
    params: Vec<(String, Vec<String>)>,
}

fn strings(values: &[&str]) -> Vec<String> {
    values.iter().map(|s| s.to_string()).collect()
}

impl SearchSpace {
    /// Checks every name against the family and every value by parsing it.
    pub fn new(family: Family, params: Vec<(String, Vec<String>)>) -> Result<Self> {
        let mut probe = ModelConfig::default_for(family);
        for (i, (name, values)) in params.iter().enumerate() {
            if params[..i].iter().any(|(n, _)| n == name) {
                return Err(Error::invalid(format!("parameter {name} listed twice")));
            }
            if values.is_empty() {
                return Err(Error::invalid(format!("parameter {name} has no candidate values")));
            }
            for v in values {
                probe.set(name, v)?;
            }
        }
        Ok(SearchSpace { family, params })
    }

    /// The standard search space for a family.
    pub fn default_for(family: Family) -> Self {
        let params = match family {
            Family::Rf => vec![
                ("n_estimators", strings(&["5", "10", "20", "50", "100"])),
                ("max_depth", strings(&["1", "5", "10", "20", "50"])),
            ],
            Family::Knn => vec![("k", strings(&["5", "10", "20", "50"]))],
            Family::Xgboost => vec![
                ("n_estimators", strings(&["5", "10", "20", "50"])),
                ("learning_rate", strings(&["0.05", "0.1", "0.02"])),
                ("max_depth", strings(&["1", "5", "10", "20", "50"])),
            ],
            Family::CnnMulti | Family::CnnEncoder => vec![
                ("batch_size", strings(&["32", "64", "128", "256"])),
                ("epochs", strings(&["10", "20", "50", "100"])),
                ("optimizer", strings(&["sgd", "adam"])),
            ],
        };
        let params = params.into_iter().map(|(n, v)| (n.to_string(), v)).collect();
        SearchSpace::new(family, params).expect("default spaces are valid")
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn params(&self) -> &[(String, Vec<String>)] {
        &self.params
    }

    pub fn size(&self) -> usize {
        self.params.iter().map(|(_, v)| v.len()).product()
    }

    /// Assignments in enumeration order; the last parameter varies fastest.
    pub fn assignments(&self) -> Vec<Vec<String>> {
        let mut out = vec![Vec::new()];
        for (_, values) in &self.params {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    values.iter().map(move |v| {
                        let mut a = prefix.clone();
                        a.push(v.clone());
                        a
                    })
                })
                .collect();
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchRow {
    pub index: usize,
    /// Values in [`SearchSpace::params`] order.
    pub values: Vec<String>,
    pub config: ModelConfig,
    pub relative_rmse: f64,
    pub worst_case_accuracy: f64,
}

impl SearchRow {
    pub fn metric(&self, metric: SelectionMetric) -> f64 {
        match metric {
            SelectionMetric::RelativeRmse => self.relative_rmse,
            SelectionMetric::WorstCaseAccuracy => self.worst_case_accuracy,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub family: Family,
    pub param_names: Vec<String>,
    pub rows: Vec<SearchRow>,
    /// Index into `rows`.
    pub best: usize,
    pub metric: SelectionMetric,
}

impl SearchResult {
    pub fn best_row(&self) -> &SearchRow {
        &self.rows[self.best]
    }

    pub fn to_csv(&self) -> String {
        let mut header = String::from("index");
        for n in &self.param_names {
            header.push(',');
            header.push_str(n);
        }
        header.push_str(",relative_rmse,worst_case_accuracy");
        let row = |out: &mut String, r: &SearchRow| {
            let _ = write!(out, "{}", r.index);
            for v in &r.values {
                let _ = write!(out, ",{v}");
            }
            let _ = writeln!(out, ",{},{}", r.relative_rmse, r.worst_case_accuracy);
        };
        let mut out = String::new();
        let _ = writeln!(out, "{header}");
        for r in &self.rows {
            row(&mut out, r);
        }
        let _ = writeln!(out, "\n{header}");
        row(&mut out, self.best_row());
        out
    }
}

/// Trains and scores every configuration. Configuration `i` is fitted with
/// seed `rng::mix(seed, i)`; ties in the selection metric keep the first.
pub fn grid_search(
    space: &SearchSpace,
    base: &ModelConfig,
    prep: &PrepConfig,
    train: &PreparedSet,
    eval: &PreparedSet,
    seed: u64,
    metric: SelectionMetric,
) -> Result<SearchResult> {
    if base.family() != space.family {
        return Err(Error::invalid(format!(
            "base configuration is {} but the space is for {}",
            base.family(),
            space.family
        )));
    }
    if train.is_empty() || eval.is_empty() {
        return Err(Error::invalid("grid search needs non-empty training and evaluation sets"));
    }
    let mut rows = Vec::with_capacity(space.size());
    for (index, values) in space.assignments().into_iter().enumerate() {
        let mut config = *base;
        for ((name, _), v) in space.params.iter().zip(&values) {
            config.set(name, v)?;
        }
        let (model, _) = fit(&config, prep, train, rng::mix(seed, index as u64))?;
        let preds = model.predict(eval)?;
        let curve = accuracy_curve(&preds, &eval.labels, DEFAULT_STEP_DAYS)?;
        rows.push(SearchRow {
            index,
            values,
            config,
            relative_rmse: relative_rmse(&preds, &eval.labels)?,
            worst_case_accuracy: worst_case_accuracy(&curve)?,
        });
    }
    let mut best = 0;
    for (i, r) in rows.iter().enumerate() {
        let better = match metric {
            SelectionMetric::RelativeRmse => r.relative_rmse < rows[best].relative_rmse,
            SelectionMetric::WorstCaseAccuracy => r.worst_case_accuracy > rows[best].worst_case_accuracy,
        };
        if better {
            best = i;
        }
    }
    Ok(SearchResult {
        family: space.family,
        param_names: space.params.iter().map(|(n, _)| n.clone()).collect(),
        rows,
        best,
        metric,
    })
}

pub fn export_results(result: &SearchResult, path: &Path) -> Result<()> {
    write_atomic(path, result.to_csv().as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_space_sizes() {
        assert_eq!(SearchSpace::default_for(Family::Rf).size(), 25);
        assert_eq!(SearchSpace::default_for(Family::Knn).size(), 4);
        assert_eq!(SearchSpace::default_for(Family::Xgboost).size(), 60);
        assert_eq!(SearchSpace::default_for(Family::CnnMulti).size(), 32);
        assert_eq!(SearchSpace::default_for(Family::CnnEncoder).assignments().len(), 32);
    }

    #[test]
    fn enumeration_order_is_row_major() {
        let space = SearchSpace::new(
            Family::Rf,
            vec![("n_estimators".into(), strings(&["1", "2"])), ("max_depth".into(), strings(&["3", "4", "5"]))],
        )
        .unwrap();
        let a = space.assignments();
        assert_eq!(a[0], strings(&["1", "3"]));
        assert_eq!(a[1], strings(&["1", "4"]));
        assert_eq!(a[3], strings(&["2", "3"]));
    }

    #[test]
    fn rejects_unknown_and_empty_parameters() {
        let bad = SearchSpace::new(Family::Knn, vec![("depth".into(), strings(&["1"]))]);
        assert!(matches!(bad, Err(Error::InvalidArgument(_))));
        assert!(SearchSpace::new(Family::Knn, vec![("k".into(), vec![])]).is_err());
        assert!(SearchSpace::new(Family::Knn, vec![("k".into(), strings(&["x"]))]).is_err());
    }
}
