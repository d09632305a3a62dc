//! Duration metrics and the plot-data report file.
//!
//! Report file: UTF-8 CSV with two sections separated by one blank line.
//! The first is headed `pred,label` with one row per fire; the second is
//! headed `critical_value,accuracy` with one row per curve point.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::fsutil::{read, write_atomic};
use crate::{Error, Result};

/// Floor on the ratio denominator in [`relative_rmse`].
pub const RATIO_EPSILON: f64 = 1e-9;
pub const DEFAULT_STEP_DAYS: f64 = 1.0;

const PAIRS_HEADER: &str = "pred,label";
const CURVE_HEADER: &str = "critical_value,accuracy";

/// Which value divides the absolute residual in [`relative_rmse_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Denominator {
    #[default]
    Prediction,
    Label,
}

fn check_pairs(preds: &[f64], labels: &[f64]) -> Result<()> {
    if preds.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} predictions but {} labels",
            preds.len(),
            labels.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::invalid("metrics need at least one prediction"));
    }
    if let Some(p) = preds.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
        return Err(Error::invalid(format!("predictions must be finite and >= 0, got {p}")));
    }
    if let Some(l) = labels.iter().find(|l| !l.is_finite()) {
        return Err(Error::invalid(format!("labels must be finite, got {l}")));
    }
    Ok(())
}

/// `sqrt(mean(|label - pred| / max(|pred|, 1e-9)))`.
///
/// Despite the name there is no square inside the mean; the residual is
/// divided by the prediction. [`relative_rmse_with`] can divide by the label.
pub fn relative_rmse(preds: &[f64], labels: &[f64]) -> Result<f64> {
    relative_rmse_with(preds, labels, Denominator::Prediction)
}

pub fn relative_rmse_with(preds: &[f64], labels: &[f64], denominator: Denominator) -> Result<f64> {
    check_pairs(preds, labels)?;
    let sum: f64 = preds
        .iter()
        .zip(labels)
        .map(|(&p, &d)| {
            let base = match denominator {
                Denominator::Prediction => p,
                Denominator::Label => d,
            };
            (d - p).abs() / base.abs().max(RATIO_EPSILON)
        })
        .sum();
    Ok((sum / preds.len() as f64).sqrt())
}

/// Ordinary root mean squared error, in days.
pub fn rmse_std(preds: &[f64], labels: &[f64]) -> Result<f64> {
    check_pairs(preds, labels)?;
    let sse: f64 = preds.iter().zip(labels).map(|(p, d)| (d - p) * (d - p)).sum();
    Ok((sse / preds.len() as f64).sqrt())
}

/// `1 - SS_res / SS_tot`.
pub fn r2_score(preds: &[f64], labels: &[f64]) -> Result<f64> {
    if preds.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} predictions but {} labels",
            preds.len(),
            labels.len()
        )));
    }
    if labels.len() < 2 {
        return Err(Error::UndefinedScore("r2 needs at least two samples".into()));
    }
    let mean = labels.iter().sum::<f64>() / labels.len() as f64;
    let ss_tot: f64 = labels.iter().map(|d| (d - mean) * (d - mean)).sum();
    if ss_tot == 0.0 {
        return Err(Error::UndefinedScore("labels have zero variance".into()));
    }
    let ss_res: f64 = preds.iter().zip(labels).map(|(p, d)| (d - p) * (d - p)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub critical_value: f64,
    pub accuracy: f64,
}

/// Accuracy at critical values `0, step, 2 step, ..` up to the largest label.
///
/// At critical value `c` only fires lasting at least `c` days are assessed;
/// a prediction counts as true when it also reaches `c`. Points with no
/// assessed fire are omitted.
pub fn accuracy_curve(preds: &[f64], labels: &[f64], step_days: f64) -> Result<Vec<CurvePoint>> {
    check_pairs(preds, labels)?;
    if !(step_days.is_finite() && step_days > 0.0) {
        return Err(Error::invalid(format!("curve step must be positive, got {step_days}")));
    }
    let max_label = labels.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut curve = Vec::new();
    for k in 0u64.. {
        let c = k as f64 * step_days;
        if c > max_label {
            break;
        }
        let (mut assessed, mut hits) = (0usize, 0usize);
        for (&p, &d) in preds.iter().zip(labels) {
            if d >= c {
                assessed += 1;
                hits += usize::from(p >= c);
            }
        }
        if assessed > 0 {
            curve.push(CurvePoint {
                critical_value: c,
                accuracy: hits as f64 / assessed as f64,
            });
        }
    }
    Ok(curve)
}

/// Lowest accuracy on the curve.
pub fn worst_case_accuracy(curve: &[CurvePoint]) -> Result<f64> {
    curve
        .iter()
        .map(|p| p.accuracy)
        .reduce(f64::min)
        .ok_or_else(|| Error::invalid("accuracy curve is empty"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub predictions: Vec<f64>,
    pub labels: Vec<f64>,
    pub relative_rmse: f64,
    pub rmse_std: f64,
    /// `None` when the score is undefined (fewer than two fires or constant labels).
    pub r2: Option<f64>,
    pub accuracy_curve: Vec<CurvePoint>,
    pub worst_case_accuracy: f64,
}

impl EvaluationReport {
    pub fn compute(preds: &[f64], labels: &[f64], step_days: f64) -> Result<Self> {
        let curve = accuracy_curve(preds, labels, step_days)?;
        Self::from_parts(preds.to_vec(), labels.to_vec(), curve)
    }

    fn from_parts(predictions: Vec<f64>, labels: Vec<f64>, accuracy_curve: Vec<CurvePoint>) -> Result<Self> {
        let r2 = match r2_score(&predictions, &labels) {
            Ok(v) => Some(v),
            Err(Error::UndefinedScore(_)) => None,
            Err(e) => return Err(e),
        };
        Ok(EvaluationReport {
            relative_rmse: relative_rmse(&predictions, &labels)?,
            rmse_std: rmse_std(&predictions, &labels)?,
            r2,
            worst_case_accuracy: worst_case_accuracy(&accuracy_curve)?,
            predictions,
            labels,
            accuracy_curve,
        })
    }

    pub fn to_csv(&self) -> Result<String> {
        if self.accuracy_curve.is_empty() {
            return Err(Error::invalid("cannot export a report with an empty accuracy curve"));
        }
        let mut out = String::new();
        out.push_str(PAIRS_HEADER);
        out.push('\n');
        for (p, d) in self.predictions.iter().zip(&self.labels) {
            let _ = writeln!(out, "{p},{d}");
        }
        out.push('\n');
        out.push_str(CURVE_HEADER);
        out.push('\n');
        for point in &self.accuracy_curve {
            let _ = writeln!(out, "{},{}", point.critical_value, point.accuracy);
        }
        Ok(out)
    }

    /// Parses [`EvaluationReport::to_csv`] output and recomputes the scalars.
    pub fn from_csv(text: &str, path: &Path) -> Result<Self> {
        let parse_err = |line: usize, field: &str, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            field: field.to_string(),
            message,
        };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut section = |header: &str, a: &str, b: &str| -> Result<Vec<(f64, f64)>> {
            match lines.next() {
                Some((_, h)) if h.trim() == header => {}
                Some((n, h)) => return Err(parse_err(n, "<header>", format!("expected {header:?}, got {h:?}"))),
                None => return Err(parse_err(0, "<header>", format!("missing section {header:?}"))),
            }
            let mut rows = Vec::new();
            for (n, line) in lines.by_ref() {
                if line.trim().is_empty() {
                    break;
                }
                let (x, y) = line
                    .split_once(',')
                    .ok_or_else(|| parse_err(n, a, "expected two comma-separated values".into()))?;
                let num = |s: &str, field: &str| {
                    s.trim()
                        .parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| parse_err(n, field, format!("not a finite number: {s:?}")))
                };
                rows.push((num(x, a)?, num(y, b)?));
            }
            Ok(rows)
        };
        let pairs = section(PAIRS_HEADER, "pred", "label")?;
        let curve = section(CURVE_HEADER, "critical_value", "accuracy")?;
        if curve.is_empty() {
            return Err(Error::invalid(format!("{}: accuracy curve is empty", path.display())));
        }
        let (predictions, labels) = pairs.into_iter().unzip();
        let accuracy_curve = curve
            .into_iter()
            .map(|(critical_value, accuracy)| CurvePoint { critical_value, accuracy })
            .collect();
        Self::from_parts(predictions, labels, accuracy_curve)
    }
}

pub fn export_report(report: &EvaluationReport, path: &Path) -> Result<()> {
    write_atomic(path, report.to_csv()?.as_bytes())
}

pub fn import_report(path: &Path) -> Result<EvaluationReport> {
    let bytes = read(path)?;
    let text = String::from_utf8(bytes).map_err(|_| Error::invalid(format!("{}: not UTF-8", path.display())))?;
    EvaluationReport::from_csv(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_rmse_examples() {
        assert_eq!(relative_rmse(&[1.0, 4.0], &[1.0, 4.0]).unwrap(), 0.0);
        assert!((relative_rmse(&[2.0], &[3.0]).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((relative_rmse_with(&[2.0], &[4.0], Denominator::Label).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        assert!(relative_rmse(&[1.0], &[1.0, 2.0]).is_err());
        assert!(relative_rmse(&[-1.0], &[1.0]).is_err());
        // Zero prediction falls back to the epsilon floor.
        assert!((relative_rmse(&[0.0], &[1e-9]).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn r2_examples() {
        assert_eq!(r2_score(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert_eq!(r2_score(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert_eq!(r2_score(&[1.0, 2.0, 5.0], &[1.0, 2.0, 3.0]).unwrap(), -1.0);
        assert!(matches!(r2_score(&[1.0, 2.0], &[4.0, 4.0]), Err(Error::UndefinedScore(_))));
        assert!(matches!(r2_score(&[1.0], &[4.0]), Err(Error::UndefinedScore(_))));
    }

    #[test]
    fn accuracy_examples() {
        let at = |curve: &[CurvePoint], c: f64| curve.iter().find(|p| p.critical_value == c).unwrap().accuracy;
        let labels = [5.0, 20.0, 30.0];
        let curve = accuracy_curve(&[1.0, 25.0, 28.0], &labels, 1.0).unwrap();
        assert_eq!(at(&curve, 10.0), 1.0);
        assert_eq!(at(&curve, 0.0), 1.0);
        assert_eq!(curve.len(), 31);
        let curve = accuracy_curve(&[1.0, 5.0, 28.0], &labels, 1.0).unwrap();
        assert_eq!(at(&curve, 10.0), 0.5);
        assert!(accuracy_curve(&[1.0], &[1.0], 0.0).is_err());
    }

    #[test]
    fn worst_case_is_minimum() {
        let pts = |v: &[f64]| -> Vec<CurvePoint> {
            v.iter()
                .enumerate()
                .map(|(i, &a)| CurvePoint { critical_value: i as f64, accuracy: a })
                .collect()
        };
        assert_eq!(worst_case_accuracy(&pts(&[0.8, 0.8, 0.8])).unwrap(), 0.8);
        assert_eq!(worst_case_accuracy(&pts(&[1.0, 0.57, 0.9])).unwrap(), 0.57);
        assert!(worst_case_accuracy(&[]).is_err());
    }
}
