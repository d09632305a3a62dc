use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        })
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(Error::invalid(format!("unknown optimizer {other:?} (expected sgd or adam)"))),
        }
    }
}

/// Plain gradient descent: `p -= lr * g`.
pub fn sgd_step(params: &mut [f64], grads: &[f64], learning_rate: f64) {
    assert_eq!(params.len(), grads.len(), "parameter and gradient lengths differ");
    for (p, g) in params.iter_mut().zip(grads) {
        *p -= learning_rate * g;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

/// One bias-corrected Adam update. Moments are allocated on first use.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, hyper: &AdamHyper) {
    assert_eq!(params.len(), grads.len(), "parameter and gradient lengths differ");
    if state.m.is_empty() {
        state.m = vec![0.0; params.len()];
        state.v = vec![0.0; params.len()];
    }
    assert_eq!(state.m.len(), params.len(), "optimizer state belongs to another parameter set");
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - hyper.beta1.powi(t);
    let c2 = 1.0 - hyper.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = hyper.beta1 * state.m[i] + (1.0 - hyper.beta1) * g;
        state.v[i] = hyper.beta2 * state.v[i] + (1.0 - hyper.beta2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= hyper.learning_rate * m_hat / (v_hat.sqrt() + hyper.epsilon);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Optimizer {
    Sgd { learning_rate: f64 },
    Adam { hyper: AdamHyper, state: AdamState },
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Self {
        match kind {
            OptimizerKind::Sgd => Optimizer::Sgd { learning_rate },
            OptimizerKind::Adam => Optimizer::Adam {
                hyper: AdamHyper {
                    learning_rate,
                    ..AdamHyper::default()
                },
                state: AdamState::default(),
            },
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        match self {
            Optimizer::Sgd { learning_rate } => sgd_step(params, grads, *learning_rate),
            Optimizer::Adam { hyper, state } => adam_step(params, grads, state, hyper),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut p = vec![1.5, -2.0];
        sgd_step(&mut p, &[0.0, 0.0], 0.1);
        assert_eq!(p, vec![1.5, -2.0]);
        let mut state = AdamState::default();
        for _ in 0..3 {
            adam_step(&mut p, &[0.0, 0.0], &mut state, &AdamHyper::default());
        }
        assert_eq!(p, vec![1.5, -2.0]);
        assert_eq!(state.step, 3);
    }

    #[test]
    fn sgd_scalar_step() {
        let mut p = vec![1.0];
        sgd_step(&mut p, &[2.0], 0.1);
        assert!((p[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        for g in [3.0, -0.02, 250.0] {
            let mut p = vec![0.0];
            let hyper = AdamHyper {
                learning_rate: 0.01,
                ..AdamHyper::default()
            };
            adam_step(&mut p, &[g], &mut AdamState::default(), &hyper);
            // m_hat = g and v_hat = g^2, so the step is lr * |g| / (|g| + eps).
            let expected = -0.01 * g / (g.abs() + 1e-8);
            assert!((p[0] - expected).abs() < 1e-12);
            assert!((p[0].abs() - 0.01).abs() < 1e-6);
        }
    }

    #[test]
    fn parses_names() {
        assert_eq!("Adam".parse::<OptimizerKind>().unwrap(), OptimizerKind::Adam);
        assert_eq!("sgd".parse::<OptimizerKind>().unwrap(), OptimizerKind::Sgd);
        assert!("rmsprop".parse::<OptimizerKind>().is_err());
    }
}
