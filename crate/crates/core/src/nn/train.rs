use rand::seq::SliceRandom;

use super::layers::Shape;
use super::network::{mse_loss, Network};
use super::optim::{Optimizer, OptimizerKind};
use super::tensor::Tensor;
use crate::{rng, Error, Result};

/// Samples per forward/backward pass. Gradients of a batch are accumulated
/// over micro-batches, so this bounds memory without changing the update.
const MICRO_BATCH: usize = 16;

const SHUFFLE_SALT: u64 = 0x5348_5546;
const DROPOUT_SALT: u64 = 0x4452_4f50;

/// One training sample: a flat CHW buffer per network input, plus the target.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub inputs: Vec<Vec<f64>>,
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 128,
            epochs: 50,
            optimizer: OptimizerKind::Adam,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean training-mode squared error of each epoch, one entry per epoch.
    pub loss_history: Vec<f64>,
    pub warnings: Vec<String>,
}

fn input_shape_vec(shape: Shape, batch: usize) -> Vec<usize> {
    match shape {
        Shape::Image { c, h, w } => vec![batch, c, h, w],
        Shape::Flat(n) => vec![batch, n],
    }
}

/// Stacks the selected examples into one tensor per network input.
pub fn batch_inputs(net: &Network, examples: &[&Example]) -> Result<Vec<Tensor>> {
    let shapes = net.input_shapes();
    let mut out = Vec::with_capacity(shapes.len());
    for (b, &shape) in shapes.iter().enumerate() {
        let mut values = Vec::with_capacity(examples.len() * shape.len());
        for ex in examples {
            let x = ex.inputs.get(b).ok_or_else(|| Error::Shape {
                layer: format!("input {b}"),
                message: format!("example has {} inputs, network expects {}", ex.inputs.len(), shapes.len()),
            })?;
            if x.len() != shape.len() {
                return Err(Error::Shape {
                    layer: format!("input {b}"),
                    message: format!("example input has {} values, expected {shape} = {}", x.len(), shape.len()),
                });
            }
            values.extend_from_slice(x);
        }
        out.push(Tensor::new(input_shape_vec(shape, examples.len()), values)?);
    }
    Ok(out)
}

/// Trains with seeded per-epoch shuffling and mean-squared-error loss.
///
/// A batch size larger than the dataset falls back to one full batch and
/// adds a warning to the report.
pub fn train(net: &mut Network, data: &[Example], config: &TrainConfig) -> Result<TrainReport> {
    if data.is_empty() {
        return Err(Error::invalid("training needs at least one example"));
    }
    if config.batch_size == 0 || config.epochs == 0 {
        return Err(Error::invalid("batch size and epochs must be at least 1"));
    }
    if !(config.learning_rate.is_finite() && config.learning_rate >= 0.0) {
        return Err(Error::invalid("learning rate must be finite and non-negative"));
    }
    if net.output_shape() != Shape::Flat(1) {
        return Err(Error::invalid(format!("training needs a scalar output, network gives {}", net.output_shape())));
    }
    let mut warnings = Vec::new();
    let batch_size = if config.batch_size > data.len() {
        warnings.push(format!(
            "batch size {} exceeds {} examples; using one full batch",
            config.batch_size,
            data.len()
        ));
        data.len()
    } else {
        config.batch_size
    };

    let mut optimizer = Optimizer::new(config.optimizer, config.learning_rate);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut per_sample = vec![0.0; data.len()];
    let mut loss_history = Vec::with_capacity(config.epochs);
    let mut pass = 0u64;
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng::stream(rng::mix(config.seed, SHUFFLE_SALT), epoch as u64));
        for batch in order.chunks(batch_size) {
            let mut grads = vec![0.0; net.n_params()];
            for micro in batch.chunks(MICRO_BATCH) {
                let examples: Vec<&Example> = micro.iter().map(|&i| &data[i]).collect();
                let inputs = batch_inputs(net, &examples)?;
                let dropout_seed = rng::mix(rng::mix(config.seed, DROPOUT_SALT), pass);
                pass += 1;
                let (pred, cache) = net.forward(&inputs, true, dropout_seed)?;
                let targets: Vec<f64> = examples.iter().map(|e| e.target).collect();
                let (_, mut grad) = mse_loss(&pred, &targets)?;
                for ((&i, p), t) in micro.iter().zip(pred.values()).zip(&targets) {
                    per_sample[i] = (p - t) * (p - t);
                }
                // Rescale the micro-batch mean gradient to the full batch mean.
                let scale = micro.len() as f64 / batch.len() as f64;
                let grad_values: Vec<f64> = grad.values().iter().map(|g| g * scale).collect();
                grad = Tensor::new(grad.shape().to_vec(), grad_values)?;
                let g = net.backward(&cache, &grad)?;
                for (acc, v) in grads.iter_mut().zip(&g.params) {
                    *acc += v;
                }
            }
            optimizer.step(net.params_mut(), &grads);
        }
        loss_history.push(per_sample.iter().sum::<f64>() / data.len() as f64);
    }
    Ok(TrainReport { loss_history, warnings })
}

/// Inference-mode predictions, one per example, in input order.
pub fn predict_examples(net: &Network, data: &[Example]) -> Result<Vec<f64>> {
    if net.output_shape() != Shape::Flat(1) {
        return Err(Error::invalid(format!("prediction needs a scalar output, network gives {}", net.output_shape())));
    }
    let mut out = Vec::with_capacity(data.len());
    for chunk in data.chunks(MICRO_BATCH) {
        let examples: Vec<&Example> = chunk.iter().collect();
        let pred = net.predict(&batch_inputs(net, &examples)?)?;
        out.extend_from_slice(pred.values());
    }
    Ok(out)
}
