use std::fmt::Write as _;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::layers::{LayerSpec, Padding, Shape};
use super::ops::{self, ConvGeom, PoolGeom};
use super::tensor::Tensor;
use crate::{rng, Error, Result};

/// Stream id for initialisation; dropout streams use layer indices.
const INIT_STREAM: u64 = u64::MAX;

static STAMPS: AtomicU64 = AtomicU64::new(1);

fn next_stamp() -> u64 {
    STAMPS.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchSpec {
    pub input: Shape,
    pub layers: Vec<LayerSpec>,
}

/// One or more input branches followed by a shared head.
///
/// With several branches the head must start with [`LayerSpec::Concatenate`],
/// which joins the flat branch outputs in branch order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub branches: Vec<BranchSpec>,
    pub head: Vec<LayerSpec>,
}

impl NetworkSpec {
    pub fn sequential(input: Shape, layers: Vec<LayerSpec>) -> Self {
        NetworkSpec {
            branches: vec![BranchSpec { input, layers }],
            head: Vec::new(),
        }
    }

    /// Computed per-layer shapes, in branch order then head order.
    pub fn layers(&self) -> Result<Vec<LayerInfo>> {
        let plan = Plan::compile(self)?;
        Ok(plan.nodes().map(Node::info).collect())
    }

    pub fn output_shape(&self) -> Result<Shape> {
        Ok(Plan::compile(self)?.output)
    }

    pub fn n_params(&self) -> Result<usize> {
        Ok(Plan::compile(self)?.n_params)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerInfo {
    /// Position label such as `branch 1 layer 3` or `head layer 0`.
    pub label: String,
    pub spec: LayerSpec,
    pub input: Shape,
    pub output: Shape,
    pub n_params: usize,
}

#[derive(Debug, Clone)]
struct Node {
    spec: LayerSpec,
    label: String,
    input: Shape,
    output: Shape,
    /// Weights start here, biases follow them.
    offset: usize,
    n_weights: usize,
    n_bias: usize,
    /// Global position, used as the dropout stream id.
    index: u64,
}

impl Node {
    fn info(&self) -> LayerInfo {
        LayerInfo {
            label: self.label.clone(),
            spec: self.spec,
            input: self.input,
            output: self.output,
            n_params: self.n_weights + self.n_bias,
        }
    }

    fn conv_geom(&self) -> ConvGeom {
        let (LayerSpec::Conv2d { kernel, padding, .. }, Shape::Image { c, h, w }, Shape::Image { c: oc, h: oh, w: ow }) =
            (self.spec, self.input, self.output)
        else {
            unreachable!("conv node with non-image shapes")
        };
        let pad = match padding {
            Padding::Valid => 0,
            Padding::Same => kernel / 2,
        };
        ConvGeom { c, h, w, oc, k: kernel, pad, oh, ow }
    }

    fn pool_geom(&self) -> PoolGeom {
        let (LayerSpec::MaxPool2d { window, .. }, Shape::Image { c, h, w }, Shape::Image { h: oh, w: ow, .. }) =
            (self.spec, self.input, self.output)
        else {
            unreachable!("pool node with non-image shapes")
        };
        PoolGeom { c, h, w, win: window, oh, ow }
    }
}

#[derive(Debug, Clone)]
struct Plan {
    branches: Vec<Vec<Node>>,
    head: Vec<Node>,
    /// Whether `head[0]` is the concatenate layer.
    concat: bool,
    branch_out: Vec<usize>,
    n_params: usize,
    output: Shape,
}

impl Plan {
    fn compile(spec: &NetworkSpec) -> Result<Plan> {
        if spec.branches.is_empty() {
            return Err(Error::invalid("network needs at least one input branch"));
        }
        let mut offset = 0;
        let mut index = 0;
        let mut push = |spec: LayerSpec, label: String, input: Shape, nodes: &mut Vec<Node>| -> Result<Shape> {
            let output = spec.output_shape(input, &label)?;
            let (n_weights, n_bias) = match (spec, input) {
                (LayerSpec::Conv2d { kernel, out_channels, .. }, Shape::Image { c, .. }) => {
                    (out_channels * c * kernel * kernel, out_channels)
                }
                (LayerSpec::Dense { units }, _) => (units * input.len(), units),
                _ => (0, 0),
            };
            nodes.push(Node { spec, label, input, output, offset, n_weights, n_bias, index });
            offset += n_weights + n_bias;
            index += 1;
            Ok(output)
        };

        let multi = spec.branches.len() > 1;
        let mut branches = Vec::with_capacity(spec.branches.len());
        let mut outs = Vec::with_capacity(spec.branches.len());
        for (b, branch) in spec.branches.iter().enumerate() {
            if branch.input.is_empty() {
                return Err(Error::Shape {
                    layer: format!("branch {b} input"),
                    message: "input shape has no elements".into(),
                });
            }
            let mut nodes = Vec::new();
            let mut shape = branch.input;
            for (i, &layer) in branch.layers.iter().enumerate() {
                let label = if multi { format!("branch {b} layer {i}") } else { format!("layer {i}") };
                shape = push(layer, label, shape, &mut nodes)?;
            }
            branches.push(nodes);
            outs.push(shape);
        }

        let concat = spec.head.first() == Some(&LayerSpec::Concatenate);
        if multi && !concat {
            return Err(Error::Shape {
                layer: "head layer 0".into(),
                message: "several branches must be joined by a concatenate layer".into(),
            });
        }
        let mut shape = if concat {
            for (b, s) in outs.iter().enumerate() {
                if let Shape::Image { .. } = s {
                    return Err(Error::Shape {
                        layer: "head layer 0".into(),
                        message: format!("branch {b} output {s} must be flattened before concatenation"),
                    });
                }
            }
            Shape::Flat(outs.iter().map(Shape::len).sum())
        } else {
            outs[0]
        };
        let mut head = Vec::new();
        for (i, &layer) in spec.head.iter().enumerate().skip(usize::from(concat)) {
            let label = if multi { format!("head layer {i}") } else { format!("layer {}", spec.branches[0].layers.len() + i) };
            shape = push(layer, label, shape, &mut head)?;
        }
        if let Shape::Image { .. } = shape {
            return Err(Error::Shape {
                layer: "output".into(),
                message: format!("network output {shape} must be flat"),
            });
        }
        Ok(Plan {
            branches,
            head,
            concat,
            branch_out: outs.iter().map(Shape::len).collect(),
            n_params: offset,
            output: shape,
        })
    }

    fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.branches.iter().flatten().chain(&self.head)
    }
}

/// Saved state needed to differentiate one layer.
#[derive(Debug, Clone)]
enum Saved {
    Input(Vec<f64>),
    Argmax(Vec<u32>),
    Mask(Option<Vec<f64>>),
    Nothing,
}

/// Activations recorded by [`Network::forward`]; valid only until the
/// network's parameters next change.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    stamp: u64,
    batch: usize,
    branches: Vec<Vec<Saved>>,
    head: Vec<Saved>,
}

impl ForwardCache {
    pub fn batch(&self) -> usize {
        self.batch
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    /// Same layout as [`Network::params`].
    pub params: Vec<f64>,
    /// Per-branch input gradients; empty unless requested.
    pub inputs: Vec<Tensor>,
}

#[derive(Debug, Clone)]
pub struct Network {
    spec: NetworkSpec,
    plan: Plan,
    params: Vec<f64>,
    stamp: u64,
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec && self.params == other.params
    }
}

impl Network {
    /// He-uniform weights (limit `sqrt(6 / fan_in)`) drawn from `seed`; zero biases.
    pub fn new(spec: NetworkSpec, seed: u64) -> Result<Network> {
        let plan = Plan::compile(&spec)?;
        let mut params = vec![0.0; plan.n_params];
        let mut rng = rng::stream(seed, INIT_STREAM);
        for node in plan.nodes().filter(|n| n.n_weights > 0) {
            let fan_in = node.n_weights / node.n_bias;
            let limit = (6.0 / fan_in as f64).sqrt();
            for w in &mut params[node.offset..node.offset + node.n_weights] {
                *w = rng.gen_range(-limit..limit);
            }
        }
        Ok(Network { spec, plan, params, stamp: next_stamp() })
    }

    pub fn from_parts(spec: NetworkSpec, params: Vec<f64>) -> Result<Network> {
        let plan = Plan::compile(&spec)?;
        if params.len() != plan.n_params {
            return Err(Error::invalid(format!(
                "network needs {} parameters, got {}",
                plan.n_params,
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("network parameters must be finite"));
        }
        Ok(Network { spec, plan, params, stamp: next_stamp() })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Mutable parameter access; invalidates every outstanding cache.
    pub fn params_mut(&mut self) -> &mut [f64] {
        self.stamp = next_stamp();
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn input_shapes(&self) -> Vec<Shape> {
        self.spec.branches.iter().map(|b| b.input).collect()
    }

    pub fn output_shape(&self) -> Shape {
        self.plan.output
    }

    pub fn layers(&self) -> Vec<LayerInfo> {
        self.plan.nodes().map(Node::info).collect()
    }

    /// Human-readable table of layers, output shapes and parameter counts.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<20} {:<12} {:<18} {:>10}", "position", "layer", "output", "params");
        for (b, branch) in self.spec.branches.iter().enumerate() {
            let _ = writeln!(out, "{:<20} {:<12} {:<18} {:>10}", format!("input {b}"), "input", branch.input.to_string(), 0);
            for node in &self.plan.branches[b] {
                summary_row(&mut out, node);
            }
        }
        if self.plan.concat {
            let width: usize = self.plan.branch_out.iter().sum();
            let _ = writeln!(out, "{:<20} {:<12} {:<18} {:>10}", "head layer 0", "concatenate", width, 0);
        }
        for node in &self.plan.head {
            summary_row(&mut out, node);
        }
        let _ = writeln!(out, "total parameters: {}", self.params.len());
        out
    }

    fn check_inputs(&self, inputs: &[Tensor]) -> Result<usize> {
        if inputs.len() != self.spec.branches.len() {
            return Err(Error::Shape {
                layer: "input".into(),
                message: format!("expected {} input tensors, got {}", self.spec.branches.len(), inputs.len()),
            });
        }
        let batch = inputs[0].batch();
        for (b, (t, branch)) in inputs.iter().zip(&self.spec.branches).enumerate() {
            let expected = match branch.input {
                Shape::Image { c, h, w } => vec![batch, c, h, w],
                Shape::Flat(n) => vec![batch, n],
            };
            if t.shape() != expected {
                let layer = self.plan.branches[b]
                    .first()
                    .map_or_else(|| format!("input {b}"), |n| n.label.clone());
                return Err(Error::Shape {
                    layer,
                    message: format!("expected input {expected:?}, got {:?}", t.shape()),
                });
            }
        }
        if batch == 0 {
            return Err(Error::invalid("batch must contain at least one sample"));
        }
        Ok(batch)
    }

    /// Runs the network on a batch. Dropout is active only when `training`,
    /// with masks drawn from `seed`.
    pub fn forward(&self, inputs: &[Tensor], training: bool, seed: u64) -> Result<(Tensor, ForwardCache)> {
        let batch = self.check_inputs(inputs)?;
        let mut cache = ForwardCache {
            stamp: self.stamp,
            batch,
            branches: Vec::with_capacity(inputs.len()),
            head: Vec::new(),
        };
        let out = self.run(inputs, batch, training, seed, Some(&mut cache));
        Ok((out, cache))
    }

    /// Inference-mode forward pass without recording activations.
    pub fn predict(&self, inputs: &[Tensor]) -> Result<Tensor> {
        let batch = self.check_inputs(inputs)?;
        Ok(self.run(inputs, batch, false, 0, None))
    }

    fn run(&self, inputs: &[Tensor], batch: usize, training: bool, seed: u64, mut cache: Option<&mut ForwardCache>) -> Tensor {
        let mut outs = Vec::with_capacity(inputs.len());
        for (nodes, t) in self.plan.branches.iter().zip(inputs) {
            let mut saved = Vec::new();
            let keep = cache.as_ref().map(|_| &mut saved);
            outs.push(self.run_chain(nodes, t.values().to_vec(), batch, training, seed, keep));
            if let Some(c) = cache.as_deref_mut() {
                c.branches.push(saved);
            }
        }
        let x = if self.plan.concat { concat(&outs, &self.plan.branch_out, batch) } else { outs.pop().expect("one branch") };
        let mut saved = Vec::new();
        let keep = cache.as_ref().map(|_| &mut saved);
        let y = self.run_chain(&self.plan.head, x, batch, training, seed, keep);
        if let Some(c) = cache {
            c.head = saved;
        }
        Tensor::from_raw(vec![batch, self.plan.output.len()], y)
    }

    fn run_chain(
        &self,
        nodes: &[Node],
        mut x: Vec<f64>,
        batch: usize,
        training: bool,
        seed: u64,
        mut saved: Option<&mut Vec<Saved>>,
    ) -> Vec<f64> {
        for node in nodes {
            let (y, s) = self.apply(node, x, batch, training, seed);
            if let Some(saved) = saved.as_deref_mut() {
                saved.push(s);
            }
            x = y;
        }
        x
    }

    fn weights(&self, node: &Node) -> (&[f64], &[f64]) {
        let w = &self.params[node.offset..node.offset + node.n_weights];
        let b = &self.params[node.offset + node.n_weights..node.offset + node.n_weights + node.n_bias];
        (w, b)
    }

    fn apply(&self, node: &Node, x: Vec<f64>, batch: usize, training: bool, seed: u64) -> (Vec<f64>, Saved) {
        match node.spec {
            LayerSpec::Conv2d { .. } => {
                let (w, b) = self.weights(node);
                let y = ops::conv_forward(&x, &node.conv_geom(), w, b, batch);
                (y, Saved::Input(x))
            }
            LayerSpec::MaxPool2d { .. } => {
                let (y, arg) = ops::maxpool_forward(&x, &node.pool_geom(), batch);
                (y, Saved::Argmax(arg))
            }
            LayerSpec::Dense { units } => {
                let (w, b) = self.weights(node);
                let y = ops::dense_forward(&x, node.input.len(), units, w, b, batch);
                (y, Saved::Input(x))
            }
            LayerSpec::Relu => {
                let y = x.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
                (y, Saved::Input(x))
            }
            LayerSpec::LeakyRelu { alpha } => {
                let y = x.iter().map(|&v| if v > 0.0 { v } else { alpha * v }).collect();
                (y, Saved::Input(x))
            }
            LayerSpec::Dropout { rate } if training && rate > 0.0 => {
                let mut rng = rng::stream(seed, node.index);
                let keep = 1.0 / (1.0 - rate);
                let mask: Vec<f64> = (0..x.len())
                    .map(|_| if rng.gen::<f64>() >= rate { keep } else { 0.0 })
                    .collect();
                let y = x.iter().zip(&mask).map(|(v, m)| v * m).collect();
                (y, Saved::Mask(Some(mask)))
            }
            LayerSpec::Dropout { .. } => (x, Saved::Mask(None)),
            LayerSpec::Flatten => (x, Saved::Nothing),
            LayerSpec::Concatenate => unreachable!("concatenate is handled by the plan"),
        }
    }

    /// Parameter gradients of a scalar loss whose gradient with respect to
    /// the network output is `grad_out`.
    pub fn backward(&self, cache: &ForwardCache, grad_out: &Tensor) -> Result<Gradients> {
        self.backward_impl(cache, grad_out, false)
    }

    /// Like [`Network::backward`], also returning gradients for every input.
    pub fn backward_with_inputs(&self, cache: &ForwardCache, grad_out: &Tensor) -> Result<Gradients> {
        self.backward_impl(cache, grad_out, true)
    }

    fn backward_impl(&self, cache: &ForwardCache, grad_out: &Tensor, want_inputs: bool) -> Result<Gradients> {
        if cache.stamp != self.stamp {
            return Err(Error::InvalidState(
                "forward cache is stale: parameters changed since it was recorded, or it belongs to another network".into(),
            ));
        }
        let batch = cache.batch;
        let expected = [batch, self.plan.output.len()];
        if grad_out.shape() != expected {
            return Err(Error::Shape {
                layer: "output".into(),
                message: format!("loss gradient must have shape {expected:?}, got {:?}", grad_out.shape()),
            });
        }
        let mut grads = vec![0.0; self.params.len()];
        let need_head_dx = self.plan.concat || want_inputs || self.plan.branches[0].iter().any(|n| n.n_weights > 0);
        let dy = self.backward_chain(&self.plan.head, &cache.head, grad_out.values().to_vec(), batch, &mut grads, need_head_dx);

        let branch_dy = match dy {
            None => Vec::new(),
            Some(dy) if self.plan.concat => split(&dy, &self.plan.branch_out, batch),
            Some(dy) => vec![dy],
        };
        let mut inputs = Vec::new();
        for (b, dy) in branch_dy.into_iter().enumerate() {
            let nodes = &self.plan.branches[b];
            let dx = self.backward_chain(nodes, &cache.branches[b], dy, batch, &mut grads, want_inputs);
            if let Some(dx) = dx {
                let shape = match self.spec.branches[b].input {
                    Shape::Image { c, h, w } => vec![batch, c, h, w],
                    Shape::Flat(n) => vec![batch, n],
                };
                inputs.push(Tensor::from_raw(shape, dx));
            }
        }
        Ok(Gradients { params: grads, inputs })
    }

    /// Returns the gradient with respect to the chain input when `want_dx`.
    fn backward_chain(
        &self,
        nodes: &[Node],
        saved: &[Saved],
        mut dy: Vec<f64>,
        batch: usize,
        grads: &mut [f64],
        want_dx: bool,
    ) -> Option<Vec<f64>> {
        // Layers before the first parametric one only matter for input gradients.
        let first_param = nodes.iter().position(|n| n.n_weights > 0);
        for (i, (node, s)) in nodes.iter().zip(saved).enumerate().rev() {
            let needed = want_dx || first_param.is_some_and(|p| p < i);
            if !needed && node.n_weights == 0 {
                return None;
            }
            dy = match (node.spec, s) {
                (LayerSpec::Conv2d { .. }, Saved::Input(x)) => {
                    let (w, _) = self.weights(node);
                    let (dw, db) = grads[node.offset..node.offset + node.n_weights + node.n_bias].split_at_mut(node.n_weights);
                    match ops::conv_backward(x, &dy, &node.conv_geom(), w, dw, db, batch, needed) {
                        Some(dx) => dx,
                        None => return None,
                    }
                }
                (LayerSpec::Dense { units }, Saved::Input(x)) => {
                    let (w, _) = self.weights(node);
                    let (dw, db) = grads[node.offset..node.offset + node.n_weights + node.n_bias].split_at_mut(node.n_weights);
                    match ops::dense_backward(x, &dy, node.input.len(), units, w, dw, db, batch, needed) {
                        Some(dx) => dx,
                        None => return None,
                    }
                }
                (LayerSpec::MaxPool2d { .. }, Saved::Argmax(arg)) => ops::maxpool_backward(&dy, arg, &node.pool_geom(), batch),
                (LayerSpec::Relu, Saved::Input(x)) => {
                    dy.iter().zip(x).map(|(&d, &v)| if v > 0.0 { d } else { 0.0 }).collect()
                }
                (LayerSpec::LeakyRelu { alpha }, Saved::Input(x)) => {
                    dy.iter().zip(x).map(|(&d, &v)| if v > 0.0 { d } else { alpha * d }).collect()
                }
                (LayerSpec::Dropout { .. }, Saved::Mask(Some(mask))) => dy.iter().zip(mask).map(|(d, m)| d * m).collect(),
                (LayerSpec::Dropout { .. }, Saved::Mask(None)) | (LayerSpec::Flatten, Saved::Nothing) => dy,
                (spec, _) => unreachable!("cache entry does not match {}", spec.name()),
            };
        }
        want_dx.then_some(dy)
    }
}

fn summary_row(out: &mut String, node: &Node) {
    let _ = writeln!(
        out,
        "{:<20} {:<12} {:<18} {:>10}",
        node.label,
        node.spec.name(),
        node.output.to_string(),
        node.n_weights + node.n_bias
    );
}

fn concat(parts: &[Vec<f64>], widths: &[usize], batch: usize) -> Vec<f64> {
    let total: usize = widths.iter().sum();
    let mut out = Vec::with_capacity(batch * total);
    for s in 0..batch {
        for (p, &w) in parts.iter().zip(widths) {
            out.extend_from_slice(&p[s * w..(s + 1) * w]);
        }
    }
    out
}

fn split(dy: &[f64], widths: &[usize], batch: usize) -> Vec<Vec<f64>> {
    let total: usize = widths.iter().sum();
    let mut parts: Vec<Vec<f64>> = widths.iter().map(|&w| Vec::with_capacity(batch * w)).collect();
    for row in dy.chunks_exact(total).take(batch) {
        let mut at = 0;
        for (p, &w) in parts.iter_mut().zip(widths) {
            p.extend_from_slice(&row[at..at + w]);
            at += w;
        }
    }
    parts
}

/// Mean squared error over the batch and its gradient with respect to the predictions.
pub fn mse_loss(predictions: &Tensor, targets: &[f64]) -> Result<(f64, Tensor)> {
    let p = predictions.values();
    if p.len() != targets.len() || p.is_empty() {
        return Err(Error::invalid(format!(
            "mse needs one target per prediction, got {} predictions and {} targets",
            p.len(),
            targets.len()
        )));
    }
    let n = p.len() as f64;
    let loss = p.iter().zip(targets).map(|(a, t)| (a - t) * (a - t)).sum::<f64>() / n;
    let grad = p.iter().zip(targets).map(|(a, t)| 2.0 * (a - t) / n).collect();
    Ok((loss, Tensor::from_raw(predictions.shape().to_vec(), grad)))
}
