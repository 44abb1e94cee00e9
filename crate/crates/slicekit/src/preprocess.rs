//! Transfer-layer insertion, toy-scale retraining, and head/tail export.
//!
//! Pooling away three quarters of a feature map costs accuracy; retraining
//! lets the surrounding layers adapt to the inserted pair. The transfer
//! layer itself has no trainable parameters, so retraining updates the whole
//! model with plain SGD and cross-entropy. Everything here is deterministic
//! given the seed.

use std::fmt;

use crate::graph::{enumerate_split_points, LayerGraph, ModelError, SplitId};
use crate::layers::{backward, forward, Layer, LayerKind, WeightGrads};
use crate::rng::Rng;
use crate::tensor::{Shape, Tensor, TensorError};

/// A base graph plus the same graph with the transfer-layer pair inserted
/// after `split_index`.
#[derive(Clone, PartialEq, Debug)]
pub struct TlModel {
    pub base: LayerGraph,
    pub split_index: usize,
    pub graph: LayerGraph,
}

/// Training hyperparameters.
#[derive(Clone, Copy, PartialEq, Debug)]
pub struct TrainConfig {
    pub learning_rate: f32,
    pub epochs: u32,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { learning_rate: 0.001, epochs: 30, batch_size: 32, seed: 0 }
    }
}

/// One labeled example.
#[derive(Clone, PartialEq, Debug)]
pub struct Sample {
    pub input: Tensor,
    pub label: usize,
}

/// A synthetic classification task with a fixed train/validation split and
/// exactly uniform label counts.
#[derive(Clone, PartialEq, Debug)]
pub struct ToyDataset {
    pub classes: usize,
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
}

/// Per-epoch training log row.
#[derive(Clone, Copy, PartialEq, Debug)]
pub struct EpochStats {
    pub epoch: u32,
    pub train_loss: f32,
    pub train_acc: f32,
    pub val_acc: f32,
}

#[derive(Debug)]
pub enum PrepError {
    NotTlEligible { split: usize },
    InvalidSplit { split: usize, units: usize },
    InvalidConfig { reason: String },
    /// Training loss left the finite range at this epoch.
    DivergedLoss { epoch: u32 },
    NoTlPair,
    Model(ModelError),
    Tensor(TensorError),
}

impl fmt::Display for PrepError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PrepError::NotTlEligible { split } => write!(f, "split {split} is not transfer-layer eligible"),
            PrepError::InvalidSplit { split, units } => {
                write!(f, "split {split} out of range for {units} units")
            }
            PrepError::InvalidConfig { reason } => write!(f, "invalid training config: {reason}"),
            PrepError::DivergedLoss { epoch } => write!(f, "training loss diverged at epoch {epoch}"),
            PrepError::NoTlPair => write!(f, "graph has no adjacent DeviceTL/EdgeTL pair"),
            PrepError::Model(e) => write!(f, "{e}"),
            PrepError::Tensor(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for PrepError {}

impl From<ModelError> for PrepError {
    fn from(e: ModelError) -> Self {
        PrepError::Model(e)
    }
}

impl From<TensorError> for PrepError {
    fn from(e: TensorError) -> Self {
        PrepError::Tensor(e)
    }
}

/// Inject the DeviceTL/EdgeTL pair right after unit `split_index`.
pub fn insert_tl(graph: &LayerGraph, split_index: usize) -> Result<TlModel, PrepError> {
    let n = graph.unit_count();
    if split_index + 2 > n {
        return Err(PrepError::InvalidSplit { split: split_index, units: n });
    }
    let points = enumerate_split_points(graph)?;
    let point = points
        .iter()
        .find(|p| p.id == SplitId::Interior(split_index))
        .ok_or(PrepError::InvalidSplit { split: split_index, units: n })?;
    if !point.tl_eligible {
        return Err(PrepError::NotTlEligible { split: split_index });
    }
    let mut units = Vec::with_capacity(n + 2);
    units.extend_from_slice(&graph.units[..=split_index]);
    units.push(Layer::new(LayerKind::DeviceTL));
    units.push(Layer::new(LayerKind::EdgeTL));
    units.extend_from_slice(&graph.units[split_index + 1..]);
    let with_tl = LayerGraph::new(graph.name.clone(), graph.input_shape, units)?;
    Ok(TlModel { base: graph.clone(), split_index, graph: with_tl })
}

/// Remove the (single) adjacent DeviceTL/EdgeTL pair, recovering the graph
/// the pair was inserted into.
pub fn strip_tl(graph: &LayerGraph) -> Result<LayerGraph, PrepError> {
    let pos = graph
        .units
        .windows(2)
        .position(|w| w[0].kind == LayerKind::DeviceTL && w[1].kind == LayerKind::EdgeTL)
        .ok_or(PrepError::NoTlPair)?;
    let mut units = graph.units.clone();
    units.drain(pos..pos + 2);
    Ok(LayerGraph::new(graph.name.clone(), graph.input_shape, units)?)
}

/// Split a TL-bearing model into the device-side head (ending at DeviceTL)
/// and the edge-side tail (starting at EdgeTL).
pub fn split_model(model: &TlModel) -> (LayerGraph, LayerGraph) {
    let cut = model.split_index + 2; // head keeps units 0..=split_index plus DeviceTL
    model.graph.split_at(SplitId::Interior(cut - 1))
}

// ---- toy dataset ----

/// Build the deterministic toy classification task. Each class is a fixed
/// arrangement of Gaussian bumps plus a class-specific pixel-scale stripe
/// phase on a 3x16x16 canvas; each sample adds fresh Gaussian noise. The
/// bumps survive 2x2 pooling, the stripe phase does not, so the task has
/// both recoverable and pooling-sensitive structure. Roughly a fifth of each
/// class is held out for validation.
pub fn make_toy_dataset(seed: u64, classes: usize, samples_per_class: usize) -> Result<ToyDataset, PrepError> {
    if !(2..=10).contains(&classes) {
        return Err(PrepError::InvalidConfig { reason: format!("classes {classes} outside [2, 10]") });
    }
    if samples_per_class < 5 {
        return Err(PrepError::InvalidConfig {
            reason: format!("samples_per_class {samples_per_class} below minimum of 5"),
        });
    }
    let shape = Shape::new(3, 16, 16);
    let blob_amplitude = 2.6f32;
    let blob_sigma = 1.3f32;
    let stripe_amplitude = 1.2f32;
    let noise_sigma = 1.6f32;
    let blobs_per_channel = 3usize;

    // Class geometry comes from its own stream so sample noise cannot shift it.
    let mut geometry = Rng::new(seed ^ 0x67656f6d);
    let mut centers: Vec<Vec<(f32, f32, f32)>> = Vec::with_capacity(classes);
    let mut stripes: Vec<(bool, usize)> = Vec::with_capacity(classes);
    for class in 0..classes {
        let mut per_class = Vec::new();
        for _ in 0..shape.channels * blobs_per_channel {
            let cy = geometry.uniform(2.0, 14.0);
            let cx = geometry.uniform(2.0, 14.0);
            let sign = if geometry.below(2) == 0 { 1.0 } else { -1.0 };
            per_class.push((cy, cx, sign));
        }
        centers.push(per_class);
        // Orientation alternates; the phase bit is what pooling erases.
        stripes.push((class % 2 == 0, (class / 2) % 2));
    }

    let mut noise = Rng::new(seed ^ 0x6e6f6973);
    let n_val = (samples_per_class / 5).max(1);
    let mut train = Vec::new();
    let mut val = Vec::new();
    for class in 0..classes {
        let (vertical, phase) = stripes[class];
        for s in 0..samples_per_class {
            let t = Tensor::from_fn(shape, |c, y, x| {
                let mut v = 0.0f32;
                for b in 0..blobs_per_channel {
                    let (cy, cx, sign) = centers[class][c * blobs_per_channel + b];
                    let d2 = (y as f32 - cy).powi(2) + (x as f32 - cx).powi(2);
                    v += sign * blob_amplitude * (-d2 / (2.0 * blob_sigma * blob_sigma)).exp();
                }
                let along = if vertical { x } else { y };
                let stripe = if (along + phase) % 2 == 0 { 1.0 } else { -1.0 };
                v + stripe_amplitude * stripe + noise_sigma * noise.normal()
            })?;
            let sample = Sample { input: t, label: class };
            if s < n_val {
                val.push(sample);
            } else {
                train.push(sample);
            }
        }
    }
    Ok(ToyDataset { classes, train, val })
}

// ---- training ----

fn flat_layers(units: &[Layer]) -> Vec<&Layer> {
    let mut out = Vec::new();
    for u in units {
        match &u.kind {
            LayerKind::Block(subs) => out.extend(subs.iter()),
            _ => out.push(u),
        }
    }
    out
}

fn flat_layers_mut(units: &mut [Layer]) -> Vec<&mut Layer> {
    let mut out = Vec::new();
    for u in units {
        if matches!(u.kind, LayerKind::Block(_)) {
            if let LayerKind::Block(subs) = &mut u.kind {
                out.extend(subs.iter_mut());
            }
        } else {
            out.push(u);
        }
    }
    out
}

/// Softmax cross-entropy: returns (loss, dLoss/dLogits, predicted class).
fn cross_entropy(logits: &[f32], label: usize) -> (f32, Vec<f32>, usize) {
    let max = logits.iter().copied().fold(f32::MIN, f32::max);
    let exps: Vec<f32> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f32 = exps.iter().sum();
    let probs: Vec<f32> = exps.iter().map(|&e| e / sum).collect();
    let loss = -probs[label].max(1e-12).ln();
    let mut grad = probs.clone();
    grad[label] -= 1.0;
    let pred = probs
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
        .map(|(i, _)| i)
        .unwrap_or(0);
    (loss, grad, pred)
}

/// Fraction of samples whose argmax matches the label.
pub fn evaluate(graph: &LayerGraph, samples: &[Sample]) -> Result<f32, PrepError> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    for s in samples {
        let out = graph.forward(&s.input)?;
        let pred = out
            .data()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
            .map(|(i, _)| i)
            .unwrap_or(0);
        if pred == s.label {
            correct += 1;
        }
    }
    Ok(correct as f32 / samples.len() as f32)
}

/// Train every weight in `graph` with plain SGD (no momentum) and
/// cross-entropy loss. Deterministic given the config seed.
pub fn train_graph(
    graph: &LayerGraph,
    data: &ToyDataset,
    cfg: &TrainConfig,
) -> Result<(LayerGraph, Vec<EpochStats>), PrepError> {
    if !(cfg.learning_rate > 0.0) || !cfg.learning_rate.is_finite() {
        return Err(PrepError::InvalidConfig { reason: format!("learning rate {} must be > 0", cfg.learning_rate) });
    }
    if cfg.epochs < 1 {
        return Err(PrepError::InvalidConfig { reason: "epochs must be >= 1".into() });
    }
    if cfg.batch_size < 1 {
        return Err(PrepError::InvalidConfig { reason: "batch size must be >= 1".into() });
    }
    let out_shape = graph.output_shape()?;
    if out_shape.elements() != data.classes {
        return Err(PrepError::InvalidConfig {
            reason: format!("model emits {} logits but the task has {} classes", out_shape.elements(), data.classes),
        });
    }

    let mut model = graph.clone();
    let mut rng = Rng::new(cfg.seed ^ 0x7472_61696e);
    let mut log = Vec::with_capacity(cfg.epochs as usize);
    let mut order: Vec<usize> = (0..data.train.len()).collect();

    for epoch in 1..=cfg.epochs {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0f64;
        let mut correct = 0usize;

        for batch in order.chunks(cfg.batch_size) {
            let layers = flat_layers(&model.units);
            let mut grad_acc: Vec<Option<WeightGrads>> = layers.iter().map(|_| None).collect();

            for &idx in batch {
                let sample = &data.train[idx];
                // Forward, keeping each layer's input for the backward pass.
                let mut acts = Vec::with_capacity(layers.len());
                let mut t = sample.input.clone();
                for layer in &layers {
                    acts.push(t.clone());
                    t = forward(layer, &t)?;
                }
                let (loss, dlogits, pred) = cross_entropy(t.data(), sample.label);
                epoch_loss += loss as f64;
                if pred == sample.label {
                    correct += 1;
                }

                let mut grad = Tensor::new(t.shape(), dlogits)?;
                for (i, layer) in layers.iter().enumerate().rev() {
                    let (next_grad, mut wgs) = backward(layer, &acts[i], &grad)?;
                    grad = next_grad;
                    if let Some(wg) = wgs.pop() {
                        match &mut grad_acc[i] {
                            Some(acc) => {
                                for (a, g) in acc.w.iter_mut().zip(wg.w.iter()) {
                                    *a += g;
                                }
                                for (a, g) in acc.b.iter_mut().zip(wg.b.iter()) {
                                    *a += g;
                                }
                            }
                            slot => *slot = Some(wg),
                        }
                    }
                }
            }

            let step = cfg.learning_rate / batch.len() as f32;
            for (layer, acc) in flat_layers_mut(&mut model.units).into_iter().zip(grad_acc.into_iter()) {
                if let (Some(weights), Some(acc)) = (layer.weights.as_mut(), acc) {
                    for (w, g) in weights.w.iter_mut().zip(acc.w.iter()) {
                        *w -= step * g;
                    }
                    for (b, g) in weights.b.iter_mut().zip(acc.b.iter()) {
                        *b -= step * g;
                    }
                }
            }
        }

        let train_loss = (epoch_loss / data.train.len().max(1) as f64) as f32;
        if !train_loss.is_finite() {
            return Err(PrepError::DivergedLoss { epoch });
        }
        log.push(EpochStats {
            epoch,
            train_loss,
            train_acc: correct as f32 / data.train.len().max(1) as f32,
            val_acc: evaluate(&model, &data.val)?,
        });
    }
    Ok((model, log))
}

/// Retrain a TL-bearing model end to end (all weights trainable).
pub fn retrain(model: &TlModel, data: &ToyDataset, cfg: &TrainConfig) -> Result<(TlModel, Vec<EpochStats>), PrepError> {
    let (trained, log) = train_graph(&model.graph, data, cfg)?;
    Ok((TlModel { base: model.base.clone(), split_index: model.split_index, graph: trained }, log))
}

/// Comma-separated training log: epoch, train_loss, train_acc, val_acc.
pub fn training_log_csv(stats: &[EpochStats]) -> String {
    let mut out = String::from("epoch,train_loss,train_acc,val_acc\n");
    for s in stats {
        out.push_str(&format!("{},{:.6},{:.4},{:.4}\n", s.epoch, s.train_loss, s.train_acc, s.val_acc));
    }
    out
}
