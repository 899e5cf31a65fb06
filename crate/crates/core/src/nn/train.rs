use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::layers::LayerSpec;
use super::loss::{argmax, LossKind};
use super::model::{LayerParams, Model};
use super::NnError;
use crate::data::LabeledImages;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Optimizer {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    pub learning_rate: f32,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: Optimizer::Sgd,
            learning_rate: 0.05,
            batch_size: 64,
            epochs: 20,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(NnError::InvalidConfig("learning rate must be > 0".into()));
        }
        if self.batch_size == 0 {
            return Err(NnError::InvalidConfig("batch size must be >= 1".into()));
        }
        if self.epochs == 0 {
            return Err(NnError::InvalidConfig("epochs must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss: f64,
    pub train_accuracy: f64,
}

struct AdamState {
    m: Vec<Option<LayerParams>>,
    v: Vec<Option<LayerParams>>,
    t: i32,
}

/// Trains a fresh model on `dataset` with mean cross-entropy.
pub fn train(
    layers: &[LayerSpec],
    dataset: &LabeledImages,
    config: &TrainConfig,
) -> Result<(Model, Vec<EpochMetrics>), NnError> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(NnError::InvalidConfig("training set is empty".into()));
    }
    if let Some(&bad) = dataset.labels().iter().find(|&&l| l > 9) {
        return Err(NnError::ClassOutOfRange {
            class: bad as usize,
            classes: 10,
        });
    }
    let mut model = Model::new(dataset.image_shape().to_vec(), layers.to_vec(), config.seed)?;
    let mut adam = (config.optimizer == Optimizer::Adam).then(|| AdamState {
        m: zeros_like(model.params()),
        v: zeros_like(model.params()),
        t: 0,
    });
    let n = dataset.len();
    let len = model.input_len();
    let classes = model.classes();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x7472_6169_6e00);
    let mut metrics = Vec::with_capacity(config.epochs);
    let mut batch_x = Vec::with_capacity(config.batch_size * len);
    let mut grad_logits = Vec::new();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0f64;
        let mut correct = 0usize;
        for (bi, chunk) in order.chunks(config.batch_size).enumerate() {
            batch_x.clear();
            for &i in chunk {
                batch_x.extend_from_slice(dataset.image(i));
            }
            let b = chunk.len();
            let pass = model.forward_batch(&batch_x, b)?;
            let logits = pass.logits();
            grad_logits.clear();
            grad_logits.resize(logits.len(), 0.0);
            let mut batch_loss = 0.0f64;
            for (k, &i) in chunk.iter().enumerate() {
                let label = dataset.labels()[i] as usize;
                let row = &logits[k * classes..(k + 1) * classes];
                let g = &mut grad_logits[k * classes..(k + 1) * classes];
                batch_loss += LossKind::CrossEntropy { label }.value_and_grad(row, g)? as f64;
                if argmax(row) == label {
                    correct += 1;
                }
            }
            if !batch_loss.is_finite() {
                return Err(NnError::Diverged { epoch, batch: bi });
            }
            loss_sum += batch_loss;
            let scale = 1.0 / b as f32;
            grad_logits.iter_mut().for_each(|g| *g *= scale);
            let (_, grads) = model.backward(&batch_x, &pass, &grad_logits, true);
            let grads = grads.expect("parameter gradients requested");
            match adam.as_mut() {
                None => sgd_step(&mut model, &grads, config.learning_rate),
                Some(state) => adam_step(&mut model, &grads, state, config.learning_rate),
            }
        }
        if model.params().iter().flatten().any(|p| !p.weight.is_finite() || !p.bias.is_finite()) {
            return Err(NnError::Diverged {
                epoch,
                batch: n.div_ceil(config.batch_size),
            });
        }
        metrics.push(EpochMetrics {
            epoch,
            loss: loss_sum / n as f64,
            train_accuracy: correct as f64 / n as f64,
        });
    }
    Ok((model, metrics))
}

fn zeros_like(params: &[Option<LayerParams>]) -> Vec<Option<LayerParams>> {
    params
        .iter()
        .map(|p| {
            p.as_ref().map(|p| LayerParams {
                weight: crate::tensor::Tensor::zeros(p.weight.shape().to_vec()),
                bias: crate::tensor::Tensor::zeros(p.bias.shape().to_vec()),
            })
        })
        .collect()
}

fn sgd_step(model: &mut Model, grads: &[Option<LayerParams>], lr: f32) {
    for (p, g) in model.params_mut().iter_mut().zip(grads) {
        if let (Some(p), Some(g)) = (p, g) {
            for (w, gw) in p.weight.data_mut().iter_mut().zip(g.weight.data()) {
                *w -= lr * gw;
            }
            for (b, gb) in p.bias.data_mut().iter_mut().zip(g.bias.data()) {
                *b -= lr * gb;
            }
        }
    }
}

fn adam_step(model: &mut Model, grads: &[Option<LayerParams>], state: &mut AdamState, lr: f32) {
    const B1: f32 = 0.9;
    const B2: f32 = 0.999;
    const EPS: f32 = 1e-8;
    state.t += 1;
    let c1 = 1.0 - B1.powi(state.t);
    let c2 = 1.0 - B2.powi(state.t);
    let update = |w: &mut [f32], g: &[f32], m: &mut [f32], v: &mut [f32]| {
        for i in 0..w.len() {
            m[i] = B1 * m[i] + (1.0 - B1) * g[i];
            v[i] = B2 * v[i] + (1.0 - B2) * g[i] * g[i];
            w[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + EPS);
        }
    };
    for (((p, g), m), v) in model
        .params_mut()
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        if let (Some(p), Some(g), Some(m), Some(v)) = (p, g, m, v) {
            update(p.weight.data_mut(), g.weight.data(), m.weight.data_mut(), v.weight.data_mut());
            update(p.bias.data_mut(), g.bias.data(), m.bias.data_mut(), v.bias.data_mut());
        }
    }
}

/// Predicted class of every image, evaluated in fixed-size chunks.
pub fn predict(model: &Model, dataset: &LabeledImages) -> Result<Vec<u8>, NnError> {
    const CHUNK: usize = 256;
    let len = model.input_len();
    let classes = model.classes();
    let chunks: Vec<Result<Vec<u8>, NnError>> = dataset
        .images()
        .par_chunks(CHUNK * len)
        .map(|chunk| {
            let logits = model.logits_batch(chunk, chunk.len() / len)?;
            Ok(logits.chunks(classes).map(|row| argmax(row) as u8).collect())
        })
        .collect();
    let mut out = Vec::with_capacity(dataset.len());
    for c in chunks {
        out.extend(c?);
    }
    Ok(out)
}

/// Fraction of correctly classified images.
pub fn evaluate(model: &Model, dataset: &LabeledImages) -> Result<f64, NnError> {
    if dataset.is_empty() {
        return Ok(0.0);
    }
    let preds = predict(model, dataset)?;
    let correct = preds.iter().zip(dataset.labels()).filter(|(p, l)| p == l).count();
    Ok(correct as f64 / dataset.len() as f64)
}
