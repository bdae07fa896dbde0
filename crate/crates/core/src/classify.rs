//! Small supervised backend: a single-hidden-layer MLP trained with
//! mini-batch SGD on templates or raw images. Weights are f64 at runtime
//! (so gradients check against finite differences) and f32 on disk.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::context::{extract_template, ContextParams};
use crate::data::{read_container, write_container, LabeledImage, IMAGE_HEIGHT, IMAGE_WIDTH};
use crate::error::{Error, Result};
use crate::perturb::PerturbationSpec;
use crate::rng::{derive_seed, stream_rng};
use crate::snn::SnnModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Multiplicative learning-rate decay applied every `decay_every` epochs.
    pub lr_decay: f64,
    pub decay_every: usize,
    /// Samples held out from the end of the provided set for per-epoch
    /// validation logging; 0 disables validation.
    pub validation_count: usize,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            hidden: 256,
            learning_rate: 0.05,
            momentum: 0.9,
            batch_size: 64,
            epochs: 300,
            lr_decay: 0.5,
            decay_every: 100,
            validation_count: 1000,
        }
    }
}

impl MlpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.batch_size == 0 {
            return Err(Error::Config("mlp: hidden and batch_size must be > 0".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("mlp: learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("mlp: momentum must be in [0, 1)".into()));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) || self.decay_every == 0 {
            return Err(Error::Config("mlp: bad learning-rate decay schedule".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct MlpModel {
    w1: Array2<f64>,
    b1: Array1<f64>,
    w2: Array2<f64>,
    b2: Array1<f64>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub learning_rate: f64,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

struct Grads {
    dw1: Array2<f64>,
    db1: Array1<f64>,
    dw2: Array2<f64>,
    db2: Array1<f64>,
}

impl MlpModel {
    pub fn input_len(&self) -> usize {
        self.w1.nrows()
    }

    pub fn hidden(&self) -> usize {
        self.w1.ncols()
    }

    pub fn classes(&self) -> usize {
        self.w2.ncols()
    }

    fn init(input_len: usize, hidden: usize, classes: usize, seed: u64) -> Self {
        let mut rng = stream_rng(seed, 0);
        let mut uniform = |rows: usize, cols: usize, bound: f64| {
            Array2::from_shape_fn((rows, cols), |_| rng.random_range(-bound..bound))
        };
        let w1 = uniform(input_len, hidden, (6.0 / input_len as f64).sqrt());
        let w2 = uniform(hidden, classes, (6.0 / hidden as f64).sqrt());
        MlpModel {
            w1,
            b1: Array1::zeros(hidden),
            w2,
            b2: Array1::zeros(classes),
        }
    }

    /// Hidden activations and row-wise softmax probabilities.
    fn forward(&self, x: ArrayView2<f64>) -> (Array2<f64>, Array2<f64>) {
        let mut hidden = x.dot(&self.w1) + &self.b1;
        hidden.mapv_inplace(|v| v.max(0.0));
        let mut logits = hidden.dot(&self.w2) + &self.b2;
        for mut row in logits.rows_mut() {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            row.mapv_inplace(|v| (v - max).exp());
            let sum = row.sum();
            row.mapv_inplace(|v| v / sum);
        }
        (hidden, logits)
    }

    /// Mean cross-entropy and accuracy over a labeled batch.
    fn loss_and_accuracy(&self, x: ArrayView2<f64>, labels: &[u8]) -> (f64, f64) {
        let (_, probs) = self.forward(x);
        let mut loss = 0.0;
        let mut correct = 0usize;
        for (row, &label) in probs.rows().into_iter().zip(labels) {
            loss -= row[label as usize].max(1e-300).ln();
            if argmax(row.as_slice().unwrap()) == label as usize {
                correct += 1;
            }
        }
        let count = labels.len().max(1) as f64;
        (loss / count, correct as f64 / count)
    }

    fn gradients(&self, x: ArrayView2<f64>, labels: &[u8]) -> Grads {
        let batch = labels.len() as f64;
        let (hidden, mut dlogits) = self.forward(x);
        for (mut row, &label) in dlogits.rows_mut().into_iter().zip(labels) {
            row[label as usize] -= 1.0;
        }
        dlogits.mapv_inplace(|v| v / batch);
        let dw2 = hidden.t().dot(&dlogits);
        let db2 = dlogits.sum_axis(Axis(0));
        let mut dhidden = dlogits.dot(&self.w2.t());
        dhidden.zip_mut_with(&hidden, |d, &h| {
            if h <= 0.0 {
                *d = 0.0;
            }
        });
        let dw1 = x.t().dot(&dhidden);
        let db1 = dhidden.sum_axis(Axis(0));
        Grads { dw1, db1, dw2, db2 }
    }

    /// Class probabilities for one input; sums to 1 within float error.
    pub fn predict(&self, input: &[f32]) -> Result<Vec<f64>> {
        if input.len() != self.input_len() {
            return Err(Error::Shape {
                expected: self.input_len(),
                got: input.len(),
            });
        }
        let x = Array2::from_shape_fn((1, input.len()), |(_, i)| input[i] as f64);
        let (_, probs) = self.forward(x.view());
        Ok(probs.row(0).to_vec())
    }

    pub fn save(&self, path: &Path, seed: Option<u64>, config_hash: Option<String>) -> Result<()> {
        let header = MlpModelHeader {
            kind: "mlp_model".to_owned(),
            format_version: 1,
            input_len: self.input_len(),
            hidden: self.hidden(),
            classes: self.classes(),
            seed,
            config_hash,
        };
        let mut payload =
            Vec::with_capacity(self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len());
        payload.extend(self.w1.iter().map(|&v| v as f32));
        payload.extend(self.b1.iter().map(|&v| v as f32));
        payload.extend(self.w2.iter().map(|&v| v as f32));
        payload.extend(self.b2.iter().map(|&v| v as f32));
        write_container(path, &header, &payload)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (header, payload): (MlpModelHeader, Vec<f32>) =
            read_container(path, |h: &MlpModelHeader| {
                if h.kind != "mlp_model" {
                    return Err(Error::format(path, 8, format!("kind {:?} is not mlp_model", h.kind)));
                }
                if h.format_version != 1 {
                    return Err(Error::format(path, 8, "unsupported format version"));
                }
                Ok(h.input_len * h.hidden + h.hidden + h.hidden * h.classes + h.classes)
            })?;
        let (i, h, c) = (header.input_len, header.hidden, header.classes);
        let mut it = payload.into_iter().map(|v| v as f64);
        let mut take = |count: usize| -> Vec<f64> { it.by_ref().take(count).collect() };
        Ok(MlpModel {
            w1: Array2::from_shape_vec((i, h), take(i * h)).expect("sized above"),
            b1: Array1::from_vec(take(h)),
            w2: Array2::from_shape_vec((h, c), take(h * c)).expect("sized above"),
            b2: Array1::from_vec(take(c)),
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct MlpModelHeader {
    kind: String,
    format_version: u32,
    input_len: usize,
    hidden: usize,
    classes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config_hash: Option<String>,
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn to_matrix(features: &[Vec<f32>]) -> Result<Array2<f64>> {
    let rows = features.len();
    let cols = features.first().map(|f| f.len()).unwrap_or(0);
    for f in features {
        if f.len() != cols {
            return Err(Error::Shape {
                expected: cols,
                got: f.len(),
            });
        }
    }
    Ok(Array2::from_shape_fn((rows, cols), |(r, c)| features[r][c] as f64))
}

/// Train on feature vectors and labels with mini-batch SGD plus momentum
/// and a step-decay schedule. Deterministic given the seed. The training
/// path accepts no perturbation by construction; evaluation applies those.
pub fn train_classifier(
    features: &[Vec<f32>],
    labels: &[u8],
    classes: usize,
    config: &MlpConfig,
    seed: u64,
) -> Result<(MlpModel, Vec<EpochLog>)> {
    config.validate()?;
    if features.is_empty() || features.len() != labels.len() {
        return Err(Error::Config(format!(
            "mlp: {} feature rows vs {} labels",
            features.len(),
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l as usize >= classes) {
        return Err(Error::Domain(format!("label {bad} outside 0..{classes}")));
    }
    if config.validation_count >= features.len() {
        return Err(Error::Config(
            "mlp: validation_count must leave at least one training sample".into(),
        ));
    }
    let matrix = to_matrix(features)?;
    let input_len = matrix.ncols();
    let train_count = features.len() - config.validation_count;
    let (train_x, val_x) = matrix.view().split_at(Axis(0), train_count);
    let (train_y, val_y) = labels.split_at(train_count);

    let mut model = MlpModel::init(input_len, config.hidden, classes, seed);
    let mut vel = Grads {
        dw1: Array2::zeros(model.w1.raw_dim()),
        db1: Array1::zeros(model.b1.raw_dim()),
        dw2: Array2::zeros(model.w2.raw_dim()),
        db2: Array1::zeros(model.b2.raw_dim()),
    };
    let mut log = Vec::with_capacity(config.epochs);
    let mut indices: Vec<usize> = (0..train_count).collect();

    for epoch in 0..config.epochs {
        let lr = config.learning_rate * config.lr_decay.powi((epoch / config.decay_every) as i32);
        let mut rng = stream_rng(seed, 1 + epoch as u64);
        indices.shuffle(&mut rng);
        for chunk in indices.chunks(config.batch_size) {
            let x = matrix.select(Axis(0), chunk);
            let y: Vec<u8> = chunk.iter().map(|&i| labels[i]).collect();
            let grads = model.gradients(x.view(), &y);
            let step = |vel: &mut f64, grad: &f64| {
                *vel = config.momentum * *vel - lr * grad;
            };
            vel.dw1.zip_mut_with(&grads.dw1, step);
            vel.db1.zip_mut_with(&grads.db1, step);
            vel.dw2.zip_mut_with(&grads.dw2, step);
            vel.db2.zip_mut_with(&grads.db2, step);
            model.w1 += &vel.dw1;
            model.b1 += &vel.db1;
            model.w2 += &vel.dw2;
            model.b2 += &vel.db2;
        }
        let (train_loss, train_accuracy) = model.loss_and_accuracy(train_x, train_y);
        let (val_loss, val_accuracy) = if val_y.is_empty() {
            (None, None)
        } else {
            let (l, a) = model.loss_and_accuracy(val_x, val_y);
            (Some(l), Some(a))
        };
        log.push(EpochLog {
            epoch,
            learning_rate: lr,
            train_loss,
            train_accuracy,
            val_loss,
            val_accuracy,
        });
    }
    Ok((model, log))
}

/// Template extraction stage applied before classification.
#[derive(Clone, Copy)]
pub struct Preprocessor<'a> {
    pub snn: &'a SnnModel,
    pub params: ContextParams,
}

impl Preprocessor<'_> {
    pub fn apply(&self, image: &[f32]) -> Result<Vec<f32>> {
        Ok(extract_template(self.snn, image, &self.params)?.values)
    }
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub accuracy: f64,
    pub per_class_correct: Vec<u32>,
    pub per_class_total: Vec<u32>,
    /// Predicted class per sample, in input order.
    pub predictions: Vec<u8>,
}

/// Evaluate top-1 accuracy: optional perturbation, then optional template
/// extraction, then prediction. The model is never mutated and the same
/// model serves every perturbation level. Per-sample perturbation seeds
/// derive from the spec seed and the sample id, so batch order and
/// parallelism cannot change results.
pub fn evaluate(
    model: &MlpModel,
    images: &[LabeledImage],
    perturbation: Option<&PerturbationSpec>,
    preprocessor: Option<&Preprocessor>,
) -> Result<EvalReport> {
    if images.is_empty() {
        return Err(Error::Config("evaluate: empty dataset".into()));
    }
    let classes = model.classes();
    let predictions: Vec<u8> = images
        .par_iter()
        .map(|img| -> Result<u8> {
            let mut x = img.pixels.clone();
            if let Some(spec) = perturbation {
                let per_sample = PerturbationSpec {
                    kind: spec.kind,
                    seed: derive_seed(spec.seed, img.id as u64),
                };
                x = per_sample.apply(&x, IMAGE_WIDTH, IMAGE_HEIGHT)?;
            }
            if let Some(pre) = preprocessor {
                x = pre.apply(&x)?;
            }
            let probs = model.predict(&x)?;
            Ok(argmax(&probs) as u8)
        })
        .collect::<Result<_>>()?;

    let mut per_class_correct = vec![0u32; classes];
    let mut per_class_total = vec![0u32; classes];
    let mut correct = 0usize;
    for (img, &pred) in images.iter().zip(&predictions) {
        per_class_total[img.label as usize] += 1;
        if pred == img.label {
            per_class_correct[img.label as usize] += 1;
            correct += 1;
        }
    }
    Ok(EvalReport {
        accuracy: correct as f64 / images.len() as f64,
        per_class_correct,
        per_class_total,
        predictions,
    })
}
