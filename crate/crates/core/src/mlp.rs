//! Feed-forward pruning classifier: ReLU hidden layers, a linear output
//! layer, and a two-way softmax whose first entry is the prune probability.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bnb::{Decision, Label};
use crate::features::{FEATURE_VERSION, NUM_FEATURES};
use crate::imitate::LabeledSample;

/// Probabilities are clamped here before taking logs.
pub const LOG_CLAMP: f64 = 1e-12;
pub const DEFAULT_HIDDEN: [usize; 2] = [64, 64];
pub const DEFAULT_W2: [f64; 2] = [1.0, 4.0];
pub const SCRATCH_LR: f64 = 1e-2;
pub const FINE_TUNE_LR: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MlpError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("non-finite activation in layer {0}")]
    Numerical(usize),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("feature version mismatch: model {model}, data {data}")]
    FeatureVersion { model: String, data: String },
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layer_dims: Vec<usize>,
    /// `weights[k]` is `layer_dims[k+1] × layer_dims[k]`, row-major.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub feature_version: String,
}

impl MlpParams {
    pub fn zeros(layer_dims: &[usize]) -> Result<Self, MlpError> {
        check_dims(layer_dims)?;
        let weights = layer_dims.windows(2).map(|w| vec![0.0; w[0] * w[1]]).collect();
        let biases = layer_dims[1..].iter().map(|&n| vec![0.0; n]).collect();
        Ok(MlpParams {
            layer_dims: layer_dims.to_vec(),
            weights,
            biases,
            feature_version: FEATURE_VERSION.to_string(),
        })
    }

    /// Weights uniform in `±√(6 / (fan_in + fan_out))`, zero biases.
    pub fn glorot(layer_dims: &[usize], seed: u64) -> Result<Self, MlpError> {
        let mut p = Self::zeros(layer_dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (k, w) in p.weights.iter_mut().enumerate() {
            let limit = (6.0 / (layer_dims[k] + layer_dims[k + 1]) as f64).sqrt();
            for v in w.iter_mut() {
                *v = rng.random_range(-limit..limit);
            }
        }
        Ok(p)
    }

    /// The default 17-64-64-2 network.
    pub fn default_architecture(seed: u64) -> Self {
        let mut dims = vec![NUM_FEATURES];
        dims.extend(DEFAULT_HIDDEN);
        dims.push(2);
        Self::glorot(&dims, seed).expect("default dims are valid")
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn validate(&self) -> Result<(), MlpError> {
        check_dims(&self.layer_dims)?;
        if self.weights.len() != self.num_layers() || self.biases.len() != self.layer_dims.len() - 1 {
            return Err(MlpError::Dimension {
                expected: self.layer_dims.len() - 1,
                got: self.weights.len(),
            });
        }
        for k in 0..self.num_layers() {
            let (i, o) = (self.layer_dims[k], self.layer_dims[k + 1]);
            if self.weights[k].len() != i * o {
                return Err(MlpError::Dimension {
                    expected: i * o,
                    got: self.weights[k].len(),
                });
            }
            if self.biases[k].len() != o {
                return Err(MlpError::Dimension {
                    expected: o,
                    got: self.biases[k].len(),
                });
            }
        }
        if self
            .weights
            .iter()
            .chain(&self.biases)
            .flatten()
            .any(|v| !v.is_finite())
        {
            return Err(MlpError::Numerical(0));
        }
        Ok(())
    }

    /// Activations of every layer, input first; the last entry holds the
    /// output logits.
    fn activations(&self, x: &[f64]) -> Result<Vec<Vec<f64>>, MlpError> {
        if x.len() != self.input_dim() {
            return Err(MlpError::Dimension {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let last = self.num_layers() - 1;
        let mut acts = Vec::with_capacity(self.num_layers() + 1);
        acts.push(x.to_vec());
        for k in 0..self.num_layers() {
            let (n_in, n_out) = (self.layer_dims[k], self.layer_dims[k + 1]);
            let input = &acts[k];
            let w = &self.weights[k];
            let mut out = self.biases[k].clone();
            for (r, o) in out.iter_mut().enumerate() {
                let row = &w[r * n_in..(r + 1) * n_in];
                *o += row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>();
            }
            debug_assert_eq!(out.len(), n_out);
            if k < last {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            if out.iter().any(|v| !v.is_finite()) {
                return Err(MlpError::Numerical(k));
            }
            acts.push(out);
        }
        Ok(acts)
    }

    /// Class probabilities `e = softmax(g^L)`; `e[0]` is the prune probability.
    pub fn forward(&self, x: &[f64]) -> Result<[f64; 2], MlpError> {
        let acts = self.activations(x)?;
        Ok(softmax(acts.last().expect("at least one layer")))
    }

    /// Prune iff the prune probability exceeds `threshold` strictly.
    pub fn classify(&self, x: &[f64], threshold: f64) -> Result<Decision, MlpError> {
        let e = self.forward(x)?;
        Ok(if e[0] > threshold {
            Decision::Prune
        } else {
            Decision::Preserve
        })
    }
}

fn check_dims(dims: &[usize]) -> Result<(), MlpError> {
    if dims.len() < 2 || dims.contains(&0) {
        return Err(MlpError::Config(format!("bad layer dims {dims:?}")));
    }
    if *dims.last().unwrap() != 2 {
        return Err(MlpError::Dimension {
            expected: 2,
            got: *dims.last().unwrap(),
        });
    }
    Ok(())
}

pub fn softmax(logits: &[f64]) -> [f64; 2] {
    let m = logits[0].max(logits[1]);
    let a = (logits[0] - m).exp();
    let b = (logits[1] - m).exp();
    let s = a + b;
    [a / s, b / s]
}

/// One-hot target: prune is `(1, 0)`, preserve is `(0, 1)`.
pub fn one_hot(label: Label) -> [f64; 2] {
    match label {
        Label::Prune => [1.0, 0.0],
        Label::Preserve => [0.0, 1.0],
    }
}

/// `ℓ = −Σ_j w_j y_j log(max(e_j, 1e-12))`.
pub fn weighted_cross_entropy(e: &[f64; 2], y: &[f64; 2], w: &[f64; 2]) -> f64 {
    -(0..2).map(|j| w[j] * y[j] * e[j].max(LOG_CLAMP).ln()).sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    /// `w1[0]` is the preserve share of the data; it weights the prune class.
    pub w1: [f64; 2],
    pub w2: [f64; 2],
    pub w: [f64; 2],
}

impl ClassWeights {
    pub fn new(w1: [f64; 2], w2: [f64; 2]) -> Self {
        ClassWeights {
            w1,
            w2,
            w: [w1[0] * w2[0], w1[1] * w2[1]],
        }
    }

    pub fn uniform() -> Self {
        Self::new([1.0, 1.0], [1.0, 1.0])
    }
}

pub fn compute_class_weights(dataset: &[LabeledSample], w2: [f64; 2]) -> Result<ClassWeights, MlpError> {
    if dataset.is_empty() {
        return Err(MlpError::EmptyDataset);
    }
    if w2.iter().any(|v| !(*v >= 0.0)) {
        return Err(MlpError::Config(format!("negative class weight {w2:?}")));
    }
    let preserve = dataset.iter().filter(|s| s.label == Label::Preserve).count();
    let share = preserve as f64 / dataset.len() as f64;
    Ok(ClassWeights::new([share, 1.0 - share], w2))
}

/// Gradients of one sample's loss, laid out like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    fn zeros_like(p: &MlpParams) -> Self {
        Gradients {
            weights: p.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: p.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }
}

/// Loss of one sample and its gradient accumulated into `grads` (scaled by
/// `scale`). Where the log clamp is active the loss is flat, so the output
/// gradient is zero there.
fn backprop(
    p: &MlpParams,
    x: &[f64],
    y: &[f64; 2],
    w: &[f64; 2],
    scale: f64,
    grads: &mut Gradients,
) -> Result<f64, MlpError> {
    let acts = p.activations(x)?;
    let e = softmax(acts.last().unwrap());
    let loss = weighted_cross_entropy(&e, y, w);
    // dℓ/dg^L = (Σ_j w_j y_j) e − w ⊙ y, restricted to unclamped classes.
    let active: [f64; 2] = [0, 1].map(|j| if e[j] > LOG_CLAMP { w[j] * y[j] } else { 0.0 });
    let total: f64 = active.iter().sum();
    let mut delta: Vec<f64> = (0..2).map(|i| scale * (total * e[i] - active[i])).collect();
    for k in (0..p.num_layers()).rev() {
        let n_in = p.layer_dims[k];
        let input = &acts[k];
        let gw = &mut grads.weights[k];
        for (r, &d) in delta.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            grads.biases[k][r] += d;
            let row = &mut gw[r * n_in..(r + 1) * n_in];
            for (g, a) in row.iter_mut().zip(input) {
                *g += d * a;
            }
        }
        if k == 0 {
            break;
        }
        let wk = &p.weights[k];
        let mut prev = vec![0.0; n_in];
        for (r, &d) in delta.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            for (pv, wv) in prev.iter_mut().zip(&wk[r * n_in..(r + 1) * n_in]) {
                *pv += d * wv;
            }
        }
        // ReLU derivative of the hidden layer feeding layer k.
        for (pv, a) in prev.iter_mut().zip(input) {
            if *a <= 0.0 {
                *pv = 0.0;
            }
        }
        delta = prev;
    }
    Ok(loss)
}

/// Analytic gradient of the weighted cross-entropy of a single sample.
pub fn loss_gradient(p: &MlpParams, x: &[f64], y: &[f64; 2], w: &[f64; 2]) -> Result<(f64, Gradients), MlpError> {
    let mut g = Gradients::zeros_like(p);
    let loss = backprop(p, x, y, w, 1.0, &mut g)?;
    Ok((loss, g))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// One rate per layer; zero freezes the layer.
    pub per_layer_lr: Vec<f64>,
    pub epochs: usize,
    pub batch_size: usize,
    pub momentum: f64,
    pub seed: u64,
    pub l2: f64,
}

impl TrainConfig {
    pub fn scratch(num_layers: usize, seed: u64) -> Self {
        TrainConfig {
            per_layer_lr: vec![SCRATCH_LR; num_layers],
            epochs: 60,
            batch_size: 32,
            momentum: 0.9,
            seed,
            l2: 1e-4,
        }
    }

    pub fn fine_tune(num_layers: usize, seed: u64) -> Self {
        TrainConfig {
            per_layer_lr: vec![FINE_TUNE_LR; num_layers],
            epochs: 10,
            ..Self::scratch(num_layers, seed)
        }
    }

    pub fn validate(&self, num_layers: usize) -> Result<(), MlpError> {
        if self.per_layer_lr.len() != num_layers {
            return Err(MlpError::Dimension {
                expected: num_layers,
                got: self.per_layer_lr.len(),
            });
        }
        if self.per_layer_lr.iter().any(|r| !(*r >= 0.0)) || self.epochs == 0 || self.batch_size == 0 {
            return Err(MlpError::Config(
                "learning rates must be ≥ 0, epochs and batch size ≥ 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) || !(self.l2 >= 0.0) {
            return Err(MlpError::Config("momentum must lie in [0, 1) and l2 ≥ 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub initial_loss: f64,
    pub final_loss: f64,
    pub epoch_losses: Vec<f64>,
}

/// Mean weighted loss over a dataset.
pub fn dataset_loss(p: &MlpParams, data: &[LabeledSample], weights: &ClassWeights) -> Result<f64, MlpError> {
    if data.is_empty() {
        return Err(MlpError::EmptyDataset);
    }
    let mut total = 0.0;
    for s in data {
        let e = p.forward(&s.feature)?;
        total += weighted_cross_entropy(&e, &one_hot(s.label), &weights.w);
    }
    Ok(total / data.len() as f64)
}

/// Minibatch SGD with momentum on the mean weighted loss. Layers whose rate
/// is zero are left untouched, bit for bit.
pub fn train(
    params: &MlpParams,
    dataset: &[LabeledSample],
    weights: &ClassWeights,
    config: &TrainConfig,
) -> Result<(MlpParams, TrainReport), MlpError> {
    params.validate()?;
    config.validate(params.num_layers())?;
    if dataset.is_empty() {
        return Err(MlpError::EmptyDataset);
    }
    if let Some(s) = dataset.iter().find(|s| s.feature.len() != params.input_dim()) {
        return Err(MlpError::Dimension {
            expected: params.input_dim(),
            got: s.feature.len(),
        });
    }
    let mut p = params.clone();
    let mut vel = Gradients::zeros_like(&p);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let initial_loss = dataset_loss(&p, dataset, weights)?;
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mu = config.momentum;

    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let mut g = Gradients::zeros_like(&p);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let s = &dataset[i];
                backprop(&p, &s.feature, &one_hot(s.label), &weights.w, scale, &mut g)?;
            }
            for k in 0..p.num_layers() {
                let lr = config.per_layer_lr[k];
                if lr == 0.0 {
                    continue;
                }
                for ((wv, gv), vv) in p.weights[k]
                    .iter_mut()
                    .zip(&g.weights[k])
                    .zip(vel.weights[k].iter_mut())
                {
                    *vv = mu * *vv - lr * (gv + config.l2 * *wv);
                    *wv += *vv;
                }
                for ((bv, gv), vv) in p.biases[k].iter_mut().zip(&g.biases[k]).zip(vel.biases[k].iter_mut()) {
                    *vv = mu * *vv - lr * gv;
                    *bv += *vv;
                }
            }
        }
        epoch_losses.push(dataset_loss(&p, dataset, weights)?);
    }
    p.validate()?;
    let final_loss = *epoch_losses.last().expect("epochs ≥ 1");
    Ok((
        p,
        TrainReport {
            initial_loss,
            final_loss,
            epoch_losses,
        },
    ))
}

/// Rejects data whose feature version differs from the model's.
pub fn check_feature_version(p: &MlpParams, data_version: &str) -> Result<(), MlpError> {
    if p.feature_version != data_version {
        return Err(MlpError::FeatureVersion {
            model: p.feature_version.clone(),
            data: data_version.to_string(),
        });
    }
    Ok(())
}
