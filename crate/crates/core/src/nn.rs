//! From-scratch feedforward classifier: 4 inputs → ReLU hidden layers →
//! 4-way softmax, trained with mini-batch SGD + momentum on categorical
//! cross-entropy. Everything is f64 and fully deterministic given a seed;
//! the RNG streams and draw order are pinned in `docs/model-format.md`.

use std::path::Path;
use std::time::Instant;

use crate::datamodel::{DoClass, LayerParams, ModelParams, NormStats, TrainingMeta, WaterSample};
use crate::dataset::{apply_norm, fit_norm, DatasetError, LabeledDataset};
use crate::rng::{stream, Rng};

/// Model-file format version written by this build; readers reject a
/// different major.
pub const FORMAT_VERSION: &str = "1.0.0";

pub const INPUT_DIM: usize = 4;
pub const OUTPUT_DIM: usize = 4;

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("layer dimension must be >= 1")]
    ZeroDim,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite activation (exploded parameters)")]
    NonFiniteActivation,
    #[error("non-finite input feature")]
    NonFiniteInput,
    #[error("loss diverged to non-finite at epoch {epoch}")]
    DivergedLoss { epoch: usize },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("model file does not match schema: {0}")]
    SchemaViolation(String),
    #[error("model format {found} incompatible with reader {expected}")]
    VersionMismatch { found: String, expected: String },
}

/// Softmax output over the four DO classes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probabilities(pub [f64; 4]);

impl Probabilities {
    /// First violated invariant clause, if any.
    pub fn validate(&self) -> Result<(), String> {
        let sum: f64 = self.0.iter().sum();
        if self.0.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(format!("probability outside [0,1]: {:?}", self.0));
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(format!("probabilities sum to {sum}"));
        }
        Ok(())
    }

    /// Argmax with ties broken toward the lower (more severe) class.
    pub fn argmax(&self) -> DoClass {
        let mut best = 0;
        for k in 1..4 {
            if self.0[k] > self.0[best] {
                best = k;
            }
        }
        DoClass::from_index(best).unwrap()
    }
}

/// Training hyperparameters. Defaults follow the reference configuration:
/// 150 epochs, batch 32 (clipped to the train split when smaller), five
/// hidden layers of 16.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
    pub hidden_dims: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 150,
            batch_size: 32,
            learning_rate: 0.05,
            momentum: 0.9,
            seed: 7,
            hidden_dims: vec![16; 5],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.epochs == 0 {
            return Err("epochs must be >= 1".to_string());
        }
        if self.batch_size == 0 {
            return Err("batch_size must be >= 1".to_string());
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(format!("learning_rate {} must be finite and > 0", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(format!("momentum {} must be in [0, 1)", self.momentum));
        }
        if self.hidden_dims.is_empty() {
            return Err("at least one hidden layer required".to_string());
        }
        Ok(())
    }
}

/// What a training run did: loss trajectory, held-out metrics, and the 4×4
/// confusion matrix (rows = actual class, columns = predicted).
#[derive(Debug, Clone, serde::Serialize)]
pub struct TrainReport {
    pub initial_train_loss: f64,
    pub epoch_train_losses: Vec<f64>,
    pub final_train_loss: f64,
    pub final_test_loss: f64,
    pub test_accuracy: f64,
    pub confusion: [[u32; 4]; 4],
    pub train_rows: usize,
    pub test_rows: usize,
    pub wall_time_secs: f64,
}

/// Numerically stable softmax over four logits (max-subtraction).
pub fn softmax4(z: &[f64; 4]) -> [f64; 4] {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out = [0.0; 4];
    let mut sum = 0.0;
    for k in 0..4 {
        out[k] = (z[k] - max).exp();
        sum += out[k];
    }
    for o in &mut out {
        *o /= sum;
    }
    out
}

/// log(Σ exp(z)) with max-subtraction; exact ln(4) for all-zero logits.
fn log_sum_exp(z: &[f64]) -> f64 {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// He-style initialization: weights ~ N(0, 2/fan_in), biases zero.
/// Deterministic: draws come from seed stream 2, layer by layer, row-major.
pub fn init_params(
    input_dim: usize,
    hidden_dims: &[usize],
    output_dim: usize,
    seed: u64,
) -> Result<ModelParams, NnError> {
    let mut layer_dims = Vec::with_capacity(hidden_dims.len() + 2);
    layer_dims.push(input_dim);
    layer_dims.extend_from_slice(hidden_dims);
    layer_dims.push(output_dim);
    if layer_dims.contains(&0) {
        return Err(NnError::ZeroDim);
    }

    let mut rng = Rng::with_stream(seed, stream::INIT);
    let mut layers = Vec::with_capacity(layer_dims.len() - 1);
    for w in layer_dims.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let scale = (2.0 / fan_in as f64).sqrt();
        let weights = (0..fan_in * fan_out).map(|_| rng.next_normal() * scale).collect();
        layers.push(LayerParams { weights, biases: vec![0.0; fan_out] });
    }

    Ok(ModelParams {
        format_version: FORMAT_VERSION.to_string(),
        layer_dims,
        layers,
        norm_stats: NormStats { mean: [0.0; 4], std: [1.0; 4] },
        bin_edges: crate::dataset::DEFAULT_BIN_EDGES,
        seed,
        training: None,
    })
}

/// Reusable per-layer buffers for one sample's forward/backward pass.
struct Scratch {
    /// acts[0] = input features; acts[l+1] = post-activation of layer l.
    acts: Vec<Vec<f64>>,
    /// zs[l] = pre-activation of layer l.
    zs: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_next: Vec<f64>,
}

impl Scratch {
    fn for_params(params: &ModelParams) -> Scratch {
        let acts = params.layer_dims.iter().map(|d| vec![0.0; *d]).collect();
        let zs = params.layer_dims[1..].iter().map(|d| vec![0.0; *d]).collect();
        let max_dim = *params.layer_dims.iter().max().unwrap();
        Scratch { acts, zs, delta: vec![0.0; max_dim], delta_next: vec![0.0; max_dim] }
    }
}

/// z = Wᵀa + b for every layer, ReLU between hidden layers. Fills
/// `scratch`; the caller reads the last `zs` entry as the logits.
fn forward_into(params: &ModelParams, features: &[f64], scratch: &mut Scratch) {
    scratch.acts[0].copy_from_slice(features);
    let n_layers = params.layers.len();
    for (l, layer) in params.layers.iter().enumerate() {
        let out_dim = params.layer_dims[l + 1];
        let (before, after) = scratch.acts.split_at_mut(l + 1);
        let a = &before[l];
        let z = &mut scratch.zs[l];
        for (j, zj) in z.iter_mut().enumerate() {
            let mut acc = layer.biases[j];
            for (i, ai) in a.iter().enumerate() {
                acc += ai * layer.weights[i * out_dim + j];
            }
            *zj = acc;
        }
        let out_act = &mut after[0];
        if l + 1 < n_layers {
            for j in 0..out_dim {
                out_act[j] = z[j].max(0.0);
            }
        } else {
            // Output layer activation (softmax) is applied by the caller;
            // keep logits for stable loss computation.
            out_act.copy_from_slice(z);
        }
    }
}

fn check_params_shape(params: &ModelParams) -> Result<(), NnError> {
    params.validate().map_err(NnError::ShapeMismatch)
}

/// Class probabilities for one already-normalized feature vector.
pub fn forward(params: &ModelParams, features: &[f64; 4]) -> Result<Probabilities, NnError> {
    check_params_shape(params)?;
    if params.layer_dims[0] != features.len() {
        return Err(NnError::ShapeMismatch(format!(
            "{} features for input dim {}",
            features.len(),
            params.layer_dims[0]
        )));
    }
    if features.iter().any(|f| !f.is_finite()) {
        return Err(NnError::NonFiniteInput);
    }

    let mut scratch = Scratch::for_params(params);
    forward_into(params, features, &mut scratch);
    let logits = scratch.zs.last().unwrap();
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(NnError::NonFiniteActivation);
    }
    let logits: [f64; 4] = logits.as_slice().try_into().map_err(|_| {
        NnError::ShapeMismatch(format!("output dim {} != 4", scratch.zs.last().unwrap().len()))
    })?;
    Ok(Probabilities(softmax4(&logits)))
}

/// Mean cross-entropy of `params` over a batch, without gradients.
pub fn batch_loss(params: &ModelParams, features: &[[f64; 4]], labels: &[DoClass]) -> f64 {
    let mut scratch = Scratch::for_params(params);
    let mut total = 0.0;
    for (x, y) in features.iter().zip(labels) {
        forward_into(params, x, &mut scratch);
        let z = scratch.zs.last().unwrap();
        total += log_sum_exp(z) - z[y.index()];
    }
    total / features.len() as f64
}

/// Mean cross-entropy loss and its gradient w.r.t. every parameter, by
/// reverse-mode accumulation. The softmax+cross-entropy pair collapses to
/// the `p − onehot` output delta; the ReLU subgradient at exactly 0 is 0.
pub fn loss_and_grads(
    params: &ModelParams,
    features: &[[f64; 4]],
    labels: &[DoClass],
) -> Result<(f64, Vec<LayerParams>), NnError> {
    if features.is_empty() || features.len() != labels.len() {
        return Err(NnError::ShapeMismatch(format!(
            "batch of {} features and {} labels",
            features.len(),
            labels.len()
        )));
    }
    let n_layers = params.layers.len();
    let mut grads: Vec<LayerParams> = params
        .layers
        .iter()
        .map(|l| LayerParams {
            weights: vec![0.0; l.weights.len()],
            biases: vec![0.0; l.biases.len()],
        })
        .collect();

    let mut scratch = Scratch::for_params(params);
    let inv_n = 1.0 / features.len() as f64;
    let mut total_loss = 0.0;

    for (x, y) in features.iter().zip(labels) {
        forward_into(params, x, &mut scratch);
        let logits = scratch.zs.last().unwrap();
        total_loss += log_sum_exp(logits) - logits[y.index()];

        // Output delta: softmax(z) − onehot(label).
        let logits4: [f64; 4] = logits.as_slice().try_into().map_err(|_| {
            NnError::ShapeMismatch(format!("output dim {} != 4", logits.len()))
        })?;
        let probs = softmax4(&logits4);
        for (k, p) in probs.iter().enumerate() {
            scratch.delta[k] = p - if k == y.index() { 1.0 } else { 0.0 };
        }

        for l in (0..n_layers).rev() {
            let in_dim = params.layer_dims[l];
            let out_dim = params.layer_dims[l + 1];
            let a = &scratch.acts[l];
            let g = &mut grads[l];
            for (i, ai) in a.iter().enumerate() {
                let row = &mut g.weights[i * out_dim..(i + 1) * out_dim];
                for (j, w) in row.iter_mut().enumerate() {
                    *w += ai * scratch.delta[j] * inv_n;
                }
            }
            for j in 0..out_dim {
                g.biases[j] += scratch.delta[j] * inv_n;
            }
            if l > 0 {
                // delta_prev = (W · delta) masked by ReLU'(z_{l-1}).
                let w = &params.layers[l].weights;
                let z_prev = &scratch.zs[l - 1];
                for i in 0..in_dim {
                    let mut acc = 0.0;
                    for j in 0..out_dim {
                        acc += w[i * out_dim + j] * scratch.delta[j];
                    }
                    scratch.delta_next[i] = if z_prev[i] > 0.0 { acc } else { 0.0 };
                }
                std::mem::swap(&mut scratch.delta, &mut scratch.delta_next);
            }
        }
    }

    Ok((total_loss * inv_n, grads))
}

/// Max relative error between analytic gradients and central finite
/// differences at `eps`, over every weight and bias. Relative error is
/// |a − n| / max(1e-12, |a| + |n|).
pub fn grad_check(
    params: &ModelParams,
    features: &[[f64; 4]],
    labels: &[DoClass],
    eps: f64,
) -> Result<f64, NnError> {
    let (_, grads) = loss_and_grads(params, features, labels)?;
    Ok(max_rel_error_vs_numeric(params, &grads, features, labels, eps))
}

/// Compare a provided gradient set against finite differences. Split out of
/// `grad_check` so tests can feed deliberately corrupted gradients.
pub(crate) fn max_rel_error_vs_numeric(
    params: &ModelParams,
    analytic: &[LayerParams],
    features: &[[f64; 4]],
    labels: &[DoClass],
    eps: f64,
) -> f64 {
    let mut probe = params.clone();
    let mut max_err = 0.0f64;
    for l in 0..params.layers.len() {
        for slot in 0..params.layers[l].weights.len() + params.layers[l].biases.len() {
            let read = |p: &ModelParams| {
                let layer = &p.layers[l];
                if slot < layer.weights.len() {
                    layer.weights[slot]
                } else {
                    layer.biases[slot - layer.weights.len()]
                }
            };
            let write = |p: &mut ModelParams, v: f64| {
                let layer = &mut p.layers[l];
                if slot < layer.weights.len() {
                    layer.weights[slot] = v;
                } else {
                    let i = slot - layer.weights.len();
                    layer.biases[i] = v;
                }
            };
            let orig = read(params);
            write(&mut probe, orig + eps);
            let plus = batch_loss(&probe, features, labels);
            write(&mut probe, orig - eps);
            let minus = batch_loss(&probe, features, labels);
            write(&mut probe, orig);
            let numeric = (plus - minus) / (2.0 * eps);
            let a = read_grad(analytic, l, slot);
            let err = (a - numeric).abs() / f64::max(1e-12, a.abs() + numeric.abs());
            max_err = max_err.max(err);
        }
    }
    max_err
}

fn read_grad(grads: &[LayerParams], l: usize, slot: usize) -> f64 {
    let layer = &grads[l];
    if slot < layer.weights.len() {
        layer.weights[slot]
    } else {
        layer.biases[slot - layer.weights.len()]
    }
}

/// Train on `dataset` under `config`: deterministic 80/20 split,
/// normalization fitted on the train portion only, shuffled mini-batch SGD
/// with momentum. The returned model embeds the normalization and bin
/// edges, so it is self-contained for live prediction.
pub fn train(
    dataset: &LabeledDataset,
    config: &TrainConfig,
) -> Result<(ModelParams, TrainReport), NnError> {
    config.validate().map_err(NnError::ShapeMismatch)?;
    let started = Instant::now();

    let (train_set, test_set) = dataset.split(0.8, config.seed)?;
    let stats = fit_norm(&train_set)?;
    let norm = |set: &LabeledDataset| -> Vec<[f64; 4]> {
        set.samples().iter().map(|s| apply_norm(&stats, s)).collect()
    };
    let train_x = norm(&train_set);
    let train_y: Vec<DoClass> = train_set.labels().to_vec();
    let test_x = norm(&test_set);
    let test_y: Vec<DoClass> = test_set.labels().to_vec();

    // The reference batch size of 32 can exceed a small train split; clip.
    let batch_size = config.batch_size.min(train_x.len());

    let mut params = init_params(INPUT_DIM, &config.hidden_dims, OUTPUT_DIM, config.seed)?;
    params.norm_stats = stats;
    params.bin_edges = dataset.bin_edges();
    params.training = Some(TrainingMeta {
        epochs: config.epochs,
        batch_size,
        learning_rate: config.learning_rate,
        momentum: config.momentum,
        dataset_fingerprint: dataset.fingerprint(),
    });

    let mut velocity: Vec<LayerParams> = params
        .layers
        .iter()
        .map(|l| LayerParams {
            weights: vec![0.0; l.weights.len()],
            biases: vec![0.0; l.biases.len()],
        })
        .collect();

    let initial_train_loss = batch_loss(&params, &train_x, &train_y);
    let mut epoch_train_losses = Vec::with_capacity(config.epochs);
    let mut shuffle_rng = Rng::with_stream(config.seed, stream::SHUFFLE);
    let mut order: Vec<usize> = (0..train_x.len()).collect();
    let mut batch_x: Vec<[f64; 4]> = Vec::with_capacity(batch_size);
    let mut batch_y: Vec<DoClass> = Vec::with_capacity(batch_size);

    for epoch in 0..config.epochs {
        shuffle_rng.shuffle(&mut order);
        for chunk in order.chunks(batch_size) {
            batch_x.clear();
            batch_y.clear();
            for &i in chunk {
                batch_x.push(train_x[i]);
                batch_y.push(train_y[i]);
            }
            let (loss, grads) = loss_and_grads(&params, &batch_x, &batch_y)?;
            if !loss.is_finite() {
                return Err(NnError::DivergedLoss { epoch });
            }
            for ((layer, g), v) in params.layers.iter_mut().zip(&grads).zip(&mut velocity) {
                for (slot, (w, gw)) in layer.weights.iter_mut().zip(&g.weights).enumerate() {
                    let vel = &mut v.weights[slot];
                    *vel = config.momentum * *vel - config.learning_rate * gw;
                    *w += *vel;
                }
                for (slot, (b, gb)) in layer.biases.iter_mut().zip(&g.biases).enumerate() {
                    let vel = &mut v.biases[slot];
                    *vel = config.momentum * *vel - config.learning_rate * gb;
                    *b += *vel;
                }
            }
        }
        let epoch_loss = batch_loss(&params, &train_x, &train_y);
        if !epoch_loss.is_finite() {
            return Err(NnError::DivergedLoss { epoch });
        }
        epoch_train_losses.push(epoch_loss);
    }

    // Held-out evaluation with the final parameters.
    let mut confusion = [[0u32; 4]; 4];
    let mut correct = 0usize;
    for (x, y) in test_x.iter().zip(&test_y) {
        let probs = forward(&params, x)?;
        let predicted = probs.argmax();
        confusion[y.index()][predicted.index()] += 1;
        if predicted == *y {
            correct += 1;
        }
    }
    let final_test_loss = batch_loss(&params, &test_x, &test_y);

    let report = TrainReport {
        initial_train_loss,
        final_train_loss: *epoch_train_losses.last().unwrap(),
        epoch_train_losses,
        final_test_loss,
        test_accuracy: correct as f64 / test_y.len() as f64,
        confusion,
        train_rows: train_x.len(),
        test_rows: test_x.len(),
        wall_time_secs: started.elapsed().as_secs_f64(),
    };
    Ok((params, report))
}

/// Classify a raw (un-normalized) sample with a trained model.
pub fn predict(
    params: &ModelParams,
    sample: &WaterSample,
) -> Result<(DoClass, Probabilities), NnError> {
    let features = sample.features();
    if features.iter().any(|f| !f.is_finite()) {
        return Err(NnError::NonFiniteInput);
    }
    let normalized = apply_norm(&params.norm_stats, sample);
    let probs = forward(params, &normalized)?;
    Ok((probs.argmax(), probs))
}

/// Write a model file (structured JSON, schema in docs/model-format.md).
/// Output is byte-deterministic for identical params.
pub fn save_model(params: &ModelParams, path: impl AsRef<Path>) -> Result<(), NnError> {
    let path = path.as_ref();
    check_params_shape(params)?;
    let mut text = serde_json::to_string_pretty(params)
        .map_err(|e| NnError::SchemaViolation(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text)
        .map_err(|source| NnError::Io { path: path.display().to_string(), source })
}

/// Read and validate a model file. Rejects a different format major.
pub fn load_model(path: impl AsRef<Path>) -> Result<ModelParams, NnError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| NnError::Io { path: path.display().to_string(), source })?;
    let params: ModelParams =
        serde_json::from_str(&text).map_err(|e| NnError::SchemaViolation(e.to_string()))?;

    let major = params.format_version.split('.').next().unwrap_or("");
    let expected_major = FORMAT_VERSION.split('.').next().unwrap();
    if major != expected_major {
        return Err(NnError::VersionMismatch {
            found: params.format_version.clone(),
            expected: FORMAT_VERSION.to_string(),
        });
    }
    check_params_shape(&params)?;
    Ok(params)
}
