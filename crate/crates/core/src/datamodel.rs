//! Core domain types shared by every stage of the pipeline.
//!
//! All types are plain immutable values; validation routines return the
//! first violated clause as a human-readable string so callers can surface
//! exactly what is wrong with a reading, a model, or an advisory.

use serde::{Deserialize, Serialize};

/// One water reading: the four model features plus optional measured
/// dissolved oxygen (present in training rows, absent in live frames).
///
/// Units: temp in °C, pH dimensionless, TDS on the training-data scale,
/// floc volume in ml (Imhoff-cone reading), DO in mg/L.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaterSample {
    pub temp: f64,
    pub ph: f64,
    pub tds: f64,
    pub floc: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub do_mg_l: Option<f64>,
}

impl WaterSample {
    pub fn new(temp: f64, ph: f64, tds: f64, floc: f64) -> Self {
        WaterSample { temp, ph, tds, floc, do_mg_l: None }
    }

    pub fn with_do(temp: f64, ph: f64, tds: f64, floc: f64, do_mg_l: f64) -> Self {
        WaterSample { temp, ph, tds, floc, do_mg_l: Some(do_mg_l) }
    }

    /// The feature vector in the fixed (temp, ph, tds, floc) order.
    pub fn features(&self) -> [f64; 4] {
        [self.temp, self.ph, self.tds, self.floc]
    }

    /// First violated invariant clause, if any.
    pub fn validate(&self) -> Result<(), String> {
        if !self.temp.is_finite() || !(0.0..60.0).contains(&self.temp) {
            return Err(format!("temp {} not finite in [0, 60)", self.temp));
        }
        if !self.ph.is_finite() || !(0.0..=14.0).contains(&self.ph) {
            return Err(format!("ph {} not finite in [0, 14]", self.ph));
        }
        if !self.tds.is_finite() || self.tds < 0.0 {
            return Err(format!("tds {} not finite and >= 0", self.tds));
        }
        if !self.floc.is_finite() || self.floc < 0.0 {
            return Err(format!("floc {} not finite and >= 0", self.floc));
        }
        if let Some(d) = self.do_mg_l {
            if !d.is_finite() || d < 0.0 {
                return Err(format!("do_mg_l {d} not finite and >= 0"));
            }
        }
        Ok(())
    }
}

/// The 4-level dissolved-oxygen class. Ordering is severity-meaningful:
/// lower index = worse condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DoClass {
    Shallow = 0,
    Low = 1,
    Average = 2,
    High = 3,
}

impl DoClass {
    pub const ALL: [DoClass; 4] = [DoClass::Shallow, DoClass::Low, DoClass::Average, DoClass::High];
    pub const COUNT: usize = 4;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<DoClass> {
        Self::ALL.get(i).copied()
    }

    pub fn label(self) -> &'static str {
        match self {
            DoClass::Shallow => "shallow",
            DoClass::Low => "low",
            DoClass::Average => "average",
            DoClass::High => "high",
        }
    }
}

impl std::fmt::Display for DoClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// One wire-protocol reading from one device. `sample.do_mg_l` is always
/// absent here: DO is what the model predicts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorFrame {
    pub device_id: String,
    pub seq: u64,
    pub timestamp: u64,
    #[serde(flatten)]
    pub sample: WaterSample,
}

/// device_id grammar: 1–32 chars from [A-Za-z0-9_-].
pub fn valid_device_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 32
        && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
}

impl SensorFrame {
    /// First violated invariant clause, if any.
    pub fn validate(&self) -> Result<(), String> {
        if !valid_device_id(&self.device_id) {
            return Err(format!(
                "device_id {:?} must be 1-32 chars of [A-Za-z0-9_-]",
                self.device_id
            ));
        }
        self.sample.validate()
    }
}

/// Alert severity, ordered info < warning < critical.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Info,
    Warning,
    Critical,
}

impl std::fmt::Display for Severity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Severity::Info => "info",
            Severity::Warning => "warning",
            Severity::Critical => "critical",
        })
    }
}

/// Structured alert produced by the rule engine for one classified reading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Advisory {
    pub device_id: String,
    pub timestamp: u64,
    pub predicted_class: DoClass,
    pub probabilities: [f64; 4],
    pub severity: Severity,
    pub actions: Vec<String>,
    pub triggered_rules: Vec<String>,
}

impl Advisory {
    /// First violated invariant clause, if any.
    pub fn validate(&self) -> Result<(), String> {
        let mut sum = 0.0;
        for (i, p) in self.probabilities.iter().enumerate() {
            if !(0.0..=1.0).contains(p) {
                return Err(format!("probability[{i}] = {p} not in [0, 1]"));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(format!("probabilities sum {sum} != 1 within 1e-9"));
        }
        if self.severity != Severity::Info && self.actions.is_empty() {
            return Err("actions empty for non-info severity".to_string());
        }
        Ok(())
    }
}

/// Full parameter set of a trained classifier, as stored in a model file:
/// layer weights and biases, the normalization fitted on the training
/// split, the DO bin edges the labels were derived from, and the seed the
/// whole run was keyed on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub format_version: String,
    /// Layer widths, first = 4 (features), last = 4 (classes).
    pub layer_dims: Vec<usize>,
    pub layers: Vec<LayerParams>,
    pub norm_stats: NormStats,
    pub bin_edges: [f64; 3],
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training: Option<TrainingMeta>,
}

/// One dense layer: weights in row-major [in_dim × out_dim] order
/// (weights[i * out_dim + j] connects input i to output j) plus one bias
/// per output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

/// Per-feature z-score statistics (population standard deviation), in the
/// fixed (temp, ph, tds, floc) order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: [f64; 4],
    pub std: [f64; 4],
}

/// Provenance block embedded in a model file. Everything here is
/// deterministic given the training inputs, so it never breaks
/// byte-identical reproducibility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// FNV-1a64 over the dataset rows, hex-encoded (see docs/model-format.md).
    pub dataset_fingerprint: String,
}

impl ModelParams {
    /// First violated invariant clause, if any.
    pub fn validate(&self) -> Result<(), String> {
        if self.layer_dims.len() < 2 {
            return Err("layer_dims needs at least input and output".to_string());
        }
        if self.layer_dims[0] != 4 {
            return Err(format!("input dim {} != 4", self.layer_dims[0]));
        }
        if *self.layer_dims.last().unwrap() != 4 {
            return Err(format!("output dim {} != 4", self.layer_dims.last().unwrap()));
        }
        if self.layers.len() != self.layer_dims.len() - 1 {
            return Err(format!(
                "{} weight matrices for {} layer dims",
                self.layers.len(),
                self.layer_dims.len()
            ));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            let (rows, cols) = (self.layer_dims[l], self.layer_dims[l + 1]);
            if layer.weights.len() != rows * cols {
                return Err(format!(
                    "layer {l}: {} weights, expected {rows}x{cols}",
                    layer.weights.len()
                ));
            }
            if layer.biases.len() != cols {
                return Err(format!("layer {l}: {} biases, expected {cols}", layer.biases.len()));
            }
            if let Some(w) = layer.weights.iter().chain(&layer.biases).find(|w| !w.is_finite()) {
                return Err(format!("layer {l}: non-finite parameter {w}"));
            }
        }
        for (i, s) in self.norm_stats.std.iter().enumerate() {
            if !s.is_finite() || *s <= 0.0 {
                return Err(format!("norm std[{i}] = {s} must be > 0"));
            }
        }
        if self.norm_stats.mean.iter().any(|m| !m.is_finite()) {
            return Err("non-finite norm mean".to_string());
        }
        if !(self.bin_edges[0] < self.bin_edges[1] && self.bin_edges[1] < self.bin_edges[2]) {
            return Err(format!("bin_edges {:?} not strictly ascending", self.bin_edges));
        }
        Ok(())
    }
}
