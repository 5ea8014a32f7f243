//! Training-data handling: CSV loading, DO-class labeling, z-score
//! normalization, and the deterministic train/test split.
//!
//! CSV contract: ASCII, comma-separated, optional single header row,
//! columns exactly `temp,do,ph,tds,floc`. `data/table3.csv` is the
//! canonical fixture.

use std::path::Path;

use crate::datamodel::{DoClass, NormStats, WaterSample};
use crate::rng::{stream, Rng};

/// DO bin edges in mg/L: class 0 below edge 0, class 3 at or above edge 2,
/// boundaries left-inclusive on the upper class. The defaults are a
/// documented operating constant (DO < 3 stressful, 5–7 adequate), not a
/// measured ground truth.
pub const DEFAULT_BIN_EDGES: [f64; 3] = [3.0, 5.0, 7.0];

pub const FEATURE_NAMES: [&str; 4] = ["temp", "ph", "tds", "floc"];
const EXPECTED_HEADER: [&str; 5] = ["temp", "do", "ph", "tds", "floc"];

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("missing or wrong column: {0}")]
    MissingColumn(String),
    #[error("line {line}, field {field}: {reason}")]
    RowParse { line: usize, field: String, reason: String },
    #[error("no data rows in {0}")]
    EmptyFile(String),
    #[error("line {line}: {clause}")]
    InvariantViolation { line: usize, clause: String },
    #[error("do_mg_l {0} is not finite")]
    NonFinite(f64),
    #[error("feature {0} is constant across the dataset")]
    ConstantFeature(&'static str),
    #[error("split of {rows} rows at fraction {fraction} leaves an empty side")]
    DegenerateSplit { rows: usize, fraction: f64 },
}

/// Labeled samples: every sample carries a measured DO, and its label is
/// always `bin_do` of that DO under the edges the dataset was built with.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    samples: Vec<WaterSample>,
    labels: Vec<DoClass>,
    bin_edges: [f64; 3],
}

/// Map a measured DO value to its class under `edges`.
pub fn bin_do_with(do_mg_l: f64, edges: &[f64; 3]) -> Result<DoClass, DatasetError> {
    if !do_mg_l.is_finite() {
        return Err(DatasetError::NonFinite(do_mg_l));
    }
    Ok(if do_mg_l < edges[0] {
        DoClass::Shallow
    } else if do_mg_l < edges[1] {
        DoClass::Low
    } else if do_mg_l < edges[2] {
        DoClass::Average
    } else {
        DoClass::High
    })
}

/// `bin_do_with` under the default edges.
pub fn bin_do(do_mg_l: f64) -> Result<DoClass, DatasetError> {
    bin_do_with(do_mg_l, &DEFAULT_BIN_EDGES)
}

impl LabeledDataset {
    /// Build from samples that all carry DO, labeling with `edges`.
    pub fn from_rows(samples: Vec<WaterSample>, edges: [f64; 3]) -> Result<Self, DatasetError> {
        let mut labels = Vec::with_capacity(samples.len());
        for (i, sample) in samples.iter().enumerate() {
            sample
                .validate()
                .map_err(|clause| DatasetError::InvariantViolation { line: i + 1, clause })?;
            let d = sample.do_mg_l.ok_or(DatasetError::InvariantViolation {
                line: i + 1,
                clause: "do_mg_l absent".to_string(),
            })?;
            labels.push(bin_do_with(d, &edges)?);
        }
        if samples.is_empty() {
            return Err(DatasetError::EmptyFile("<memory>".to_string()));
        }
        Ok(LabeledDataset { samples, labels, bin_edges: edges })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[WaterSample] {
        &self.samples
    }

    pub fn labels(&self) -> &[DoClass] {
        &self.labels
    }

    pub fn bin_edges(&self) -> [f64; 3] {
        self.bin_edges
    }

    /// Row `i` as the fixed-order feature vector.
    pub fn features(&self, i: usize) -> [f64; 4] {
        self.samples[i].features()
    }

    /// N×4 feature matrix in (temp, ph, tds, floc) order.
    pub fn feature_matrix(&self) -> Vec<[f64; 4]> {
        self.samples.iter().map(|s| s.features()).collect()
    }

    /// FNV-1a64 over every row's (temp, do, ph, tds, floc) bit patterns,
    /// hex-encoded. Stable identity for the training-metadata block.
    pub fn fingerprint(&self) -> String {
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |v: f64| {
            for byte in v.to_bits().to_le_bytes() {
                hash ^= byte as u64;
                hash = hash.wrapping_mul(0x100_0000_01b3);
            }
        };
        for s in &self.samples {
            eat(s.temp);
            eat(s.do_mg_l.unwrap_or(f64::NEG_INFINITY));
            eat(s.ph);
            eat(s.tds);
            eat(s.floc);
        }
        format!("{hash:016x}")
    }

    /// Shuffled-then-cut split: Fisher–Yates over row indices with the
    /// pinned generator (seed stream 1), train taking the first
    /// `floor(N × fraction)` rows. Same seed, same partition.
    pub fn split(
        &self,
        train_fraction: f64,
        seed: u64,
    ) -> Result<(LabeledDataset, LabeledDataset), DatasetError> {
        let n = self.len();
        let degenerate =
            || DatasetError::DegenerateSplit { rows: n, fraction: train_fraction };
        if n < 2 {
            return Err(degenerate());
        }
        let train_n = (n as f64 * train_fraction).floor() as usize;
        if train_n == 0 || train_n >= n {
            return Err(degenerate());
        }

        let mut order: Vec<usize> = (0..n).collect();
        Rng::with_stream(seed, stream::SPLIT).shuffle(&mut order);

        let take = |idx: &[usize]| LabeledDataset {
            samples: idx.iter().map(|&i| self.samples[i]).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            bin_edges: self.bin_edges,
        };
        Ok((take(&order[..train_n]), take(&order[train_n..])))
    }
}

/// Load a Table III-format CSV. With `header_expected`, the first
/// non-empty row must be exactly `temp,do,ph,tds,floc` (case-insensitive).
pub fn load_csv(path: impl AsRef<Path>, header_expected: bool) -> Result<LabeledDataset, DatasetError> {
    load_csv_with_edges(path, header_expected, DEFAULT_BIN_EDGES)
}

/// `load_csv`, sniffing whether the first row is a header.
pub fn load_csv_auto(path: impl AsRef<Path>) -> Result<LabeledDataset, DatasetError> {
    let path = path.as_ref();
    let text = read(path)?;
    let has_header = text
        .lines()
        .find(|l| !l.trim().is_empty())
        .is_some_and(|l| l.split(',').next().unwrap_or("").trim().parse::<f64>().is_err());
    load_csv(path, has_header)
}

pub fn load_csv_with_edges(
    path: impl AsRef<Path>,
    header_expected: bool,
    edges: [f64; 3],
) -> Result<LabeledDataset, DatasetError> {
    let path = path.as_ref();
    let text = read(path)?;

    let mut samples = Vec::new();
    let mut labels = Vec::new();
    let mut header_seen = false;
    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if header_expected && !header_seen {
            check_header(line)?;
            header_seen = true;
            continue;
        }

        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 5 {
            return Err(DatasetError::RowParse {
                line: lineno,
                field: "row".to_string(),
                reason: format!("expected 5 columns, got {}", fields.len()),
            });
        }
        let mut values = [0.0; 5];
        for (i, (name, field)) in EXPECTED_HEADER.iter().zip(&fields).enumerate() {
            values[i] = field.parse::<f64>().map_err(|e| DatasetError::RowParse {
                line: lineno,
                field: name.to_string(),
                reason: format!("{field:?}: {e}"),
            })?;
        }
        let sample = WaterSample::with_do(values[0], values[2], values[3], values[4], values[1]);
        sample
            .validate()
            .map_err(|clause| DatasetError::InvariantViolation { line: lineno, clause })?;
        labels.push(bin_do_with(values[1], &edges)?);
        samples.push(sample);
    }

    if samples.is_empty() {
        return Err(DatasetError::EmptyFile(path.display().to_string()));
    }
    Ok(LabeledDataset { samples, labels, bin_edges: edges })
}

fn read(path: &Path) -> Result<String, DatasetError> {
    std::fs::read_to_string(path)
        .map_err(|source| DatasetError::Io { path: path.display().to_string(), source })
}

fn check_header(line: &str) -> Result<(), DatasetError> {
    let got: Vec<String> =
        line.split(',').map(|f| f.trim().to_ascii_lowercase()).collect();
    for (i, expected) in EXPECTED_HEADER.iter().enumerate() {
        match got.get(i) {
            Some(g) if g == expected => {}
            Some(g) => {
                return Err(DatasetError::MissingColumn(format!(
                    "column {i} is {g:?}, expected {expected:?}"
                )))
            }
            None => return Err(DatasetError::MissingColumn(format!("{expected:?} absent"))),
        }
    }
    if got.len() > EXPECTED_HEADER.len() {
        return Err(DatasetError::MissingColumn(format!(
            "unexpected extra column {:?}",
            got[EXPECTED_HEADER.len()]
        )));
    }
    Ok(())
}

/// Per-feature mean and population standard deviation over the dataset.
pub fn fit_norm(dataset: &LabeledDataset) -> Result<NormStats, DatasetError> {
    let n = dataset.len() as f64;
    let mut mean = [0.0; 4];
    let mut lo = [f64::INFINITY; 4];
    let mut hi = [f64::NEG_INFINITY; 4];
    for s in dataset.samples() {
        for (k, v) in s.features().iter().enumerate() {
            mean[k] += v;
            lo[k] = lo[k].min(*v);
            hi[k] = hi[k].max(*v);
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    for (k, name) in FEATURE_NAMES.iter().enumerate() {
        if lo[k] == hi[k] {
            return Err(DatasetError::ConstantFeature(name));
        }
    }
    let mut var = [0.0; 4];
    for s in dataset.samples() {
        for (k, v) in s.features().iter().enumerate() {
            var[k] += (v - mean[k]).powi(2);
        }
    }
    let mut std = [0.0; 4];
    for k in 0..4 {
        std[k] = (var[k] / n).sqrt();
    }
    Ok(NormStats { mean, std })
}

/// z-score a sample's features: (x − mean) / std per feature.
pub fn apply_norm(stats: &NormStats, sample: &WaterSample) -> [f64; 4] {
    let f = sample.features();
    let mut out = [0.0; 4];
    for k in 0..4 {
        out[k] = (f[k] - stats.mean[k]) / stats.std[k];
    }
    out
}
