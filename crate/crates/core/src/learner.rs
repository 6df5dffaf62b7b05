//! Base classifier layer: a built-in linear softmax model trained with
//! mini-batch SGD, plus ingestion of externally produced prediction files.
//!
//! The built-in model is a desk-scale stand-in for heavyweight CNN
//! backbones; anything that emits row-stochastic softmax outputs per
//! sample can be plugged in through the prediction CSV format instead.

use crate::format::fmt_sig;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

/// Number of diagnostic classes; fixed everywhere in this crate.
pub const NUM_CLASSES: usize = 3;

/// Exact header of the prediction CSV interchange format.
pub const PREDICTION_CSV_HEADER: &str = "id,p_AD,p_MCI,p_CN";

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("bad prediction CSV header: expected '{PREDICTION_CSV_HEADER}', got '{0}'")]
    BadHeader(String),
    #[error("negative probability {value} for id '{id}'")]
    NegativeProbability { id: String, value: f64 },
    #[error("row sum {sum} outside tolerance for id '{id}'")]
    RowSumOutOfTolerance { id: String, sum: f64 },
    #[error("duplicate id '{0}'")]
    DuplicateId(String),
    #[error("unknown label '{0}' (expected AD, MCI, or CN)")]
    BadLabel(String),
    #[error("malformed row: {0}")]
    BadRow(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl LearnError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::DimensionMismatch { .. } => "base_learner/DimensionMismatch",
            Self::EmptyDataset => "base_learner/EmptyDataset",
            Self::BadHeader(_) => "base_learner/BadHeader",
            Self::NegativeProbability { .. } => "base_learner/NegativeProbability",
            Self::RowSumOutOfTolerance { .. } => "base_learner/RowSumOutOfTolerance",
            Self::DuplicateId(_) => "base_learner/DuplicateId",
            Self::BadLabel(_) => "base_learner/BadLabel",
            Self::BadRow(_) => "base_learner/BadRow",
            Self::Io(_) => "base_learner/Io",
            Self::Json(_) => "base_learner/Json",
        }
    }
}

pub type Result<T> = std::result::Result<T, LearnError>;

/// Diagnostic class with fixed index order AD=0, MCI=1, CN=2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "AD")]
    Ad,
    #[serde(rename = "MCI")]
    Mci,
    #[serde(rename = "CN")]
    Cn,
}

impl Label {
    pub const ALL: [Label; NUM_CLASSES] = [Label::Ad, Label::Mci, Label::Cn];

    pub const fn index(self) -> usize {
        match self {
            Label::Ad => 0,
            Label::Mci => 1,
            Label::Cn => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Label> {
        Label::ALL.get(i).copied()
    }

    pub const fn as_str(self) -> &'static str {
        match self {
            Label::Ad => "AD",
            Label::Mci => "MCI",
            Label::Cn => "CN",
        }
    }

    /// Index of the largest entry; ties break toward the lower class
    /// index (AD < MCI < CN) for determinism.
    pub fn argmax(row: &[f64; NUM_CLASSES]) -> Label {
        let mut best = 0;
        for c in 1..NUM_CLASSES {
            if row[c] > row[best] {
                best = c;
            }
        }
        Label::from_index(best).expect("index in range")
    }
}

impl std::str::FromStr for Label {
    type Err = LearnError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "AD" => Ok(Label::Ad),
            "MCI" => Ok(Label::Mci),
            "CN" => Ok(Label::Cn),
            other => Err(LearnError::BadLabel(other.to_string())),
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.as_str())
    }
}

/// Training hyperparameters for the built-in learner and the stacking
/// meta-learner. Loss is fixed to categorical cross-entropy, the
/// optimizer to plain SGD with no schedule, momentum, or weight decay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            learning_rate: 0.001,
            batch_size: 16,
            seed: 0,
        }
    }
}

/// Batch size used when each scan contributes a single sample.
pub const MAX_ONE_BATCH_SIZE: usize = 2;

/// Affine map from D features to 3 class logits, softmax-normalized at
/// prediction time. Weights are stored row-major, class-major:
/// `weights[c * feature_dim + d]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub feature_dim: usize,
}

impl LinearModel {
    pub fn zeros(feature_dim: usize) -> Self {
        Self {
            weights: vec![0.0; NUM_CLASSES * feature_dim],
            bias: vec![0.0; NUM_CLASSES],
            feature_dim,
        }
    }

    pub fn logits(&self, x: &[f64]) -> [f64; NUM_CLASSES] {
        let mut out = [0.0; NUM_CLASSES];
        for (c, o) in out.iter_mut().enumerate() {
            let row = &self.weights[c * self.feature_dim..(c + 1) * self.feature_dim];
            *o = self.bias[c] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
        out
    }
}

/// Numerically stable softmax (max-subtracted before exponentiation).
pub fn softmax(logits: &[f64; NUM_CLASSES]) -> [f64; NUM_CLASSES] {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out = [0.0; NUM_CLASSES];
    let mut sum = 0.0;
    for (o, &z) in out.iter_mut().zip(logits) {
        *o = (z - m).exp();
        sum += *o;
    }
    for o in &mut out {
        *o /= sum;
    }
    out
}

fn check_features(features: &[Vec<f64>], dim: usize) -> Result<()> {
    for row in features {
        if row.len() != dim {
            return Err(LearnError::DimensionMismatch {
                expected: dim,
                got: row.len(),
            });
        }
    }
    Ok(())
}

/// Mean categorical cross-entropy of the model over a dataset, computed
/// through log-softmax for stability.
pub fn mean_cross_entropy(
    model: &LinearModel,
    features: &[Vec<f64>],
    labels: &[Label],
) -> Result<f64> {
    if features.is_empty() {
        return Err(LearnError::EmptyDataset);
    }
    if features.len() != labels.len() {
        return Err(LearnError::DimensionMismatch {
            expected: features.len(),
            got: labels.len(),
        });
    }
    check_features(features, model.feature_dim)?;
    let mut total = 0.0;
    for (x, &y) in features.iter().zip(labels) {
        let z = model.logits(x);
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_norm = z.iter().map(|&v| (v - m).exp()).sum::<f64>().ln() + m;
        total += log_norm - z[y.index()];
    }
    Ok(total / features.len() as f64)
}

/// Analytic gradient of [`mean_cross_entropy`] over a batch:
/// `dW[c][d] = mean_i (p_ic - y_ic) x_id`, `db[c] = mean_i (p_ic - y_ic)`.
pub fn batch_gradient(
    model: &LinearModel,
    features: &[Vec<f64>],
    labels: &[Label],
) -> Result<(Vec<f64>, Vec<f64>)> {
    if features.is_empty() {
        return Err(LearnError::EmptyDataset);
    }
    if features.len() != labels.len() {
        return Err(LearnError::DimensionMismatch {
            expected: features.len(),
            got: labels.len(),
        });
    }
    check_features(features, model.feature_dim)?;
    let d = model.feature_dim;
    let mut dw = vec![0.0; NUM_CLASSES * d];
    let mut db = vec![0.0; NUM_CLASSES];
    let scale = 1.0 / features.len() as f64;
    for (x, &y) in features.iter().zip(labels) {
        let p = softmax(&model.logits(x));
        for c in 0..NUM_CLASSES {
            let err = (p[c] - if c == y.index() { 1.0 } else { 0.0 }) * scale;
            db[c] += err;
            let row = &mut dw[c * d..(c + 1) * d];
            for (w, &v) in row.iter_mut().zip(x) {
                *w += err * v;
            }
        }
    }
    Ok((dw, db))
}

/// Train a linear softmax classifier with mini-batch SGD.
///
/// Weights start at zero; the sample order is shuffled with a ChaCha
/// stream seeded by `config.seed` and reshuffled every epoch, so the
/// result is a deterministic function of (data, config). The final
/// short batch is used as-is.
pub fn train(features: &[Vec<f64>], labels: &[Label], config: &TrainConfig) -> Result<LinearModel> {
    if features.is_empty() {
        return Err(LearnError::EmptyDataset);
    }
    if features.len() != labels.len() {
        return Err(LearnError::DimensionMismatch {
            expected: features.len(),
            got: labels.len(),
        });
    }
    let dim = features[0].len();
    check_features(features, dim)?;
    assert!(config.batch_size >= 1, "batch_size must be at least 1");
    assert!(config.learning_rate > 0.0, "learning_rate must be positive");

    let mut model = LinearModel::zeros(dim);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..features.len()).collect();
    let mut batch_x: Vec<Vec<f64>> = Vec::with_capacity(config.batch_size);
    let mut batch_y: Vec<Label> = Vec::with_capacity(config.batch_size);

    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            batch_x.clear();
            batch_y.clear();
            for &i in chunk {
                batch_x.push(features[i].clone());
                batch_y.push(labels[i]);
            }
            let (dw, db) = batch_gradient(&model, &batch_x, &batch_y)?;
            for (w, g) in model.weights.iter_mut().zip(&dw) {
                *w -= config.learning_rate * g;
            }
            for (b, g) in model.bias.iter_mut().zip(&db) {
                *b -= config.learning_rate * g;
            }
        }
    }
    Ok(model)
}

/// Row-stochastic softmax outputs of one model over an id-tagged sample
/// set.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMatrix {
    model_id: String,
    ids: Vec<String>,
    probs: Vec<[f64; NUM_CLASSES]>,
}

impl PredictionMatrix {
    /// Validate and renormalize rows. Row sums must already be within
    /// `tolerance` of 1; every stored row then sums to 1 exactly up to
    /// f64 rounding.
    pub fn with_tolerance(
        model_id: impl Into<String>,
        ids: Vec<String>,
        probs: Vec<[f64; NUM_CLASSES]>,
        tolerance: f64,
    ) -> Result<Self> {
        if ids.len() != probs.len() {
            return Err(LearnError::DimensionMismatch {
                expected: ids.len(),
                got: probs.len(),
            });
        }
        let mut seen = std::collections::HashSet::new();
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(LearnError::DuplicateId(id.clone()));
            }
        }
        let mut normalized = probs;
        for (id, row) in ids.iter().zip(normalized.iter_mut()) {
            let mut sum = 0.0;
            for &v in row.iter() {
                if !v.is_finite() || v < 0.0 {
                    return Err(LearnError::NegativeProbability {
                        id: id.clone(),
                        value: v,
                    });
                }
                sum += v;
            }
            if (sum - 1.0).abs() > tolerance {
                return Err(LearnError::RowSumOutOfTolerance {
                    id: id.clone(),
                    sum,
                });
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        Ok(Self {
            model_id: model_id.into(),
            ids,
            probs: normalized,
        })
    }

    /// Construct from freshly computed softmax rows (tight tolerance).
    pub fn new(
        model_id: impl Into<String>,
        ids: Vec<String>,
        probs: Vec<[f64; NUM_CLASSES]>,
    ) -> Result<Self> {
        Self::with_tolerance(model_id, ids, probs, 1e-6)
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn probs(&self) -> &[[f64; NUM_CLASSES]] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Argmax class per row, low-index tie-break.
    pub fn decisions(&self) -> Vec<Label> {
        self.probs.iter().map(Label::argmax).collect()
    }

    /// Serialize in the standard interchange format.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(PREDICTION_CSV_HEADER);
        out.push('\n');
        for (id, row) in self.ids.iter().zip(&self.probs) {
            out.push_str(&format!(
                "{id},{},{},{}\n",
                fmt_sig(row[0]),
                fmt_sig(row[1]),
                fmt_sig(row[2])
            ));
        }
        out
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }
}

/// Score a feature matrix with a trained model.
pub fn predict_proba(
    model: &LinearModel,
    model_id: impl Into<String>,
    ids: Vec<String>,
    features: &[Vec<f64>],
) -> Result<PredictionMatrix> {
    check_features(features, model.feature_dim)?;
    if ids.len() != features.len() {
        return Err(LearnError::DimensionMismatch {
            expected: ids.len(),
            got: features.len(),
        });
    }
    let probs: Vec<[f64; NUM_CLASSES]> = features
        .iter()
        .map(|x| softmax(&model.logits(x)))
        .collect();
    PredictionMatrix::new(model_id, ids, probs)
}

/// Tolerance for row sums of externally produced prediction files;
/// generous enough to absorb text-formatting loss without masking
/// genuine errors.
pub const INGEST_ROW_SUM_TOLERANCE: f64 = 1e-3;

/// Parse a prediction CSV (`id,p_AD,p_MCI,p_CN`) from any reader.
pub fn read_predictions(reader: impl Read, model_id: impl Into<String>) -> Result<PredictionMatrix> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    {
        let headers = csv_reader
            .headers()
            .map_err(|e| LearnError::BadHeader(e.to_string()))?;
        let joined = headers.iter().collect::<Vec<_>>().join(",");
        if joined != PREDICTION_CSV_HEADER {
            return Err(LearnError::BadHeader(joined));
        }
    }
    let mut ids = Vec::new();
    let mut probs = Vec::new();
    for record in csv_reader.records() {
        let record = record.map_err(|e| LearnError::BadRow(e.to_string()))?;
        if record.len() != 4 {
            return Err(LearnError::BadRow(format!(
                "expected 4 fields, got {}",
                record.len()
            )));
        }
        let id = record[0].to_string();
        let mut row = [0.0; NUM_CLASSES];
        for (c, v) in row.iter_mut().enumerate() {
            *v = record[c + 1]
                .parse::<f64>()
                .map_err(|_| LearnError::BadRow(format!("bad number '{}'", &record[c + 1])))?;
        }
        ids.push(id);
        probs.push(row);
    }
    PredictionMatrix::with_tolerance(model_id, ids, probs, INGEST_ROW_SUM_TOLERANCE)
}

/// Read a prediction CSV from disk; `model_id` names the source model.
pub fn load_predictions(path: impl AsRef<Path>, model_id: impl Into<String>) -> Result<PredictionMatrix> {
    let file = std::fs::File::open(path)?;
    read_predictions(file, model_id)
}

/// On-disk model format: flat JSON of dims, weights, bias, and a config
/// echo.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub feature_dim: usize,
    pub classes: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub config: TrainConfig,
}

pub fn save_model(path: impl AsRef<Path>, model: &LinearModel, config: &TrainConfig) -> Result<()> {
    let file = ModelFile {
        feature_dim: model.feature_dim,
        classes: NUM_CLASSES,
        weights: model.weights.clone(),
        bias: model.bias.clone(),
        config: *config,
    };
    let mut f = std::fs::File::create(path)?;
    f.write_all(serde_json::to_string_pretty(&file)?.as_bytes())?;
    f.write_all(b"\n")?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<(LinearModel, TrainConfig)> {
    let text = std::fs::read_to_string(path)?;
    let file: ModelFile = serde_json::from_str(&text)?;
    if file.classes != NUM_CLASSES || file.weights.len() != NUM_CLASSES * file.feature_dim {
        return Err(LearnError::DimensionMismatch {
            expected: NUM_CLASSES * file.feature_dim,
            got: file.weights.len(),
        });
    }
    Ok((
        LinearModel {
            weights: file.weights,
            bias: file.bias,
            feature_dim: file.feature_dim,
        },
        file.config,
    ))
}
