//! Five probabilistic classifiers behind one interface.
//!
//! Every model is trained from a [`Dataset`] through [`fit`], exposes
//! per-class probabilities through [`Classifier`], and round-trips through a
//! versioned JSON blob ([`save_model`] / [`load_model`]).

mod forest;
mod gbt;
mod mlp;
mod naive_bayes;
mod svm;
mod tree;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::TicketId;
use crate::labels::Target;

pub use forest::{RandomForest, RandomForestParams};
pub use gbt::{GbtParams, GradientBoosting, RegressionTree};
pub use mlp::{Activation, Mlp, MlpNetwork, MlpParams, Solver};
pub use naive_bayes::{GaussianNb, NbParams};
pub use svm::{LinearSvm, SvmParams};
pub use tree::{impurity, Criterion, DecisionTree, MaxFeatures, TreeParams};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("dataset is inconsistent: {0}")]
    InvalidDataset(String),
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("malformed model blob: {0}")]
    Malformed(String),
    #[error("model format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("blob holds a `{found}` model, expected `{expected}`")]
    TypeMismatch { found: String, expected: String },
    #[error("feature spec hash mismatch: model was trained on {model}, got {given}")]
    FeatureSpecMismatch { model: String, given: String },
    #[error("unknown model kind `{0}`")]
    UnknownKind(String),
}

/// Training data: one dense row per example, grouped by base ticket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<usize>,
    pub class_names: Vec<String>,
    pub groups: Vec<TicketId>,
}

impl Dataset {
    pub fn new(
        x: Vec<Vec<f64>>,
        y: Vec<usize>,
        class_names: Vec<String>,
        groups: Vec<TicketId>,
    ) -> Result<Self, ModelError> {
        let ds = Self {
            x,
            y,
            class_names,
            groups,
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Dataset whose groups are the row indices.
    pub fn ungrouped(
        x: Vec<Vec<f64>>,
        y: Vec<usize>,
        n_classes: usize,
    ) -> Result<Self, ModelError> {
        let groups = (0..x.len() as u64).map(TicketId::from).collect();
        let class_names = (0..n_classes).map(|c| c.to_string()).collect();
        Self::new(x, y, class_names, groups)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let n = self.x.len();
        if self.y.len() != n || self.groups.len() != n {
            return Err(ModelError::InvalidDataset(format!(
                "{} rows, {} labels, {} groups",
                n,
                self.y.len(),
                self.groups.len()
            )));
        }
        if let Some(first) = self.x.first() {
            let d = first.len();
            if let Some(i) = self.x.iter().position(|r| r.len() != d) {
                return Err(ModelError::InvalidDataset(format!(
                    "row {i} has a different width"
                )));
            }
        }
        if let Some(&bad) = self.y.iter().find(|&&c| c >= self.class_names.len()) {
            return Err(ModelError::InvalidDataset(format!(
                "label {bad} with {} classes",
                self.class_names.len()
            )));
        }
        if self.x.iter().flatten().any(|v| !v.is_finite()) {
            return Err(ModelError::InvalidDataset(
                "non-finite feature value".into(),
            ));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for &c in &self.y {
            counts[c] += 1;
        }
        counts
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            x: rows.iter().map(|&i| self.x[i].clone()).collect(),
            y: rows.iter().map(|&i| self.y[i]).collect(),
            class_names: self.class_names.clone(),
            groups: rows.iter().map(|&i| self.groups[i].clone()).collect(),
        }
    }
}

/// A discrete distribution over classes: non-negative, summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Probabilities(Vec<f64>);

impl Probabilities {
    /// Normalizes non-negative weights. All-zero weights become uniform.
    pub fn from_weights(mut w: Vec<f64>) -> Self {
        for v in &mut w {
            if !v.is_finite() || *v < 0.0 {
                *v = 0.0;
            }
        }
        let sum: f64 = w.iter().sum();
        if sum <= 0.0 {
            let k = w.len().max(1) as f64;
            w.iter_mut().for_each(|v| *v = 1.0 / k);
        } else {
            w.iter_mut().for_each(|v| *v /= sum);
        }
        Self(w)
    }

    /// Softmax of scores; `None` entries get probability zero.
    pub fn softmax(scores: &[Option<f64>]) -> Self {
        let max = scores
            .iter()
            .flatten()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let w = scores
            .iter()
            .map(|s| s.map_or(0.0, |s| (s - max).exp()))
            .collect();
        Self::from_weights(w)
    }

    pub fn uniform(k: usize) -> Self {
        Self(vec![1.0 / k as f64; k])
    }

    pub fn one_hot(k: usize, class: usize) -> Self {
        let mut p = vec![0.0; k];
        p[class] = 1.0;
        Self(p)
    }

    /// Checks an externally supplied distribution.
    pub fn try_new(p: Vec<f64>) -> Option<Self> {
        let ok = !p.is_empty()
            && p.iter().all(|v| v.is_finite() && *v >= 0.0)
            && (p.iter().sum::<f64>() - 1.0).abs() <= 1e-9;
        ok.then_some(Self(p))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Most probable class; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.0.iter().enumerate() {
            if p > self.0[best] {
                best = i;
            }
        }
        best
    }
}

pub trait Classifier {
    fn n_classes(&self) -> usize;

    fn n_features(&self) -> usize;

    /// Class distribution for one feature row.
    ///
    /// Panics if `x` does not have [`Classifier::n_features`] entries.
    fn predict_proba(&self, x: &[f64]) -> Probabilities;

    fn predict(&self, x: &[f64]) -> usize {
        self.predict_proba(x).argmax()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    NaiveBayes,
    RandomForest,
    Svm,
    Mlp,
    Gbt,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::NaiveBayes,
        ModelKind::RandomForest,
        ModelKind::Svm,
        ModelKind::Mlp,
        ModelKind::Gbt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::NaiveBayes => "naive_bayes",
            ModelKind::RandomForest => "random_forest",
            ModelKind::Svm => "svm",
            ModelKind::Mlp => "mlp",
            ModelKind::Gbt => "gbt",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "naive_bayes" | "nb" => Ok(ModelKind::NaiveBayes),
            "random_forest" | "rf" => Ok(ModelKind::RandomForest),
            "svm" => Ok(ModelKind::Svm),
            "mlp" => Ok(ModelKind::Mlp),
            "gbt" | "xgboost" => Ok(ModelKind::Gbt),
            other => Err(ModelError::UnknownKind(other.to_owned())),
        }
    }
}

/// Hyper-parameters for any model kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelParams {
    NaiveBayes(NbParams),
    RandomForest(RandomForestParams),
    Svm(SvmParams),
    Mlp(MlpParams),
    Gbt(GbtParams),
}

impl ModelParams {
    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::NaiveBayes => ModelParams::NaiveBayes(NbParams::default()),
            ModelKind::RandomForest => ModelParams::RandomForest(RandomForestParams::default()),
            ModelKind::Svm => ModelParams::Svm(SvmParams::default()),
            ModelKind::Mlp => ModelParams::Mlp(MlpParams::default()),
            ModelKind::Gbt => ModelParams::Gbt(GbtParams::default()),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            ModelParams::NaiveBayes(_) => ModelKind::NaiveBayes,
            ModelParams::RandomForest(_) => ModelKind::RandomForest,
            ModelParams::Svm(_) => ModelKind::Svm,
            ModelParams::Mlp(_) => ModelKind::Mlp,
            ModelParams::Gbt(_) => ModelKind::Gbt,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        match &mut self {
            ModelParams::NaiveBayes(_) => {}
            ModelParams::RandomForest(p) => p.seed = seed,
            ModelParams::Svm(p) => p.seed = seed,
            ModelParams::Mlp(p) => p.seed = seed,
            ModelParams::Gbt(p) => p.seed = seed,
        }
        self
    }
}

/// Fallback when training data holds a single class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantModel {
    pub n_classes: usize,
    pub n_features: usize,
    pub class: usize,
}

impl Classifier for ConstantModel {
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_proba(&self, x: &[f64]) -> Probabilities {
        assert_eq!(x.len(), self.n_features, "feature width");
        Probabilities::one_hot(self.n_classes, self.class)
    }
}

/// Any trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model_type", content = "model", rename_all = "snake_case")]
pub enum TrainedModel {
    Constant(ConstantModel),
    NaiveBayes(GaussianNb),
    RandomForest(RandomForest),
    Svm(LinearSvm),
    Mlp(Mlp),
    Gbt(GradientBoosting),
}

impl TrainedModel {
    pub fn model_type(&self) -> &'static str {
        match self {
            TrainedModel::Constant(_) => "constant",
            TrainedModel::NaiveBayes(_) => "naive_bayes",
            TrainedModel::RandomForest(_) => "random_forest",
            TrainedModel::Svm(_) => "svm",
            TrainedModel::Mlp(_) => "mlp",
            TrainedModel::Gbt(_) => "gbt",
        }
    }

    fn inner(&self) -> &dyn Classifier {
        match self {
            TrainedModel::Constant(m) => m,
            TrainedModel::NaiveBayes(m) => m,
            TrainedModel::RandomForest(m) => m,
            TrainedModel::Svm(m) => m,
            TrainedModel::Mlp(m) => m,
            TrainedModel::Gbt(m) => m,
        }
    }

    /// Training-time warning, e.g. a solver that hit its iteration limit.
    pub fn warning(&self) -> Option<String> {
        match self {
            TrainedModel::Mlp(m) if !m.converged => Some(format!(
                "MLP solver stopped after {} iterations without converging",
                m.n_iter
            )),
            _ => None,
        }
    }
}

impl Classifier for TrainedModel {
    fn n_classes(&self) -> usize {
        self.inner().n_classes()
    }

    fn n_features(&self) -> usize {
        self.inner().n_features()
    }

    fn predict_proba(&self, x: &[f64]) -> Probabilities {
        self.inner().predict_proba(x)
    }
}

/// Trains a model. Data with a single class yields a [`ConstantModel`].
pub fn fit(params: &ModelParams, data: &Dataset) -> Result<TrainedModel, ModelError> {
    data.validate()?;
    if data.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let counts = data.class_counts();
    if counts.iter().filter(|&&c| c > 0).count() == 1 {
        return Ok(TrainedModel::Constant(ConstantModel {
            n_classes: data.n_classes(),
            n_features: data.n_features(),
            class: data.y[0],
        }));
    }
    Ok(match params {
        ModelParams::NaiveBayes(p) => TrainedModel::NaiveBayes(GaussianNb::fit(data, p)?),
        ModelParams::RandomForest(p) => TrainedModel::RandomForest(RandomForest::fit(data, p)?),
        ModelParams::Svm(p) => TrainedModel::Svm(LinearSvm::fit(data, p)?),
        ModelParams::Mlp(p) => TrainedModel::Mlp(Mlp::fit(data, p)?),
        ModelParams::Gbt(p) => TrainedModel::Gbt(GradientBoosting::fit(data, p)?),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobHeader {
    pub model_type: String,
    pub format_version: u32,
    pub feature_spec_hash: Option<String>,
    pub n_features: usize,
    pub class_names: Vec<String>,
    /// Target the model predicts, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Target>,
}

/// A saved model: header plus body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBlob {
    pub header: BlobHeader,
    pub model: TrainedModel,
}

impl ModelBlob {
    pub fn new(
        model: TrainedModel,
        class_names: Vec<String>,
        feature_spec_hash: Option<String>,
    ) -> Self {
        Self {
            header: BlobHeader {
                model_type: model.model_type().to_owned(),
                format_version: MODEL_FORMAT_VERSION,
                feature_spec_hash,
                n_features: model.n_features(),
                class_names,
                target: None,
            },
            model,
        }
    }

    pub fn with_target(mut self, target: Target) -> Self {
        self.header.target = Some(target);
        self
    }

    pub fn check_feature_spec(&self, hash: &str) -> Result<(), ModelError> {
        match &self.header.feature_spec_hash {
            Some(h) if h != hash => Err(ModelError::FeatureSpecMismatch {
                model: h.clone(),
                given: hash.to_owned(),
            }),
            _ => Ok(()),
        }
    }
}

pub fn save_model(blob: &ModelBlob) -> Vec<u8> {
    serde_json::to_vec(blob).expect("model serializes")
}

/// Parses a blob, checking the header before the body.
pub fn load_model(bytes: &[u8]) -> Result<ModelBlob, ModelError> {
    #[derive(Deserialize)]
    struct HeaderOnly {
        header: BlobHeader,
    }
    let head: HeaderOnly =
        serde_json::from_slice(bytes).map_err(|e| ModelError::Malformed(e.to_string()))?;
    if head.header.format_version != MODEL_FORMAT_VERSION {
        return Err(ModelError::VersionMismatch {
            found: head.header.format_version,
            expected: MODEL_FORMAT_VERSION,
        });
    }
    let blob: ModelBlob =
        serde_json::from_slice(bytes).map_err(|e| ModelError::Malformed(e.to_string()))?;
    if blob.header.model_type != blob.model.model_type() {
        return Err(ModelError::Malformed(
            "header and body disagree on model type".into(),
        ));
    }
    Ok(blob)
}

/// Concrete model types that can be pulled out of a blob.
pub trait ModelType: Sized {
    const MODEL_TYPE: &'static str;
    fn from_trained(model: TrainedModel) -> Option<Self>;
}

macro_rules! model_type {
    ($ty:ty, $variant:ident, $name:literal) => {
        impl ModelType for $ty {
            const MODEL_TYPE: &'static str = $name;
            fn from_trained(model: TrainedModel) -> Option<Self> {
                match model {
                    TrainedModel::$variant(m) => Some(m),
                    _ => None,
                }
            }
        }
    };
}

model_type!(GaussianNb, NaiveBayes, "naive_bayes");
model_type!(RandomForest, RandomForest, "random_forest");
model_type!(LinearSvm, Svm, "svm");
model_type!(Mlp, Mlp, "mlp");
model_type!(GradientBoosting, Gbt, "gbt");

/// Loads a blob that must hold a model of type `T`.
pub fn load_as<T: ModelType>(bytes: &[u8]) -> Result<T, ModelError> {
    let blob = load_model(bytes)?;
    let found = blob.header.model_type.clone();
    T::from_trained(blob.model).ok_or(ModelError::TypeMismatch {
        found,
        expected: T::MODEL_TYPE.to_owned(),
    })
}

pub(crate) fn check_width(expected: usize, x: &[f64]) {
    assert_eq!(
        x.len(),
        expected,
        "feature row has {} values, model expects {expected}",
        x.len()
    );
}

/// Per-feature mean and standard deviation (population), with zero
/// deviations replaced by one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &[Vec<f64>]) -> Self {
        let d = x.first().map_or(0, Vec::len);
        let n = x.len().max(1) as f64;
        let mut mean = vec![0.0; d];
        for row in x {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for row in x {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .zip(&mean)
            .map(|(s, m)| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 * m.abs().max(1.0) {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probabilities_normalize() {
        let p = Probabilities::from_weights(vec![1.0, 3.0]);
        assert_eq!(p.as_slice(), &[0.25, 0.75]);
        assert_eq!(
            Probabilities::from_weights(vec![0.0, 0.0]).as_slice(),
            &[0.5, 0.5]
        );
        let s = Probabilities::softmax(&[Some(0.0), None, Some(0.0)]);
        assert_eq!(s.as_slice(), &[0.5, 0.0, 0.5]);
        assert_eq!(Probabilities::from_weights(vec![0.5, 0.5]).argmax(), 0);
    }

    #[test]
    fn single_class_gives_constant_model() {
        let ds = Dataset::ungrouped(vec![vec![1.0], vec![2.0]], vec![2, 2], 3).unwrap();
        for kind in ModelKind::ALL {
            let m = fit(&ModelParams::default_for(kind), &ds).unwrap();
            assert_eq!(m.predict_proba(&[5.0]).as_slice(), &[0.0, 0.0, 1.0]);
        }
    }

    #[test]
    fn dataset_validation() {
        assert!(Dataset::ungrouped(vec![vec![1.0]], vec![3], 2).is_err());
        assert!(Dataset::ungrouped(vec![vec![1.0], vec![1.0, 2.0]], vec![0, 1], 2).is_err());
        assert!(Dataset::ungrouped(vec![vec![f64::NAN]], vec![0], 2).is_err());
    }

    #[test]
    fn blob_errors() {
        let ds = Dataset::ungrouped(vec![vec![0.0], vec![1.0]], vec![0, 1], 2).unwrap();
        let m = fit(&ModelParams::default_for(ModelKind::RandomForest), &ds).unwrap();
        let bytes = save_model(&ModelBlob::new(m, ds.class_names.clone(), None));
        assert!(matches!(
            load_model(&bytes[..bytes.len() / 2]),
            Err(ModelError::Malformed(_))
        ));
        assert!(matches!(
            load_as::<Mlp>(&bytes),
            Err(ModelError::TypeMismatch { .. })
        ));
        assert!(load_as::<RandomForest>(&bytes).is_ok());
        let bumped = String::from_utf8(bytes)
            .unwrap()
            .replace("\"format_version\":1", "\"format_version\":99");
        assert!(matches!(
            load_model(bumped.as_bytes()),
            Err(ModelError::VersionMismatch { found: 99, .. })
        ));
    }
}
