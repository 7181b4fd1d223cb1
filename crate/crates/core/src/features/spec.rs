use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    prune_fields, tokenize, CategoricalEncoder, ExternalEmbeddingStore, FeatureError,
    MappingTables, PruneReport, TfidfModel, Word2VecParams, WordEmbeddingModel,
};
use crate::corpus::{DerivedTicket, FieldKind, FieldValue, Schema};

pub const FEATURE_SPEC_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextMode {
    /// Only numerical, temporal and categorical blocks.
    #[default]
    None,
    Tfidf,
    Word2vec,
    ExternalEmbedding,
}

/// Declarative feature settings, before fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub max_nan_fraction: f64,
    pub force_keep: Vec<String>,
    pub exclude: Vec<String>,
    pub text_mode: TextMode,
    pub tfidf_top_k: usize,
    pub word2vec: Word2VecParams,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            max_nan_fraction: 0.9,
            force_keep: Vec::new(),
            exclude: Vec::new(),
            text_mode: TextMode::None,
            tfidf_top_k: 200,
            word2vec: Word2VecParams::default(),
        }
    }
}

/// Fitted text representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum TextModel {
    None,
    Tfidf(TfidfModel),
    Word2vec(WordEmbeddingModel),
    ExternalEmbedding { dim: usize },
}

impl TextModel {
    fn width(&self) -> usize {
        match self {
            TextModel::None => 0,
            TextModel::Tfidf(m) => m.width(),
            TextModel::Word2vec(m) => m.dim(),
            TextModel::ExternalEmbedding { dim } => *dim,
        }
    }
}

/// Min / max / mean gap between consecutive events, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemporalStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

/// Gap statistics over the observed prefix; a single event gives zeros.
pub fn temporal_stats(ticket: &DerivedTicket) -> TemporalStats {
    let gaps: Vec<f64> = ticket
        .events
        .windows(2)
        .map(|w| (w[1].timestamp - w[0].timestamp) as f64)
        .collect();
    if gaps.is_empty() {
        return TemporalStats {
            min: 0.0,
            max: 0.0,
            mean: 0.0,
        };
    }
    TemporalStats {
        min: gaps.iter().copied().fold(f64::INFINITY, f64::min),
        max: gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean: gaps.iter().sum::<f64>() / gaps.len() as f64,
    }
}

/// A fitted feature layout. Immutable once fitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub format_version: u32,
    pub kept_fields: Vec<String>,
    pub numerical_fields: Vec<String>,
    pub date_fields: Vec<String>,
    pub categorical: Vec<CategoricalEncoder>,
    pub text_fields: Vec<String>,
    pub text: TextModel,
    pub feature_names: Arc<[String]>,
    pub output_dim: usize,
}

/// Dense feature values; names are shared with the spec that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub feature_names: Arc<[String]>,
}

const TEMPORAL_NAMES: [&str; 4] = ["gap_min_s", "gap_max_s", "gap_mean_s", "elapsed_s"];
const ACTIVITY_NAMES: [&str; 3] = ["event_count", "change_count", "attachment_count"];

impl FeatureSpec {
    /// Fits field pruning, encoders and the text model on training tickets.
    pub fn fit(
        schema: &Schema,
        train: &[DerivedTicket],
        config: &FeatureConfig,
        mappings: &MappingTables,
        external: Option<&ExternalEmbeddingStore>,
    ) -> Result<(Self, PruneReport), FeatureError> {
        let force_keep: BTreeSet<String> = config.force_keep.iter().cloned().collect();
        let exclude: BTreeSet<String> = config.exclude.iter().cloned().collect();
        let report = prune_fields(
            schema,
            train,
            config.max_nan_fraction,
            &force_keep,
            &exclude,
        )?;
        let of_kind = |kind: FieldKind| -> Vec<String> {
            report
                .kept
                .iter()
                .filter(|f| schema.kind(f) == Some(kind))
                .cloned()
                .collect()
        };
        let numerical_fields = of_kind(FieldKind::Numerical);
        let date_fields = of_kind(FieldKind::Date);
        let text_fields = of_kind(FieldKind::Text);
        let categorical = of_kind(FieldKind::Categorical)
            .iter()
            .map(|field| {
                CategoricalEncoder::fit(
                    field,
                    train
                        .iter()
                        .filter_map(|t| t.categorical_at_observation(field)),
                    mappings.get(field),
                )
            })
            .collect::<Result<Vec<_>, _>>()?;

        let text = match config.text_mode {
            TextMode::None => TextModel::None,
            TextMode::Tfidf => {
                let docs: Vec<Vec<String>> = train
                    .iter()
                    .map(|t| tokenize(&raw_text(&text_fields, t)))
                    .collect();
                TextModel::Tfidf(TfidfModel::fit(&docs, config.tfidf_top_k)?)
            }
            TextMode::Word2vec => {
                let docs: Vec<Vec<String>> = train
                    .iter()
                    .map(|t| tokenize(&raw_text(&text_fields, t)))
                    .collect();
                TextModel::Word2vec(WordEmbeddingModel::train(&docs, &config.word2vec)?)
            }
            TextMode::ExternalEmbedding => {
                let store = external.ok_or(FeatureError::ExternalStoreRequired)?;
                TextModel::ExternalEmbedding { dim: store.dim() }
            }
        };

        let mut names = Vec::new();
        for f in &numerical_fields {
            names.push(f.clone());
            names.push(format!("{f}__missing"));
        }
        for f in &date_fields {
            names.push(format!("{f}__age_s"));
            names.push(format!("{f}__missing"));
        }
        names.extend(ACTIVITY_NAMES.iter().map(|s| s.to_string()));
        names.extend(TEMPORAL_NAMES.iter().map(|s| s.to_string()));
        for enc in &categorical {
            names.extend(enc.slot_names());
        }
        match &text {
            TextModel::None => {}
            TextModel::Tfidf(m) => names.extend(m.vocabulary.iter().map(|t| format!("tfidf:{t}"))),
            other => names.extend((0..other.width()).map(|i| format!("text:{i}"))),
        }
        let output_dim = names.len();
        let spec = Self {
            format_version: FEATURE_SPEC_FORMAT_VERSION,
            kept_fields: report.kept.clone(),
            numerical_fields,
            date_fields,
            categorical,
            text_fields,
            text,
            feature_names: names.into(),
            output_dim,
        };
        Ok((spec, report))
    }

    /// Builds the vector for one ticket. `external` is required when the
    /// spec uses external embeddings.
    pub fn assemble(
        &self,
        ticket: &DerivedTicket,
        external: Option<&ExternalEmbeddingStore>,
    ) -> Result<FeatureVector, FeatureError> {
        let mut v = Vec::with_capacity(self.output_dim);
        for f in &self.numerical_fields {
            match ticket.field(f) {
                FieldValue::Numerical(x) => v.extend([*x, 0.0]),
                _ => v.extend([0.0, 1.0]),
            }
        }
        for f in &self.date_fields {
            match ticket.field(f) {
                FieldValue::Date(t) => v.extend([(ticket.observation_time - t) as f64, 0.0]),
                _ => v.extend([0.0, 1.0]),
            }
        }
        let attachments: usize = ticket
            .events
            .iter()
            .filter_map(|e| e.attachments_meta.as_ref().map(Vec::len))
            .sum();
        v.extend([
            ticket.events.len() as f64,
            ticket.change_count() as f64,
            attachments as f64,
        ]);
        let stats = temporal_stats(ticket);
        let elapsed = (ticket.observation_time - ticket.events[0].timestamp) as f64;
        v.extend([stats.min, stats.max, stats.mean, elapsed]);
        for enc in &self.categorical {
            v.extend(enc.encode(ticket.categorical_at_observation(&enc.field)));
        }
        match &self.text {
            TextModel::None => {}
            TextModel::Tfidf(m) => {
                v.extend(m.transform(&tokenize(&raw_text(&self.text_fields, ticket))))
            }
            TextModel::Word2vec(m) => {
                v.extend(m.embed_average(&tokenize(&raw_text(&self.text_fields, ticket))))
            }
            TextModel::ExternalEmbedding { dim } => {
                let store = external.ok_or(FeatureError::ExternalStoreRequired)?;
                let e = store.lookup(ticket)?;
                if e.len() != *dim {
                    return Err(FeatureError::EmbeddingWidth {
                        expected: *dim,
                        found: e.len(),
                    });
                }
                v.extend_from_slice(e);
            }
        }
        debug_assert_eq!(v.len(), self.output_dim);
        if let Some(i) = v.iter().position(|x| !x.is_finite()) {
            return Err(FeatureError::NonFinite {
                name: self.feature_names[i].clone(),
                ticket: ticket.key(),
            });
        }
        Ok(FeatureVector {
            values: v,
            feature_names: Arc::clone(&self.feature_names),
        })
    }

    /// SHA-256 of the canonical JSON form; model blobs record it.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("feature spec serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

/// Static text fields followed by the prefix discussion.
fn raw_text(text_fields: &[String], ticket: &DerivedTicket) -> String {
    let mut parts: Vec<String> = text_fields
        .iter()
        .filter_map(|f| match ticket.field(f) {
            FieldValue::Text(s) => Some(s.clone()),
            _ => None,
        })
        .collect();
    let discussion = ticket.discussion();
    if !discussion.is_empty() {
        parts.push(discussion);
    }
    parts.join("\n")
}
