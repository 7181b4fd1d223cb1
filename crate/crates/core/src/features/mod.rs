//! Feature extraction: a derived ticket becomes a fixed-order dense vector.
//!
//! Block order is numerical, temporal, categorical, text.

mod categorical;
mod external;
mod prune;
mod spec;
pub mod stopwords;
mod text;
mod tfidf;
mod word2vec;

use thiserror::Error;

pub use categorical::{
    load_mapping_tables, CategoricalEncoder, MappingTables, MAX_ONE_HOT_CLASSES,
};
pub use external::ExternalEmbeddingStore;
pub use prune::{prune_fields, DroppedField, PruneReport};
pub use spec::{
    temporal_stats, FeatureConfig, FeatureSpec, FeatureVector, TemporalStats, TextMode, TextModel,
};
pub use text::{clean_text, strip_html, tokenize, CleanMode, CleanedText};
pub use tfidf::{idf, TfidfModel};
pub use word2vec::{cosine, Word2VecParams, Word2VecVariant, WordEmbeddingModel};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("no training tickets")]
    EmptyTrainingSet,
    #[error("every field was pruned")]
    AllFieldsDropped,
    #[error("no non-empty training text")]
    EmptyTrainingText,
    #[error("field `{field}` has {classes} classes and needs an expert mapping table")]
    MappingRequired { field: String, classes: usize },
    #[error("embedding line {line}: expected width {expected}, found {found}")]
    RaggedEmbedding {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("no external embedding for ticket `{0}`")]
    MissingEmbedding(String),
    #[error("external embedding store required for this feature spec")]
    ExternalStoreRequired,
    #[error("embedding width {found} does not match the fitted width {expected}")]
    EmbeddingWidth { expected: usize, found: usize },
    #[error("feature `{name}` is not finite for ticket `{ticket}`")]
    NonFinite { name: String, ticket: String },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}
