//! Bug-ticket triage prediction.
//!
//! The crate turns completed issue-tracker tickets into training data and
//! learns to predict four targets per ticket: fixing-time class, risk class,
//! and debug/resolution complexity. The pieces are:
//!
//! - [`corpus`]: ticket model, JSONL ingestion, prefix expansion of ticket
//!   histories, and leak-free hold-out / group k-fold splitting.
//! - [`features`]: field pruning, categorical/temporal/numerical blocks and
//!   the text representations (TF-IDF, word2vec, external embeddings).
//! - [`labels`]: fixing-time extraction and quantile binning, expert labels.
//! - [`classifiers`]: Naive Bayes, random forest, linear SVM, MLP and
//!   gradient-boosted trees behind one probabilistic interface.
//! - [`active_learning`]: entropy-based pool active learning sessions and a
//!   simulation harness.
//! - [`hpo`]: Tree-structured Parzen Estimator search with group CV.
//! - [`eval`]: f1 metrics, random-guesser baseline and the
//!   score-versus-ticket-length analysis.
//! - [`synthetic`]: seeded generators for demos, benchmarks and tests.

pub mod active_learning;
pub mod classifiers;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod features;
pub mod hpo;
pub mod labels;
mod persist;
pub mod rng;
pub mod synthetic;

pub use active_learning::{entropy, AcquisitionStrategy, AlSession};
pub use classifiers::{Classifier, Dataset, ModelKind, ModelParams, Probabilities, TrainedModel};
pub use corpus::{BaseTicket, Corpus, DerivedTicket, TicketEvent, TicketId};
pub use error::{Error, Result};
pub use eval::{weighted_f1, EvalReport};
pub use features::{FeatureSpec, FeatureVector};
pub use labels::{LabelSet, RiskLabel, Target};
