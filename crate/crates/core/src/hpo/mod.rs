//! Hyper-parameter search with the Tree-structured Parzen Estimator.
//!
//! [`tpe_suggest`] proposes the next point given a trial history, [`tune`]
//! runs a full search with group k-fold weighted f1 as the objective, and
//! [`load_preset`] returns published tuned settings per target.

mod presets;
mod space;
mod tpe;
mod tune;

use thiserror::Error;

use crate::classifiers::ModelError;

pub use presets::{load_preset, preset_by_name, TunedPreset, PRESET_NAMES};
pub use space::{
    gbt_space, mlp_space, params_to_model, rf_space, Dimension, Domain, ParamValue, Params,
    SearchSpace,
};
pub use tpe::{random_search, sample_uniform, search, tpe_suggest, SearchResult, TpeConfig};
pub use tune::{tune, write_history_csv, Trial, TrialStatus, TuneResult};

#[derive(Debug, Error)]
pub enum HpoError {
    #[error("invalid search space: {0}")]
    Space(String),
    #[error("invalid TPE configuration: {0}")]
    Config(String),
    #[error("parameter `{name}`: {reason}")]
    Param { name: String, reason: String },
    #[error("unknown target `{0}`")]
    UnknownTarget(String),
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}
