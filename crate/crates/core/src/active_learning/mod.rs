//! Pool-based active learning with entropy uncertainty sampling.
//!
//! An [`AlSession`] keeps one model per expert target and proposes the
//! unlabeled (ticket, target) pair with the highest predictive entropy.
//! [`simulate`] replays the loop against oracle labels to compare entropy
//! and random acquisition.

mod selection;
mod session;
mod simulate;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifiers::ModelError;
use crate::corpus::TicketId;
use crate::eval::EvalError;
use crate::labels::{LabelError, Target};

pub use selection::{
    default_candidates, select_al_model, CandidateScore, LooReport, SingletonFlag,
};
pub use session::{AlConfig, AlSession, Proposal, SessionSummary, SubmitOutcome};
pub use simulate::{
    simulate, write_curve_csv, CurvePoint, SimulationConfig, SimulationPool, SimulationResult,
};

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("unknown base ticket `{0}`")]
    UnknownTicket(TicketId),
    #[error("no unlabeled tickets left")]
    Exhausted,
    #[error("stale session version {given}; current version is {current}")]
    StaleVersion { given: u64, current: u64 },
    #[error("ticket `{base_id}` already has a {target} label; pass force to overwrite")]
    AlreadyLabeled { base_id: TicketId, target: Target },
    #[error("label submission carries no label for a session target")]
    EmptyLabel,
    #[error("no labeled examples for target {0}; the model cannot be trained")]
    NotTrained(Target),
    #[error("invalid pool: {0}")]
    InvalidPool(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("session storage: {0}")]
    Io(#[from] std::io::Error),
    #[error("session file: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcquisitionStrategy {
    Entropy,
    Random,
}

impl AcquisitionStrategy {
    pub fn name(self) -> &'static str {
        match self {
            AcquisitionStrategy::Entropy => "entropy",
            AcquisitionStrategy::Random => "random",
        }
    }
}

impl fmt::Display for AcquisitionStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AcquisitionStrategy {
    type Err = SessionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "entropy" => Ok(AcquisitionStrategy::Entropy),
            "random" => Ok(AcquisitionStrategy::Random),
            other => Err(SessionError::Config(format!("unknown strategy `{other}`"))),
        }
    }
}

/// Shannon entropy in nats; zero-probability terms contribute nothing.
pub fn entropy(p: &[f64]) -> f64 {
    let h = -p
        .iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * x.ln())
        .sum::<f64>();
    // Rounding can leave -0.0 or a hair below zero for one-hot inputs.
    h.max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entropy_spot_values() {
        assert!((entropy(&[0.25; 4]) - 4f64.ln()).abs() < 1e-12);
        assert_eq!(entropy(&[1.0, 0.0, 0.0]), 0.0);
        assert!((entropy(&[0.5, 0.25, 0.25]) - 1.039_720_770_839_918).abs() < 1e-12);
    }
}
