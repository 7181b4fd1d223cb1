use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::FeatureError;
use crate::corpus::{DerivedTicket, Schema};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedField {
    pub name: String,
    pub missing_fraction: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneReport {
    pub kept: Vec<String>,
    pub dropped: Vec<DroppedField>,
}

/// Drops schema fields missing in more than `max_nan_fraction` of the
/// tickets (strictly greater), plus the expert `exclude` list. Fields in
/// `force_keep` survive the missing-value rule.
pub fn prune_fields(
    schema: &Schema,
    tickets: &[DerivedTicket],
    max_nan_fraction: f64,
    force_keep: &BTreeSet<String>,
    exclude: &BTreeSet<String>,
) -> Result<PruneReport, FeatureError> {
    if tickets.is_empty() {
        return Err(FeatureError::EmptyTrainingSet);
    }
    let n = tickets.len() as f64;
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for name in schema.fields.keys() {
        let missing = tickets
            .iter()
            .filter(|t| t.field(name).is_missing())
            .count();
        let missing_fraction = missing as f64 / n;
        if exclude.contains(name) {
            dropped.push(DroppedField {
                name: name.clone(),
                missing_fraction,
                reason: "excluded".into(),
            });
        } else if missing_fraction > max_nan_fraction && !force_keep.contains(name) {
            dropped.push(DroppedField {
                name: name.clone(),
                missing_fraction,
                reason: format!("missing fraction above {max_nan_fraction}"),
            });
        } else {
            kept.push(name.clone());
        }
    }
    if kept.is_empty() {
        return Err(FeatureError::AllFieldsDropped);
    }
    Ok(PruneReport { kept, dropped })
}
