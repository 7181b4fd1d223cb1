use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::FeatureError;

/// Fields with at least this many distinct training values need an expert
/// mapping to a smaller set of groups.
pub const MAX_ONE_HOT_CLASSES: usize = 10;

/// Per-field class -> group tables: `{"component": {"alu": "core", ...}}`.
pub type MappingTables = BTreeMap<String, BTreeMap<String, String>>;

pub fn load_mapping_tables(path: &Path) -> Result<MappingTables, FeatureError> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text)
        .map_err(|e| FeatureError::Format(format!("{}: {e}", path.display())))
}

/// One-hot encoder with a trailing "unseen" slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalEncoder {
    pub field: String,
    /// Output slots, in order; groups when a mapping is used.
    pub classes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mapping: Option<BTreeMap<String, String>>,
}

impl CategoricalEncoder {
    /// Fits on training values. A mapping, when given, is always applied;
    /// without one, a field with too many classes is an error.
    pub fn fit<'a>(
        field: &str,
        values: impl IntoIterator<Item = &'a str>,
        mapping: Option<&BTreeMap<String, String>>,
    ) -> Result<Self, FeatureError> {
        let seen: BTreeSet<&str> = values.into_iter().collect();
        match mapping {
            Some(table) => {
                let groups: BTreeSet<&String> = table.values().collect();
                Ok(Self {
                    field: field.to_owned(),
                    classes: groups.into_iter().cloned().collect(),
                    mapping: Some(table.clone()),
                })
            }
            None if seen.len() >= MAX_ONE_HOT_CLASSES => Err(FeatureError::MappingRequired {
                field: field.to_owned(),
                classes: seen.len(),
            }),
            None => Ok(Self {
                field: field.to_owned(),
                classes: seen.into_iter().map(str::to_owned).collect(),
                mapping: None,
            }),
        }
    }

    pub fn width(&self) -> usize {
        self.classes.len() + 1
    }

    /// Slot index of `value`; missing and unknown values use the last slot.
    pub fn slot(&self, value: Option<&str>) -> usize {
        let unseen = self.classes.len();
        let Some(value) = value else { return unseen };
        let class = match &self.mapping {
            Some(table) => match table.get(value) {
                Some(group) => group.as_str(),
                None => return unseen,
            },
            None => value,
        };
        self.classes
            .binary_search_by(|c| c.as_str().cmp(class))
            .unwrap_or(unseen)
    }

    pub fn encode(&self, value: Option<&str>) -> Vec<f64> {
        let mut out = vec![0.0; self.width()];
        out[self.slot(value)] = 1.0;
        out
    }

    pub fn slot_names(&self) -> Vec<String> {
        self.classes
            .iter()
            .map(|c| format!("{}={c}", self.field))
            .chain(std::iter::once(format!("{}=<unseen>", self.field)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_vocabulary() {
        let enc = CategoricalEncoder::fit("f", ["a", "b", "c", "a"], None).unwrap();
        assert_eq!(enc.encode(Some("b")), vec![0.0, 1.0, 0.0, 0.0]);
        assert_eq!(enc.encode(Some("z")), vec![0.0, 0.0, 0.0, 1.0]);
        assert_eq!(enc.encode(None), vec![0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn wide_field_needs_mapping() {
        let values: Vec<String> = (0..15).map(|i| format!("c{i:02}")).collect();
        let err =
            CategoricalEncoder::fit("unit", values.iter().map(String::as_str), None).unwrap_err();
        assert!(err.to_string().contains("unit"));

        let table: BTreeMap<String, String> = values
            .iter()
            .enumerate()
            .map(|(i, v)| (v.clone(), format!("g{}", i % 4)))
            .collect();
        let enc = CategoricalEncoder::fit("unit", values.iter().map(String::as_str), Some(&table))
            .unwrap();
        assert_eq!(enc.width(), 5);
        // c06 -> g2
        assert_eq!(enc.encode(Some("c06")), vec![0.0, 0.0, 1.0, 0.0, 0.0]);
        assert_eq!(enc.slot(Some("c99")), 4);
    }

    #[test]
    fn nine_classes_are_fine() {
        let values: Vec<String> = (0..9).map(|i| i.to_string()).collect();
        assert!(CategoricalEncoder::fit("f", values.iter().map(String::as_str), None).is_ok());
    }
}
