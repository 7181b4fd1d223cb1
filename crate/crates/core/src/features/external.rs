use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Deserialize;

use super::FeatureError;
use crate::corpus::DerivedTicket;

/// Sentence embeddings computed elsewhere and keyed by ticket.
///
/// Keys follow [`DerivedTicket::key`], i.e. `"<base_id>:<prefix_len>"`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalEmbeddingStore {
    dim: usize,
    vectors: BTreeMap<String, Vec<f64>>,
}

#[derive(Deserialize)]
struct Row {
    key: String,
    vec: Vec<f64>,
}

impl ExternalEmbeddingStore {
    /// Reads `{"key": ..., "vec": [...]}` lines. All vectors must share one width.
    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self, FeatureError> {
        let mut dim = None;
        let mut vectors = BTreeMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row: Row = serde_json::from_str(&line)
                .map_err(|e| FeatureError::Format(format!("embedding line {}: {e}", i + 1)))?;
            let expected = *dim.get_or_insert(row.vec.len());
            if row.vec.len() != expected || expected == 0 {
                return Err(FeatureError::RaggedEmbedding {
                    line: i + 1,
                    expected,
                    found: row.vec.len(),
                });
            }
            if row.vec.iter().any(|x| !x.is_finite()) {
                return Err(FeatureError::Format(format!(
                    "embedding line {}: non-finite value",
                    i + 1
                )));
            }
            if vectors.insert(row.key.clone(), row.vec).is_some() {
                return Err(FeatureError::Format(format!(
                    "embedding line {}: duplicate key `{}`",
                    i + 1,
                    row.key
                )));
            }
        }
        let dim = dim.ok_or_else(|| FeatureError::Format("embedding file is empty".into()))?;
        Ok(Self { dim, vectors })
    }

    pub fn load(path: &Path) -> Result<Self, FeatureError> {
        Self::from_reader(BufReader::new(File::open(path)?))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, key: &str) -> Result<&[f64], FeatureError> {
        self.vectors
            .get(key)
            .map(Vec::as_slice)
            .ok_or_else(|| FeatureError::MissingEmbedding(key.to_owned()))
    }

    pub fn lookup(&self, ticket: &DerivedTicket) -> Result<&[f64], FeatureError> {
        self.get(&ticket.key())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(dims: &[usize]) -> String {
        dims.iter()
            .enumerate()
            .map(|(i, &d)| {
                let v: Vec<f64> = (0..d).map(|j| (i * 1000 + j) as f64 * 0.001).collect();
                serde_json::json!({"key": format!("{i}:1"), "vec": v}).to_string()
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    #[test]
    fn loads_fixed_width_rows() {
        let store = ExternalEmbeddingStore::from_reader(rows(&[512, 512, 512]).as_bytes()).unwrap();
        assert_eq!((store.len(), store.dim()), (3, 512));
        let v = store.get("1:1").unwrap();
        assert_eq!(v[3].to_bits(), (1003.0f64 * 0.001).to_bits());
    }

    #[test]
    fn absent_key_is_an_error() {
        let store = ExternalEmbeddingStore::from_reader(rows(&[4]).as_bytes()).unwrap();
        let err = store.get("7:2").unwrap_err();
        assert!(err.to_string().contains("7:2"));
    }

    #[test]
    fn ragged_rows_fail() {
        assert!(matches!(
            ExternalEmbeddingStore::from_reader(rows(&[4, 5]).as_bytes()),
            Err(FeatureError::RaggedEmbedding { line: 2, .. })
        ));
    }
}
