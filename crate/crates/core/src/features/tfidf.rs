use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::stopwords::STOP_WORDS_VERSION;
use super::FeatureError;

pub const TFIDF_FORMAT_VERSION: u32 = 1;

/// Smoothed inverse document frequency: `ln((1 + n) / (1 + df)) + 1`.
pub fn idf(n_docs: usize, df: usize) -> f64 {
    ((1.0 + n_docs as f64) / (1.0 + df as f64)).ln() + 1.0
}

/// Term counts of a tokenized document.
fn counts(doc: &[String]) -> HashMap<&str, usize> {
    let mut c = HashMap::new();
    for t in doc {
        *c.entry(t.as_str()).or_insert(0) += 1;
    }
    c
}

/// TF-IDF restricted to the `top_k` terms with the highest TF-IDF value
/// reached in any training document.
///
/// `tf(t, d) = count(t, d) / |d|`, `tfidf = tf * idf`, no normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfModel {
    pub format_version: u32,
    pub stop_words_version: String,
    pub top_k: usize,
    pub n_docs: usize,
    /// Ranked by descending best score, ties lexicographic.
    pub vocabulary: Vec<String>,
    pub idf: Vec<f64>,
}

impl TfidfModel {
    pub fn fit(docs: &[Vec<String>], top_k: usize) -> Result<Self, FeatureError> {
        if !docs.iter().any(|d| !d.is_empty()) {
            return Err(FeatureError::EmptyTrainingText);
        }
        let n_docs = docs.len();
        let mut df: BTreeMap<&str, usize> = BTreeMap::new();
        let per_doc: Vec<HashMap<&str, usize>> = docs.iter().map(|d| counts(d)).collect();
        for c in &per_doc {
            for term in c.keys() {
                *df.entry(term).or_insert(0) += 1;
            }
        }
        let idf_of: HashMap<&str, f64> = df.iter().map(|(t, &n)| (*t, idf(n_docs, n))).collect();
        let mut best: HashMap<&str, f64> = HashMap::new();
        for (doc, c) in docs.iter().zip(&per_doc) {
            let len = doc.len() as f64;
            for (term, &n) in c {
                let score = n as f64 / len * idf_of[term];
                let slot = best.entry(term).or_insert(f64::NEG_INFINITY);
                if score > *slot {
                    *slot = score;
                }
            }
        }
        let mut ranked: Vec<(&str, f64)> = best.into_iter().collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(top_k);
        Ok(Self {
            format_version: TFIDF_FORMAT_VERSION,
            stop_words_version: STOP_WORDS_VERSION.to_owned(),
            top_k,
            n_docs,
            idf: ranked.iter().map(|(t, _)| idf_of[t]).collect(),
            vocabulary: ranked.into_iter().map(|(t, _)| t.to_owned()).collect(),
        })
    }

    pub fn width(&self) -> usize {
        self.vocabulary.len()
    }

    /// Per-vocabulary-term TF-IDF of `doc`; zeros for absent terms.
    pub fn transform(&self, doc: &[String]) -> Vec<f64> {
        if doc.is_empty() {
            return vec![0.0; self.width()];
        }
        let c = counts(doc);
        let len = doc.len() as f64;
        self.vocabulary
            .iter()
            .zip(&self.idf)
            .map(|(term, idf)| match c.get(term.as_str()) {
                Some(&n) => n as f64 / len * idf,
                None => 0.0,
            })
            .collect()
    }

    pub fn idf_of(&self, term: &str) -> Option<f64> {
        self.vocabulary
            .iter()
            .position(|t| t == term)
            .map(|i| self.idf[i])
    }
}
