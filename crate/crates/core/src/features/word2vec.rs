//! Word2vec embeddings (CBOW and skip-gram) trained with negative sampling.
//!
//! Training is single-threaded and fully determined by the seed.

use std::collections::{BTreeMap, HashMap};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::FeatureError;
use crate::rng;

pub const WORD2VEC_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Word2VecVariant {
    Cbow,
    Skipgram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Word2VecParams {
    pub variant: Word2VecVariant,
    pub dim: usize,
    pub window: usize,
    pub negative: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for Word2VecParams {
    fn default() -> Self {
        Self {
            variant: Word2VecVariant::Cbow,
            dim: 100,
            window: 5,
            negative: 5,
            epochs: 5,
            learning_rate: 0.025,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordEmbeddingModel {
    pub format_version: u32,
    pub params: Word2VecParams,
    pub vocab: BTreeMap<String, Vec<f64>>,
}

fn sigmoid(x: f64) -> f64 {
    if x > 30.0 {
        1.0
    } else if x < -30.0 {
        0.0
    } else {
        1.0 / (1.0 + (-x).exp())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Noise distribution proportional to count^0.75.
struct NoiseTable {
    cumulative: Vec<f64>,
}

impl NoiseTable {
    fn new(counts: &[usize]) -> Self {
        let mut acc = 0.0;
        let cumulative = counts
            .iter()
            .map(|&c| {
                acc += (c as f64).powf(0.75);
                acc
            })
            .collect();
        Self { cumulative }
    }

    fn sample(&self, rng: &mut rng::Rng) -> usize {
        let total = *self.cumulative.last().expect("non-empty vocabulary");
        let u = rng.random::<f64>() * total;
        self.cumulative
            .partition_point(|&c| c <= u)
            .min(self.cumulative.len() - 1)
    }
}

struct Trainer<'a> {
    params: &'a Word2VecParams,
    input: Vec<Vec<f64>>,
    output: Vec<Vec<f64>>,
    noise: NoiseTable,
    grad: Vec<f64>,
}

impl Trainer<'_> {
    /// One positive plus `negative` noise updates against hidden vector `hidden`;
    /// accumulates the hidden-side gradient into `self.grad`.
    fn score_target(&mut self, hidden: &[f64], target: usize, alpha: f64, rng: &mut rng::Rng) {
        for n in 0..=self.params.negative {
            let (word, label) = if n == 0 {
                (target, 1.0)
            } else {
                let w = self.noise.sample(rng);
                if w == target {
                    continue;
                }
                (w, 0.0)
            };
            let out = &mut self.output[word];
            let g = (label - sigmoid(dot(hidden, out))) * alpha;
            for ((e, o), h) in self.grad.iter_mut().zip(out.iter_mut()).zip(hidden) {
                *e += g * *o;
                *o += g * h;
            }
        }
    }
}

impl WordEmbeddingModel {
    pub fn train(docs: &[Vec<String>], params: &Word2VecParams) -> Result<Self, FeatureError> {
        if params.dim == 0 || params.window == 0 {
            return Err(FeatureError::InvalidParameter(
                "word2vec dim and window must be positive".into(),
            ));
        }
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for d in docs {
            for t in d {
                *counts.entry(t.as_str()).or_insert(0) += 1;
            }
        }
        if counts.is_empty() {
            return Err(FeatureError::EmptyTrainingText);
        }
        let mut words: Vec<(&str, usize)> = counts.into_iter().collect();
        words.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let index: HashMap<&str, usize> = words
            .iter()
            .enumerate()
            .map(|(i, (w, _))| (*w, i))
            .collect();
        let sentences: Vec<Vec<usize>> = docs
            .iter()
            .map(|d| d.iter().map(|t| index[t.as_str()]).collect())
            .collect();

        let mut rng = rng::seeded(params.seed);
        let dim = params.dim;
        let input: Vec<Vec<f64>> = (0..words.len())
            .map(|_| {
                (0..dim)
                    .map(|_| (rng.random::<f64>() - 0.5) / dim as f64)
                    .collect()
            })
            .collect();
        let mut trainer = Trainer {
            params,
            input,
            output: vec![vec![0.0; dim]; words.len()],
            noise: NoiseTable::new(&words.iter().map(|w| w.1).collect::<Vec<_>>()),
            grad: vec![0.0; dim],
        };

        let total = (sentences.iter().map(Vec::len).sum::<usize>() * params.epochs).max(1) as f64;
        let mut processed = 0usize;
        let mut hidden = vec![0.0; dim];
        for _ in 0..params.epochs {
            for sentence in &sentences {
                for (pos, &center) in sentence.iter().enumerate() {
                    let alpha = params.learning_rate * (1.0 - processed as f64 / total).max(1e-4);
                    processed += 1;
                    let shrink = rng.random_range(0..params.window);
                    let reach = params.window - shrink;
                    let lo = pos.saturating_sub(reach);
                    let hi = (pos + reach).min(sentence.len() - 1);
                    let context: Vec<usize> = (lo..=hi)
                        .filter(|&p| p != pos)
                        .map(|p| sentence[p])
                        .collect();
                    if context.is_empty() {
                        continue;
                    }
                    match params.variant {
                        Word2VecVariant::Cbow => {
                            hidden.iter_mut().for_each(|h| *h = 0.0);
                            for &c in &context {
                                for (h, v) in hidden.iter_mut().zip(&trainer.input[c]) {
                                    *h += v;
                                }
                            }
                            let n = context.len() as f64;
                            hidden.iter_mut().for_each(|h| *h /= n);
                            trainer.grad.iter_mut().for_each(|g| *g = 0.0);
                            trainer.score_target(&hidden, center, alpha, &mut rng);
                            for &c in &context {
                                for (v, g) in trainer.input[c].iter_mut().zip(&trainer.grad) {
                                    *v += g;
                                }
                            }
                        }
                        Word2VecVariant::Skipgram => {
                            for &c in &context {
                                hidden.copy_from_slice(&trainer.input[c]);
                                trainer.grad.iter_mut().for_each(|g| *g = 0.0);
                                trainer.score_target(&hidden, center, alpha, &mut rng);
                                for (v, g) in trainer.input[c].iter_mut().zip(&trainer.grad) {
                                    *v += g;
                                }
                            }
                        }
                    }
                }
            }
        }

        let vocab = words
            .iter()
            .map(|(w, _)| (*w).to_owned())
            .zip(trainer.input)
            .collect();
        Ok(Self {
            format_version: WORD2VEC_FORMAT_VERSION,
            params: params.clone(),
            vocab,
        })
    }

    pub fn dim(&self) -> usize {
        self.params.dim
    }

    pub fn vector(&self, word: &str) -> Option<&[f64]> {
        self.vocab.get(word).map(Vec::as_slice)
    }

    /// Mean of the in-vocabulary token vectors; zeros if none is known.
    pub fn embed_average(&self, tokens: &[String]) -> Vec<f64> {
        let mut sum = vec![0.0; self.dim()];
        let mut n = 0usize;
        for t in tokens {
            if let Some(v) = self.vector(t) {
                for (s, x) in sum.iter_mut().zip(v) {
                    *s += x;
                }
                n += 1;
            }
        }
        if n > 0 {
            sum.iter_mut().for_each(|s| *s /= n as f64);
        }
        sum
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot(a, b) / (na * nb)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::IndexedRandom;

    /// "hot" and "warm" share summer contexts, "cold" only appears with winter ones.
    fn contextual_corpus() -> Vec<Vec<String>> {
        let summer = ["sun", "beach", "summer", "sweat", "sand", "july"];
        let winter = ["snow", "ice", "winter", "frost", "sled", "january"];
        let mut rng = rng::seeded(99);
        let mut docs = Vec::new();
        for i in 0..600 {
            let (word, ctx) = match i % 3 {
                0 => ("hot", &summer),
                1 => ("warm", &summer),
                _ => ("cold", &winter),
            };
            let mut doc: Vec<String> = (0..3)
                .map(|_| ctx.choose(&mut rng).unwrap().to_string())
                .collect();
            doc.insert(1, word.to_owned());
            doc.extend((0..2).map(|_| ctx.choose(&mut rng).unwrap().to_string()));
            docs.push(doc);
        }
        docs
    }

    fn params(variant: Word2VecVariant) -> Word2VecParams {
        Word2VecParams {
            variant,
            dim: 16,
            window: 2,
            epochs: 10,
            seed: 5,
            ..Word2VecParams::default()
        }
    }

    #[test]
    fn shared_contexts_give_closer_vectors() {
        for variant in [Word2VecVariant::Cbow, Word2VecVariant::Skipgram] {
            let m = WordEmbeddingModel::train(&contextual_corpus(), &params(variant)).unwrap();
            let hot = m.vector("hot").unwrap();
            let warm = m.vector("warm").unwrap();
            let cold = m.vector("cold").unwrap();
            assert!(
                cosine(hot, warm) > cosine(hot, cold),
                "{variant:?}: hot/warm {} vs hot/cold {}",
                cosine(hot, warm),
                cosine(hot, cold)
            );
        }
    }

    #[test]
    fn vectors_have_requested_dim_and_are_deterministic() {
        let a = WordEmbeddingModel::train(&contextual_corpus(), &params(Word2VecVariant::Cbow))
            .unwrap();
        assert!(a.vocab.values().all(|v| v.len() == 16));
        let b = WordEmbeddingModel::train(&contextual_corpus(), &params(Word2VecVariant::Cbow))
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn averaging() {
        let m = WordEmbeddingModel::train(&contextual_corpus(), &params(Word2VecVariant::Cbow))
            .unwrap();
        let w1 = m.vector("hot").unwrap().to_vec();
        let w2 = m.vector("ice").unwrap().to_vec();
        assert_eq!(m.embed_average(&["hot".into(), "hot".into()]), w1);
        let mean: Vec<f64> = w1.iter().zip(&w2).map(|(a, b)| (a + b) / 2.0).collect();
        let got = m.embed_average(&["hot".into(), "ice".into()]);
        assert!(got.iter().zip(&mean).all(|(a, b)| (a - b).abs() < 1e-15));
        assert_eq!(m.embed_average(&["nope".into()]), vec![0.0; 16]);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(WordEmbeddingModel::train(&[], &Word2VecParams::default()).is_err());
    }
}
