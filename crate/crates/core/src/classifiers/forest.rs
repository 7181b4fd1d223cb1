use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{Criterion, DecisionTree, MaxFeatures, TreeParams};
use super::{check_width, Classifier, Dataset, ModelError, Probabilities};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RandomForestParams {
    /// `None` grows trees until leaves are pure.
    pub max_depth: Option<usize>,
    pub max_features: MaxFeatures,
    pub n_estimators: usize,
    pub criterion: Criterion,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for RandomForestParams {
    fn default() -> Self {
        Self {
            max_depth: None,
            max_features: MaxFeatures::Sqrt,
            n_estimators: 100,
            criterion: Criterion::Gini,
            bootstrap: true,
            seed: 0,
        }
    }
}

/// Bagged CART trees; probabilities are the mean of leaf class frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub params: RandomForestParams,
    n_classes: usize,
    n_features: usize,
    trees: Vec<DecisionTree>,
}

impl RandomForest {
    pub fn fit(data: &Dataset, params: &RandomForestParams) -> Result<Self, ModelError> {
        if params.n_estimators == 0 {
            return Err(ModelError::InvalidParams(
                "n_estimators must be >= 1".into(),
            ));
        }
        if params.max_depth == Some(0) {
            return Err(ModelError::InvalidParams("max_depth must be >= 1".into()));
        }
        let n = data.len();
        let k = data.n_classes();
        let tree_params = TreeParams {
            max_depth: params.max_depth,
            max_features: params.max_features,
            criterion: params.criterion,
            min_samples_split: 2,
        };
        let trees = (0..params.n_estimators as u64)
            .into_par_iter()
            .map(|t| {
                let mut r = rng::stream(params.seed, t);
                let rows: Vec<usize> = if params.bootstrap {
                    (0..n).map(|_| r.random_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                DecisionTree::fit(&data.x, &data.y, &rows, k, &tree_params, &mut r)
            })
            .collect();
        Ok(Self {
            params: params.clone(),
            n_classes: k,
            n_features: data.n_features(),
            trees,
        })
    }

    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }
}

impl Classifier for RandomForest {
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_proba(&self, x: &[f64]) -> Probabilities {
        check_width(self.n_features, x);
        let mut acc = vec![0.0; self.n_classes];
        for t in &self.trees {
            for (a, p) in acc.iter_mut().zip(t.leaf_distribution(x)) {
                *a += p;
            }
        }
        Probabilities::from_weights(acc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs() -> Dataset {
        let x: Vec<Vec<f64>> = (0..60)
            .map(|i| {
                let c = (i % 3) as f64;
                vec![
                    c * 4.0 + (i as f64 * 0.37).sin(),
                    c - (i as f64 * 0.11).cos(),
                ]
            })
            .collect();
        let y = (0..60).map(|i| i % 3).collect();
        Dataset::ungrouped(x, y, 3).unwrap()
    }

    #[test]
    fn fits_and_is_deterministic() {
        let ds = blobs();
        let p = RandomForestParams {
            n_estimators: 15,
            seed: 9,
            ..Default::default()
        };
        let a = RandomForest::fit(&ds, &p).unwrap();
        let b = RandomForest::fit(&ds, &p).unwrap();
        assert_eq!(a, b);
        let correct =
            ds.x.iter()
                .zip(&ds.y)
                .filter(|(x, &y)| a.predict(x) == y)
                .count();
        assert!(correct >= 57);
    }

    #[test]
    fn rejects_zero_trees() {
        let p = RandomForestParams {
            n_estimators: 0,
            ..Default::default()
        };
        assert!(RandomForest::fit(&blobs(), &p).is_err());
    }
}
