use serde::{Deserialize, Serialize};

use super::tree::midpoint;
use super::{check_width, Classifier, Dataset, ModelError, Probabilities};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbtParams {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Unused by the exact greedy learner; kept so all kinds take a seed.
    pub seed: u64,
}

impl Default for GbtParams {
    fn default() -> Self {
        Self {
            n_rounds: 100,
            learning_rate: 0.1,
            max_depth: 3,
            min_samples_leaf: 1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum RNode {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: u32,
        right: u32,
    },
}

/// Least-squares regression tree with caller-supplied leaf values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    nodes: Vec<RNode>,
}

struct RSplit {
    feature: usize,
    threshold: f64,
    score: f64,
}

fn best_sse_split(
    x: &[Vec<f64>],
    target: &[f64],
    rows: &[usize],
    min_leaf: usize,
) -> Option<RSplit> {
    let d = x.first().map_or(0, Vec::len);
    let total: f64 = rows.iter().map(|&i| target[i]).sum();
    let n = rows.len();
    let mut best: Option<RSplit> = None;
    let mut order: Vec<(f64, f64)> = Vec::with_capacity(n);
    for f in 0..d {
        order.clear();
        order.extend(rows.iter().map(|&i| (x[i][f], target[i])));
        order.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut left = 0.0;
        for j in 0..n - 1 {
            left += order[j].1;
            let nl = j + 1;
            if order[j].0 == order[j + 1].0 || nl < min_leaf || n - nl < min_leaf {
                continue;
            }
            let right = total - left;
            // SSE up to a constant: -(SL^2 / nL + SR^2 / nR).
            let score = -(left * left / nl as f64 + right * right / (n - nl) as f64);
            if best.as_ref().is_none_or(|b| score < b.score) {
                best = Some(RSplit {
                    feature: f,
                    threshold: midpoint(order[j].0, order[j + 1].0),
                    score,
                });
            }
        }
    }
    best
}

impl RegressionTree {
    pub fn fit(
        x: &[Vec<f64>],
        target: &[f64],
        rows: &[usize],
        max_depth: usize,
        min_samples_leaf: usize,
        leaf_value: &dyn Fn(&[usize]) -> f64,
    ) -> Self {
        let mut nodes: Vec<RNode> = Vec::new();
        let mut stack: Vec<(Vec<usize>, usize, Option<(usize, bool)>)> =
            vec![(rows.to_vec(), 0, None)];
        while let Some((node_rows, depth, parent)) = stack.pop() {
            let id = nodes.len();
            if let Some((p, is_left)) = parent {
                if let RNode::Split { left, right, .. } = &mut nodes[p] {
                    if is_left {
                        *left = id as u32;
                    } else {
                        *right = id as u32;
                    }
                }
            }
            let split = if depth >= max_depth || node_rows.len() < 2 {
                None
            } else {
                best_sse_split(x, target, &node_rows, min_samples_leaf.max(1))
            };
            match split {
                None => nodes.push(RNode::Leaf {
                    value: leaf_value(&node_rows),
                }),
                Some(s) => {
                    let (l, r): (Vec<usize>, Vec<usize>) = node_rows
                        .iter()
                        .partition(|&&i| x[i][s.feature] <= s.threshold);
                    nodes.push(RNode::Split {
                        feature: s.feature,
                        threshold: s.threshold,
                        left: 0,
                        right: 0,
                    });
                    stack.push((r, depth + 1, Some((id, false))));
                    stack.push((l, depth + 1, Some((id, true))));
                }
            }
        }
        Self { nodes }
    }

    pub fn root_split(&self) -> Option<(usize, f64)> {
        match self.nodes.first()? {
            RNode::Split {
                feature, threshold, ..
            } => Some((*feature, *threshold)),
            RNode::Leaf { .. } => None,
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                RNode::Leaf { value } => return *value,
                RNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[*feature] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }
}

/// Multiclass gradient boosting on the softmax log-loss: each round fits one
/// regression tree per class to the residuals `y - p` and sets leaf values by
/// a single Newton step. Classes absent from training get probability zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientBoosting {
    pub params: GbtParams,
    n_classes: usize,
    n_features: usize,
    active: Vec<bool>,
    init: Vec<f64>,
    /// `rounds[m][c]` is `None` for inactive classes.
    rounds: Vec<Vec<Option<RegressionTree>>>,
    /// Mean training log-loss before the first round and after each round.
    pub train_loss: Vec<f64>,
}

fn softmax_active(scores: &[f64], active: &[bool]) -> Vec<f64> {
    let opt: Vec<Option<f64>> = scores
        .iter()
        .zip(active)
        .map(|(s, &a)| a.then_some(*s))
        .collect();
    Probabilities::softmax(&opt).into_vec()
}

fn mean_log_loss(f: &[Vec<f64>], y: &[usize], active: &[bool]) -> f64 {
    let n = y.len() as f64;
    f.iter()
        .zip(y)
        .map(|(fi, &yi)| -softmax_active(fi, active)[yi].max(1e-300).ln())
        .sum::<f64>()
        / n
}

impl GradientBoosting {
    pub fn fit(data: &Dataset, params: &GbtParams) -> Result<Self, ModelError> {
        if !(params.learning_rate >= 0.0) || params.max_depth == 0 {
            return Err(ModelError::InvalidParams(
                "learning_rate must be >= 0 and max_depth >= 1".into(),
            ));
        }
        let n = data.len();
        let k = data.n_classes();
        let counts = data.class_counts();
        let active: Vec<bool> = counts.iter().map(|&c| c > 0).collect();
        let k_active = active.iter().filter(|&&a| a).count() as f64;
        let init: Vec<f64> = counts
            .iter()
            .map(|&c| {
                if c > 0 {
                    (c as f64 / n as f64).ln()
                } else {
                    0.0
                }
            })
            .collect();
        let mut f: Vec<Vec<f64>> = vec![init.clone(); n];
        let rows: Vec<usize> = (0..n).collect();
        let mut rounds = Vec::with_capacity(params.n_rounds);
        let mut train_loss = vec![mean_log_loss(&f, &data.y, &active)];
        let newton = (k_active - 1.0) / k_active;
        for _ in 0..params.n_rounds {
            let probs: Vec<Vec<f64>> = f.iter().map(|fi| softmax_active(fi, &active)).collect();
            let mut round = Vec::with_capacity(k);
            for c in 0..k {
                if !active[c] {
                    round.push(None);
                    continue;
                }
                let resid: Vec<f64> = (0..n)
                    .map(|i| f64::from(u8::from(data.y[i] == c)) - probs[i][c])
                    .collect();
                let leaf = |leaf_rows: &[usize]| -> f64 {
                    let num: f64 = leaf_rows.iter().map(|&i| resid[i]).sum();
                    let den: f64 = leaf_rows
                        .iter()
                        .map(|&i| resid[i].abs() * (1.0 - resid[i].abs()))
                        .sum();
                    if den < 1e-12 {
                        0.0
                    } else {
                        newton * num / den
                    }
                };
                let tree = RegressionTree::fit(
                    &data.x,
                    &resid,
                    &rows,
                    params.max_depth,
                    params.min_samples_leaf,
                    &leaf,
                );
                for (fi, xi) in f.iter_mut().zip(&data.x) {
                    fi[c] += params.learning_rate * tree.predict(xi);
                }
                round.push(Some(tree));
            }
            rounds.push(round);
            train_loss.push(mean_log_loss(&f, &data.y, &active));
        }
        Ok(Self {
            params: params.clone(),
            n_classes: k,
            n_features: data.n_features(),
            active,
            init,
            rounds,
            train_loss,
        })
    }

    pub fn rounds(&self) -> &[Vec<Option<RegressionTree>>] {
        &self.rounds
    }

    pub fn raw_scores(&self, x: &[f64]) -> Vec<f64> {
        check_width(self.n_features, x);
        let mut s = self.init.clone();
        for round in &self.rounds {
            for (sc, tree) in s.iter_mut().zip(round) {
                if let Some(t) = tree {
                    *sc += self.params.learning_rate * t.predict(x);
                }
            }
        }
        s
    }
}

impl Classifier for GradientBoosting {
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_proba(&self, x: &[f64]) -> Probabilities {
        Probabilities::from_weights(softmax_active(&self.raw_scores(x), &self.active))
    }
}
