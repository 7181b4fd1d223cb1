use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Gini,
    Entropy,
}

/// Number of features examined per split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    /// Same as `Sqrt`, kept as a separate name for configuration files.
    Auto,
    Sqrt,
    Log2,
    All,
}

impl MaxFeatures {
    pub fn resolve(self, n_features: usize) -> usize {
        let d = n_features as f64;
        let m = match self {
            MaxFeatures::Auto | MaxFeatures::Sqrt => d.sqrt().floor() as usize,
            MaxFeatures::Log2 => d.log2().floor() as usize,
            MaxFeatures::All => n_features,
        };
        m.clamp(1, n_features.max(1))
    }
}

/// Impurity of a class-count vector.
pub fn impurity(criterion: Criterion, counts: &[f64]) -> f64 {
    let n: f64 = counts.iter().sum();
    if n <= 0.0 {
        return 0.0;
    }
    match criterion {
        Criterion::Gini => 1.0 - counts.iter().map(|c| (c / n) * (c / n)).sum::<f64>(),
        Criterion::Entropy => -counts
            .iter()
            .filter(|&&c| c > 0.0)
            .map(|c| (c / n) * (c / n).ln())
            .sum::<f64>(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub max_features: MaxFeatures,
    pub criterion: Criterion,
    pub min_samples_split: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: None,
            max_features: MaxFeatures::All,
            criterion: Criterion::Gini,
            min_samples_split: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum Node {
    Leaf {
        dist: Vec<f64>,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: u32,
        right: u32,
    },
}

/// CART classification tree. Rows with `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    n_classes: usize,
    n_features: usize,
    nodes: Vec<Node>,
}

/// Best split of a set of rows on one feature.
pub(crate) struct SplitCandidate {
    pub feature: usize,
    pub threshold: f64,
    pub score: f64,
}

/// Midpoint between two distinct sorted values that still separates them.
pub(crate) fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    if m < hi {
        m
    } else {
        lo
    }
}

fn best_split_on(
    x: &[Vec<f64>],
    y: &[usize],
    rows: &[usize],
    feature: usize,
    n_classes: usize,
    criterion: Criterion,
) -> Option<SplitCandidate> {
    let mut order: Vec<(f64, usize)> = rows.iter().map(|&i| (x[i][feature], y[i])).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = order.len() as f64;
    let mut right = vec![0.0; n_classes];
    for &(_, c) in &order {
        right[c] += 1.0;
    }
    let mut left = vec![0.0; n_classes];
    let mut best: Option<SplitCandidate> = None;
    for j in 0..order.len() - 1 {
        let c = order[j].1;
        left[c] += 1.0;
        right[c] -= 1.0;
        if order[j].0 == order[j + 1].0 {
            continue;
        }
        let nl = (j + 1) as f64;
        let score = (nl * impurity(criterion, &left) + (n - nl) * impurity(criterion, &right)) / n;
        if best.as_ref().is_none_or(|b| score < b.score) {
            best = Some(SplitCandidate {
                feature,
                threshold: midpoint(order[j].0, order[j + 1].0),
                score,
            });
        }
    }
    best
}

impl DecisionTree {
    /// Grows a tree on `rows` (repeats allowed, as in a bootstrap sample).
    pub fn fit(
        x: &[Vec<f64>],
        y: &[usize],
        rows: &[usize],
        n_classes: usize,
        params: &TreeParams,
        rng: &mut Rng,
    ) -> Self {
        let n_features = x.first().map_or(0, Vec::len);
        let m = params.max_features.resolve(n_features);
        let mut tree = Self {
            n_classes,
            n_features,
            nodes: Vec::new(),
        };
        // (rows, depth, slot in parent to patch)
        let mut stack: Vec<(Vec<usize>, usize, Option<(usize, bool)>)> =
            vec![(rows.to_vec(), 0, None)];
        let mut features: Vec<usize> = (0..n_features).collect();
        while let Some((node_rows, depth, parent)) = stack.pop() {
            let id = tree.nodes.len();
            if let Some((p, is_left)) = parent {
                if let Node::Split { left, right, .. } = &mut tree.nodes[p] {
                    if is_left {
                        *left = id as u32;
                    } else {
                        *right = id as u32;
                    }
                }
            }
            let mut counts = vec![0.0; n_classes];
            for &i in &node_rows {
                counts[y[i]] += 1.0;
            }
            let pure = counts.iter().filter(|&&c| c > 0.0).count() <= 1;
            let depth_done = params.max_depth.is_some_and(|d| depth >= d);
            let split = if pure || depth_done || node_rows.len() < params.min_samples_split {
                None
            } else {
                features.shuffle(rng);
                let mut best: Option<SplitCandidate> = None;
                // Keep drawing features past `m` until some split is possible.
                for (drawn, &f) in features.iter().enumerate() {
                    if drawn >= m && best.is_some() {
                        break;
                    }
                    if let Some(c) = best_split_on(x, y, &node_rows, f, n_classes, params.criterion)
                    {
                        let better = match &best {
                            None => true,
                            Some(b) => {
                                c.score < b.score || (c.score == b.score && c.feature < b.feature)
                            }
                        };
                        if better {
                            best = Some(c);
                        }
                    }
                }
                best
            };
            match split {
                None => {
                    let n: f64 = counts.iter().sum();
                    tree.nodes.push(Node::Leaf {
                        dist: counts.iter().map(|c| c / n).collect(),
                    });
                }
                Some(s) => {
                    let (l, r): (Vec<usize>, Vec<usize>) = node_rows
                        .iter()
                        .partition(|&&i| x[i][s.feature] <= s.threshold);
                    tree.nodes.push(Node::Split {
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
        tree
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Feature and threshold of the root split, if the root is not a leaf.
    pub fn root_split(&self) -> Option<(usize, f64)> {
        match self.nodes.first()? {
            Node::Split {
                feature, threshold, ..
            } => Some((*feature, *threshold)),
            Node::Leaf { .. } => None,
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => {
                    1 + go(nodes, *left as usize).max(go(nodes, *right as usize))
                }
            }
        }
        if self.nodes.is_empty() {
            0
        } else {
            go(&self.nodes, 0)
        }
    }

    /// Class frequencies at the leaf reached by `x`.
    pub fn leaf_distribution(&self, x: &[f64]) -> &[f64] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { dist } => return dist,
                Node::Split {
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn impurity_values() {
        assert_eq!(impurity(Criterion::Gini, &[2.0, 2.0]), 0.5);
        assert!((impurity(Criterion::Entropy, &[1.0, 1.0]) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(impurity(Criterion::Entropy, &[3.0, 0.0]), 0.0);
    }

    #[test]
    fn max_features_resolution() {
        assert_eq!(MaxFeatures::Sqrt.resolve(10), 3);
        assert_eq!(MaxFeatures::Auto.resolve(10), 3);
        assert_eq!(MaxFeatures::Log2.resolve(10), 3);
        assert_eq!(MaxFeatures::Log2.resolve(1), 1);
        assert_eq!(MaxFeatures::All.resolve(7), 7);
    }

    #[test]
    fn separable_data_is_fit_exactly() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, (i % 3) as f64]).collect();
        let y: Vec<usize> = (0..20).map(|i| usize::from(i >= 7)).collect();
        let rows: Vec<usize> = (0..20).collect();
        let t = DecisionTree::fit(
            &x,
            &y,
            &rows,
            2,
            &TreeParams::default(),
            &mut rng::seeded(0),
        );
        assert_eq!(t.root_split(), Some((0, 6.5)));
        assert_eq!(t.depth(), 1);
        for (row, &c) in x.iter().zip(&y) {
            assert_eq!(t.leaf_distribution(row)[c], 1.0);
        }
    }

    #[test]
    fn depth_limit_is_respected() {
        let x: Vec<Vec<f64>> = (0..64).map(|i| vec![i as f64]).collect();
        let y: Vec<usize> = (0..64).map(|i| i % 2).collect();
        let rows: Vec<usize> = (0..64).collect();
        let p = TreeParams {
            max_depth: Some(3),
            ..TreeParams::default()
        };
        let t = DecisionTree::fit(&x, &y, &rows, 2, &p, &mut rng::seeded(0));
        assert_eq!(t.depth(), 3);
    }
}
