use serde::{Deserialize, Serialize};

use super::{check_width, Classifier, Dataset, ModelError, Probabilities};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NbParams {
    /// Added to every variance, as a fraction of the largest feature variance.
    pub var_smoothing: f64,
}

impl Default for NbParams {
    fn default() -> Self {
        Self {
            var_smoothing: 1e-9,
        }
    }
}

/// Gaussian naive Bayes. Classes absent from training get probability zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianNb {
    pub n_classes: usize,
    pub n_features: usize,
    pub log_prior: Vec<Option<f64>>,
    pub means: Vec<Vec<f64>>,
    pub vars: Vec<Vec<f64>>,
    pub epsilon: f64,
}

impl GaussianNb {
    pub fn fit(data: &Dataset, params: &NbParams) -> Result<Self, ModelError> {
        if !(params.var_smoothing >= 0.0) {
            return Err(ModelError::InvalidParams(
                "var_smoothing must be >= 0".into(),
            ));
        }
        let k = data.n_classes();
        let d = data.n_features();
        let n = data.len() as f64;
        let counts = data.class_counts();

        let mut means = vec![vec![0.0; d]; k];
        for (row, &c) in data.x.iter().zip(&data.y) {
            for (m, v) in means[c].iter_mut().zip(row) {
                *m += v;
            }
        }
        for (c, m) in means.iter_mut().enumerate() {
            if counts[c] > 0 {
                m.iter_mut().for_each(|v| *v /= counts[c] as f64);
            }
        }
        let mut vars = vec![vec![0.0; d]; k];
        for (row, &c) in data.x.iter().zip(&data.y) {
            for ((s, v), m) in vars[c].iter_mut().zip(row).zip(&means[c]) {
                *s += (v - m) * (v - m);
            }
        }
        for (c, s) in vars.iter_mut().enumerate() {
            if counts[c] > 0 {
                s.iter_mut().for_each(|v| *v /= counts[c] as f64);
            }
        }

        // Smoothing is relative to the overall feature variances.
        let overall = super::Standardizer::fit(&data.x);
        let max_var = data
            .x
            .iter()
            .fold(vec![0.0f64; d], |mut acc, row| {
                for ((a, v), m) in acc.iter_mut().zip(row).zip(&overall.mean) {
                    *a += (v - m) * (v - m) / n;
                }
                acc
            })
            .into_iter()
            .fold(0.0f64, f64::max);
        let epsilon = if max_var > 0.0 {
            params.var_smoothing * max_var
        } else {
            params.var_smoothing
        }
        .max(f64::MIN_POSITIVE);
        for s in vars.iter_mut().flatten() {
            *s += epsilon;
        }

        let log_prior = counts
            .iter()
            .map(|&c| (c > 0).then(|| (c as f64 / n).ln()))
            .collect();
        Ok(Self {
            n_classes: k,
            n_features: d,
            log_prior,
            means,
            vars,
            epsilon,
        })
    }

    /// Joint log-likelihood per class; `None` for classes never seen.
    pub fn joint_log_likelihood(&self, x: &[f64]) -> Vec<Option<f64>> {
        check_width(self.n_features, x);
        (0..self.n_classes)
            .map(|c| {
                self.log_prior[c].map(|lp| {
                    let mut ll = lp;
                    for ((v, m), s) in x.iter().zip(&self.means[c]).zip(&self.vars[c]) {
                        ll -= 0.5 * (2.0 * std::f64::consts::PI * s).ln();
                        ll -= (v - m) * (v - m) / (2.0 * s);
                    }
                    ll
                })
            })
            .collect()
    }
}

impl Classifier for GaussianNb {
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_proba(&self, x: &[f64]) -> Probabilities {
        Probabilities::softmax(&self.joint_log_likelihood(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_hand_computed_posterior() {
        // class 0 at {0, 2}, class 1 at {4, 6}: means 1 and 5, variance 1.
        let ds = Dataset::ungrouped(
            vec![vec![0.0], vec![2.0], vec![4.0], vec![6.0]],
            vec![0, 0, 1, 1],
            2,
        )
        .unwrap();
        let m = GaussianNb::fit(&ds, &NbParams { var_smoothing: 0.0 }).unwrap();
        let p = m.predict_proba(&[2.0]);
        let l0 = (-0.5f64).exp();
        let l1 = (-4.5f64).exp();
        assert!((p.as_slice()[0] - l0 / (l0 + l1)).abs() < 1e-12);
    }

    #[test]
    fn absent_class_has_zero_probability() {
        let ds = Dataset::ungrouped(vec![vec![0.0], vec![1.0]], vec![0, 2], 3).unwrap();
        let m = GaussianNb::fit(&ds, &NbParams::default()).unwrap();
        let p = m.predict_proba(&[0.5]);
        assert_eq!(p.as_slice()[1], 0.0);
        assert!((p.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
