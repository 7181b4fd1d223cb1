//! Weighted F1, random-guess baselines and per-prefix-length analysis.

use std::collections::BTreeMap;
use std::io::Write;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::Rng;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{truth} true labels but {pred} predictions")]
    LengthMismatch { truth: usize, pred: usize },
    #[error("nothing to evaluate")]
    Empty,
    #[error("label {label} out of range for {n_classes} classes")]
    ClassOutOfRange { label: usize, n_classes: usize },
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// `TP / (TP + (FP + FN) / 2)`, zero when the denominator is zero.
pub fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    let den = tp as f64 + 0.5 * (fp + fn_) as f64;
    if den == 0.0 {
        0.0
    } else {
        tp as f64 / den
    }
}

/// `counts[true][pred]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn new(y_true: &[usize], y_pred: &[usize], n_classes: usize) -> Result<Self, EvalError> {
        if y_true.len() != y_pred.len() {
            return Err(EvalError::LengthMismatch {
                truth: y_true.len(),
                pred: y_pred.len(),
            });
        }
        let mut counts = vec![vec![0; n_classes]; n_classes];
        for (&t, &p) in y_true.iter().zip(y_pred) {
            for label in [t, p] {
                if label >= n_classes {
                    return Err(EvalError::ClassOutOfRange { label, n_classes });
                }
            }
            counts[t][p] += 1;
        }
        Ok(Self { counts })
    }

    pub fn support(&self) -> Vec<usize> {
        self.counts.iter().map(|row| row.iter().sum()).collect()
    }

    pub fn per_class_f1(&self) -> Vec<f64> {
        let k = self.counts.len();
        (0..k)
            .map(|c| {
                let tp = self.counts[c][c];
                let fn_ = self.counts[c].iter().sum::<usize>() - tp;
                let fp = (0..k).map(|t| self.counts[t][c]).sum::<usize>() - tp;
                f1(tp, fp, fn_)
            })
            .collect()
    }

    pub fn weighted_f1(&self) -> f64 {
        let support = self.support();
        let n: usize = support.iter().sum();
        if n == 0 {
            return 0.0;
        }
        self.per_class_f1()
            .iter()
            .zip(&support)
            .map(|(f, &s)| f * s as f64)
            .sum::<f64>()
            / n as f64
    }
}

/// Support-weighted mean of per-class F1.
pub fn weighted_f1(y_true: &[usize], y_pred: &[usize], n_classes: usize) -> Result<f64, EvalError> {
    if y_true.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(ConfusionMatrix::new(y_true, y_pred, n_classes)?.weighted_f1())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub target: String,
    pub model_id: String,
    pub n: usize,
    pub class_names: Vec<String>,
    pub per_class_f1: Vec<f64>,
    pub support: Vec<usize>,
    pub weighted_f1: f64,
    /// Expected weighted F1 of a uniform random guesser on the same labels.
    pub random_baseline_f1: f64,
}

impl EvalReport {
    pub fn compute(
        target: &str,
        model_id: &str,
        class_names: &[String],
        y_true: &[usize],
        y_pred: &[usize],
    ) -> Result<Self, EvalError> {
        if y_true.is_empty() {
            return Err(EvalError::Empty);
        }
        let cm = ConfusionMatrix::new(y_true, y_pred, class_names.len())?;
        let support = cm.support();
        let all: Vec<usize> = (0..class_names.len()).collect();
        Ok(Self {
            target: target.to_owned(),
            model_id: model_id.to_owned(),
            n: y_true.len(),
            class_names: class_names.to_vec(),
            per_class_f1: cm.per_class_f1(),
            weighted_f1: cm.weighted_f1(),
            random_baseline_f1: random_guesser_f1(&support, &all),
            support,
        })
    }

    /// Recomputes the baseline as uniform guessing over `guessed` classes,
    /// typically those observed in training.
    pub fn with_baseline_classes(mut self, guessed: &[usize]) -> Self {
        self.random_baseline_f1 = random_guesser_f1(&self.support, guessed);
        self
    }
}

/// Expected weighted F1 of guessing uniformly among `guessed` classes, using
/// expected counts: a guessed class with support `s` scores `2s / (k s + n)`
/// where `k = guessed.len()`; other classes score zero.
pub fn random_guesser_f1(support: &[usize], guessed: &[usize]) -> f64 {
    let n: usize = support.iter().sum();
    let k = guessed.len() as f64;
    if n == 0 || guessed.is_empty() {
        return 0.0;
    }
    let n = n as f64;
    guessed
        .iter()
        .map(|&c| {
            let s = support[c] as f64;
            if s == 0.0 {
                0.0
            } else {
                s * 2.0 * s / (k * s + n)
            }
        })
        .sum::<f64>()
        / n
}

/// Weighted F1 of one draw of uniform guesses among `guessed` classes.
pub fn sample_random_guesser(
    y_true: &[usize],
    guessed: &[usize],
    n_classes: usize,
    rng: &mut Rng,
) -> Result<f64, EvalError> {
    if guessed.is_empty() {
        return Err(EvalError::Empty);
    }
    let pred: Vec<usize> = y_true
        .iter()
        .map(|_| guessed[rng.random_range(0..guessed.len())])
        .collect();
    weighted_f1(y_true, &pred, n_classes)
}

/// Weighted F1 restricted to tickets observed after `entry_index` events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthPoint {
    pub entry_index: usize,
    pub n: usize,
    pub f1: f64,
}

/// Groups `(prefix_len, truth, prediction)` triples by prefix length.
pub fn length_analysis(
    rows: &[(usize, usize, usize)],
    n_classes: usize,
) -> Result<Vec<LengthPoint>, EvalError> {
    let mut groups: BTreeMap<usize, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for &(len, t, p) in rows {
        let g = groups.entry(len).or_default();
        g.0.push(t);
        g.1.push(p);
    }
    groups
        .into_iter()
        .map(|(entry_index, (t, p))| {
            Ok(LengthPoint {
                entry_index,
                n: t.len(),
                f1: weighted_f1(&t, &p, n_classes)?,
            })
        })
        .collect()
}

/// CSV with header `entry_index,target,f1`.
pub fn write_length_csv<W: Write>(
    out: W,
    target: &str,
    points: &[LengthPoint],
) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["entry_index", "target", "f1"])?;
    for p in points {
        w.write_record([
            p.entry_index.to_string(),
            target.to_owned(),
            format!("{:.6}", p.f1),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn hand_computed_weighted_f1() {
        // class 0: tp 2, fp 1, fn 0 -> 0.8; class 1: tp 1, fp 0, fn 1 -> 2/3.
        let f = weighted_f1(&[0, 0, 1, 1], &[0, 0, 0, 1], 2).unwrap();
        assert!((f - (2.0 * 0.8 + 2.0 * (2.0 / 3.0)) / 4.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_and_absent_classes() {
        assert_eq!(weighted_f1(&[0, 1, 2], &[0, 1, 2], 4).unwrap(), 1.0);
        let cm = ConfusionMatrix::new(&[0, 0], &[0, 0], 3).unwrap();
        assert_eq!(cm.per_class_f1(), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn errors() {
        assert!(matches!(weighted_f1(&[], &[], 2), Err(EvalError::Empty)));
        assert!(matches!(
            weighted_f1(&[0], &[0, 1], 2),
            Err(EvalError::LengthMismatch { .. })
        ));
        assert!(matches!(
            weighted_f1(&[0], &[5], 2),
            Err(EvalError::ClassOutOfRange { .. })
        ));
    }

    #[test]
    fn balanced_random_guesser_is_one_over_k() {
        for k in 2..12 {
            let support = vec![7; k];
            let all: Vec<usize> = (0..k).collect();
            assert!((random_guesser_f1(&support, &all) - 1.0 / k as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn sampled_guesser_approaches_expectation() {
        let y: Vec<usize> = (0..20_000).map(|i| i % 5).collect();
        let all: Vec<usize> = (0..5).collect();
        let f = sample_random_guesser(&y, &all, 5, &mut rng::seeded(3)).unwrap();
        assert!((f - 0.2).abs() < 0.02, "{f}");
    }

    #[test]
    fn length_csv() {
        let pts = length_analysis(&[(1, 0, 0), (2, 0, 1), (1, 1, 1)], 2).unwrap();
        assert_eq!(pts.len(), 2);
        let mut buf = Vec::new();
        write_length_csv(&mut buf, "risk", &pts).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(
            s,
            "entry_index,target,f1\n1,risk,1.000000\n2,risk,0.000000\n"
        );
    }
}
