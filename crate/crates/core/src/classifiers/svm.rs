use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{check_width, Classifier, Dataset, ModelError, Probabilities, Standardizer};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmParams {
    /// L2 regularization strength.
    pub lambda: f64,
    pub epochs: usize,
    /// Share of each class held out to fit the Platt sigmoid.
    pub calibration_fraction: f64,
    pub seed: u64,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            lambda: 1e-3,
            epochs: 20,
            calibration_fraction: 0.2,
            seed: 0,
        }
    }
}

/// One binary hinge-loss separator with its sigmoid calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmHead {
    pub class: usize,
    pub w: Vec<f64>,
    pub b: f64,
    pub platt_a: f64,
    pub platt_b: f64,
}

impl SvmHead {
    fn decision(&self, z: &[f64]) -> f64 {
        self.w.iter().zip(z).map(|(w, v)| w * v).sum::<f64>() + self.b
    }

    fn probability(&self, z: &[f64]) -> f64 {
        sigmoid(self.platt_a * self.decision(z) + self.platt_b)
    }
}

/// Linear SVM trained by averaged SGD, one-vs-rest for more than two classes,
/// with Platt-scaled outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvm {
    n_classes: usize,
    scaler: Standardizer,
    /// Binary problems use a single head whose class is the positive one.
    binary: Option<(usize, usize)>,
    heads: Vec<SvmHead>,
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn train_head(
    z: &[Vec<f64>],
    target: &[f64],
    params: &SvmParams,
    rng: &mut rng::Rng,
) -> (Vec<f64>, f64) {
    let d = z.first().map_or(0, Vec::len);
    let lambda = params.lambda;
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut w_avg = vec![0.0; d];
    let mut b_avg = 0.0;
    let mut n_avg = 0.0;
    let mut order: Vec<usize> = (0..z.len()).collect();
    let mut t = 0.0;
    let average_from = params.epochs / 2;
    for epoch in 0..params.epochs {
        order.shuffle(rng);
        for &i in &order {
            let eta = 1.0 / (lambda * t + 1.0);
            t += 1.0;
            let margin = target[i] * (w.iter().zip(&z[i]).map(|(w, v)| w * v).sum::<f64>() + b);
            let shrink = 1.0 - eta * lambda;
            w.iter_mut().for_each(|v| *v *= shrink);
            if margin < 1.0 {
                for (wj, v) in w.iter_mut().zip(&z[i]) {
                    *wj += eta * target[i] * v;
                }
                b += eta * target[i];
            }
            if epoch >= average_from {
                n_avg += 1.0;
                for (a, v) in w_avg.iter_mut().zip(&w) {
                    *a += (v - *a) / n_avg;
                }
                b_avg += (b - b_avg) / n_avg;
            }
        }
    }
    if n_avg == 0.0 {
        (w, b)
    } else {
        (w_avg, b_avg)
    }
}

/// Fits `p = sigmoid(a f + b)` by Newton's method on the regularized targets
/// of Platt (1999).
pub(crate) fn platt_fit(decisions: &[f64], positive: &[bool]) -> (f64, f64) {
    let n_pos = positive.iter().filter(|&&p| p).count() as f64;
    let n_neg = positive.len() as f64 - n_pos;
    let hi = (n_pos + 1.0) / (n_pos + 2.0);
    let lo = 1.0 / (n_neg + 2.0);
    let t: Vec<f64> = positive.iter().map(|&p| if p { hi } else { lo }).collect();
    let loss = |a: f64, b: f64| -> f64 {
        decisions
            .iter()
            .zip(&t)
            .map(|(f, ti)| {
                let s = a * f + b;
                // log(1 + e^s) - t s, computed stably.
                let softplus = if s > 0.0 {
                    s + (-s).exp().ln_1p()
                } else {
                    s.exp().ln_1p()
                };
                softplus - ti * s
            })
            .sum()
    };
    let mut a = 0.0;
    let mut b = ((n_pos + 1.0) / (n_neg + 1.0)).ln();
    let mut current = loss(a, b);
    for _ in 0..100 {
        let (mut ga, mut gb, mut haa, mut hab, mut hbb) = (0.0, 0.0, 1e-12, 0.0, 1e-12);
        for (f, ti) in decisions.iter().zip(&t) {
            let p = sigmoid(a * f + b);
            let r = p - ti;
            let w = p * (1.0 - p);
            ga += r * f;
            gb += r;
            haa += w * f * f;
            hab += w * f;
            hbb += w;
        }
        if ga.abs() < 1e-10 && gb.abs() < 1e-10 {
            break;
        }
        let det = haa * hbb - hab * hab;
        let (da, db) = if det.abs() > 1e-300 {
            ((hbb * ga - hab * gb) / det, (haa * gb - hab * ga) / det)
        } else {
            (ga, gb)
        };
        let mut step = 1.0;
        let mut improved = false;
        while step > 1e-10 {
            let (na, nb) = (a - step * da, b - step * db);
            let l = loss(na, nb);
            if l < current - 1e-4 * step * (ga * da + gb * db) {
                a = na;
                b = nb;
                current = l;
                improved = true;
                break;
            }
            step /= 2.0;
        }
        if !improved {
            break;
        }
    }
    (a, b)
}

impl LinearSvm {
    pub fn fit(data: &Dataset, params: &SvmParams) -> Result<Self, ModelError> {
        if !(params.lambda > 0.0) || params.epochs == 0 {
            return Err(ModelError::InvalidParams(
                "lambda must be > 0 and epochs >= 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&params.calibration_fraction) {
            return Err(ModelError::InvalidParams(
                "calibration_fraction must be in [0, 1)".into(),
            ));
        }
        let k = data.n_classes();
        let scaler = Standardizer::fit(&data.x);
        let z: Vec<Vec<f64>> = data.x.iter().map(|r| scaler.transform(r)).collect();
        let mut r = rng::seeded(params.seed);

        // Stratified calibration split; classes with a single row stay in training.
        let mut train = Vec::new();
        let mut calib = Vec::new();
        for c in 0..k {
            let mut rows: Vec<usize> = (0..data.len()).filter(|&i| data.y[i] == c).collect();
            rows.shuffle(&mut r);
            let take = if rows.len() >= 2 {
                ((rows.len() as f64 * params.calibration_fraction).round() as usize)
                    .min(rows.len() - 1)
            } else {
                0
            };
            calib.extend_from_slice(&rows[..take]);
            train.extend_from_slice(&rows[take..]);
        }
        train.sort_unstable();
        calib.sort_unstable();
        if calib.is_empty() {
            calib = train.clone();
        }

        let present: Vec<usize> = (0..k).filter(|c| data.y.contains(c)).collect();
        let head_classes: Vec<usize> = if present.len() == 2 {
            vec![present[1]]
        } else {
            present.clone()
        };
        let z_train: Vec<Vec<f64>> = train.iter().map(|&i| z[i].clone()).collect();
        let mut heads = Vec::with_capacity(head_classes.len());
        for &c in &head_classes {
            let target: Vec<f64> = train
                .iter()
                .map(|&i| if data.y[i] == c { 1.0 } else { -1.0 })
                .collect();
            let (w, b) = train_head(&z_train, &target, params, &mut r);
            let mut head = SvmHead {
                class: c,
                w,
                b,
                platt_a: 1.0,
                platt_b: 0.0,
            };
            let f: Vec<f64> = calib.iter().map(|&i| head.decision(&z[i])).collect();
            let pos: Vec<bool> = calib.iter().map(|&i| data.y[i] == c).collect();
            let (a, b) = platt_fit(&f, &pos);
            head.platt_a = a;
            head.platt_b = b;
            heads.push(head);
        }
        Ok(Self {
            n_classes: k,
            scaler,
            binary: (present.len() == 2).then(|| (present[0], present[1])),
            heads,
        })
    }

    /// Raw decision values per head.
    pub fn decision_function(&self, x: &[f64]) -> Vec<f64> {
        check_width(self.scaler.mean.len(), x);
        let z = self.scaler.transform(x);
        self.heads.iter().map(|h| h.decision(&z)).collect()
    }
}

impl Classifier for LinearSvm {
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn n_features(&self) -> usize {
        self.scaler.mean.len()
    }

    fn predict_proba(&self, x: &[f64]) -> Probabilities {
        check_width(self.scaler.mean.len(), x);
        let z = self.scaler.transform(x);
        let mut w = vec![0.0; self.n_classes];
        match self.binary {
            Some((neg, pos)) => {
                let p = self.heads[0].probability(&z);
                w[pos] = p;
                w[neg] = 1.0 - p;
            }
            None => {
                for h in &self.heads {
                    w[h.class] = h.probability(&z);
                }
            }
        }
        Probabilities::from_weights(w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn platt_recovers_a_known_sigmoid() {
        // Decisions on a grid, labels drawn deterministically from sigmoid(2f - 1).
        let mut f = Vec::new();
        let mut y = Vec::new();
        for i in 0..400 {
            let d = -3.0 + 6.0 * i as f64 / 399.0;
            let p = sigmoid(2.0 * d - 1.0);
            for j in 0..20 {
                f.push(d);
                y.push((j as f64 + 0.5) / 20.0 < p);
            }
        }
        let (a, b) = platt_fit(&f, &y);
        assert!((a - 2.0).abs() < 0.15, "a = {a}");
        assert!((b + 1.0).abs() < 0.15, "b = {b}");
    }

    #[test]
    fn separates_three_classes() {
        let x: Vec<Vec<f64>> = (0..90)
            .map(|i| {
                let c = i % 3;
                let jitter = ((i * 7) % 10) as f64 * 0.1;
                vec![
                    if c == 1 { 5.0 } else { 0.0 } + jitter,
                    if c == 2 { 5.0 } else { 0.0 } - jitter,
                ]
            })
            .collect();
        let y: Vec<usize> = (0..90).map(|i| i % 3).collect();
        let ds = Dataset::ungrouped(x, y, 3).unwrap();
        let m = LinearSvm::fit(&ds, &SvmParams::default()).unwrap();
        let correct =
            ds.x.iter()
                .zip(&ds.y)
                .filter(|(x, &y)| m.predict(x) == y)
                .count();
        assert!(correct >= 85, "{correct}");
    }
}
