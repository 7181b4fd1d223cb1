use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{check_width, Classifier, Dataset, ModelError, Probabilities, Standardizer};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Logistic,
    Tanh,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Logistic => 1.0 / (1.0 + (-v).exp()),
            Activation::Tanh => v.tanh(),
        }
    }

    /// Derivative expressed through the activation output.
    fn derivative(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Logistic => a * (1.0 - a),
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    Lbfgs,
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpParams {
    /// Width of the single hidden layer; zero gives softmax regression.
    pub hidden_layer_sizes: usize,
    /// L2 penalty on weights.
    pub alpha: f64,
    pub activation: Activation,
    pub solver: Solver,
    pub learning_rate: f64,
    pub max_iter: usize,
    pub batch_size: usize,
    pub momentum: f64,
    pub tol: f64,
    pub n_iter_no_change: usize,
    pub early_stopping: bool,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for MlpParams {
    fn default() -> Self {
        Self {
            hidden_layer_sizes: 100,
            alpha: 1e-4,
            activation: Activation::Relu,
            solver: Solver::Adam,
            learning_rate: 1e-3,
            max_iter: 200,
            batch_size: 200,
            momentum: 0.9,
            tol: 1e-4,
            n_iter_no_change: 10,
            early_stopping: true,
            validation_fraction: 0.1,
            seed: 0,
        }
    }
}

/// Shape of the network and the flat parameter layout.
///
/// With a hidden layer the parameters are `W1 (n_in x h)`, `b1 (h)`,
/// `W2 (h x n_out)`, `b2 (n_out)`, all row-major; without one they are
/// `W (n_in x n_out)`, `b (n_out)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpNetwork {
    pub n_in: usize,
    pub hidden: usize,
    pub n_out: usize,
    pub activation: Activation,
}

impl MlpNetwork {
    pub fn n_params(&self) -> usize {
        if self.hidden == 0 {
            self.n_in * self.n_out + self.n_out
        } else {
            self.n_in * self.hidden + self.hidden + self.hidden * self.n_out + self.n_out
        }
    }

    /// Glorot-uniform initial parameters.
    pub fn init(&self, rng: &mut rng::Rng) -> Vec<f64> {
        let factor = if self.activation == Activation::Logistic {
            2.0
        } else {
            6.0
        };
        let mut out = Vec::with_capacity(self.n_params());
        let layers = if self.hidden == 0 {
            vec![(self.n_in, self.n_out)]
        } else {
            vec![(self.n_in, self.hidden), (self.hidden, self.n_out)]
        };
        for (fan_in, fan_out) in layers {
            let bound = (factor / (fan_in + fan_out) as f64).sqrt();
            for _ in 0..fan_in * fan_out + fan_out {
                out.push(rng.random_range(-bound..bound));
            }
        }
        out
    }

    fn is_weight(&self, idx: usize) -> bool {
        if self.hidden == 0 {
            idx < self.n_in * self.n_out
        } else {
            let w1 = self.n_in * self.hidden;
            let off2 = w1 + self.hidden;
            idx < w1 || (idx >= off2 && idx < off2 + self.hidden * self.n_out)
        }
    }

    /// Hidden activations (empty without a hidden layer) and output logits.
    fn forward(&self, p: &[f64], x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (h, k) = (self.hidden, self.n_out);
        if h == 0 {
            let b = &p[self.n_in * k..];
            let mut logits = b.to_vec();
            for (i, xi) in x.iter().enumerate() {
                let row = &p[i * k..(i + 1) * k];
                for (l, w) in logits.iter_mut().zip(row) {
                    *l += xi * w;
                }
            }
            return (Vec::new(), logits);
        }
        let w1 = self.n_in * h;
        let mut a = p[w1..w1 + h].to_vec();
        for (i, xi) in x.iter().enumerate() {
            if *xi == 0.0 {
                continue;
            }
            let row = &p[i * h..(i + 1) * h];
            for (aj, w) in a.iter_mut().zip(row) {
                *aj += xi * w;
            }
        }
        a.iter_mut().for_each(|v| *v = self.activation.apply(*v));
        let off2 = w1 + h;
        let mut logits = p[off2 + h * k..off2 + h * k + k].to_vec();
        for (j, aj) in a.iter().enumerate() {
            let row = &p[off2 + j * k..off2 + (j + 1) * k];
            for (l, w) in logits.iter_mut().zip(row) {
                *l += aj * w;
            }
        }
        (a, logits)
    }

    /// Mean cross-entropy plus `alpha / (2 n) * ||W||^2`, and its gradient.
    pub fn loss_and_gradient(
        &self,
        p: &[f64],
        x: &[Vec<f64>],
        y: &[usize],
        alpha: f64,
    ) -> (f64, Vec<f64>) {
        let rows: Vec<usize> = (0..x.len()).collect();
        self.loss_grad_rows(p, x, y, &rows, alpha)
    }

    fn loss_grad_rows(
        &self,
        p: &[f64],
        x: &[Vec<f64>],
        y: &[usize],
        rows: &[usize],
        alpha: f64,
    ) -> (f64, Vec<f64>) {
        let n = rows.len() as f64;
        let (h, k) = (self.hidden, self.n_out);
        let mut g = vec![0.0; p.len()];
        let mut loss = 0.0;
        for &r in rows {
            let (a, logits) = self.forward(p, &x[r]);
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
            loss += lse - logits[y[r]];
            let mut d: Vec<f64> = logits.iter().map(|l| (l - lse).exp() / n).collect();
            d[y[r]] -= 1.0 / n;
            if h == 0 {
                for (i, xi) in x[r].iter().enumerate() {
                    for (gw, dk) in g[i * k..(i + 1) * k].iter_mut().zip(&d) {
                        *gw += xi * dk;
                    }
                }
                for (gb, dk) in g[self.n_in * k..].iter_mut().zip(&d) {
                    *gb += dk;
                }
                continue;
            }
            let w1 = self.n_in * h;
            let off2 = w1 + h;
            let mut da = vec![0.0; h];
            for (j, aj) in a.iter().enumerate() {
                let base = off2 + j * k;
                let mut s = 0.0;
                for c in 0..k {
                    g[base + c] += aj * d[c];
                    s += p[base + c] * d[c];
                }
                da[j] = s * self.activation.derivative(*aj);
            }
            for (gb, dk) in g[off2 + h * k..].iter_mut().zip(&d) {
                *gb += dk;
            }
            for (i, xi) in x[r].iter().enumerate() {
                if *xi == 0.0 {
                    continue;
                }
                for (gw, dj) in g[i * h..(i + 1) * h].iter_mut().zip(&da) {
                    *gw += xi * dj;
                }
            }
            for (gb, dj) in g[w1..w1 + h].iter_mut().zip(&da) {
                *gb += dj;
            }
        }
        loss /= n;
        let mut sq = 0.0;
        for (idx, (gi, pi)) in g.iter_mut().zip(p).enumerate() {
            if self.is_weight(idx) {
                sq += pi * pi;
                *gi += alpha * pi / n;
            }
        }
        (loss + alpha * sq / (2.0 * n), g)
    }
}

/// Feed-forward network with one hidden layer and softmax output.
/// Inputs are standardized internally.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub params: MlpParams,
    pub network: MlpNetwork,
    scaler: Standardizer,
    weights: Vec<f64>,
    pub converged: bool,
    pub n_iter: usize,
    pub loss_curve: Vec<f64>,
}

struct Outcome {
    weights: Vec<f64>,
    converged: bool,
    n_iter: usize,
    loss_curve: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn run_lbfgs(
    net: &MlpNetwork,
    z: &[Vec<f64>],
    y: &[usize],
    p: &MlpParams,
    mut w: Vec<f64>,
) -> Outcome {
    const HISTORY: usize = 10;
    let (mut f, mut g) = net.loss_and_gradient(&w, z, y, p.alpha);
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut curve = vec![f];
    let mut converged = false;
    let mut iters = 0;
    while iters < p.max_iter {
        if g.iter().fold(0.0f64, |m, v| m.max(v.abs())) <= p.tol {
            converged = true;
            break;
        }
        iters += 1;
        // Two-loop recursion.
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(s_hist.len());
        for (s, yv) in s_hist.iter().zip(&y_hist).rev() {
            let rho = 1.0 / dot(yv, s);
            let a = rho * dot(s, &q);
            q.iter_mut().zip(yv).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push((a, rho));
        }
        let gamma = match (s_hist.last(), y_hist.last()) {
            (Some(s), Some(yv)) => dot(s, yv) / dot(yv, yv),
            _ => 1.0 / dot(&g, &g).sqrt().max(1.0),
        };
        q.iter_mut().for_each(|v| *v *= gamma);
        for ((s, yv), (a, rho)) in s_hist.iter().zip(&y_hist).zip(alphas.into_iter().rev()) {
            let b = rho * dot(yv, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut dir: Vec<f64> = q.into_iter().map(|v| -v).collect();
        let mut slope = dot(&g, &dir);
        if slope >= 0.0 {
            s_hist.clear();
            y_hist.clear();
            dir = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let trial: Vec<f64> = w.iter().zip(&dir).map(|(wi, di)| wi + step * di).collect();
            let (ft, gt) = net.loss_and_gradient(&trial, z, y, p.alpha);
            if ft.is_finite() && ft <= f + 1e-4 * step * slope {
                accepted = Some((trial, ft, gt));
                break;
            }
            step *= 0.5;
        }
        let Some((w_new, f_new, g_new)) = accepted else {
            converged = true;
            break;
        };
        let s: Vec<f64> = w_new.iter().zip(&w).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        if dot(&s, &yv) > 1e-10 {
            if s_hist.len() == HISTORY {
                s_hist.remove(0);
                y_hist.remove(0);
            }
            s_hist.push(s);
            y_hist.push(yv);
        }
        let rel = (f - f_new) / f.abs().max(f_new.abs()).max(1.0);
        w = w_new;
        f = f_new;
        g = g_new;
        curve.push(f);
        if rel <= 2.2e-9 {
            converged = true;
            break;
        }
    }
    Outcome {
        weights: w,
        converged,
        n_iter: iters,
        loss_curve: curve,
    }
}

fn run_stochastic(
    net: &MlpNetwork,
    z: &[Vec<f64>],
    y: &[usize],
    p: &MlpParams,
    mut w: Vec<f64>,
    r: &mut rng::Rng,
) -> Outcome {
    let n = z.len();
    let mut all: Vec<usize> = (0..n).collect();
    all.shuffle(r);
    let n_val = if p.early_stopping {
        (n as f64 * p.validation_fraction).ceil() as usize
    } else {
        0
    };
    // Too few rows for a useful validation set: monitor training loss.
    let (val, mut train) = if n_val >= 2 && n - n_val >= 2 {
        (all[..n_val].to_vec(), all[n_val..].to_vec())
    } else {
        (Vec::new(), all)
    };
    let batch = p.batch_size.clamp(1, train.len());
    let (b1, b2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);
    let mut m1 = vec![0.0; w.len()];
    let mut m2 = vec![0.0; w.len()];
    let mut t = 0i32;
    let mut best = f64::INFINITY;
    let mut best_w = w.clone();
    let mut stale = 0;
    let mut converged = false;
    let mut curve = Vec::new();
    let mut epochs = 0;
    while epochs < p.max_iter {
        epochs += 1;
        train.shuffle(r);
        let mut epoch_loss = 0.0;
        for chunk in train.chunks(batch) {
            let (l, g) = net.loss_grad_rows(&w, z, y, chunk, p.alpha);
            epoch_loss += l * chunk.len() as f64;
            match p.solver {
                Solver::Sgd => {
                    for ((wi, vi), gi) in w.iter_mut().zip(m1.iter_mut()).zip(&g) {
                        *vi = p.momentum * *vi - p.learning_rate * gi;
                        *wi += *vi;
                    }
                }
                _ => {
                    t += 1;
                    let c1 = 1.0 - b1.powi(t);
                    let c2 = 1.0 - b2.powi(t);
                    for i in 0..w.len() {
                        m1[i] = b1 * m1[i] + (1.0 - b1) * g[i];
                        m2[i] = b2 * m2[i] + (1.0 - b2) * g[i] * g[i];
                        w[i] -= p.learning_rate * (m1[i] / c1) / ((m2[i] / c2).sqrt() + eps);
                    }
                }
            }
        }
        epoch_loss /= train.len() as f64;
        curve.push(epoch_loss);
        let monitor = if val.is_empty() {
            epoch_loss
        } else {
            net.loss_grad_rows(&w, z, y, &val, 0.0).0
        };
        if !monitor.is_finite() {
            break;
        }
        if monitor < best - p.tol {
            stale = 0;
        } else {
            stale += 1;
        }
        if monitor < best {
            best = monitor;
            best_w.clone_from(&w);
        }
        if stale >= p.n_iter_no_change {
            converged = true;
            break;
        }
    }
    if !val.is_empty() && best.is_finite() {
        w = best_w;
    }
    Outcome {
        weights: w,
        converged,
        n_iter: epochs,
        loss_curve: curve,
    }
}

impl Mlp {
    pub fn fit(data: &Dataset, params: &MlpParams) -> Result<Self, ModelError> {
        if !(params.alpha >= 0.0) || !(params.learning_rate > 0.0) || params.max_iter == 0 {
            return Err(ModelError::InvalidParams(
                "alpha must be >= 0, learning_rate > 0, max_iter >= 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&params.validation_fraction) {
            return Err(ModelError::InvalidParams(
                "validation_fraction must be in [0, 1)".into(),
            ));
        }
        let network = MlpNetwork {
            n_in: data.n_features(),
            hidden: params.hidden_layer_sizes,
            n_out: data.n_classes(),
            activation: params.activation,
        };
        let scaler = Standardizer::fit(&data.x);
        let z: Vec<Vec<f64>> = data.x.iter().map(|r| scaler.transform(r)).collect();
        let mut r = rng::seeded(params.seed);
        let w0 = network.init(&mut r);
        let out = match params.solver {
            Solver::Lbfgs => run_lbfgs(&network, &z, &data.y, params, w0),
            Solver::Sgd | Solver::Adam => run_stochastic(&network, &z, &data.y, params, w0, &mut r),
        };
        if out.weights.iter().any(|w| !w.is_finite()) {
            return Err(ModelError::Diverged(format!(
                "{:?} produced non-finite weights",
                params.solver
            )));
        }
        if !out.converged {
            log::warn!(
                "MLP ({:?}) reached max_iter={} without converging",
                params.solver,
                params.max_iter
            );
        }
        Ok(Self {
            params: params.clone(),
            network,
            scaler,
            weights: out.weights,
            converged: out.converged,
            n_iter: out.n_iter,
            loss_curve: out.loss_curve,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

impl Classifier for Mlp {
    fn n_classes(&self) -> usize {
        self.network.n_out
    }

    fn n_features(&self) -> usize {
        self.network.n_in
    }

    fn predict_proba(&self, x: &[f64]) -> Probabilities {
        check_width(self.network.n_in, x);
        let z = self.scaler.transform(x);
        let (_, logits) = self.network.forward(&self.weights, &z);
        let scores: Vec<Option<f64>> = logits.into_iter().map(Some).collect();
        Probabilities::softmax(&scores)
    }
}
