use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::space::{Domain, ParamValue, Params, SearchSpace};
use super::tune::{Trial, TrialStatus};
use super::HpoError;
use crate::rng::{self, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TpeConfig {
    pub n_startup_trials: usize,
    /// Fraction of the history treated as good.
    pub gamma: f64,
    pub n_candidates: usize,
    pub budget: usize,
    pub seed: u64,
}

impl TpeConfig {
    /// Defaults for everything except the budget, which has none.
    pub fn with_budget(budget: usize, seed: u64) -> Self {
        Self {
            n_startup_trials: 20,
            gamma: 0.25,
            n_candidates: 24,
            budget,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), HpoError> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(HpoError::Config("gamma must lie in (0, 1)".into()));
        }
        if self.n_candidates == 0 {
            return Err(HpoError::Config("n_candidates must be >= 1".into()));
        }
        if self.budget < self.n_startup_trials {
            return Err(HpoError::Config(format!(
                "budget {} is below n_startup_trials {}",
                self.budget, self.n_startup_trials
            )));
        }
        Ok(())
    }
}

/// Uniform draw over the space: uniform per category and integer, uniform
/// in log space for log-uniform dimensions.
pub fn sample_uniform(space: &SearchSpace, rng: &mut Rng) -> Params {
    space
        .dimensions
        .iter()
        .map(|d| {
            let v = match &d.domain {
                Domain::Categorical { choices } => {
                    ParamValue::Str(choices[rng.random_range(0..choices.len())].clone())
                }
                Domain::IntUniform { low, high } => ParamValue::Int(rng.random_range(*low..=*high)),
                Domain::LogUniform { low, high } => {
                    let (a, b) = (low.ln(), high.ln());
                    let u: f64 = rng.random();
                    ParamValue::Float((a + u * (b - a)).exp().clamp(*low, *high))
                }
            };
            (d.name.clone(), v)
        })
        .collect()
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + libm::erf(z / std::f64::consts::SQRT_2))
}

/// Equal-weight mixture of truncated Gaussians on `[lo, hi]` plus one
/// uniform prior component.
struct Parzen {
    mus: Vec<f64>,
    sigma: f64,
    lo: f64,
    hi: f64,
}

impl Parzen {
    fn new(values: &[f64], lo: f64, hi: f64) -> Self {
        let width = hi - lo;
        let n = values.len() as f64;
        let std = if values.len() >= 2 {
            let mean = values.iter().sum::<f64>() / n;
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            // A lone point borrows the spread of the uniform prior.
            width / 12f64.sqrt()
        };
        let silverman = 1.06 * std * n.max(1.0).powf(-0.2);
        // floor shrinks with the number of observations down to 1% of the width
        Self {
            mus: values.to_vec(),
            sigma: silverman
                .max(width / (n + 1.0).min(100.0))
                .max(f64::MIN_POSITIVE),
            lo,
            hi,
        }
    }

    fn pdf(&self, x: f64) -> f64 {
        let w = 1.0 / (self.mus.len() + 1) as f64;
        let width = self.hi - self.lo;
        let mut p = if width > 0.0 { w / width } else { w };
        for &mu in &self.mus {
            let z = (x - mu) / self.sigma;
            let mass =
                normal_cdf((self.hi - mu) / self.sigma) - normal_cdf((self.lo - mu) / self.sigma);
            let dens = (-0.5 * z * z).exp() / (self.sigma * (2.0 * std::f64::consts::PI).sqrt());
            p += w * dens / mass.max(1e-300);
        }
        p
    }

    fn sample(&self, rng: &mut Rng) -> f64 {
        let k = rng.random_range(0..=self.mus.len());
        if k == self.mus.len() {
            let u: f64 = rng.random();
            return self.lo + u * (self.hi - self.lo);
        }
        let mu = self.mus[k];
        for _ in 0..64 {
            let z: f64 = rng.sample(StandardNormal);
            let x = mu + self.sigma * z;
            if (self.lo..=self.hi).contains(&x) {
                return x;
            }
        }
        mu.clamp(self.lo, self.hi)
    }
}

/// Smoothed frequencies `(count + 1) / (n + K)`.
struct Categorical {
    weights: Vec<f64>,
}

impl Categorical {
    fn new(choices: &[String], values: &[&str]) -> Self {
        let k = choices.len() as f64;
        let n = values.len() as f64;
        let weights = choices
            .iter()
            .map(|c| (values.iter().filter(|v| **v == c.as_str()).count() as f64 + 1.0) / (n + k))
            .collect();
        Self { weights }
    }

    fn sample(&self, rng: &mut Rng) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return i;
            }
        }
        self.weights.len() - 1
    }
}

enum DimModel {
    Numeric {
        l: Parzen,
        g: Parzen,
        kind: NumKind,
    },
    Categorical {
        l: Categorical,
        g: Categorical,
        choices: Vec<String>,
    },
}

#[derive(Clone, Copy)]
enum NumKind {
    Int { low: i64, high: i64 },
    Log { low: f64, high: f64 },
}

/// Position of a value on the real line the Parzen estimators work on.
fn to_internal(v: &ParamValue) -> Option<f64> {
    match v {
        ParamValue::Int(i) => Some(*i as f64),
        ParamValue::Float(f) if *f > 0.0 => Some(f.ln()),
        _ => None,
    }
}

impl DimModel {
    fn new(domain: &Domain, name: &str, good: &[&Trial], bad: &[&Trial]) -> Self {
        match domain {
            Domain::Categorical { choices } => {
                let pick = |ts: &[&Trial]| -> Vec<String> {
                    ts.iter()
                        .filter_map(|t| match t.params.get(name) {
                            Some(ParamValue::Str(s)) => Some(s.clone()),
                            _ => None,
                        })
                        .collect()
                };
                let (gv, bv) = (pick(good), pick(bad));
                let gr: Vec<&str> = gv.iter().map(String::as_str).collect();
                let br: Vec<&str> = bv.iter().map(String::as_str).collect();
                DimModel::Categorical {
                    l: Categorical::new(choices, &gr),
                    g: Categorical::new(choices, &br),
                    choices: choices.clone(),
                }
            }
            Domain::IntUniform { low, high } => {
                let (lo, hi) = (*low as f64 - 0.5, *high as f64 + 0.5);
                let pick = |ts: &[&Trial]| -> Vec<f64> {
                    ts.iter()
                        .filter_map(|t| t.params.get(name).and_then(to_internal))
                        .collect()
                };
                DimModel::Numeric {
                    l: Parzen::new(&pick(good), lo, hi),
                    g: Parzen::new(&pick(bad), lo, hi),
                    kind: NumKind::Int {
                        low: *low,
                        high: *high,
                    },
                }
            }
            Domain::LogUniform { low, high } => {
                let (lo, hi) = (low.ln(), high.ln());
                let pick = |ts: &[&Trial]| -> Vec<f64> {
                    ts.iter()
                        .filter_map(|t| t.params.get(name).and_then(to_internal))
                        .collect()
                };
                DimModel::Numeric {
                    l: Parzen::new(&pick(good), lo, hi),
                    g: Parzen::new(&pick(bad), lo, hi),
                    kind: NumKind::Log {
                        low: *low,
                        high: *high,
                    },
                }
            }
        }
    }

    /// A draw from `l` and its log density ratio `ln l - ln g`.
    fn draw(&self, rng: &mut Rng) -> (ParamValue, f64) {
        match self {
            DimModel::Categorical { l, g, choices } => {
                let i = l.sample(rng);
                (
                    ParamValue::Str(choices[i].clone()),
                    l.weights[i].ln() - g.weights[i].ln(),
                )
            }
            DimModel::Numeric { l, g, kind } => {
                let x = l.sample(rng);
                let (value, at) = match *kind {
                    NumKind::Int { low, high } => {
                        let i = (x.round() as i64).clamp(low, high);
                        (ParamValue::Int(i), i as f64)
                    }
                    NumKind::Log { low, high } => {
                        let v = x.exp().clamp(low, high);
                        (ParamValue::Float(v), x)
                    }
                };
                (value, l.pdf(at).ln() - g.pdf(at).ln())
            }
        }
    }
}

fn objective(t: &Trial) -> f64 {
    match t.status {
        TrialStatus::Ok => t.mean_f1,
        TrialStatus::Failed => f64::NEG_INFINITY,
    }
}

/// Next point to evaluate. Until `n_startup_trials` trials exist this is a
/// uniform draw; afterwards the history is split at the `gamma` quantile of
/// the objective (higher is better), per-dimension densities `l` (good) and
/// `g` (bad) are fitted, and of `n_candidates` draws from `l` the one with
/// the largest `l / g` is returned.
pub fn tpe_suggest(
    history: &[Trial],
    space: &SearchSpace,
    config: &TpeConfig,
    rng: &mut Rng,
) -> Result<Params, HpoError> {
    space.validate()?;
    if !(config.gamma > 0.0 && config.gamma < 1.0) || config.n_candidates == 0 {
        return Err(HpoError::Config(
            "gamma must lie in (0, 1) and n_candidates >= 1".into(),
        ));
    }
    if history.len() < config.n_startup_trials || history.is_empty() {
        return Ok(sample_uniform(space, rng));
    }
    let mut ranked: Vec<&Trial> = history.iter().collect();
    ranked.sort_by(|a, b| {
        objective(b)
            .total_cmp(&objective(a))
            .then(a.trial_id.cmp(&b.trial_id))
    });
    let n_good = ((config.gamma * ranked.len() as f64).ceil() as usize).clamp(1, ranked.len());
    let (good, bad) = ranked.split_at(n_good);
    let models: Vec<(String, DimModel)> = space
        .dimensions
        .iter()
        .map(|d| (d.name.clone(), DimModel::new(&d.domain, &d.name, good, bad)))
        .collect();

    let mut best: Option<(f64, Params)> = None;
    for _ in 0..config.n_candidates {
        let mut params = Params::new();
        let mut score = 0.0;
        for (name, m) in &models {
            let (v, s) = m.draw(rng);
            params.insert(name.clone(), v);
            score += s;
        }
        if best.as_ref().is_none_or(|(b, _)| score > *b) {
            best = Some((score, params));
        }
    }
    Ok(best.expect("n_candidates >= 1").1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub trials: Vec<Trial>,
    /// Index into `trials` of the best successful trial.
    pub best: Option<usize>,
}

impl SearchResult {
    pub fn best_trial(&self) -> Option<&Trial> {
        self.best.map(|i| &self.trials[i])
    }

    pub fn best_value(&self) -> f64 {
        self.best_trial().map_or(f64::NEG_INFINITY, |t| t.mean_f1)
    }
}

fn run(
    space: &SearchSpace,
    config: &TpeConfig,
    use_tpe: bool,
    objective_fn: &mut dyn FnMut(&Params, u64) -> Result<Vec<f64>, String>,
) -> Result<SearchResult, HpoError> {
    config.validate()?;
    space.validate()?;
    let mut r = rng::seeded(config.seed);
    let mut trials: Vec<Trial> = Vec::with_capacity(config.budget);
    let mut best: Option<usize> = None;
    for trial_id in 0..config.budget {
        let params = if use_tpe {
            tpe_suggest(&trials, space, config, &mut r)?
        } else {
            sample_uniform(space, &mut r)
        };
        let seed = rng::derive_seed(config.seed, trial_id as u64);
        let trial = match objective_fn(&params, seed) {
            Ok(scores) if !scores.is_empty() && scores.iter().all(|s| s.is_finite()) => {
                let mean = scores.iter().sum::<f64>() / scores.len() as f64;
                Trial {
                    trial_id,
                    params,
                    mean_f1: mean,
                    fold_scores: scores,
                    status: TrialStatus::Ok,
                    seed,
                    error: None,
                }
            }
            Ok(scores) => Trial {
                trial_id,
                params,
                fold_scores: scores,
                mean_f1: f64::NEG_INFINITY,
                status: TrialStatus::Failed,
                seed,
                error: Some("objective returned no finite scores".into()),
            },
            Err(e) => {
                log::warn!("trial {trial_id} failed: {e}");
                Trial {
                    trial_id,
                    params,
                    fold_scores: Vec::new(),
                    mean_f1: f64::NEG_INFINITY,
                    status: TrialStatus::Failed,
                    seed,
                    error: Some(e),
                }
            }
        };
        if trial.status == TrialStatus::Ok && best.is_none_or(|b| trial.mean_f1 > trials[b].mean_f1)
        {
            best = Some(trial_id);
        }
        trials.push(trial);
    }
    Ok(SearchResult { trials, best })
}

/// TPE search maximizing `objective`, which returns per-fold scores for a
/// parameter set and a per-trial seed, or an error message.
pub fn search<F>(
    space: &SearchSpace,
    config: &TpeConfig,
    mut objective: F,
) -> Result<SearchResult, HpoError>
where
    F: FnMut(&Params, u64) -> Result<Vec<f64>, String>,
{
    run(space, config, true, &mut objective)
}

/// Uniform random search drawing from the same stream as the TPE startup.
pub fn random_search<F>(
    space: &SearchSpace,
    config: &TpeConfig,
    mut objective: F,
) -> Result<SearchResult, HpoError>
where
    F: FnMut(&Params, u64) -> Result<Vec<f64>, String>,
{
    run(space, config, false, &mut objective)
}
