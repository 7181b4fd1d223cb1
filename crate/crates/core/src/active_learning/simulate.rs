use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::session::{AlConfig, AlSession, Proposal};
use super::{AcquisitionStrategy, SessionError};
use crate::classifiers::{Classifier, ModelParams};
use crate::corpus::{sort_ids, TicketId};
use crate::eval::{weighted_f1, EvalError};
use crate::labels::{LabelSet, Target};
use crate::rng;

/// One learning-curve row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub n_labeled: usize,
    pub target: Target,
    pub f1: f64,
    pub strategy: AcquisitionStrategy,
    pub seed: u64,
}

/// Tickets with their features and oracle labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationPool {
    pub ids: Vec<TicketId>,
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<LabelSet>,
}

impl SimulationPool {
    pub fn new(
        ids: Vec<TicketId>,
        features: Vec<Vec<f64>>,
        labels: Vec<LabelSet>,
    ) -> Result<Self, SessionError> {
        if ids.len() != features.len() || ids.len() != labels.len() {
            return Err(SessionError::InvalidPool(
                "ids, features and labels differ in length".into(),
            ));
        }
        Ok(Self {
            ids,
            features,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub model: ModelParams,
    pub strategy: AcquisitionStrategy,
    pub initial_size: usize,
    pub steps: usize,
    pub seed: u64,
    pub targets: Vec<Target>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    pub curve: Vec<CurvePoint>,
    pub proposals: Vec<Proposal>,
    /// `steps` exceeded the unlabeled pool and was cut short.
    pub truncated: bool,
}

fn oracle_fragment(labels: &LabelSet, targets: &[Target]) -> Result<LabelSet, SessionError> {
    let mut out = LabelSet::default();
    for &t in targets {
        match labels.class(t) {
            Some(c) => out.set_class(t, c)?,
            None => {
                return Err(SessionError::InvalidPool(format!(
                    "oracle label for {t} missing"
                )))
            }
        }
    }
    Ok(out)
}

fn evaluate(
    session: &AlSession,
    heldout: &SimulationPool,
    cfg: &SimulationConfig,
    curve: &mut Vec<CurvePoint>,
) -> Result<(), SessionError> {
    for &t in &cfg.targets {
        let model = session.model(t).ok_or(SessionError::NotTrained(t))?;
        let mut truth = Vec::with_capacity(heldout.len());
        let mut pred = Vec::with_capacity(heldout.len());
        for (x, l) in heldout.features.iter().zip(&heldout.labels) {
            if let Some(c) = l.class(t) {
                truth.push(c);
                pred.push(model.predict(x));
            }
        }
        let f1 = match weighted_f1(&truth, &pred, t.n_classes()) {
            Ok(f) => f,
            Err(EvalError::Empty) => continue,
            Err(e) => return Err(e.into()),
        };
        curve.push(CurvePoint {
            n_labeled: session.labeled().len(),
            target: t,
            f1,
            strategy: cfg.strategy,
            seed: cfg.seed,
        });
    }
    Ok(())
}

/// Replays active learning with an automatic oracle: starts from
/// `initial_size` random tickets, then acquires one ticket per step (all
/// targets labeled at once) and evaluates every target model on `heldout`.
pub fn simulate(
    pool: &SimulationPool,
    heldout: &SimulationPool,
    cfg: &SimulationConfig,
) -> Result<SimulationResult, SessionError> {
    if cfg.initial_size == 0 || cfg.initial_size > pool.len() {
        return Err(SessionError::Config(format!(
            "initial pool size {} outside 1..={}",
            cfg.initial_size,
            pool.len()
        )));
    }
    let index: BTreeMap<&TicketId, usize> =
        pool.ids.iter().enumerate().map(|(i, id)| (id, i)).collect();
    if index.len() != pool.len() {
        return Err(SessionError::InvalidPool("duplicate ticket ids".into()));
    }
    let mut ids = pool.ids.clone();
    sort_ids(&mut ids);
    ids.shuffle(&mut rng::stream(cfg.seed, 0));
    let mut initial = BTreeMap::new();
    for id in &ids[..cfg.initial_size] {
        initial.insert(
            id.clone(),
            oracle_fragment(&pool.labels[index[id]], &cfg.targets)?,
        );
    }
    let features: BTreeMap<TicketId, Vec<f64>> = pool
        .ids
        .iter()
        .cloned()
        .zip(pool.features.iter().cloned())
        .collect();
    let config = AlConfig {
        model: cfg.model.clone(),
        feature_spec_hash: None,
        seed: cfg.seed,
        targets: cfg.targets.clone(),
        retrain_every: 1,
    };
    let mut session = AlSession::new(config, features, initial)?;

    let available = session.unlabeled().len();
    let steps = if cfg.steps > available {
        log::warn!(
            "{} steps requested but only {available} unlabeled tickets; truncating",
            cfg.steps
        );
        available
    } else {
        cfg.steps
    };

    let mut curve = Vec::new();
    let mut proposals = Vec::with_capacity(steps);
    evaluate(&session, heldout, cfg, &mut curve)?;
    let mut pick = rng::stream(cfg.seed, 1);
    for _ in 0..steps {
        let p = session.propose(cfg.strategy, &mut pick)?;
        let labels = oracle_fragment(&pool.labels[index[&p.base_id]], &cfg.targets)?;
        session.submit_label(&p.base_id, &labels, None, false)?;
        proposals.push(p);
        evaluate(&session, heldout, cfg, &mut curve)?;
    }
    Ok(SimulationResult {
        curve,
        proposals,
        truncated: steps < cfg.steps,
    })
}

/// CSV with header `n_labeled,target,f1,strategy,seed`.
pub fn write_curve_csv<W: Write>(out: W, curve: &[CurvePoint]) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n_labeled", "target", "f1", "strategy", "seed"])?;
    for p in curve {
        w.write_record([
            p.n_labeled.to_string(),
            p.target.name().to_owned(),
            format!("{:.6}", p.f1),
            p.strategy.name().to_owned(),
            p.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::{ModelKind, NbParams};

    fn pool(n: usize, offset: u64) -> SimulationPool {
        let ids = (0..n as u64).map(|i| TicketId::from(i + offset)).collect();
        let features = (0..n)
            .map(|i| vec![(i % 4) as f64 * 3.0 + (i as f64 * 0.7).sin()])
            .collect();
        let labels = (0..n)
            .map(|i| {
                let mut l = LabelSet::default();
                l.set_class(Target::Risk, i % 4).unwrap();
                l
            })
            .collect();
        SimulationPool::new(ids, features, labels).unwrap()
    }

    fn cfg(steps: usize, strategy: AcquisitionStrategy) -> SimulationConfig {
        SimulationConfig {
            model: ModelParams::NaiveBayes(NbParams::default()),
            strategy,
            initial_size: 4,
            steps,
            seed: 3,
            targets: vec![Target::Risk],
        }
    }

    #[test]
    fn zero_steps_gives_one_row() {
        let r = simulate(
            &pool(20, 0),
            &pool(10, 100),
            &cfg(0, AcquisitionStrategy::Entropy),
        )
        .unwrap();
        assert_eq!(r.curve.len(), 1);
        assert_eq!(r.curve[0].n_labeled, 4);
    }

    #[test]
    fn deterministic_and_truncating() {
        for s in [AcquisitionStrategy::Entropy, AcquisitionStrategy::Random] {
            let a = simulate(&pool(20, 0), &pool(10, 100), &cfg(30, s)).unwrap();
            let b = simulate(&pool(20, 0), &pool(10, 100), &cfg(30, s)).unwrap();
            assert_eq!(a, b);
            assert!(a.truncated);
            assert_eq!(a.curve.len(), 17);
            assert_eq!(a.curve.last().unwrap().n_labeled, 20);
        }
        assert_eq!(
            cfg(0, AcquisitionStrategy::Random).model.kind(),
            ModelKind::NaiveBayes
        );
    }

    #[test]
    fn curve_csv_header() {
        let r = simulate(
            &pool(20, 0),
            &pool(10, 100),
            &cfg(1, AcquisitionStrategy::Random),
        )
        .unwrap();
        let mut buf = Vec::new();
        write_curve_csv(&mut buf, &r.curve).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("n_labeled,target,f1,strategy,seed\n4,risk,"));
        assert_eq!(s.lines().count(), 3);
    }
}
