use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::simulate::CurvePoint;
use super::{entropy, AcquisitionStrategy, SessionError};
use crate::classifiers::{
    fit, load_model, save_model, Classifier, Dataset, ModelBlob, ModelKind, ModelParams,
    Probabilities, TrainedModel,
};
use crate::corpus::{compare_ids, TicketId};
use crate::eval::weighted_f1;
use crate::labels::{LabelSet, Target};
use crate::persist::write_atomic;
use crate::rng;

const SESSION_FORMAT_VERSION: u32 = 1;
const SESSION_FILE: &str = "session.json";
const POOL_FILE: &str = "pool.json";

fn default_targets() -> Vec<Target> {
    Target::EXPERT.to_vec()
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlConfig {
    pub model: ModelParams,
    #[serde(default)]
    pub feature_spec_hash: Option<String>,
    #[serde(default)]
    pub seed: u64,
    /// Targets the expert labels, in proposal tie-break order.
    #[serde(default = "default_targets")]
    pub targets: Vec<Target>,
    /// Retrain after this many accepted labels.
    #[serde(default = "one")]
    pub retrain_every: usize,
}

impl AlConfig {
    pub fn new(model: ModelParams, seed: u64) -> Self {
        Self {
            model,
            feature_spec_hash: None,
            seed,
            targets: default_targets(),
            retrain_every: 1,
        }
    }

    fn validate(&self) -> Result<(), SessionError> {
        if self.targets.is_empty() {
            return Err(SessionError::Config("no targets".into()));
        }
        if self.targets.contains(&Target::TimeToFix) {
            return Err(SessionError::Config(
                "time_to_fix is not an expert target".into(),
            ));
        }
        if self.retrain_every == 0 {
            return Err(SessionError::Config("retrain_every must be >= 1".into()));
        }
        Ok(())
    }
}

/// A (ticket, target) pair put to the expert.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub base_id: TicketId,
    pub target: Target,
    /// Entropy of the proposed target, in nats.
    pub entropy: f64,
    /// Entropy of every session target for the same ticket.
    pub per_target: BTreeMap<Target, f64>,
    pub session_version: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub created_at: String,
    pub version: u64,
    pub model_kind: ModelKind,
    pub feature_spec_hash: Option<String>,
    pub targets: Vec<Target>,
    pub n_labeled: usize,
    pub n_unlabeled: usize,
    pub n_partially_labeled: usize,
    pub model_versions: BTreeMap<Target, u64>,
    pub n_proposals: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitOutcome {
    pub version: u64,
    /// The ticket moved into the labeled pool with this submission.
    pub completed: bool,
    pub retrained: Vec<Target>,
}

/// Everything in `session.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SessionState {
    format_version: u32,
    created_at: String,
    config: AlConfig,
    version: u64,
    labels: BTreeMap<TicketId, LabelSet>,
    labeled: BTreeSet<TicketId>,
    unlabeled: BTreeSet<TicketId>,
    proposal_log: Vec<Proposal>,
    model_versions: BTreeMap<Target, u64>,
    stale: BTreeSet<Target>,
    pending: usize,
    curve: Vec<CurvePoint>,
}

/// Held-out rows used to record a learning curve as labels arrive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct EvalSet {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<LabelSet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PoolFile {
    tickets: BTreeMap<TicketId, Vec<f64>>,
    eval: Option<EvalSet>,
}

/// One expert-labeling session over a fixed pool of base tickets.
#[derive(Debug, Clone)]
pub struct AlSession {
    state: SessionState,
    pool: BTreeMap<TicketId, Vec<f64>>,
    eval: Option<EvalSet>,
    models: BTreeMap<Target, TrainedModel>,
    /// Pool ids in proposal tie-break order.
    order: Vec<TicketId>,
    dir: Option<PathBuf>,
}

impl AlSession {
    /// Builds a session and trains the initial models. Tickets whose labels
    /// cover every session target start in the labeled pool.
    pub fn new(
        config: AlConfig,
        pool: BTreeMap<TicketId, Vec<f64>>,
        initial_labels: BTreeMap<TicketId, LabelSet>,
    ) -> Result<Self, SessionError> {
        Self::build(
            config,
            pool,
            initial_labels,
            None,
            chrono::Utc::now().to_rfc3339(),
        )
    }

    /// Like [`AlSession::new`], also recording weighted f1 on `eval` after
    /// every retrain.
    pub fn with_eval_set(
        config: AlConfig,
        pool: BTreeMap<TicketId, Vec<f64>>,
        initial_labels: BTreeMap<TicketId, LabelSet>,
        eval_features: Vec<Vec<f64>>,
        eval_labels: Vec<LabelSet>,
    ) -> Result<Self, SessionError> {
        if eval_features.len() != eval_labels.len() {
            return Err(SessionError::InvalidPool(
                "eval features and labels differ in length".into(),
            ));
        }
        let eval = EvalSet {
            features: eval_features,
            labels: eval_labels,
        };
        Self::build(
            config,
            pool,
            initial_labels,
            Some(eval),
            chrono::Utc::now().to_rfc3339(),
        )
    }

    fn build(
        config: AlConfig,
        pool: BTreeMap<TicketId, Vec<f64>>,
        initial_labels: BTreeMap<TicketId, LabelSet>,
        eval: Option<EvalSet>,
        created_at: String,
    ) -> Result<Self, SessionError> {
        config.validate()?;
        if pool.is_empty() {
            return Err(SessionError::InvalidPool("empty pool".into()));
        }
        let dim = pool.values().next().map_or(0, Vec::len);
        if let Some((id, _)) = pool.iter().find(|(_, v)| v.len() != dim) {
            return Err(SessionError::InvalidPool(format!(
                "ticket `{id}` has a different feature width"
            )));
        }
        if let Some(e) = &eval {
            if e.features.iter().any(|v| v.len() != dim) {
                return Err(SessionError::InvalidPool(
                    "eval rows have a different feature width".into(),
                ));
            }
        }
        if let Some(id) = initial_labels.keys().find(|id| !pool.contains_key(*id)) {
            return Err(SessionError::UnknownTicket(id.clone()));
        }
        let labels: BTreeMap<TicketId, LabelSet> = initial_labels
            .into_iter()
            .filter(|(_, l)| !l.is_empty_expert())
            .collect();
        let complete = |l: Option<&LabelSet>| {
            l.is_some_and(|l| config.targets.iter().all(|t| l.class(*t).is_some()))
        };
        let (labeled, unlabeled): (BTreeSet<TicketId>, BTreeSet<TicketId>) = pool
            .keys()
            .cloned()
            .partition(|id| complete(labels.get(id)));
        let stale = config.targets.iter().copied().collect();
        let mut session = Self {
            state: SessionState {
                format_version: SESSION_FORMAT_VERSION,
                created_at,
                config,
                version: 0,
                labels,
                labeled,
                unlabeled,
                proposal_log: Vec::new(),
                model_versions: BTreeMap::new(),
                stale,
                pending: 0,
                curve: Vec::new(),
            },
            order: Self::ordered_ids(&pool),
            pool,
            eval,
            models: BTreeMap::new(),
            dir: None,
        };
        session.retrain_stale()?;
        Ok(session)
    }

    fn ordered_ids(pool: &BTreeMap<TicketId, Vec<f64>>) -> Vec<TicketId> {
        let mut ids: Vec<TicketId> = pool.keys().cloned().collect();
        let all_numeric = ids.iter().all(|id| id.numeric().is_some());
        ids.sort_by(|a, b| compare_ids(all_numeric, a, b));
        ids
    }

    pub fn config(&self) -> &AlConfig {
        &self.state.config
    }

    pub fn version(&self) -> u64 {
        self.state.version
    }

    pub fn created_at(&self) -> &str {
        &self.state.created_at
    }

    pub fn labels(&self) -> &BTreeMap<TicketId, LabelSet> {
        &self.state.labels
    }

    pub fn labeled(&self) -> &BTreeSet<TicketId> {
        &self.state.labeled
    }

    pub fn unlabeled(&self) -> &BTreeSet<TicketId> {
        &self.state.unlabeled
    }

    pub fn proposal_log(&self) -> &[Proposal] {
        &self.state.proposal_log
    }

    pub fn curve(&self) -> &[CurvePoint] {
        &self.state.curve
    }

    pub fn features(&self, id: &TicketId) -> Option<&[f64]> {
        self.pool.get(id).map(Vec::as_slice)
    }

    pub fn model(&self, target: Target) -> Option<&TrainedModel> {
        self.models.get(&target)
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn summary(&self) -> SessionSummary {
        let s = &self.state;
        SessionSummary {
            created_at: s.created_at.clone(),
            version: s.version,
            model_kind: s.config.model.kind(),
            feature_spec_hash: s.config.feature_spec_hash.clone(),
            targets: s.config.targets.clone(),
            n_labeled: s.labeled.len(),
            n_unlabeled: s.unlabeled.len(),
            n_partially_labeled: s
                .unlabeled
                .iter()
                .filter(|id| s.labels.contains_key(*id))
                .count(),
            model_versions: s.model_versions.clone(),
            n_proposals: s.proposal_log.len(),
        }
    }

    fn missing_targets(&self, id: &TicketId) -> Vec<Target> {
        let l = self.state.labels.get(id);
        self.state
            .config
            .targets
            .iter()
            .copied()
            .filter(|t| l.and_then(|l| l.class(*t)).is_none())
            .collect()
    }

    /// Predicted class distribution of the current `target` model.
    pub fn predict_proba(
        &self,
        id: &TicketId,
        target: Target,
    ) -> Result<Probabilities, SessionError> {
        let x = self
            .pool
            .get(id)
            .ok_or_else(|| SessionError::UnknownTicket(id.clone()))?;
        let model = self
            .models
            .get(&target)
            .ok_or(SessionError::NotTrained(target))?;
        Ok(model.predict_proba(x))
    }

    fn per_target_entropy(&self, id: &TicketId) -> Result<BTreeMap<Target, f64>, SessionError> {
        self.state
            .config
            .targets
            .iter()
            .map(|&t| Ok((t, entropy(self.predict_proba(id, t)?.as_slice()))))
            .collect()
    }

    /// The unlabeled (ticket, target) pair with maximal entropy. Ties go to
    /// the smallest base id, then to the earlier session target.
    pub fn propose_next(&self) -> Result<Proposal, SessionError> {
        if self.state.unlabeled.is_empty() {
            return Err(SessionError::Exhausted);
        }
        for t in &self.state.config.targets {
            if !self.models.contains_key(t) {
                return Err(SessionError::NotTrained(*t));
            }
        }
        let mut best: Option<(TicketId, Target, f64, BTreeMap<Target, f64>)> = None;
        for id in self
            .order
            .iter()
            .filter(|id| self.state.unlabeled.contains(*id))
        {
            let missing = self.missing_targets(id);
            let h = self.per_target_entropy(id)?;
            for t in missing {
                let e = h[&t];
                if best.as_ref().is_none_or(|b| e > b.2) {
                    best = Some((id.clone(), t, e, h.clone()));
                }
            }
        }
        let (base_id, target, entropy, per_target) = best.ok_or(SessionError::Exhausted)?;
        Ok(Proposal {
            base_id,
            target,
            entropy,
            per_target,
            session_version: self.state.version,
        })
    }

    /// A uniformly drawn unlabeled ticket and its first missing target.
    pub fn propose_random(&self, rng: &mut rng::Rng) -> Result<Proposal, SessionError> {
        let candidates: Vec<&TicketId> = self
            .order
            .iter()
            .filter(|id| self.state.unlabeled.contains(*id))
            .collect();
        if candidates.is_empty() {
            return Err(SessionError::Exhausted);
        }
        let id = candidates[rng.random_range(0..candidates.len())].clone();
        let target = self.missing_targets(&id)[0];
        let per_target = self.per_target_entropy(&id)?;
        Ok(Proposal {
            entropy: per_target[&target],
            base_id: id,
            target,
            per_target,
            session_version: self.state.version,
        })
    }

    pub fn propose(
        &self,
        strategy: AcquisitionStrategy,
        rng: &mut rng::Rng,
    ) -> Result<Proposal, SessionError> {
        match strategy {
            AcquisitionStrategy::Entropy => self.propose_next(),
            AcquisitionStrategy::Random => self.propose_random(rng),
        }
    }

    /// Appends `p` to the proposal log unless it repeats the last entry.
    pub fn record_proposal(&mut self, p: &Proposal) -> Result<(), SessionError> {
        let last = self.state.proposal_log.last();
        let repeat = last.is_some_and(|l| {
            l.base_id == p.base_id && l.target == p.target && l.session_version == p.session_version
        });
        if !repeat {
            self.state.proposal_log.push(p.clone());
            self.persist_state()?;
        }
        Ok(())
    }

    /// Records expert labels for one ticket. With `expected_version` set the
    /// call fails unless it matches the current version. Existing labels are
    /// only replaced when `force` is set. A persistent session is written to
    /// disk before this returns.
    pub fn submit_label(
        &mut self,
        base_id: &TicketId,
        fragment: &LabelSet,
        expected_version: Option<u64>,
        force: bool,
    ) -> Result<SubmitOutcome, SessionError> {
        if !self.pool.contains_key(base_id) {
            return Err(SessionError::UnknownTicket(base_id.clone()));
        }
        if let Some(v) = expected_version {
            if v != self.state.version {
                return Err(SessionError::StaleVersion {
                    given: v,
                    current: self.state.version,
                });
            }
        }
        let given: Vec<Target> = self
            .state
            .config
            .targets
            .iter()
            .copied()
            .filter(|t| fragment.class(*t).is_some())
            .collect();
        if given.is_empty() {
            return Err(SessionError::EmptyLabel);
        }
        let existing = self.state.labels.get(base_id).copied().unwrap_or_default();
        if !force {
            if let Some(t) = given.iter().find(|t| existing.class(**t).is_some()) {
                return Err(SessionError::AlreadyLabeled {
                    base_id: base_id.clone(),
                    target: *t,
                });
            }
        }
        let mut merged = existing;
        for &t in &given {
            merged.set_class(t, fragment.class(t).expect("present"))?;
        }
        self.state.labels.insert(base_id.clone(), merged);
        let completed =
            self.missing_targets(base_id).is_empty() && self.state.unlabeled.remove(base_id);
        if completed {
            self.state.labeled.insert(base_id.clone());
        }
        self.state.version += 1;
        self.state.stale.extend(given);
        self.state.pending += 1;
        let retrained = if self.state.pending >= self.state.config.retrain_every {
            self.retrain_stale()?
        } else {
            Vec::new()
        };
        self.persist(&retrained)?;
        Ok(SubmitOutcome {
            version: self.state.version,
            completed,
            retrained,
        })
    }

    /// Retrains every target whose labels changed since its last fit.
    pub fn retrain_stale(&mut self) -> Result<Vec<Target>, SessionError> {
        let stale: Vec<Target> = self.state.stale.iter().copied().collect();
        let mut done = Vec::new();
        for t in stale {
            if let Some(model) = self.train_target(t)? {
                self.models.insert(t, model);
                self.state.model_versions.insert(t, self.state.version);
                self.record_curve(t)?;
                done.push(t);
            }
            self.state.stale.remove(&t);
        }
        self.state.pending = 0;
        Ok(done)
    }

    fn target_seed(&self, t: Target) -> u64 {
        rng::derive_seed(self.state.config.seed, t as u64)
    }

    fn train_target(&self, t: Target) -> Result<Option<TrainedModel>, SessionError> {
        let mut x = Vec::new();
        let mut y = Vec::new();
        let mut groups = Vec::new();
        for id in &self.order {
            if let Some(c) = self.state.labels.get(id).and_then(|l| l.class(t)) {
                x.push(self.pool[id].clone());
                y.push(c);
                groups.push(id.clone());
            }
        }
        if x.is_empty() {
            return Ok(None);
        }
        let data = Dataset::new(x, y, t.class_names(), groups)?;
        let params = self
            .state
            .config
            .model
            .clone()
            .with_seed(self.target_seed(t));
        Ok(Some(fit(&params, &data)?))
    }

    fn record_curve(&mut self, t: Target) -> Result<(), SessionError> {
        let (Some(eval), Some(model)) = (&self.eval, self.models.get(&t)) else {
            return Ok(());
        };
        let mut truth = Vec::new();
        let mut pred = Vec::new();
        for (x, l) in eval.features.iter().zip(&eval.labels) {
            if let Some(c) = l.class(t) {
                truth.push(c);
                pred.push(model.predict(x));
            }
        }
        if truth.is_empty() {
            return Ok(());
        }
        let f1 = weighted_f1(&truth, &pred, t.n_classes())?;
        self.state.curve.push(CurvePoint {
            n_labeled: self.state.labeled.len(),
            target: t,
            f1,
            strategy: AcquisitionStrategy::Entropy,
            seed: self.state.config.seed,
        });
        Ok(())
    }

    // Persistence.

    fn model_file(dir: &Path, t: Target, version: u64) -> PathBuf {
        dir.join("models")
            .join(format!("{}.v{version}.json", t.name()))
    }

    /// Writes the whole session into `dir` and keeps it attached there.
    pub fn save_to(&mut self, dir: &Path) -> Result<(), SessionError> {
        fs::create_dir_all(dir.join("models"))?;
        let pool = PoolFile {
            tickets: self.pool.clone(),
            eval: self.eval.clone(),
        };
        write_atomic(&dir.join(POOL_FILE), &serde_json::to_vec(&pool)?)?;
        self.dir = Some(dir.to_path_buf());
        let all: Vec<Target> = self.models.keys().copied().collect();
        self.persist(&all)
    }

    fn persist(&self, changed: &[Target]) -> Result<(), SessionError> {
        let Some(dir) = &self.dir else {
            return Ok(());
        };
        // Blobs first, session file last: the session file is the commit point.
        for &t in changed {
            let (Some(model), Some(&v)) = (self.models.get(&t), self.state.model_versions.get(&t))
            else {
                continue;
            };
            let blob = ModelBlob::new(
                model.clone(),
                t.class_names(),
                self.state.config.feature_spec_hash.clone(),
            )
            .with_target(t);
            write_atomic(&Self::model_file(dir, t, v), &save_model(&blob))?;
        }
        self.persist_state()?;
        self.prune_old_blobs(dir);
        Ok(())
    }

    fn persist_state(&self) -> Result<(), SessionError> {
        if let Some(dir) = &self.dir {
            write_atomic(
                &dir.join(SESSION_FILE),
                &serde_json::to_vec_pretty(&self.state)?,
            )?;
        }
        Ok(())
    }

    fn prune_old_blobs(&self, dir: &Path) {
        let keep: BTreeSet<PathBuf> = self
            .state
            .model_versions
            .iter()
            .map(|(t, v)| Self::model_file(dir, *t, *v))
            .collect();
        if let Ok(entries) = fs::read_dir(dir.join("models")) {
            for e in entries.flatten() {
                let p = e.path();
                if p.extension().is_some_and(|x| x == "json") && !keep.contains(&p) {
                    let _ = fs::remove_file(p);
                }
            }
        }
    }

    /// Reopens a saved session. Models whose blob is missing (for example
    /// after a crash between writes) are retrained from the stored labels,
    /// which reproduces them exactly.
    pub fn open(dir: &Path) -> Result<Self, SessionError> {
        let state: SessionState = serde_json::from_slice(&fs::read(dir.join(SESSION_FILE))?)?;
        if state.format_version != SESSION_FORMAT_VERSION {
            return Err(SessionError::Config(format!(
                "session format version {} is not supported",
                state.format_version
            )));
        }
        let pool: PoolFile = serde_json::from_slice(&fs::read(dir.join(POOL_FILE))?)?;
        let mut session = Self {
            order: Self::ordered_ids(&pool.tickets),
            pool: pool.tickets,
            eval: pool.eval,
            models: BTreeMap::new(),
            state,
            dir: Some(dir.to_path_buf()),
        };
        let versions = session.state.model_versions.clone();
        for (t, v) in versions {
            let path = Self::model_file(dir, t, v);
            let model = match fs::read(&path).ok().map(|b| load_model(&b)) {
                Some(Ok(blob)) => blob.model,
                _ => {
                    log::warn!("model blob {} unreadable; retraining", path.display());
                    match session.train_target(t)? {
                        Some(m) => m,
                        None => continue,
                    }
                }
            };
            session.models.insert(t, model);
        }
        Ok(session)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::RandomForestParams;
    use crate::labels::RiskLabel;

    fn config() -> AlConfig {
        AlConfig::new(
            ModelParams::RandomForest(RandomForestParams {
                n_estimators: 10,
                ..Default::default()
            }),
            7,
        )
    }

    fn full(risk: usize, debug: usize, res: usize) -> LabelSet {
        let mut l = LabelSet::default();
        l.set_class(Target::Risk, risk).unwrap();
        l.set_class(Target::Debug, debug).unwrap();
        l.set_class(Target::Resolution, res).unwrap();
        l
    }

    fn session() -> AlSession {
        let pool: BTreeMap<TicketId, Vec<f64>> = (1..=12u64)
            .map(|i| (TicketId::from(i), vec![i as f64, (i % 3) as f64]))
            .collect();
        let labels = [
            (1u64, full(0, 1, 2)),
            (2, full(1, 3, 2)),
            (3, full(0, 1, 5)),
            (11, full(2, 8, 9)),
        ]
        .into_iter()
        .map(|(i, l)| (TicketId::from(i), l))
        .collect();
        AlSession::new(config(), pool, labels).unwrap()
    }

    #[test]
    fn pools_partition_the_tickets() {
        let s = session();
        assert_eq!(s.labeled().len(), 4);
        assert_eq!(s.unlabeled().len(), 8);
        assert!(s.labeled().is_disjoint(s.unlabeled()));
    }

    #[test]
    fn propose_is_pure_and_in_pool() {
        let s = session();
        let a = s.propose_next().unwrap();
        let b = s.propose_next().unwrap();
        assert_eq!(a, b);
        assert!(s.unlabeled().contains(&a.base_id));
        let max = s
            .unlabeled()
            .iter()
            .flat_map(|id| s.per_target_entropy(id).unwrap().into_values())
            .fold(0.0, f64::max);
        assert_eq!(a.entropy, max);
    }

    #[test]
    fn partial_label_keeps_ticket_proposable() {
        let mut s = session();
        let id = TicketId::from(5u64);
        let frag = LabelSet {
            risk: Some(RiskLabel::Waiver),
            ..Default::default()
        };
        let out = s.submit_label(&id, &frag, Some(0), false).unwrap();
        assert!(!out.completed);
        assert_eq!(out.retrained, vec![Target::Risk]);
        assert!(s.unlabeled().contains(&id));
        assert_eq!(
            s.missing_targets(&id),
            vec![Target::Debug, Target::Resolution]
        );
        // Overwrite needs force.
        assert!(matches!(
            s.submit_label(&id, &frag, None, false),
            Err(SessionError::AlreadyLabeled { .. })
        ));
        let out = s.submit_label(&id, &full(1, 2, 3), None, true).unwrap();
        assert!(out.completed);
        assert_eq!(s.labeled().len() + s.unlabeled().len(), 12);
    }

    #[test]
    fn stale_versions_are_rejected() {
        let mut s = session();
        let id = TicketId::from(6u64);
        s.submit_label(&id, &full(0, 0, 0), Some(0), false).unwrap();
        let before = s.state.clone();
        let err = s.submit_label(&TicketId::from(7u64), &full(0, 0, 0), Some(0), false);
        assert!(matches!(
            err,
            Err(SessionError::StaleVersion {
                given: 0,
                current: 1
            })
        ));
        assert_eq!(s.state, before);
    }

    #[test]
    fn unknown_ticket_and_empty_label() {
        let mut s = session();
        assert!(matches!(
            s.submit_label(&TicketId::from("zz"), &full(0, 0, 0), None, false),
            Err(SessionError::UnknownTicket(_))
        ));
        assert!(matches!(
            s.submit_label(&TicketId::from(4u64), &LabelSet::default(), None, false),
            Err(SessionError::EmptyLabel)
        ));
    }

    #[test]
    fn reload_gives_identical_state() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = session();
        s.save_to(dir.path()).unwrap();
        s.submit_label(&TicketId::from(8u64), &full(3, 4, 5), Some(0), false)
            .unwrap();
        let p = s.propose_next().unwrap();
        s.record_proposal(&p).unwrap();
        let r = AlSession::open(dir.path()).unwrap();
        assert_eq!(r.state, s.state);
        assert_eq!(r.models, s.models);
        assert_eq!(r.propose_next().unwrap(), p);

        // Losing a blob only costs a retrain.
        for e in fs::read_dir(dir.path().join("models")).unwrap() {
            fs::remove_file(e.unwrap().path()).unwrap();
        }
        let r = AlSession::open(dir.path()).unwrap();
        assert_eq!(r.models, s.models);
    }

    #[test]
    fn batch_retraining_defers_fits() {
        let mut cfg = config();
        cfg.retrain_every = 2;
        let mut s = AlSession::new(cfg, session().pool, session().state.labels).unwrap();
        let a = s
            .submit_label(&TicketId::from(4u64), &full(0, 0, 0), None, false)
            .unwrap();
        assert!(a.retrained.is_empty());
        let b = s
            .submit_label(&TicketId::from(5u64), &full(1, 1, 1), None, false)
            .unwrap();
        assert_eq!(b.retrained, Target::EXPERT.to_vec());
    }
}
