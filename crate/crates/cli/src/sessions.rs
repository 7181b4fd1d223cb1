//! Building active-learning sessions from a prepared work directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use triage_core::active_learning::AlConfig;
use triage_core::corpus::{ingest_corpus, ticket_to_json, Schema};
use triage_core::hpo::preset_by_name;
use triage_core::{rng, AlSession, LabelSet, ModelKind, ModelParams, Target, TicketId};

use crate::workdir::{read_json, read_jsonl, write_json, write_jsonl, Split, Table};

pub const REQUEST_FILE: &str = "request.json";
pub const TICKETS_FILE: &str = "tickets.jsonl";

/// How to build a session. The same shape is accepted by `POST /sessions`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionRequest {
    /// Work directory written by `featurize` and `label-extract`.
    pub data: PathBuf,
    /// Corpus and schema used to show tickets to the expert.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub targets: Option<Vec<Target>>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retrain_every: Option<usize>,
    /// Number of expert-labeled tickets to start from, capped at the number
    /// available; all of them when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_size: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct Display {
    /// Ticket payloads in the interchange format, for the labeling UI.
    pub tickets: BTreeMap<TicketId, Value>,
}

impl SessionRequest {
    fn model_params(&self) -> anyhow::Result<ModelParams> {
        let params = match (&self.preset, &self.model) {
            (Some(_), Some(_)) => bail!("give either a preset or model parameters, not both"),
            (Some(name), None) => preset_by_name(name)?.1,
            (None, Some(m)) => m.clone(),
            (None, None) => ModelParams::default_for(ModelKind::RandomForest),
        };
        Ok(params.with_seed(self.seed))
    }
}

/// Pool: the whole-history training tickets. Initial labels: the expert
/// labels label-extract attached, optionally subsampled. The test side
/// becomes the evaluation set behind the session's learning curve.
pub fn create_session(req: &SessionRequest, dir: &Path) -> anyhow::Result<AlSession> {
    if dir.join(crate::sessions::REQUEST_FILE).exists() {
        bail!("{} already holds a session", dir.display());
    }
    let table = Table::load(&req.data)?;
    let mut config = AlConfig::new(req.model_params()?, req.seed);
    config.feature_spec_hash = Some(table.spec_hash.clone());
    if let Some(t) = &req.targets {
        config.targets = t.clone();
    }
    if let Some(r) = req.retrain_every {
        config.retrain_every = r;
    }
    let pool_rows = table.full_tickets(Split::Train);
    let pool: BTreeMap<TicketId, Vec<f64>> = pool_rows
        .iter()
        .map(|r| (r.base_id.clone(), r.x.clone()))
        .collect();
    let expert = |l: &LabelSet| LabelSet {
        fixing_time_class: None,
        ..*l
    };
    let mut labeled: Vec<(TicketId, LabelSet)> = pool_rows
        .iter()
        .map(|r| (r.base_id.clone(), expert(&r.labels)))
        .filter(|(_, l)| !l.is_empty_expert())
        .collect();
    if let Some(n) = req.initial_size {
        if n > labeled.len() {
            tracing::warn!(
                "initial_size {n} exceeds the {} expert-labeled tickets; using all",
                labeled.len()
            );
        }
        labeled.shuffle(&mut rng::stream(req.seed, 0));
        labeled.truncate(n);
    }
    let eval_rows = table.full_tickets(Split::Test);
    let mut session = AlSession::with_eval_set(
        config,
        pool,
        labeled.into_iter().collect(),
        eval_rows.iter().map(|r| r.x.clone()).collect(),
        eval_rows.iter().map(|r| expert(&r.labels)).collect(),
    )?;
    std::fs::create_dir_all(dir)?;
    if let Some(corpus) = &req.corpus {
        let schema_path = req.schema.as_ref().context("a corpus needs its schema")?;
        let schema = Schema::from_path(schema_path)?;
        let (corpus, _) = ingest_corpus(corpus, &schema)?;
        let payloads: Vec<Value> = corpus
            .tickets()
            .iter()
            .filter(|t| session.features(&t.base_id).is_some())
            .map(ticket_to_json)
            .collect();
        write_jsonl(&dir.join(TICKETS_FILE), &payloads)?;
    }
    session.save_to(dir)?;
    write_json(&dir.join(REQUEST_FILE), req)?;
    Ok(session)
}

/// Ticket payloads stored next to a session, if any.
pub fn load_display(dir: &Path) -> anyhow::Result<Display> {
    let path = dir.join(TICKETS_FILE);
    let mut tickets = BTreeMap::new();
    if path.exists() {
        for v in read_jsonl::<Value>(&path)? {
            let id = match v.get("id") {
                Some(Value::String(s)) => s.clone(),
                Some(Value::Number(n)) => n.to_string(),
                _ => bail!("{}: ticket without id", path.display()),
            };
            tickets.insert(TicketId(id), v);
        }
    }
    Ok(Display { tickets })
}

pub fn load_request(dir: &Path) -> anyhow::Result<SessionRequest> {
    read_json(&dir.join(REQUEST_FILE))
}
