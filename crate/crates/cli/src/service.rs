//! HTTP API over active-learning sessions and trained models.
//!
//! | method | path                         |                                   |
//! |--------|------------------------------|-----------------------------------|
//! | GET    | /healthz                     | liveness                          |
//! | GET    | /sessions                    | all session descriptors           |
//! | POST   | /sessions                    | create from a [`SessionRequest`]  |
//! | GET    | /sessions/{id}               | one descriptor                    |
//! | GET    | /sessions/{id}/proposal      | next (ticket, target) to label    |
//! | POST   | /sessions/{id}/labels        | submit labels, optimistic version |
//! | GET    | /sessions/{id}/curve         | learning curve, JSON or CSV       |
//! | POST   | /predict                     | per-target prediction for a ticket|
//!
//! Errors are `{"error": code, "message": text, "details": [...]}`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use anyhow::{bail, Context};
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use triage_core::active_learning::{write_curve_csv, CurvePoint, Proposal, SessionError};
use triage_core::classifiers::{load_model, ModelBlob};
use triage_core::corpus::{ticket_from_json, Schema};
use triage_core::features::{ExternalEmbeddingStore, FeatureSpec};
use triage_core::labels::ComplexityLabel;
use triage_core::{
    entropy, AlSession, Classifier, LabelSet, ModelKind, RiskLabel, Target, TicketId,
};

use crate::sessions::{create_session, load_display, load_request, Display, SessionRequest};
use crate::workdir::read_json;

/// Serves `/predict`: a fitted feature spec plus one model per target.
#[derive(Debug)]
pub struct Predictor {
    pub schema: Schema,
    pub spec: FeatureSpec,
    pub models: BTreeMap<Target, ModelBlob>,
    pub external: Option<ExternalEmbeddingStore>,
}

impl Predictor {
    pub fn new(
        schema: Schema,
        spec: FeatureSpec,
        blobs: Vec<ModelBlob>,
        external: Option<ExternalEmbeddingStore>,
    ) -> anyhow::Result<Self> {
        let hash = spec.hash();
        let mut models = BTreeMap::new();
        for blob in blobs {
            blob.check_feature_spec(&hash)?;
            let target = blob
                .header
                .target
                .context("model blob does not record its target")?;
            if models.insert(target, blob).is_some() {
                bail!("two models for {target}");
            }
        }
        if models.is_empty() {
            bail!("no models to serve");
        }
        Ok(Self {
            schema,
            spec,
            models,
            external,
        })
    }

    pub fn load(
        schema: &Path,
        spec: &Path,
        models: &[PathBuf],
        external: Option<&Path>,
    ) -> anyhow::Result<Self> {
        let mut blobs = Vec::new();
        for m in models {
            let bytes = std::fs::read(m).with_context(|| format!("reading {}", m.display()))?;
            blobs.push(load_model(&bytes).with_context(|| format!("loading {}", m.display()))?);
        }
        let external = external.map(ExternalEmbeddingStore::load).transpose()?;
        Self::new(
            Schema::from_path(schema)?,
            read_json(spec)?,
            blobs,
            external,
        )
    }
}

/// One target's answer in a [`PredictionResponse`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetPrediction {
    pub class: String,
    pub class_index: usize,
    pub class_names: Vec<String>,
    pub probabilities: Vec<f64>,
    /// Entropy of `probabilities`, in nats.
    pub entropy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionResponse {
    pub base_id: String,
    pub observed_events: usize,
    pub feature_spec_hash: String,
    pub predictions: BTreeMap<Target, TargetPrediction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolSizes {
    pub labeled: usize,
    pub unlabeled: usize,
    pub partially_labeled: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigSummary {
    pub model_kind: ModelKind,
    pub targets: Vec<Target>,
    pub seed: u64,
    pub retrain_every: usize,
    pub feature_spec_hash: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionDescriptor {
    pub session_id: String,
    pub created_at: String,
    pub config: ConfigSummary,
    pub pools: PoolSizes,
    pub model_versions: BTreeMap<Target, u64>,
    pub session_version: u64,
    pub n_proposals: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProposalResponse {
    pub base_id: String,
    pub target: Target,
    pub entropy: f64,
    /// Entropy of every session target for this ticket.
    pub per_target_entropy: BTreeMap<Target, f64>,
    /// The ticket in the interchange format, when the session has it.
    pub ticket: Option<Value>,
    /// Labels already given for this ticket.
    pub labels: LabelSet,
    pub session_version: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelResponse {
    pub completed: bool,
    pub retrained: Vec<Target>,
    pub session: SessionDescriptor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub details: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub current_version: Option<u64>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                error: code.to_owned(),
                message: message.into(),
                details: Vec::new(),
                current_version: None,
            },
        }
    }

    fn validation(details: Vec<String>) -> Self {
        let mut e = Self::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "validation",
            "request failed validation",
        );
        e.body.details = details;
        e
    }

    fn internal(err: impl std::fmt::Display) -> Self {
        Self::new(
            StatusCode::INTERNAL_SERVER_ERROR,
            "internal",
            err.to_string(),
        )
    }

    fn not_found(what: &str) -> Self {
        Self::new(
            StatusCode::NOT_FOUND,
            "not_found",
            format!("{what} not found"),
        )
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let msg = e.to_string();
        match e {
            SessionError::StaleVersion { current, .. } => {
                let mut a = Self::new(StatusCode::CONFLICT, "stale_version", msg);
                a.body.current_version = Some(current);
                a
            }
            SessionError::AlreadyLabeled { .. } => {
                Self::new(StatusCode::CONFLICT, "already_labeled", msg)
            }
            SessionError::Exhausted => Self::new(StatusCode::CONFLICT, "exhausted", msg),
            SessionError::UnknownTicket(_) => {
                Self::new(StatusCode::NOT_FOUND, "unknown_ticket", msg)
            }
            SessionError::EmptyLabel => Self::validation(vec![format!("$.labels: {msg}")]),
            SessionError::Label(_) => Self::validation(vec![format!("$.labels: {msg}")]),
            SessionError::NotTrained(_) => Self::new(StatusCode::CONFLICT, "not_trained", msg),
            _ => Self::internal(msg),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

struct Slot {
    id: String,
    session: Arc<tokio::sync::RwLock<AlSession>>,
    display: Display,
    /// Last proposal; valid while its version matches the session's.
    cached: Mutex<Option<Proposal>>,
}

pub struct AppState {
    root: PathBuf,
    sessions: RwLock<BTreeMap<String, Arc<Slot>>>,
    /// Serializes session creation so ids stay unique.
    creating: tokio::sync::Mutex<()>,
    predictor: Option<Arc<Predictor>>,
}

impl AppState {
    /// Opens every session directory under `root`.
    pub fn open(root: &Path, predictor: Option<Predictor>) -> anyhow::Result<Self> {
        std::fs::create_dir_all(root)?;
        let mut sessions = BTreeMap::new();
        let mut entries: Vec<PathBuf> = std::fs::read_dir(root)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join(crate::sessions::REQUEST_FILE).exists())
            .collect();
        entries.sort();
        for dir in entries {
            let id = dir
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            let session = AlSession::open(&dir)
                .with_context(|| format!("opening session {}", dir.display()))?;
            load_request(&dir)?;
            let slot = Slot {
                id: id.clone(),
                session: Arc::new(tokio::sync::RwLock::new(session)),
                display: load_display(&dir)?,
                cached: Mutex::new(None),
            };
            sessions.insert(id, Arc::new(slot));
        }
        Ok(Self {
            root: root.to_path_buf(),
            sessions: RwLock::new(sessions),
            creating: tokio::sync::Mutex::new(()),
            predictor: predictor.map(Arc::new),
        })
    }

    fn slot(&self, id: &str) -> ApiResult<Arc<Slot>> {
        self.sessions
            .read()
            .expect("session map lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(&format!("session `{id}`")))
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/sessions", get(list_sessions).post(create))
        .route("/sessions/{id}", get(describe))
        .route("/sessions/{id}/proposal", get(proposal))
        .route("/sessions/{id}/labels", post(submit))
        .route("/sessions/{id}/curve", get(curve))
        .route("/predict", post(predict))
        .with_state(state)
}

fn descriptor(id: &str, s: &AlSession) -> SessionDescriptor {
    let sum = s.summary();
    let cfg = s.config();
    SessionDescriptor {
        session_id: id.to_owned(),
        created_at: sum.created_at,
        config: ConfigSummary {
            model_kind: sum.model_kind,
            targets: sum.targets,
            seed: cfg.seed,
            retrain_every: cfg.retrain_every,
            feature_spec_hash: sum.feature_spec_hash,
        },
        pools: PoolSizes {
            labeled: sum.n_labeled,
            unlabeled: sum.n_unlabeled,
            partially_labeled: sum.n_partially_labeled,
        },
        model_versions: sum.model_versions,
        session_version: sum.version,
        n_proposals: sum.n_proposals,
    }
}

async fn healthz(State(st): State<Arc<AppState>>) -> Json<Value> {
    let n = st.sessions.read().expect("session map lock").len();
    Json(serde_json::json!({"status": "ok", "sessions": n, "predict": st.predictor.is_some()}))
}

async fn list_sessions(State(st): State<Arc<AppState>>) -> Json<Vec<SessionDescriptor>> {
    let slots: Vec<Arc<Slot>> = st
        .sessions
        .read()
        .expect("session map lock")
        .values()
        .cloned()
        .collect();
    let mut out = Vec::with_capacity(slots.len());
    for slot in slots {
        out.push(descriptor(&slot.id, &*slot.session.read().await));
    }
    Json(out)
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 64
        && id
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

async fn create(
    State(st): State<Arc<AppState>>,
    Json(mut body): Json<Value>,
) -> ApiResult<(StatusCode, Json<SessionDescriptor>)> {
    let requested = match body.as_object_mut().and_then(|m| m.remove("id")) {
        None => None,
        Some(Value::String(id)) if valid_id(&id) => Some(id),
        Some(_) => {
            return Err(ApiError::validation(vec![
                "$.id: use 1-64 letters, digits, `-` or `_`".into(),
            ]))
        }
    };
    let request: SessionRequest =
        serde_json::from_value(body).map_err(|e| ApiError::validation(vec![format!("$: {e}")]))?;
    let _guard = st.creating.lock().await;
    let id = match requested {
        Some(id) => id,
        None => {
            let map = st.sessions.read().expect("session map lock");
            (1..)
                .map(|n| format!("s{n}"))
                .find(|k| !map.contains_key(k))
                .expect("unbounded")
        }
    };
    if st
        .sessions
        .read()
        .expect("session map lock")
        .contains_key(&id)
        || st.root.join(&id).exists()
    {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "exists",
            format!("session `{id}` exists"),
        ));
    }
    let dir = st.root.join(&id);
    let (session, display) = tokio::task::spawn_blocking(move || -> anyhow::Result<_> {
        let s = create_session(&request, &dir)?;
        Ok((s, load_display(&dir)?))
    })
    .await
    .map_err(ApiError::internal)?
    .map_err(|e| {
        ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "invalid_session",
            format!("{e:#}"),
        )
    })?;
    let desc = descriptor(&id, &session);
    let slot = Slot {
        id: id.clone(),
        session: Arc::new(tokio::sync::RwLock::new(session)),
        display,
        cached: Mutex::new(None),
    };
    st.sessions
        .write()
        .expect("session map lock")
        .insert(id, Arc::new(slot));
    Ok((StatusCode::CREATED, Json(desc)))
}

async fn describe(
    State(st): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<Json<SessionDescriptor>> {
    let slot = st.slot(&id)?;
    let s = slot.session.read().await;
    Ok(Json(descriptor(&slot.id, &s)))
}

async fn proposal(
    State(st): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<Json<ProposalResponse>> {
    let slot = st.slot(&id)?;
    let guard = Arc::clone(&slot.session).read_owned().await;
    let version = guard.version();
    let cached = slot.cached.lock().expect("proposal cache").clone();
    let p = match cached.filter(|p| p.session_version == version) {
        Some(p) => p,
        None => {
            let (p, guard) = tokio::task::spawn_blocking(move || (guard.propose_next(), guard))
                .await
                .map_err(ApiError::internal)?;
            let p = p?;
            drop(guard);
            // log the proposal unless a label slipped in meanwhile
            let mut w = slot.session.write().await;
            if w.version() == p.session_version {
                w.record_proposal(&p)?;
            }
            *slot.cached.lock().expect("proposal cache") = Some(p.clone());
            p
        }
    };
    let labels = slot
        .session
        .read()
        .await
        .labels()
        .get(&p.base_id)
        .copied()
        .unwrap_or_default();
    Ok(Json(ProposalResponse {
        ticket: slot.display.tickets.get(&p.base_id).cloned(),
        base_id: p.base_id.0,
        target: p.target,
        entropy: p.entropy,
        per_target_entropy: p.per_target,
        labels,
        session_version: p.session_version,
    }))
}

/// Reads the label fragment field by field so each problem gets a path.
fn parse_labels(v: Option<&Value>) -> Result<LabelSet, Vec<String>> {
    let Some(Value::Object(m)) = v else {
        return Err(vec!["$.labels: expected an object".into()]);
    };
    let mut out = LabelSet::default();
    let mut errs = Vec::new();
    for (k, v) in m {
        let path = format!("$.labels.{k}");
        match k.as_str() {
            "risk" => match v.as_str().map(str::parse::<RiskLabel>) {
                Some(Ok(r)) => out.risk = Some(r),
                Some(Err(e)) => errs.push(format!("{path}: {e}")),
                None => errs.push(format!("{path}: expected a string")),
            },
            "debug" | "resolution" => match v.as_i64().map(ComplexityLabel::new) {
                Some(Ok(c)) if k == "debug" => out.debug = Some(c),
                Some(Ok(c)) => out.resolution = Some(c),
                Some(Err(e)) => errs.push(format!("{path}: {e}")),
                None => errs.push(format!("{path}: expected an integer")),
            },
            _ => errs.push(format!("{path}: unknown target")),
        }
    }
    if errs.is_empty() {
        Ok(out)
    } else {
        Err(errs)
    }
}

async fn submit(
    State(st): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Json(body): Json<Value>,
) -> ApiResult<Json<LabelResponse>> {
    let slot = st.slot(&id)?;
    let mut errs = Vec::new();
    let base_id = match body.get("base_id") {
        Some(Value::String(s)) => Some(TicketId(s.clone())),
        Some(Value::Number(n)) => Some(TicketId(n.to_string())),
        _ => {
            errs.push("$.base_id: expected a string or number".to_owned());
            None
        }
    };
    let version = match body.get("session_version") {
        Some(v) => match v.as_u64() {
            Some(v) => Some(v),
            None => {
                errs.push("$.session_version: expected a non-negative integer".to_owned());
                None
            }
        },
        None => {
            errs.push("$.session_version: required".to_owned());
            None
        }
    };
    let force = match body.get("force") {
        None => false,
        Some(Value::Bool(b)) => *b,
        Some(_) => {
            errs.push("$.force: expected a boolean".to_owned());
            false
        }
    };
    let labels = parse_labels(body.get("labels"))
        .map_err(|e| errs.extend(e))
        .ok();
    if let Value::Object(m) = &body {
        for k in m.keys() {
            if !["base_id", "labels", "session_version", "force"].contains(&k.as_str()) {
                errs.push(format!("$.{k}: unknown field"));
            }
        }
    }
    if !errs.is_empty() {
        return Err(ApiError::validation(errs));
    }
    let (base_id, labels) = (base_id.expect("validated"), labels.expect("validated"));
    // Mutations hold the write lock for the whole submit, retrain and
    // persist, so the model version flips at once for readers.
    let mut guard = Arc::clone(&slot.session).write_owned().await;
    let (outcome, guard) = tokio::task::spawn_blocking(move || {
        let r = guard.submit_label(&base_id, &labels, version, force);
        (r, guard)
    })
    .await
    .map_err(ApiError::internal)?;
    let outcome = outcome?;
    Ok(Json(LabelResponse {
        completed: outcome.completed,
        retrained: outcome.retrained,
        session: descriptor(&slot.id, &guard),
    }))
}

#[derive(Debug, Deserialize)]
struct CurveQuery {
    format: Option<String>,
}

async fn curve(
    State(st): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<CurveQuery>,
    headers: HeaderMap,
) -> ApiResult<Response> {
    let slot = st.slot(&id)?;
    let points: Vec<CurvePoint> = slot.session.read().await.curve().to_vec();
    let wants_csv = match q.format.as_deref() {
        Some("csv") => true,
        Some("json") => false,
        Some(other) => {
            return Err(ApiError::validation(vec![format!(
                "format: `{other}` is not csv or json"
            )]))
        }
        None => headers
            .get(header::ACCEPT)
            .and_then(|v| v.to_str().ok())
            .is_some_and(|v| v.contains("text/csv")),
    };
    if wants_csv {
        let mut buf = Vec::new();
        write_curve_csv(&mut buf, &points).map_err(ApiError::internal)?;
        Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], buf).into_response())
    } else {
        Ok(Json(points).into_response())
    }
}

async fn predict(
    State(st): State<Arc<AppState>>,
    Json(body): Json<Value>,
) -> ApiResult<Json<PredictionResponse>> {
    let Some(p) = st.predictor.clone() else {
        return Err(ApiError::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "no_models",
            "the service was started without models",
        ));
    };
    let Some(ticket) = body.get("ticket") else {
        return Err(ApiError::validation(vec!["$.ticket: required".into()]));
    };
    let base = ticket_from_json(&p.schema, ticket).map_err(|errs| {
        ApiError::validation(
            errs.into_iter()
                .map(|e| e.replacen('$', "$.ticket", 1))
                .collect(),
        )
    })?;
    let derived = base.full();
    let v = p
        .spec
        .assemble(&derived, p.external.as_ref())
        .map_err(|e| ApiError::validation(vec![format!("$.ticket: {e}")]))?;
    let predictions = p
        .models
        .iter()
        .map(|(t, blob)| {
            let probs = blob.model.predict_proba(&v.values);
            let k = probs.argmax();
            let names = blob.header.class_names.clone();
            let pred = TargetPrediction {
                class: names.get(k).cloned().unwrap_or_else(|| k.to_string()),
                class_index: k,
                class_names: names,
                entropy: entropy(probs.as_slice()),
                probabilities: probs.into_vec(),
            };
            (*t, pred)
        })
        .collect();
    Ok(Json(PredictionResponse {
        base_id: base.base_id.0,
        observed_events: derived.prefix_len,
        feature_spec_hash: p.spec.hash(),
        predictions,
    }))
}

/// Binds `addr` and serves until Ctrl-C.
pub async fn serve(state: AppState, addr: &str) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .with_context(|| format!("binding {addr}"))?;
    tracing::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(state)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_fragments_report_paths() {
        let ok = parse_labels(Some(&serde_json::json!({"risk": "waiver", "debug": 3}))).unwrap();
        assert_eq!(ok.risk, Some(RiskLabel::Waiver));
        assert_eq!(ok.debug.map(ComplexityLabel::value), Some(3));
        let errs = parse_labels(Some(
            &serde_json::json!({"risk": "meh", "debug": 11, "x": 1}),
        ))
        .unwrap_err();
        assert_eq!(errs.len(), 3);
        assert!(errs.iter().any(|e| e.starts_with("$.labels.debug")));
        assert!(errs.iter().any(|e| e.starts_with("$.labels.risk")));
        assert!(parse_labels(None).is_err());
    }

    #[test]
    fn session_ids() {
        assert!(valid_id("s1"));
        assert!(valid_id("team_a-2"));
        assert!(!valid_id("../x"));
        assert!(!valid_id(""));
    }
}
