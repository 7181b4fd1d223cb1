use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::{BaseTicket, Corpus, CorpusError, DerivedTicket, FieldValue, TicketEvent, TicketId};

/// Declared type of a static field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Categorical,
    Numerical,
    Text,
    Date,
}

/// Field-type declaration: `{"fields": {"state": "categorical", ...}}`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub fields: BTreeMap<String, FieldKind>,
}

impl Schema {
    pub fn from_path(path: &Path) -> Result<Self, CorpusError> {
        let file = File::open(path)?;
        serde_json::from_reader(BufReader::new(file))
            .map_err(|e| CorpusError::Schema(format!("{}: {e}", path.display())))
    }

    pub fn kind(&self, field: &str) -> Option<FieldKind> {
        self.fields.get(field).copied()
    }

    /// Names of fields of `kind`, in name order.
    pub fn fields_of(&self, kind: FieldKind) -> Vec<String> {
        self.fields
            .iter()
            .filter(|(_, k)| **k == kind)
            .map(|(n, _)| n.clone())
            .collect()
    }
}

/// A record that did not make it into the corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    /// 1-based line number in the source.
    pub line: usize,
    pub id: Option<String>,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub accepted: usize,
    pub rejections: Vec<Rejection>,
}

#[derive(Deserialize)]
struct RawRecord {
    #[allow(dead_code)]
    id: Value,
    #[serde(rename = "static", default)]
    static_fields: Map<String, Value>,
    events: Vec<RawEvent>,
    closed_at: Value,
}

#[derive(Deserialize)]
struct RawEvent {
    t: Value,
    #[serde(default)]
    changes: Map<String, Value>,
    #[serde(default)]
    text: Option<String>,
    #[serde(default)]
    attachments: Option<Vec<String>>,
}

#[derive(Deserialize)]
struct RawDerived {
    base_id: Value,
    prefix_len: usize,
    observation_time: Value,
    #[serde(rename = "static", default)]
    static_fields: Map<String, Value>,
    events: Vec<RawEvent>,
}

/// Parses an ISO-8601 instant (RFC 3339, naive date-time taken as UTC, or a
/// bare date at midnight UTC) into UTC seconds.
pub fn parse_timestamp(s: &str) -> Result<i64, String> {
    let s = s.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Ok(dt.timestamp());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(dt.and_utc().timestamp());
        }
    }
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Ok(d
            .and_hms_opt(0, 0, 0)
            .expect("midnight")
            .and_utc()
            .timestamp());
    }
    Err(format!("unparseable timestamp `{s}`"))
}

/// Formats UTC seconds as `YYYY-MM-DDTHH:MM:SSZ`.
pub fn format_timestamp(secs: i64) -> String {
    DateTime::<Utc>::from_timestamp(secs, 0)
        .map(|dt| dt.format("%Y-%m-%dT%H:%M:%SZ").to_string())
        .unwrap_or_else(|| secs.to_string())
}

fn timestamp_value(v: &Value) -> Result<i64, String> {
    match v {
        Value::String(s) => parse_timestamp(s),
        Value::Number(n) => n
            .as_i64()
            .ok_or_else(|| format!("unparseable timestamp `{n}`")),
        other => Err(format!("unparseable timestamp `{other}`")),
    }
}

fn id_value(v: &Value) -> Option<String> {
    match v {
        Value::String(s) if !s.is_empty() => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn scalar_string(v: &Value) -> Option<String> {
    match v {
        Value::Null => None,
        Value::String(s) => Some(s.clone()),
        Value::Bool(b) => Some(b.to_string()),
        Value::Number(n) => Some(n.to_string()),
        other => Some(other.to_string()),
    }
}

fn typed_value(field: &str, kind: FieldKind, v: &Value) -> Result<FieldValue, String> {
    if v.is_null() {
        return Ok(FieldValue::Missing);
    }
    if let Value::String(s) = v {
        if s.is_empty() {
            return Ok(FieldValue::Missing);
        }
    }
    match kind {
        FieldKind::Categorical => match v {
            Value::String(_) | Value::Number(_) | Value::Bool(_) => Ok(FieldValue::Categorical(
                scalar_string(v).unwrap_or_default(),
            )),
            _ => Err(format!("field `{field}`: expected a categorical scalar")),
        },
        FieldKind::Numerical => {
            let x = match v {
                Value::Number(n) => n.as_f64(),
                Value::String(s) => s.trim().parse::<f64>().ok(),
                _ => None,
            };
            match x {
                Some(x) if x.is_finite() => Ok(FieldValue::Numerical(x)),
                Some(_) => Ok(FieldValue::Missing),
                None => Err(format!("field `{field}`: expected a number")),
            }
        }
        FieldKind::Text => match v {
            Value::String(s) => Ok(FieldValue::Text(s.clone())),
            _ => Err(format!("field `{field}`: expected text")),
        },
        FieldKind::Date => timestamp_value(v)
            .map(FieldValue::Date)
            .map_err(|e| format!("field `{field}`: {e}")),
    }
}

fn typed_static(
    schema: &Schema,
    raw: &Map<String, Value>,
) -> Result<BTreeMap<String, FieldValue>, String> {
    let mut out = BTreeMap::new();
    for (name, v) in raw {
        let kind = schema
            .kind(name)
            .ok_or_else(|| format!("unknown field `{name}`"))?;
        let value = typed_value(name, kind, v)?;
        if !value.is_missing() {
            out.insert(name.clone(), value);
        }
    }
    Ok(out)
}

fn typed_events(raw: Vec<RawEvent>) -> Result<Vec<TicketEvent>, String> {
    let mut events = Vec::with_capacity(raw.len());
    for (i, e) in raw.into_iter().enumerate() {
        let timestamp = timestamp_value(&e.t).map_err(|err| format!("event {i}: {err}"))?;
        let mut field_changes = BTreeMap::new();
        for (field, change) in e.changes {
            let pair = match &change {
                Value::Array(items) if items.len() == 2 => {
                    (scalar_string(&items[0]), scalar_string(&items[1]))
                }
                Value::Object(o) => (
                    o.get("old").and_then(scalar_string),
                    o.get("new").and_then(scalar_string),
                ),
                _ => return Err(format!("event {i}: change of `{field}` must be [old, new]")),
            };
            field_changes.insert(field, pair);
        }
        events.push(TicketEvent {
            timestamp,
            field_changes,
            discussion_text: e.text,
            attachments_meta: e.attachments,
        });
    }
    Ok(events)
}

fn validate_history(events: &[TicketEvent], closed_at: Option<i64>) -> Result<(), String> {
    if events.is_empty() {
        return Err("no events".into());
    }
    if events.windows(2).any(|w| w[1].timestamp < w[0].timestamp) {
        return Err("non-monotonic events".into());
    }
    if let Some(closed_at) = closed_at {
        if closed_at < events[events.len() - 1].timestamp {
            return Err("closed before last event".into());
        }
    }
    Ok(())
}

fn parse_record(schema: &Schema, raw: RawRecord, id: String) -> Result<BaseTicket, String> {
    let static_fields = typed_static(schema, &raw.static_fields)?;
    let events = typed_events(raw.events)?;
    let closed_at = timestamp_value(&raw.closed_at).map_err(|e| format!("closed_at: {e}"))?;
    validate_history(&events, Some(closed_at))?;
    Ok(BaseTicket {
        base_id: TicketId(id),
        static_fields,
        events,
        closed_at,
    })
}

/// Reads ticket records (one JSON object per line) against `schema`.
///
/// Records that violate the schema end up in the report; a duplicate id
/// anywhere in the stream is a hard error.
pub fn ingest_reader<R: BufRead>(
    source: R,
    schema: &Schema,
) -> Result<(Corpus, IngestReport), CorpusError> {
    let mut tickets = Vec::new();
    let mut report = IngestReport::default();
    let mut seen = HashSet::new();
    for (i, line) in source.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = match serde_json::from_str(&line) {
            Ok(v) => v,
            Err(e) => {
                report.rejections.push(Rejection {
                    line: line_no,
                    id: None,
                    reason: format!("invalid JSON: {e}"),
                });
                continue;
            }
        };
        let id = value.get("id").and_then(id_value);
        if let Some(id) = &id {
            if !seen.insert(id.clone()) {
                return Err(CorpusError::DuplicateId(TicketId(id.clone())));
            }
        }
        let parsed = serde_json::from_value::<RawRecord>(value)
            .map_err(|e| format!("malformed record: {e}"))
            .and_then(|raw| {
                let id = id.clone().ok_or_else(|| "missing id".to_owned())?;
                parse_record(schema, raw, id)
            });
        match parsed {
            Ok(t) => tickets.push(t),
            Err(reason) => report.rejections.push(Rejection {
                line: line_no,
                id,
                reason,
            }),
        }
    }
    report.accepted = tickets.len();
    Ok((Corpus::new(schema.clone(), tickets)?, report))
}

/// Reads a ticket JSONL file.
pub fn ingest_corpus(path: &Path, schema: &Schema) -> Result<(Corpus, IngestReport), CorpusError> {
    ingest_reader(BufReader::new(File::open(path)?), schema)
}

fn render_static(fields: &BTreeMap<String, FieldValue>) -> Value {
    let mut out = Map::new();
    for (name, v) in fields {
        let rendered = match v {
            FieldValue::Categorical(s) | FieldValue::Text(s) => Value::String(s.clone()),
            FieldValue::Numerical(x) => json!(x),
            FieldValue::Date(t) => Value::String(format_timestamp(*t)),
            FieldValue::Missing => continue,
        };
        out.insert(name.clone(), rendered);
    }
    Value::Object(out)
}

fn render_events(events: &[TicketEvent]) -> Value {
    Value::Array(
        events
            .iter()
            .map(|e| {
                let mut o = Map::new();
                o.insert("t".into(), Value::String(format_timestamp(e.timestamp)));
                let changes: Map<String, Value> = e
                    .field_changes
                    .iter()
                    .map(|(k, (old, new))| (k.clone(), json!([old, new])))
                    .collect();
                o.insert("changes".into(), Value::Object(changes));
                if let Some(text) = &e.discussion_text {
                    o.insert("text".into(), Value::String(text.clone()));
                }
                if let Some(att) = &e.attachments_meta {
                    o.insert("attachments".into(), json!(att));
                }
                Value::Object(o)
            })
            .collect(),
    )
}

/// Serializes a ticket in the interchange format.
pub fn ticket_to_json(t: &BaseTicket) -> Value {
    json!({
        "id": t.base_id.0,
        "static": render_static(&t.static_fields),
        "events": render_events(&t.events),
        "closed_at": format_timestamp(t.closed_at),
    })
}

/// Writes a corpus in the interchange format, one ticket per line.
pub fn write_corpus<W: Write>(corpus: &Corpus, mut out: W) -> std::io::Result<()> {
    for t in corpus.tickets() {
        serde_json::to_writer(&mut out, &ticket_to_json(t))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Writes derived tickets, one per line.
pub fn write_derived<'a, W: Write>(
    derived: impl IntoIterator<Item = &'a DerivedTicket>,
    mut out: W,
) -> std::io::Result<()> {
    for d in derived {
        let v = json!({
            "base_id": d.base_id.0,
            "prefix_len": d.prefix_len,
            "observation_time": format_timestamp(d.observation_time),
            "static": render_static(&d.static_fields),
            "events": render_events(&d.events),
        });
        serde_json::to_writer(&mut out, &v)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads derived tickets written by [`write_derived`].
pub fn read_derived<R: BufRead>(
    source: R,
    schema: &Schema,
) -> Result<Vec<DerivedTicket>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in source.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |reason: String| CorpusError::MalformedDerived {
            line: i + 1,
            reason,
        };
        let raw: RawDerived = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        let base_id = id_value(&raw.base_id).ok_or_else(|| malformed("missing base_id".into()))?;
        let static_fields = typed_static(schema, &raw.static_fields).map_err(malformed)?;
        let events = typed_events(raw.events).map_err(malformed)?;
        validate_history(&events, None).map_err(malformed)?;
        let observation_time = timestamp_value(&raw.observation_time).map_err(malformed)?;
        if raw.prefix_len != events.len() {
            return Err(malformed("prefix_len does not match event count".into()));
        }
        out.push(DerivedTicket {
            base_id: TicketId(base_id),
            prefix_len: raw.prefix_len,
            events,
            static_fields,
            observation_time,
        });
    }
    Ok(out)
}

/// Parses a single interchange-format ticket, e.g. from an HTTP request body.
/// Errors carry JSON field paths.
pub fn ticket_from_json(schema: &Schema, value: &Value) -> Result<BaseTicket, Vec<String>> {
    let mut problems = Vec::new();
    let Some(obj) = value.as_object() else {
        return Err(vec!["$: expected an object".into()]);
    };
    let id = obj.get("id").and_then(id_value);
    if id.is_none() {
        problems.push("$.id: missing or empty".into());
    }
    let mut static_fields = BTreeMap::new();
    match obj.get("static") {
        None => {}
        Some(Value::Object(m)) => {
            for (name, v) in m {
                match schema.kind(name) {
                    None => problems.push(format!("$.static.{name}: unknown field")),
                    Some(kind) => match typed_value(name, kind, v) {
                        Ok(FieldValue::Missing) => {}
                        Ok(fv) => {
                            static_fields.insert(name.clone(), fv);
                        }
                        Err(e) => problems.push(format!("$.static.{name}: {e}")),
                    },
                }
            }
        }
        Some(_) => problems.push("$.static: expected an object".into()),
    }
    let mut events = Vec::new();
    match obj.get("events") {
        Some(Value::Array(items)) if !items.is_empty() => {
            for (i, item) in items.iter().enumerate() {
                match serde_json::from_value::<RawEvent>(item.clone()) {
                    Ok(raw) => match typed_events(vec![raw]) {
                        Ok(mut e) => events.append(&mut e),
                        Err(e) => problems.push(format!("$.events[{i}]: {e}")),
                    },
                    Err(e) => problems.push(format!("$.events[{i}]: {e}")),
                }
            }
        }
        _ => problems.push("$.events: expected a non-empty array".into()),
    }
    let closed_at = match obj.get("closed_at") {
        None => events.last().map(|e| e.timestamp),
        Some(v) => match timestamp_value(v) {
            Ok(t) => Some(t),
            Err(e) => {
                problems.push(format!("$.closed_at: {e}"));
                None
            }
        },
    };
    if problems.is_empty() {
        if let Err(e) = validate_history(&events, closed_at) {
            problems.push(format!("$.events: {e}"));
        }
    }
    if !problems.is_empty() {
        return Err(problems);
    }
    Ok(BaseTicket {
        base_id: TicketId(id.expect("checked")),
        static_fields,
        events,
        closed_at: closed_at.expect("checked"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> Schema {
        Schema {
            fields: BTreeMap::from([
                ("state".into(), FieldKind::Categorical),
                ("priority".into(), FieldKind::Numerical),
                ("headline".into(), FieldKind::Text),
                ("found_on".into(), FieldKind::Date),
            ]),
        }
    }

    fn record(id: &str, times: &[&str]) -> String {
        let events: Vec<Value> = times
            .iter()
            .map(|t| json!({"t": t, "changes": {"state": ["open", "working"]}, "text": "x"}))
            .collect();
        json!({
            "id": id,
            "static": {"state": "open", "priority": 2, "headline": "<b>bad</b>", "found_on": "2020-01-01"},
            "events": events,
            "closed_at": "2020-02-01T00:00:00Z",
        })
        .to_string()
    }

    #[test]
    fn three_valid_records() {
        let src = [
            record("1", &["2020-01-02T00:00:00Z"]),
            record("2", &["2020-01-02T00:00:00Z", "2020-01-03T00:00:00Z"]),
            record("3", &["2020-01-02"]),
        ]
        .join("\n");
        let (corpus, report) = ingest_reader(src.as_bytes(), &schema()).unwrap();
        assert_eq!(corpus.len(), 3);
        assert!(report.rejections.is_empty());
        assert_eq!(
            corpus.get(&"1".into()).unwrap().field("priority"),
            &FieldValue::Numerical(2.0)
        );
    }

    #[test]
    fn out_of_order_events_are_rejected() {
        let src = record("1", &["2020-01-03T00:00:00Z", "2020-01-02T00:00:00Z"]);
        let (corpus, report) = ingest_reader(src.as_bytes(), &schema()).unwrap();
        assert!(corpus.is_empty());
        assert_eq!(report.rejections[0].reason, "non-monotonic events");
    }

    #[test]
    fn bad_timestamp_is_rejected_with_reason() {
        let src = record("1", &["yesterday"]);
        let (_, report) = ingest_reader(src.as_bytes(), &schema()).unwrap();
        assert_eq!(report.rejections.len(), 1);
        assert!(report.rejections[0]
            .reason
            .contains("unparseable timestamp"));
        assert_eq!(report.rejections[0].id.as_deref(), Some("1"));
    }

    #[test]
    fn duplicate_id_is_a_hard_error() {
        let src = [record("1", &["2020-01-02"]), record("1", &["2020-01-02"])].join("\n");
        let err = ingest_reader(src.as_bytes(), &schema()).unwrap_err();
        assert!(matches!(err, CorpusError::DuplicateId(_)));
    }

    #[test]
    fn unknown_field_violates_schema() {
        let src = json!({"id": 1, "static": {"colour": "red"}, "events": [{"t": "2020-01-01"}], "closed_at": "2020-01-02"});
        let (_, report) = ingest_reader(src.to_string().as_bytes(), &schema()).unwrap();
        assert!(report.rejections[0].reason.contains("unknown field"));
    }

    #[test]
    fn write_then_ingest_reproduces_corpus() {
        let src = [
            record("1", &["2020-01-02T00:00:00Z"]),
            record("2", &["2020-01-02T10:00:00Z", "2020-01-03T00:00:00Z"]),
        ]
        .join("\n");
        let (corpus, _) = ingest_reader(src.as_bytes(), &schema()).unwrap();
        let mut buf = Vec::new();
        write_corpus(&corpus, &mut buf).unwrap();
        let (again, report) = ingest_reader(buf.as_slice(), &schema()).unwrap();
        assert!(report.rejections.is_empty());
        assert_eq!(again, corpus);
    }

    #[test]
    fn derived_round_trip() {
        let (corpus, _) = ingest_reader(
            record("9", &["2020-01-02", "2020-01-05"]).as_bytes(),
            &schema(),
        )
        .unwrap();
        let derived = corpus.expand_all();
        let mut buf = Vec::new();
        write_derived(&derived, &mut buf).unwrap();
        assert_eq!(read_derived(buf.as_slice(), &schema()).unwrap(), derived);
    }

    #[test]
    fn ticket_from_json_reports_paths() {
        let bad = json!({"static": {"priority": "high"}, "events": []});
        let problems = ticket_from_json(&schema(), &bad).unwrap_err();
        assert!(problems.iter().any(|p| p.starts_with("$.id")));
        assert!(problems.iter().any(|p| p.starts_with("$.static.priority")));
        assert!(problems.iter().any(|p| p.starts_with("$.events")));
    }
}
