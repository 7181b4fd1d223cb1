//! Ticket data model, ingestion, history expansion and leak-free splits.

mod ingest;
mod split;

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ingest::{
    format_timestamp, ingest_corpus, ingest_reader, parse_timestamp, read_derived,
    ticket_from_json, ticket_to_json, write_corpus, write_derived, FieldKind, IngestReport,
    Rejection, Schema,
};
pub use split::{group_kfold, sort_ids, split_holdout, Holdout, SplitAssignment};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("duplicate base id `{0}`")]
    DuplicateId(TicketId),
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("group k-fold needs 2 <= k <= {n_ids}, got k = {k}")]
    InvalidFoldCount { k: usize, n_ids: usize },
    #[error("malformed derived ticket on line {line}: {reason}")]
    MalformedDerived { line: usize, reason: String },
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

/// Identifier of a base ticket.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TicketId(pub String);

impl TicketId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub(crate) fn numeric(&self) -> Option<u128> {
        if self.0.is_empty() || !self.0.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        self.0.parse().ok()
    }
}

impl fmt::Display for TicketId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for TicketId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

impl From<u64> for TicketId {
    fn from(n: u64) -> Self {
        Self(n.to_string())
    }
}

/// Total order used for the hold-out rule: numeric when every id is a
/// non-negative integer, lexicographic otherwise.
pub(crate) fn compare_ids(all_numeric: bool, a: &TicketId, b: &TicketId) -> Ordering {
    if all_numeric {
        match (a.numeric(), b.numeric()) {
            (Some(x), Some(y)) => x.cmp(&y).then_with(|| a.0.cmp(&b.0)),
            _ => a.0.cmp(&b.0),
        }
    } else {
        a.0.cmp(&b.0)
    }
}

/// A typed static field value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldValue {
    Categorical(String),
    Numerical(f64),
    Text(String),
    /// UTC seconds.
    Date(i64),
    Missing,
}

impl FieldValue {
    pub fn is_missing(&self) -> bool {
        matches!(self, FieldValue::Missing)
    }
}

/// One timestamped change in a ticket's history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TicketEvent {
    /// UTC seconds.
    pub timestamp: i64,
    /// field name -> (old value, new value)
    pub field_changes: BTreeMap<String, (Option<String>, Option<String>)>,
    pub discussion_text: Option<String>,
    pub attachments_meta: Option<Vec<String>>,
}

impl TicketEvent {
    pub fn at(timestamp: i64) -> Self {
        Self {
            timestamp,
            field_changes: BTreeMap::new(),
            discussion_text: None,
            attachments_meta: None,
        }
    }

    pub fn with_text(mut self, text: impl Into<String>) -> Self {
        self.discussion_text = Some(text.into());
        self
    }

    pub fn with_change(
        mut self,
        field: impl Into<String>,
        old: Option<&str>,
        new: Option<&str>,
    ) -> Self {
        self.field_changes.insert(
            field.into(),
            (old.map(str::to_owned), new.map(str::to_owned)),
        );
        self
    }
}

/// A completed ticket with its full history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseTicket {
    pub base_id: TicketId,
    pub static_fields: BTreeMap<String, FieldValue>,
    /// Non-empty, ordered by timestamp.
    pub events: Vec<TicketEvent>,
    /// UTC seconds; not earlier than the last event.
    pub closed_at: i64,
}

impl BaseTicket {
    /// One derived ticket per prefix of the history, shortest first.
    pub fn expand(&self) -> Vec<DerivedTicket> {
        (1..=self.events.len()).map(|k| self.prefix(k)).collect()
    }

    /// The "open" ticket observed right after event `prefix_len`.
    ///
    /// Panics if `prefix_len` is 0 or exceeds the number of events.
    pub fn prefix(&self, prefix_len: usize) -> DerivedTicket {
        assert!(
            (1..=self.events.len()).contains(&prefix_len),
            "prefix length {prefix_len} outside 1..={}",
            self.events.len()
        );
        let events = self.events[..prefix_len].to_vec();
        DerivedTicket {
            base_id: self.base_id.clone(),
            prefix_len,
            observation_time: events[prefix_len - 1].timestamp,
            events,
            static_fields: self.static_fields.clone(),
        }
    }

    /// The derived ticket that carries the whole history.
    pub fn full(&self) -> DerivedTicket {
        self.prefix(self.events.len())
    }

    pub fn field(&self, name: &str) -> &FieldValue {
        self.static_fields.get(name).unwrap_or(&FieldValue::Missing)
    }
}

/// Expands one base ticket into its prefix tickets.
pub fn expand_ticket(base: &BaseTicket) -> Vec<DerivedTicket> {
    base.expand()
}

/// An "open" ticket made from the first `prefix_len` events of a base ticket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedTicket {
    pub base_id: TicketId,
    pub prefix_len: usize,
    pub events: Vec<TicketEvent>,
    pub static_fields: BTreeMap<String, FieldValue>,
    pub observation_time: i64,
}

impl DerivedTicket {
    /// Key under which precomputed embeddings of this ticket are stored.
    pub fn key(&self) -> String {
        format!("{}:{}", self.base_id, self.prefix_len)
    }

    pub fn field(&self, name: &str) -> &FieldValue {
        self.static_fields.get(name).unwrap_or(&FieldValue::Missing)
    }

    /// Value of a categorical field as of the observation time: the newest
    /// in-prefix change wins over the static value.
    pub fn categorical_at_observation(&self, name: &str) -> Option<&str> {
        for event in self.events.iter().rev() {
            if let Some((_, new)) = event.field_changes.get(name) {
                return new.as_deref();
            }
        }
        match self.field(name) {
            FieldValue::Categorical(v) => Some(v.as_str()),
            _ => None,
        }
    }

    /// Number of field changes recorded in the prefix.
    pub fn change_count(&self) -> usize {
        self.events.iter().map(|e| e.field_changes.len()).sum()
    }

    /// Discussion text of the prefix, one entry per line.
    pub fn discussion(&self) -> String {
        let parts: Vec<&str> = self
            .events
            .iter()
            .filter_map(|e| e.discussion_text.as_deref())
            .filter(|t| !t.is_empty())
            .collect();
        parts.join("\n")
    }
}

/// An ingested, validated ticket collection. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub schema: Schema,
    tickets: Vec<BaseTicket>,
    index: HashMap<TicketId, usize>,
}

impl Corpus {
    /// Builds a corpus, rejecting duplicate ids.
    pub fn new(schema: Schema, tickets: Vec<BaseTicket>) -> Result<Self, CorpusError> {
        let mut index = HashMap::with_capacity(tickets.len());
        for (i, t) in tickets.iter().enumerate() {
            if index.insert(t.base_id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateId(t.base_id.clone()));
            }
        }
        Ok(Self {
            schema,
            tickets,
            index,
        })
    }

    pub fn tickets(&self) -> &[BaseTicket] {
        &self.tickets
    }

    pub fn len(&self) -> usize {
        self.tickets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tickets.is_empty()
    }

    pub fn get(&self, id: &TicketId) -> Option<&BaseTicket> {
        self.index.get(id).map(|&i| &self.tickets[i])
    }

    pub fn ids(&self) -> impl Iterator<Item = &TicketId> {
        self.tickets.iter().map(|t| &t.base_id)
    }

    /// Sub-corpus restricted to `ids`, keeping corpus order.
    pub fn subset<'a>(&self, ids: impl IntoIterator<Item = &'a TicketId>) -> Corpus {
        let wanted: std::collections::HashSet<&TicketId> = ids.into_iter().collect();
        let tickets: Vec<BaseTicket> = self
            .tickets
            .iter()
            .filter(|t| wanted.contains(&t.base_id))
            .cloned()
            .collect();
        Corpus::new(self.schema.clone(), tickets).expect("subset of a valid corpus")
    }

    /// All derived tickets, grouped by base ticket in corpus order.
    pub fn expand_all(&self) -> Vec<DerivedTicket> {
        self.tickets.iter().flat_map(BaseTicket::expand).collect()
    }
}
