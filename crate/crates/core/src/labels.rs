//! Prediction targets: fixing-time classes derived from the data, and the
//! expert-provided risk and complexity labels.

use std::collections::BTreeMap;
use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{BaseTicket, Corpus, DerivedTicket, TicketId};

pub const SECONDS_PER_DAY: f64 = 86_400.0;

/// Quantiles that split fixing times into five classes.
pub const FIXING_TIME_QUANTILES: [f64; 4] = [0.2, 0.4, 0.6, 0.8];

#[derive(Debug, Error)]
pub enum LabelError {
    #[error("ticket `{0}` is observed after it was closed")]
    NegativeFixingTime(TicketId),
    #[error("derived ticket `{derived}` does not come from base `{base}`")]
    WrongBase { derived: TicketId, base: TicketId },
    #[error("binning needs at least 5 training values, got {0}")]
    TooFewValues(usize),
    #[error("fixing time must be finite and non-negative, got {0}")]
    InvalidDays(f64),
    #[error("label for unknown base id `{0}`")]
    UnknownBaseId(TicketId),
    #[error("complexity {0} outside 0..=10")]
    ComplexityRange(i64),
    #[error("unknown risk class `{0}`")]
    UnknownRisk(String),
    #[error("unknown target `{0}`")]
    UnknownTarget(String),
    #[error("label file line {line}: {reason}")]
    Format { line: usize, reason: String },
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

/// The four prediction targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    TimeToFix,
    Risk,
    Debug,
    Resolution,
}

impl Target {
    pub const ALL: [Target; 4] = [
        Target::TimeToFix,
        Target::Risk,
        Target::Debug,
        Target::Resolution,
    ];
    /// Targets labeled by experts, in proposal tie-break order.
    pub const EXPERT: [Target; 3] = [Target::Risk, Target::Debug, Target::Resolution];

    pub fn name(self) -> &'static str {
        match self {
            Target::TimeToFix => "time_to_fix",
            Target::Risk => "risk",
            Target::Debug => "debug",
            Target::Resolution => "resolution",
        }
    }

    pub fn n_classes(self) -> usize {
        match self {
            Target::TimeToFix => FIXING_TIME_QUANTILES.len() + 1,
            Target::Risk => RiskLabel::ALL.len(),
            Target::Debug | Target::Resolution => usize::from(ComplexityLabel::MAX) + 1,
        }
    }

    pub fn class_names(self) -> Vec<String> {
        match self {
            Target::TimeToFix => (0..self.n_classes()).map(|i| format!("q{i}")).collect(),
            Target::Risk => RiskLabel::ALL.iter().map(|r| r.name().to_owned()).collect(),
            Target::Debug | Target::Resolution => {
                (0..self.n_classes()).map(|i| i.to_string()).collect()
            }
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Target {
    type Err = LabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "time_to_fix" | "time-to-fix" | "fixing_time" => Ok(Target::TimeToFix),
            "risk" => Ok(Target::Risk),
            "debug" => Ok(Target::Debug),
            "resolution" => Ok(Target::Resolution),
            other => Err(LabelError::UnknownTarget(other.to_owned())),
        }
    }
}

/// Final resolution used as a proxy for how critical a bug is, most
/// critical first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskLabel {
    HardwareFix,
    CodeFix,
    SetupFix,
    Waiver,
    UserError,
    Duplicate,
}

impl RiskLabel {
    pub const ALL: [RiskLabel; 6] = [
        RiskLabel::HardwareFix,
        RiskLabel::CodeFix,
        RiskLabel::SetupFix,
        RiskLabel::Waiver,
        RiskLabel::UserError,
        RiskLabel::Duplicate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RiskLabel::HardwareFix => "hardware_fix",
            RiskLabel::CodeFix => "code_fix",
            RiskLabel::SetupFix => "setup_fix",
            RiskLabel::Waiver => "waiver",
            RiskLabel::UserError => "user_error",
            RiskLabel::Duplicate => "duplicate",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

impl FromStr for RiskLabel {
    type Err = LabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace([' ', '-'], "_");
        RiskLabel::ALL
            .into_iter()
            .find(|r| r.name() == norm)
            .ok_or_else(|| LabelError::UnknownRisk(s.to_owned()))
    }
}

/// Complexity on a 0 (low) ..= 10 (high) scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct ComplexityLabel(u8);

impl ComplexityLabel {
    pub const MAX: u8 = 10;

    pub fn new(v: i64) -> Result<Self, LabelError> {
        if (0..=i64::from(Self::MAX)).contains(&v) {
            Ok(Self(v as u8))
        } else {
            Err(LabelError::ComplexityRange(v))
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }
}

impl<'de> Deserialize<'de> for ComplexityLabel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = i64::deserialize(d)?;
        ComplexityLabel::new(v).map_err(serde::de::Error::custom)
    }
}

/// Targets of one ticket; any of them may be unknown.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixing_time_class: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub risk: Option<RiskLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub debug: Option<ComplexityLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<ComplexityLabel>,
}

impl LabelSet {
    /// Class index for `target`, if labeled.
    pub fn class(&self, target: Target) -> Option<usize> {
        match target {
            Target::TimeToFix => self.fixing_time_class.map(usize::from),
            Target::Risk => self.risk.map(RiskLabel::index),
            Target::Debug => self.debug.map(|c| usize::from(c.value())),
            Target::Resolution => self.resolution.map(|c| usize::from(c.value())),
        }
    }

    /// Sets `target` from a class index.
    pub fn set_class(&mut self, target: Target, class: usize) -> Result<(), LabelError> {
        match target {
            Target::TimeToFix => {
                if class >= Target::TimeToFix.n_classes() {
                    return Err(LabelError::Format {
                        line: 0,
                        reason: format!("fixing-time class {class} out of range"),
                    });
                }
                self.fixing_time_class = Some(class as u8);
            }
            Target::Risk => {
                self.risk = Some(
                    RiskLabel::from_index(class)
                        .ok_or_else(|| LabelError::UnknownRisk(class.to_string()))?,
                )
            }
            Target::Debug => self.debug = Some(ComplexityLabel::new(class as i64)?),
            Target::Resolution => self.resolution = Some(ComplexityLabel::new(class as i64)?),
        }
        Ok(())
    }

    pub fn has_all_expert(&self) -> bool {
        Target::EXPERT.iter().all(|t| self.class(*t).is_some())
    }

    /// Expert targets still missing, in tie-break order.
    pub fn missing_expert(&self) -> Vec<Target> {
        Target::EXPERT
            .into_iter()
            .filter(|t| self.class(*t).is_none())
            .collect()
    }

    /// Expert targets present in `fragment` overwrite those here.
    pub fn merge(&mut self, fragment: &LabelSet) {
        if fragment.risk.is_some() {
            self.risk = fragment.risk;
        }
        if fragment.debug.is_some() {
            self.debug = fragment.debug;
        }
        if fragment.resolution.is_some() {
            self.resolution = fragment.resolution;
        }
    }

    pub fn is_empty_expert(&self) -> bool {
        self.risk.is_none() && self.debug.is_none() && self.resolution.is_none()
    }
}

/// Days from the observation point of `derived` until `base` was closed.
pub fn fixing_time(derived: &DerivedTicket, base: &BaseTicket) -> Result<f64, LabelError> {
    if derived.base_id != base.base_id {
        return Err(LabelError::WrongBase {
            derived: derived.base_id.clone(),
            base: base.base_id.clone(),
        });
    }
    let secs = base.closed_at - derived.observation_time;
    if secs < 0 {
        return Err(LabelError::NegativeFixingTime(base.base_id.clone()));
    }
    Ok(secs as f64 / SECONDS_PER_DAY)
}

/// Lower empirical quantile: element `ceil(q * n) - 1` of the sorted sample.
pub fn lower_quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    // guard against q * n landing a hair above an integer
    let rank = ((q * n as f64) - 1e-9).ceil().max(1.0) as usize;
    sorted[rank.min(n) - 1]
}

/// Fixing-time class boundaries, fitted on training tickets only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixingTimeBinning {
    pub quantiles: Vec<f64>,
    /// Ascending day values.
    pub boundaries: Vec<f64>,
}

impl FixingTimeBinning {
    pub fn fit(days: &[f64]) -> Result<Self, LabelError> {
        if days.len() < 5 {
            return Err(LabelError::TooFewValues(days.len()));
        }
        if let Some(&bad) = days.iter().find(|d| !d.is_finite() || **d < 0.0) {
            return Err(LabelError::InvalidDays(bad));
        }
        let mut sorted = days.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self {
            quantiles: FIXING_TIME_QUANTILES.to_vec(),
            boundaries: FIXING_TIME_QUANTILES
                .iter()
                .map(|&q| lower_quantile(&sorted, q))
                .collect(),
        })
    }

    /// Class `i` is the first interval whose upper boundary is >= `days`;
    /// values on a boundary fall into the lower class.
    pub fn assign_class(&self, days: f64) -> u8 {
        self.boundaries
            .iter()
            .position(|&b| days <= b)
            .unwrap_or(self.boundaries.len()) as u8
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpertLabelRow {
    pub base_id: TicketId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub risk: Option<RiskLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub debug: Option<ComplexityLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<ComplexityLabel>,
}

#[derive(Deserialize)]
struct RawLabelRow {
    base_id: serde_json::Value,
    #[serde(default)]
    risk: Option<String>,
    #[serde(default)]
    debug: Option<i64>,
    #[serde(default)]
    resolution: Option<i64>,
}

/// Expert labels keyed by base ticket. Every derived ticket of a base
/// shares its base's labels.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpertLabels {
    labels: BTreeMap<TicketId, LabelSet>,
}

impl ExpertLabels {
    /// Reads `{"base_id", "risk", "debug", "resolution"}` lines; any subset
    /// of the three targets may be present. Rows must name corpus tickets.
    pub fn from_reader<R: BufRead>(reader: R, corpus: &Corpus) -> Result<Self, LabelError> {
        let mut labels: BTreeMap<TicketId, LabelSet> = BTreeMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fmt_err = |reason: String| LabelError::Format {
                line: i + 1,
                reason,
            };
            let raw: RawLabelRow =
                serde_json::from_str(&line).map_err(|e| fmt_err(e.to_string()))?;
            let id = match &raw.base_id {
                serde_json::Value::String(s) => TicketId(s.clone()),
                serde_json::Value::Number(n) => TicketId(n.to_string()),
                _ => return Err(fmt_err("base_id must be a string or number".into())),
            };
            if corpus.get(&id).is_none() {
                return Err(LabelError::UnknownBaseId(id));
            }
            let fragment = LabelSet {
                fixing_time_class: None,
                risk: raw.risk.as_deref().map(str::parse).transpose()?,
                debug: raw.debug.map(ComplexityLabel::new).transpose()?,
                resolution: raw.resolution.map(ComplexityLabel::new).transpose()?,
            };
            labels.entry(id).or_default().merge(&fragment);
        }
        Ok(Self { labels })
    }

    pub fn get(&self, id: &TicketId) -> LabelSet {
        self.labels.get(id).copied().unwrap_or_default()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&TicketId, &LabelSet)> {
        self.labels.iter()
    }

    pub fn insert(&mut self, id: TicketId, labels: LabelSet) {
        self.labels.insert(id, labels);
    }

    pub fn rows(&self) -> Vec<ExpertLabelRow> {
        self.labels
            .iter()
            .map(|(id, l)| ExpertLabelRow {
                base_id: id.clone(),
                risk: l.risk,
                debug: l.debug,
                resolution: l.resolution,
            })
            .collect()
    }
}

/// Derived tickets paired with their labels: the base's expert labels plus
/// a per-timestamp fixing-time class.
pub fn attach_expert_labels(
    corpus: &Corpus,
    expert: &ExpertLabels,
    binning: Option<&FixingTimeBinning>,
) -> Result<Vec<(DerivedTicket, LabelSet)>, LabelError> {
    let mut out = Vec::new();
    for base in corpus.tickets() {
        let shared = expert.get(&base.base_id);
        for d in base.expand() {
            let mut labels = shared;
            if let Some(b) = binning {
                labels.fixing_time_class = Some(b.assign_class(fixing_time(&d, base)?));
            }
            out.push((d, labels));
        }
    }
    Ok(out)
}

/// Optional user-defined reduction of the 0..=10 complexity scale.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplexityCoarsening {
    /// `map[v]` is the coarse class of complexity `v`.
    pub map: [u8; 11],
}

impl ComplexityCoarsening {
    pub fn n_classes(&self) -> usize {
        self.map.iter().map(|&c| usize::from(c)).max().unwrap_or(0) + 1
    }

    pub fn apply(&self, c: ComplexityLabel) -> usize {
        usize::from(self.map[usize::from(c.value())])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Schema, TicketEvent};

    fn base(times: &[i64], closed_at: i64) -> BaseTicket {
        BaseTicket {
            base_id: TicketId::from(1u64),
            static_fields: BTreeMap::new(),
            events: times.iter().map(|&t| TicketEvent::at(t)).collect(),
            closed_at,
        }
    }

    #[test]
    fn fixing_time_examples() {
        let b = base(&[0, 86_400], 86_400);
        assert_eq!(fixing_time(&b.prefix(2), &b).unwrap(), 0.0);
        assert_eq!(fixing_time(&b.prefix(1), &b).unwrap(), 1.0);
        let b = base(&[0], 48 * 3600);
        assert_eq!(fixing_time(&b.prefix(1), &b).unwrap(), 2.0);
    }

    #[test]
    fn fixing_time_shrinks_along_the_history() {
        let b = base(&[0, 1000, 50_000], 200_000);
        let days: Vec<f64> = b
            .expand()
            .iter()
            .map(|d| fixing_time(d, &b).unwrap())
            .collect();
        assert!(days.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn negative_fixing_time_is_an_error() {
        let mut b = base(&[0, 10], 10);
        let d = b.prefix(2);
        b.closed_at = 5;
        assert!(matches!(
            fixing_time(&d, &b),
            Err(LabelError::NegativeFixingTime(_))
        ));
    }

    #[test]
    fn uniform_sample_boundaries() {
        let days: Vec<f64> = (1..=100).map(f64::from).collect();
        let b = FixingTimeBinning::fit(&days).unwrap();
        assert_eq!(b.boundaries, vec![20.0, 40.0, 60.0, 80.0]);
        assert_eq!(b.assign_class(20.0), 0);
        assert_eq!(b.assign_class(20.5), 1);
        assert_eq!(b.assign_class(1000.0), 4);
    }

    #[test]
    fn binning_needs_five_values() {
        assert!(FixingTimeBinning::fit(&[1.0, 2.0, 3.0, 4.0]).is_err());
    }

    #[test]
    fn risk_parsing() {
        assert_eq!("waiver".parse::<RiskLabel>().unwrap(), RiskLabel::Waiver);
        assert_eq!(
            "Hardware fix".parse::<RiskLabel>().unwrap(),
            RiskLabel::HardwareFix
        );
        assert!("severity".parse::<RiskLabel>().is_err());
        assert_eq!(RiskLabel::ALL.len(), 6);
    }

    fn corpus() -> Corpus {
        let mut b = base(&[0, 10, 20, 30], 40);
        b.base_id = TicketId::from(5u64);
        Corpus::new(Schema::default(), vec![b]).unwrap()
    }

    #[test]
    fn labels_propagate_to_every_prefix() {
        let c = corpus();
        let expert =
            ExpertLabels::from_reader(r#"{"base_id": 5, "risk": "waiver"}"#.as_bytes(), &c)
                .unwrap();
        let labeled = attach_expert_labels(&c, &expert, None).unwrap();
        assert_eq!(labeled.len(), 4);
        assert!(labeled
            .iter()
            .all(|(_, l)| l.risk == Some(RiskLabel::Waiver)));
        assert!(labeled.iter().all(|(_, l)| l.debug.is_none()));
    }

    #[test]
    fn label_file_errors() {
        let c = corpus();
        assert!(matches!(
            ExpertLabels::from_reader(r#"{"base_id": "5", "debug": 11}"#.as_bytes(), &c),
            Err(LabelError::ComplexityRange(11))
        ));
        assert!(matches!(
            ExpertLabels::from_reader(r#"{"base_id": "6", "debug": 1}"#.as_bytes(), &c),
            Err(LabelError::UnknownBaseId(_))
        ));
        let empty = ExpertLabels::from_reader("".as_bytes(), &c).unwrap();
        assert!(empty.is_empty());
        let labeled = attach_expert_labels(&c, &empty, None).unwrap();
        assert!(labeled.iter().all(|(_, l)| l.is_empty_expert()));
    }
}
