//! Seeded synthetic data: numeric benchmarks and a ticket corpus with
//! learnable structure. Used by the demo pipeline, benchmarks and tests.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::classifiers::Dataset;
use crate::corpus::{BaseTicket, Corpus, FieldKind, FieldValue, Schema, TicketEvent, TicketId};
use crate::labels::{ComplexityLabel, ExpertLabelRow, LabelSet, RiskLabel};
use crate::rng;

/// Two unit-variance Gaussian classes with means -3 and +3 on the first
/// axis; remaining axes are pure noise. Rows are interleaved by class.
pub fn two_gaussians(n_per_class: usize, dim: usize, seed: u64) -> Dataset {
    assert!(dim >= 1, "two_gaussians needs at least one dimension");
    let mut rng = rng::seeded(seed);
    let mut x = Vec::with_capacity(2 * n_per_class);
    let mut y = Vec::with_capacity(2 * n_per_class);
    for _ in 0..n_per_class {
        for class in 0..2 {
            let centre = if class == 0 { -3.0 } else { 3.0 };
            let row: Vec<f64> = (0..dim)
                .map(|j| {
                    let z: f64 = rng.sample(StandardNormal);
                    if j == 0 {
                        centre + z
                    } else {
                        z
                    }
                })
                .collect();
            x.push(row);
            y.push(class);
        }
    }
    Dataset::ungrouped(x, y, 2).expect("generated dataset is consistent")
}

/// Shuffles rows with `seed` and splits off `test_fraction` of them.
pub fn train_test_split(data: &Dataset, test_fraction: f64, seed: u64) -> (Dataset, Dataset) {
    let mut rows: Vec<usize> = (0..data.len()).collect();
    rows.shuffle(&mut rng::seeded(seed));
    let n_test = (data.len() as f64 * test_fraction).round() as usize;
    let (test, train) = rows.split_at(n_test);
    (data.subset(train), data.subset(test))
}

/// A pool of well-separated 2-D clusters with a fraction of uniform-noise
/// points ("outliers") carrying random labels.
#[derive(Debug, Clone)]
pub struct PlantedPool {
    pub ids: Vec<TicketId>,
    pub features: Vec<Vec<f64>>,
    /// Cluster index as a risk class; debug/resolution mirror it.
    pub labels: Vec<LabelSet>,
    pub outlier: Vec<bool>,
}

const CLUSTERS: [(f64, f64); 3] = [(0.0, 0.0), (10.0, 0.0), (5.0, 8.0)];

/// `n` points, of which `round(n·outlier_fraction)` are drawn uniformly
/// over the clusters' bounding box (padded by 3 sd). Ids are `1..=n`.
pub fn planted_outliers(n: usize, outlier_fraction: f64, seed: u64) -> PlantedPool {
    let mut rng = rng::seeded(seed);
    let n_out = (n as f64 * outlier_fraction).round() as usize;
    let mut is_out: Vec<bool> = (0..n).map(|i| i < n_out).collect();
    is_out.shuffle(&mut rng);
    let mut features = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for &out in &is_out {
        let class = rng.random_range(0..CLUSTERS.len());
        let point = if out {
            vec![rng.random_range(-3.0..13.0), rng.random_range(-3.0..11.0)]
        } else {
            let (cx, cy) = CLUSTERS[class];
            let zx: f64 = rng.sample(StandardNormal);
            let zy: f64 = rng.sample(StandardNormal);
            vec![cx + zx, cy + zy]
        };
        features.push(point);
        let c = ComplexityLabel::new(class as i64).expect("class in range");
        labels.push(LabelSet {
            fixing_time_class: None,
            risk: RiskLabel::from_index(class),
            debug: Some(c),
            resolution: Some(c),
        });
    }
    PlantedPool {
        ids: (1..=n as u64).map(TicketId::from).collect(),
        features,
        labels,
        outlier: is_out,
    }
}

/// A ticket corpus plus matching expert labels.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub corpus: Corpus,
    pub labels: Vec<ExpertLabelRow>,
}

const COMPONENTS: [&str; 4] = ["fabric", "memory", "pcie", "power"];
const STATES: [&str; 4] = ["new", "triaged", "in_progress", "verified"];
const VOCAB: [[&str; 4]; 3] = [
    ["timing", "violation", "netlist", "silicon"],
    ["assertion", "testbench", "regression", "seed"],
    ["duplicate", "config", "waiver", "docs"],
];
const FILLER: [&str; 6] = ["the", "issue", "observed", "log", "attached", "please"];

/// `n_bases` tickets with ids `1..=n_bases`. A hidden severity drives the
/// component, priority, vocabulary, history length and time to close, so
/// every target is learnable from the features.
pub fn synthetic_corpus(n_bases: usize, seed: u64) -> SyntheticCorpus {
    let mut rng = rng::seeded(seed);
    let schema = Schema {
        fields: BTreeMap::from([
            ("component".to_owned(), FieldKind::Categorical),
            ("found_in".to_owned(), FieldKind::Categorical),
            ("opened".to_owned(), FieldKind::Date),
            ("priority".to_owned(), FieldKind::Numerical),
            ("title".to_owned(), FieldKind::Text),
        ]),
    };
    let t0: i64 = 1_600_000_000;
    let mut tickets = Vec::with_capacity(n_bases);
    let mut labels = Vec::with_capacity(n_bases);
    for i in 1..=n_bases {
        let severity = rng.random_range(0..3usize);
        let words = &VOCAB[severity];
        let component = if rng.random_bool(0.8) {
            COMPONENTS[severity]
        } else {
            COMPONENTS[rng.random_range(0..COMPONENTS.len())]
        };
        let opened = t0 + rng.random_range(0..30 * 86_400);
        let n_events = rng.random_range(1..=4 + 3 * severity);
        let gap_scale = [3_600.0, 43_200.0, 172_800.0][severity];
        let mut t = opened;
        let mut events = Vec::with_capacity(n_events);
        for k in 0..n_events {
            let mut text: Vec<&str> = (0..3)
                .map(|_| FILLER[rng.random_range(0..FILLER.len())])
                .collect();
            text.push(words[rng.random_range(0..words.len())]);
            let mut ev = TicketEvent::at(t).with_text(text.join(" "));
            let old = (k > 0).then(|| STATES[(k - 1) % STATES.len()]);
            ev = ev.with_change("state", old, Some(STATES[k % STATES.len()]));
            if rng.random_bool(0.1) {
                ev.attachments_meta = Some(vec![format!("trace_{i}_{k}.log")]);
            }
            events.push(ev);
            t += (gap_scale * rng.random_range(0.5..1.5)) as i64;
        }
        let last = events.last().map_or(opened, |e| e.timestamp);
        let closed_at = last + (gap_scale * rng.random_range(1.0..4.0)) as i64;
        let mut static_fields = BTreeMap::from([
            (
                "component".to_owned(),
                FieldValue::Categorical(component.to_owned()),
            ),
            ("opened".to_owned(), FieldValue::Date(opened)),
            (
                "priority".to_owned(),
                FieldValue::Numerical((severity + 1) as f64 + rng.random_range(-0.5..0.5)),
            ),
            (
                "title".to_owned(),
                FieldValue::Text(format!(
                    "{} in {component}",
                    words[rng.random_range(0..words.len())]
                )),
            ),
        ]);
        static_fields.insert(
            "found_in".to_owned(),
            if rng.random_bool(0.95) {
                FieldValue::Missing
            } else {
                FieldValue::Categorical("rtl".to_owned())
            },
        );
        let id = TicketId::from(i as u64);
        tickets.push(BaseTicket {
            base_id: id.clone(),
            static_fields,
            events,
            closed_at,
        });
        let risk = RiskLabel::from_index(2 * severity + usize::from(rng.random_bool(0.2)));
        let debug = (3 * severity as i64 + rng.random_range(0..=2)).min(10);
        let resolution = (2 * severity as i64 + rng.random_range(0..=3)).min(10);
        labels.push(ExpertLabelRow {
            base_id: id,
            risk,
            debug: ComplexityLabel::new(debug).ok(),
            resolution: ComplexityLabel::new(resolution).ok(),
        });
    }
    let corpus = Corpus::new(schema, tickets).expect("synthetic ids are unique");
    SyntheticCorpus { corpus, labels }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_are_seed_deterministic() {
        assert_eq!(two_gaussians(20, 3, 7).x, two_gaussians(20, 3, 7).x);
        assert_eq!(
            planted_outliers(100, 0.05, 1).features,
            planted_outliers(100, 0.05, 1).features
        );
        let a = synthetic_corpus(30, 4);
        let b = synthetic_corpus(30, 4);
        assert_eq!(a.corpus.tickets(), b.corpus.tickets());
        assert_eq!(a.labels, b.labels);
    }

    #[test]
    fn planted_pool_has_requested_outlier_count() {
        let p = planted_outliers(400, 0.05, 3);
        assert_eq!(p.outlier.iter().filter(|o| **o).count(), 20);
        assert_eq!(p.ids.len(), 400);
    }

    #[test]
    fn split_sizes() {
        let d = two_gaussians(50, 1, 0);
        let (train, test) = train_test_split(&d, 0.3, 1);
        assert_eq!((train.len(), test.len()), (70, 30));
    }
}
