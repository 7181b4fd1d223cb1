//! Files shared by the pipeline steps. `featurize` and `label-extract`
//! write into one directory; later steps read the joined table from it.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use triage_core::corpus::split_holdout;
use triage_core::features::FeatureSpec;
use triage_core::{Corpus, Dataset, LabelSet, Target, TicketId};

pub const FEATURE_SPEC: &str = "feature_spec.json";
pub const FEATURES: &str = "features.jsonl";
pub const LABELS: &str = "labels.jsonl";
pub const BINNING: &str = "binning.json";
pub const SPLIT: &str = "split.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitFile {
    pub train: Vec<TicketId>,
    pub test: Vec<TicketId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

impl SplitFile {
    /// Every tenth base ticket in id order goes to the test side.
    pub fn holdout(corpus: &Corpus) -> Self {
        let h = split_holdout(corpus.ids());
        Self {
            train: h.train,
            test: h.test,
            warning: h.warning,
        }
    }

    pub fn side_of(&self) -> BTreeMap<TicketId, Split> {
        self.train
            .iter()
            .map(|id| (id.clone(), Split::Train))
            .chain(self.test.iter().map(|id| (id.clone(), Split::Test)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub base_id: TicketId,
    pub prefix_len: usize,
    pub split: Split,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRow {
    pub base_id: TicketId,
    pub prefix_len: usize,
    pub split: Split,
    pub labels: LabelSet,
}

/// One derived ticket with features and labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub base_id: TicketId,
    pub prefix_len: usize,
    pub split: Split,
    pub x: Vec<f64>,
    pub labels: LabelSet,
}

/// Features joined with labels, as read back from a work directory.
#[derive(Debug, Clone)]
pub struct Table {
    pub dir: PathBuf,
    pub spec: FeatureSpec,
    pub spec_hash: String,
    pub rows: Vec<Row>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_jsonl<'a, T: Serialize + 'a>(
    path: &Path,
    rows: impl IntoIterator<Item = &'a T>,
) -> anyhow::Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut out = BufWriter::new(file);
    for r in rows {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> anyhow::Result<Vec<T>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push(
            serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), i + 1))?,
        );
    }
    Ok(rows)
}

impl Table {
    pub fn load(dir: &Path) -> anyhow::Result<Self> {
        let spec: FeatureSpec =
            read_json(&dir.join(FEATURE_SPEC)).context("run `triage featurize` first")?;
        let features: Vec<FeatureRow> = read_jsonl(&dir.join(FEATURES))?;
        let labels: Vec<LabelRow> =
            read_jsonl(&dir.join(LABELS)).context("run `triage label-extract` first")?;
        let mut by_key: BTreeMap<(TicketId, usize), LabelRow> = labels
            .into_iter()
            .map(|l| ((l.base_id.clone(), l.prefix_len), l))
            .collect();
        let mut rows = Vec::with_capacity(features.len());
        for f in features {
            if f.x.len() != spec.output_dim {
                bail!(
                    "feature row {}#{} has width {}, spec says {}",
                    f.base_id,
                    f.prefix_len,
                    f.x.len(),
                    spec.output_dim
                );
            }
            let Some(l) = by_key.remove(&(f.base_id.clone(), f.prefix_len)) else {
                bail!(
                    "no label row for {}#{}; were both files built from the same corpus?",
                    f.base_id,
                    f.prefix_len
                );
            };
            if l.split != f.split {
                bail!(
                    "{} is on different split sides in features and labels",
                    f.base_id
                );
            }
            rows.push(Row {
                base_id: f.base_id,
                prefix_len: f.prefix_len,
                split: f.split,
                x: f.x,
                labels: l.labels,
            });
        }
        if let Some(((id, len), _)) = by_key.into_iter().next() {
            bail!("label row {id}#{len} has no feature row");
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            spec_hash: spec.hash(),
            spec,
            rows,
        })
    }

    /// Rows on `split` that carry a label for `target`.
    pub fn labeled(&self, split: Split, target: Target) -> impl Iterator<Item = (&Row, usize)> {
        self.rows
            .iter()
            .filter(move |r| r.split == split)
            .filter_map(move |r| r.labels.class(target).map(|c| (r, c)))
    }

    pub fn dataset(&self, split: Split, target: Target) -> anyhow::Result<Dataset> {
        let (mut x, mut y, mut groups) = (Vec::new(), Vec::new(), Vec::new());
        for (r, c) in self.labeled(split, target) {
            x.push(r.x.clone());
            y.push(c);
            groups.push(r.base_id.clone());
        }
        if x.is_empty() {
            bail!("no {split:?} rows carry a {target} label");
        }
        Ok(Dataset::new(x, y, target.class_names(), groups)?)
    }

    /// Classes of `target` seen among training rows.
    pub fn observed_classes(&self, target: Target) -> Vec<usize> {
        let seen: BTreeSet<usize> = self.labeled(Split::Train, target).map(|(_, c)| c).collect();
        seen.into_iter().collect()
    }

    /// The whole-history row of every base ticket on `split`, in id order.
    pub fn full_tickets(&self, split: Split) -> Vec<&Row> {
        let mut last: BTreeMap<&TicketId, &Row> = BTreeMap::new();
        for r in self.rows.iter().filter(|r| r.split == split) {
            let e = last.entry(&r.base_id).or_insert(r);
            if r.prefix_len > e.prefix_len {
                *e = r;
            }
        }
        last.into_values().collect()
    }
}
