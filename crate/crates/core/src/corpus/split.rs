use std::collections::BTreeSet;

use log::warn;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{compare_ids, Corpus, CorpusError, TicketId};
use crate::rng;

/// Sorts ids ascending: numerically if every id is an unsigned integer,
/// lexicographically otherwise.
pub fn sort_ids(ids: &mut [TicketId]) {
    let all_numeric = ids.iter().all(|id| id.numeric().is_some());
    ids.sort_by(|a, b| compare_ids(all_numeric, a, b));
}

/// Hold-out split: every 10th id in sorted order is a test id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Holdout {
    pub train: Vec<TicketId>,
    pub test: Vec<TicketId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

/// Assigns positions 10, 20, 30, ... (1-indexed, after sorting) to the test side.
pub fn split_holdout<'a>(ids: impl IntoIterator<Item = &'a TicketId>) -> Holdout {
    let mut sorted: Vec<TicketId> = ids.into_iter().cloned().collect();
    sort_ids(&mut sorted);
    let mut train = Vec::with_capacity(sorted.len());
    let mut test = Vec::with_capacity(sorted.len() / 10);
    for (i, id) in sorted.into_iter().enumerate() {
        if (i + 1) % 10 == 0 {
            test.push(id);
        } else {
            train.push(id);
        }
    }
    let warning = test.is_empty().then(|| {
        let msg = format!(
            "corpus has {} base tickets; fewer than 10 leaves the test set empty",
            train.len()
        );
        warn!("{msg}");
        msg
    });
    Holdout {
        train,
        test,
        warning,
    }
}

/// Shuffles ids with `seed` and deals them into `k` folds whose sizes differ
/// by at most one. Input order does not matter.
pub fn group_kfold(
    train_ids: &[TicketId],
    k: usize,
    seed: u64,
) -> Result<Vec<Vec<TicketId>>, CorpusError> {
    if k < 2 || k > train_ids.len() {
        return Err(CorpusError::InvalidFoldCount {
            k,
            n_ids: train_ids.len(),
        });
    }
    let mut ids = train_ids.to_vec();
    sort_ids(&mut ids);
    ids.dedup();
    if k > ids.len() {
        return Err(CorpusError::InvalidFoldCount {
            k,
            n_ids: ids.len(),
        });
    }
    ids.shuffle(&mut rng::seeded(seed));
    let n = ids.len();
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut it = ids.into_iter();
    for f in 0..k {
        let size = base + usize::from(f < extra);
        folds.push(it.by_ref().take(size).collect());
    }
    Ok(folds)
}

/// Full assignment of base ids to train/test and to CV folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub train_base_ids: BTreeSet<TicketId>,
    pub test_base_ids: BTreeSet<TicketId>,
    pub cv_folds: Vec<BTreeSet<TicketId>>,
}

impl SplitAssignment {
    /// Hold-out split followed by group k-fold over the training ids.
    pub fn build(corpus: &Corpus, k: usize, seed: u64) -> Result<Self, CorpusError> {
        let holdout = split_holdout(corpus.ids());
        let folds = group_kfold(&holdout.train, k, seed)?;
        Ok(Self {
            train_base_ids: holdout.train.into_iter().collect(),
            test_base_ids: holdout.test.into_iter().collect(),
            cv_folds: folds.into_iter().map(|f| f.into_iter().collect()).collect(),
        })
    }

    /// Training and validation ids for CV rotation `fold`.
    pub fn rotation(&self, fold: usize) -> (BTreeSet<TicketId>, &BTreeSet<TicketId>) {
        let train = self
            .cv_folds
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != fold)
            .flat_map(|(_, f)| f.iter().cloned())
            .collect();
        (train, &self.cv_folds[fold])
    }

    /// Checks that no base id sits on two sides of any boundary and that the
    /// folds partition the training ids.
    pub fn is_leak_free(&self) -> bool {
        if !self.train_base_ids.is_disjoint(&self.test_base_ids) {
            return false;
        }
        let mut union = BTreeSet::new();
        for (i, f) in self.cv_folds.iter().enumerate() {
            if !f.is_disjoint(&self.test_base_ids) {
                return false;
            }
            for g in &self.cv_folds[i + 1..] {
                if !f.is_disjoint(g) {
                    return false;
                }
            }
            union.extend(f.iter().cloned());
        }
        union == self.train_base_ids
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(range: std::ops::RangeInclusive<u64>) -> Vec<TicketId> {
        range.map(TicketId::from).collect()
    }

    #[test]
    fn every_tenth_of_twenty() {
        let h = split_holdout(&ids(1..=20));
        assert_eq!(h.test, vec![TicketId::from(10u64), TicketId::from(20u64)]);
        assert_eq!(h.train.len(), 18);
        assert!(h.warning.is_none());
    }

    #[test]
    fn numeric_ids_sort_numerically() {
        // lexicographic order would put "10" second
        let shuffled: Vec<TicketId> = [3u64, 10, 1, 7, 2, 9, 4, 8, 6, 5]
            .into_iter()
            .map(TicketId::from)
            .collect();
        let h = split_holdout(&shuffled);
        assert_eq!(h.test, vec![TicketId::from(10u64)]);
    }

    #[test]
    fn five_thousand_and_seven_bases() {
        // Positions 10, 20, ..., 5000 go to test.
        let h = split_holdout(&ids(1..=5007));
        assert_eq!((h.train.len(), h.test.len()), (4507, 500));
    }

    #[test]
    fn nine_bases_warn() {
        let h = split_holdout(&ids(1..=9));
        assert_eq!((h.train.len(), h.test.len()), (9, 0));
        assert!(h.warning.is_some());
    }

    #[test]
    fn fold_sizes() {
        let folds = group_kfold(&ids(1..=10), 5, 3).unwrap();
        assert!(folds.iter().all(|f| f.len() == 2));
        let folds = group_kfold(&ids(1..=11), 5, 3).unwrap();
        let mut sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![2, 2, 2, 2, 3]);
    }

    #[test]
    fn folds_are_seed_deterministic() {
        let a = group_kfold(&ids(1..=37), 5, 11).unwrap();
        let b = group_kfold(&ids(1..=37), 5, 11).unwrap();
        assert_eq!(a, b);
        let c = group_kfold(&ids(1..=37), 5, 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn too_many_folds() {
        assert!(group_kfold(&ids(1..=4), 5, 0).is_err());
        assert!(group_kfold(&ids(1..=4), 1, 0).is_err());
    }
}
