use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::SessionError;
use crate::classifiers::{fit, Classifier, Dataset, ModelKind, ModelParams};
use crate::corpus::TicketId;
use crate::eval::weighted_f1;
use crate::labels::{LabelSet, Target};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub kind: ModelKind,
    pub per_target: BTreeMap<Target, f64>,
    pub mean_f1: f64,
}

/// A ticket that is the only example of its class for a target. Its
/// leave-one-out prediction cannot be right.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SingletonFlag {
    pub base_id: TicketId,
    pub target: Target,
    pub class: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooReport {
    pub candidates: Vec<CandidateScore>,
    pub chosen: ModelKind,
    pub singletons: Vec<SingletonFlag>,
}

/// Picks the classifier for an active-learning session by leave-one-out
/// weighted f1, averaged over `targets`. Candidates are tried in the order
/// given; the first of several equal means wins.
pub fn select_al_model(
    ids: &[TicketId],
    features: &[Vec<f64>],
    labels: &[LabelSet],
    targets: &[Target],
    candidates: &[ModelParams],
) -> Result<LooReport, SessionError> {
    if ids.len() != features.len() || ids.len() != labels.len() {
        return Err(SessionError::InvalidPool(
            "ids, features and labels differ in length".into(),
        ));
    }
    if ids.len() < 2 {
        return Err(SessionError::InvalidPool(
            "leave-one-out needs at least 2 tickets".into(),
        ));
    }
    if candidates.is_empty() || targets.is_empty() {
        return Err(SessionError::Config("no candidates or no targets".into()));
    }

    let mut singletons = Vec::new();
    for &t in targets {
        let mut counts = vec![0usize; t.n_classes()];
        for l in labels {
            if let Some(c) = l.class(t) {
                counts[c] += 1;
            }
        }
        for (id, l) in ids.iter().zip(labels) {
            if let Some(c) = l.class(t) {
                if counts[c] == 1 {
                    singletons.push(SingletonFlag {
                        base_id: id.clone(),
                        target: t,
                        class: c,
                    });
                }
            }
        }
    }

    let mut scores = Vec::with_capacity(candidates.len());
    for params in candidates {
        let mut per_target = BTreeMap::new();
        for &t in targets {
            let rows: Vec<usize> = (0..ids.len())
                .filter(|&i| labels[i].class(t).is_some())
                .collect();
            if rows.len() < 2 {
                return Err(SessionError::NotTrained(t));
            }
            let data = Dataset::new(
                rows.iter().map(|&i| features[i].clone()).collect(),
                rows.iter()
                    .map(|&i| labels[i].class(t).expect("filtered"))
                    .collect(),
                t.class_names(),
                rows.iter().map(|&i| ids[i].clone()).collect(),
            )?;
            let mut truth = Vec::with_capacity(rows.len());
            let mut pred = Vec::with_capacity(rows.len());
            for hold in 0..data.len() {
                let train: Vec<usize> = (0..data.len()).filter(|&j| j != hold).collect();
                let model = fit(params, &data.subset(&train))?;
                truth.push(data.y[hold]);
                pred.push(model.predict(&data.x[hold]));
            }
            per_target.insert(t, weighted_f1(&truth, &pred, t.n_classes())?);
        }
        let mean_f1 = per_target.values().sum::<f64>() / per_target.len() as f64;
        scores.push(CandidateScore {
            kind: params.kind(),
            per_target,
            mean_f1,
        });
    }
    let mut chosen = 0;
    for (i, s) in scores.iter().enumerate() {
        if s.mean_f1 > scores[chosen].mean_f1 {
            chosen = i;
        }
    }
    Ok(LooReport {
        chosen: scores[chosen].kind,
        candidates: scores,
        singletons,
    })
}

/// The default candidate list in tie-break order: RF, SVM, NB.
pub fn default_candidates(seed: u64) -> Vec<ModelParams> {
    [
        ModelKind::RandomForest,
        ModelKind::Svm,
        ModelKind::NaiveBayes,
    ]
    .into_iter()
    .map(|k| ModelParams::default_for(k).with_seed(seed))
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pool() -> (Vec<TicketId>, Vec<Vec<f64>>, Vec<LabelSet>) {
        let ids: Vec<TicketId> = (0..12u64).map(TicketId::from).collect();
        let x: Vec<Vec<f64>> = (0..12)
            .map(|i| vec![if i < 6 { 0.0 } else { 10.0 } + i as f64 * 0.01])
            .collect();
        let labels = (0..12)
            .map(|i| {
                let mut l = LabelSet::default();
                l.set_class(Target::Risk, usize::from(i >= 6)).unwrap();
                l
            })
            .collect();
        (ids, x, labels)
    }

    #[test]
    fn separable_pool_ties_resolve_by_order() {
        let (ids, x, l) = pool();
        let r = select_al_model(&ids, &x, &l, &[Target::Risk], &default_candidates(0)).unwrap();
        assert!(r.candidates.iter().all(|c| c.mean_f1 == 1.0));
        assert_eq!(r.chosen, ModelKind::RandomForest);
        let nb_first = [
            ModelParams::default_for(ModelKind::NaiveBayes),
            ModelParams::default_for(ModelKind::RandomForest),
        ];
        let r = select_al_model(&ids, &x, &l, &[Target::Risk], &nb_first).unwrap();
        assert_eq!(r.chosen, ModelKind::NaiveBayes);
    }

    #[test]
    fn singleton_classes_are_flagged() {
        let (ids, x, mut l) = pool();
        l[0].set_class(Target::Risk, 4).unwrap();
        let r = select_al_model(&ids, &x, &l, &[Target::Risk], &default_candidates(0)).unwrap();
        assert_eq!(
            r.singletons,
            vec![SingletonFlag {
                base_id: ids[0].clone(),
                target: Target::Risk,
                class: 4
            }]
        );
        assert!(r.candidates.iter().all(|c| c.mean_f1 < 1.0));
    }
}
