use std::collections::BTreeSet;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::space::{params_to_model, Params, SearchSpace};
use super::tpe::{search, TpeConfig};
use super::HpoError;
use crate::classifiers::{fit, Classifier, Dataset, ModelKind};
use crate::corpus::{group_kfold, TicketId};
use crate::eval::weighted_f1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub trial_id: usize,
    pub params: Params,
    pub fold_scores: Vec<f64>,
    /// Mean over folds; negative infinity for failed trials.
    pub mean_f1: f64,
    pub status: TrialStatus,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub best_params: Params,
    pub best_mean_f1: f64,
    pub trials: Vec<Trial>,
}

/// Scores one parameter set by group k-fold weighted f1. Folds are trained
/// in parallel; each fold's model gets the same trial seed.
fn cross_validate(
    kind: ModelKind,
    params: &Params,
    seed: u64,
    data: &Dataset,
    folds: &[Vec<TicketId>],
) -> Result<Vec<f64>, String> {
    let model_params = params_to_model(kind, params, seed).map_err(|e| e.to_string())?;
    folds
        .par_iter()
        .map(|fold| {
            let held: BTreeSet<&TicketId> = fold.iter().collect();
            let (test, train): (Vec<usize>, Vec<usize>) =
                (0..data.len()).partition(|&i| held.contains(&data.groups[i]));
            let model = fit(&model_params, &data.subset(&train)).map_err(|e| e.to_string())?;
            let truth: Vec<usize> = test.iter().map(|&i| data.y[i]).collect();
            let pred: Vec<usize> = test.iter().map(|&i| model.predict(&data.x[i])).collect();
            weighted_f1(&truth, &pred, data.n_classes()).map_err(|e| e.to_string())
        })
        .collect()
}

/// TPE search of `space` for `kind`, scored by mean weighted f1 over `k`
/// group folds of `data` (groups are base tickets).
pub fn tune(
    kind: ModelKind,
    space: &SearchSpace,
    data: &Dataset,
    k: usize,
    config: &TpeConfig,
) -> Result<TuneResult, HpoError> {
    data.validate()?;
    let groups: Vec<TicketId> = data
        .groups
        .iter()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let folds = group_kfold(&groups, k, config.seed)?;
    let result = search(space, config, |p, seed| {
        cross_validate(kind, p, seed, data, &folds)
    })?;
    let best = result
        .best_trial()
        .ok_or_else(|| HpoError::Config("every trial failed".into()))?
        .clone();
    Ok(TuneResult {
        best_params: best.params,
        best_mean_f1: best.mean_f1,
        trials: result.trials,
    })
}

/// CSV with columns `trial_id,params,fold_scores,mean_f1,status,seed`;
/// params and fold scores are JSON.
pub fn write_history_csv<W: Write>(out: W, trials: &[Trial]) -> Result<(), HpoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "trial_id",
        "params",
        "fold_scores",
        "mean_f1",
        "status",
        "seed",
    ])?;
    for t in trials {
        let status = match t.status {
            TrialStatus::Ok => "ok",
            TrialStatus::Failed => "failed",
        };
        w.write_record([
            t.trial_id.to_string(),
            serde_json::to_string(&t.params).expect("params serialize"),
            serde_json::to_string(&t.fold_scores).expect("scores serialize"),
            if t.mean_f1.is_finite() {
                format!("{:.6}", t.mean_f1)
            } else {
                "-inf".to_owned()
            },
            status.to_owned(),
            t.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hpo::space::gbt_space;

    #[test]
    fn tunes_on_grouped_data() {
        let mut x = Vec::new();
        let mut y = Vec::new();
        let mut groups = Vec::new();
        for g in 0..20u64 {
            for j in 0..3 {
                let c = (g % 2) as usize;
                x.push(vec![c as f64 * 2.0 + j as f64 * 0.1, (g as f64).sin()]);
                y.push(c);
                groups.push(TicketId::from(g));
            }
        }
        let data = Dataset::new(x, y, vec!["a".into(), "b".into()], groups).unwrap();
        let mut cfg = TpeConfig::with_budget(4, 1);
        cfg.n_startup_trials = 2;
        let r = tune(ModelKind::Gbt, &gbt_space(), &data, 5, &cfg).unwrap();
        assert_eq!(r.trials.len(), 4);
        assert!(r.trials.iter().all(|t| t.fold_scores.len() == 5));
        assert!(r.best_mean_f1 > 0.9);
        let mut buf = Vec::new();
        write_history_csv(&mut buf, &r.trials).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("trial_id,params,fold_scores,mean_f1,status,seed\n0,"));
        assert_eq!(text.lines().count(), 5);
    }
}
