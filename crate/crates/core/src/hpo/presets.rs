use serde::{Deserialize, Serialize};

use super::HpoError;
use crate::classifiers::{
    Activation, Criterion, MaxFeatures, MlpParams, ModelParams, RandomForestParams, Solver,
};
use crate::labels::Target;

/// Published tuned hyper-parameters for one target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunedPreset {
    pub target: Target,
    pub random_forest: RandomForestParams,
    pub mlp: MlpParams,
}

fn rf(
    max_depth: usize,
    max_features: MaxFeatures,
    n_estimators: usize,
    criterion: Criterion,
) -> RandomForestParams {
    RandomForestParams {
        max_depth: Some(max_depth),
        max_features,
        n_estimators,
        criterion,
        ..RandomForestParams::default()
    }
}

fn mlp(hidden: usize, alpha: f64, activation: Activation, solver: Solver) -> MlpParams {
    MlpParams {
        hidden_layer_sizes: hidden,
        alpha,
        activation,
        solver,
        ..MlpParams::default()
    }
}

/// Tuned random forest and MLP settings for `target`.
pub fn load_preset(target: &str) -> Result<TunedPreset, HpoError> {
    let t: Target = target
        .parse()
        .map_err(|_| HpoError::UnknownTarget(target.to_owned()))?;
    use Activation::Relu;
    use Criterion::{Entropy, Gini};
    use MaxFeatures::{Auto, Sqrt};
    let (random_forest, mlp) = match t {
        Target::TimeToFix => (rf(40, Sqrt, 877, Gini), mlp(36, 3.8183, Relu, Solver::Adam)),
        Target::Risk => (rf(20, Auto, 166, Gini), mlp(0, 0.0332, Relu, Solver::Adam)),
        Target::Debug => (
            rf(10, Sqrt, 297, Entropy),
            mlp(27, 0.1409, Relu, Solver::Sgd),
        ),
        Target::Resolution => (
            rf(10, Sqrt, 215, Entropy),
            mlp(32, 0.0005, Relu, Solver::Lbfgs),
        ),
    };
    Ok(TunedPreset {
        target: t,
        random_forest,
        mlp,
    })
}

pub const PRESET_NAMES: [&str; 8] = [
    "paper-rf-time_to_fix",
    "paper-rf-risk",
    "paper-rf-debug",
    "paper-rf-resolution",
    "paper-mlp-time_to_fix",
    "paper-mlp-risk",
    "paper-mlp-debug",
    "paper-mlp-resolution",
];

/// Resolves names like `paper-rf-debug` or `paper-mlp-risk` to model
/// parameters, together with the target they were tuned for.
pub fn preset_by_name(name: &str) -> Result<(Target, ModelParams), HpoError> {
    let unknown = || HpoError::UnknownPreset(name.to_owned());
    let rest = name.strip_prefix("paper-").ok_or_else(unknown)?;
    let (family, target) = rest.split_once('-').ok_or_else(unknown)?;
    let preset = load_preset(target).map_err(|_| unknown())?;
    let params = match family {
        "rf" => ModelParams::RandomForest(preset.random_forest),
        "mlp" => ModelParams::Mlp(preset.mlp),
        _ => return Err(unknown()),
    };
    Ok((preset.target, params))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spot_values() {
        let p = load_preset("time_to_fix").unwrap();
        assert_eq!(p.random_forest.max_depth, Some(40));
        assert_eq!(p.random_forest.n_estimators, 877);
        let p = load_preset("resolution").unwrap();
        assert_eq!(
            (p.mlp.hidden_layer_sizes, p.mlp.alpha, p.mlp.solver),
            (32, 0.0005, Solver::Lbfgs)
        );
        assert!(matches!(
            load_preset("severity"),
            Err(HpoError::UnknownTarget(_))
        ));
    }

    #[test]
    fn every_name_resolves() {
        for n in PRESET_NAMES {
            preset_by_name(n).unwrap();
        }
        let (t, ModelParams::RandomForest(r)) = preset_by_name("paper-rf-debug").unwrap() else {
            panic!()
        };
        assert_eq!(t, Target::Debug);
        assert_eq!(
            (r.max_depth, r.max_features, r.n_estimators, r.criterion),
            (Some(10), MaxFeatures::Sqrt, 297, Criterion::Entropy)
        );
        assert!(preset_by_name("paper-svm-risk").is_err());
        assert!(preset_by_name("rf-risk").is_err());
    }
}
