use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::HpoError;
use crate::classifiers::{
    Activation, Criterion, GbtParams, MaxFeatures, MlpParams, ModelKind, ModelParams, NbParams,
    RandomForestParams, Solver, SvmParams,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Domain {
    Categorical { choices: Vec<String> },
    IntUniform { low: i64, high: i64 },
    LogUniform { low: f64, high: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    pub name: String,
    pub domain: Domain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub dimensions: Vec<Dimension>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Float(f64),
    Str(String),
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Int(v) => write!(f, "{v}"),
            ParamValue::Float(v) => write!(f, "{v}"),
            ParamValue::Str(v) => f.write_str(v),
        }
    }
}

pub type Params = BTreeMap<String, ParamValue>;

impl SearchSpace {
    pub fn new(dimensions: Vec<Dimension>) -> Result<Self, HpoError> {
        let s = Self { dimensions };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), HpoError> {
        if self.dimensions.is_empty() {
            return Err(HpoError::Space("no dimensions".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for d in &self.dimensions {
            if !seen.insert(&d.name) {
                return Err(HpoError::Space(format!("duplicate dimension `{}`", d.name)));
            }
            let ok = match &d.domain {
                Domain::Categorical { choices } => !choices.is_empty(),
                Domain::IntUniform { low, high } => low <= high,
                Domain::LogUniform { low, high } => *low > 0.0 && low <= high && high.is_finite(),
            };
            if !ok {
                return Err(HpoError::Space(format!(
                    "dimension `{}` has an empty or invalid domain",
                    d.name
                )));
            }
        }
        Ok(())
    }

    /// Whether every dimension has a value inside its domain.
    pub fn contains(&self, params: &Params) -> bool {
        self.dimensions
            .iter()
            .all(|d| match (params.get(&d.name), &d.domain) {
                (Some(ParamValue::Str(s)), Domain::Categorical { choices }) => choices.contains(s),
                (Some(ParamValue::Int(v)), Domain::IntUniform { low, high }) => {
                    low <= v && v <= high
                }
                (Some(ParamValue::Float(v)), Domain::LogUniform { low, high }) => {
                    low <= v && v <= high
                }
                _ => false,
            })
    }
}

fn cat(name: &str, choices: &[&str]) -> Dimension {
    Dimension {
        name: name.to_owned(),
        domain: Domain::Categorical {
            choices: choices.iter().map(|s| (*s).to_owned()).collect(),
        },
    }
}

fn int(name: &str, low: i64, high: i64) -> Dimension {
    Dimension {
        name: name.to_owned(),
        domain: Domain::IntUniform { low, high },
    }
}

fn log_uniform(name: &str, low: f64, high: f64) -> Dimension {
    Dimension {
        name: name.to_owned(),
        domain: Domain::LogUniform { low, high },
    }
}

/// Random forest space; `unbounded` stands for trees without a depth limit.
pub fn rf_space() -> SearchSpace {
    SearchSpace {
        dimensions: vec![
            cat("max_depth", &["10", "20", "30", "40", "50", "unbounded"]),
            cat("max_features", &["auto", "sqrt", "log2"]),
            int("n_estimators", 10, 1000),
            cat("criterion", &["gini", "entropy"]),
        ],
    }
}

pub fn mlp_space() -> SearchSpace {
    SearchSpace {
        dimensions: vec![
            int("hidden_layer_sizes", 10, 300),
            log_uniform("alpha", 1e-8, 1e3),
            cat("activation", &["relu", "logistic", "tanh"]),
            cat("solver", &["lbfgs", "sgd", "adam"]),
        ],
    }
}

pub fn gbt_space() -> SearchSpace {
    SearchSpace {
        dimensions: vec![
            int("n_rounds", 10, 500),
            log_uniform("learning_rate", 1e-3, 1.0),
            int("max_depth", 1, 8),
        ],
    }
}

fn get<'a>(p: &'a Params, name: &str) -> Option<&'a ParamValue> {
    p.get(name)
}

fn bad(name: &str, reason: impl Into<String>) -> HpoError {
    HpoError::Param {
        name: name.to_owned(),
        reason: reason.into(),
    }
}

fn as_int(p: &Params, name: &str) -> Result<Option<i64>, HpoError> {
    match get(p, name) {
        None => Ok(None),
        Some(ParamValue::Int(v)) => Ok(Some(*v)),
        Some(ParamValue::Float(v)) if v.fract() == 0.0 => Ok(Some(*v as i64)),
        Some(ParamValue::Str(s)) => s
            .parse()
            .map(Some)
            .map_err(|_| bad(name, "expected an integer")),
        Some(_) => Err(bad(name, "expected an integer")),
    }
}

fn as_usize(p: &Params, name: &str) -> Result<Option<usize>, HpoError> {
    match as_int(p, name)? {
        Some(v) if v < 0 => Err(bad(name, "must be >= 0")),
        v => Ok(v.map(|v| v as usize)),
    }
}

fn as_float(p: &Params, name: &str) -> Result<Option<f64>, HpoError> {
    match get(p, name) {
        None => Ok(None),
        Some(ParamValue::Int(v)) => Ok(Some(*v as f64)),
        Some(ParamValue::Float(v)) => Ok(Some(*v)),
        Some(ParamValue::Str(s)) => s
            .parse()
            .map(Some)
            .map_err(|_| bad(name, "expected a number")),
    }
}

fn as_str<'a>(p: &'a Params, name: &str) -> Result<Option<&'a str>, HpoError> {
    match get(p, name) {
        None => Ok(None),
        Some(ParamValue::Str(s)) => Ok(Some(s)),
        Some(_) => Err(bad(name, "expected a string")),
    }
}

fn parse_enum<T: serde::de::DeserializeOwned>(name: &str, s: &str) -> Result<T, HpoError> {
    serde_json::from_value(serde_json::Value::String(s.to_owned()))
        .map_err(|_| bad(name, format!("unknown choice `{s}`")))
}

/// Turns a parameter map into model parameters; absent entries keep their
/// defaults and unknown names are rejected.
pub fn params_to_model(kind: ModelKind, p: &Params, seed: u64) -> Result<ModelParams, HpoError> {
    let known: &[&str] = match kind {
        ModelKind::RandomForest => &[
            "max_depth",
            "max_features",
            "n_estimators",
            "criterion",
            "bootstrap",
        ],
        ModelKind::Mlp => &[
            "hidden_layer_sizes",
            "alpha",
            "activation",
            "solver",
            "learning_rate",
            "max_iter",
            "batch_size",
        ],
        ModelKind::Gbt => &["n_rounds", "learning_rate", "max_depth", "min_samples_leaf"],
        ModelKind::Svm => &["lambda", "epochs", "calibration_fraction"],
        ModelKind::NaiveBayes => &["var_smoothing"],
    };
    if let Some(k) = p.keys().find(|k| !known.contains(&k.as_str())) {
        return Err(bad(k, format!("not a {kind} parameter")));
    }
    let params = match kind {
        ModelKind::RandomForest => {
            let mut r = RandomForestParams::default();
            match get(p, "max_depth") {
                None => {}
                Some(ParamValue::Str(s)) if s == "unbounded" || s == "none" => r.max_depth = None,
                Some(_) => r.max_depth = as_usize(p, "max_depth")?,
            }
            if let Some(s) = as_str(p, "max_features")? {
                r.max_features = parse_enum::<MaxFeatures>("max_features", s)?;
            }
            if let Some(v) = as_usize(p, "n_estimators")? {
                r.n_estimators = v;
            }
            if let Some(s) = as_str(p, "criterion")? {
                r.criterion = parse_enum::<Criterion>("criterion", s)?;
            }
            if let Some(s) = as_str(p, "bootstrap")? {
                r.bootstrap = s == "true";
            }
            ModelParams::RandomForest(r)
        }
        ModelKind::Mlp => {
            let mut m = MlpParams::default();
            if let Some(v) = as_usize(p, "hidden_layer_sizes")? {
                m.hidden_layer_sizes = v;
            }
            if let Some(v) = as_float(p, "alpha")? {
                m.alpha = v;
            }
            if let Some(s) = as_str(p, "activation")? {
                m.activation = parse_enum::<Activation>("activation", s)?;
            }
            if let Some(s) = as_str(p, "solver")? {
                m.solver = parse_enum::<Solver>("solver", s)?;
            }
            if let Some(v) = as_float(p, "learning_rate")? {
                m.learning_rate = v;
            }
            if let Some(v) = as_usize(p, "max_iter")? {
                m.max_iter = v;
            }
            if let Some(v) = as_usize(p, "batch_size")? {
                m.batch_size = v;
            }
            ModelParams::Mlp(m)
        }
        ModelKind::Gbt => {
            let mut g = GbtParams::default();
            if let Some(v) = as_usize(p, "n_rounds")? {
                g.n_rounds = v;
            }
            if let Some(v) = as_float(p, "learning_rate")? {
                g.learning_rate = v;
            }
            if let Some(v) = as_usize(p, "max_depth")? {
                g.max_depth = v;
            }
            if let Some(v) = as_usize(p, "min_samples_leaf")? {
                g.min_samples_leaf = v;
            }
            ModelParams::Gbt(g)
        }
        ModelKind::Svm => {
            let mut s = SvmParams::default();
            if let Some(v) = as_float(p, "lambda")? {
                s.lambda = v;
            }
            if let Some(v) = as_usize(p, "epochs")? {
                s.epochs = v;
            }
            if let Some(v) = as_float(p, "calibration_fraction")? {
                s.calibration_fraction = v;
            }
            ModelParams::Svm(s)
        }
        ModelKind::NaiveBayes => {
            let mut n = NbParams::default();
            if let Some(v) = as_float(p, "var_smoothing")? {
                n.var_smoothing = v;
            }
            ModelParams::NaiveBayes(n)
        }
    };
    Ok(params.with_seed(seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_spaces_are_valid() {
        for s in [rf_space(), mlp_space(), gbt_space()] {
            s.validate().unwrap();
        }
        assert!(SearchSpace::new(vec![]).is_err());
        assert!(SearchSpace::new(vec![cat("x", &[])]).is_err());
        assert!(SearchSpace::new(vec![log_uniform("a", 0.0, 1.0)]).is_err());
    }

    #[test]
    fn rf_mapping() {
        let p: Params = [
            ("max_depth".to_owned(), ParamValue::Str("unbounded".into())),
            ("max_features".to_owned(), ParamValue::Str("log2".into())),
            ("n_estimators".to_owned(), ParamValue::Int(12)),
            ("criterion".to_owned(), ParamValue::Str("entropy".into())),
        ]
        .into_iter()
        .collect();
        let ModelParams::RandomForest(r) = params_to_model(ModelKind::RandomForest, &p, 5).unwrap()
        else {
            panic!()
        };
        assert_eq!(r.max_depth, None);
        assert_eq!(r.max_features, MaxFeatures::Log2);
        assert_eq!(r.n_estimators, 12);
        assert_eq!(r.criterion, Criterion::Entropy);
        assert_eq!(r.seed, 5);
        let mut bad_p = p.clone();
        bad_p.insert("criterion".into(), ParamValue::Str("mse".into()));
        assert!(params_to_model(ModelKind::RandomForest, &bad_p, 0).is_err());
        bad_p.insert("colour".into(), ParamValue::Int(1));
        assert!(params_to_model(ModelKind::RandomForest, &bad_p, 0).is_err());
    }
}
