//! Declarative run configuration, read from a TOML file.
//!
//! ```toml
//! seed = 42
//!
//! [data]
//! schema = "schema.json"
//! corpus = "corpus.jsonl"
//! labels = "labels.jsonl"
//! workdir = "work"
//!
//! [features]
//! text_mode = "tfidf"
//! tfidf_top_k = 200
//!
//! [model]
//! preset = "paper-rf-debug"
//!
//! [al]
//! strategy = "entropy"
//! steps = 50
//! ```
//!
//! Relative paths are resolved against the directory holding the file.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::Deserialize;
use triage_core::features::FeatureConfig;
use triage_core::hpo::preset_by_name;
use triage_core::{AcquisitionStrategy, ModelKind, ModelParams, Target};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub data: DataPaths,
    #[serde(default)]
    pub features: FeatureConfig,
    #[serde(default)]
    pub model: Option<toml::Table>,
    #[serde(default)]
    pub al: AlSection,
    #[serde(default)]
    pub tune: TuneSection,
    #[serde(default)]
    pub serve: ServeSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPaths {
    pub schema: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    /// Expert label file.
    pub labels: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub mappings: Option<PathBuf>,
    /// Output directory of `featurize` and `label-extract`.
    pub workdir: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlSection {
    pub strategy: Option<AcquisitionStrategy>,
    pub initial_size: usize,
    pub steps: usize,
    pub targets: Vec<Target>,
    pub retrain_every: usize,
}

impl Default for AlSection {
    fn default() -> Self {
        Self {
            strategy: None,
            initial_size: 39,
            steps: 50,
            targets: Target::EXPERT.to_vec(),
            retrain_every: 1,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneSection {
    pub kind: ModelKind,
    pub budget: usize,
    pub folds: usize,
    pub n_startup_trials: Option<usize>,
    pub gamma: Option<f64>,
}

impl Default for TuneSection {
    fn default() -> Self {
        Self {
            kind: ModelKind::RandomForest,
            budget: 50,
            folds: 5,
            n_startup_trials: None,
            gamma: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeSection {
    pub addr: String,
    pub sessions_dir: PathBuf,
    /// Model blobs answering `/predict`.
    pub models: Vec<PathBuf>,
}

impl Default for ServeSection {
    fn default() -> Self {
        Self {
            addr: "127.0.0.1:8080".into(),
            sessions_dir: PathBuf::from("sessions"),
            models: Vec::new(),
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: Config =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.rebase(base);
        cfg.validate()?;
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(x) = p {
                if x.is_relative() {
                    *x = base.join(&*x);
                }
            }
        };
        fix(&mut self.data.schema);
        fix(&mut self.data.corpus);
        fix(&mut self.data.labels);
        fix(&mut self.data.embeddings);
        fix(&mut self.data.mappings);
        fix(&mut self.data.workdir);
        if self.serve.sessions_dir.is_relative() {
            self.serve.sessions_dir = base.join(&self.serve.sessions_dir);
        }
        for m in &mut self.serve.models {
            if m.is_relative() {
                *m = base.join(&*m);
            }
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if !(0.0..=1.0).contains(&self.features.max_nan_fraction) {
            bail!("features.max_nan_fraction must lie in [0, 1]");
        }
        if self.al.targets.is_empty() {
            bail!("al.targets is empty");
        }
        if self.al.targets.contains(&Target::TimeToFix) {
            bail!("al.targets may only name expert targets (risk, debug, resolution)");
        }
        if self.al.retrain_every == 0 {
            bail!("al.retrain_every must be at least 1");
        }
        if self.tune.folds < 2 {
            bail!("tune.folds must be at least 2");
        }
        self.model_choice()?;
        Ok(())
    }

    /// The `[model]` table as a preset or explicit parameters.
    pub fn model_choice(&self) -> anyhow::Result<Option<ModelChoice>> {
        let Some(table) = &self.model else {
            return Ok(None);
        };
        if let Some(p) = table.get("preset") {
            if table.len() > 1 {
                bail!("[model] takes either `preset` or explicit parameters, not both");
            }
            let name = p.as_str().context("model.preset must be a string")?;
            let (target, params) = preset_by_name(name)?;
            return Ok(Some(ModelChoice {
                params,
                preset_target: Some(target),
            }));
        }
        let params: ModelParams = toml::Value::Table(table.clone())
            .try_into()
            .context("invalid [model] section")?;
        Ok(Some(ModelChoice {
            params,
            preset_target: None,
        }))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelChoice {
    pub params: ModelParams,
    /// Target a preset was tuned for.
    pub preset_target: Option<Target>,
}

/// Picks model parameters: an explicit preset name wins over the config,
/// which wins over a default random forest. The seed is applied last.
pub fn resolve_model(preset: Option<&str>, cfg: &Config, seed: u64) -> anyhow::Result<ModelChoice> {
    let choice = match preset {
        Some(name) => {
            let (target, params) = preset_by_name(name)?;
            ModelChoice {
                params,
                preset_target: Some(target),
            }
        }
        None => cfg.model_choice()?.unwrap_or(ModelChoice {
            params: ModelParams::default_for(ModelKind::RandomForest),
            preset_target: None,
        }),
    };
    Ok(ModelChoice {
        params: choice.params.with_seed(seed),
        ..choice
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use triage_core::classifiers::{Criterion, MaxFeatures, RandomForestParams};

    fn parse(s: &str) -> anyhow::Result<Config> {
        let cfg: Config = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    #[test]
    fn empty_config_is_valid() {
        let cfg = parse("").unwrap();
        assert_eq!(cfg.seed, 0);
        assert_eq!(cfg.al.targets, Target::EXPERT);
        assert!(cfg.model_choice().unwrap().is_none());
    }

    #[test]
    fn preset_in_config() {
        let cfg = parse("[model]\npreset = \"paper-rf-debug\"\n").unwrap();
        let m = resolve_model(None, &cfg, 3).unwrap();
        assert_eq!(m.preset_target, Some(Target::Debug));
        let ModelParams::RandomForest(p) = m.params else {
            panic!("expected a forest");
        };
        assert_eq!(
            (
                p.max_depth,
                p.max_features,
                p.n_estimators,
                p.criterion,
                p.seed
            ),
            (Some(10), MaxFeatures::Sqrt, 297, Criterion::Entropy, 3)
        );
    }

    #[test]
    fn explicit_params_fill_defaults() {
        let cfg = parse("[model]\nkind = \"random_forest\"\nn_estimators = 7\n").unwrap();
        let m = cfg.model_choice().unwrap().unwrap();
        assert_eq!(
            m.params,
            ModelParams::RandomForest(RandomForestParams {
                n_estimators: 7,
                ..RandomForestParams::default()
            })
        );
    }

    #[test]
    fn cli_preset_overrides_config() {
        let cfg = parse("[model]\nkind = \"svm\"\n").unwrap();
        let m = resolve_model(Some("paper-mlp-risk"), &cfg, 0).unwrap();
        assert_eq!(m.params.kind(), ModelKind::Mlp);
    }

    #[test]
    fn rejects_bad_sections() {
        assert!(parse("[model]\npreset = \"paper-rf-debug\"\nn_estimators = 3\n").is_err());
        assert!(parse("[model]\npreset = \"severity\"\n").is_err());
        assert!(parse("[model]\nkind = \"perceptron\"\n").is_err());
        assert!(parse("[al]\ntargets = [\"time_to_fix\"]\n").is_err());
        assert!(parse("[features]\nmax_nan_fraction = 2.0\n").is_err());
        assert!(parse("colour = 1\n").is_err());
    }

    #[test]
    fn relative_paths_follow_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("triage.toml");
        std::fs::write(&path, "[data]\nschema = \"s.json\"\n").unwrap();
        let cfg = Config::load(&path).unwrap();
        assert_eq!(cfg.data.schema.unwrap(), dir.path().join("s.json"));
    }
}
