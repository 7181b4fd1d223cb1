//! Subcommand implementations. Each returns a JSON document for stdout and
//! a short human summary for stderr.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use triage_core::active_learning::{simulate, write_curve_csv, SimulationConfig, SimulationPool};
use triage_core::classifiers::{fit, load_model, save_model, Classifier, ModelBlob};
use triage_core::corpus::{ingest_corpus, write_corpus, write_derived, Schema};
use triage_core::eval::{length_analysis, write_length_csv};
use triage_core::features::{
    load_mapping_tables, ExternalEmbeddingStore, FeatureSpec, MappingTables,
};
use triage_core::hpo::{
    gbt_space, mlp_space, params_to_model, rf_space, tune, write_history_csv, TpeConfig,
};
use triage_core::labels::{attach_expert_labels, fixing_time, ExpertLabels, FixingTimeBinning};
use triage_core::synthetic::synthetic_corpus;
use triage_core::{AcquisitionStrategy, Corpus, EvalReport, ModelKind, Target};

use crate::config::{resolve_model, Config};
use crate::sessions::{create_session, SessionRequest};
use crate::workdir::{
    read_json, write_json, write_jsonl, FeatureRow, LabelRow, Split, SplitFile, Table, BINNING,
    FEATURES, FEATURE_SPEC, LABELS, SPLIT,
};

/// Output of one subcommand.
#[derive(Debug, Clone)]
pub struct Report {
    pub json: Value,
    pub summary: String,
}

/// Settings shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct RunContext {
    pub config: Config,
    pub seed: u64,
}

fn pick(flag: &Option<PathBuf>, fallback: &Option<PathBuf>, what: &str) -> anyhow::Result<PathBuf> {
    flag.clone()
        .or_else(|| fallback.clone())
        .with_context(|| format!("missing {what}: pass it as a flag or set it in the config file"))
}

fn must_exist(path: &Path) -> anyhow::Result<()> {
    if !path.exists() {
        bail!("input file {} does not exist", path.display());
    }
    Ok(())
}

fn load_corpus(corpus: &Path, schema: &Path) -> anyhow::Result<(Corpus, usize)> {
    must_exist(corpus)?;
    must_exist(schema)?;
    let schema = Schema::from_path(schema)?;
    let (corpus, report) = ingest_corpus(corpus, &schema)?;
    for r in &report.rejections {
        tracing::warn!(line = r.line, id = ?r.id, "rejected ticket: {}", r.reason);
    }
    Ok((corpus, report.rejections.len()))
}

fn data_dir(flag: &Option<PathBuf>, ctx: &RunContext) -> anyhow::Result<PathBuf> {
    pick(flag, &ctx.config.data.workdir, "--data (work directory)")
}

fn create_parent(path: &Path) -> anyhow::Result<()> {
    if let Some(p) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(p)?;
    }
    Ok(())
}

fn create_file(path: &Path) -> anyhow::Result<BufWriter<File>> {
    create_parent(path)?;
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn to_json<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable")
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Number of base tickets.
    #[arg(long, default_value_t = 300)]
    pub n_bases: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}

/// Writes a synthetic corpus, its expert labels, the schema and a starter
/// config.
pub fn synth(ctx: &RunContext, a: &SynthArgs) -> anyhow::Result<Report> {
    if a.n_bases == 0 {
        bail!("--n-bases must be positive");
    }
    let s = synthetic_corpus(a.n_bases, ctx.seed);
    std::fs::create_dir_all(&a.out_dir)?;
    write_json(&a.out_dir.join("schema.json"), &s.corpus.schema)?;
    let mut out = create_file(&a.out_dir.join("corpus.jsonl"))?;
    write_corpus(&s.corpus, &mut out)?;
    out.flush()?;
    write_jsonl(&a.out_dir.join("labels.jsonl"), &s.labels)?;
    let config = format!(
        "seed = {}\n\n[data]\nschema = \"schema.json\"\ncorpus = \"corpus.jsonl\"\nlabels = \"labels.jsonl\"\nworkdir = \"work\"\n\n[features]\ntext_mode = \"tfidf\"\ntfidf_top_k = 50\n\n[model]\nkind = \"random_forest\"\nn_estimators = 50\n\n[al]\ninitial_size = 30\nsteps = 40\n",
        ctx.seed
    );
    std::fs::write(a.out_dir.join("triage.toml"), config)?;
    let events: usize = s.corpus.tickets().iter().map(|t| t.events.len()).sum();
    Ok(Report {
        json: json!({"bases": s.corpus.len(), "events": events, "out_dir": a.out_dir}),
        summary: format!(
            "wrote {} synthetic tickets ({events} events) to {}",
            s.corpus.len(),
            a.out_dir.display()
        ),
    })
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Tickets in the interchange format, one JSON object per line.
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Where to write the accepted tickets, normalised.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Fail when any record is rejected.
    #[arg(long)]
    pub strict: bool,
}

pub fn ingest(ctx: &RunContext, a: &IngestArgs) -> anyhow::Result<Report> {
    let input = pick(&a.input, &ctx.config.data.corpus, "--in")?;
    let schema_path = pick(&a.schema, &ctx.config.data.schema, "--schema")?;
    must_exist(&input)?;
    let schema = Schema::from_path(&schema_path)?;
    let (corpus, report) = ingest_corpus(&input, &schema)?;
    if let Some(out) = &a.out {
        let mut w = create_file(out)?;
        write_corpus(&corpus, &mut w)?;
        w.flush()?;
    }
    let summary = format!(
        "{} tickets accepted, {} rejected",
        report.accepted,
        report.rejections.len()
    );
    if a.strict && !report.rejections.is_empty() {
        let first = &report.rejections[0];
        bail!(
            "{summary}; first rejection on line {}: {}",
            first.line,
            first.reason
        );
    }
    Ok(Report {
        json: to_json(&report),
        summary,
    })
}

#[derive(Debug, Args)]
pub struct ExpandArgs {
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn expand(ctx: &RunContext, a: &ExpandArgs) -> anyhow::Result<Report> {
    let input = pick(&a.input, &ctx.config.data.corpus, "--in")?;
    let schema = pick(&a.schema, &ctx.config.data.schema, "--schema")?;
    let (corpus, rejected) = load_corpus(&input, &schema)?;
    let derived = corpus.expand_all();
    let mut w = create_file(&a.out)?;
    write_derived(&derived, &mut w)?;
    w.flush()?;
    Ok(Report {
        json: json!({"bases": corpus.len(), "derived": derived.len(), "rejected": rejected}),
        summary: format!(
            "{} base tickets expanded into {} derived tickets",
            corpus.len(),
            derived.len()
        ),
    })
}

#[derive(Debug, Args)]
pub struct FeaturizeArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// JSON object of per-field value mappings for wide categoricals.
    #[arg(long)]
    pub mappings: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

/// Splits off the holdout, fits the feature spec on training tickets and
/// writes one vector per derived ticket.
pub fn featurize(ctx: &RunContext, a: &FeaturizeArgs) -> anyhow::Result<Report> {
    let d = &ctx.config.data;
    let corpus_path = pick(&a.corpus, &d.corpus, "--corpus")?;
    let schema_path = pick(&a.schema, &d.schema, "--schema")?;
    let out = data_dir(&a.out_dir, ctx)?;
    let (corpus, rejected) = load_corpus(&corpus_path, &schema_path)?;
    let external = match a.embeddings.as_ref().or(d.embeddings.as_ref()) {
        Some(p) => Some(ExternalEmbeddingStore::load(p)?),
        None => None,
    };
    let mappings = match a.mappings.as_ref().or(d.mappings.as_ref()) {
        Some(p) => load_mapping_tables(p)?,
        None => MappingTables::new(),
    };
    let split = SplitFile::holdout(&corpus);
    if let Some(w) = &split.warning {
        tracing::warn!("{w}");
    }
    let train = corpus.subset(&split.train).expand_all();
    let mut features = ctx.config.features.clone();
    features.word2vec.seed = ctx.seed;
    let (spec, prune) = FeatureSpec::fit(
        &corpus.schema,
        &train,
        &features,
        &mappings,
        external.as_ref(),
    )?;
    let side = split.side_of();
    let mut rows = Vec::new();
    for d in corpus.expand_all() {
        let v = spec.assemble(&d, external.as_ref())?;
        rows.push(FeatureRow {
            split: side[&d.base_id],
            base_id: d.base_id,
            prefix_len: d.prefix_len,
            x: v.values,
        });
    }
    std::fs::create_dir_all(&out)?;
    write_json(&out.join(FEATURE_SPEC), &spec)?;
    write_json(&out.join(SPLIT), &split)?;
    write_jsonl(&out.join(FEATURES), &rows)?;
    let n_train = rows.iter().filter(|r| r.split == Split::Train).count();
    Ok(Report {
        json: json!({
            "output_dim": spec.output_dim,
            "feature_spec_hash": spec.hash(),
            "rows": rows.len(),
            "train_rows": n_train,
            "test_rows": rows.len() - n_train,
            "train_bases": split.train.len(),
            "test_bases": split.test.len(),
            "rejected": rejected,
            "prune": prune,
        }),
        summary: format!(
            "{} derived tickets featurized into {} columns ({} train / {} test bases); {} fields dropped",
            rows.len(),
            spec.output_dim,
            split.train.len(),
            split.test.len(),
            prune.dropped.len()
        ),
    })
}

#[derive(Debug, Args)]
pub struct LabelExtractArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Expert label file; without it only fixing-time classes are produced.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

/// Fixing-time classes from quantiles of the training side, plus expert
/// labels copied to every derived ticket of their base.
pub fn label_extract(ctx: &RunContext, a: &LabelExtractArgs) -> anyhow::Result<Report> {
    let d = &ctx.config.data;
    let corpus_path = pick(&a.corpus, &d.corpus, "--corpus")?;
    let schema_path = pick(&a.schema, &d.schema, "--schema")?;
    let out = data_dir(&a.out_dir, ctx)?;
    let (corpus, _) = load_corpus(&corpus_path, &schema_path)?;
    let expert = match a.labels.as_ref().or(d.labels.as_ref()) {
        Some(p) => {
            must_exist(p)?;
            ExpertLabels::from_reader(BufReader::new(File::open(p)?), &corpus)?
        }
        None => ExpertLabels::default(),
    };
    let split_path = out.join(SPLIT);
    let split = if split_path.exists() {
        read_json(&split_path)?
    } else {
        SplitFile::holdout(&corpus)
    };
    let side = split.side_of();
    if let Some(id) = corpus.ids().find(|id| !side.contains_key(*id)) {
        bail!(
            "ticket {id} is missing from {}; rerun featurize on this corpus",
            split_path.display()
        );
    }
    let train = corpus.subset(&split.train);
    let mut days = Vec::new();
    for base in train.tickets() {
        for d in base.expand() {
            days.push(fixing_time(&d, base)?);
        }
    }
    let binning = FixingTimeBinning::fit(&days)?;
    let rows: Vec<LabelRow> = attach_expert_labels(&corpus, &expert, Some(&binning))?
        .into_iter()
        .map(|(d, labels)| LabelRow {
            split: side[&d.base_id],
            base_id: d.base_id,
            prefix_len: d.prefix_len,
            labels,
        })
        .collect();
    std::fs::create_dir_all(&out)?;
    write_json(&out.join(BINNING), &binning)?;
    if !split_path.exists() {
        write_json(&split_path, &split)?;
    }
    write_jsonl(&out.join(LABELS), &rows)?;
    let counts: BTreeMap<&str, usize> = Target::ALL
        .iter()
        .map(|t| {
            (
                t.name(),
                rows.iter().filter(|r| r.labels.class(*t).is_some()).count(),
            )
        })
        .collect();
    Ok(Report {
        json: json!({"rows": rows.len(), "labeled": counts, "expert_tickets": expert.len(), "binning": binning}),
        summary: format!(
            "{} derived tickets labeled; fixing-time boundaries (days) {:?}; {} tickets with expert labels",
            rows.len(),
            binning.boundaries,
            expert.len()
        ),
    })
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Defaults to the preset's target.
    #[arg(long)]
    pub target: Option<Target>,
    /// Published parameters, e.g. `paper-rf-debug`.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn train(ctx: &RunContext, a: &TrainArgs) -> anyhow::Result<Report> {
    let dir = data_dir(&a.data, ctx)?;
    let choice = resolve_model(a.preset.as_deref(), &ctx.config, ctx.seed)?;
    let target = a
        .target
        .or(choice.preset_target)
        .context("--target is required unless a preset names one")?;
    if let Some(t) = choice.preset_target.filter(|t| *t != target) {
        tracing::warn!("preset tuned for {t} used on {target}");
    }
    let table = Table::load(&dir)?;
    let data = table.dataset(Split::Train, target)?;
    let model = fit(&choice.params, &data)?;
    if let Some(w) = model.warning() {
        tracing::warn!("{w}");
    }
    let blob = ModelBlob::new(model, target.class_names(), Some(table.spec_hash.clone()))
        .with_target(target);
    create_parent(&a.out)?;
    std::fs::write(&a.out, save_model(&blob))
        .with_context(|| format!("writing {}", a.out.display()))?;
    Ok(Report {
        json: json!({
            "target": target,
            "model_type": blob.header.model_type,
            "params": choice.params,
            "train_rows": data.len(),
            "class_counts": data.class_counts(),
            "feature_spec_hash": table.spec_hash,
            "warning": blob.model.warning(),
        }),
        summary: format!(
            "trained {} for {target} on {} rows -> {}",
            blob.header.model_type,
            data.len(),
            a.out.display()
        ),
    })
}

fn load_blob(path: &Path, table: &Table) -> anyhow::Result<ModelBlob> {
    must_exist(path)?;
    let blob =
        load_model(&std::fs::read(path)?).with_context(|| format!("loading {}", path.display()))?;
    blob.check_feature_spec(&table.spec_hash)
        .with_context(|| format!("{} was trained on a different feature spec", path.display()))?;
    if blob.header.n_features != table.spec.output_dim {
        bail!(
            "{} expects {} features, the work directory has {}",
            path.display(),
            blob.header.n_features,
            table.spec.output_dim
        );
    }
    Ok(blob)
}

fn blob_target(blob: &ModelBlob, flag: Option<Target>, path: &Path) -> anyhow::Result<Target> {
    match (flag, blob.header.target) {
        (Some(t), _) => Ok(t),
        (None, Some(t)) => Ok(t),
        (None, None) => bail!(
            "{} does not record its target; pass --target",
            path.display()
        ),
    }
}

fn model_id(path: &Path) -> String {
    path.file_name().map_or_else(
        || path.display().to_string(),
        |n| n.to_string_lossy().into_owned(),
    )
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Model blobs; repeat for several targets.
    #[arg(long = "model", required = true)]
    pub models: Vec<PathBuf>,
    /// Work directory holding the test split.
    #[arg(long, alias = "test")]
    pub data: Option<PathBuf>,
    /// Overrides the target stored in the model.
    #[arg(long)]
    pub target: Option<Target>,
    /// Report JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Same report as CSV rows.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalOutput {
    pub split: Split,
    pub feature_spec_hash: String,
    pub reports: Vec<EvalReport>,
}

/// Weighted f1 on the test split, with the uniform-guessing baseline over
/// the classes seen in training.
pub fn eval(ctx: &RunContext, a: &EvalArgs) -> anyhow::Result<Report> {
    if a.target.is_some() && a.models.len() > 1 {
        bail!("--target only applies to a single --model");
    }
    let dir = data_dir(&a.data, ctx)?;
    let table = Table::load(&dir)?;
    let mut reports = Vec::new();
    for path in &a.models {
        let blob = load_blob(path, &table)?;
        let target = blob_target(&blob, a.target, path)?;
        let (truth, pred): (Vec<usize>, Vec<usize>) = table
            .labeled(Split::Test, target)
            .map(|(r, c)| (c, blob.model.predict(&r.x)))
            .unzip();
        if truth.is_empty() {
            bail!("no test rows carry a {target} label");
        }
        let report = EvalReport::compute(
            target.name(),
            &model_id(path),
            &target.class_names(),
            &truth,
            &pred,
        )?
        .with_baseline_classes(&table.observed_classes(target));
        reports.push(report);
    }
    let output = EvalOutput {
        split: Split::Test,
        feature_spec_hash: table.spec_hash.clone(),
        reports,
    };
    if let Some(out) = &a.out {
        create_parent(out)?;
        write_json(out, &output)?;
    }
    if let Some(path) = &a.csv {
        let mut w = csv::Writer::from_writer(create_file(path)?);
        w.write_record(["model_id", "target", "class", "support", "f1"])?;
        for r in &output.reports {
            for (i, name) in r.class_names.iter().enumerate() {
                w.write_record([
                    &r.model_id,
                    &r.target,
                    name,
                    &r.support[i].to_string(),
                    &r.per_class_f1[i].to_string(),
                ])?;
            }
            w.write_record([
                &r.model_id,
                &r.target,
                "weighted",
                &r.n.to_string(),
                &r.weighted_f1.to_string(),
            ])?;
            w.write_record([
                &r.model_id,
                &r.target,
                "random_baseline",
                &r.n.to_string(),
                &r.random_baseline_f1.to_string(),
            ])?;
        }
        w.flush()?;
    }
    let summary = output
        .reports
        .iter()
        .map(|r| {
            format!(
                "{:<12} weighted f1 {:.3} (random baseline {:.3}, n = {})",
                r.target, r.weighted_f1, r.random_baseline_f1, r.n
            )
        })
        .collect::<Vec<_>>()
        .join("\n");
    Ok(Report {
        json: to_json(&output),
        summary,
    })
}

#[derive(Debug, Args)]
pub struct LengthArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub target: Option<Target>,
    /// Only base tickets with exactly this many events take part.
    #[arg(long, default_value_t = 8)]
    pub n_entries: usize,
    /// CSV with columns entry_index,target,f1.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Weighted f1 per prefix length over test tickets of one fixed length.
pub fn length(ctx: &RunContext, a: &LengthArgs) -> anyhow::Result<Report> {
    if a.n_entries == 0 {
        bail!("--n-entries must be at least 1");
    }
    let dir = data_dir(&a.data, ctx)?;
    let table = Table::load(&dir)?;
    let blob = load_blob(&a.model, &table)?;
    let target = blob_target(&blob, a.target, &a.model)?;
    let bases: std::collections::BTreeSet<_> = table
        .full_tickets(Split::Test)
        .into_iter()
        .filter(|r| r.prefix_len == a.n_entries)
        .map(|r| r.base_id.clone())
        .collect();
    let rows: Vec<(usize, usize, usize)> = table
        .labeled(Split::Test, target)
        .filter(|(r, _)| bases.contains(&r.base_id))
        .map(|(r, c)| (r.prefix_len, c, blob.model.predict(&r.x)))
        .collect();
    let points = if rows.is_empty() {
        tracing::warn!("no labeled test ticket has exactly {} events", a.n_entries);
        Vec::new()
    } else {
        length_analysis(&rows, target.n_classes())?
    };
    if let Some(out) = &a.out {
        write_length_csv(create_file(out)?, target.name(), &points)?;
    }
    let summary = if points.is_empty() {
        format!(
            "no test tickets with exactly {} events; empty series",
            a.n_entries
        )
    } else {
        let f: Vec<String> = points.iter().map(|p| format!("{:.3}", p.f1)).collect();
        format!(
            "{target} f1 by entry over {} tickets: {}",
            bases.len(),
            f.join(" ")
        )
    };
    Ok(Report {
        json: json!({"target": target, "n_entries": a.n_entries, "bases": bases.len(), "points": points}),
        summary,
    })
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub target: Target,
    /// Model family; the config's `[tune] kind` otherwise.
    #[arg(long)]
    pub kind: Option<ModelKind>,
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long)]
    pub folds: Option<usize>,
    /// Trial history CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// TPE search scored by group k-fold weighted f1 on the training split.
pub fn tune_cmd(ctx: &RunContext, a: &TuneArgs) -> anyhow::Result<Report> {
    let t = &ctx.config.tune;
    let kind = a.kind.unwrap_or(t.kind);
    let space = match kind {
        ModelKind::RandomForest => rf_space(),
        ModelKind::Mlp => mlp_space(),
        ModelKind::Gbt => gbt_space(),
        other => bail!("no search space for {other}; tune random_forest, mlp or gbt"),
    };
    let mut tpe = TpeConfig::with_budget(a.budget.unwrap_or(t.budget), ctx.seed);
    match t.n_startup_trials {
        Some(n) => tpe.n_startup_trials = n,
        None if tpe.budget < tpe.n_startup_trials => {
            tracing::warn!(
                "budget {} is below the default startup phase; the search is pure random",
                tpe.budget
            );
            tpe.n_startup_trials = tpe.budget;
        }
        None => {}
    }
    if let Some(g) = t.gamma {
        tpe.gamma = g;
    }
    let dir = data_dir(&a.data, ctx)?;
    let table = Table::load(&dir)?;
    let data = table.dataset(Split::Train, a.target)?;
    let result = tune(kind, &space, &data, a.folds.unwrap_or(t.folds), &tpe)?;
    if let Some(out) = &a.out {
        write_history_csv(create_file(out)?, &result.trials)?;
    }
    let best = params_to_model(kind, &result.best_params, ctx.seed)?;
    let failed = result
        .trials
        .iter()
        .filter(|t| !t.mean_f1.is_finite())
        .count();
    Ok(Report {
        json: json!({
            "target": a.target,
            "kind": kind,
            "best_params": result.best_params,
            "best_mean_f1": result.best_mean_f1,
            "model": best,
            "trials": result.trials.len(),
            "failed": failed,
        }),
        summary: format!(
            "{} trials for {kind} on {}: best mean f1 {:.3}",
            result.trials.len(),
            a.target,
            result.best_mean_f1
        ),
    })
}

#[derive(Debug, Args)]
pub struct AlInitArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Session directory to create.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub preset: Option<String>,
    /// Expert-labeled tickets to start from; `[al] initial_size` otherwise.
    #[arg(long)]
    pub initial_size: Option<usize>,
}

pub fn al_init(ctx: &RunContext, a: &AlInitArgs) -> anyhow::Result<Report> {
    let cfg = &ctx.config;
    let data = data_dir(&a.data, ctx)?;
    let model = match &a.preset {
        Some(_) => None,
        None => cfg.model_choice()?.map(|c| c.params),
    };
    let req = SessionRequest {
        data: std::path::absolute(&data)?,
        corpus: cfg
            .data
            .corpus
            .as_deref()
            .map(std::path::absolute)
            .transpose()?,
        schema: cfg
            .data
            .schema
            .as_deref()
            .map(std::path::absolute)
            .transpose()?,
        preset: a.preset.clone(),
        model,
        targets: Some(cfg.al.targets.clone()),
        seed: ctx.seed,
        retrain_every: Some(cfg.al.retrain_every),
        initial_size: Some(a.initial_size.unwrap_or(cfg.al.initial_size)),
    };
    let session = create_session(&req, &a.out_dir)?;
    let s = session.summary();
    let proposal = session.propose_next().ok();
    Ok(Report {
        summary: format!(
            "session in {}: {} labeled, {} unlabeled ({} partial); first proposal {}",
            a.out_dir.display(),
            s.n_labeled,
            s.n_unlabeled,
            s.n_partially_labeled,
            proposal.as_ref().map_or("none".to_owned(), |p| format!(
                "{} / {} (H = {:.3})",
                p.base_id, p.target, p.entropy
            ))
        ),
        json: json!({"session_dir": a.out_dir, "summary": s, "proposal": proposal}),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    Entropy,
    Random,
    Both,
}

#[derive(Debug, Args)]
pub struct AlSimulateArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Defaults to `[al] strategy`, or both strategies.
    #[arg(long, value_enum)]
    pub strategy: Option<StrategyArg>,
    #[arg(long)]
    pub initial_size: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub preset: Option<String>,
    /// Learning curve CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Replays labeling on the training tickets with their expert labels as
/// oracle and scores every step on the test tickets.
pub fn al_simulate(ctx: &RunContext, a: &AlSimulateArgs) -> anyhow::Result<Report> {
    let cfg = &ctx.config;
    let dir = data_dir(&a.data, ctx)?;
    let table = Table::load(&dir)?;
    let targets = cfg.al.targets.clone();
    let oracle = |split: Split| -> anyhow::Result<SimulationPool> {
        let rows: Vec<_> = table
            .full_tickets(split)
            .into_iter()
            .filter(|r| targets.iter().all(|t| r.labels.class(*t).is_some()))
            .collect();
        Ok(SimulationPool::new(
            rows.iter().map(|r| r.base_id.clone()).collect(),
            rows.iter().map(|r| r.x.clone()).collect(),
            rows.iter().map(|r| r.labels).collect(),
        )?)
    };
    let pool = oracle(Split::Train)?;
    let heldout = oracle(Split::Test)?;
    if heldout.is_empty() {
        bail!("no test ticket carries labels for every AL target");
    }
    let strategies = match a.strategy.or(cfg.al.strategy.map(|s| match s {
        AcquisitionStrategy::Entropy => StrategyArg::Entropy,
        AcquisitionStrategy::Random => StrategyArg::Random,
    })) {
        Some(StrategyArg::Entropy) => vec![AcquisitionStrategy::Entropy],
        Some(StrategyArg::Random) => vec![AcquisitionStrategy::Random],
        None | Some(StrategyArg::Both) => {
            vec![AcquisitionStrategy::Entropy, AcquisitionStrategy::Random]
        }
    };
    let model = resolve_model(a.preset.as_deref(), cfg, ctx.seed)?.params;
    let mut curve = Vec::new();
    let mut runs = Vec::new();
    let mut lines = Vec::new();
    for strategy in strategies {
        let sim = SimulationConfig {
            model: model.clone(),
            strategy,
            initial_size: a.initial_size.unwrap_or(cfg.al.initial_size),
            steps: a.steps.unwrap_or(cfg.al.steps),
            seed: ctx.seed,
            targets: targets.clone(),
        };
        let r = simulate(&pool, &heldout, &sim)?;
        if r.truncated {
            tracing::warn!("{strategy}: more steps than unlabeled tickets; stopped early");
        }
        let last: BTreeMap<Target, f64> = r.curve.iter().map(|c| (c.target, c.f1)).collect();
        lines.push(format!(
            "{strategy:<8} {} proposals, final f1 {}",
            r.proposals.len(),
            last.iter()
                .map(|(t, f)| format!("{t} {f:.3}"))
                .collect::<Vec<_>>()
                .join(", ")
        ));
        runs.push(json!({
            "strategy": strategy,
            "proposals": r.proposals.len(),
            "truncated": r.truncated,
            "final_f1": last,
        }));
        curve.extend(r.curve);
    }
    if let Some(out) = &a.out {
        write_curve_csv(create_file(out)?, &curve)?;
    }
    Ok(Report {
        json: json!({"pool": pool.len(), "heldout": heldout.len(), "runs": runs, "curve": curve}),
        summary: lines.join("\n"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_paths_name_the_flag() {
        let err = pick(&None, &None, "--schema").unwrap_err().to_string();
        assert!(err.contains("--schema"), "{err}");
        let p = pick(&None, &Some(PathBuf::from("a")), "--x").unwrap();
        assert_eq!(p, PathBuf::from("a"));
    }

    #[test]
    fn model_id_is_the_file_name() {
        assert_eq!(model_id(Path::new("/tmp/x/debug.json")), "debug.json");
    }
}
