use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context as _;
use clap::{Parser, Subcommand};
use triage_cli::commands::{self, Report, RunContext};
use triage_cli::config::Config;
use triage_cli::service::{self, AppState, Predictor};
use triage_cli::workdir::FEATURE_SPEC;

#[derive(Debug, Parser)]
#[command(
    name = "triage",
    version,
    about = "Bug-ticket triage: features, models, active learning and evaluation"
)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Suppress the human summary on stderr.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic corpus, labels, schema and config.
    Synth(commands::SynthArgs),
    /// Validate a ticket file against a schema.
    Ingest(commands::IngestArgs),
    /// Expand base tickets into one derived ticket per history prefix.
    Expand(commands::ExpandArgs),
    /// Split the corpus, fit the feature spec and write feature vectors.
    Featurize(commands::FeaturizeArgs),
    /// Fixing-time classes and expert labels for every derived ticket.
    LabelExtract(commands::LabelExtractArgs),
    /// Create an active-learning session directory.
    AlInit(commands::AlInitArgs),
    /// Simulate active learning against known labels.
    AlSimulate(commands::AlSimulateArgs),
    /// Train one model for one target.
    Train(commands::TrainArgs),
    /// Tune hyper-parameters with TPE and group k-fold.
    Tune(commands::TuneArgs),
    /// Score models on the test split.
    Eval(commands::EvalArgs),
    /// Score a model per prefix length on tickets of one length.
    LengthAnalysis(commands::LengthArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, clap::Args)]
struct ServeArgs {
    #[arg(long)]
    addr: Option<String>,
    #[arg(long)]
    sessions_dir: Option<PathBuf>,
    /// Model blobs for /predict; repeat for several targets.
    #[arg(long = "model")]
    models: Vec<PathBuf>,
    /// Work directory with the feature spec the models were trained on.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
}

fn serve(ctx: &RunContext, a: &ServeArgs) -> anyhow::Result<()> {
    let cfg = &ctx.config;
    let models = if a.models.is_empty() {
        cfg.serve.models.clone()
    } else {
        a.models.clone()
    };
    let predictor = if models.is_empty() {
        None
    } else {
        let data = a
            .data
            .clone()
            .or(cfg.data.workdir.clone())
            .context("/predict needs --data")?;
        let schema = a
            .schema
            .clone()
            .or(cfg.data.schema.clone())
            .context("/predict needs --schema")?;
        let emb = a.embeddings.clone().or(cfg.data.embeddings.clone());
        Some(Predictor::load(
            &schema,
            &data.join(FEATURE_SPEC),
            &models,
            emb.as_deref(),
        )?)
    };
    let root = a
        .sessions_dir
        .clone()
        .unwrap_or(cfg.serve.sessions_dir.clone());
    let state = AppState::open(&root, predictor)?;
    let addr = a.addr.clone().unwrap_or(cfg.serve.addr.clone());
    tokio::runtime::Runtime::new()?.block_on(service::serve(state, &addr))
}

fn run(cli: Cli) -> anyhow::Result<Option<Report>> {
    let config = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let ctx = RunContext {
        seed: cli.seed.unwrap_or(config.seed),
        config,
    };
    let report = match &cli.command {
        Command::Synth(a) => commands::synth(&ctx, a)?,
        Command::Ingest(a) => commands::ingest(&ctx, a)?,
        Command::Expand(a) => commands::expand(&ctx, a)?,
        Command::Featurize(a) => commands::featurize(&ctx, a)?,
        Command::LabelExtract(a) => commands::label_extract(&ctx, a)?,
        Command::AlInit(a) => commands::al_init(&ctx, a)?,
        Command::AlSimulate(a) => commands::al_simulate(&ctx, a)?,
        Command::Train(a) => commands::train(&ctx, a)?,
        Command::Tune(a) => commands::tune_cmd(&ctx, a)?,
        Command::Eval(a) => commands::eval(&ctx, a)?,
        Command::LengthAnalysis(a) => commands::length(&ctx, a)?,
        Command::Serve(a) => {
            serve(&ctx, a)?;
            return Ok(None);
        }
    };
    Ok(Some(report))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| {
                tracing_subscriber::EnvFilter::new(if cli.quiet { "error" } else { "info" })
            }),
        )
        .with_writer(std::io::stderr)
        .init();
    let quiet = cli.quiet;
    match run(cli) {
        Ok(Some(report)) => {
            let text = serde_json::to_string_pretty(&report.json).expect("report serializes");
            let mut out = std::io::stdout().lock();
            // A closed pipe (`| head`) is not an error worth reporting.
            let _ = writeln!(out, "{text}").and_then(|_| out.flush());
            if !quiet {
                eprintln!("{}", report.summary);
            }
            ExitCode::SUCCESS
        }
        Ok(None) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
