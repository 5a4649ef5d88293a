//! `tutor-intent` command line. Exit codes: 0 success, 1 usage error,
//! 2 runtime error.

use std::ffi::OsString;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::bench::{
    clustered_bootstrap, evaluate, render_report, roc_auc_from_confidences, EvalOptions, EvalResult, ReportFormat,
};
use crate::config::AppConfig;
use crate::corpus::{
    annotation_pairs, class_balance, compute_agreement, generate_synthetic_corpus, load_dataset, split_dataset, Dataset,
    SplitRatios, SplitResult,
};
use crate::dialogue::{DialogueEngine, TurnOutcome};
use crate::forest::{
    fit_pipeline, tune_pipeline, validation_macro_f1, FeaturesPerSplit, ForestClassifier, ForestParams, SearchSpace,
};
use crate::textfeat::TfIdfConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "tutor-intent", version, about = "Continue / change-topic intent detection for chat tutors")]
pub struct Cli {
    /// Log level filter (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "warn")]
    pub log_level: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic labeled corpus (JSONL).
    Synth(SynthArgs),
    /// Split a corpus into train/validation/test id lists.
    Split(SplitArgs),
    /// Inter-annotator agreement over doubly annotated messages.
    Agreement(AgreementArgs),
    /// Train a TF-IDF + random forest model.
    Train(TrainArgs),
    /// Random-search forest hyperparameters and save the best model.
    Tune(TuneArgs),
    /// Evaluate one backend on a split.
    Eval(EvalArgs),
    /// Evaluate every configured backend and render a comparison table.
    Bench(BenchArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
    /// Chat with the lesson on the terminal.
    Chat(ChatArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 806)]
    pub n: usize,
    /// Fraction of change-topic messages.
    #[arg(long, default_value_t = 0.0856)]
    pub rate: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value = "split.json")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.6)]
    pub train: f64,
    #[arg(long, default_value_t = 0.2)]
    pub validation: f64,
    #[arg(long, default_value_t = 0.2)]
    pub test: f64,
    /// Allocate whole conversations instead of individual messages.
    #[arg(long)]
    pub grouped: bool,
}

#[derive(Debug, Args)]
pub struct AgreementArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct VectorizerArgs {
    /// Longest n-gram in the vocabulary.
    #[arg(long, default_value_t = 2)]
    pub ngram_max: usize,
    #[arg(long, default_value_t = 1)]
    pub min_df: usize,
    #[arg(long)]
    pub no_normalize: bool,
}

impl VectorizerArgs {
    fn config(&self) -> TfIdfConfig {
        TfIdfConfig {
            ngram_max: self.ngram_max,
            l2_normalize: !self.no_normalize,
            min_df: self.min_df,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub split: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub n_trees: usize,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub min_samples_leaf: usize,
    /// Features tried per split: sqrt, all, a fraction in (0,1], or a count.
    #[arg(long, default_value = "sqrt", value_parser = parse_features)]
    pub features: FeaturesPerSplit,
    #[arg(long)]
    pub no_bootstrap: bool,
    /// Probability at or above which a message is change_topic.
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    #[command(flatten)]
    pub vectorizer: VectorizerArgs,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub split: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 25)]
    pub budget: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Write every trial's parameters and score here (JSON).
    #[arg(long)]
    pub trials: Option<PathBuf>,
    #[command(flatten)]
    pub vectorizer: VectorizerArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Subset {
    Train,
    Validation,
    Test,
    All,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Corpus; defaults to the config's data.corpus.
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// Split file; defaults to the config's data.split. Without one the whole corpus is used.
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "test")]
    pub subset: Subset,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Backend configuration (TOML).
    #[arg(long, required_unless_present = "model")]
    pub config: Option<PathBuf>,
    /// Forest model file, instead of a config.
    #[arg(long, conflicts_with = "config")]
    pub model: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Per-message records (JSONL).
    #[arg(long)]
    pub records: Option<PathBuf>,
    /// Conversation-clustered bootstrap resamples; 0 disables.
    #[arg(long, default_value_t = 1000)]
    pub bootstrap: usize,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = "markdown")]
    pub format: ReportFormat,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides service.bind.
    #[arg(long)]
    pub bind: Option<String>,
}

#[derive(Debug, Args)]
pub struct ChatArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value = "local")]
    pub conversation_id: String,
}

fn parse_features(s: &str) -> std::result::Result<FeaturesPerSplit, String> {
    match s {
        "sqrt" => Ok(FeaturesPerSplit::Sqrt),
        "all" => Ok(FeaturesPerSplit::All),
        _ if s.contains('.') => s
            .parse::<f64>()
            .map(FeaturesPerSplit::Fraction)
            .map_err(|_| format!("invalid fraction {s:?}")),
        _ => s
            .parse::<usize>()
            .map(FeaturesPerSplit::Count)
            .map_err(|_| format!("expected sqrt, all, a fraction or a count, got {s:?}")),
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn load_split_sets(corpus: &Path, split: &Path) -> Result<(Dataset, SplitResult)> {
    let ds = load_dataset(corpus).with_context(|| format!("loading {}", corpus.display()))?;
    let sp = SplitResult::load(split).with_context(|| format!("loading {}", split.display()))?;
    Ok((ds, sp))
}

fn select(ds: &Dataset, split: Option<&SplitResult>, subset: Subset) -> Result<Dataset> {
    let ids = match (split, subset) {
        (_, Subset::All) | (None, _) => return Ok(ds.clone()),
        (Some(s), Subset::Train) => &s.train,
        (Some(s), Subset::Validation) => &s.validation,
        (Some(s), Subset::Test) => &s.test,
    };
    Ok(ds.subset(ids)?)
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let ds = generate_synthetic_corpus(a.n, a.rate, a.seed)?;
    ds.save(&a.out)?;
    let positives = ds.labels().iter().filter(|l| l.is_positive()).count();
    println!(
        "wrote {} messages in {} conversations ({positives} change_topic) to {}",
        ds.len(),
        ds.conversation_ids().len(),
        a.out.display()
    );
    Ok(())
}

fn cmd_split(a: SplitArgs) -> Result<()> {
    let ds = load_dataset(&a.input)?;
    let ratios = SplitRatios::new(a.train, a.validation, a.test)?;
    let split = split_dataset(&ds, ratios, a.seed, a.grouped)?;
    split.save(&a.out)?;
    let [tr, va, te] = split.sizes();
    println!("train {tr}, validation {va}, test {te} messages -> {}", a.out.display());
    Ok(())
}

fn cmd_agreement(a: AgreementArgs) -> Result<()> {
    let ds = load_dataset(&a.input)?;
    let report = compute_agreement(&annotation_pairs(&ds))?;
    print_json(&report)
}

#[derive(Serialize)]
struct TrainSummary {
    model: PathBuf,
    n_train: usize,
    n_validation: usize,
    train_change_topic_rate: f64,
    validation_macro_f1: Option<f64>,
    params: ForestParams,
}

fn validation_score(model: &ForestClassifier, validation: &Dataset) -> Option<f64> {
    let x = model.tfidf.transform_all(&validation.texts());
    match validation_macro_f1(&model.forest, &x, &validation.labels()) {
        Ok(f) => Some(f),
        Err(e) => {
            log::warn!("validation macro-F1 unavailable: {e}");
            None
        }
    }
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let (ds, sp) = load_split_sets(&a.input, &a.split)?;
    let train = ds.subset(&sp.train)?;
    let params = ForestParams {
        n_trees: a.n_trees,
        max_depth: a.max_depth,
        min_samples_leaf: a.min_samples_leaf,
        features_per_split: a.features,
        bootstrap: !a.no_bootstrap,
        seed: a.seed,
    };
    if !(0.0..=1.0).contains(&a.threshold) {
        bail!("threshold must lie in [0, 1]");
    }
    let model = fit_pipeline(&train, a.vectorizer.config(), params, a.threshold)?;
    model.to_model_file().save(&a.out)?;
    let validation = if sp.validation.is_empty() {
        None
    } else {
        Some(ds.subset(&sp.validation)?)
    };
    let f1 = validation.as_ref().and_then(|v| validation_score(&model, v));
    match f1 {
        Some(f) => eprintln!("validation macro-F1: {f:.4}"),
        None => eprintln!("validation macro-F1: n/a"),
    }
    print_json(&TrainSummary {
        model: a.out,
        n_train: train.len(),
        n_validation: validation.map_or(0, |v| v.len()),
        train_change_topic_rate: class_balance(&train),
        validation_macro_f1: f1,
        params,
    })
}

fn cmd_tune(a: TuneArgs) -> Result<()> {
    let (ds, sp) = load_split_sets(&a.input, &a.split)?;
    let train = ds.subset(&sp.train)?;
    let validation = ds.subset(&sp.validation)?;
    let (model, result) = tune_pipeline(&train, &validation, a.vectorizer.config(), &SearchSpace::default(), a.budget, a.seed)?;
    model.to_model_file().save(&a.out)?;
    if let Some(p) = &a.trials {
        std::fs::write(p, serde_json::to_string_pretty(&result.trials)?)?;
    }
    eprintln!("validation macro-F1: {:.4}", result.best_validation_macro_f1);
    print_json(&serde_json::json!({
        "model": a.out,
        "best": result.best,
        "best_validation_macro_f1": result.best_validation_macro_f1,
        "n_trials": result.trials.len(),
    }))
}

fn data_for(args: &DataArgs, config: Option<&AppConfig>) -> Result<Dataset> {
    let corpus = args
        .input
        .clone()
        .or_else(|| config.and_then(|c| c.data.corpus.clone()))
        .context("no corpus given (use --in or data.corpus)")?;
    let ds = load_dataset(&corpus).with_context(|| format!("loading {}", corpus.display()))?;
    let split_path = args.split.clone().or_else(|| config.and_then(|c| c.data.split.clone()));
    let split = match &split_path {
        Some(p) => Some(SplitResult::load(p).with_context(|| format!("loading {}", p.display()))?),
        None => None,
    };
    select(&ds, split.as_ref(), args.subset)
}

#[derive(Serialize)]
struct EvalSummary {
    result: EvalResult,
    confusion: crate::bench::ConfusionMatrix,
    roc_auc: Option<f64>,
    uncertainty: Option<crate::bench::UncertaintyReport>,
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let config = match (&a.config, &a.model) {
        (Some(c), _) => AppConfig::load(c)?,
        (None, Some(m)) => {
            let mut spec = crate::config::BackendSpec::of_kind(crate::config::BackendKind::Forest);
            spec.model_path = Some(m.clone());
            AppConfig::with_backend(spec)
        }
        (None, None) => unreachable!("clap requires one"),
    };
    let test = data_for(&a.data, Some(&config))?;
    let built = config.backend.build_classifier()?;
    let options = EvalOptions {
        decision_threshold: a.threshold,
        warm_up: true,
        scripts: config.scripts()?,
    };
    let ev = evaluate(built.classifier.as_ref(), &test, &options)?;
    if let Some(p) = &a.records {
        std::fs::write(p, ev.records_jsonl())?;
    }
    let confidences: Vec<Option<f64>> = ev.records.iter().map(|r| r.confidence).collect();
    let roc_auc = roc_auc_from_confidences(&confidences, &test.labels()).ok();
    let uncertainty = if a.bootstrap > 0 {
        let convs: Vec<&str> = test.messages.iter().map(|m| m.conversation_id.as_str()).collect();
        match clustered_bootstrap(&ev.pairs(), &convs, a.bootstrap, a.seed.unwrap_or(config.seed)) {
            Ok(u) => Some(u),
            Err(e) => {
                log::warn!("bootstrap skipped: {e}");
                None
            }
        }
    } else {
        None
    };
    print_json(&EvalSummary {
        result: ev.result,
        confusion: ev.confusion,
        roc_auc,
        uncertainty,
    })
}

fn cmd_bench(a: BenchArgs) -> Result<()> {
    let config = AppConfig::load(&a.config)?;
    let test = data_for(&a.data, Some(&config))?;
    let options = EvalOptions {
        decision_threshold: a.threshold,
        warm_up: true,
        scripts: config.scripts()?,
    };
    let mut results = Vec::new();
    for spec in config.bench_backends() {
        let built = spec.build_classifier()?;
        let label = built.classifier.label();
        log::info!("evaluating {label} on {} messages", test.len());
        let ev = evaluate(built.classifier.as_ref(), &test, &options).with_context(|| format!("evaluating {label}"))?;
        results.push(ev.result);
    }
    let report = render_report(&results, a.format)?;
    match &a.out {
        Some(p) => std::fs::write(p, &report)?,
        None => print!("{report}"),
    }
    Ok(())
}

fn cmd_serve(a: ServeArgs) -> Result<()> {
    let mut config = AppConfig::load(&a.config)?;
    if let Some(b) = a.bind {
        config.service.bind = b;
    }
    crate::service::serve(&config)
}

fn cmd_chat(a: ChatArgs) -> Result<()> {
    let config = AppConfig::load(&a.config)?;
    let built = config.backend.build_classifier()?;
    let engine = DialogueEngine::new(config.scripts()?, config.policy)?;
    let mut state = engine.start(a.conversation_id);
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    writeln!(out, "tutor> {}", engine.scripts()[0].description)?;
    out.flush()?;
    for line in std::io::stdin().lock().lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (next, outcome) = engine.handle_turn(&state, &line, built.classifier.as_ref(), built.replies.as_ref())?;
        state = next;
        match outcome {
            TurnOutcome::Reply { text } => writeln!(out, "tutor> {text}")?,
            TurnOutcome::Navigation { kind } => {
                writeln!(out, "[navigation: {}]", kind.as_str())?;
                break;
            }
        }
        out.flush()?;
    }
    Ok(())
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Synth(a) => cmd_synth(a),
        Command::Split(a) => cmd_split(a),
        Command::Agreement(a) => cmd_agreement(a),
        Command::Train(a) => cmd_train(a),
        Command::Tune(a) => cmd_tune(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Serve(a) => cmd_serve(a),
        Command::Chat(a) => cmd_chat(a),
    }
}

/// Parses `argv`, runs the subcommand and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    let _ = env_logger::Builder::new().parse_filters(&cli.log_level).try_init();
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_RUNTIME
        }
    }
}
