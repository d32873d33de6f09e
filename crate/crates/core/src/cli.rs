//! The `agrisent` command line: one binary, one subcommand per pipeline step.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or config error, 3 numeric
//! failure.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::corpus::{normalize_text, read_texts, LabelKind, Scheme, Source};
use crate::embeddings::{featurize, featurize_tokens, load_embeddings, write_feature_cache, FeaturizedExample};
use crate::error::{Error, Result};
use crate::experiments::{
    binary_ternary_comparison, emit_report, evaluate, infusion_run, misclassification_report, parse_config,
    parse_report_json, sweep, train_run, ExperimentConfig, Report, ReportFormat,
};
use crate::models::{load_model, predict, save_model};

pub const DEFAULT_SEED: u64 = 42;

/// Optional cap on sweep concurrency when `--threads` is absent.
pub const THREADS_ENV: &str = "AGRISENT_THREADS";

#[derive(Debug, Parser)]
#[command(name = "agrisent", version, about = "Sentiment classifiers and transfer-learning experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Map a labeled CSV to embedding-row indices and write an FTZ1 cache.
    Featurize(FeaturizeArgs),
    /// Train one model with best-dev checkpointing.
    Train(TrainArgs),
    /// Cross-validate every point of a grid and rank them.
    Sweep(SweepArgs),
    /// Accuracy and confusion matrix of a saved model on a labeled CSV.
    Evaluate(EvaluateArgs),
    /// Class probabilities for every row of a CSV.
    Predict(PredictArgs),
    /// Train on a source corpus with a validation set partly drawn from AG.
    Infuse(InfuseArgs),
    /// Train the same config under the ternary and binary schemes.
    Compare23(Compare23Args),
    /// Collect run reports under a directory into one CSV.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SchemeArgs {
    /// Label scheme of the input file (five, ternary, binary).
    #[arg(long)]
    pub scheme: Option<Scheme>,
    /// integer or continuous.
    #[arg(long = "label-kind")]
    pub label_kind: Option<LabelKind>,
}

#[derive(Debug, Args)]
pub struct FeaturizeArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub glove: PathBuf,
    #[arg(long = "max-len", default_value_t = crate::embeddings::DEFAULT_MAX_LEN)]
    pub max_len: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub scheme: SchemeArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub dev: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long)]
    pub glove: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub glove: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub glove: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub scheme: SchemeArgs,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub glove: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InfuseArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long)]
    pub ag: PathBuf,
    #[arg(long)]
    pub fraction: f64,
    #[arg(long)]
    pub glove: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct Compare23Args {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub glove: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub runs: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut config = parse_config(&read_text(path)?)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    log::info!("seed {}", config.seed);
    Ok(config)
}

/// Config for reading an input file whose scheme is given by flags, falling
/// back to `default_scheme`.
fn input_config(flags: &SchemeArgs, default_scheme: Scheme) -> ExperimentConfig {
    let label_kind = flags.label_kind.unwrap_or(LabelKind::Integer);
    let scheme = match label_kind {
        LabelKind::Continuous => Scheme::Ternary,
        LabelKind::Integer => flags.scheme.unwrap_or(default_scheme),
    };
    ExperimentConfig {
        scheme: default_scheme,
        input_scheme: scheme,
        label_kind,
        ..ExperimentConfig::default()
    }
}

fn write_reports(reports: &[Report], path: &Path) -> Result<()> {
    emit_report(reports, path, ReportFormat::Json)?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn run_featurize(a: &FeaturizeArgs) -> Result<()> {
    let table = load_embeddings(&a.glove)?;
    let config = input_config(&a.scheme, a.scheme.scheme.unwrap_or(Scheme::Ternary));
    let corpus = config.load_corpus(&a.input)?;
    let examples = featurize(&corpus, &table, a.max_len)?;
    write_feature_cache(&a.out, &examples, a.max_len, table.dim())?;
    log::info!("wrote {} example(s) to {}", examples.len(), a.out.display());
    Ok(())
}

fn run_train(a: &TrainArgs) -> Result<()> {
    let config = load_config(&a.config, a.seed)?;
    let table = load_embeddings(&a.glove)?;
    let train = config.load_corpus(&a.train)?;
    let dev = config.load_corpus(&a.dev)?;
    let test = config.load_corpus(&a.test)?;
    let (model, report) = train_run(&config, &table, &train, &dev, &test)?;
    create_dir(&a.out)?;
    save_model(&model, a.out.join("model.bin"))?;
    log::info!(
        "best epoch {} (dev {:.4}), test accuracy {:.4}",
        report.best_epoch,
        report.best_dev_accuracy,
        report.test_accuracy
    );
    write_reports(&[Report::Run(report)], &a.out.join("report.json"))
}

fn sweep_threads(flag: Option<usize>) -> Result<Option<usize>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::Usage(format!("{THREADS_ENV}={v} is not a thread count"))),
        Err(_) => Ok(None),
    }
}

fn run_sweep(a: &SweepArgs) -> Result<()> {
    let mut base = ExperimentConfig::default();
    if let Some(s) = a.seed {
        base.seed = s;
    }
    log::info!("seed {}", base.seed);
    let grid = read_text(&a.grid)?;
    let table = load_embeddings(&a.glove)?;
    let corpus = base.load_corpus(&a.data)?;
    let summaries = sweep(&grid, &base, &table, &corpus, sweep_threads(a.threads)?)?;
    if let Some(top) = summaries.first() {
        log::info!("best: median {:.4}, IQR {:.4} ({})", top.median, top.iqr, top.config_hash);
    }
    let reports: Vec<Report> = summaries.into_iter().map(Report::Cv).collect();
    create_dir(&a.out)?;
    write_reports(&reports, &a.out.join("sweep.json"))?;
    emit_report(&reports, a.out.join("sweep.csv"), ReportFormat::Csv)
}

fn run_evaluate(a: &EvaluateArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let table = load_embeddings(&a.glove)?;
    let scheme = Scheme::from_num_classes(model.num_classes())
        .ok_or_else(|| Error::ModelMismatch(format!("no label scheme has {} classes", model.num_classes())))?;
    let corpus = input_config(&a.scheme, scheme).load_corpus(&a.data)?;
    let eval = evaluate(&model, &table, &corpus)?;
    let missed = misclassification_report(&model, &table, &corpus, 20)?;
    let doc = serde_json::json!({
        "format_version": crate::experiments::REPORT_FORMAT_VERSION,
        "examples": corpus.len(),
        "accuracy": eval.accuracy,
        "confusion": eval.confusion,
        "misclassified": missed.iter().map(|m| serde_json::json!({
            "text": m.text,
            "true": m.true_label,
            "predicted": m.predicted_label,
            "probability": m.probability,
        })).collect::<Vec<_>>(),
    });
    log::info!("accuracy {:.4} on {} example(s)", eval.accuracy, corpus.len());
    std::fs::write(&a.out, serde_json::to_string_pretty(&doc)?).map_err(|e| Error::io(&a.out, e))
}

/// `prob_neg`, `prob_neu`, `prob_pos` and so on.
pub fn probability_columns(scheme: Scheme) -> Vec<String> {
    (0..scheme.num_classes())
        .map(|c| {
            let short = match scheme.class_name(c) {
                "very_negative" => "vneg",
                "negative" => "neg",
                "neutral" => "neu",
                "positive" => "pos",
                "very_positive" => "vpos",
                other => other,
            };
            format!("prob_{short}")
        })
        .collect()
}

fn run_predict(a: &PredictArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let table = load_embeddings(&a.glove)?;
    let scheme = Scheme::from_num_classes(model.num_classes())
        .ok_or_else(|| Error::ModelMismatch(format!("no label scheme has {} classes", model.num_classes())))?;
    let texts = read_texts(&a.input)?;
    let batch: Vec<FeaturizedExample> = texts
        .iter()
        .map(|t| {
            let (indices, length) = featurize_tokens(&normalize_text(t), &table, model.max_len);
            FeaturizedExample {
                indices,
                length,
                label: 0,
            }
        })
        .collect();
    let csv_err = |e: csv::Error| Error::Csv {
        path: a.out.clone(),
        source: e,
    };
    let mut w = csv::Writer::from_path(&a.out).map_err(csv_err)?;
    let mut header = vec!["text".to_string(), "predicted".to_string()];
    header.extend(probability_columns(scheme));
    w.write_record(&header).map_err(csv_err)?;
    if !batch.is_empty() {
        let (predicted, probs) = predict(&model, &table, &batch)?;
        for (i, text) in texts.iter().enumerate() {
            let mut row = vec![text.clone(), scheme.class_name(predicted[i]).to_string()];
            row.extend(probs.row(i).iter().map(|p| format!("{p:.6}")));
            w.write_record(&row).map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| Error::io(&a.out, e))?;
    log::info!("wrote {} prediction(s) to {}", texts.len(), a.out.display());
    Ok(())
}

fn run_infuse(a: &InfuseArgs) -> Result<()> {
    let mut config = load_config(&a.config, a.seed)?;
    config.infusion_fraction = a.fraction;
    config.validate()?;
    let table = load_embeddings(&a.glove)?;
    let source = config.load_corpus(&a.source)?;
    let target = ExperimentConfig {
        source: Source::AG,
        ..config.clone()
    }
    .load_corpus(&a.ag)?;
    let (model, report) = infusion_run(&config, &table, &source, &target)?;
    log::info!("infusion {}: test accuracy {:.4}", a.fraction, report.test_accuracy);
    create_dir(&a.out)?;
    save_model(&model, a.out.join("model.bin"))?;
    write_reports(&[Report::Run(report)], &a.out.join("report.json"))
}

fn run_compare23(a: &Compare23Args) -> Result<()> {
    let config = load_config(&a.config, a.seed)?;
    let table = load_embeddings(&a.glove)?;
    let corpus = ExperimentConfig {
        scheme: Scheme::Ternary,
        ..config.clone()
    }
    .load_corpus(&a.data)?;
    let cmp = binary_ternary_comparison(&config, &table, &corpus)?;
    println!(
        "ternary {:.4}\tbinary {:.4}",
        cmp.ternary.test_accuracy, cmp.binary.test_accuracy
    );
    create_dir(&a.out)?;
    write_reports(&[Report::Run(cmp.ternary), Report::Run(cmp.binary)], &a.out.join("report.json"))
}

fn json_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            json_files(&path, out)?;
        } else if path.extension().is_some_and(|x| x == "json") {
            out.push(path);
        }
    }
    Ok(())
}

fn run_report(a: &ReportArgs) -> Result<()> {
    let mut files = Vec::new();
    json_files(&a.runs, &mut files)?;
    files.sort();
    let mut reports = Vec::new();
    for f in &files {
        let text = read_text(f)?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        if value.get("reports").is_none() {
            log::debug!("{}: not a report document, skipped", f.display());
            continue;
        }
        reports.extend(parse_report_json(&text)?.reports);
    }
    if reports.is_empty() {
        return Err(Error::InsufficientData(format!("no reports under {}", a.runs.display())));
    }
    emit_report(&reports, &a.out, ReportFormat::Csv)?;
    log::info!("wrote {} report row(s) to {}", reports.len(), a.out.display());
    Ok(())
}

/// Runs a parsed invocation.
pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Featurize(a) => run_featurize(a),
        Command::Train(a) => run_train(a),
        Command::Sweep(a) => run_sweep(a),
        Command::Evaluate(a) => run_evaluate(a),
        Command::Predict(a) => run_predict(a),
        Command::Infuse(a) => run_infuse(a),
        Command::Compare23(a) => run_compare23(a),
        Command::Report(a) => run_report(a),
    }
}

/// Parses `argv` (program name first), runs it and returns the exit code.
pub fn main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .try_init();
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            log::error!("{e}");
            e.exit_code()
        }
    }
}
