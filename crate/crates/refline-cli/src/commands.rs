//! Implementations of the six subcommands.

use std::fs;
use std::io::Write;

use chrono::{DateTime, SecondsFormat, Utc};
use rayon::prelude::*;
use serde::Serialize;

use refline::corpus::{write_jsonl, CorpusEntry, Label, LabeledDocument};
use refline::crf::CrfModel;
use refline::eval::{line_counts, reference_counts, Counts, Metrics};
use refline::extract::{extract as decode_references, group, ReferenceString};
use refline::features::{fired_names, vectorize};
use refline::model_io::{corpus_hash, load, save, ModelIoError, ModelMeta};
use refline::synth::{generate, GenConfig, GenMode, RefStyle};
use refline::train::{kfold_evaluate, train as fit, FoldOutcome};

use crate::corpus_io::{open_output, read_corpus, require_labeled};
use crate::settings::Settings;
use crate::{
    Cli, CliError, EvalArgs, ExtractArgs, FeaturesArgs, LabelArgs, ModeArg, StyleArg, SynthgenArgs,
    TrainArgs, EXIT_NON_CONVERGENCE,
};

impl From<refline::crf::CrfError> for CliError {
    fn from(err: refline::crf::CrfError) -> CliError {
        CliError::runtime(err.to_string())
    }
}

impl From<refline::eval::EvalError> for CliError {
    fn from(err: refline::eval::EvalError) -> CliError {
        CliError::runtime(err.to_string())
    }
}

fn load_model(path: &std::path::Path) -> Result<(CrfModel, ModelMeta), CliError> {
    load(path).map_err(|err| match err {
        ModelIoError::Io(e) => CliError::io(format!("{}: {e}", path.display())),
        other => other.into(),
    })
}

fn trained_at() -> String {
    std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|raw| raw.parse::<i64>().ok())
        .and_then(|secs| DateTime::<Utc>::from_timestamp(secs, 0))
        .unwrap_or_else(Utc::now)
        .to_rfc3339_opts(SecondsFormat::Secs, true)
}

pub fn train(cli: &Cli, settings: &Settings, args: &TrainArgs) -> Result<u8, CliError> {
    let mut entries = Vec::new();
    for path in &args.corpus {
        entries.extend(read_corpus(path, cli.format)?);
    }
    let hash = corpus_hash(&entries);
    let docs = require_labeled(entries)?;
    for doc in &docs {
        for warning in doc.validate() {
            eprintln!("warning: document {:?}: {warning}", doc.document.doc_id);
        }
    }

    let (model, report) = fit(
        &docs,
        &settings.features,
        settings.order,
        &settings.training,
    )?;
    let meta = ModelMeta {
        trained_at: trained_at(),
        corpus_hash: hash,
        objective: report.final_objective,
    };
    save(&model, &meta, &args.model_out).map_err(|err| match err {
        ModelIoError::Io(e) => CliError::io(format!("{}: {e}", args.model_out.display())),
        other => other.into(),
    })?;
    let report_path = args.model_out.with_extension("report.json");
    let mut report_json = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::runtime(format!("serializing training report: {e}")))?;
    report_json.push('\n');
    fs::write(&report_path, report_json)
        .map_err(|e| CliError::io(format!("{}: {e}", report_path.display())))?;

    println!(
        "trained on {} documents: {} features, {} iterations, objective {:.6}",
        docs.len(),
        model.space().len(),
        report.iterations,
        report.final_objective
    );
    println!("model written to {}", args.model_out.display());
    println!("report written to {}", report_path.display());

    if report.converged {
        Ok(0)
    } else {
        eprintln!(
            "warning: stopped after {} iterations without reaching tolerance",
            report.iterations
        );
        Ok(EXIT_NON_CONVERGENCE)
    }
}

/// One output line of `extract`: a document and its reference strings.
#[derive(Serialize)]
struct ExtractionRecord<'a> {
    doc_id: &'a str,
    references: Vec<ReferenceString>,
}

pub fn extract(cli: &Cli, settings: &Settings, args: &ExtractArgs) -> Result<u8, CliError> {
    let (model, _) = load_model(&args.model)?;
    let entries = read_corpus(&args.input, cli.format)?;
    let constraints = settings.constraints;

    let per_doc: Vec<Vec<ReferenceString>> = entries
        .par_iter()
        .map(|entry| decode_references(entry.document(), &model, constraints))
        .collect::<Result<_, _>>()?;

    let mut out = open_output(args.out.as_deref())?;
    for (entry, references) in entries.iter().zip(per_doc) {
        let record = ExtractionRecord {
            doc_id: &entry.document().doc_id,
            references,
        };
        let line = serde_json::to_string(&record)
            .map_err(|e| CliError::runtime(format!("serializing extraction: {e}")))?;
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(0)
}

fn decode(
    model: &CrfModel,
    constraints: Option<bool>,
    entry: &CorpusEntry,
) -> Result<Vec<Label>, CliError> {
    let xs = vectorize(entry.document(), model.feature_config(), model.space());
    let (path, _) = model.viterbi(&xs, constraints)?;
    Ok(path)
}

pub fn label(cli: &Cli, settings: &Settings, args: &LabelArgs) -> Result<u8, CliError> {
    let (model, _) = load_model(&args.model)?;
    let entries = read_corpus(&args.input, cli.format)?;
    let constraints = settings.constraints;

    let predictions: Vec<Vec<Label>> = entries
        .par_iter()
        .map(|entry| decode(&model, constraints, entry))
        .collect::<Result<_, _>>()?;

    // Column count is uniform across the file: gold labels are echoed only
    // when every document carries them.
    let echo_gold = entries.iter().all(|entry| entry.labels().is_some());
    let mut out = open_output(args.out.as_deref())?;
    for (i, (entry, pred)) in entries.iter().zip(&predictions).enumerate() {
        if i > 0 {
            writeln!(out)?;
        }
        for (t, line) in entry.document().lines.iter().enumerate() {
            if echo_gold {
                let gold = entry.labels().expect("checked above")[t];
                writeln!(out, "{}\t{gold}\t{}", line.text, pred[t])?;
            } else {
                writeln!(out, "{}\t{}", line.text, pred[t])?;
            }
        }
    }
    out.flush()?;
    Ok(0)
}

fn pooled_model_counts(
    model: &CrfModel,
    constraints: Option<bool>,
    docs: &[LabeledDocument],
) -> Result<Counts, CliError> {
    let per_doc: Vec<Counts> = docs
        .par_iter()
        .map(|doc| -> Result<Counts, CliError> {
            let xs = vectorize(&doc.document, model.feature_config(), model.space());
            let (pred, _) = model.viterbi(&xs, constraints)?;
            let mut counts = line_counts(&doc.labels, &pred)?;
            let gold_refs = group(&doc.document.lines, &doc.labels)?;
            let pred_refs = group(&doc.document.lines, &pred)?;
            counts.merge(&reference_counts(&gold_refs, &pred_refs));
            Ok(counts)
        })
        .collect::<Result<_, _>>()?;
    let mut pooled = Counts::default();
    for counts in &per_doc {
        pooled.merge(counts);
    }
    Ok(pooled)
}

fn print_metrics(metrics: &Metrics, documents: usize) {
    println!("micro-averaged over {documents} documents");
    println!(
        "{:<12} {:>9} {:>9} {:>9}",
        "label", "precision", "recall", "f1"
    );
    for label in Label::ALL {
        let prf = &metrics.per_label[label.index()];
        println!(
            "{:<12} {:>9.4} {:>9.4} {:>9.4}",
            label.as_str(),
            prf.precision,
            prf.recall,
            prf.f1
        );
    }
    let r = &metrics.references;
    println!(
        "{:<12} {:>9.4} {:>9.4} {:>9.4}",
        "reference", r.precision, r.recall, r.f1
    );
    println!(
        "line accuracy {:.4} ({}/{} lines)",
        metrics.line_accuracy, metrics.counts.lines_correct, metrics.counts.lines_total
    );
}

fn write_metrics_json<T: Serialize>(
    path: Option<&std::path::Path>,
    value: &T,
) -> Result<(), CliError> {
    let Some(path) = path else { return Ok(()) };
    let mut json = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::runtime(format!("serializing metrics: {e}")))?;
    json.push('\n');
    fs::write(path, json).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    Ok(())
}

/// Cross-fold arithmetic means of the headline quantities.
#[derive(Serialize)]
struct MeanMetrics {
    line_accuracy: f64,
    reference_precision: f64,
    reference_recall: f64,
    reference_f1: f64,
}

#[derive(Serialize)]
struct KfoldReport {
    folds: Vec<FoldOutcome>,
    mean: MeanMetrics,
}

pub fn eval(cli: &Cli, settings: &Settings, args: &EvalArgs) -> Result<u8, CliError> {
    let modes = usize::from(args.model.is_some())
        + usize::from(args.kfold.is_some())
        + usize::from(args.self_eval);
    if modes != 1 {
        return Err(CliError::config(
            "exactly one of --model, --kfold, or --self-eval is required",
        ));
    }
    let docs = require_labeled(read_corpus(&args.input, cli.format)?)?;

    if let Some(k) = args.kfold {
        let folds = kfold_evaluate(
            &docs,
            k,
            &settings.features,
            settings.order,
            &settings.training,
        )?;
        println!(
            "{:<6} {:>5} {:>9} {:>9} {:>9} {:>9}",
            "fold", "docs", "line_acc", "ref_p", "ref_r", "ref_f1"
        );
        let mut sums = [0.0f64; 4];
        for outcome in &folds {
            let m = &outcome.metrics;
            println!(
                "{:<6} {:>5} {:>9.4} {:>9.4} {:>9.4} {:>9.4}",
                outcome.fold,
                outcome.held_out.len(),
                m.line_accuracy,
                m.references.precision,
                m.references.recall,
                m.references.f1
            );
            sums[0] += m.line_accuracy;
            sums[1] += m.references.precision;
            sums[2] += m.references.recall;
            sums[3] += m.references.f1;
        }
        let n = folds.len() as f64;
        let mean = MeanMetrics {
            line_accuracy: sums[0] / n,
            reference_precision: sums[1] / n,
            reference_recall: sums[2] / n,
            reference_f1: sums[3] / n,
        };
        println!(
            "{:<6} {:>5} {:>9.4} {:>9.4} {:>9.4} {:>9.4}",
            "mean",
            "",
            mean.line_accuracy,
            mean.reference_precision,
            mean.reference_recall,
            mean.reference_f1
        );
        write_metrics_json(args.metrics_out.as_deref(), &KfoldReport { folds, mean })?;
        return Ok(0);
    }

    let pooled = if args.self_eval {
        let mut pooled = Counts::default();
        for doc in &docs {
            pooled.merge(&line_counts(&doc.labels, &doc.labels)?);
            let refs = group(&doc.document.lines, &doc.labels)?;
            pooled.merge(&reference_counts(&refs, &refs));
        }
        pooled
    } else {
        let model_path = args.model.as_ref().expect("mode check above");
        let (model, _) = load_model(model_path)?;
        pooled_model_counts(&model, settings.constraints, &docs)?
    };
    let metrics = Metrics::from_counts(pooled);
    print_metrics(&metrics, docs.len());
    write_metrics_json(args.metrics_out.as_deref(), &metrics)?;
    Ok(0)
}

pub fn features(cli: &Cli, settings: &Settings, args: &FeaturesArgs) -> Result<u8, CliError> {
    let filter = match &args.line {
        Some(selector) => {
            let (doc, idx) = selector.rsplit_once(':').ok_or_else(|| {
                CliError::config(format!(
                    "--line expects <doc_id>:<line_index>, got {selector:?}"
                ))
            })?;
            let idx: usize = idx
                .parse()
                .map_err(|e| CliError::config(format!("--line index: {e}")))?;
            Some((doc.to_string(), idx))
        }
        None => None,
    };

    let entries = read_corpus(&args.input, cli.format)?;
    let mut out = open_output(None)?;
    let mut matched = false;
    for entry in &entries {
        let document = entry.document();
        if let Some((doc_id, _)) = &filter {
            if &document.doc_id != doc_id {
                continue;
            }
        }
        for (idx, names) in fired_names(document, &settings.features).iter().enumerate() {
            if let Some((_, wanted)) = &filter {
                if idx != *wanted {
                    continue;
                }
            }
            matched = true;
            let joined: Vec<&str> = names.iter().map(String::as_str).collect();
            writeln!(out, "{}:{idx}\t{}", document.doc_id, joined.join(" "))?;
        }
    }
    out.flush()?;
    if filter.is_some() && !matched {
        return Err(CliError::config(format!(
            "--line {:?} matches no line in the corpus",
            args.line.as_deref().unwrap_or_default()
        )));
    }
    Ok(0)
}

pub fn synthgen(cli: &Cli, _settings: &Settings, args: &SynthgenArgs) -> Result<u8, CliError> {
    let mut config = GenConfig::default();
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(n) = args.n_documents {
        config.n_documents = n;
    }
    if let Some(mode) = args.mode {
        config.mode = match mode {
            ModeArg::EndSection => GenMode::EndSection,
            ModeArg::Footnotes => GenMode::Footnotes,
        };
    }
    if let Some(style) = args.style {
        config.style = match style {
            StyleArg::Numbered => RefStyle::Numbered,
            StyleArg::AuthorYear => RefStyle::AuthorYear,
            StyleArg::Mixed => RefStyle::Mixed,
        };
    }
    if let Some(range) = args.body_lines {
        config.body_lines = range;
    }
    if let Some(range) = args.references {
        config.references = range;
    }
    if let Some(height) = args.page_height {
        config.page_height = height;
    }
    if let Some(p) = args.hyphenation {
        config.hyphenation = p;
    }

    let corpus = generate(&config)?;
    let entries: Vec<CorpusEntry> = corpus.into_iter().map(CorpusEntry::Labeled).collect();
    let mut out = open_output(args.out.as_deref())?;
    write_jsonl(&mut out, &entries)?;
    out.flush()?;
    if let Some(path) = &args.out {
        println!("wrote {} documents to {}", entries.len(), path.display());
    }
    Ok(0)
}
