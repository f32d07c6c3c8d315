//! Persistence of trained models in a versioned, human-inspectable format.
//!
//! Models are small (10⁴–10⁵ weights), so a plain-text key-value format is
//! used instead of a binary one: weights can be inspected and diffed with
//! ordinary tools, which is invaluable when debugging feature templates. The
//! file is canonical — for a given model the bytes are always identical —
//! and is the compatibility contract between trainer and extractor.
//!
//! # Format (version 1)
//!
//! A UTF-8 text file with `\n` line endings. A header of tab-separated
//! `key\tvalue` lines in fixed order, then one `name\tweight` line per
//! feature, sorted lexicographically by name (the same byte order the
//! [`FeatureSpace`] assigns indices in):
//!
//! ```text
//! format_version\t1
//! order\t2
//! labels\tB-REF I-REF O-REF O
//! trained_at\t2026-02-11T09:30:00Z
//! corpus_hash\t3a7bd3e2360a3d29eea436fcfb7e44c735d117c42d1c1835420b6b9942dd4f1b
//! objective\t-4.2191624128500001e1
//! feature_config\t{"templates":{...},"window":2,...}
//! weights\t21
//! T:B-REF>B-REF\t1.2500000000000000e0
//! bias~B-REF\t-3.7252902984619141e-1
//! ...
//! ```
//!
//! Weights (and the objective) are rendered with 17 significant digits,
//! which round-trips every finite `f64` exactly; the feature configuration
//! is inlined as a single JSON object, gazetteers included. Loading rebuilds
//! the [`FeatureSpace`] from the sorted weight names, so a loaded model
//! decodes bit-identically to the saved one.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{CorpusEntry, Label};
use crate::crf::{CrfError, CrfModel};
use crate::features::{FeatureConfig, FeatureSpace};

/// The only format version this build reads and writes.
pub const FORMAT_VERSION: &str = "1";

/// Training provenance stored alongside the weights.
///
/// The library treats all three fields as opaque values supplied by the
/// caller; the command-line tool fills them in after training.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModelMeta {
    /// When training finished, as an RFC 3339 timestamp.
    pub trained_at: String,
    /// Hex SHA-256 of the canonical JSONL form of the training corpus.
    pub corpus_hash: String,
    /// Final value of the regularized training objective.
    pub objective: f64,
}

/// Errors raised while saving or loading model files.
#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("unknown model format version {found:?}")]
    UnknownVersion { found: String },
    #[error("missing field {field:?}")]
    MissingField { field: &'static str },
    #[error("line {line}: unexpected field {field:?}")]
    UnexpectedField { field: String, line: usize },
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("unsupported label set {found:?}")]
    LabelSet { found: String },
    #[error("invalid feature configuration: {reason}")]
    InvalidConfig { reason: String },
    #[error("weight count mismatch: missing key {name:?}")]
    WeightCountMismatch { name: String },
    #[error("weight count mismatch: header declares {declared} weights, file has {found}")]
    WeightCountHeader { declared: usize, found: usize },
    #[error("line {line}: weight keys out of order at {name:?}")]
    UnsortedKey { line: usize, name: String },
    #[error(transparent)]
    Crf(CrfError),
}

/// Serializes `model` and `meta` into the canonical version-1 byte form.
pub fn write_model<W: Write>(
    writer: &mut W,
    model: &CrfModel,
    meta: &ModelMeta,
) -> Result<(), ModelIoError> {
    let config_json = serde_json::to_string(model.feature_config())
        .expect("feature configuration serializes infallibly");
    let labels = Label::ALL.map(|l| l.as_str()).join(" ");
    writeln!(writer, "format_version\t{FORMAT_VERSION}")?;
    writeln!(writer, "order\t{}", model.order())?;
    writeln!(writer, "labels\t{labels}")?;
    writeln!(writer, "trained_at\t{}", meta.trained_at)?;
    writeln!(writer, "corpus_hash\t{}", meta.corpus_hash)?;
    writeln!(writer, "objective\t{}", render_f64(meta.objective))?;
    writeln!(writer, "feature_config\t{config_json}")?;
    writeln!(writer, "weights\t{}", model.space().len())?;
    // FeatureSpace order is lexicographic by construction, so emitting in
    // index order yields the canonical sorted form.
    for (name, weight) in model.space().names().zip(model.weights()) {
        writeln!(writer, "{name}\t{}", render_f64(*weight))?;
    }
    Ok(())
}

/// Writes the canonical model file at `path`, replacing any existing file.
pub fn save(model: &CrfModel, meta: &ModelMeta, path: &Path) -> Result<(), ModelIoError> {
    let mut writer = BufWriter::new(File::create(path)?);
    write_model(&mut writer, model, meta)?;
    writer.flush()?;
    Ok(())
}

/// Parses a version-1 model file.
///
/// The loaded model decodes identically to the one that was saved: weight
/// names rebuild the [`FeatureSpace`], weights re-parse exactly from their
/// 17-significant-digit rendering, and the BIO decode constraint default is
/// on, as for any freshly trained model.
pub fn read_model<R: Read>(reader: R) -> Result<(CrfModel, ModelMeta), ModelIoError> {
    let mut lines = Vec::new();
    for line in BufReader::new(reader).lines() {
        lines.push(line?);
    }
    let mut cursor = 0usize;

    let (key, value) = split_field(&lines, cursor)?;
    if key != "format_version" {
        return Err(ModelIoError::MissingField {
            field: "format_version",
        });
    }
    if value != FORMAT_VERSION {
        return Err(ModelIoError::UnknownVersion {
            found: value.to_string(),
        });
    }
    cursor += 1;

    let mut order: Option<usize> = None;
    let mut labels: Option<String> = None;
    let mut trained_at: Option<String> = None;
    let mut corpus_hash: Option<String> = None;
    let mut objective: Option<f64> = None;
    let mut feature_config: Option<FeatureConfig> = None;
    let mut declared: Option<usize> = None;

    while cursor < lines.len() {
        let (key, value) = split_field(&lines, cursor)?;
        let line = cursor + 1;
        match key {
            "order" => {
                order = Some(value.parse().map_err(|_| ModelIoError::Malformed {
                    line,
                    reason: format!("unparseable order {value:?}"),
                })?)
            }
            "labels" => labels = Some(value.to_string()),
            "trained_at" => trained_at = Some(value.to_string()),
            "corpus_hash" => corpus_hash = Some(value.to_string()),
            "objective" => {
                objective = Some(value.parse().map_err(|_| ModelIoError::Malformed {
                    line,
                    reason: format!("unparseable objective {value:?}"),
                })?)
            }
            "feature_config" => {
                let config: FeatureConfig =
                    serde_json::from_str(value).map_err(|e| ModelIoError::InvalidConfig {
                        reason: e.to_string(),
                    })?;
                config.validate().map_err(|e| ModelIoError::InvalidConfig {
                    reason: e.to_string(),
                })?;
                feature_config = Some(config);
            }
            "weights" => {
                declared = Some(value.parse().map_err(|_| ModelIoError::Malformed {
                    line,
                    reason: format!("unparseable weight count {value:?}"),
                })?);
                cursor += 1;
                break;
            }
            other => {
                return Err(ModelIoError::UnexpectedField {
                    field: other.to_string(),
                    line,
                })
            }
        }
        cursor += 1;
    }

    let order = order.ok_or(ModelIoError::MissingField { field: "order" })?;
    let labels = labels.ok_or(ModelIoError::MissingField { field: "labels" })?;
    let trained_at = trained_at.ok_or(ModelIoError::MissingField {
        field: "trained_at",
    })?;
    let corpus_hash = corpus_hash.ok_or(ModelIoError::MissingField {
        field: "corpus_hash",
    })?;
    let objective = objective.ok_or(ModelIoError::MissingField { field: "objective" })?;
    let feature_config = feature_config.ok_or(ModelIoError::MissingField {
        field: "feature_config",
    })?;
    let declared = declared.ok_or(ModelIoError::MissingField { field: "weights" })?;

    let expected_labels = Label::ALL.map(|l| l.as_str()).join(" ");
    if labels != expected_labels {
        return Err(ModelIoError::LabelSet { found: labels });
    }

    let mut names = Vec::with_capacity(declared);
    let mut weights = Vec::with_capacity(declared);
    while cursor < lines.len() {
        let (name, value) = split_field(&lines, cursor)?;
        let line = cursor + 1;
        let weight: f64 = value.parse().map_err(|_| ModelIoError::Malformed {
            line,
            reason: format!("unparseable weight {value:?}"),
        })?;
        if names
            .last()
            .is_some_and(|last: &String| last.as_str() >= name)
        {
            return Err(ModelIoError::UnsortedKey {
                line,
                name: name.to_string(),
            });
        }
        names.push(name.to_string());
        weights.push(weight);
        cursor += 1;
    }

    // Structural completeness first: a deleted weight line surfaces as the
    // specific missing key rather than a bare count difference. The weight
    // vector stays aligned because the file order was verified to be the
    // same sorted order the space assigns indices in.
    let space = FeatureSpace::from_names(names.into_iter().collect());
    let found = space.len();
    let model =
        CrfModel::new(order, space, weights, feature_config, true).map_err(|e| match e {
            CrfError::MissingName(name) => ModelIoError::WeightCountMismatch { name },
            other => ModelIoError::Crf(other),
        })?;
    if declared != found {
        return Err(ModelIoError::WeightCountHeader { declared, found });
    }

    let meta = ModelMeta {
        trained_at,
        corpus_hash,
        objective,
    };
    Ok((model, meta))
}

/// Loads a model file from disk; see [`read_model`].
pub fn load(path: &Path) -> Result<(CrfModel, ModelMeta), ModelIoError> {
    read_model(File::open(path)?)
}

/// Hex SHA-256 of the canonical JSONL rendering of a corpus, as recorded in
/// the `corpus_hash` metadata field.
pub fn corpus_hash(entries: &[CorpusEntry]) -> String {
    let digest = Sha256::digest(crate::corpus::to_jsonl_bytes(entries));
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Renders an `f64` with 17 significant digits, enough for every finite
/// double to re-parse to the identical bit pattern.
fn render_f64(value: f64) -> String {
    format!("{value:.16e}")
}

fn split_field(lines: &[String], cursor: usize) -> Result<(&str, &str), ModelIoError> {
    let raw = &lines[cursor];
    raw.split_once('\t').ok_or_else(|| ModelIoError::Malformed {
        line: cursor + 1,
        reason: format!("expected tab-separated key and value, got {raw:?}"),
    })
}
