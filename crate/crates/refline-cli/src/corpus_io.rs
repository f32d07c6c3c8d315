//! Corpus reading with extension sniffing, plus shared output plumbing.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use refline::corpus::{read_jsonl_file, read_tsv_file, CorpusEntry, CorpusError, LabeledDocument};

use crate::{CliError, CorpusFormat};

fn sniff(path: &Path) -> Option<CorpusFormat> {
    match path.extension()?.to_str()? {
        ext if ext.eq_ignore_ascii_case("jsonl") => Some(CorpusFormat::Jsonl),
        ext if ext.eq_ignore_ascii_case("tsv") => Some(CorpusFormat::Tsv),
        _ => None,
    }
}

/// Reads one corpus file, inferring the format from the extension unless
/// `format` overrides it. Empty corpora are rejected.
pub fn read_corpus(
    path: &Path,
    format: Option<CorpusFormat>,
) -> Result<Vec<CorpusEntry>, CliError> {
    let format = format.or_else(|| sniff(path)).ok_or_else(|| {
        CliError::config(format!(
            "cannot infer corpus format of {} from its extension; pass --format jsonl|tsv",
            path.display()
        ))
    })?;
    // Prefix I/O failures with the path; parse errors already carry
    // document ids or line numbers from the reader.
    let annotate = |err: CorpusError| match err {
        CorpusError::Io(e) => CliError::io(format!("{}: {e}", path.display())),
        other => CliError::from(other),
    };
    let entries = match format {
        CorpusFormat::Jsonl => read_jsonl_file(path).map_err(annotate)?,
        CorpusFormat::Tsv => read_tsv_file(path)
            .map_err(annotate)?
            .into_iter()
            .map(CorpusEntry::Labeled)
            .collect(),
    };
    if entries.is_empty() {
        return Err(CliError::corpus("empty corpus"));
    }
    Ok(entries)
}

/// Requires every document to carry gold labels.
pub fn require_labeled(entries: Vec<CorpusEntry>) -> Result<Vec<LabeledDocument>, CliError> {
    entries
        .into_iter()
        .map(|entry| {
            let doc_id = entry.document().doc_id.clone();
            entry
                .into_labeled()
                .ok_or_else(|| CliError::corpus(format!("document {doc_id:?} has no labels")))
        })
        .collect()
}

/// Opens `path` for buffered writing, or stdout when omitted.
pub fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(path) => {
            let file =
                File::create(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
            Box::new(BufWriter::new(file))
        }
        None => Box::new(BufWriter::new(io::stdout())),
    })
}
