//! Document data model and corpus readers.
//!
//! Two on-disk formats are supported: a JSONL format carrying full line
//! records (text plus optional layout attributes and an optional gold label),
//! and a minimal two-column TSV format (`text<TAB>label`, blank row between
//! documents) for plain-text corpora.

use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Per-line classification label.
///
/// The declaration order fixes the total order `B-REF < I-REF < O-REF < O`
/// used for deterministic tie-breaking in decoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    /// First line of a reference string.
    BRef,
    /// Continuation line of a reference string.
    IRef,
    /// Line physically inside a reference string but not part of its text
    /// (page number, running header).
    ORef,
    /// Any other line.
    Outside,
}

impl Label {
    /// All labels in tie-break order.
    pub const ALL: [Label; 4] = [Label::BRef, Label::IRef, Label::ORef, Label::Outside];

    /// Number of labels.
    pub const COUNT: usize = 4;

    /// Dense index in `0..4`, consistent with the fixed order.
    pub fn index(self) -> usize {
        match self {
            Label::BRef => 0,
            Label::IRef => 1,
            Label::ORef => 2,
            Label::Outside => 3,
        }
    }

    /// Inverse of [`Label::index`]. Panics if `idx >= 4`.
    pub fn from_index(idx: usize) -> Label {
        Label::ALL[idx]
    }

    /// The exact on-disk label string.
    pub fn as_str(self) -> &'static str {
        match self {
            Label::BRef => "B-REF",
            Label::IRef => "I-REF",
            Label::ORef => "O-REF",
            Label::Outside => "O",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "B-REF" => Ok(Label::BRef),
            "I-REF" => Ok(Label::IRef),
            "O-REF" => Ok(Label::ORef),
            "O" => Ok(Label::Outside),
            other => Err(UnknownLabel(other.to_string())),
        }
    }
}

/// Error for a label string outside the four recognized values.
#[derive(Debug, Clone, Error)]
#[error("unknown label {0:?}")]
pub struct UnknownLabel(pub String);

/// One text line of a document plus optional layout attributes.
///
/// Layout fields are independently optional: text-only corpora simply leave
/// them absent and the layout features degrade gracefully.
#[derive(Debug, Clone, PartialEq)]
pub struct LineRecord {
    /// Line text; may be empty, never contains `\n`.
    pub text: String,
    /// Page index, non-decreasing across a document.
    pub page: u32,
    /// Vertical distance to the previous line in points.
    pub v_gap: Option<f64>,
    /// Left-offset delta versus the previous line in points.
    pub indent: Option<f64>,
    /// Font size in points.
    pub font_size: Option<f64>,
    /// Whether the dominant font weight is bold.
    pub bold: Option<bool>,
}

impl LineRecord {
    /// A text-only line on page 0 with no layout attributes.
    pub fn from_text(text: impl Into<String>) -> Self {
        LineRecord {
            text: text.into(),
            page: 0,
            v_gap: None,
            indent: None,
            font_size: None,
            bold: None,
        }
    }
}

/// An ordered sequence of lines with a document id.
#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub doc_id: String,
    pub lines: Vec<LineRecord>,
}

impl Document {
    /// Soft consistency warnings; see [`validate`].
    pub fn validate(&self) -> Vec<String> {
        validate(self, None)
    }
}

/// A document together with one gold label per line.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDocument {
    pub document: Document,
    pub labels: Vec<Label>,
}

impl LabeledDocument {
    /// Soft consistency warnings; see [`validate`].
    pub fn validate(&self) -> Vec<String> {
        validate(&self.document, Some(&self.labels))
    }
}

/// One parsed corpus record: a document with or without gold labels.
#[derive(Debug, Clone, PartialEq)]
pub enum CorpusEntry {
    Unlabeled(Document),
    Labeled(LabeledDocument),
}

impl CorpusEntry {
    pub fn document(&self) -> &Document {
        match self {
            CorpusEntry::Unlabeled(d) => d,
            CorpusEntry::Labeled(l) => &l.document,
        }
    }

    pub fn labels(&self) -> Option<&[Label]> {
        match self {
            CorpusEntry::Unlabeled(_) => None,
            CorpusEntry::Labeled(l) => Some(&l.labels),
        }
    }

    pub fn into_labeled(self) -> Option<LabeledDocument> {
        match self {
            CorpusEntry::Unlabeled(_) => None,
            CorpusEntry::Labeled(l) => Some(l),
        }
    }
}

/// Errors raised while reading or writing corpora.
#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: malformed JSON: {source}")]
    Json {
        line: usize,
        source: serde_json::Error,
    },
    #[error("document {doc_id:?}: some lines carry labels and some do not")]
    MixedLabels { doc_id: String },
    #[error("document {doc_id:?}: {source}")]
    UnknownLabel {
        doc_id: String,
        source: UnknownLabel,
    },
    #[error("document {doc_id:?}: empty lines array")]
    EmptyLines { doc_id: String },
    #[error("document {doc_id:?}, line {line}: text contains a newline character")]
    NewlineInText { doc_id: String, line: usize },
    #[error("row {row}: expected 2 tab-separated fields, found {fields}")]
    TsvFieldCount { row: usize, fields: usize },
    #[error("row {row}: {source}")]
    TsvUnknownLabel { row: usize, source: UnknownLabel },
    #[error("empty file")]
    EmptyFile,
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Serialize, Deserialize)]
struct LineWire {
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    page: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    v_gap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    indent: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    font_size: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bold: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct DocWire {
    doc_id: String,
    lines: Vec<LineWire>,
}

/// Reads a JSONL corpus: one JSON document object per input line.
///
/// Within one document either every line carries a `label` or none does;
/// otherwise [`CorpusError::MixedLabels`] is returned. Documents come back in
/// file order.
pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Vec<CorpusEntry>, CorpusError> {
    let mut entries = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let wire: DocWire = serde_json::from_str(&line).map_err(|source| CorpusError::Json {
            line: lineno + 1,
            source,
        })?;
        entries.push(entry_from_wire(wire)?);
    }
    Ok(entries)
}

/// Reads a JSONL corpus from a file path.
pub fn read_jsonl_file(path: &Path) -> Result<Vec<CorpusEntry>, CorpusError> {
    read_jsonl(BufReader::new(File::open(path)?))
}

fn entry_from_wire(wire: DocWire) -> Result<CorpusEntry, CorpusError> {
    let doc_id = wire.doc_id;
    if wire.lines.is_empty() {
        return Err(CorpusError::EmptyLines { doc_id });
    }
    let labeled_count = wire.lines.iter().filter(|l| l.label.is_some()).count();
    if labeled_count != 0 && labeled_count != wire.lines.len() {
        return Err(CorpusError::MixedLabels { doc_id });
    }
    let mut lines = Vec::with_capacity(wire.lines.len());
    let mut labels = Vec::new();
    for (i, lw) in wire.lines.into_iter().enumerate() {
        if lw.text.contains('\n') {
            return Err(CorpusError::NewlineInText { doc_id, line: i });
        }
        if let Some(raw) = lw.label {
            let label = raw.parse().map_err(|source| CorpusError::UnknownLabel {
                doc_id: doc_id.clone(),
                source,
            })?;
            labels.push(label);
        }
        lines.push(LineRecord {
            text: lw.text,
            page: lw.page.unwrap_or(0),
            v_gap: lw.v_gap,
            indent: lw.indent,
            font_size: lw.font_size,
            bold: lw.bold,
        });
    }
    let document = Document { doc_id, lines };
    if labels.is_empty() {
        Ok(CorpusEntry::Unlabeled(document))
    } else {
        Ok(CorpusEntry::Labeled(LabeledDocument { document, labels }))
    }
}

/// Writes entries in the JSONL corpus format, one document per line.
///
/// Absent optional fields are omitted; pages are written except when 0 on a
/// line with no other layout attributes, keeping text-only corpora minimal.
pub fn write_jsonl<W: Write>(writer: &mut W, entries: &[CorpusEntry]) -> Result<(), CorpusError> {
    for entry in entries {
        let doc = entry.document();
        let labels = entry.labels();
        let wire = DocWire {
            doc_id: doc.doc_id.clone(),
            lines: doc
                .lines
                .iter()
                .enumerate()
                .map(|(i, l)| {
                    let has_layout = l.v_gap.is_some()
                        || l.indent.is_some()
                        || l.font_size.is_some()
                        || l.bold.is_some();
                    LineWire {
                        text: l.text.clone(),
                        page: if l.page == 0 && !has_layout {
                            None
                        } else {
                            Some(l.page)
                        },
                        v_gap: l.v_gap,
                        indent: l.indent,
                        font_size: l.font_size,
                        bold: l.bold,
                        label: labels.map(|ls| ls[i].as_str().to_string()),
                    }
                })
                .collect(),
        };
        let json = serde_json::to_string(&wire).expect("document serialization cannot fail");
        writer.write_all(json.as_bytes())?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Serializes entries to an in-memory JSONL byte buffer.
pub fn to_jsonl_bytes(entries: &[CorpusEntry]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_jsonl(&mut buf, entries).expect("in-memory write cannot fail");
    buf
}

/// Reads the two-column TSV format: `text<TAB>label` rows, blank row between
/// documents. Document ids are synthesized as zero-based ordinals.
pub fn read_tsv<R: BufRead>(reader: R) -> Result<Vec<LabeledDocument>, CorpusError> {
    let mut docs = Vec::new();
    let mut lines: Vec<LineRecord> = Vec::new();
    let mut labels: Vec<Label> = Vec::new();

    let mut flush = |lines: &mut Vec<LineRecord>, labels: &mut Vec<Label>| {
        if !lines.is_empty() {
            let doc_id = docs.len().to_string();
            docs.push(LabeledDocument {
                document: Document {
                    doc_id,
                    lines: std::mem::take(lines),
                },
                labels: std::mem::take(labels),
            });
        }
    };

    for (rowno, row) in reader.lines().enumerate() {
        let mut row = row?;
        if row.ends_with('\r') {
            row.pop();
        }
        if row.is_empty() {
            flush(&mut lines, &mut labels);
            continue;
        }
        let fields: Vec<&str> = row.split('\t').collect();
        if fields.len() != 2 {
            return Err(CorpusError::TsvFieldCount {
                row: rowno + 1,
                fields: fields.len(),
            });
        }
        let label = fields[1]
            .parse()
            .map_err(|source| CorpusError::TsvUnknownLabel {
                row: rowno + 1,
                source,
            })?;
        lines.push(LineRecord::from_text(fields[0]));
        labels.push(label);
    }
    flush(&mut lines, &mut labels);

    if docs.is_empty() {
        return Err(CorpusError::EmptyFile);
    }
    Ok(docs)
}

/// Reads a TSV corpus from a file path.
pub fn read_tsv_file(path: &Path) -> Result<Vec<LabeledDocument>, CorpusError> {
    read_tsv(BufReader::new(File::open(path)?))
}

/// Returns soft consistency warnings without failing.
///
/// Gold data is authoritative even when noisy, so violations of page ordering
/// or BIO well-formedness only warn; training proceeds regardless.
pub fn validate(document: &Document, labels: Option<&[Label]>) -> Vec<String> {
    let mut warnings = Vec::new();
    for (i, pair) in document.lines.windows(2).enumerate() {
        if pair[1].page < pair[0].page {
            warnings.push(format!("page indices decrease at line {}", i + 1));
        }
    }
    if let Some(labels) = labels {
        if matches!(labels.first(), Some(Label::IRef) | Some(Label::ORef)) {
            warnings.push("document starts with continuation label".to_string());
        }
        for (i, pair) in labels.windows(2).enumerate() {
            if pair[0] == Label::Outside && pair[1] == Label::IRef {
                warnings.push(format!("I-REF follows O at line {}", i + 1));
            }
        }
    }
    warnings
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn table1_jsonl() -> &'static str {
        concat!(
            r#"{"doc_id":"table1","lines":["#,
            r#"{"text":"grant numbers MA 3964/8-1 and STA 572/14-1.","label":"O"},"#,
            r#"{"text":"References","label":"O"},"#,
            r#"{"text":"Tkaczyk, D., et al. (2015) Cermine: automatic extraction of","label":"B-REF"},"#,
            r#"{"text":"structured metadata from scientific literature. Interna-","label":"I-REF"},"#,
            r#"{"text":"1252","label":"O-REF"},"#,
            r#"{"text":"tional Journal on Document Analysis and Recognition (IJDAR) 18(4)","label":"I-REF"},"#,
            r#"{"text":"Lafferty, J., McCallum, A., Pereira, F. (2001) Conditional random","label":"B-REF"}"#,
            r#"]}"#,
        )
    }

    #[test]
    fn jsonl_minimal_unlabeled() {
        let input =
            r#"{"doc_id":"d","lines":[{"text":"References"},{"text":"[1] A. B. Title. 2015."}]}"#;
        let entries = read_jsonl(Cursor::new(input)).unwrap();
        assert_eq!(entries.len(), 1);
        match &entries[0] {
            CorpusEntry::Unlabeled(doc) => {
                assert_eq!(doc.doc_id, "d");
                assert_eq!(doc.lines.len(), 2);
                assert_eq!(doc.lines[0].text, "References");
                assert_eq!(doc.lines[0].page, 0);
            }
            other => panic!("expected unlabeled, got {other:?}"),
        }
    }

    #[test]
    fn jsonl_table1_labels() {
        let entries = read_jsonl(Cursor::new(table1_jsonl())).unwrap();
        let labeled = entries[0].clone().into_labeled().unwrap();
        assert_eq!(
            labeled.labels,
            vec![
                Label::Outside,
                Label::Outside,
                Label::BRef,
                Label::IRef,
                Label::ORef,
                Label::IRef,
                Label::BRef,
            ]
        );
    }

    #[test]
    fn jsonl_unknown_label_rejected() {
        let input =
            r#"{"doc_id":"bad","lines":[{"text":"a","label":"B-REF"},{"text":"b","label":"X"}]}"#;
        let err = read_jsonl(Cursor::new(input)).unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("\"X\""),
            "message should name the label: {msg}"
        );
        assert!(
            msg.contains("bad"),
            "message should name the document: {msg}"
        );
    }

    #[test]
    fn jsonl_mixed_labels_rejected() {
        let input = r#"{"doc_id":"m","lines":[{"text":"a","label":"O"},{"text":"b"}]}"#;
        assert!(matches!(
            read_jsonl(Cursor::new(input)),
            Err(CorpusError::MixedLabels { .. })
        ));
    }

    #[test]
    fn jsonl_empty_lines_rejected() {
        let input = r#"{"doc_id":"e","lines":[]}"#;
        assert!(matches!(
            read_jsonl(Cursor::new(input)),
            Err(CorpusError::EmptyLines { .. })
        ));
    }

    #[test]
    fn jsonl_malformed_reports_line_number() {
        let input = "{\"doc_id\":\"a\",\"lines\":[{\"text\":\"x\"}]}\n{not json}";
        match read_jsonl(Cursor::new(input)) {
            Err(CorpusError::Json { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected JSON error, got {other:?}"),
        }
    }

    #[test]
    fn jsonl_newline_in_text_rejected() {
        let input = "{\"doc_id\":\"n\",\"lines\":[{\"text\":\"a\\nb\"}]}";
        assert!(matches!(
            read_jsonl(Cursor::new(input)),
            Err(CorpusError::NewlineInText { .. })
        ));
    }

    #[test]
    fn jsonl_round_trip_structural() {
        let entries = read_jsonl(Cursor::new(table1_jsonl())).unwrap();
        let bytes = to_jsonl_bytes(&entries);
        let again = read_jsonl(Cursor::new(&bytes[..])).unwrap();
        assert_eq!(entries, again);
        // Canonical writer output is byte-stable.
        assert_eq!(bytes, to_jsonl_bytes(&again));
    }

    #[test]
    fn tsv_minimal() {
        let input = "References\tO\nSmith, J. 2001. X.\tB-REF\n";
        let docs = read_tsv(Cursor::new(input)).unwrap();
        assert_eq!(docs.len(), 1);
        assert_eq!(docs[0].document.doc_id, "0");
        assert_eq!(docs[0].document.lines.len(), 2);
        assert_eq!(docs[0].labels, vec![Label::Outside, Label::BRef]);
    }

    #[test]
    fn tsv_table1() {
        let input = "grant numbers MA 3964/8-1 and STA 572/14-1.\tO\n\
                     References\tO\n\
                     Tkaczyk, D., et al. (2015) Cermine: automatic extraction of\tB-REF\n\
                     structured metadata from scientific literature. Interna-\tI-REF\n\
                     1252\tO-REF\n\
                     tional Journal on Document Analysis and Recognition (IJDAR) 18(4)\tI-REF\n\
                     Lafferty, J., McCallum, A., Pereira, F. (2001) Conditional random\tB-REF\n";
        let docs = read_tsv(Cursor::new(input)).unwrap();
        assert_eq!(docs.len(), 1);
        assert_eq!(
            docs[0].labels,
            vec![
                Label::Outside,
                Label::Outside,
                Label::BRef,
                Label::IRef,
                Label::ORef,
                Label::IRef,
                Label::BRef,
            ]
        );
    }

    #[test]
    fn tsv_blank_separates_documents() {
        let input = "a\tO\n\nb\tB-REF\nc\tI-REF\n";
        let docs = read_tsv(Cursor::new(input)).unwrap();
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[0].document.doc_id, "0");
        assert_eq!(docs[1].document.doc_id, "1");
        assert_eq!(docs[1].document.lines.len(), 2);
    }

    #[test]
    fn tsv_empty_file_rejected() {
        for input in ["", "\n", "\n\n"] {
            assert!(matches!(
                read_tsv(Cursor::new(input)),
                Err(CorpusError::EmptyFile)
            ));
        }
    }

    #[test]
    fn tsv_bad_field_count() {
        let input = "only one field\n";
        match read_tsv(Cursor::new(input)) {
            Err(CorpusError::TsvFieldCount { row, fields }) => {
                assert_eq!(row, 1);
                assert_eq!(fields, 1);
            }
            other => panic!("expected field count error, got {other:?}"),
        }
        let input = "a\tb\tc\n";
        assert!(matches!(
            read_tsv(Cursor::new(input)),
            Err(CorpusError::TsvFieldCount { fields: 3, .. })
        ));
    }

    #[test]
    fn tsv_and_jsonl_agree() {
        let tsv = "References\tO\nSmith, J. 2001. X.\tB-REF\n";
        let jsonl = r#"{"doc_id":"0","lines":[{"text":"References","label":"O"},{"text":"Smith, J. 2001. X.","label":"B-REF"}]}"#;
        let from_tsv = read_tsv(Cursor::new(tsv)).unwrap();
        let from_jsonl: Vec<_> = read_jsonl(Cursor::new(jsonl))
            .unwrap()
            .into_iter()
            .map(|e| e.into_labeled().unwrap())
            .collect();
        assert_eq!(from_tsv, from_jsonl);
    }

    #[test]
    fn validate_table1_clean() {
        let entries = read_jsonl(Cursor::new(table1_jsonl())).unwrap();
        let labeled = entries[0].clone().into_labeled().unwrap();
        assert!(labeled.validate().is_empty());
    }

    #[test]
    fn validate_continuation_start() {
        let doc = Document {
            doc_id: "w".into(),
            lines: vec![LineRecord::from_text("x")],
        };
        let labeled = LabeledDocument {
            document: doc,
            labels: vec![Label::IRef],
        };
        let warnings = labeled.validate();
        assert_eq!(warnings, vec!["document starts with continuation label"]);
    }

    #[test]
    fn validate_decreasing_pages() {
        let mut a = LineRecord::from_text("a");
        a.page = 2;
        let mut b = LineRecord::from_text("b");
        b.page = 1;
        let doc = Document {
            doc_id: "p".into(),
            lines: vec![a, b],
        };
        assert_eq!(doc.validate(), vec!["page indices decrease at line 1"]);
    }

    #[test]
    fn validate_iref_after_o() {
        let doc = Document {
            doc_id: "w".into(),
            lines: vec![
                LineRecord::from_text("a"),
                LineRecord::from_text("b"),
                LineRecord::from_text("c"),
            ],
        };
        let labeled = LabeledDocument {
            document: doc,
            labels: vec![Label::BRef, Label::Outside, Label::IRef],
        };
        assert_eq!(labeled.validate(), vec!["I-REF follows O at line 2"]);
    }

    #[test]
    fn label_order_fixed() {
        let mut labels = vec![Label::Outside, Label::ORef, Label::IRef, Label::BRef];
        labels.sort();
        assert_eq!(labels, Label::ALL.to_vec());
        for (i, l) in Label::ALL.iter().enumerate() {
            assert_eq!(l.index(), i);
            assert_eq!(Label::from_index(i), *l);
            assert_eq!(l.as_str().parse::<Label>().unwrap(), *l);
        }
    }
}
