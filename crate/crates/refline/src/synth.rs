//! Deterministic generation of synthetic labeled corpora.
//!
//! Real bibliographies are expensive to label, so tests and desk-scale
//! benchmarks run on generated documents instead. The generator produces the
//! two layouts the extractor must handle:
//!
//! * **end-section** documents: body paragraphs, a heading such as
//!   "References", then a run of reference entries, paginated so that page
//!   furniture (page numbers, running headers) can interrupt an entry
//!   mid-reference;
//! * **footnote** documents: every page carries body paragraphs followed by a
//!   small block of footnote references in a smaller font, with no reference
//!   heading anywhere.
//!
//! Text is assembled from small fixed word lists plus templated author /
//! year / page-range patterns, so the line classes are learnable without
//! being memorizable. Layout fields are populated to match how real PDF text
//! extraction reports them: `v_gap` grows at block boundaries, `indent` is a
//! signed delta against the previous line (hanging indents show up as one
//! positive delta on the first continuation line), and footnote blocks drop
//! the font size. Everything is driven by a single seeded [`ChaCha8Rng`], so
//! equal configurations yield byte-identical corpora.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Document, Label, LabeledDocument, LineRecord};

/// Author surnames used in generated references.
///
/// Lowercased, this list doubles as a name gazetteer for
/// [`FeatureConfig::name_gazetteer`](crate::features::FeatureConfig):
/// generated author lines then fire `name_hit`.
pub const SURNAMES: &[&str] = &[
    "Keller", "Rossi", "Tanaka", "Nguyen", "Novak", "Garcia", "Kumar", "Ivanov", "Dubois",
    "Larsen", "Okafor", "Petrov", "Miller", "Haines", "Silva", "Weber",
];

/// Lowercase filler vocabulary for body paragraphs.
///
/// Deliberately free of digits, capitals, and heading words so body lines
/// separate cleanly from reference lines via the surface features.
const BODY_WORDS: &[&str] = &[
    "the", "model", "of", "lines", "layout", "method", "data", "results", "we", "show", "that",
    "approach", "label", "each", "text", "corpus", "with", "trained", "into", "page", "document",
    "section", "task", "using", "improves", "over", "input", "output", "system", "work", "prior",
    "simple", "per", "scores", "and", "remains", "stable", "across", "settings", "on",
];

/// Capitalized vocabulary for reference titles and running headers.
const TITLE_WORDS: &[&str] = &[
    "Analysis",
    "Detection",
    "Extraction",
    "Learning",
    "Models",
    "Sequence",
    "Labeling",
    "Documents",
    "Layout",
    "Parsing",
    "Classification",
    "Structured",
    "Statistical",
    "Random",
    "Fields",
    "Text",
    "Lines",
    "Automatic",
    "Evaluation",
    "Conditional",
];

/// Connective words inside titles, kept lowercase as in real title casing.
const TITLE_FILLERS: &[&str] = &["of", "for", "with", "via", "from", "under"];

/// Reference entry style.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefStyle {
    /// Entries open with a numeric marker: `[7]` or `7.`.
    Numbered,
    /// Entries open with an author list followed by a parenthesized year.
    AuthorYear,
    /// Each document picks one of the two styles at random.
    Mixed,
}

/// Where reference strings live in the generated documents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenMode {
    /// A heading followed by the bibliography at the end of the document.
    EndSection,
    /// Footnote blocks after the body paragraphs of every page; no heading.
    Footnotes,
}

/// Configuration for [`generate`].
///
/// Ranges are inclusive `(low, high)` pairs. The same configuration always
/// produces the same corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    /// RNG seed; the sole source of randomness.
    pub seed: u64,
    /// Number of documents to generate.
    pub n_documents: usize,
    /// Inclusive range of body lines per page.
    pub body_lines: (usize, usize),
    /// Inclusive range of references per document; the low end must be ≥ 1.
    pub references: (usize, usize),
    /// Reference entry style.
    pub style: RefStyle,
    /// Document layout mode.
    pub mode: GenMode,
    /// Page capacity in lines, counting page furniture. Must be ≥ 4. In
    /// end-section mode this forces page breaks (and hence O-REF furniture
    /// lines) inside long bibliographies.
    pub page_height: usize,
    /// Probability that a reference line break hyphenates a word, in [0, 1].
    pub hyphenation: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            seed: 0,
            n_documents: 10,
            body_lines: (3, 8),
            references: (4, 10),
            style: RefStyle::Mixed,
            mode: GenMode::EndSection,
            page_height: 28,
            hyphenation: 0.25,
        }
    }
}

/// Configuration errors for the generator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenError {
    #[error("empty {field} range: {lo}..={hi}")]
    EmptyRange {
        field: &'static str,
        lo: usize,
        hi: usize,
    },
    #[error("references range must start at 1 or higher, got {lo}")]
    ReferencesStart { lo: usize },
    #[error("hyphenation probability {value} is outside [0, 1]")]
    Probability { value: f64 },
    #[error("page_height {got} is too small; at least 4 lines are required")]
    PageHeight { got: usize },
}

impl GenConfig {
    /// Checks the invariants documented on the fields.
    pub fn validate(&self) -> Result<(), GenError> {
        for (field, (lo, hi)) in [
            ("body_lines", self.body_lines),
            ("references", self.references),
        ] {
            if lo > hi {
                return Err(GenError::EmptyRange { field, lo, hi });
            }
        }
        if self.references.0 < 1 {
            return Err(GenError::ReferencesStart {
                lo: self.references.0,
            });
        }
        if !(0.0..=1.0).contains(&self.hyphenation) {
            return Err(GenError::Probability {
                value: self.hyphenation,
            });
        }
        if self.page_height < 4 {
            return Err(GenError::PageHeight {
                got: self.page_height,
            });
        }
        Ok(())
    }
}

/// Generates `config.n_documents` labeled documents.
///
/// Gold labels are consistent by construction: every reference starts with
/// one `B-REF` line followed by zero to three `I-REF` lines; page furniture
/// is labeled `O-REF` exactly when it falls between two lines of the same
/// reference and `O` otherwise; body text, headings, and running headers are
/// `O`. The output passes [`corpus::validate`](crate::corpus::validate) with
/// no warnings.
pub fn generate(config: &GenConfig) -> Result<Vec<LabeledDocument>, GenError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    Ok((0..config.n_documents)
        .map(|i| generate_document(config, &mut rng, i))
        .collect())
}

/// One content line before pagination: absolute layout, gold label, and the
/// id of the reference it belongs to (for furniture labeling).
struct RawLine {
    text: String,
    label: Label,
    ref_id: Option<usize>,
    v_gap: f64,
    x: f64,
    font_size: f64,
    bold: bool,
}

impl RawLine {
    fn body(text: String, v_gap: f64) -> Self {
        RawLine {
            text,
            label: Label::Outside,
            ref_id: None,
            v_gap,
            x: 0.0,
            font_size: BODY_FONT,
            bold: false,
        }
    }
}

const BODY_FONT: f64 = 10.0;
const FOOTNOTE_FONT: f64 = 8.4;
/// Baseline gap between consecutive lines of one block, in points.
const LINE_GAP: f64 = 12.0;
/// Gap opening a new block (paragraph, heading, bibliography entry).
const BLOCK_GAP: f64 = 26.0;
/// Gap separating page furniture and the first line of a page.
const PAGE_GAP: f64 = 30.0;
/// Hanging indent of reference continuation lines, in points.
const HANG_INDENT: f64 = 10.0;

fn generate_document(config: &GenConfig, rng: &mut ChaCha8Rng, index: usize) -> LabeledDocument {
    let style = match config.style {
        RefStyle::Mixed => {
            if rng.random_bool(0.5) {
                RefStyle::Numbered
            } else {
                RefStyle::AuthorYear
            }
        }
        s => s,
    };
    // `[7]`-form vs `7.`-form markers, fixed per document as in real venues.
    let bracket_markers = rng.random_bool(0.5);
    let has_header = rng.random_bool(0.5);
    let header_text = format!(
        "{} {} {}",
        pick(rng, TITLE_WORDS),
        pick(rng, TITLE_FILLERS),
        pick(rng, TITLE_WORDS)
    );
    let base_page = rng.random_range(101..=1190);
    let n_refs = rng.random_range(config.references.0..=config.references.1);

    let doc = DocParams {
        style,
        bracket_markers,
        has_header,
        header_text,
        base_page,
        n_refs,
    };
    let pages = match config.mode {
        GenMode::EndSection => {
            let stream = end_section_stream(config, rng, &doc);
            paginate(config, &doc, stream)
        }
        GenMode::Footnotes => footnote_pages(config, rng, &doc),
    };
    assemble(format!("synth-{index:04}"), pages)
}

/// Per-document choices shared by the stream builders.
struct DocParams {
    style: RefStyle,
    bracket_markers: bool,
    has_header: bool,
    header_text: String,
    base_page: u32,
    n_refs: usize,
}

/// Emits `count` body lines as paragraphs of 2–5 lines; the first line of
/// each paragraph opens with a block gap unless `flush` suppresses it.
fn push_body(rng: &mut ChaCha8Rng, out: &mut Vec<RawLine>, count: usize, mut flush: bool) {
    let mut remaining = count;
    while remaining > 0 {
        let para = rng.random_range(2..=5).min(remaining);
        for j in 0..para {
            let gap = if j == 0 && !flush {
                jitter(rng, BLOCK_GAP)
            } else {
                jitter(rng, LINE_GAP)
            };
            out.push(RawLine::body(body_line(rng), gap));
            flush = false;
        }
        remaining -= para;
    }
}

/// Content stream for an end-section document, before pagination.
fn end_section_stream(config: &GenConfig, rng: &mut ChaCha8Rng, doc: &DocParams) -> Vec<RawLine> {
    let mut out = Vec::new();
    let body_pages = rng.random_range(1..=2);
    for _ in 0..body_pages {
        let count = rng.random_range(config.body_lines.0..=config.body_lines.1);
        push_body(rng, &mut out, count, false);
    }

    let heading = if rng.random_bool(0.7) {
        "References"
    } else {
        "Bibliography"
    };
    out.push(RawLine {
        text: heading.to_string(),
        label: Label::Outside,
        ref_id: None,
        v_gap: jitter(rng, PAGE_GAP),
        x: 0.0,
        font_size: BODY_FONT,
        bold: true,
    });

    for k in 0..doc.n_refs {
        let first_gap = jitter(rng, BLOCK_GAP);
        push_reference(config, rng, &mut out, doc, k, BODY_FONT, first_gap);
    }

    // Some venues print appendix text after the bibliography; keep the closer
    // transition (last reference line followed by O) represented.
    if rng.random_bool(0.3) {
        let count = rng.random_range(2..=4);
        push_body(rng, &mut out, count, false);
    }
    out
}

/// Appends one reference entry: a `B-REF` line plus 0–3 `I-REF` lines.
fn push_reference(
    config: &GenConfig,
    rng: &mut ChaCha8Rng,
    out: &mut Vec<RawLine>,
    doc: &DocParams,
    ref_id: usize,
    font_size: f64,
    first_gap: f64,
) {
    let text = reference_text(rng, doc, ref_id);
    let lines = wrap_reference(rng, &text, config.hyphenation);
    for (j, line) in lines.into_iter().enumerate() {
        out.push(RawLine {
            text: line,
            label: if j == 0 { Label::BRef } else { Label::IRef },
            ref_id: Some(ref_id),
            v_gap: if j == 0 {
                first_gap
            } else {
                jitter(rng, LINE_GAP)
            },
            x: if j == 0 { 0.0 } else { HANG_INDENT },
            font_size,
            bold: false,
        });
    }
}

/// Builds footnote-mode documents page by page: body paragraphs, then a
/// footnote block of 1–3 references in a smaller font, then the page number.
fn footnote_pages(
    config: &GenConfig,
    rng: &mut ChaCha8Rng,
    doc: &DocParams,
) -> Vec<(RawLine, u32)> {
    let mut out = Vec::new();
    let mut refs_done = 0usize;
    let mut page: u32 = 1;
    while refs_done < doc.n_refs {
        if page > 1 && doc.has_header {
            out.push((
                RawLine::body(doc.header_text.clone(), jitter(rng, PAGE_GAP)),
                page,
            ));
        }
        let count = rng.random_range(config.body_lines.0..=config.body_lines.1);
        let mut body = Vec::new();
        push_body(rng, &mut body, count, page == 1);
        for line in body {
            out.push((line, page));
        }

        let block = rng.random_range(1..=3).min(doc.n_refs - refs_done);
        for b in 0..block {
            let first_gap = if b == 0 {
                // The footnote block sits well below the body text.
                jitter(rng, BLOCK_GAP)
            } else {
                // Entries inside the block are packed slightly looser than
                // wrapped lines but tighter than paragraph breaks.
                jitter(rng, 16.0)
            };
            let mut entry = Vec::new();
            push_reference(
                config,
                rng,
                &mut entry,
                doc,
                refs_done + b,
                FOOTNOTE_FONT,
                first_gap,
            );
            for line in entry {
                out.push((line, page));
            }
        }
        refs_done += block;

        out.push((page_number_line(doc, page), page));
        page += 1;
    }
    out
}

fn page_number_line(doc: &DocParams, page: u32) -> RawLine {
    RawLine {
        text: (doc.base_page + page - 1).to_string(),
        label: Label::Outside,
        ref_id: None,
        v_gap: PAGE_GAP,
        x: 40.0,
        font_size: BODY_FONT,
        bold: false,
    }
}

/// Flows an end-section content stream onto pages of `page_height` lines,
/// inserting page furniture at every break. Furniture between two lines of
/// the same reference is labeled `O-REF`; all other furniture is `O`.
fn paginate(config: &GenConfig, doc: &DocParams, stream: Vec<RawLine>) -> Vec<(RawLine, u32)> {
    let capacity = |page: u32| -> usize {
        // One slot for the page number, one for the running header when
        // present (headers start on page 2).
        config.page_height - 1 - usize::from(page > 1 && doc.has_header)
    };
    let mut out = Vec::new();
    let mut page: u32 = 1;
    let mut room = capacity(page);
    for mut line in stream {
        if room == 0 {
            let prev_ref = out.last().and_then(|(l, _): &(RawLine, u32)| l.ref_id);
            let inside = prev_ref.is_some() && prev_ref == line.ref_id;
            let furniture_label = if inside { Label::ORef } else { Label::Outside };
            let mut number = page_number_line(doc, page);
            number.label = furniture_label;
            out.push((number, page));
            page += 1;
            if doc.has_header {
                out.push((
                    RawLine {
                        text: doc.header_text.clone(),
                        label: furniture_label,
                        ref_id: None,
                        v_gap: PAGE_GAP,
                        x: 0.0,
                        font_size: BODY_FONT,
                        bold: false,
                    },
                    page,
                ));
            }
            room = capacity(page);
            // The physical gap at the top of a page is large regardless of
            // what the line's block position was.
            line.v_gap = PAGE_GAP;
        }
        out.push((line, page));
        room -= 1;
    }
    // Close the final page with its page number.
    let mut number = page_number_line(doc, page);
    number.label = Label::Outside;
    out.push((number, page));
    out
}

/// Converts positioned raw lines into a [`LabeledDocument`], turning absolute
/// left offsets into the per-line deltas the corpus format carries.
fn assemble(doc_id: String, pages: Vec<(RawLine, u32)>) -> LabeledDocument {
    let mut lines = Vec::with_capacity(pages.len());
    let mut labels = Vec::with_capacity(pages.len());
    let mut prev_x: Option<f64> = None;
    for (raw, page) in pages {
        lines.push(LineRecord {
            text: raw.text,
            page,
            v_gap: prev_x.is_some().then_some(raw.v_gap),
            indent: prev_x.map(|p| raw.x - p),
            font_size: Some(raw.font_size),
            bold: Some(raw.bold),
        });
        labels.push(raw.label);
        prev_x = Some(raw.x);
    }
    LabeledDocument {
        document: Document { doc_id, lines },
        labels,
    }
}

fn pick<'a>(rng: &mut ChaCha8Rng, words: &[&'a str]) -> &'a str {
    words[rng.random_range(0..words.len())]
}

fn jitter(rng: &mut ChaCha8Rng, base: f64) -> f64 {
    base + rng.random_range(-0.4..0.4)
}

/// One body line: 6–10 lowercase filler words, occasionally sentence-cased
/// or period-terminated.
fn body_line(rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(6..=10);
    let mut words: Vec<String> = (0..n).map(|_| pick(rng, BODY_WORDS).to_string()).collect();
    if rng.random_bool(0.3) {
        let first = &mut words[0];
        *first = capitalize(first);
    }
    let mut line = words.join(" ");
    if rng.random_bool(0.25) {
        line.push('.');
    }
    line
}

fn capitalize(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// The full text of one reference entry, before line wrapping.
fn reference_text(rng: &mut ChaCha8Rng, doc: &DocParams, ref_id: usize) -> String {
    let n_authors = rng.random_range(1..=3);
    let authors = (0..n_authors)
        .map(|_| {
            let initial = (b'A' + rng.random_range(0..26u8)) as char;
            format!("{}, {}.", pick(rng, SURNAMES), initial)
        })
        .collect::<Vec<_>>()
        .join(", ");
    let year = rng.random_range(1985..=2024);

    let n_title = rng.random_range(3..=6);
    let mut title_words = Vec::with_capacity(n_title);
    for j in 0..n_title {
        // Interior connectives stay lowercase, as in real title casing.
        if j > 0 && j + 1 < n_title && rng.random_bool(0.3) {
            title_words.push(pick(rng, TITLE_FILLERS).to_string());
        } else {
            title_words.push(pick(rng, TITLE_WORDS).to_string());
        }
    }
    let title = title_words.join(" ");

    let venue = match rng.random_range(0..3) {
        0 => format!(
            "Journal of {} {} {}({}), {}",
            pick(rng, TITLE_WORDS),
            pick(rng, TITLE_WORDS),
            rng.random_range(5..40),
            rng.random_range(1..=4),
            page_range(rng)
        ),
        1 => format!(
            "In Proceedings of the Conference on {} {}, pages {}",
            pick(rng, TITLE_WORDS),
            pick(rng, TITLE_WORDS),
            page_range(rng)
        ),
        _ => format!(
            "International Journal on {} {} {}({})",
            pick(rng, TITLE_WORDS),
            pick(rng, TITLE_WORDS),
            rng.random_range(5..40),
            rng.random_range(1..=4)
        ),
    };

    let marker = match doc.style {
        RefStyle::Numbered if doc.bracket_markers => format!("[{}] ", ref_id + 1),
        RefStyle::Numbered => format!("{}. ", ref_id + 1),
        _ => String::new(),
    };
    format!("{marker}{authors} ({year}) {title}. {venue}.")
}

fn page_range(rng: &mut ChaCha8Rng) -> String {
    let start = rng.random_range(1..900);
    let len = rng.random_range(2..30);
    format!("{}\u{2013}{}", start, start + len)
}

/// Wraps a reference string onto 1–4 lines, optionally hyphenating a word at
/// each junction so the dehyphenation path stays exercised.
fn wrap_reference(rng: &mut ChaCha8Rng, text: &str, hyphenation: f64) -> Vec<String> {
    let words: Vec<&str> = text.split_whitespace().collect();
    let n_lines = (words.len() / 7).clamp(1, 4);
    let per_line = words.len().div_ceil(n_lines);
    let mut lines: Vec<Vec<String>> = words
        .chunks(per_line)
        .map(|c| c.iter().map(|w| w.to_string()).collect())
        .collect();

    for j in 0..lines.len().saturating_sub(1) {
        if !rng.random_bool(hyphenation) {
            continue;
        }
        // Pull the head of the next line's first word up to this line with a
        // hyphen, provided the remainder starts lowercase so the fragment is
        // unambiguously a word split rather than a hyphenated compound.
        let word = lines[j + 1][0].clone();
        if word.len() < 6 || !word.bytes().all(|b| b.is_ascii_alphabetic()) {
            continue;
        }
        let cut = rng.random_range(3..=word.len() - 3);
        let (head, tail) = word.split_at(cut);
        if !tail.starts_with(|c: char| c.is_ascii_lowercase()) {
            continue;
        }
        lines[j].push(format!("{head}-"));
        lines[j + 1][0] = tail.to_string();
    }

    lines.into_iter().map(|ws| ws.join(" ")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{fired_names, FeatureConfig};

    fn small_config() -> GenConfig {
        GenConfig {
            seed: 7,
            n_documents: 6,
            ..GenConfig::default()
        }
    }

    #[test]
    fn same_config_yields_identical_corpora() {
        let config = small_config();
        let a = generate(&config).unwrap();
        let b = generate(&config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn document_count_and_unique_ids() {
        let corpus = generate(&small_config()).unwrap();
        assert_eq!(corpus.len(), 6);
        let ids: std::collections::BTreeSet<_> =
            corpus.iter().map(|d| d.document.doc_id.clone()).collect();
        assert_eq!(ids.len(), 6);
    }

    #[test]
    fn end_section_without_page_break_counts() {
        // One tall page: exactly two B-REF lines, no O-REF, and a heading.
        let config = GenConfig {
            seed: 1,
            n_documents: 1,
            references: (2, 2),
            page_height: 500,
            ..GenConfig::default()
        };
        let doc = &generate(&config).unwrap()[0];
        let count = |l: Label| doc.labels.iter().filter(|&&x| x == l).count();
        assert_eq!(count(Label::BRef), 2);
        assert_eq!(count(Label::ORef), 0);
        assert!(count(Label::Outside) >= 1);
        let heading_count = doc
            .document
            .lines
            .iter()
            .filter(|l| {
                let t = l.text.trim().to_lowercase();
                t == "references" || t == "bibliography"
            })
            .count();
        assert_eq!(heading_count, 1);
    }

    #[test]
    fn small_pages_split_references_with_oref_furniture() {
        let config = GenConfig {
            seed: 3,
            n_documents: 8,
            references: (6, 10),
            page_height: 8,
            ..GenConfig::default()
        };
        let corpus = generate(&config).unwrap();
        // At least one furniture run must interrupt a reference: an O-REF run
        // preceded by B-REF/I-REF and followed by I-REF.
        let mut interrupted = false;
        for doc in &corpus {
            let ls = &doc.labels;
            for i in 0..ls.len() {
                if ls[i] != Label::ORef {
                    continue;
                }
                assert!(i > 0, "O-REF cannot open a document");
                assert!(
                    matches!(ls[i - 1], Label::BRef | Label::IRef | Label::ORef),
                    "O-REF after {:?}",
                    ls[i - 1]
                );
                let mut j = i + 1;
                while j < ls.len() && ls[j] == Label::ORef {
                    j += 1;
                }
                assert!(j < ls.len(), "O-REF run reaches document end");
                assert_eq!(ls[j], Label::IRef, "O-REF run must resume its reference");
                interrupted = true;
            }
        }
        assert!(interrupted, "expected at least one page-split reference");
    }

    #[test]
    fn gold_labels_are_bio_legal() {
        for mode in [GenMode::EndSection, GenMode::Footnotes] {
            let config = GenConfig {
                seed: 11,
                n_documents: 10,
                page_height: 12,
                mode,
                ..GenConfig::default()
            };
            for doc in generate(&config).unwrap() {
                let ls = &doc.labels;
                assert!(!matches!(ls[0], Label::IRef | Label::ORef));
                for pair in ls.windows(2) {
                    if pair[0] == Label::Outside {
                        assert!(
                            !matches!(pair[1], Label::IRef | Label::ORef),
                            "continuation label straight after O"
                        );
                    }
                }
                // Every reference block opens with B-REF.
                assert!(ls.contains(&Label::BRef));
            }
        }
    }

    #[test]
    fn corpora_validate_clean_in_both_modes() {
        for mode in [GenMode::EndSection, GenMode::Footnotes] {
            let config = GenConfig {
                seed: 5,
                n_documents: 8,
                page_height: 10,
                mode,
                ..GenConfig::default()
            };
            for doc in generate(&config).unwrap() {
                assert_eq!(doc.validate(), Vec::<String>::new());
            }
        }
    }

    #[test]
    fn footnotes_mode_has_no_heading_and_smaller_fonts() {
        let config = GenConfig {
            seed: 9,
            n_documents: 8,
            mode: GenMode::Footnotes,
            ..GenConfig::default()
        };
        let feature_config = FeatureConfig::default();
        for doc in generate(&config).unwrap() {
            let fired = fired_names(&doc.document, &feature_config);
            for (i, line) in doc.document.lines.iter().enumerate() {
                assert!(
                    !fired[i].contains("is_heading"),
                    "unexpected heading line {:?}",
                    line.text
                );
                let expected = if matches!(doc.labels[i], Label::BRef | Label::IRef) {
                    FOOTNOTE_FONT
                } else {
                    BODY_FONT
                };
                assert_eq!(line.font_size, Some(expected));
            }
            // References must appear on more than one page.
            let ref_pages: std::collections::BTreeSet<u32> = doc
                .document
                .lines
                .iter()
                .zip(&doc.labels)
                .filter(|(_, l)| **l == Label::BRef)
                .map(|(line, _)| line.page)
                .collect();
            assert!(ref_pages.len() > 1, "footnotes should span pages");
        }
    }

    #[test]
    fn forced_hyphenation_produces_joinable_breaks() {
        let config = GenConfig {
            seed: 21,
            n_documents: 4,
            hyphenation: 1.0,
            page_height: 500,
            ..GenConfig::default()
        };
        let corpus = generate(&config).unwrap();
        let mut seen = false;
        for doc in &corpus {
            for (i, line) in doc.document.lines.iter().enumerate() {
                if doc.labels[i] != Label::IRef || i == 0 {
                    continue;
                }
                let prev = doc.document.lines[i - 1].text.trim_end();
                if prev.ends_with('-') {
                    let first = line.text.chars().find(|c| c.is_alphabetic());
                    assert_eq!(first.map(|c| c.is_lowercase()), Some(true));
                    seen = true;
                }
            }
        }
        assert!(
            seen,
            "hyphenation probability 1.0 produced no hyphen breaks"
        );
    }

    #[test]
    fn mixed_style_produces_both_marker_forms() {
        let config = GenConfig {
            seed: 2,
            n_documents: 12,
            style: RefStyle::Mixed,
            ..GenConfig::default()
        };
        let corpus = generate(&config).unwrap();
        let mut numbered = 0usize;
        let mut author_year = 0usize;
        for doc in &corpus {
            let first_b = doc
                .labels
                .iter()
                .position(|&l| l == Label::BRef)
                .expect("every document has references");
            let text = &doc.document.lines[first_b].text;
            if text.starts_with(|c: char| c.is_ascii_digit() || c == '[') {
                numbered += 1;
            } else {
                author_year += 1;
            }
        }
        assert!(
            numbered > 0 && author_year > 0,
            "{numbered} vs {author_year}"
        );
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let bad_range = GenConfig {
            references: (5, 2),
            ..GenConfig::default()
        };
        assert!(matches!(
            generate(&bad_range).unwrap_err(),
            GenError::EmptyRange {
                field: "references",
                ..
            }
        ));
        let zero_refs = GenConfig {
            references: (0, 3),
            ..GenConfig::default()
        };
        assert!(matches!(
            generate(&zero_refs).unwrap_err(),
            GenError::ReferencesStart { lo: 0 }
        ));
        let bad_prob = GenConfig {
            hyphenation: 1.5,
            ..GenConfig::default()
        };
        assert!(matches!(
            generate(&bad_prob).unwrap_err(),
            GenError::Probability { .. }
        ));
        let bad_height = GenConfig {
            page_height: 3,
            ..GenConfig::default()
        };
        assert!(matches!(
            generate(&bad_height).unwrap_err(),
            GenError::PageHeight { got: 3 }
        ));
    }

    #[test]
    fn reference_lines_fire_expected_surface_features() {
        let config = GenConfig {
            seed: 4,
            n_documents: 4,
            style: RefStyle::AuthorYear,
            page_height: 500,
            ..GenConfig::default()
        };
        let feature_config = FeatureConfig {
            name_gazetteer: Some(SURNAMES.iter().map(|s| s.to_string()).collect()),
            ..FeatureConfig::default()
        };
        for doc in generate(&config).unwrap() {
            let fired = fired_names(&doc.document, &feature_config);
            for (i, label) in doc.labels.iter().enumerate() {
                if *label != Label::BRef {
                    continue;
                }
                assert!(fired[i].contains("has_year"), "B-REF line lacks has_year");
                assert!(fired[i].contains("name_hit"), "B-REF line lacks name_hit");
            }
        }
    }
}
