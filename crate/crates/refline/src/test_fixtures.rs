//! Shared unit-test fixtures.

use crate::corpus::{Document, Label, LabeledDocument, LineRecord};

/// The worked example used across module tests: the tail of an acknowledgment
/// section, a heading, a reference wrapped over two columns with a stray page
/// number in between, and the start of a second reference.
pub(crate) const TABLE1_LINES: [(&str, Label); 7] = [
    (
        "grant numbers MA 3964/8-1 and STA 572/14-1.",
        Label::Outside,
    ),
    ("References", Label::Outside),
    (
        "Tkaczyk, D., et al. (2015) Cermine: automatic extraction of",
        Label::BRef,
    ),
    (
        "structured metadata from scientific literature. Interna-",
        Label::IRef,
    ),
    ("1252", Label::ORef),
    (
        "tional Journal on Document Analysis and Recognition (IJDAR) 18(4)",
        Label::IRef,
    ),
    (
        "Lafferty, J., McCallum, A., Pereira, F. (2001) Conditional random",
        Label::BRef,
    ),
];

pub(crate) fn table1() -> LabeledDocument {
    LabeledDocument {
        document: Document {
            doc_id: "table1".into(),
            lines: TABLE1_LINES
                .iter()
                .map(|(text, _)| LineRecord::from_text(*text))
                .collect(),
        },
        labels: TABLE1_LINES.iter().map(|&(_, label)| label).collect(),
    }
}
