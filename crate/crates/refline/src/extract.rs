//! Grouping decoded line labels into whole reference strings.
//!
//! The label semantics drive a small finite-state transduction: `B-REF` opens
//! a reference, `I-REF` extends the open one, `O-REF` is skipped *without*
//! closing it (page numbers and running headers interrupt references wrapped
//! across pages or columns), and `O` closes it. An `I-REF` run with nothing
//! open — typically a reference continued from a previous page whose first
//! line was misclassified — still becomes a reference, flagged `promoted` so
//! downstream consumers may filter.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Document, Label, LineRecord};
use crate::crf::{CrfError, CrfModel};
use crate::features::vectorize;

/// One extracted reference string and its provenance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceString {
    /// The joined reference text.
    pub text: String,
    /// Indices of the contributing lines, strictly increasing; never lines
    /// labeled `O` or `O-REF`.
    pub line_indices: Vec<usize>,
    /// True when the string began with an orphan `I-REF` run instead of a
    /// `B-REF` line.
    pub promoted: bool,
}

/// Per-document extraction result, the unit of the JSONL output format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentReferences {
    pub doc_id: String,
    pub references: Vec<ReferenceString>,
}

/// Errors from grouping and extraction.
#[derive(Debug, Error)]
pub enum ExtractError {
    #[error("labels length {labels} does not match line count {lines}")]
    LengthMismatch { labels: usize, lines: usize },
    #[error(transparent)]
    Crf(#[from] CrfError),
}

struct OpenReference {
    text: String,
    line_indices: Vec<usize>,
    promoted: bool,
}

impl OpenReference {
    fn start(line: &LineRecord, index: usize, promoted: bool) -> OpenReference {
        OpenReference {
            text: line.text.trim().to_string(),
            line_indices: vec![index],
            promoted,
        }
    }

    /// Joins the next line: a trailing hyphen merges with a lowercase
    /// continuation (the hyphen was a line break inside a word); anything
    /// else joins with a single space.
    fn append(&mut self, line: &LineRecord, index: usize) {
        self.line_indices.push(index);
        let next = line.text.trim();
        if next.is_empty() {
            return;
        }
        if self.text.is_empty() {
            self.text.push_str(next);
            return;
        }
        let lowercase_start = next
            .chars()
            .find(|c| c.is_alphabetic())
            .is_some_and(|c| c.is_lowercase());
        if self.text.ends_with('-') && lowercase_start {
            self.text.pop();
        } else {
            self.text.push(' ');
        }
        self.text.push_str(next);
    }

    fn finish(self) -> ReferenceString {
        ReferenceString {
            text: self.text,
            line_indices: self.line_indices,
            promoted: self.promoted,
        }
    }
}

/// Groups labeled lines into reference strings.
pub fn group(lines: &[LineRecord], labels: &[Label]) -> Result<Vec<ReferenceString>, ExtractError> {
    if lines.len() != labels.len() {
        return Err(ExtractError::LengthMismatch {
            labels: labels.len(),
            lines: lines.len(),
        });
    }
    let mut out = Vec::new();
    let mut open: Option<OpenReference> = None;
    for (i, (line, label)) in lines.iter().zip(labels).enumerate() {
        match label {
            Label::BRef => {
                if let Some(r) = open.take() {
                    out.push(r.finish());
                }
                open = Some(OpenReference::start(line, i, false));
            }
            Label::IRef => match open.as_mut() {
                Some(r) => r.append(line, i),
                None => open = Some(OpenReference::start(line, i, true)),
            },
            Label::ORef => {}
            Label::Outside => {
                if let Some(r) = open.take() {
                    out.push(r.finish());
                }
            }
        }
    }
    if let Some(r) = open.take() {
        out.push(r.finish());
    }
    Ok(out)
}

/// Decodes a document with the model and groups the result: a pure
/// composition of [`vectorize`], [`CrfModel::viterbi`], and [`group`].
pub fn extract(
    document: &Document,
    model: &CrfModel,
    constraints: Option<bool>,
) -> Result<Vec<ReferenceString>, ExtractError> {
    let xs = vectorize(document, model.feature_config(), model.space());
    let (labels, _) = model.viterbi(&xs, constraints)?;
    group(&document.lines, &labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{build_feature_space, FeatureConfig};
    use crate::test_fixtures::{table1, TABLE1_LINES};

    fn lines(texts: &[&str]) -> Vec<LineRecord> {
        texts.iter().map(|t| LineRecord::from_text(*t)).collect()
    }

    use Label::{BRef as B, IRef as I, ORef as R, Outside as O};

    #[test]
    fn worked_example_groups_into_two_references() {
        let t1 = table1();
        let refs = group(&t1.document.lines, &t1.labels).unwrap();
        assert_eq!(refs.len(), 2);
        assert_eq!(
            refs[0].text,
            "Tkaczyk, D., et al. (2015) Cermine: automatic extraction of \
             structured metadata from scientific literature. International \
             Journal on Document Analysis and Recognition (IJDAR) 18(4)"
        );
        assert_eq!(refs[0].line_indices, vec![2, 3, 5]);
        assert!(!refs[0].promoted);
        assert_eq!(refs[1].text, TABLE1_LINES[6].0);
        assert_eq!(refs[1].line_indices, vec![6]);
    }

    #[test]
    fn all_outside_yields_nothing() {
        let ls = lines(&["a", "b", "c"]);
        assert!(group(&ls, &[O, O, O]).unwrap().is_empty());
    }

    #[test]
    fn orphan_continuation_is_promoted() {
        let ls = lines(&["tail of a reference", "from the previous page"]);
        let refs = group(&ls, &[I, I]).unwrap();
        assert_eq!(refs.len(), 1);
        assert!(refs[0].promoted);
        assert_eq!(refs[0].text, "tail of a reference from the previous page");
        assert_eq!(refs[0].line_indices, vec![0, 1]);
    }

    #[test]
    fn outside_closes_and_orphan_reopens() {
        let ls = lines(&["Smith, J. (2001) A title.", "Body text.", "continued tail"]);
        let refs = group(&ls, &[B, O, I]).unwrap();
        assert_eq!(refs.len(), 2);
        assert!(!refs[0].promoted);
        assert!(refs[1].promoted);
        assert_eq!(refs[1].line_indices, vec![2]);
    }

    /// Hand-enumerated state-machine table: label pattern, expected count,
    /// expected promoted flags.
    #[test]
    fn grouping_state_machine_table() {
        let cases: &[(&[Label], usize, &[bool])] = &[
            (&[B], 1, &[false]),
            (&[B, I], 1, &[false]),
            (&[B, R, I], 1, &[false]),
            (&[B, R, R, I], 1, &[false]),
            (&[B, O, B], 2, &[false, false]),
            (&[B, B], 2, &[false, false]),
            (&[I], 1, &[true]),
            (&[R], 0, &[]),
            (&[O, I], 1, &[true]),
            (&[B, I, O, I], 2, &[false, true]),
            (&[R, I, B], 2, &[true, false]),
            (&[B, O, O, I, I], 2, &[false, true]),
        ];
        for (labels, count, promoted) in cases {
            let ls: Vec<LineRecord> = (0..labels.len())
                .map(|i| LineRecord::from_text(format!("w{i}")))
                .collect();
            let refs = group(&ls, labels).unwrap();
            assert_eq!(refs.len(), *count, "{labels:?}");
            let got: Vec<bool> = refs.iter().map(|r| r.promoted).collect();
            assert_eq!(&got, promoted, "{labels:?}");
        }
    }

    /// Exhaustive check of the structural invariants over every label
    /// sequence up to length 6, against independently coded counters.
    #[test]
    fn grouping_invariants_exhaustive() {
        fn orphan_runs_plus_brefs(labels: &[Label]) -> usize {
            // Independent second implementation: count B-REF lines, plus
            // I-REF lines at which no reference is open. "Open" tracks the
            // last non-O-REF label being B-REF or I-REF.
            let mut count = 0;
            let mut open = false;
            for &l in labels {
                match l {
                    B => {
                        count += 1;
                        open = true;
                    }
                    I => {
                        if !open {
                            count += 1;
                            open = true;
                        }
                    }
                    R => {}
                    O => open = false,
                }
            }
            count
        }

        let mut stack = vec![vec![]];
        while let Some(seq) = stack.pop() {
            if seq.len() < 6 {
                for l in Label::ALL {
                    let mut next = seq.clone();
                    next.push(l);
                    stack.push(next);
                }
            }
            if seq.is_empty() {
                continue;
            }
            let ls: Vec<LineRecord> = (0..seq.len())
                .map(|i| LineRecord::from_text(format!("w{i}")))
                .collect();
            let refs = group(&ls, &seq).unwrap();
            assert_eq!(refs.len(), orphan_runs_plus_brefs(&seq), "{seq:?}");
            let mut last: Option<usize> = None;
            for r in &refs {
                assert!(!r.line_indices.is_empty());
                for &i in &r.line_indices {
                    assert!(matches!(seq[i], B | I), "{seq:?}");
                    assert!(last.is_none_or(|p| i > p), "{seq:?}");
                    last = Some(i);
                }
            }
        }
    }

    #[test]
    fn dehyphenation_rules() {
        // Lowercase continuation merges; uppercase or non-alphabetic keeps
        // the hyphen and joins with a space.
        let cases = [
            (vec!["Interna-", "tional"], "International"),
            (vec!["multi-", "Objective"], "multi- Objective"),
            (vec!["pages 10-", "(2015)"], "pages 10- (2015)"),
            (vec!["the 19-", "90s era"], "the 1990s era"),
            (vec!["no hyphen", "plain join"], "no hyphen plain join"),
        ];
        for (texts, expected) in cases {
            let ls = lines(&texts);
            let labels = vec![I; ls.len()];
            let refs = group(&ls, &labels).unwrap();
            assert_eq!(refs[0].text, expected, "{texts:?}");
        }
    }

    #[test]
    fn whitespace_trimmed_and_empty_lines_add_no_text() {
        let ls = lines(&["  Smith, J. ", "", "  (2001)  "]);
        let refs = group(&ls, &[B, I, I]).unwrap();
        assert_eq!(refs[0].text, "Smith, J. (2001)");
        assert_eq!(refs[0].line_indices, vec![0, 1, 2]);
    }

    #[test]
    fn length_mismatch_rejected() {
        let ls = lines(&["a", "b"]);
        assert!(matches!(
            group(&ls, &[O]),
            Err(ExtractError::LengthMismatch {
                labels: 1,
                lines: 2
            })
        ));
    }

    #[test]
    fn extract_composes_decode_and_group() {
        // Gold-forcing model as in the decoder tests: +5 on each line's gold
        // pairing of its relpos feature.
        let t1 = table1();
        let config = FeatureConfig::default();
        let space = build_feature_space(std::slice::from_ref(&t1), &config, 1).unwrap();
        let mut weights = vec![0.0; space.len()];
        for (t, &(_, label)) in TABLE1_LINES.iter().enumerate() {
            let decile = 10 * t / TABLE1_LINES.len();
            let pair = crate::crf::pair_name(&format!("relpos={decile}"), label);
            weights[space.index_of(&pair).unwrap() as usize] = 5.0;
        }
        let model = CrfModel::new(1, space, weights, config, true).unwrap();
        let refs = extract(&t1.document, &model, None).unwrap();
        let direct = group(&t1.document.lines, &t1.labels).unwrap();
        assert_eq!(refs, direct);
    }

    #[test]
    fn extract_without_references_is_empty() {
        let doc = Document {
            doc_id: "none".into(),
            lines: lines(&["plain body text", "more body text"]),
        };
        let config = FeatureConfig::default();
        let labeled = crate::corpus::LabeledDocument {
            document: doc.clone(),
            labels: vec![O, O],
        };
        let space = build_feature_space(&[labeled], &config, 1).unwrap();
        let mut weights = vec![0.0; space.len()];
        let pair = crate::crf::pair_name("bias", Label::Outside);
        weights[space.index_of(&pair).unwrap() as usize] = 5.0;
        let model = CrfModel::new(1, space, weights, config, true).unwrap();
        assert!(extract(&doc, &model, None).unwrap().is_empty());
    }
}
