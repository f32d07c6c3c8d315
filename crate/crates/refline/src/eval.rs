//! Line-level and reference-level evaluation metrics.
//!
//! Everything is computed from pooled raw counts ([`Counts`]), so corpus
//! aggregation is micro-averaged: merge the per-document counts, then derive
//! ratios once. Label metrics are one-vs-rest; reference-level correctness is
//! exact line-index-set match, which is unambiguous and independent of text
//! joining details.
//!
//! Undefined ratios follow two deliberate conventions: per-label metrics for
//! a label absent from both gold and prediction report 0 (undefined-as-zero),
//! while reference-level precision/recall report 1 when there is nothing to
//! find and nothing was predicted, keeping `reference_metrics(a, a)` perfect
//! for every `a` including the empty list.

use std::collections::HashMap;

use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::corpus::Label;
use crate::extract::ReferenceString;

/// Errors from metric computation.
#[derive(Debug, Error)]
pub enum EvalError {
    #[error("gold has {gold} labels but prediction has {pred}")]
    LengthMismatch { gold: usize, pred: usize },
}

/// True/false positive and false negative tallies for one category.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TallyCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl TallyCounts {
    fn merge(&mut self, other: &TallyCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }
}

/// Pooled raw counts; the unit of micro-averaged aggregation.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Counts {
    pub lines_total: u64,
    pub lines_correct: u64,
    /// One-vs-rest counts per label, indexed by [`Label::index`].
    pub per_label: [TallyCounts; 4],
    /// Reference-level counts under exact line-index-set match.
    pub references: TallyCounts,
}

impl Counts {
    /// Pools another count set into this one.
    pub fn merge(&mut self, other: &Counts) {
        self.lines_total += other.lines_total;
        self.lines_correct += other.lines_correct;
        for (mine, theirs) in self.per_label.iter_mut().zip(&other.per_label) {
            mine.merge(theirs);
        }
        self.references.merge(&other.references);
    }
}

/// Line-level counts for one gold/predicted label sequence pair.
pub fn line_counts(gold: &[Label], pred: &[Label]) -> Result<Counts, EvalError> {
    if gold.len() != pred.len() {
        return Err(EvalError::LengthMismatch {
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    let mut counts = Counts {
        lines_total: gold.len() as u64,
        ..Counts::default()
    };
    for (&g, &p) in gold.iter().zip(pred) {
        if g == p {
            counts.lines_correct += 1;
            counts.per_label[g.index()].tp += 1;
        } else {
            counts.per_label[p.index()].fp += 1;
            counts.per_label[g.index()].fn_ += 1;
        }
    }
    Ok(counts)
}

/// Reference-level counts for one document: a prediction is a true positive
/// exactly when its line-index set equals some unmatched gold reference's
/// set.
pub fn reference_counts(gold: &[ReferenceString], pred: &[ReferenceString]) -> Counts {
    let mut unmatched: HashMap<&[usize], u64> = HashMap::new();
    for g in gold {
        *unmatched.entry(g.line_indices.as_slice()).or_insert(0) += 1;
    }
    let mut tp = 0u64;
    for p in pred {
        if let Some(n) = unmatched.get_mut(p.line_indices.as_slice()) {
            if *n > 0 {
                *n -= 1;
                tp += 1;
            }
        }
    }
    Counts {
        references: TallyCounts {
            tp,
            fp: pred.len() as u64 - tp,
            fn_: gold.len() as u64 - tp,
        },
        ..Counts::default()
    }
}

/// Precision/recall/F1 triple.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn prf(c: &TallyCounts, empty_is_perfect: bool) -> Prf {
    let ratio = |num: u64, den: u64| -> f64 {
        if den == 0 {
            if empty_is_perfect && c.tp + c.fp + c.fn_ == 0 {
                1.0
            } else {
                0.0
            }
        } else {
            num as f64 / den as f64
        }
    };
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Prf {
        precision,
        recall,
        f1,
    }
}

/// Derived metrics over pooled counts.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub counts: Counts,
    pub line_accuracy: f64,
    /// Per-label P/R/F1, indexed by [`Label::index`].
    pub per_label: [Prf; 4],
    pub references: Prf,
}

impl Metrics {
    pub fn from_counts(counts: Counts) -> Metrics {
        let line_accuracy = if counts.lines_total == 0 {
            1.0
        } else {
            counts.lines_correct as f64 / counts.lines_total as f64
        };
        let per_label = [0, 1, 2, 3].map(|i| prf(&counts.per_label[i], false));
        let references = prf(&counts.references, true);
        Metrics {
            counts,
            line_accuracy,
            per_label,
            references,
        }
    }
}

impl Serialize for Metrics {
    /// Serializes as one flat JSON object:
    /// `line_accuracy`, `lines_total`, `lines_correct`, then per label
    /// `<label>_{precision,recall,f1,tp,fp,fn}`, then the reference-level
    /// block under the `ref_` prefix.
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("Metrics", 33)?;
        // serde requires 'static field names; the flat key set is fixed, so
        // they are spelled out per label.
        macro_rules! block {
            ($prefix:literal, $prf:expr, $tally:expr) => {
                s.serialize_field(concat!($prefix, "_precision"), &$prf.precision)?;
                s.serialize_field(concat!($prefix, "_recall"), &$prf.recall)?;
                s.serialize_field(concat!($prefix, "_f1"), &$prf.f1)?;
                s.serialize_field(concat!($prefix, "_tp"), &$tally.tp)?;
                s.serialize_field(concat!($prefix, "_fp"), &$tally.fp)?;
                s.serialize_field(concat!($prefix, "_fn"), &$tally.fn_)?;
            };
        }
        s.serialize_field("line_accuracy", &self.line_accuracy)?;
        s.serialize_field("lines_total", &self.counts.lines_total)?;
        s.serialize_field("lines_correct", &self.counts.lines_correct)?;
        block!("b_ref", self.per_label[0], self.counts.per_label[0]);
        block!("i_ref", self.per_label[1], self.counts.per_label[1]);
        block!("o_ref", self.per_label[2], self.counts.per_label[2]);
        block!("o", self.per_label[3], self.counts.per_label[3]);
        block!("ref", self.references, self.counts.references);
        s.end()
    }
}

/// Line metrics for a single sequence pair.
pub fn line_metrics(gold: &[Label], pred: &[Label]) -> Result<Metrics, EvalError> {
    Ok(Metrics::from_counts(line_counts(gold, pred)?))
}

/// Reference metrics for a single document pair.
pub fn reference_metrics(gold: &[ReferenceString], pred: &[ReferenceString]) -> Metrics {
    Metrics::from_counts(reference_counts(gold, pred))
}
