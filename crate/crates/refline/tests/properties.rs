//! Property tests for the library's structural invariants: feature-name
//! grammar,
//! heading monotonicity, window locality, probability normalization,
//! grouping counts, and decode-constraint monotonicity.

mod common;

use proptest::prelude::*;

use refline::corpus::{Document, Label, LineRecord};
use refline::extract::group;
use refline::features::{fired_names, FeatureConfig};

fn line_text() -> impl Strategy<Value = String> {
    proptest::string::string_regex("[a-zA-Z0-9 ,.()\\[\\]–-]{0,40}").unwrap()
}

fn doc_from(texts: &[String]) -> Document {
    Document {
        doc_id: "prop".to_string(),
        lines: texts.iter().map(LineRecord::from_text).collect(),
    }
}

fn label_vec(max_len: usize) -> impl Strategy<Value = Vec<Label>> {
    proptest::collection::vec(proptest::sample::select(Label::ALL.to_vec()), 1..=max_len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Every fired feature name obeys `base(@offset)?(=bucket)?` with a
    /// lowercase base, an explicitly signed nonzero offset bounded by the
    /// window, and a bucket that is either digits or a `+`/`-` direction.
    #[test]
    fn fired_names_obey_the_grammar(texts in proptest::collection::vec(line_text(), 1..8)) {
        let grammar = regex::Regex::new(
            r"^[a-z_]+(@[+-][0-9]+)?(=([0-9]+|[+-]))?$"
        ).unwrap();
        let config = FeatureConfig::default();
        let doc = doc_from(&texts);
        for names in fired_names(&doc, &config) {
            for name in &names {
                prop_assert!(grammar.is_match(name), "bad name {name:?}");
                if let Some(at) = name.find('@') {
                    let rest = &name[at + 1..];
                    let digits_end = rest.find('=').unwrap_or(rest.len());
                    let offset: i32 = rest[..digits_end].parse().unwrap();
                    prop_assert!(offset != 0, "offset zero in {name:?}");
                    prop_assert!(
                        offset.unsigned_abs() as u8 <= config.window,
                        "offset beyond window in {name:?}"
                    );
                }
            }
        }
    }

    /// `after_heading` fires on line `i` exactly when some earlier line is a
    /// heading; once true it stays true for the rest of the document.
    #[test]
    fn after_heading_is_monotone(
        texts in proptest::collection::vec(line_text(), 1..8),
        pos in 0usize..8,
    ) {
        let mut texts = texts;
        let pos = pos.min(texts.len() - 1);
        texts[pos] = "References".to_string();
        let config = FeatureConfig::default();
        let doc = doc_from(&texts);
        let fired = fired_names(&doc, &config);
        let first_heading = texts
            .iter()
            .position(|t| {
                let lower = t.trim().to_lowercase();
                config.heading_gazetteer.contains(&lower)
            })
            .unwrap();
        for (i, names) in fired.iter().enumerate() {
            prop_assert_eq!(
                names.contains("after_heading"),
                i > first_heading,
                "line {} of {:?}",
                i,
                texts
            );
        }
    }

    /// Editing one line changes fired names only within `window` lines.
    #[test]
    fn feature_extraction_is_window_local(
        texts in proptest::collection::vec(line_text(), 2..8),
        window in 0u8..=3,
        edit in 0usize..8,
        replacement in line_text(),
    ) {
        let config = FeatureConfig { window, ..FeatureConfig::default() };
        let edit = edit.min(texts.len() - 1);
        let mut edited = texts.clone();
        edited[edit] = replacement;

        let before = fired_names(&doc_from(&texts), &config);
        let after = fired_names(&doc_from(&edited), &config);
        for i in 0..texts.len() {
            if i.abs_diff(edit) > window as usize {
                prop_assert_eq!(&before[i], &after[i], "line {} leaked an edit at {}", i, edit);
            }
        }
    }

    /// Sequence probabilities sum to one, both unconstrained (over all
    /// sequences) and constrained (illegal sequences carry probability zero).
    #[test]
    fn sequence_probabilities_normalize(seed in any::<u64>(), constrained in any::<bool>()) {
        let mut rng = common::rng(seed);
        let inst = common::random_instance(&mut rng, 5, 2);
        let total: f64 = common::all_sequences(inst.t)
            .map(|y| {
                inst.model
                    .sequence_log_prob(&inst.xs, &y, Some(constrained))
                    .unwrap()
                    .exp()
            })
            .sum();
        prop_assert!((total - 1.0).abs() < 1e-9, "probabilities sum to {total}");
    }

    /// Grouping yields one reference per B-REF line plus one per orphan
    /// I-REF run, covers each B/I line exactly once, and never includes
    /// O/O-REF lines.
    #[test]
    fn grouping_counts_and_coverage(labels in label_vec(12)) {
        let lines: Vec<LineRecord> = (0..labels.len())
            .map(|i| LineRecord::from_text(format!("line {i}")))
            .collect();
        let refs = group(&lines, &labels).unwrap();

        let mut expected = 0usize;
        let mut orphans = 0usize;
        let mut prev_in_ref = false;
        for l in &labels {
            match l {
                Label::BRef => {
                    expected += 1;
                    prev_in_ref = true;
                }
                Label::IRef => {
                    if !prev_in_ref {
                        expected += 1;
                        orphans += 1;
                    }
                    prev_in_ref = true;
                }
                // O-REF neither opens nor closes a reference.
                Label::ORef => {}
                Label::Outside => prev_in_ref = false,
            }
        }
        prop_assert_eq!(refs.len(), expected);
        prop_assert_eq!(refs.iter().filter(|r| r.promoted).count(), orphans);

        let mut seen = std::collections::BTreeSet::new();
        for r in &refs {
            for &i in &r.line_indices {
                prop_assert!(seen.insert(i), "line {} in two references", i);
                prop_assert!(matches!(labels[i], Label::BRef | Label::IRef));
            }
        }
        for (i, l) in labels.iter().enumerate() {
            if matches!(l, Label::BRef | Label::IRef) {
                prop_assert!(seen.contains(&i), "line {} not covered", i);
            }
        }
    }

    /// Constraining the decoder can only shrink the partition function and
    /// the best path score, and the constrained path is always BIO-legal.
    #[test]
    fn constraints_are_monotone(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let inst = common::random_instance(&mut rng, 5, 2);
        let z_free = inst.model.log_partition(&inst.xs, Some(false)).unwrap();
        let z_bio = inst.model.log_partition(&inst.xs, Some(true)).unwrap();
        prop_assert!(z_bio <= z_free + 1e-12, "{z_bio} > {z_free}");

        let (path_free, s_free) = inst.model.viterbi(&inst.xs, Some(false)).unwrap();
        let (path_bio, s_bio) = inst.model.viterbi(&inst.xs, Some(true)).unwrap();
        prop_assert!(s_bio <= s_free + 1e-12);
        prop_assert!(common::bio_legal(&path_bio), "illegal path {path_bio:?}");
        if common::bio_legal(&path_free) {
            prop_assert_eq!(path_free, path_bio);
        }
    }
}
