//! Shared helpers for integration tests: seeded random lattice instances and
//! a brute-force oracle that scores label sequences by feature-name lookup,
//! sharing no dynamic-programming code with the library.
#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use refline::corpus::Label;
use refline::crf::CrfModel;
use refline::features::{FeatureConfig, FeatureSpace, FeatureVector};

/// A random order-`m` model over positional observation names, plus the
/// feature vectors of one sequence of length `t`.
pub struct RandomInstance {
    pub model: CrfModel,
    pub xs: Vec<FeatureVector>,
    pub t: usize,
    pub order: usize,
}

/// Draws a model with `t ∈ 1..=max_t`, `order ∈ 1..=max_order`, and weights
/// uniform in [−2, 2]. Every position fires a shared `bias` name plus its own
/// `pos=<t>` name, so emissions differ across positions.
pub fn random_instance(rng: &mut ChaCha8Rng, max_t: usize, max_order: usize) -> RandomInstance {
    let t = rng.random_range(1..=max_t);
    let order = rng.random_range(1..=max_order);
    let mut obs = BTreeSet::new();
    obs.insert("bias".to_string());
    for i in 0..t {
        obs.insert(format!("pos={i}"));
    }
    let space = FeatureSpace::for_model(obs, order);
    let weights: Vec<f64> = (0..space.len())
        .map(|_| rng.random_range(-2.0..=2.0))
        .collect();
    let model = CrfModel::new(order, space, weights, FeatureConfig::default(), false)
        .expect("random instance is structurally complete");
    let xs: Vec<FeatureVector> = (0..t)
        .map(|i| {
            FeatureVector::new(vec![
                model.space().index_of("bias").unwrap(),
                model.space().index_of(&format!("pos={i}")).unwrap(),
            ])
        })
        .collect();
    RandomInstance {
        model,
        xs,
        t,
        order,
    }
}

/// All `4^t` label sequences in lexicographic order under the label-index
/// ordering `B-REF < I-REF < O-REF < O` (first position most significant).
pub fn all_sequences(t: usize) -> impl Iterator<Item = Vec<Label>> {
    (0..4usize.pow(t as u32)).map(move |code| {
        let mut seq = vec![Label::Outside; t];
        let mut rest = code;
        for slot in seq.iter_mut().rev() {
            *slot = Label::ALL[rest % 4];
            rest /= 4;
        }
        seq
    })
}

/// The BIO legality rule, restated independently: a document cannot open
/// with a continuation label, and after `O` the labels `I-REF` and `O-REF`
/// are barred.
pub fn bio_legal(labels: &[Label]) -> bool {
    if matches!(labels.first(), Some(Label::IRef) | Some(Label::ORef)) {
        return false;
    }
    labels
        .windows(2)
        .all(|pair| !(pair[0] == Label::Outside && matches!(pair[1], Label::IRef | Label::ORef)))
}

/// The state tuple name covering positions `end-m+1 ..= end` of `labels`,
/// padding positions before the first with `B-REF`, joined with `|`.
fn state_tuple(labels: &[Label], end: usize, order: usize) -> String {
    (0..order)
        .map(|j| {
            let pos = end as isize - (order - 1 - j) as isize;
            if pos < 0 {
                "B-REF".to_string()
            } else {
                labels[pos as usize].to_string()
            }
        })
        .collect::<Vec<_>>()
        .join("|")
}

/// Independent path score: emission weights looked up by `<name>~<label>`
/// strings, transition weights by `T:<from>><to>` strings for steps 2..=T.
pub fn oracle_score(model: &CrfModel, xs: &[FeatureVector], labels: &[Label]) -> f64 {
    let space = model.space();
    let w = model.weights();
    let weight = |name: &str| -> f64 {
        w[space
            .index_of(name)
            .unwrap_or_else(|| panic!("missing {name}")) as usize]
    };
    let mut score = 0.0;
    for (t, x) in xs.iter().enumerate() {
        for &idx in x.indices() {
            let name = space.name(idx);
            score += weight(&format!("{name}~{}", labels[t]));
        }
    }
    let order = model.order();
    for t in 1..labels.len() {
        score += weight(&format!(
            "T:{}>{}",
            state_tuple(labels, t - 1, order),
            state_tuple(labels, t, order)
        ));
    }
    score
}

/// Numerically careful log-sum-exp for the oracle side.
pub fn lse(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Enumerated log-partition over all sequences, optionally restricted to
/// BIO-legal ones.
pub fn oracle_log_z(model: &CrfModel, xs: &[FeatureVector], constrained: bool) -> f64 {
    let scores: Vec<f64> = all_sequences(xs.len())
        .filter(|y| !constrained || bio_legal(y))
        .map(|y| oracle_score(model, xs, &y))
        .collect();
    lse(&scores)
}

/// Enumerated argmax with the documented tie-break: the first maximum in
/// lexicographic order is the smallest among ties.
pub fn oracle_viterbi(
    model: &CrfModel,
    xs: &[FeatureVector],
    constrained: bool,
) -> (Vec<Label>, f64) {
    let mut best: Option<(Vec<Label>, f64)> = None;
    for y in all_sequences(xs.len()) {
        if constrained && !bio_legal(&y) {
            continue;
        }
        let s = oracle_score(model, xs, &y);
        if best.as_ref().is_none_or(|(_, b)| s > *b) {
            best = Some((y, s));
        }
    }
    best.expect("at least one sequence")
}

/// Enumerated per-position label posteriors.
pub fn oracle_marginals(
    model: &CrfModel,
    xs: &[FeatureVector],
    constrained: bool,
) -> Vec<[f64; 4]> {
    let log_z = oracle_log_z(model, xs, constrained);
    let mut out = vec![[0.0f64; 4]; xs.len()];
    for y in all_sequences(xs.len()) {
        if constrained && !bio_legal(&y) {
            continue;
        }
        let p = (oracle_score(model, xs, &y) - log_z).exp();
        for (t, label) in y.iter().enumerate() {
            out[t][label.index()] += p;
        }
    }
    out
}

/// A fresh deterministic RNG for a named test.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Small vocabulary chosen to exercise several feature templates: markers,
/// years, page ranges, punctuation, and mixed capitalization.
pub const FEATURE_WORDS: &[&str] = &[
    "alpha", "beta", "Gamma,", "(2015)", "12–20", "[3]", "delta.", "Epsilon", "the", "of",
];

/// A labeled document with random short lines over [`FEATURE_WORDS`], random
/// layout attributes, and uniformly random labels; used for gradient checks
/// where the gold sequence need not be well-formed.
pub fn random_feature_doc(
    rng: &mut ChaCha8Rng,
    id: usize,
    max_t: usize,
) -> refline::corpus::LabeledDocument {
    use refline::corpus::{Document, LabeledDocument, LineRecord};
    let t = rng.random_range(1..=max_t);
    let lines: Vec<LineRecord> = (0..t)
        .map(|_| {
            let n = rng.random_range(1..=5);
            let text = (0..n)
                .map(|_| FEATURE_WORDS[rng.random_range(0..FEATURE_WORDS.len())])
                .collect::<Vec<_>>()
                .join(" ");
            let mut line = LineRecord::from_text(text);
            if rng.random_bool(0.5) {
                line.v_gap = Some(rng.random_range(8.0..30.0));
            }
            if rng.random_bool(0.5) {
                line.font_size = Some(rng.random_range(8.0..12.0));
            }
            if rng.random_bool(0.3) {
                line.indent = Some(rng.random_range(-8.0..8.0));
            }
            line
        })
        .collect();
    let labels = (0..t).map(|_| Label::ALL[rng.random_range(0..4)]).collect();
    LabeledDocument {
        document: Document {
            doc_id: format!("grad-{id}"),
            lines,
        },
        labels,
    }
}
