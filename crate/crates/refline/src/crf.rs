//! Linear-chain CRF mathematics in the log domain.
//!
//! A model of Markov order `m` is run as a first-order chain over expanded
//! states: all `4^m` label histories, where a transition `(s, s')` is valid
//! exactly when the last `m − 1` labels of `s` equal the first `m − 1` labels
//! of `s'`. One forward-backward implementation therefore serves every
//! supported order.
//!
//! Scoring convention: for line `t` with active features `x_t`, the emission
//! score of label `y` is the sum of the weights of the interned pair names
//! `<feature>~<label>`; each valid expanded-state pair carries one transition
//! weight under the name `T:<s>><s'>`. A sequence scores
//! `S(y) = Σ_t ψ_t(y_t) + Σ_{t≥2} τ(s_{t−1}, s_t)` and
//! `p(y|x) = exp(S(y)) / Z(x)`. At `t = 1` the label history is padded with
//! `B-REF`, so exactly four expanded states can start a sequence.
//!
//! All recursions use log-sum-exp; nothing here ever leaves the log domain
//! except final posterior probabilities.

use std::collections::BTreeSet;
use std::sync::Arc;

use thiserror::Error;

use crate::corpus::Label;
use crate::features::{FeatureConfig, FeatureSpace, FeatureVector};

/// Largest supported Markov order; 4^3 = 64 expanded states.
pub const MAX_ORDER: usize = 3;

/// Errors from model construction and inference.
#[derive(Debug, Error)]
pub enum CrfError {
    #[error("unsupported Markov order {0}; supported orders are 1..={MAX_ORDER}")]
    UnsupportedOrder(usize),
    #[error("weight count {weights} does not match feature space size {space}")]
    WeightCountMismatch { weights: usize, space: usize },
    #[error("non-finite weight for feature {name:?} (index {index})")]
    NonFiniteWeight { index: usize, name: String },
    #[error("feature space is missing required name {0:?}")]
    MissingName(String),
    #[error("feature index {index} out of range for space of {len} names")]
    FeatureIndexOutOfRange { index: u32, len: usize },
    #[error("empty sequence")]
    EmptySequence,
    #[error("labels length {labels} does not match sequence length {lines}")]
    LengthMismatch { labels: usize, lines: usize },
    #[error("infeasible constraints: no label sequence has positive probability")]
    InfeasibleConstraints,
}

/// The expanded state space of a model of Markov order `m`: all `m`-tuples of
/// labels, identified with base-4 numbers (first tuple component most
/// significant).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateSpace {
    order: usize,
    count: usize,
}

impl StateSpace {
    pub fn new(order: usize) -> Result<StateSpace, CrfError> {
        if !(1..=MAX_ORDER).contains(&order) {
            return Err(CrfError::UnsupportedOrder(order));
        }
        Ok(StateSpace {
            order,
            count: 4usize.pow(order as u32),
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of expanded states, `4^m`.
    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// The most recent label of a state (last tuple component).
    pub fn label_of(&self, state: usize) -> Label {
        Label::from_index(state & 3)
    }

    /// The full label history of a state, oldest first.
    pub fn labels_of(&self, state: usize) -> Vec<Label> {
        (0..self.order)
            .rev()
            .map(|k| Label::from_index((state >> (2 * k)) & 3))
            .collect()
    }

    /// The unique successor of `state` that appends `label`: the oldest label
    /// is dropped and `label` becomes the most recent.
    pub fn successor(&self, state: usize, label: Label) -> usize {
        (state * 4) % self.count + label.index()
    }

    /// The four states with a valid transition into `state`, ascending.
    pub fn predecessors(&self, state: usize) -> impl Iterator<Item = usize> + '_ {
        let base = state / 4;
        let stride = self.count / 4;
        (0..4).map(move |j| base + j * stride)
    }

    /// The start state for a sequence beginning with `label`: history padded
    /// with `B-REF`. Because `B-REF` has index 0, start states are `0..4`.
    pub fn start_state(&self, label: Label) -> usize {
        label.index()
    }

    /// Human-readable state name, tuple components joined by `|`.
    pub fn state_name(&self, state: usize) -> String {
        self.labels_of(state)
            .iter()
            .map(|l| l.as_str())
            .collect::<Vec<_>>()
            .join("|")
    }

    /// Interned weight name of a valid transition, `T:<s>><s'>`.
    pub fn transition_name(&self, from: usize, to: usize) -> String {
        format!("T:{}>{}", self.state_name(from), self.state_name(to))
    }
}

/// Builds `<feature>~<label>` emission pair names.
pub fn pair_name(feature: &str, label: Label) -> String {
    format!("{feature}~{label}")
}

/// Shape-based classification of an interned feature name.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum NameKind {
    Observation,
    Emission,
    Transition,
}

pub(crate) fn classify_name(name: &str) -> NameKind {
    if name.starts_with("T:") {
        NameKind::Transition
    } else if name.contains('~') {
        NameKind::Emission
    } else {
        NameKind::Observation
    }
}

/// The complete model name set for a collection of observation names: the
/// names themselves, every `<feature>~<label>` pairing, and one transition
/// name per valid expanded-state pair of the given order.
///
/// Panics when `order` is outside `1..=MAX_ORDER`; callers validate first.
pub(crate) fn full_name_set(obs: BTreeSet<String>, order: usize) -> BTreeSet<String> {
    let states = StateSpace::new(order).expect("order validated by caller");
    let mut names = BTreeSet::new();
    for feature in &obs {
        for label in Label::ALL {
            names.insert(pair_name(feature, label));
        }
    }
    for s in 0..states.len() {
        for label in Label::ALL {
            names.insert(states.transition_name(s, states.successor(s, label)));
        }
    }
    names.extend(obs);
    names
}

/// Decode-time label constraints as explicit permission tables. The public
/// API exposes only the BIO constraint set; the general form exists so the
/// infeasible case is testable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct TransitionFilter {
    pub start_allowed: [bool; 4],
    pub bigram_allowed: [[bool; 4]; 4],
}

impl TransitionFilter {
    /// No constraints: everything permitted.
    pub fn none() -> TransitionFilter {
        TransitionFilter {
            start_allowed: [true; 4],
            bigram_allowed: [[true; 4]; 4],
        }
    }

    /// BIO legality: a document cannot open with a continuation label, and a
    /// continuation cannot directly follow plain `O`. Interruptions stay
    /// legal: `O-REF` may repeat and `I-REF` may resume after `O-REF`.
    pub fn bio() -> TransitionFilter {
        let mut f = TransitionFilter::none();
        f.start_allowed[Label::IRef.index()] = false;
        f.start_allowed[Label::ORef.index()] = false;
        f.bigram_allowed[Label::Outside.index()][Label::IRef.index()] = false;
        f.bigram_allowed[Label::Outside.index()][Label::ORef.index()] = false;
        f
    }

    pub fn permits(&self, labels: &[Label]) -> bool {
        if let Some(first) = labels.first() {
            if !self.start_allowed[first.index()] {
                return false;
            }
        }
        labels
            .windows(2)
            .all(|w| self.bigram_allowed[w[0].index()][w[1].index()])
    }
}

/// Log-sum-exp over a slice; `−∞` for an all-`−∞` input.
fn lse(vals: &[f64]) -> f64 {
    let max = vals.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + vals.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Sufficient statistics of one forward-backward pass, consumed by training.
#[derive(Debug, Clone)]
pub(crate) struct LatticePosteriors {
    pub log_z: f64,
    /// Per-line posterior over the four labels; each row sums to 1.
    pub line_label: Vec<[f64; 4]>,
    /// Expected transition counts summed over positions, indexed
    /// `state * 4 + next_label`.
    pub transition_expect: Vec<f64>,
}

/// An immutable linear-chain CRF: a frozen feature space, one weight per
/// interned name, and the feature configuration the weights were trained
/// under.
#[derive(Debug, Clone)]
pub struct CrfModel {
    order: usize,
    space: FeatureSpace,
    weights: Vec<f64>,
    config: Arc<FeatureConfig>,
    constraints_default: bool,
    states: StateSpace,
    /// For each space index holding an observation name, the weight indices
    /// of its four emission pairings; `u32::MAX` rows for non-observation
    /// indices. Shared between re-weighted copies of the same structure.
    pair_index: Arc<Vec<[u32; 4]>>,
    /// Transition weight per `(state, next label)`.
    trans: Vec<f64>,
    /// Weight index per `(state, next label)`, for gradient accumulation.
    trans_index: Arc<Vec<u32>>,
}

impl CrfModel {
    /// Validates structural completeness and precomputes scoring tables: the
    /// space must contain all four pairings of every observation name and a
    /// transition name for every valid state pair of the given order.
    pub fn new(
        order: usize,
        space: FeatureSpace,
        weights: Vec<f64>,
        config: FeatureConfig,
        constraints_default: bool,
    ) -> Result<CrfModel, CrfError> {
        let states = StateSpace::new(order)?;
        if weights.len() != space.len() {
            return Err(CrfError::WeightCountMismatch {
                weights: weights.len(),
                space: space.len(),
            });
        }
        for (index, &w) in weights.iter().enumerate() {
            if !w.is_finite() {
                return Err(CrfError::NonFiniteWeight {
                    index,
                    name: space.name(index as u32).to_string(),
                });
            }
        }

        let mut pair_index = vec![[u32::MAX; 4]; space.len()];
        for (i, entry) in pair_index.iter_mut().enumerate() {
            let name = space.name(i as u32);
            if classify_name(name) != NameKind::Observation {
                continue;
            }
            for label in Label::ALL {
                let pair = pair_name(name, label);
                let idx = space.index_of(&pair).ok_or(CrfError::MissingName(pair))?;
                entry[label.index()] = idx;
            }
        }

        let mut trans = vec![0.0; states.len() * 4];
        let mut trans_index = vec![0u32; states.len() * 4];
        for s in 0..states.len() {
            for label in Label::ALL {
                let name = states.transition_name(s, states.successor(s, label));
                let idx = space.index_of(&name).ok_or(CrfError::MissingName(name))?;
                trans[s * 4 + label.index()] = weights[idx as usize];
                trans_index[s * 4 + label.index()] = idx;
            }
        }

        Ok(CrfModel {
            order,
            space,
            weights,
            config: Arc::new(config),
            constraints_default,
            states,
            pair_index: Arc::new(pair_index),
            trans,
            trans_index: Arc::new(trans_index),
        })
    }

    /// The same model structure with a different weight vector; the index
    /// tables are shared, so this is cheap enough for per-step re-weighting
    /// during stochastic training.
    pub(crate) fn with_weights(&self, weights: Vec<f64>) -> Result<CrfModel, CrfError> {
        if weights.len() != self.space.len() {
            return Err(CrfError::WeightCountMismatch {
                weights: weights.len(),
                space: self.space.len(),
            });
        }
        for (index, &w) in weights.iter().enumerate() {
            if !w.is_finite() {
                return Err(CrfError::NonFiniteWeight {
                    index,
                    name: self.space.name(index as u32).to_string(),
                });
            }
        }
        let mut trans = vec![0.0; self.trans.len()];
        for (slot, &idx) in trans.iter_mut().zip(self.trans_index.iter()) {
            *slot = weights[idx as usize];
        }
        Ok(CrfModel {
            order: self.order,
            space: self.space.clone(),
            weights,
            config: Arc::clone(&self.config),
            constraints_default: self.constraints_default,
            states: self.states,
            pair_index: Arc::clone(&self.pair_index),
            trans,
            trans_index: Arc::clone(&self.trans_index),
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn space(&self) -> &FeatureSpace {
        &self.space
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn feature_config(&self) -> &FeatureConfig {
        &self.config
    }

    pub fn constraints_default(&self) -> bool {
        self.constraints_default
    }

    pub(crate) fn state_space(&self) -> &StateSpace {
        &self.states
    }

    pub(crate) fn transition_weight_index(&self, state: usize, label: Label) -> u32 {
        self.trans_index[state * 4 + label.index()]
    }

    pub(crate) fn emission_pair_indices(&self, feature_index: u32) -> &[u32; 4] {
        &self.pair_index[feature_index as usize]
    }

    fn filter(&self, constraints: Option<bool>) -> TransitionFilter {
        if constraints.unwrap_or(self.constraints_default) {
            TransitionFilter::bio()
        } else {
            TransitionFilter::none()
        }
    }

    /// Emission score table `ψ_t(y)` for a sequence of feature vectors.
    fn emissions(&self, xs: &[FeatureVector]) -> Result<Vec<[f64; 4]>, CrfError> {
        xs.iter()
            .map(|x| {
                let mut psi = [0.0f64; 4];
                for &k in x.indices() {
                    let pairs = self.pair_index.get(k as usize).ok_or(
                        CrfError::FeatureIndexOutOfRange {
                            index: k,
                            len: self.pair_index.len(),
                        },
                    )?;
                    for (y, &pi) in pairs.iter().enumerate() {
                        if pi != u32::MAX {
                            psi[y] += self.weights[pi as usize];
                        }
                    }
                }
                Ok(psi)
            })
            .collect()
    }

    /// Forward recursion; returns `log α` as a `T × |states|` row-major table.
    fn forward(&self, emis: &[[f64; 4]], filter: &TransitionFilter) -> Vec<f64> {
        let n = self.states.len();
        let t_len = emis.len();
        let mut alpha = vec![f64::NEG_INFINITY; t_len * n];
        for label in Label::ALL {
            if filter.start_allowed[label.index()] {
                alpha[self.states.start_state(label)] = emis[0][label.index()];
            }
        }
        for t in 1..t_len {
            let (head, tail) = alpha.split_at_mut(t * n);
            let prev = &head[(t - 1) * n..];
            let cur = &mut tail[..n];
            for (sp, slot) in cur.iter_mut().enumerate() {
                let c = self.states.label_of(sp);
                let mut acc = [f64::NEG_INFINITY; 4];
                for (j, s) in self.states.predecessors(sp).enumerate() {
                    if filter.bigram_allowed[self.states.label_of(s).index()][c.index()] {
                        acc[j] = prev[s] + self.trans[s * 4 + c.index()];
                    }
                }
                *slot = lse(&acc) + emis[t][c.index()];
            }
        }
        alpha
    }

    /// Backward recursion; returns `log β`, same layout as [`Self::forward`].
    fn backward(&self, emis: &[[f64; 4]], filter: &TransitionFilter) -> Vec<f64> {
        let n = self.states.len();
        let t_len = emis.len();
        let mut beta = vec![f64::NEG_INFINITY; t_len * n];
        beta[(t_len - 1) * n..].fill(0.0);
        for t in (0..t_len - 1).rev() {
            for s in 0..n {
                let sl = self.states.label_of(s).index();
                let mut acc = [f64::NEG_INFINITY; 4];
                for label in Label::ALL {
                    let c = label.index();
                    if filter.bigram_allowed[sl][c] {
                        let sp = self.states.successor(s, label);
                        acc[c] = self.trans[s * 4 + c] + emis[t + 1][c] + beta[(t + 1) * n + sp];
                    }
                }
                beta[t * n + s] = lse(&acc);
            }
        }
        beta
    }

    /// Log-partition `log Z(x)` by forward recursion. With constraints on,
    /// barred start labels and barred label bigrams contribute `−∞`.
    pub fn log_partition(
        &self,
        xs: &[FeatureVector],
        constraints: Option<bool>,
    ) -> Result<f64, CrfError> {
        if xs.is_empty() {
            return Err(CrfError::EmptySequence);
        }
        let emis = self.emissions(xs)?;
        let filter = self.filter(constraints);
        let alpha = self.forward(&emis, &filter);
        let n = self.states.len();
        Ok(lse(&alpha[(xs.len() - 1) * n..]))
    }

    /// Full forward-backward pass: `log Z`, per-line label posteriors, and
    /// expected transition counts.
    pub(crate) fn posteriors(
        &self,
        xs: &[FeatureVector],
        filter: &TransitionFilter,
    ) -> Result<LatticePosteriors, CrfError> {
        if xs.is_empty() {
            return Err(CrfError::EmptySequence);
        }
        let n = self.states.len();
        let t_len = xs.len();
        let emis = self.emissions(xs)?;
        let alpha = self.forward(&emis, filter);
        let log_z = lse(&alpha[(t_len - 1) * n..]);
        if log_z == f64::NEG_INFINITY {
            return Err(CrfError::InfeasibleConstraints);
        }
        let beta = self.backward(&emis, filter);

        let mut line_label = vec![[0.0f64; 4]; t_len];
        for t in 0..t_len {
            for s in 0..n {
                let y = self.states.label_of(s).index();
                line_label[t][y] += (alpha[t * n + s] + beta[t * n + s] - log_z).exp();
            }
        }

        let mut transition_expect = vec![0.0f64; n * 4];
        for t in 0..t_len - 1 {
            for s in 0..n {
                if alpha[t * n + s] == f64::NEG_INFINITY {
                    continue;
                }
                let sl = self.states.label_of(s).index();
                for label in Label::ALL {
                    let c = label.index();
                    if !filter.bigram_allowed[sl][c] {
                        continue;
                    }
                    let sp = self.states.successor(s, label);
                    let log_p = alpha[t * n + s]
                        + self.trans[s * 4 + c]
                        + emis[t + 1][c]
                        + beta[(t + 1) * n + sp]
                        - log_z;
                    transition_expect[s * 4 + c] += log_p.exp();
                }
            }
        }

        Ok(LatticePosteriors {
            log_z,
            line_label,
            transition_expect,
        })
    }

    /// Per-line posterior distribution over the four labels, each row summing
    /// to 1.
    pub fn marginals(
        &self,
        xs: &[FeatureVector],
        constraints: Option<bool>,
    ) -> Result<Vec<[f64; 4]>, CrfError> {
        let filter = self.filter(constraints);
        Ok(self.posteriors(xs, &filter)?.line_label)
    }

    /// Highest-scoring label sequence and its path log-score `S(y)`.
    ///
    /// Ties are broken toward the lexicographically smallest sequence under
    /// `B-REF < I-REF < O-REF < O`: the decoder maximizes completions
    /// backward, then reconstructs forward picking the smallest label whose
    /// completion attains the maximum.
    pub fn viterbi(
        &self,
        xs: &[FeatureVector],
        constraints: Option<bool>,
    ) -> Result<(Vec<Label>, f64), CrfError> {
        if xs.is_empty() {
            return Err(CrfError::EmptySequence);
        }
        let n = self.states.len();
        let t_len = xs.len();
        let emis = self.emissions(xs)?;
        let filter = self.filter(constraints);

        // best_completion[t*n + s]: best score of positions t+1..T given
        // state s at position t.
        let mut bc = vec![f64::NEG_INFINITY; t_len * n];
        bc[(t_len - 1) * n..].fill(0.0);
        for t in (0..t_len - 1).rev() {
            for s in 0..n {
                let sl = self.states.label_of(s).index();
                let mut best = f64::NEG_INFINITY;
                for label in Label::ALL {
                    let c = label.index();
                    if filter.bigram_allowed[sl][c] {
                        let sp = self.states.successor(s, label);
                        let cand = self.trans[s * 4 + c] + emis[t + 1][c] + bc[(t + 1) * n + sp];
                        best = best.max(cand);
                    }
                }
                bc[t * n + s] = best;
            }
        }

        let start_cand = |label: Label| emis[0][label.index()] + bc[self.states.start_state(label)];
        let mut best_total = f64::NEG_INFINITY;
        for label in Label::ALL {
            if filter.start_allowed[label.index()] {
                best_total = best_total.max(start_cand(label));
            }
        }
        if best_total == f64::NEG_INFINITY {
            return Err(CrfError::InfeasibleConstraints);
        }

        // Forward reconstruction. The candidate expressions are evaluated in
        // exactly the arithmetic form used above, so comparing against the
        // stored maximum is exact.
        let mut labels = Vec::with_capacity(t_len);
        let mut state = usize::MAX;
        for label in Label::ALL {
            if filter.start_allowed[label.index()] && start_cand(label) == best_total {
                labels.push(label);
                state = self.states.start_state(label);
                break;
            }
        }
        for t in 1..t_len {
            let sl = self.states.label_of(state).index();
            let target = bc[(t - 1) * n + state];
            let mut advanced = false;
            for label in Label::ALL {
                let c = label.index();
                if !filter.bigram_allowed[sl][c] {
                    continue;
                }
                let sp = self.states.successor(state, label);
                let cand = self.trans[state * 4 + c] + emis[t][c] + bc[t * n + sp];
                if cand == target {
                    labels.push(label);
                    state = sp;
                    advanced = true;
                    break;
                }
            }
            debug_assert!(advanced, "a maximizing successor must exist");
            if !advanced {
                return Err(CrfError::InfeasibleConstraints);
            }
        }
        Ok((labels, best_total))
    }

    /// Unnormalized sequence score `S(y)` under the padded-history
    /// convention; no constraints applied.
    pub(crate) fn score_sequence(
        &self,
        xs: &[FeatureVector],
        labels: &[Label],
    ) -> Result<f64, CrfError> {
        let emis = self.emissions(xs)?;
        let mut total = emis[0][labels[0].index()];
        let mut state = self.states.start_state(labels[0]);
        for t in 1..labels.len() {
            let c = labels[t];
            total += self.trans[state * 4 + c.index()] + emis[t][c.index()];
            state = self.states.successor(state, c);
        }
        Ok(total)
    }

    /// Conditional log-probability `S(y) − log Z(x)`; `−∞` when `y` violates
    /// active constraints.
    pub fn sequence_log_prob(
        &self,
        xs: &[FeatureVector],
        labels: &[Label],
        constraints: Option<bool>,
    ) -> Result<f64, CrfError> {
        if xs.is_empty() {
            return Err(CrfError::EmptySequence);
        }
        if labels.len() != xs.len() {
            return Err(CrfError::LengthMismatch {
                labels: labels.len(),
                lines: xs.len(),
            });
        }
        let filter = self.filter(constraints);
        if !filter.permits(labels) {
            return Ok(f64::NEG_INFINITY);
        }
        let emis = self.emissions(xs)?;
        let alpha = self.forward(&emis, &filter);
        let n = self.states.len();
        let log_z = lse(&alpha[(xs.len() - 1) * n..]);
        if log_z == f64::NEG_INFINITY {
            return Err(CrfError::InfeasibleConstraints);
        }
        Ok(self.score_sequence(xs, labels)? - log_z)
    }
}
