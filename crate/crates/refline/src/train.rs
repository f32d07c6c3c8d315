//! L2-regularized maximum-likelihood fitting of CRF weights.
//!
//! The objective is `L(w) = Σ_docs [S(y_gold) − log Z(x)] − Σ_k w_k²/(2σ²)`,
//! maximized by minimizing `−L` with batch L-BFGS (default) or plain SGD.
//! Its gradient per weight is the classic empirical-minus-expected count,
//! minus `w_k/σ²`; expected counts come from forward-backward posteriors.
//!
//! BIO constraints are excluded from the likelihood so gold sequences that
//! violate well-formedness (annotation noise) remain finite-scoring; the
//! returned model still defaults to constrained decoding.
//!
//! Per-document gradient terms are computed in parallel but reduced in a
//! fixed document order, so training is bitwise deterministic for a given
//! corpus, configuration, and seed.

use std::cell::RefCell;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Label, LabeledDocument};
use crate::crf::{CrfError, CrfModel, TransitionFilter};
use crate::eval::{self, Metrics};
use crate::extract;
use crate::features::{
    build_feature_space, vectorize, FeatureConfig, FeatureError, FeatureSpace, FeatureVector,
};
use crate::optim::{self, LbfgsConfig, OptimError, SgdConfig};

/// Documents per parallel gradient chunk; fixed so the reduction order (and
/// therefore the floating-point result) never depends on thread scheduling.
const GRADIENT_CHUNK: usize = 8;

/// Optimizer selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    /// Batch L-BFGS with a strong-Wolfe line search.
    QuasiNewton,
    /// Plain stochastic gradient with a fixed decaying schedule.
    Sgd,
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Gaussian prior width σ of the penalty `Σ w²/(2σ²)`. 10.0 is a mild
    /// default worth revisiting per corpus.
    pub l2_sigma: f64,
    pub max_iterations: usize,
    /// Relative objective-change convergence threshold.
    pub convergence_tol: f64,
    pub optimizer: OptimizerKind,
    /// Seed for any stochastic component (SGD shuffling, k-fold splits).
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            l2_sigma: 10.0,
            max_iterations: 200,
            convergence_tol: 1e-6,
            optimizer: OptimizerKind::QuasiNewton,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.l2_sigma.is_nan() || self.l2_sigma <= 0.0 {
            return Err(TrainError::InvalidConfig(format!(
                "l2_sigma must be positive, got {}",
                self.l2_sigma
            )));
        }
        if self.max_iterations == 0 {
            return Err(TrainError::InvalidConfig(
                "max_iterations must be at least 1".into(),
            ));
        }
        if !(self.convergence_tol > 0.0 && self.convergence_tol < 1.0) {
            return Err(TrainError::InvalidConfig(format!(
                "convergence_tol must be in (0, 1), got {}",
                self.convergence_tol
            )));
        }
        Ok(())
    }
}

/// What happened during one training run.
#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    pub iterations: usize,
    /// Final regularized log-likelihood (higher is better).
    pub final_objective: f64,
    /// Objective after each accepted iteration; length equals `iterations`.
    pub objective_trace: Vec<f64>,
    /// Gradient norm after each accepted iteration.
    pub grad_norm_trace: Vec<f64>,
    pub wall_time_secs: f64,
    /// Whether the tolerance was reached before the iteration cap.
    pub converged: bool,
}

/// Errors from training.
#[derive(Debug, Error)]
pub enum TrainError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("document {doc_id:?}: {reason}")]
    InvalidDocument { doc_id: String, reason: String },
    #[error("non-finite objective contribution from document {doc_id:?}")]
    NonFiniteObjective { doc_id: String },
    #[error("training diverged: objective became NaN at iteration {iteration}")]
    Diverged { iteration: usize },
    #[error("cannot split {docs} documents into {k} folds")]
    FoldCount { k: usize, docs: usize },
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Crf(#[from] CrfError),
    #[error(transparent)]
    Eval(#[from] eval::EvalError),
}

#[derive(Debug)]
struct PreparedDoc {
    doc_id: String,
    xs: Vec<FeatureVector>,
    labels: Vec<Label>,
}

/// A labeled corpus vectorized once against a frozen feature space, ready for
/// repeated objective evaluations.
#[derive(Debug)]
pub struct TrainingProblem {
    space: FeatureSpace,
    order: usize,
    docs: Vec<PreparedDoc>,
    /// Zero-weight model whose index tables are reused for every
    /// re-weighting, keeping per-evaluation setup cost linear in `|weights|`.
    prototype: CrfModel,
}

impl TrainingProblem {
    pub fn new(
        corpus: &[LabeledDocument],
        feature_config: &FeatureConfig,
        order: usize,
    ) -> Result<TrainingProblem, TrainError> {
        if corpus.is_empty() {
            return Err(TrainError::EmptyCorpus);
        }
        for doc in corpus {
            if doc.document.lines.is_empty() {
                return Err(TrainError::InvalidDocument {
                    doc_id: doc.document.doc_id.clone(),
                    reason: "document has no lines".into(),
                });
            }
            if doc.labels.len() != doc.document.lines.len() {
                return Err(TrainError::InvalidDocument {
                    doc_id: doc.document.doc_id.clone(),
                    reason: format!(
                        "{} labels for {} lines",
                        doc.labels.len(),
                        doc.document.lines.len()
                    ),
                });
            }
        }
        let space = build_feature_space(corpus, feature_config, order)?;
        let docs = corpus
            .iter()
            .map(|doc| PreparedDoc {
                doc_id: doc.document.doc_id.clone(),
                xs: vectorize(&doc.document, feature_config, &space),
                labels: doc.labels.clone(),
            })
            .collect();
        let prototype = CrfModel::new(
            order,
            space.clone(),
            vec![0.0; space.len()],
            feature_config.clone(),
            true,
        )?;
        Ok(TrainingProblem {
            space,
            order,
            docs,
            prototype,
        })
    }

    pub fn space(&self) -> &FeatureSpace {
        &self.space
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn num_documents(&self) -> usize {
        self.docs.len()
    }

    /// Builds the scoring model for a weight vector. Weights must already be
    /// finite; optimizer iterates always are.
    fn model(&self, weights: &[f64]) -> Result<CrfModel, TrainError> {
        Ok(self.prototype.with_weights(weights.to_vec())?)
    }

    /// Log-likelihood and gradient contribution of one document
    /// (unregularized, maximization sign).
    fn doc_term(&self, model: &CrfModel, doc: &PreparedDoc) -> Result<(f64, Vec<f64>), TrainError> {
        let states = model.state_space();
        let gold_score = model.score_sequence(&doc.xs, &doc.labels)?;
        let post = model.posteriors(&doc.xs, &TransitionFilter::none())?;
        let ll = gold_score - post.log_z;
        if !ll.is_finite() {
            return Err(TrainError::NonFiniteObjective {
                doc_id: doc.doc_id.clone(),
            });
        }

        let mut grad = vec![0.0; self.space.len()];
        // Emission terms: empirical minus expected per fired feature.
        for (t, x) in doc.xs.iter().enumerate() {
            let gold = doc.labels[t].index();
            for &k in x.indices() {
                let pairs = model.emission_pair_indices(k);
                for (y, &pi) in pairs.iter().enumerate() {
                    let empirical = (y == gold) as u8 as f64;
                    grad[pi as usize] += empirical - post.line_label[t][y];
                }
            }
        }
        // Transition terms: walk the gold state path, subtract expectations.
        let mut state = states.start_state(doc.labels[0]);
        for &label in &doc.labels[1..] {
            grad[model.transition_weight_index(state, label) as usize] += 1.0;
            state = states.successor(state, label);
        }
        for s in 0..states.len() {
            for label in Label::ALL {
                let idx = model.transition_weight_index(s, label) as usize;
                grad[idx] -= post.transition_expect[s * 4 + label.index()];
            }
        }
        Ok((ll, grad))
    }

    /// Regularized objective and gradient at `weights` (maximization sign).
    ///
    /// Per-document terms run in parallel; the reduction order is fixed by
    /// document position, so results are bitwise reproducible.
    pub fn objective_and_gradient(
        &self,
        weights: &[f64],
        l2_sigma: f64,
    ) -> Result<(f64, Vec<f64>), TrainError> {
        let model = self.model(weights)?;
        let chunks: Vec<(f64, Vec<f64>)> = self
            .docs
            .par_chunks(GRADIENT_CHUNK)
            .map(|chunk| -> Result<(f64, Vec<f64>), TrainError> {
                let mut ll = 0.0;
                let mut grad = vec![0.0; self.space.len()];
                for doc in chunk {
                    let (dll, dgrad) = self.doc_term(&model, doc)?;
                    ll += dll;
                    for (g, d) in grad.iter_mut().zip(&dgrad) {
                        *g += d;
                    }
                }
                Ok((ll, grad))
            })
            .collect::<Result<_, _>>()?;

        let mut objective = 0.0;
        let mut gradient = vec![0.0; self.space.len()];
        for (ll, grad) in chunks {
            objective += ll;
            for (g, d) in gradient.iter_mut().zip(&grad) {
                *g += d;
            }
        }
        let sigma2 = l2_sigma * l2_sigma;
        for (g, &w) in gradient.iter_mut().zip(weights) {
            *g -= w / sigma2;
            objective -= w * w / (2.0 * sigma2);
        }
        Ok((objective, gradient))
    }

    /// Unregularized log-likelihood term and gradient of a single document,
    /// for stochastic updates.
    fn doc_gradient(&self, weights: &[f64], index: usize) -> Result<Vec<f64>, TrainError> {
        let model = self.model(weights)?;
        Ok(self.doc_term(&model, &self.docs[index])?.1)
    }
}

/// Regularized objective and gradient for a corpus; convenience wrapper that
/// builds the feature space on every call. Use [`TrainingProblem`] directly
/// for repeated evaluations.
pub fn objective_and_gradient(
    weights: &[f64],
    corpus: &[LabeledDocument],
    feature_config: &FeatureConfig,
    order: usize,
    l2_sigma: f64,
) -> Result<(f64, Vec<f64>), TrainError> {
    TrainingProblem::new(corpus, feature_config, order)?.objective_and_gradient(weights, l2_sigma)
}

/// Fits a model on a labeled corpus: builds the feature space, starts from
/// zero weights, and optimizes until convergence or the iteration cap.
pub fn train(
    corpus: &[LabeledDocument],
    feature_config: &FeatureConfig,
    order: usize,
    config: &TrainConfig,
) -> Result<(CrfModel, TrainReport), TrainError> {
    config.validate()?;
    let started = Instant::now();
    let problem = TrainingProblem::new(corpus, feature_config, order)?;
    let x0 = vec![0.0; problem.space.len()];

    // The optimizer sees plain (value, gradient) pairs; errors inside the
    // objective are parked here and surfaced after the optimizer aborts on
    // the NaN it received instead.
    let pending_error: RefCell<Option<TrainError>> = RefCell::new(None);
    let nan_out = |n: usize| (f64::NAN, vec![0.0; n]);
    let negated = |w: &[f64]| -> (f64, Vec<f64>) {
        match problem.objective_and_gradient(w, config.l2_sigma) {
            Ok((value, mut grad)) => {
                for g in &mut grad {
                    *g = -*g;
                }
                (-value, grad)
            }
            Err(e) => {
                *pending_error.borrow_mut() = Some(e);
                nan_out(problem.space.len())
            }
        }
    };

    let outcome = match config.optimizer {
        OptimizerKind::QuasiNewton => optim::lbfgs(
            negated,
            x0,
            &LbfgsConfig {
                max_iterations: config.max_iterations,
                tolerance: config.convergence_tol,
                ..LbfgsConfig::default()
            },
        ),
        OptimizerKind::Sgd => {
            let n_docs = problem.docs.len();
            let sigma2 = config.l2_sigma * config.l2_sigma;
            let part = |w: &[f64], i: usize| -> Vec<f64> {
                match problem.doc_gradient(w, i) {
                    Ok(mut grad) => {
                        // Negate for minimization and add this document's
                        // share of the penalty gradient.
                        for (g, &wj) in grad.iter_mut().zip(w) {
                            *g = -*g + wj / (sigma2 * n_docs as f64);
                        }
                        grad
                    }
                    Err(e) => {
                        *pending_error.borrow_mut() = Some(e);
                        vec![0.0; w.len()]
                    }
                }
            };
            optim::sgd(
                negated,
                part,
                n_docs,
                x0,
                &SgdConfig {
                    max_iterations: config.max_iterations,
                    tolerance: config.convergence_tol,
                    seed: config.seed,
                    ..SgdConfig::default()
                },
            )
        }
    };

    let minimum = match outcome {
        Ok(m) => m,
        Err(OptimError::NonFinite(iteration)) => {
            return Err(pending_error
                .into_inner()
                .unwrap_or(TrainError::Diverged { iteration }));
        }
    };
    if let Some(e) = pending_error.into_inner() {
        return Err(e);
    }

    let report = TrainReport {
        iterations: minimum.trace.len(),
        final_objective: -minimum.value,
        objective_trace: minimum.trace.iter().map(|l| -l.value).collect(),
        grad_norm_trace: minimum.trace.iter().map(|l| l.grad_norm).collect(),
        wall_time_secs: started.elapsed().as_secs_f64(),
        converged: matches!(
            minimum.stop,
            optim::StopReason::Converged | optim::StopReason::SmallGradient
        ),
    };
    let model = CrfModel::new(
        order,
        problem.space.clone(),
        minimum.x,
        feature_config.clone(),
        true,
    )?;
    Ok((model, report))
}

/// Per-fold results of a cross-validation run.
#[derive(Debug, Clone, Serialize)]
pub struct FoldOutcome {
    pub fold: usize,
    /// Document ids evaluated in this fold.
    pub held_out: Vec<String>,
    pub metrics: Metrics,
}

/// Deterministic document-level k-fold cross-validation: shuffles documents
/// with the config seed, splits into k near-equal folds, trains on the rest,
/// and evaluates line and reference metrics on the held-out fold.
pub fn kfold_evaluate(
    corpus: &[LabeledDocument],
    k: usize,
    feature_config: &FeatureConfig,
    order: usize,
    config: &TrainConfig,
) -> Result<Vec<FoldOutcome>, TrainError> {
    if k < 2 || corpus.len() < k {
        return Err(TrainError::FoldCount {
            k,
            docs: corpus.len(),
        });
    }
    let mut indices: Vec<usize> = (0..corpus.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    indices.shuffle(&mut rng);

    let mut outcomes = Vec::with_capacity(k);
    for fold in 0..k {
        let held: Vec<usize> = indices.iter().copied().skip(fold).step_by(k).collect();
        let train_docs: Vec<LabeledDocument> = indices
            .iter()
            .enumerate()
            .filter(|(pos, _)| pos % k != fold)
            .map(|(_, &i)| corpus[i].clone())
            .collect();
        let (model, _) = train(&train_docs, feature_config, order, config)?;

        let mut counts = eval::Counts::default();
        let mut held_out = Vec::with_capacity(held.len());
        for &i in &held {
            let doc = &corpus[i];
            held_out.push(doc.document.doc_id.clone());
            let xs = vectorize(&doc.document, feature_config, model.space());
            let (pred, _) = model.viterbi(&xs, Some(true))?;
            counts.merge(&eval::line_counts(&doc.labels, &pred)?);
            let gold_refs = extract::group(&doc.document.lines, &doc.labels)
                .expect("label count validated at problem construction");
            let pred_refs = extract::group(&doc.document.lines, &pred)
                .expect("decoder output has one label per line");
            counts.merge(&eval::reference_counts(&gold_refs, &pred_refs));
        }
        outcomes.push(FoldOutcome {
            fold,
            held_out,
            metrics: Metrics::from_counts(counts),
        });
    }
    Ok(outcomes)
}
