//! Smooth minimizers for the training objective: batch L-BFGS with a
//! strong-Wolfe line search (the default), and a plain stochastic gradient
//! loop with a fixed decaying schedule as a fallback.
//!
//! Both minimize; the training module hands in the *negated* regularized
//! log-likelihood. Accepted L-BFGS steps satisfy the Armijo condition, so the
//! recorded objective trace is non-increasing — that property is surfaced to
//! users as "accepted iterations never decrease the likelihood".

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub(crate) enum OptimError {
    #[error("objective became non-finite at iteration {0}")]
    NonFinite(usize),
}

/// Why the loop ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum StopReason {
    /// Relative objective change fell below the tolerance.
    Converged,
    MaxIterations,
    /// Gradient vanished to numerical zero.
    SmallGradient,
    /// No step satisfying the line-search conditions could be found; the
    /// current point is returned as-is.
    LineSearchStalled,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct IterationLog {
    /// Objective value after the iteration (minimization sign).
    pub value: f64,
    pub grad_norm: f64,
}

#[derive(Debug)]
pub(crate) struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub trace: Vec<IterationLog>,
    pub stop: StopReason,
}

#[derive(Debug, Clone)]
pub(crate) struct LbfgsConfig {
    pub memory: usize,
    pub max_iterations: usize,
    /// Relative objective-change convergence threshold.
    pub tolerance: f64,
    /// Armijo sufficient-decrease constant.
    pub c1: f64,
    /// Curvature constant of the strong Wolfe conditions.
    pub c2: f64,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig {
            memory: 10,
            max_iterations: 200,
            tolerance: 1e-6,
            c1: 1e-4,
            c2: 0.9,
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// L-BFGS two-loop recursion: approximates `H·g` from the recent
/// displacement/gradient-change pairs.
fn two_loop(
    g: &[f64],
    s_hist: &VecDeque<Vec<f64>>,
    y_hist: &VecDeque<Vec<f64>>,
    rho: &VecDeque<f64>,
) -> Vec<f64> {
    let mut q = g.to_vec();
    let k = s_hist.len();
    let mut alpha = vec![0.0; k];
    for i in (0..k).rev() {
        alpha[i] = rho[i] * dot(&s_hist[i], &q);
        for (qj, yj) in q.iter_mut().zip(&y_hist[i]) {
            *qj -= alpha[i] * yj;
        }
    }
    if k > 0 {
        let gamma = dot(&s_hist[k - 1], &y_hist[k - 1]) / dot(&y_hist[k - 1], &y_hist[k - 1]);
        for qj in &mut q {
            *qj *= gamma;
        }
    }
    for i in 0..k {
        let beta = rho[i] * dot(&y_hist[i], &q);
        for (qj, sj) in q.iter_mut().zip(&s_hist[i]) {
            *qj += (alpha[i] - beta) * sj;
        }
    }
    q
}

struct WolfeResult {
    alpha: f64,
    value: f64,
    gradient: Vec<f64>,
}

/// Strong-Wolfe line search: bracket by doubling, then zoom by bisection.
/// `+∞` objective values are treated as ordinary Armijo failures (the step
/// overshot); `NaN` aborts the whole run.
fn wolfe_search<F>(
    f: &mut F,
    x: &[f64],
    fx: f64,
    g: &[f64],
    d: &[f64],
    c1: f64,
    c2: f64,
) -> Result<Option<WolfeResult>, OptimError>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let slope0 = dot(g, d);
    debug_assert!(slope0 < 0.0, "search direction must be a descent direction");
    let mut probe = |alpha: f64| -> Result<(f64, Vec<f64>, f64), OptimError> {
        let xa: Vec<f64> = x.iter().zip(d).map(|(xi, di)| xi + alpha * di).collect();
        let (fa, ga) = f(&xa);
        if fa.is_nan() {
            return Err(OptimError::NonFinite(0));
        }
        let slope = dot(&ga, d);
        Ok((fa, ga, slope))
    };

    let armijo = |alpha: f64, fa: f64| fa <= fx + c1 * alpha * slope0;

    // Bracketing phase.
    let mut alpha_prev = 0.0;
    let mut f_prev = fx;
    let mut alpha = 1.0;
    let mut bracket = None;
    let mut evaluated = None;
    for i in 0..40 {
        let (fa, ga, slope) = probe(alpha)?;
        if !armijo(alpha, fa) || (i > 0 && fa >= f_prev) {
            bracket = Some((alpha_prev, f_prev, alpha, fa));
            break;
        }
        if slope.abs() <= -c2 * slope0 {
            evaluated = Some(WolfeResult {
                alpha,
                value: fa,
                gradient: ga,
            });
            break;
        }
        if slope >= 0.0 {
            bracket = Some((alpha, fa, alpha_prev, f_prev));
            break;
        }
        alpha_prev = alpha;
        f_prev = fa;
        alpha *= 2.0;
    }
    if let Some(r) = evaluated {
        return Ok(Some(r));
    }
    let Some((mut lo, mut f_lo, mut hi, _f_hi)) = bracket else {
        return Ok(None);
    };

    // Zoom phase.
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if (hi - lo).abs() <= 1e-16 * lo.abs().max(1.0) {
            break;
        }
        let (fm, gm, slope) = probe(mid)?;
        if !armijo(mid, fm) || fm >= f_lo {
            hi = mid;
        } else {
            if slope.abs() <= -c2 * slope0 {
                return Ok(Some(WolfeResult {
                    alpha: mid,
                    value: fm,
                    gradient: gm,
                }));
            }
            if slope * (hi - lo) >= 0.0 {
                hi = lo;
            }
            lo = mid;
            f_lo = fm;
        }
    }
    // The zoom interval collapsed without meeting the curvature condition;
    // fall back to the best Armijo point if any progress was made.
    if lo > 0.0 && f_lo < fx {
        let (fa, ga, _) = probe(lo)?;
        return Ok(Some(WolfeResult {
            alpha: lo,
            value: fa,
            gradient: ga,
        }));
    }
    Ok(None)
}

/// Minimizes `f` by L-BFGS from `x0`.
pub(crate) fn lbfgs<F>(mut f: F, x0: Vec<f64>, config: &LbfgsConfig) -> Result<Minimum, OptimError>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let mut x = x0;
    let (mut fx, mut g) = f(&x);
    if !fx.is_finite() {
        return Err(OptimError::NonFinite(0));
    }
    let mut s_hist: VecDeque<Vec<f64>> = VecDeque::new();
    let mut y_hist: VecDeque<Vec<f64>> = VecDeque::new();
    let mut rho: VecDeque<f64> = VecDeque::new();
    let mut trace = Vec::new();
    let mut stop = StopReason::MaxIterations;

    for iter in 1..=config.max_iterations {
        if norm(&g) <= 1e-12 {
            stop = StopReason::SmallGradient;
            break;
        }
        let mut d = two_loop(&g, &s_hist, &y_hist, &rho);
        for di in &mut d {
            *di = -*di;
        }
        if dot(&g, &d) >= 0.0 {
            // Curvature history went stale; restart from steepest descent.
            s_hist.clear();
            y_hist.clear();
            rho.clear();
            d = g.iter().map(|gi| -gi).collect();
        }

        let step = match wolfe_search(&mut f, &x, fx, &g, &d, config.c1, config.c2) {
            Ok(Some(r)) => r,
            Ok(None) => {
                stop = StopReason::LineSearchStalled;
                break;
            }
            Err(OptimError::NonFinite(_)) => return Err(OptimError::NonFinite(iter)),
        };

        let s: Vec<f64> = d.iter().map(|di| step.alpha * di).collect();
        let y: Vec<f64> = step.gradient.iter().zip(&g).map(|(n, o)| n - o).collect();
        let sy = dot(&s, &y);
        if sy > 1e-10 * norm(&s) * norm(&y) {
            if s_hist.len() == config.memory {
                s_hist.pop_front();
                y_hist.pop_front();
                rho.pop_front();
            }
            rho.push_back(1.0 / sy);
            s_hist.push_back(s);
            y_hist.push_back(y);
        }

        for (xi, di) in x.iter_mut().zip(&d) {
            *xi += step.alpha * di;
        }
        let f_prev = fx;
        fx = step.value;
        g = step.gradient;
        trace.push(IterationLog {
            value: fx,
            grad_norm: norm(&g),
        });
        if (f_prev - fx).abs() <= config.tolerance * f_prev.abs().max(1.0) {
            stop = StopReason::Converged;
            break;
        }
    }

    Ok(Minimum {
        x,
        value: fx,
        trace,
        stop,
    })
}

#[derive(Debug, Clone)]
pub(crate) struct SgdConfig {
    /// Epochs over the data.
    pub max_iterations: usize,
    pub tolerance: f64,
    pub learning_rate: f64,
    /// Schedule: `lr / (1 + decay * epoch)`.
    pub decay: f64,
    pub seed: u64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            max_iterations: 200,
            tolerance: 1e-6,
            learning_rate: 0.2,
            decay: 0.05,
            seed: 0,
        }
    }
}

/// Minimizes a sum of `n_parts` terms by per-part gradient steps in a seeded
/// shuffled order, one full objective evaluation per epoch for the trace and
/// the convergence check. `part_grad(x, i)` must return the gradient of term
/// `i` such that the term gradients sum to the full gradient.
pub(crate) fn sgd<F, G>(
    mut full: F,
    mut part_grad: G,
    n_parts: usize,
    x0: Vec<f64>,
    config: &SgdConfig,
) -> Result<Minimum, OptimError>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
    G: FnMut(&[f64], usize) -> Vec<f64>,
{
    let mut x = x0;
    let (mut fx, _) = full(&x);
    if !fx.is_finite() {
        return Err(OptimError::NonFinite(0));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..n_parts).collect();
    let mut trace = Vec::new();
    let mut stop = StopReason::MaxIterations;

    for epoch in 1..=config.max_iterations {
        order.shuffle(&mut rng);
        let lr = config.learning_rate / (1.0 + config.decay * (epoch - 1) as f64);
        for &i in &order {
            let g = part_grad(&x, i);
            for (xj, gj) in x.iter_mut().zip(&g) {
                *xj -= lr * gj;
            }
        }
        let (f_new, g_new) = full(&x);
        if !f_new.is_finite() {
            return Err(OptimError::NonFinite(epoch));
        }
        trace.push(IterationLog {
            value: f_new,
            grad_norm: norm(&g_new),
        });
        let rel = (fx - f_new).abs() / fx.abs().max(1.0);
        fx = f_new;
        if rel <= config.tolerance {
            stop = StopReason::Converged;
            break;
        }
    }

    Ok(Minimum {
        x,
        value: fx,
        trace,
        stop,
    })
}
