//! Dynamic programming on the non-target states: the restricted one-step
//! operator, value iteration with a certified stopping rule, greedy-selector
//! extraction, discrepancy diagnostics, and a brute-force oracle.
//!
//! The one-step operator maps a rank-indexed value vector `u` to
//!
//! ```text
//! (T u)(x) = min_{a in A(x)} [ c(x, a) + alpha * sum_{y not in K} Q(y | x, a) u(y) ]
//! ```
//!
//! i.e. the expectation runs over the non-target states only; mass entering
//! the target set contributes nothing because the process stops there at
//! zero value. Under a weight certificate with modulus `gamma < 1`, `T`
//! contracts in the weighted sup norm, value iteration from the zero vector
//! increases pointwise to the optimal value, and after `n` backups the gap
//! to the optimum is at most `c_bar * w(x) * gamma^n / (1 - gamma)`.
//! That a-priori bound is the solver's stopping rule; successive-difference
//! norms are recorded for diagnostics only.

use thiserror::Error;

use crate::model::{HorizonPolicy, MarkovControlModel, StationaryPolicy, ValueFunction};
use crate::policy::{self, EvalMethod};
use crate::weight::WeightCertificate;

/// Discrepancy values in `(-DISCREPANCY_CLAMP, 0)` are floating-point noise
/// around an analytic zero and are clamped to zero.
pub const DISCREPANCY_CLAMP: f64 = 1e-9;

/// Default cap on the number of policies the brute-force oracle enumerates.
pub const ENUMERATION_CAP: usize = 1_000_000;

#[derive(Debug, Error)]
pub enum SolverError {
    /// The iteration cap was reached before the certified bound met the
    /// tolerance. The partial result is carried in the payload.
    #[error(
        "value iteration stopped at {} iteration(s) with certified bound {} above tolerance",
        .0.iterations, .0.sup_gap_bound
    )]
    NotConverged(Box<ValueIterationResult>),
    /// The policy space is bigger than the enumeration cap.
    #[error("{policies} deterministic stationary policies exceed the enumeration cap {cap}")]
    TooLarge { policies: usize, cap: usize },
    #[error("action {action} is not feasible at state {state}")]
    InfeasibleAction { state: usize, action: usize },
    #[error("state {state} is in the target set; the query is defined off it")]
    TargetState { state: usize },
    #[error(transparent)]
    Eval(#[from] policy::EvalError),
}

/// One application of the restricted one-step operator, together with the
/// argmin selector. Ties break toward the lowest-indexed action, so repeated
/// runs produce bitwise-identical selectors.
pub fn bellman_apply(
    model: &MarkovControlModel,
    u: &ValueFunction,
) -> (ValueFunction, StationaryPolicy) {
    let alpha = model.discount();
    let n = model.nontarget_count();
    let mut values = Vec::with_capacity(n);
    let mut choices = Vec::with_capacity(n);
    for rank in 0..n {
        let mut best = f64::INFINITY;
        let mut best_action = 0;
        for (ai, action) in model.actions(rank).iter().enumerate() {
            let q = action.cost
                + alpha * model.restricted_expectation(&action.transition, u.as_slice());
            if q < best {
                best = q;
                best_action = ai;
            }
        }
        values.push(best);
        choices.push(best_action);
    }
    (
        ValueFunction::from_values(values),
        StationaryPolicy::from_choices_unchecked(choices),
    )
}

/// Outcome of a value iteration run.
#[derive(Debug, Clone)]
pub struct ValueIterationResult {
    /// The final iterate `v_n`.
    pub value: ValueFunction,
    /// Number of backups performed.
    pub iterations: usize,
    /// Certified bound on the weighted distance to the optimal value:
    /// `optimal(x) - value(x) <= sup_gap_bound * w(x)` for every non-target
    /// `x`. Equals `c_bar * gamma^n / (1 - gamma)` and shrinks by exactly a
    /// factor `gamma` per additional iteration.
    pub sup_gap_bound: f64,
    /// Selector attaining the final backup; the lowest-indexed selector when
    /// no backup was performed.
    pub greedy: StationaryPolicy,
    /// Weighted sup-norm deltas `||v_k - v_{k-1}||_w`, one per backup.
    /// Diagnostics only; the stopping rule is the a-priori bound.
    pub history: Vec<f64>,
}

/// Iterates `v_n = T v_{n-1}` from `v_0 = 0` until the certified bound
/// `c_bar * gamma^n / (1 - gamma)` drops to `tolerance`, or `max_iter`
/// backups have run, whichever comes first. Iterates are pointwise
/// nondecreasing. On the iteration cap the partial result is returned inside
/// [`SolverError::NotConverged`].
pub fn value_iteration(
    model: &MarkovControlModel,
    certificate: &WeightCertificate,
    tolerance: f64,
    max_iter: usize,
) -> Result<ValueIterationResult, SolverError> {
    assert!(tolerance > 0.0, "tolerance must be positive");
    let gamma = certificate.modulus();
    let mut value = ValueFunction::zeros(model.nontarget_count());
    let mut greedy = StationaryPolicy::lowest(model);
    let mut history = Vec::new();
    // Multiplied by gamma each backup rather than recomputed from a power,
    // so consecutive bounds differ by exactly that factor.
    let mut bound = certificate.cost_bound() / (1.0 - gamma);
    let mut iterations = 0;

    while bound > tolerance {
        if iterations == max_iter {
            return Err(SolverError::NotConverged(Box::new(ValueIterationResult {
                value,
                iterations,
                sup_gap_bound: bound,
                greedy,
                history,
            })));
        }
        let (next, selector) = bellman_apply(model, &value);
        history.push(next.weighted_distance(&value, certificate.weight()));
        value = next;
        greedy = selector;
        iterations += 1;
        bound *= gamma;
    }

    Ok(ValueIterationResult {
        value,
        iterations,
        sup_gap_bound: bound,
        greedy,
        history,
    })
}

/// One-step defect of action `a` at state `x` against a converged value
/// vector:
///
/// ```text
/// D(x, a) = c(x, a) + alpha * sum_{y not in K} Q(y | x, a) v*(y) - v*(x)
/// ```
///
/// Zero exactly at the actions an optimal selector may take. Values within
/// [`DISCREPANCY_CLAMP`] below zero are clamped to zero.
pub fn discrepancy(
    model: &MarkovControlModel,
    v_star: &ValueFunction,
    state: usize,
    action: usize,
) -> Result<f64, SolverError> {
    let rank = model
        .rank_of(state)
        .ok_or(SolverError::TargetState { state })?;
    if action >= model.actions(rank).len() {
        return Err(SolverError::InfeasibleAction { state, action });
    }
    let act = model.action(rank, action);
    let d = act.cost
        + model.discount() * model.restricted_expectation(&act.transition, v_star.as_slice())
        - v_star.get(rank);
    Ok(if (-DISCREPANCY_CLAMP..0.0).contains(&d) {
        0.0
    } else {
        d
    })
}

/// Runs `n` backups from the zero vector and returns the argmin selector of
/// every step, newest first, followed by the initial selector, which is
/// fixed to the lowest-indexed feasible action per state. The result has
/// `n + 1` selectors. Deterministic: repeated calls are identical.
pub fn vi_policy_sequence(model: &MarkovControlModel, n: usize) -> HorizonPolicy {
    let mut value = ValueFunction::zeros(model.nontarget_count());
    let mut selectors = Vec::with_capacity(n + 1);
    for _ in 0..n {
        let (next, selector) = bellman_apply(model, &value);
        value = next;
        selectors.push(selector);
    }
    selectors.reverse();
    selectors.push(StationaryPolicy::lowest(model));
    HorizonPolicy::new(selectors)
}

/// Exhaustive oracle: enumerates every deterministic stationary policy (up
/// to [`ENUMERATION_CAP`]), evaluates each one exactly, and returns the
/// pointwise-minimal value together with a policy attaining it everywhere.
/// A single pointwise minimizer always exists; its absence would signal a
/// defect in the evaluation path.
pub fn brute_force_optimal(
    model: &MarkovControlModel,
) -> Result<(ValueFunction, StationaryPolicy), SolverError> {
    brute_force_optimal_with_cap(model, ENUMERATION_CAP)
}

/// [`brute_force_optimal`] with an explicit cap on the policy count.
pub fn brute_force_optimal_with_cap(
    model: &MarkovControlModel,
    cap: usize,
) -> Result<(ValueFunction, StationaryPolicy), SolverError> {
    let n = model.nontarget_count();
    let mut policies: usize = 1;
    for rank in 0..n {
        policies =
            policies
                .checked_mul(model.actions(rank).len())
                .ok_or(SolverError::TooLarge {
                    policies: usize::MAX,
                    cap,
                })?;
    }
    if policies > cap {
        return Err(SolverError::TooLarge { policies, cap });
    }

    let evaluate = |choices: &[usize]| -> Result<Vec<f64>, SolverError> {
        let policy = StationaryPolicy::from_choices_unchecked(choices.to_vec());
        let eval = policy::evaluate_policy(model, &policy, EvalMethod::Exact)?;
        Ok(eval.value.as_slice().to_vec())
    };

    // Pass 1: pointwise lower envelope over all policies.
    let mut envelope = vec![f64::INFINITY; n];
    let mut counter = vec![0usize; n];
    loop {
        let value = evaluate(&counter)?;
        for (e, v) in envelope.iter_mut().zip(&value) {
            *e = e.min(*v);
        }
        if !advance(model, &mut counter) {
            break;
        }
    }

    // Pass 2: first policy meeting the envelope at every state. Its
    // existence is guaranteed for exact evaluations; the slack only absorbs
    // solver round-off.
    let slack = 1e-9 * (1.0 + envelope.iter().cloned().fold(0.0, f64::max));
    let mut counter = vec![0usize; n];
    loop {
        let value = evaluate(&counter)?;
        if value.iter().zip(&envelope).all(|(v, e)| *v <= *e + slack) {
            return Ok((
                ValueFunction::from_values(value),
                StationaryPolicy::from_choices_unchecked(counter),
            ));
        }
        if !advance(model, &mut counter) {
            panic!("no single policy attains the pointwise minimum: evaluation is defective");
        }
    }
}

/// Mixed-radix increment over per-state action counts. Returns false once
/// the counter wraps.
fn advance(model: &MarkovControlModel, counter: &mut [usize]) -> bool {
    for (rank, slot) in counter.iter_mut().enumerate() {
        *slot += 1;
        if *slot < model.actions(rank).len() {
            return true;
        }
        *slot = 0;
    }
    false
}

/// Discounted first-passage value of a policy from state `x` under the
/// indicator cost (one per step outside the target set): solves the policy's
/// linear system with unit costs and returns `(1 - E[alpha^tau]) / (1 - alpha)`.
/// Equals `1 / (1 - alpha)` when the target set is unreachable under the
/// policy.
pub fn dssp_value(
    model: &MarkovControlModel,
    policy: &StationaryPolicy,
    state: usize,
) -> Result<f64, SolverError> {
    let rank = model
        .rank_of(state)
        .ok_or(SolverError::TargetState { state })?;
    let ones = vec![1.0; model.nontarget_count()];
    let values = policy::solve_policy_linear(model, policy, &ones)?;
    Ok(values[rank])
}
