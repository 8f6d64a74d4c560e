//! Policy evaluation, rolling-horizon synthesis with sub-optimality
//! certificates, and recovery-cost bounds.
//!
//! A deterministic stationary policy `f` satisfies the linear fixed-point
//! relation
//!
//! ```text
//! V(f, x) = c(x, f(x)) + alpha * sum_{y not in K} Q(y | x, f(x)) V(f, y)
//! ```
//!
//! over the non-target states, i.e. `(I - alpha * Q_f^restricted) V = c_f`
//! with a sub-stochastic restricted row matrix. The exact method solves that
//! dense system directly; the iterative method runs the fixed-point map with
//! the same a-priori stopping rule value iteration uses. Both record the
//! sup-norm defect of the relation as a residual.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::model::{MarkovControlModel, StationaryPolicy, ValueFunction};
use crate::solver::bellman_apply;
use crate::weight::WeightCertificate;

/// Exact evaluation is the default up to this many non-target states; the
/// dense solve is cubic, so larger systems should go through the iterative
/// method.
pub const EXACT_EVAL_LIMIT: usize = 2000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    /// The dense solve reported a singular system. Impossible while the
    /// restricted matrix stays sub-stochastic and `alpha < 1`; treated as a
    /// defect signal.
    #[error("direct policy evaluation hit a numerically singular system")]
    SolveFailed,
    #[error("iterative evaluation did not meet tolerance {tolerance} within {max_iter} sweeps")]
    IterationLimit { tolerance: f64, max_iter: usize },
    /// The model carries no in-target dynamics block.
    #[error("the model has no in-target dynamics; recovery analysis needs one")]
    MissingTargetDynamics,
}

/// How a policy value is computed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EvalMethod {
    /// Direct dense linear solve.
    Exact,
    /// Fixed-point sweeps with the certified geometric stopping rule.
    Iterative { tolerance: f64, max_iter: usize },
}

impl EvalMethod {
    /// Exact up to [`EXACT_EVAL_LIMIT`] non-target states, iterative
    /// beyond.
    pub fn default_for(model: &MarkovControlModel) -> Self {
        if model.nontarget_count() <= EXACT_EVAL_LIMIT {
            EvalMethod::Exact
        } else {
            EvalMethod::Iterative {
                tolerance: 1e-10,
                max_iter: 10_000_000,
            }
        }
    }
}

/// A policy value together with the residual of its fixed-point relation.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyEvaluation {
    pub value: ValueFunction,
    pub method: EvalMethod,
    /// Sup-norm defect `max_x |V(x) - c_f(x) - alpha * (Q_f V)(x)|`.
    pub residual: f64,
}

/// Solves `(I - alpha * Q_f^restricted) V = costs` exactly. `costs` is any
/// rank-indexed vector; policy evaluation passes the policy's stage costs,
/// the discounted first-passage value passes all ones.
pub(crate) fn solve_policy_linear(
    model: &MarkovControlModel,
    policy: &StationaryPolicy,
    costs: &[f64],
) -> Result<Vec<f64>, EvalError> {
    let n = model.nontarget_count();
    let alpha = model.discount();
    let matrix = DMatrix::from_fn(n, n, |i, j| {
        let row = &model.action(i, policy.action(i)).transition;
        let q = row[model.state_of(j)];
        if i == j {
            1.0 - alpha * q
        } else {
            -alpha * q
        }
    });
    let rhs = DVector::from_column_slice(costs);
    let solution = matrix.lu().solve(&rhs).ok_or(EvalError::SolveFailed)?;
    Ok(solution.iter().copied().collect())
}

fn policy_backup(
    model: &MarkovControlModel,
    policy: &StationaryPolicy,
    costs: &[f64],
    values: &[f64],
) -> Vec<f64> {
    let alpha = model.discount();
    (0..model.nontarget_count())
        .map(|rank| {
            let row = &model.action(rank, policy.action(rank)).transition;
            costs[rank] + alpha * model.restricted_expectation(row, values)
        })
        .collect()
}

/// Evaluates a deterministic stationary policy over the non-target states.
pub fn evaluate_policy(
    model: &MarkovControlModel,
    policy: &StationaryPolicy,
    method: EvalMethod,
) -> Result<PolicyEvaluation, EvalError> {
    let costs = policy.costs(model);
    let values = match method {
        EvalMethod::Exact => solve_policy_linear(model, policy, &costs)?,
        EvalMethod::Iterative {
            tolerance,
            max_iter,
        } => {
            assert!(tolerance > 0.0, "tolerance must be positive");
            // The restricted rows are sub-stochastic, so the policy map
            // contracts with modulus alpha under the unit weight and the
            // zero-start iterate obeys the same geometric gap bound as
            // value iteration.
            let gamma = model.discount();
            let cost_bound = costs.iter().cloned().fold(0.0, f64::max);
            let mut bound = cost_bound / (1.0 - gamma);
            let mut values = vec![0.0; model.nontarget_count()];
            let mut sweeps = 0;
            while bound > tolerance {
                if sweeps == max_iter {
                    return Err(EvalError::IterationLimit {
                        tolerance,
                        max_iter,
                    });
                }
                values = policy_backup(model, policy, &costs, &values);
                sweeps += 1;
                bound *= gamma;
            }
            values
        }
    };

    let image = policy_backup(model, policy, &costs, &values);
    let residual = values
        .iter()
        .zip(&image)
        .map(|(v, t)| (v - t).abs())
        .fold(0.0, f64::max);
    // Clamp solver round-off: policy values are nonnegative analytically.
    let values = values.into_iter().map(|v| v.max(0.0)).collect();
    Ok(PolicyEvaluation {
        value: ValueFunction::from_values(values),
        method,
        residual,
    })
}

/// Outcome of a rolling-horizon synthesis at horizon `N`: the stationary
/// selector extracted from the final backup of an `(N+1)`-stage solve, its
/// exact evaluation, and the certified sub-optimality envelope. The
/// sandwich
///
/// ```text
/// 0 <= achieved(x) - vi_value(x) <= bound * w(x)
/// ```
///
/// holds at every non-target state with `bound = c_bar * gamma^(N+1) / (1 - gamma)`,
/// and the same right-hand side bounds `achieved(x) - optimal(x)`.
#[derive(Debug, Clone)]
pub struct RollingHorizonCertificate {
    pub horizon: usize,
    /// The selector replayed forever by the rolling-horizon controller.
    pub stationary_selector: StationaryPolicy,
    /// The `(N+1)`-th value iterate `v_{N+1}`.
    pub vi_value: ValueFunction,
    /// Exact value of the stationary selector.
    pub achieved_value: ValueFunction,
    /// `c_bar * gamma^(N+1) / (1 - gamma)`, before the per-state weight factor.
    pub bound: f64,
}

/// Synthesizes the rolling-horizon policy for horizon `N`: runs `N + 1`
/// backups from zero, keeps the argmin selector of the final backup,
/// evaluates it exactly, and packages the certified envelope. The sandwich
/// is asserted (with floating-point slack) before returning.
pub fn rolling_horizon(
    model: &MarkovControlModel,
    horizon: usize,
    certificate: &WeightCertificate,
) -> Result<RollingHorizonCertificate, EvalError> {
    let mut value = ValueFunction::zeros(model.nontarget_count());
    let mut selector = StationaryPolicy::lowest(model);
    for _ in 0..=horizon {
        let (next, greedy) = bellman_apply(model, &value);
        value = next;
        selector = greedy;
    }

    let achieved = evaluate_policy(model, &selector, EvalMethod::Exact)?.value;
    let bound = certificate.a_priori_bound(horizon as u32 + 1);

    let scale = achieved.as_slice().iter().cloned().fold(1.0, f64::max);
    let slack = 1e-9 * scale;
    for rank in 0..model.nontarget_count() {
        let gap = achieved.get(rank) - value.get(rank);
        let ceiling = bound * certificate.weight()[rank];
        assert!(
            gap >= -slack && gap <= ceiling + slack,
            "rolling-horizon envelope violated at state {}: gap {gap}, ceiling {ceiling}",
            model.state_of(rank)
        );
    }

    Ok(RollingHorizonCertificate {
        horizon,
        stationary_selector: selector,
        vi_value: value,
        achieved_value: achieved,
        bound,
    })
}

/// A policy defined on the whole state space: a recovery selector outside
/// the target set, the model's fixed in-target action inside it.
#[derive(Debug, Clone, PartialEq)]
pub struct TotalPolicy {
    recovery: StationaryPolicy,
}

impl TotalPolicy {
    pub fn recovery(&self) -> &StationaryPolicy {
        &self.recovery
    }

    /// Label of the action taken at a global state.
    pub fn action_label<'m>(&self, model: &'m MarkovControlModel, state: usize) -> &'m str {
        match model.rank_of(state) {
            Some(rank) => &model.action(rank, self.recovery.action(rank)).label,
            None => {
                &model
                    .in_target_for(state)
                    .expect("validated on build")
                    .label
            }
        }
    }
}

/// Concatenates a recovery selector with the model's in-target dynamics into
/// a policy defined on every state. Fails when the model carries no
/// in-target block.
pub fn concatenate_recovery(
    model: &MarkovControlModel,
    recovery: StationaryPolicy,
) -> Result<TotalPolicy, EvalError> {
    if !model.has_in_target() {
        return Err(EvalError::MissingTargetDynamics);
    }
    Ok(TotalPolicy { recovery })
}

/// Extremes over the target states of the expected optimal value at the
/// point of leaving the target set under the in-target dynamics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoveryBounds {
    pub beta_lower: f64,
    pub beta_upper: f64,
}

/// Computes the recovery-cost bounds
///
/// ```text
/// beta_lower = min_{x in K} sum_{y not in K} Q(y | x, g(x)) v*(y)
/// beta_upper = max_{x in K} sum_{y not in K} Q(y | x, g(x)) v*(y)
/// ```
///
/// where `g` is the model's in-target action and `v*` the converged optimal
/// value. The long-run average per-excursion recovery cost lies between
/// them.
pub fn recovery_bounds(
    model: &MarkovControlModel,
    v_star: &ValueFunction,
) -> Result<RecoveryBounds, EvalError> {
    let dynamics = model.in_target().ok_or(EvalError::MissingTargetDynamics)?;
    let mut lower = f64::INFINITY;
    let mut upper = f64::NEG_INFINITY;
    for dyn_ in dynamics {
        let expected = model.restricted_expectation(&dyn_.transition, v_star.as_slice());
        lower = lower.min(expected);
        upper = upper.max(expected);
    }
    Ok(RecoveryBounds {
        beta_lower: lower,
        beta_upper: upper,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Action, ModelParams, TargetDynamics};
    use crate::solver::{brute_force_optimal, value_iteration};
    use crate::testutil::{fishery, fishery_with_recovery, single_chain};
    use std::collections::{BTreeMap, BTreeSet};

    #[test]
    fn exact_evaluation_matches_the_geometric_closed_form() {
        let p = 0.4;
        let alpha = 0.9;
        let m = single_chain(p, 1.0, alpha);
        let policy = StationaryPolicy::lowest(&m);
        let eval = evaluate_policy(&m, &policy, EvalMethod::Exact).unwrap();
        assert!((eval.value.get(0) - 1.0 / (1.0 - alpha * p)).abs() < 1e-12);
        assert!(eval.residual < 1e-12);
    }

    #[test]
    fn optimal_fishery_policy_evaluates_to_the_solver_value() {
        let m = fishery();
        let cert = WeightCertificate::unit(&m).unwrap();
        let vi = value_iteration(&m, &cert, 1e-8, 100_000).unwrap();
        let eval = evaluate_policy(&m, &vi.greedy, EvalMethod::Exact).unwrap();
        for rank in 0..3 {
            assert!((eval.value.get(rank) - vi.value.get(rank)).abs() < 1e-6);
        }
    }

    #[test]
    fn iterative_and_exact_agree() {
        for seed in 0..12u64 {
            let m = crate::synth::random_model(seed, &crate::synth::RandomModelConfig::default());
            let policy = StationaryPolicy::lowest(&m);
            let exact = evaluate_policy(&m, &policy, EvalMethod::Exact).unwrap();
            let iterative = evaluate_policy(
                &m,
                &policy,
                EvalMethod::Iterative {
                    tolerance: 1e-10,
                    max_iter: 100_000,
                },
            )
            .unwrap();
            let diff = exact
                .value
                .weighted_distance(&iterative.value, &vec![1.0; m.nontarget_count()]);
            assert!(
                diff < 2e-10,
                "seed {seed}: exact/iterative differ by {diff}"
            );
            assert!(iterative.residual <= 1e-9);
        }
    }

    #[test]
    fn iteration_limit_is_reported() {
        let m = fishery();
        let policy = StationaryPolicy::lowest(&m);
        let err = evaluate_policy(
            &m,
            &policy,
            EvalMethod::Iterative {
                tolerance: 1e-9,
                max_iter: 3,
            },
        )
        .unwrap_err();
        assert!(matches!(err, EvalError::IterationLimit { .. }));
    }

    #[test]
    fn every_policy_dominates_the_optimal_value() {
        for seed in 0..8u64 {
            let m = crate::synth::random_model(seed, &crate::synth::RandomModelConfig::default());
            let (optimal, _) = brute_force_optimal(&m).unwrap();
            let policy = StationaryPolicy::lowest(&m);
            let eval = evaluate_policy(&m, &policy, EvalMethod::Exact).unwrap();
            for rank in 0..m.nontarget_count() {
                assert!(eval.value.get(rank) >= optimal.get(rank) - 1e-9);
            }
        }
    }

    #[test]
    fn rolling_horizon_recovers_the_optimal_policy_at_depth_eight() {
        let m = fishery();
        let cert = WeightCertificate::unit(&m).unwrap();
        let rh = rolling_horizon(&m, 8, &cert).unwrap();
        assert_eq!(rh.stationary_selector.choices(), &[3, 4, 2]);
    }

    #[test]
    fn shallow_rolling_horizon_harvests_into_the_absorbing_state() {
        let m = fishery();
        let cert = WeightCertificate::unit(&m).unwrap();
        let rh = rolling_horizon(&m, 1, &cert).unwrap();
        // Harvest at the lowest population level; that row is absorbing, so
        // the target is never reached from there under this selector.
        assert_eq!(rh.stationary_selector.action(0), 0);
        let row = &m.action(0, 0).transition;
        assert_eq!(row, &vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn zero_horizon_is_the_myopic_selector() {
        let m = fishery();
        let cert = WeightCertificate::unit(&m).unwrap();
        let rh = rolling_horizon(&m, 0, &cert).unwrap();
        // One backup of the zero vector: the cheapest action everywhere.
        assert_eq!(rh.stationary_selector.choices(), &[0, 0, 0]);
        assert_eq!(rh.vi_value.as_slice(), &[280.0, 110.0, 20.0]);
    }

    #[test]
    fn certified_envelope_shrinks_by_the_modulus() {
        let m = fishery();
        let cert = WeightCertificate::unit(&m).unwrap();
        let b3 = rolling_horizon(&m, 3, &cert).unwrap().bound;
        let b4 = rolling_horizon(&m, 4, &cert).unwrap().bound;
        assert!((b4 / b3 - 0.9).abs() < 1e-12);
    }

    #[test]
    fn concatenation_requires_in_target_dynamics() {
        let m = fishery();
        let err = concatenate_recovery(&m, StationaryPolicy::lowest(&m)).unwrap_err();
        assert_eq!(err, EvalError::MissingTargetDynamics);

        let m = fishery_with_recovery();
        let total = concatenate_recovery(&m, StationaryPolicy::lowest(&m)).unwrap();
        assert_eq!(total.action_label(&m, 0), "harvest");
        assert_eq!(total.action_label(&m, 3), "sustain");
    }

    #[test]
    fn recovery_bounds_on_a_singleton_target_coincide() {
        let m = fishery_with_recovery();
        let cert = WeightCertificate::unit(&m).unwrap();
        let v_star = value_iteration(&m, &cert, 1e-10, 100_000).unwrap().value;
        let bounds = recovery_bounds(&m, &v_star).unwrap();
        assert_eq!(bounds.beta_lower, bounds.beta_upper);
        let row = &m.in_target_for(3).unwrap().transition;
        let expected = row[0] * v_star.get(0) + row[1] * v_star.get(1) + row[2] * v_star.get(2);
        assert!((bounds.beta_lower - expected).abs() < 1e-12);
    }

    #[test]
    fn recovery_bounds_with_partial_exit_mass() {
        // In-target row [0.1, 0.2, 0.3, 0.4]: the bounds integrate only the
        // exiting mass.
        let mut m = fishery_with_recovery_row(vec![0.1, 0.2, 0.3, 0.4]);
        let cert = WeightCertificate::unit(&m).unwrap();
        let v_star = value_iteration(&m, &cert, 1e-10, 100_000).unwrap().value;
        let b = recovery_bounds(&m, &v_star).unwrap();
        let expected = 0.1 * v_star.get(0) + 0.2 * v_star.get(1) + 0.3 * v_star.get(2);
        assert!((b.beta_lower - expected).abs() < 1e-9);
        assert_eq!(b.beta_lower, b.beta_upper);

        // A row that never leaves the target set integrates to zero.
        m = fishery_with_recovery_row(vec![0.0, 0.0, 0.0, 1.0]);
        let b = recovery_bounds(&m, &v_star).unwrap();
        assert_eq!(b.beta_lower, 0.0);
        assert_eq!(b.beta_upper, 0.0);
    }

    #[test]
    fn missing_dynamics_is_an_error() {
        let m = fishery();
        let v = ValueFunction::zeros(3);
        assert!(matches!(
            recovery_bounds(&m, &v),
            Err(EvalError::MissingTargetDynamics)
        ));
    }

    #[test]
    fn multi_state_target_bounds_are_ordered() {
        // Two target states with different exit rows.
        let m = MarkovControlModel::new(ModelParams {
            state_count: 4,
            target_set: BTreeSet::from([2, 3]),
            actions: vec![
                vec![Action {
                    label: "a".into(),
                    cost: 1.0,
                    transition: vec![0.5, 0.0, 0.5, 0.0],
                }],
                vec![Action {
                    label: "a".into(),
                    cost: 3.0,
                    transition: vec![0.0, 0.2, 0.0, 0.8],
                }],
                vec![],
                vec![],
            ],
            discount: 0.8,
            in_target: Some(BTreeMap::from([
                (
                    2,
                    TargetDynamics {
                        label: "g".into(),
                        transition: vec![1.0, 0.0, 0.0, 0.0],
                    },
                ),
                (
                    3,
                    TargetDynamics {
                        label: "g".into(),
                        transition: vec![0.0, 1.0, 0.0, 0.0],
                    },
                ),
            ])),
        })
        .unwrap();
        let (v_star, _) = brute_force_optimal(&m).unwrap();
        let b = recovery_bounds(&m, &v_star).unwrap();
        assert!(b.beta_lower <= b.beta_upper);
        assert!(b.beta_lower > 0.0);
    }

    fn fishery_with_recovery_row(row: Vec<f64>) -> MarkovControlModel {
        let mut params = crate::testutil::fishery_params();
        params.in_target = Some(BTreeMap::from([(
            3,
            TargetDynamics {
                label: "sustain".into(),
                transition: row,
            },
        )]));
        MarkovControlModel::new(params).unwrap()
    }
}
