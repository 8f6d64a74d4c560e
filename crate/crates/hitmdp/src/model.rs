//! Core domain types: finite Markov control models stopped at a target set,
//! value vectors, and policies.
//!
//! States are dense indices `0..state_count`. A nonempty strict subset of
//! them forms the *target set* `K`: cost accrual and control stop at the
//! first hitting time of `K`. Every non-target state carries an ordered,
//! nonempty list of feasible actions; each action has a stage cost and a
//! transition row over *all* states. Transition rows are stored full-width;
//! every operator that needs the sub-stochastic restriction to the
//! non-target states performs it on the fly, so the same row serves both
//! the dynamic programming backups and the trajectory sampler.
//!
//! Target states optionally carry a single fixed in-target action (label
//! plus transition row). That block is only needed by the recovery-cost
//! analysis, which alternates an out-of-target recovery policy with the
//! in-target one.
//!
//! All types here are immutable after construction and safe to share across
//! threads.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use thiserror::Error;

/// Transition rows must sum to one within this tolerance; rows inside the
/// tolerance are renormalized exactly, rows outside it are rejected.
pub const ROW_SUM_TOLERANCE: f64 = 1e-12;

/// One feasible action at a non-target state.
#[derive(Debug, Clone, PartialEq)]
pub struct Action {
    /// Human-readable identifier, e.g. `"harvest"`. Unique per state.
    pub label: String,
    /// Nonnegative stage cost incurred when the action is taken.
    pub cost: f64,
    /// Probability row over all states.
    pub transition: Vec<f64>,
}

/// The fixed action applied at a target state while the process dwells
/// inside the target set.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetDynamics {
    pub label: String,
    /// Probability row over all states.
    pub transition: Vec<f64>,
}

/// Unvalidated model input. Run [`validate_model`] to list every defect, or
/// [`MarkovControlModel::new`] to validate and build in one step.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub state_count: usize,
    /// Global indices of the target set `K`.
    pub target_set: BTreeSet<usize>,
    /// Feasible actions per state, indexed by global state. Target states
    /// must have empty lists (control is undefined on `K`).
    pub actions: Vec<Vec<Action>>,
    /// Discount factor, strictly inside `(0, 1)`.
    pub discount: f64,
    /// Optional in-target dynamics, keyed by global target-state index.
    /// When present it must cover the whole target set.
    pub in_target: Option<BTreeMap<usize, TargetDynamics>>,
}

/// A single validation defect, with coordinates.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Violation {
    #[error("model must have at least one state")]
    NoStates,
    #[error("target set must be nonempty")]
    EmptyTargetSet,
    #[error("target set must be a strict subset of the states")]
    TargetSetNotStrict,
    #[error("target state {state} is out of range")]
    TargetOutOfRange { state: usize },
    #[error("non-target state {state} has no feasible action")]
    NoFeasibleAction { state: usize },
    #[error("target state {state} must not carry out-of-target actions")]
    TargetStateHasActions { state: usize },
    #[error("action {action} of state {state} repeats label {label:?}")]
    DuplicateActionLabel {
        state: usize,
        action: usize,
        label: String,
    },
    #[error("transition row of state {state}, action {action} has length {len}")]
    BadRowLength {
        state: usize,
        action: usize,
        len: usize,
    },
    #[error("transition row of state {state}, action {action} sums to {sum}")]
    RowSum {
        state: usize,
        action: usize,
        sum: f64,
    },
    #[error(
        "transition row of state {state}, action {action} has entry {value} at successor {successor}"
    )]
    BadTransitionEntry {
        state: usize,
        action: usize,
        successor: usize,
        value: f64,
    },
    #[error(
        "stage cost of state {state}, action {action} is {cost}; costs must be finite and >= 0"
    )]
    BadCost {
        state: usize,
        action: usize,
        cost: f64,
    },
    #[error("discount factor {discount} is outside the open interval (0, 1)")]
    DiscountOutOfRange { discount: f64 },
    #[error("in-target dynamics missing for target state {state}")]
    InTargetMissing { state: usize },
    #[error("in-target dynamics given for non-target state {state}")]
    InTargetNotTarget { state: usize },
    #[error("in-target row of state {state} has length {len}")]
    InTargetBadRowLength { state: usize, len: usize },
    #[error("in-target row of state {state} sums to {sum}")]
    InTargetRowSum { state: usize, sum: f64 },
    #[error("in-target row of state {state} has entry {value} at successor {successor}")]
    InTargetBadEntry {
        state: usize,
        successor: usize,
        value: f64,
    },
}

/// Returned by [`MarkovControlModel::new`] when validation fails.
#[derive(Debug, Clone, Error)]
#[error("model failed validation with {} violation(s); first: {}", .0.len(), .0[0])]
pub struct InvalidModel(pub Vec<Violation>);

fn check_row(row: &[f64], state_count: usize) -> Result<(), RowDefect> {
    if row.len() != state_count {
        return Err(RowDefect::Length(row.len()));
    }
    let mut sum = 0.0;
    for (successor, &value) in row.iter().enumerate() {
        if !value.is_finite() || value < 0.0 {
            return Err(RowDefect::Entry { successor, value });
        }
        sum += value;
    }
    if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
        return Err(RowDefect::Sum(sum));
    }
    Ok(())
}

enum RowDefect {
    Length(usize),
    Sum(f64),
    Entry { successor: usize, value: f64 },
}

/// Checks every structural invariant of `params` and returns the full list
/// of defects. An empty list means the input is well-formed. Violations are
/// data, not faults: this never panics on malformed input.
pub fn validate_model(params: &ModelParams) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = params.state_count;

    if n == 0 {
        out.push(Violation::NoStates);
    }
    if params.target_set.is_empty() {
        out.push(Violation::EmptyTargetSet);
    }
    for &t in &params.target_set {
        if t >= n {
            out.push(Violation::TargetOutOfRange { state: t });
        }
    }
    let in_range_targets = params.target_set.iter().filter(|&&t| t < n).count();
    if n > 0 && in_range_targets == n {
        out.push(Violation::TargetSetNotStrict);
    }
    if !(params.discount > 0.0 && params.discount < 1.0) {
        out.push(Violation::DiscountOutOfRange {
            discount: params.discount,
        });
    }

    for (state, actions) in params.actions.iter().enumerate().take(n) {
        if params.target_set.contains(&state) {
            if !actions.is_empty() {
                out.push(Violation::TargetStateHasActions { state });
            }
            continue;
        }
        if actions.is_empty() {
            out.push(Violation::NoFeasibleAction { state });
        }
        let mut seen = BTreeSet::new();
        for (ai, act) in actions.iter().enumerate() {
            if !seen.insert(act.label.as_str()) {
                out.push(Violation::DuplicateActionLabel {
                    state,
                    action: ai,
                    label: act.label.clone(),
                });
            }
            if !act.cost.is_finite() || act.cost < 0.0 {
                out.push(Violation::BadCost {
                    state,
                    action: ai,
                    cost: act.cost,
                });
            }
            match check_row(&act.transition, n) {
                Ok(()) => {}
                Err(RowDefect::Length(len)) => out.push(Violation::BadRowLength {
                    state,
                    action: ai,
                    len,
                }),
                Err(RowDefect::Sum(sum)) => out.push(Violation::RowSum {
                    state,
                    action: ai,
                    sum,
                }),
                Err(RowDefect::Entry { successor, value }) => {
                    out.push(Violation::BadTransitionEntry {
                        state,
                        action: ai,
                        successor,
                        value,
                    })
                }
            }
        }
    }
    // Any state beyond the declared count with actions is a length mismatch.
    for state in n..params.actions.len() {
        if !params.actions[state].is_empty() {
            out.push(Violation::TargetOutOfRange { state });
        }
    }

    if let Some(in_target) = &params.in_target {
        for &t in &params.target_set {
            if t < n && !in_target.contains_key(&t) {
                out.push(Violation::InTargetMissing { state: t });
            }
        }
        for (&state, dyn_) in in_target {
            if !params.target_set.contains(&state) {
                out.push(Violation::InTargetNotTarget { state });
                continue;
            }
            match check_row(&dyn_.transition, n) {
                Ok(()) => {}
                Err(RowDefect::Length(len)) => {
                    out.push(Violation::InTargetBadRowLength { state, len })
                }
                Err(RowDefect::Sum(sum)) => out.push(Violation::InTargetRowSum { state, sum }),
                Err(RowDefect::Entry { successor, value }) => {
                    out.push(Violation::InTargetBadEntry {
                        state,
                        successor,
                        value,
                    })
                }
            }
        }
    }

    out
}

/// A validated finite Markov control model stopped at a target set.
///
/// Non-target states are addressed in two coordinate systems: by *global*
/// state index, and by *rank* — the position in the ascending list of
/// non-target states. Value vectors and policies are rank-indexed; values on
/// target states are identically zero by convention and never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovControlModel {
    state_count: usize,
    discount: f64,
    is_target: Vec<bool>,
    nontarget: Vec<usize>,
    targets: Vec<usize>,
    rank_of: Vec<Option<usize>>,
    /// Actions per non-target state, rank-indexed. Rows are renormalized.
    actions: Vec<Vec<Action>>,
    /// In-target dynamics aligned with `targets`, when present.
    in_target: Option<Vec<TargetDynamics>>,
}

impl MarkovControlModel {
    /// Validates `params` and builds the model. Rows within
    /// [`ROW_SUM_TOLERANCE`] of unit mass are renormalized exactly.
    pub fn new(params: ModelParams) -> Result<Self, InvalidModel> {
        let violations = validate_model(&params);
        if !violations.is_empty() {
            return Err(InvalidModel(violations));
        }

        let n = params.state_count;
        let is_target: Vec<bool> = (0..n).map(|s| params.target_set.contains(&s)).collect();
        let nontarget: Vec<usize> = (0..n).filter(|s| !is_target[*s]).collect();
        let targets: Vec<usize> = (0..n).filter(|s| is_target[*s]).collect();
        let mut rank_of = vec![None; n];
        for (rank, &s) in nontarget.iter().enumerate() {
            rank_of[s] = Some(rank);
        }

        let renormalize = |row: &mut Vec<f64>| {
            let sum: f64 = row.iter().sum();
            if sum != 1.0 {
                for p in row.iter_mut() {
                    *p /= sum;
                }
            }
        };

        let mut actions: Vec<Vec<Action>> = Vec::with_capacity(nontarget.len());
        for &s in &nontarget {
            let mut acts = params.actions[s].clone();
            for act in &mut acts {
                renormalize(&mut act.transition);
            }
            actions.push(acts);
        }

        let in_target = params.in_target.map(|map| {
            targets
                .iter()
                .map(|t| {
                    let mut dyn_ = map[t].clone();
                    renormalize(&mut dyn_.transition);
                    dyn_
                })
                .collect()
        });

        Ok(Self {
            state_count: n,
            discount: params.discount,
            is_target,
            nontarget,
            targets,
            rank_of,
            actions,
            in_target,
        })
    }

    pub fn state_count(&self) -> usize {
        self.state_count
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn is_target(&self, state: usize) -> bool {
        self.is_target[state]
    }

    /// Ascending global indices of the non-target states.
    pub fn nontarget_states(&self) -> &[usize] {
        &self.nontarget
    }

    pub fn nontarget_count(&self) -> usize {
        self.nontarget.len()
    }

    /// Ascending global indices of the target set.
    pub fn target_states(&self) -> &[usize] {
        &self.targets
    }

    /// Rank of a global state among the non-target states, `None` on `K`.
    pub fn rank_of(&self, state: usize) -> Option<usize> {
        self.rank_of[state]
    }

    /// Global index of the non-target state with the given rank.
    pub fn state_of(&self, rank: usize) -> usize {
        self.nontarget[rank]
    }

    /// Feasible actions of the non-target state with the given rank.
    pub fn actions(&self, rank: usize) -> &[Action] {
        &self.actions[rank]
    }

    pub fn action(&self, rank: usize, action: usize) -> &Action {
        &self.actions[rank][action]
    }

    pub fn has_in_target(&self) -> bool {
        self.in_target.is_some()
    }

    /// In-target dynamics aligned with [`Self::target_states`].
    pub fn in_target(&self) -> Option<&[TargetDynamics]> {
        self.in_target.as_deref()
    }

    /// In-target dynamics of a global target state.
    pub fn in_target_for(&self, state: usize) -> Option<&TargetDynamics> {
        let pos = self.targets.iter().position(|&t| t == state)?;
        Some(&self.in_target.as_ref()?[pos])
    }

    /// Expectation of a rank-indexed vector under a full-width probability
    /// row, restricted to the non-target states: `sum_{y not in K} row[y] * u[rank(y)]`.
    pub fn restricted_expectation(&self, row: &[f64], u: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (rank, &state) in self.nontarget.iter().enumerate() {
            acc += row[state] * u[rank];
        }
        acc
    }

    /// Mass a full-width probability row keeps on the non-target states.
    pub fn restricted_mass(&self, row: &[f64]) -> f64 {
        self.nontarget.iter().map(|&s| row[s]).sum()
    }

    /// Largest stage cost over all feasible state-action pairs.
    pub fn max_cost(&self) -> f64 {
        self.actions
            .iter()
            .flatten()
            .map(|a| a.cost)
            .fold(0.0, f64::max)
    }
}

/// A real vector indexed by non-target rank; the value on the target set is
/// identically zero and not stored.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction {
    values: Vec<f64>,
}

impl ValueFunction {
    pub fn zeros(len: usize) -> Self {
        Self {
            values: vec![0.0; len],
        }
    }

    /// Wraps raw values. Entries must be finite and nonnegative.
    pub fn from_values(values: Vec<f64>) -> Self {
        assert!(
            values.iter().all(|v| v.is_finite() && *v >= 0.0),
            "value function entries must be finite and nonnegative"
        );
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, rank: usize) -> f64 {
        self.values[rank]
    }

    /// `max_x |self(x) - other(x)| / weight(x)`.
    pub fn weighted_distance(&self, other: &Self, weight: &[f64]) -> f64 {
        weighted_sup_distance(&self.values, other.as_slice(), weight)
    }
}

impl std::ops::Index<usize> for ValueFunction {
    type Output = f64;
    fn index(&self, rank: usize) -> &f64 {
        &self.values[rank]
    }
}

/// `max_i |u[i]| / weight[i]`.
pub fn weighted_sup_norm(u: &[f64], weight: &[f64]) -> f64 {
    u.iter()
        .zip(weight)
        .map(|(v, w)| v.abs() / w)
        .fold(0.0, f64::max)
}

/// `max_i |u[i] - v[i]| / weight[i]`.
pub fn weighted_sup_distance(u: &[f64], v: &[f64], weight: &[f64]) -> f64 {
    u.iter()
        .zip(v)
        .zip(weight)
        .map(|((a, b), w)| (a - b).abs() / w)
        .fold(0.0, f64::max)
}

/// Raised when a policy names an action outside the feasible set.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("state {state} has {feasible} feasible action(s); selector chose {action}")]
pub struct InfeasibleSelector {
    pub state: usize,
    pub action: usize,
    pub feasible: usize,
}

/// A deterministic stationary policy: one feasible action per non-target
/// state, rank-indexed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StationaryPolicy {
    choices: Vec<usize>,
}

impl StationaryPolicy {
    pub fn from_choices(
        model: &MarkovControlModel,
        choices: Vec<usize>,
    ) -> Result<Self, InfeasibleSelector> {
        assert_eq!(choices.len(), model.nontarget_count());
        for (rank, &a) in choices.iter().enumerate() {
            let feasible = model.actions(rank).len();
            if a >= feasible {
                return Err(InfeasibleSelector {
                    state: model.state_of(rank),
                    action: a,
                    feasible,
                });
            }
        }
        Ok(Self { choices })
    }

    /// The selector that picks the lowest-indexed feasible action everywhere.
    pub fn lowest(model: &MarkovControlModel) -> Self {
        Self {
            choices: vec![0; model.nontarget_count()],
        }
    }

    pub(crate) fn from_choices_unchecked(choices: Vec<usize>) -> Self {
        Self { choices }
    }

    /// Action index chosen at the non-target state with the given rank.
    pub fn action(&self, rank: usize) -> usize {
        self.choices[rank]
    }

    pub fn choices(&self) -> &[usize] {
        &self.choices
    }

    /// Stage costs under this policy, rank-indexed.
    pub fn costs(&self, model: &MarkovControlModel) -> Vec<f64> {
        self.choices
            .iter()
            .enumerate()
            .map(|(rank, &a)| model.action(rank, a).cost)
            .collect()
    }
}

/// An ordered sequence of selectors, newest first: the selector produced by
/// the latest dynamic programming backup comes first, the initial
/// (arbitrary) selector last.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HorizonPolicy {
    selectors: Vec<StationaryPolicy>,
}

impl HorizonPolicy {
    pub fn new(selectors: Vec<StationaryPolicy>) -> Self {
        Self { selectors }
    }

    pub fn len(&self) -> usize {
        self.selectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selectors.is_empty()
    }

    /// Selectors, newest first.
    pub fn selectors(&self) -> &[StationaryPolicy] {
        &self.selectors
    }

    /// The selector of the latest backup.
    pub fn newest(&self) -> &StationaryPolicy {
        &self.selectors[0]
    }
}

impl std::ops::Index<usize> for HorizonPolicy {
    type Output = StationaryPolicy;
    fn index(&self, i: usize) -> &StationaryPolicy {
        &self.selectors[i]
    }
}
