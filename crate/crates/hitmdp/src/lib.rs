//! Discounted-cost optimal control of finite Markov decision processes
//! stopped at the first hitting time of a target set.
//!
//! The process pays a nonnegative stage cost at every step it spends
//! outside a designated target set and stops (at zero further cost) the
//! moment it enters it; the target set is *not* assumed absorbing. This
//! crate computes optimal stationary policies for the discounted total cost
//! of that stopped process and quantifies how fast cheaper approximations
//! approach them:
//!
//! * [`model`] — the model, value, and policy types, plus validation;
//! * [`weight`] — weight certificates that make the backup operator a
//!   contraction in a weighted sup norm and price its convergence;
//! * [`solver`] — the restricted Bellman operator, value iteration with a
//!   certified a-priori stopping rule, discrepancy diagnostics, and an
//!   exhaustive oracle;
//! * [`policy`] — exact and iterative policy evaluation, rolling-horizon
//!   synthesis with sub-optimality envelopes, and recovery-cost bounds;
//! * [`sim`] — reproducible Monte Carlo simulation of hitting times,
//!   discounted costs, and excursion-averaged recovery costs;
//! * [`modelfile`] — the TOML model schema and loader;
//! * [`synth`] — seeded random instances for tests and benchmarks.

pub mod model;
pub mod modelfile;
pub mod policy;
pub mod sim;
pub mod solver;
pub mod synth;
pub mod weight;

#[cfg(test)]
mod testutil;

pub use model::{
    validate_model, weighted_sup_distance, weighted_sup_norm, Action, HorizonPolicy, InvalidModel,
    MarkovControlModel, ModelParams, StationaryPolicy, TargetDynamics, ValueFunction, Violation,
};
pub use modelfile::{load_model, parse_model, save_model, LoadError, LoadedModel, ModelFile};
pub use policy::{
    concatenate_recovery, evaluate_policy, recovery_bounds, rolling_horizon, EvalError, EvalMethod,
    PolicyEvaluation, RecoveryBounds, RollingHorizonCertificate, TotalPolicy,
};
pub use sim::{
    estimate_recovery_cost, monte_carlo, sample_trajectory, ControlLaw, HittingTime,
    MonteCarloSummary, RecoveryEstimate, SimError, SimulationConfig, TrajectoryRecord,
};
pub use solver::{
    bellman_apply, brute_force_optimal, brute_force_optimal_with_cap, discrepancy, dssp_value,
    value_iteration, vi_policy_sequence, SolverError, ValueIterationResult,
};
pub use weight::{CertificateError, WeightCertificate};
