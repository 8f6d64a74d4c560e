//! Weight functions certifying that the dynamic programming operator is a
//! contraction in a weighted sup norm.
//!
//! A weight vector `w >= 1` over the non-target states together with
//! constants `c_bar` and `beta` certifies two growth conditions:
//!
//! * `c(x, a) <= c_bar * w(x)` for every feasible pair, and
//! * `sum_{y not in K} Q(y | x, a) * w(y) <= beta * w(x)` for every
//!   feasible pair,
//!
//! with `beta in [1, 1/alpha)`. Under these the one-step operator contracts
//! with modulus `gamma = alpha * beta < 1`, which yields the a-priori value
//! iteration bound `c_bar * gamma^n / (1 - gamma)` carried by the solver.
//!
//! For bounded costs the unit weight `w = 1` always works: restricted rows
//! are sub-stochastic, so `beta = 1` and `gamma = alpha`.

use thiserror::Error;

use crate::model::MarkovControlModel;

/// Entrywise slack allowed when re-checking the certificate inequalities.
pub const CERTIFICATE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CertificateError {
    /// `alpha * beta >= 1`: this weight does not certify a contraction.
    #[error("weight is infeasible: drift bound {drift_bound} gives modulus {modulus} >= 1")]
    Infeasible { drift_bound: f64, modulus: f64 },
    #[error("weight entry {value} at non-target rank {rank}; weights must be finite and >= 1")]
    BadWeight { rank: usize, value: f64 },
    #[error("weight vector has length {got}, expected {expected} non-target entries")]
    WrongLength { expected: usize, got: usize },
}

/// A weight vector with the tightest constants certifying the contraction.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightCertificate {
    weight: Vec<f64>,
    cost_bound: f64,
    drift_bound: f64,
    modulus: f64,
}

impl WeightCertificate {
    /// Certificate for the unit weight `w = 1`. Never infeasible on a valid
    /// model: the drift bound is exactly one.
    pub fn unit(model: &MarkovControlModel) -> Result<Self, CertificateError> {
        Self::with_weight(model, vec![1.0; model.nontarget_count()])
    }

    /// Certificate for an explicit weight vector over the non-target states
    /// (rank-indexed). Computes the tightest `c_bar` and `beta` and fails if
    /// `alpha * beta >= 1`.
    pub fn with_weight(
        model: &MarkovControlModel,
        weight: Vec<f64>,
    ) -> Result<Self, CertificateError> {
        let n = model.nontarget_count();
        if weight.len() != n {
            return Err(CertificateError::WrongLength {
                expected: n,
                got: weight.len(),
            });
        }
        for (rank, &w) in weight.iter().enumerate() {
            if !w.is_finite() || w < 1.0 {
                return Err(CertificateError::BadWeight { rank, value: w });
            }
        }

        let mut cost_bound: f64 = 0.0;
        let mut drift_bound: f64 = 1.0;
        for rank in 0..n {
            for action in model.actions(rank) {
                cost_bound = cost_bound.max(action.cost / weight[rank]);
                let drift = model.restricted_expectation(&action.transition, &weight);
                drift_bound = drift_bound.max(drift / weight[rank]);
            }
        }

        let modulus = model.discount() * drift_bound;
        if modulus >= 1.0 {
            return Err(CertificateError::Infeasible {
                drift_bound,
                modulus,
            });
        }
        Ok(Self {
            weight,
            cost_bound,
            drift_bound,
            modulus,
        })
    }

    /// The weight vector `w`, rank-indexed.
    pub fn weight(&self) -> &[f64] {
        &self.weight
    }

    /// Tightest `c_bar` with `c(x, a) <= c_bar * w(x)`.
    pub fn cost_bound(&self) -> f64 {
        self.cost_bound
    }

    /// Tightest `beta >= 1` bounding the restricted drift of `w`.
    pub fn drift_bound(&self) -> f64 {
        self.drift_bound
    }

    /// Contraction modulus `gamma = alpha * beta`.
    pub fn modulus(&self) -> f64 {
        self.modulus
    }

    /// The certified distance-to-fixed-point bound after `n` backups from
    /// the zero vector: `c_bar * gamma^n / (1 - gamma)`.
    pub fn a_priori_bound(&self, n: u32) -> f64 {
        self.cost_bound / (1.0 - self.modulus) * self.modulus.powi(n as i32)
    }

    /// Re-checks both certificate inequalities by direct enumeration,
    /// returning the coordinates of the first failure, if any.
    pub fn check(&self, model: &MarkovControlModel) -> Result<(), (usize, usize)> {
        for rank in 0..model.nontarget_count() {
            for (ai, action) in model.actions(rank).iter().enumerate() {
                let w = self.weight[rank];
                if action.cost > self.cost_bound * w + CERTIFICATE_TOLERANCE {
                    return Err((model.state_of(rank), ai));
                }
                let drift = model.restricted_expectation(&action.transition, &self.weight);
                if drift > self.drift_bound * w + CERTIFICATE_TOLERANCE {
                    return Err((model.state_of(rank), ai));
                }
            }
        }
        Ok(())
    }
}
