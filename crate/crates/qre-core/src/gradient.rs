//! Softmax parameterization, the exact regularized policy gradient, the
//! Fisher information matrix, and the preconditioned ascent step in logit
//! space.
//!
//! The point of this module is the bridge it verifies: stepping logits along
//! the Fisher pseudo-inverse of the exact gradient produces, after the
//! softmax, the same policies as the closed-form multiplicative update in
//! [`crate::dynamics`]. Everything here works on raw (unconstrained) logits.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::dynamics::DynamicsParams;
use crate::error::{Error, Result};
use crate::game::{marginalized_reward, PolicyProfile, StaticGame};
use crate::num::{log_floored, softmax_slice};

/// Relative eigenvalue cutoff for the Fisher pseudo-inverse. Eigenvalues
/// below `cutoff * max_eigenvalue` are treated as the null space. Policies
/// with entries much below 1e-8 push true eigenvalues under this cutoff;
/// the pseudo-inverse is not reliable there.
const PSEUDO_INVERSE_CUTOFF: f64 = 1e-10;

/// Unconstrained per-agent logit vectors; `softmax` of each gives the
/// policies.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitProfile {
    theta: Vec<Vec<f64>>,
}

impl LogitProfile {
    pub fn new(theta: Vec<Vec<f64>>) -> Result<Self> {
        if theta.is_empty() || theta.iter().any(Vec::is_empty) {
            return Err(Error::Parameter(
                "logit profile needs at least one agent with actions".into(),
            ));
        }
        for (i, t) in theta.iter().enumerate() {
            if t.iter().any(|v| !v.is_finite()) {
                return Err(Error::Parameter(format!(
                    "agent {i} has a non-finite logit"
                )));
            }
        }
        Ok(Self { theta })
    }

    /// Logits of an existing profile: `log pi`, already mean-centered.
    pub fn from_profile(profile: &PolicyProfile) -> Self {
        let theta = profile
            .policies()
            .iter()
            .map(|pi| {
                let logs: Vec<f64> = pi.iter().map(|&p| log_floored(p)).collect();
                let mean = logs.iter().sum::<f64>() / logs.len() as f64;
                logs.into_iter().map(|l| l - mean).collect()
            })
            .collect();
        Self { theta }
    }

    pub fn num_agents(&self) -> usize {
        self.theta.len()
    }

    pub fn logits(&self, agent: usize) -> &[f64] {
        &self.theta[agent]
    }

    /// The policies these logits induce.
    pub fn to_profile(&self) -> PolicyProfile {
        PolicyProfile::new(self.theta.iter().map(|t| softmax(t)).collect())
            .expect("softmax output is strictly positive")
    }

    /// Shift-invariant canonical form: per-agent mean subtracted.
    pub fn canonical(&self) -> Self {
        Self {
            theta: self
                .theta
                .iter()
                .map(|t| {
                    let mean = t.iter().sum::<f64>() / t.len() as f64;
                    t.iter().map(|v| v - mean).collect()
                })
                .collect(),
        }
    }
}

/// Numerically stable softmax of one logit vector.
pub fn softmax(theta: &[f64]) -> Vec<f64> {
    softmax_slice(theta)
}

/// Exact gradient of the regularized expected reward of `agent` with
/// respect to that agent's own logits, evaluated at the profile:
///
/// ```text
/// g(a) = pi(a) * (rbar(a) - tau * log pi(a) - reg_reward)
/// ```
///
/// where `reg_reward` is the agent's regularized expected reward. The
/// components always sum to zero (the gradient lives in the simplex tangent
/// space).
pub fn policy_gradient(
    game: &StaticGame,
    profile: &PolicyProfile,
    agent: usize,
    tau: f64,
) -> Result<Vec<f64>> {
    if !tau.is_finite() || tau < 0.0 {
        return Err(Error::Parameter(format!(
            "temperature must be finite and nonnegative, got {tau}"
        )));
    }
    let rbar = marginalized_reward(game, profile, agent)?;
    let pi = profile.policy(agent);
    let expected: f64 = pi.iter().zip(&rbar).map(|(&p, &r)| p * r).sum();
    let reg_reward = expected + tau * crate::game::entropy(pi);
    Ok(pi
        .iter()
        .zip(&rbar)
        .map(|(&p, &r)| p * (r - tau * log_floored(p) - reg_reward))
        .collect())
}

/// Fisher information matrix of the softmax policy: `diag(pi) - pi pi^T`.
/// Symmetric, positive semidefinite, with the all-ones vector in its null
/// space.
pub fn fisher_matrix(policy: &[f64]) -> DMatrix<f64> {
    let m = policy.len();
    DMatrix::from_fn(m, m, |i, j| {
        let outer = policy[i] * policy[j];
        if i == j {
            policy[i] - outer
        } else {
            -outer
        }
    })
}

/// Minimum-norm solution of `F x = g` for a symmetric PSD `F`, via
/// eigendecomposition with a relative cutoff: eigencomponents below
/// `1e-10 * max_eigenvalue` are projected out rather than divided by.
pub fn fisher_pseudo_inverse(fisher: &DMatrix<f64>, g: &[f64]) -> Result<Vec<f64>> {
    let m = fisher.nrows();
    if fisher.ncols() != m || g.len() != m {
        return Err(Error::Dimension(format!(
            "pseudo-inverse needs square matrix matching gradient, got {}x{} and {}",
            fisher.nrows(),
            fisher.ncols(),
            g.len()
        )));
    }
    let eigen = SymmetricEigen::new(fisher.clone());
    let max_eig = eigen
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    if !(max_eig > 0.0) {
        return Err(Error::Numeric(format!(
            "information matrix has no positive eigenvalue (max {max_eig})"
        )));
    }
    let cutoff = PSEUDO_INVERSE_CUTOFF * max_eig;
    let gv = DVector::from_column_slice(g);
    let mut x = DVector::zeros(m);
    for k in 0..m {
        let lambda = eigen.eigenvalues[k];
        if lambda <= cutoff {
            continue;
        }
        let v = eigen.eigenvectors.column(k);
        let coeff = v.dot(&gv) / lambda;
        x += coeff * v;
    }
    Ok(x.iter().copied().collect())
}

/// One preconditioned ascent step in logit space:
/// `theta' = theta + eta * pseudo_inverse(F) * gradient`, per agent, all
/// gradients evaluated at the incoming profile.
pub fn npg_step_via_fisher(
    game: &StaticGame,
    logits: &LogitProfile,
    params: &DynamicsParams,
) -> Result<LogitProfile> {
    let profile = logits.to_profile();
    let mut next = Vec::with_capacity(logits.num_agents());
    for agent in 0..logits.num_agents() {
        let g = policy_gradient(game, &profile, agent, params.tau)?;
        let fisher = fisher_matrix(profile.policy(agent));
        let direction = fisher_pseudo_inverse(&fisher, &g).map_err(|e| {
            Error::Numeric(format!("agent {agent}: {e}"))
        })?;
        let theta = logits.logits(agent);
        next.push(
            theta
                .iter()
                .zip(&direction)
                .map(|(&t, &d)| t + params.eta * d)
                .collect(),
        );
    }
    LogitProfile::new(next)
}
