//! Finite normal-form games with per-agent reward tensors, product policy
//! profiles, and the equilibrium gap functions used to measure convergence.
//!
//! Rewards are either stored densely (one `n`-dimensional tensor per agent)
//! or structurally as a network of pairwise zero-sum edge games. Both
//! representations answer the same queries; the structural form keeps the
//! cost of evaluation polynomial in the number of edges instead of
//! exponential in the number of agents.

use ndarray::{Array2, ArrayD, IxDyn};

use crate::error::{Error, Result};
use crate::num::{log_floored, log_softmax_slice, softmax_slice};

/// One pairwise zero-sum block of a network game: agent `a` receives
/// `matrix[(x, y)]` and agent `b` receives `-matrix[(x, y)]` when they play
/// actions `x` and `y`.
#[derive(Debug, Clone)]
pub struct EdgeGame {
    pub a: usize,
    pub b: usize,
    pub matrix: Array2<f64>,
}

#[derive(Debug, Clone)]
enum Payoff {
    /// One reward tensor per agent, indexed by the joint action.
    Dense(Vec<ArrayD<f64>>),
    /// Sum of pairwise zero-sum edge games, scaled by `1 / deg_max` so that
    /// rewards stay inside the declared range.
    Polymatrix { edges: Vec<EdgeGame>, deg_max: usize },
}

/// A finite `n`-agent game in normal form.
#[derive(Debug, Clone)]
pub struct StaticGame {
    action_sizes: Vec<usize>,
    reward_range: (f64, f64),
    payoff: Payoff,
}

impl StaticGame {
    /// Builds a densely represented game from one reward tensor per agent.
    /// Every tensor must have shape `action_sizes` and entries inside
    /// `reward_range`.
    pub fn from_rewards(rewards: Vec<ArrayD<f64>>, reward_range: (f64, f64)) -> Result<Self> {
        if rewards.is_empty() {
            return Err(Error::Parameter("game needs at least one agent".into()));
        }
        let shape: Vec<usize> = rewards[0].shape().to_vec();
        if shape.is_empty() || shape.iter().any(|&m| m == 0) {
            return Err(Error::Dimension(format!(
                "reward tensors must have positive extent in every axis, got {shape:?}"
            )));
        }
        if shape.len() != rewards.len() {
            return Err(Error::Dimension(format!(
                "{} agents but reward tensors have {} axes",
                rewards.len(),
                shape.len()
            )));
        }
        let (lo, hi) = reward_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::Parameter(format!(
                "invalid reward range [{lo}, {hi}]"
            )));
        }
        for (i, r) in rewards.iter().enumerate() {
            if r.shape() != shape.as_slice() {
                return Err(Error::Dimension(format!(
                    "agent {i} reward tensor has shape {:?}, expected {shape:?}",
                    r.shape()
                )));
            }
            for &v in r.iter() {
                if !v.is_finite() || v < lo || v > hi {
                    return Err(Error::Parameter(format!(
                        "agent {i} reward {v} outside declared range [{lo}, {hi}]"
                    )));
                }
            }
        }
        Ok(Self {
            action_sizes: shape,
            reward_range,
            payoff: Payoff::Dense(rewards),
        })
    }

    /// Builds a network game from pairwise zero-sum edges. Agent `e.a`
    /// receives `e.matrix` and agent `e.b` its negation; each agent's reward
    /// is the sum over its incident edges divided by the maximum degree.
    ///
    /// `declared_range` must be symmetric around zero and contain every edge
    /// entry; rewards are averages of signed entries, so they stay inside it
    /// as well.
    pub fn from_edges(
        action_sizes: Vec<usize>,
        edges: Vec<EdgeGame>,
        declared_range: (f64, f64),
    ) -> Result<Self> {
        let n = action_sizes.len();
        if n == 0 || action_sizes.iter().any(|&m| m == 0) {
            return Err(Error::Dimension(
                "network game needs agents with nonempty action sets".into(),
            ));
        }
        let (lo, hi) = declared_range;
        if !(lo.is_finite() && hi.is_finite() && lo == -hi && hi > 0.0) {
            return Err(Error::Parameter(format!(
                "edge reward range must be symmetric around zero, got [{lo}, {hi}]"
            )));
        }
        let mut degree = vec![0usize; n];
        for e in &edges {
            if e.a >= n || e.b >= n || e.a == e.b {
                return Err(Error::Dimension(format!(
                    "edge ({}, {}) invalid for {n} agents",
                    e.a, e.b
                )));
            }
            if e.matrix.nrows() != action_sizes[e.a] || e.matrix.ncols() != action_sizes[e.b] {
                return Err(Error::Dimension(format!(
                    "edge ({}, {}) matrix is {}x{}, expected {}x{}",
                    e.a,
                    e.b,
                    e.matrix.nrows(),
                    e.matrix.ncols(),
                    action_sizes[e.a],
                    action_sizes[e.b]
                )));
            }
            for &v in e.matrix.iter() {
                if !v.is_finite() || v < lo || v > hi {
                    return Err(Error::Parameter(format!(
                        "edge ({}, {}) entry {v} outside [{lo}, {hi}]",
                        e.a, e.b
                    )));
                }
            }
            degree[e.a] += 1;
            degree[e.b] += 1;
        }
        let deg_max = degree.iter().copied().max().unwrap_or(0).max(1);
        Ok(Self {
            action_sizes,
            reward_range: declared_range,
            payoff: Payoff::Polymatrix { edges, deg_max },
        })
    }

    pub fn num_agents(&self) -> usize {
        self.action_sizes.len()
    }

    pub fn action_sizes(&self) -> &[usize] {
        &self.action_sizes
    }

    /// Total number of actions across agents, `sum_i |A_i|`.
    pub fn sum_action_sizes(&self) -> usize {
        self.action_sizes.iter().sum()
    }

    /// Number of joint action profiles, `prod_i |A_i|`.
    pub fn num_joint_actions(&self) -> usize {
        self.action_sizes.iter().product()
    }

    /// Declared `[min, max]` range of rewards.
    pub fn reward_range(&self) -> (f64, f64) {
        self.reward_range
    }

    /// Flat row-major view of `agent`'s reward tensor when the game is
    /// densely stored; `None` for structured payoffs. Lets per-joint loops
    /// that already track a row-major index skip dynamic-rank indexing.
    pub(crate) fn dense_reward_slice(&self, agent: usize) -> Option<&[f64]> {
        match &self.payoff {
            Payoff::Dense(rewards) => rewards[agent].as_slice(),
            Payoff::Polymatrix { .. } => None,
        }
    }

    /// Reward of `agent` at the joint action `joint` (one action index per
    /// agent).
    pub fn reward(&self, agent: usize, joint: &[usize]) -> f64 {
        debug_assert_eq!(joint.len(), self.action_sizes.len());
        match &self.payoff {
            Payoff::Dense(rewards) => rewards[agent][IxDyn(joint)],
            Payoff::Polymatrix { edges, deg_max } => {
                let mut total = 0.0;
                for e in edges {
                    if e.a == agent {
                        total += e.matrix[(joint[e.a], joint[e.b])];
                    } else if e.b == agent {
                        total -= e.matrix[(joint[e.a], joint[e.b])];
                    }
                }
                total / *deg_max as f64
            }
        }
    }

    /// Edges of a network game, if this game is stored structurally.
    pub fn edges(&self) -> Option<(&[EdgeGame], usize)> {
        match &self.payoff {
            Payoff::Dense(_) => None,
            Payoff::Polymatrix { edges, deg_max } => Some((edges, *deg_max)),
        }
    }

    /// Materializes the reward tensors, converting a structural game into an
    /// equivalent dense one. Exponential in the number of agents; intended
    /// for cross-checks on small instances.
    pub fn to_dense(&self) -> Result<Self> {
        let shape = IxDyn(&self.action_sizes);
        let mut rewards = Vec::with_capacity(self.num_agents());
        for agent in 0..self.num_agents() {
            let mut tensor = ArrayD::zeros(shape.clone());
            let mut joint = vec![0usize; self.num_agents()];
            loop {
                tensor[IxDyn(&joint)] = self.reward(agent, &joint);
                if !next_joint(&mut joint, &self.action_sizes) {
                    break;
                }
            }
            rewards.push(tensor);
        }
        StaticGame::from_rewards(rewards, self.reward_range)
    }
}

/// Advances `joint` to the next joint action in row-major order (last agent
/// fastest), returning `false` after the last profile. Start from the
/// all-zeros joint action to enumerate every profile exactly once.
pub fn next_joint(joint: &mut [usize], sizes: &[usize]) -> bool {
    for i in (0..joint.len()).rev() {
        joint[i] += 1;
        if joint[i] < sizes[i] {
            return true;
        }
        joint[i] = 0;
    }
    false
}

/// A product distribution over joint actions: one strictly positive
/// probability vector per agent.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyProfile {
    policies: Vec<Vec<f64>>,
}

impl PolicyProfile {
    /// Normalizes and validates per-agent distributions. Entries must be
    /// finite and strictly positive; each vector is rescaled to sum to one.
    pub fn new(policies: Vec<Vec<f64>>) -> Result<Self> {
        if policies.is_empty() {
            return Err(Error::Parameter("profile needs at least one agent".into()));
        }
        let mut out = Vec::with_capacity(policies.len());
        for (i, p) in policies.into_iter().enumerate() {
            if p.is_empty() {
                return Err(Error::Dimension(format!("agent {i} has no actions")));
            }
            let mut sum = 0.0;
            for &v in &p {
                if !v.is_finite() || v <= 0.0 {
                    return Err(Error::Parameter(format!(
                        "agent {i} policy entry {v} is not strictly positive"
                    )));
                }
                sum += v;
            }
            if !sum.is_finite() || sum <= 0.0 {
                return Err(Error::Numeric(format!(
                    "agent {i} policy mass {sum} cannot be normalized"
                )));
            }
            out.push(p.into_iter().map(|v| v / sum).collect());
        }
        Ok(Self { policies: out })
    }

    /// The uniform profile over the given action sizes.
    pub fn uniform(action_sizes: &[usize]) -> Self {
        let policies = action_sizes
            .iter()
            .map(|&m| vec![1.0 / m as f64; m])
            .collect();
        Self { policies }
    }

    pub fn num_agents(&self) -> usize {
        self.policies.len()
    }

    pub fn policy(&self, agent: usize) -> &[f64] {
        &self.policies[agent]
    }

    pub fn policies(&self) -> &[Vec<f64>] {
        &self.policies
    }

    pub fn action_sizes(&self) -> Vec<usize> {
        self.policies.iter().map(Vec::len).collect()
    }

    /// Probability of a joint action under the product distribution.
    pub fn joint_probability(&self, joint: &[usize]) -> f64 {
        self.policies
            .iter()
            .zip(joint)
            .map(|(p, &a)| p[a])
            .product()
    }

    pub(crate) fn check_matches(&self, game: &StaticGame) -> Result<()> {
        if self.action_sizes() != game.action_sizes() {
            return Err(Error::Dimension(format!(
                "profile sizes {:?} do not match game sizes {:?}",
                self.action_sizes(),
                game.action_sizes()
            )));
        }
        Ok(())
    }
}

/// Per-agent equilibrium gaps plus their maximum.
#[derive(Debug, Clone)]
pub struct GapReport {
    pub per_agent: Vec<f64>,
    pub max_gap: f64,
    pub worst_agent: usize,
}

impl GapReport {
    fn from_gaps(per_agent: Vec<f64>) -> Self {
        // Gaps are nonnegative by definition; clamp away the tiny negative
        // values that cancellation can produce at an exact equilibrium.
        let per_agent: Vec<f64> = per_agent.into_iter().map(|g| g.max(0.0)).collect();
        let (worst_agent, max_gap) = per_agent
            .iter()
            .enumerate()
            .fold((0, 0.0_f64), |(bi, bv), (i, &v)| {
                if v > bv {
                    (i, v)
                } else {
                    (bi, bv)
                }
            });
        Self {
            per_agent,
            max_gap,
            worst_agent,
        }
    }
}

/// Expected reward of `agent` when everyone samples from `profile`.
pub fn expected_reward(game: &StaticGame, profile: &PolicyProfile, agent: usize) -> Result<f64> {
    check_agent(game, agent)?;
    profile.check_matches(game)?;
    match &game.payoff {
        Payoff::Dense(rewards) => {
            let mut total = 0.0;
            for (idx, &r) in rewards[agent].indexed_iter() {
                let mut w = 1.0;
                for (i, p) in profile.policies.iter().enumerate() {
                    w *= p[idx[i]];
                }
                total += w * r;
            }
            Ok(total)
        }
        Payoff::Polymatrix { edges, deg_max } => {
            let mut total = 0.0;
            for e in edges {
                let (own, other, sign) = if e.a == agent {
                    (e.a, e.b, 1.0)
                } else if e.b == agent {
                    (e.b, e.a, -1.0)
                } else {
                    continue;
                };
                let pi = profile.policy(own);
                let pj = profile.policy(other);
                let mut acc = 0.0;
                for x in 0..e.matrix.nrows() {
                    for y in 0..e.matrix.ncols() {
                        let (ia, ib) = (x, y);
                        let (wi, wj) = if e.a == own {
                            (pi[ia], pj[ib])
                        } else {
                            (pj[ia], pi[ib])
                        };
                        acc += wi * wj * e.matrix[(x, y)];
                    }
                }
                total += sign * acc;
            }
            Ok(total / *deg_max as f64)
        }
    }
}

/// Marginalized reward of `agent`: for each own action `a`, the expectation
/// of the reward over the other agents' policies with `agent` pinned to `a`.
pub fn marginalized_reward(
    game: &StaticGame,
    profile: &PolicyProfile,
    agent: usize,
) -> Result<Vec<f64>> {
    check_agent(game, agent)?;
    profile.check_matches(game)?;
    let m = game.action_sizes()[agent];
    match &game.payoff {
        Payoff::Dense(rewards) => {
            let mut out = vec![0.0; m];
            for (idx, &r) in rewards[agent].indexed_iter() {
                let mut w = 1.0;
                for (i, p) in profile.policies.iter().enumerate() {
                    if i != agent {
                        w *= p[idx[i]];
                    }
                }
                out[idx[agent]] += w * r;
            }
            Ok(out)
        }
        Payoff::Polymatrix { edges, deg_max } => {
            let mut out = vec![0.0; m];
            for e in edges {
                if e.a == agent {
                    let pj = profile.policy(e.b);
                    for x in 0..e.matrix.nrows() {
                        let mut acc = 0.0;
                        for y in 0..e.matrix.ncols() {
                            acc += e.matrix[(x, y)] * pj[y];
                        }
                        out[x] += acc;
                    }
                } else if e.b == agent {
                    let pj = profile.policy(e.a);
                    for y in 0..e.matrix.ncols() {
                        let mut acc = 0.0;
                        for x in 0..e.matrix.nrows() {
                            acc -= e.matrix[(x, y)] * pj[x];
                        }
                        out[y] += acc;
                    }
                }
            }
            for v in &mut out {
                *v /= *deg_max as f64;
            }
            Ok(out)
        }
    }
}

/// Shannon entropy `-sum_a p(a) ln p(a)` of a single policy.
pub fn entropy(policy: &[f64]) -> f64 {
    -policy.iter().map(|&p| p * log_floored(p)).sum::<f64>()
}

/// Entropy-regularized expected reward of `agent`:
/// expected reward plus `tau` times the entropy of the agent's own policy.
pub fn regularized_reward(
    game: &StaticGame,
    profile: &PolicyProfile,
    agent: usize,
    tau: f64,
) -> Result<f64> {
    check_tau_nonneg(tau)?;
    Ok(expected_reward(game, profile, agent)? + tau * entropy(profile.policy(agent)))
}

/// The softmax response `softmax(values / tau)`: the unique maximizer of
/// `<p, values> + tau * H(p)` over the simplex. Requires `tau > 0`.
pub fn soft_best_response(values: &[f64], tau: f64) -> Result<Vec<f64>> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::Parameter(format!(
            "soft best response needs finite tau > 0, got {tau}"
        )));
    }
    let scaled: Vec<f64> = values.iter().map(|&v| v / tau).collect();
    Ok(softmax_slice(&scaled))
}

/// Marginalized rewards for every agent at once.
pub(crate) fn all_marginals(game: &StaticGame, profile: &PolicyProfile) -> Result<Vec<Vec<f64>>> {
    (0..game.num_agents())
        .map(|agent| marginalized_reward(game, profile, agent))
        .collect()
}

pub(crate) fn qre_gap_from_marginals(
    profile: &PolicyProfile,
    marginals: &[Vec<f64>],
    tau: f64,
) -> GapReport {
    let gaps = profile
        .policies()
        .iter()
        .zip(marginals)
        .map(|(pi, rbar)| {
            let scaled: Vec<f64> = rbar.iter().map(|&v| v / tau).collect();
            let log_star = log_softmax_slice(&scaled);
            let kl: f64 = pi
                .iter()
                .zip(&log_star)
                .map(|(&p, &ls)| p * (log_floored(p) - ls))
                .sum();
            tau * kl
        })
        .collect();
    GapReport::from_gaps(gaps)
}

pub(crate) fn ne_gap_from_marginals(profile: &PolicyProfile, marginals: &[Vec<f64>]) -> GapReport {
    let gaps = profile
        .policies()
        .iter()
        .zip(marginals)
        .map(|(pi, rbar)| {
            let best = rbar.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let current: f64 = pi.iter().zip(rbar).map(|(&p, &r)| p * r).sum();
            best - current
        })
        .collect();
    GapReport::from_gaps(gaps)
}

/// Regularized equilibrium gap at temperature `tau > 0`.
///
/// For each agent the gap is `tau` times the KL divergence from the agent's
/// policy to its softmax response against the others, which equals the
/// improvement in regularized reward available by unilateral deviation.
pub fn qre_gap(game: &StaticGame, profile: &PolicyProfile, tau: f64) -> Result<GapReport> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::Parameter(format!(
            "equilibrium gap at temperature requires finite tau > 0, got {tau}"
        )));
    }
    let marginals = all_marginals(game, profile)?;
    Ok(qre_gap_from_marginals(profile, &marginals, tau))
}

/// Unregularized equilibrium gap: for each agent, the gain of the best pure
/// deviation over the current expected reward.
pub fn ne_gap(game: &StaticGame, profile: &PolicyProfile) -> Result<GapReport> {
    let marginals = all_marginals(game, profile)?;
    Ok(ne_gap_from_marginals(profile, &marginals))
}

fn check_agent(game: &StaticGame, agent: usize) -> Result<()> {
    if agent >= game.num_agents() {
        return Err(Error::Dimension(format!(
            "agent index {agent} out of range for {} agents",
            game.num_agents()
        )));
    }
    Ok(())
}

fn check_tau_nonneg(tau: f64) -> Result<()> {
    if !tau.is_finite() || tau < 0.0 {
        return Err(Error::Parameter(format!(
            "temperature must be finite and nonnegative, got {tau}"
        )));
    }
    Ok(())
}
