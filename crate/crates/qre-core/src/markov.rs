//! Tabular discounted stochastic games: exact policy evaluation, the
//! advantage-form multiplicative policy update, and a regularized gap
//! measured against per-agent soft best responses.
//!
//! Everything here is oracle-exact: expectations enumerate joint actions,
//! values come from direct linear solves, and the best-response value is
//! computed by soft value iteration on the single-agent decision process
//! obtained by freezing the other agents.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, Array3};

use crate::error::{Error, Result};
use crate::dynamics::DynamicsParams;
use crate::game::{entropy, next_joint, PolicyProfile, StaticGame};
use crate::num::{log_floored, log_sum_exp, softmax_slice};

/// Iteration cap for soft value iteration; generous for any discount the
/// validation admits.
const SOFT_VI_MAX_SWEEPS: usize = 1_000_000;

/// A finite discounted stochastic game: one stage game per state, a
/// row-stochastic transition kernel over (state, joint action) pairs, and an
/// initial state distribution used to scalarize values.
#[derive(Debug, Clone)]
pub struct MarkovGame {
    stage_games: Vec<StaticGame>,
    /// `kernel[(s, a, s')]` is the probability of moving to `s'` from `s`
    /// under joint action index `a` (row-major over the action sizes).
    kernel: Array3<f64>,
    discount: f64,
    initial_dist: Vec<f64>,
}

impl MarkovGame {
    pub fn new(
        stage_games: Vec<StaticGame>,
        kernel: Array3<f64>,
        discount: f64,
        initial_dist: Vec<f64>,
    ) -> Result<Self> {
        if stage_games.is_empty() {
            return Err(Error::Parameter("need at least one state".into()));
        }
        let sizes = stage_games[0].action_sizes().to_vec();
        for (s, g) in stage_games.iter().enumerate() {
            if g.action_sizes() != sizes {
                return Err(Error::Dimension(format!(
                    "state {s} has action sizes {:?}, expected {sizes:?}",
                    g.action_sizes()
                )));
            }
        }
        let states = stage_games.len();
        let joint: usize = sizes.iter().product();
        if kernel.dim() != (states, joint, states) {
            return Err(Error::Dimension(format!(
                "kernel has shape {:?}, expected ({states}, {joint}, {states})",
                kernel.dim()
            )));
        }
        for s in 0..states {
            for a in 0..joint {
                let mut sum = 0.0;
                for s2 in 0..states {
                    let p = kernel[(s, a, s2)];
                    if !p.is_finite() || p < 0.0 {
                        return Err(Error::Parameter(format!(
                            "kernel entry ({s}, {a}, {s2}) = {p} invalid"
                        )));
                    }
                    sum += p;
                }
                if (sum - 1.0).abs() > 1e-12 {
                    return Err(Error::Parameter(format!(
                        "kernel row ({s}, {a}) sums to {sum}"
                    )));
                }
            }
        }
        if !discount.is_finite() || !(0.0..1.0).contains(&discount) {
            return Err(Error::Parameter(format!(
                "discount must lie in [0, 1), got {discount}"
            )));
        }
        if initial_dist.len() != states {
            return Err(Error::Dimension(format!(
                "initial distribution has {} entries for {states} states",
                initial_dist.len()
            )));
        }
        let mass: f64 = initial_dist.iter().sum();
        if initial_dist.iter().any(|&p| !p.is_finite() || p < 0.0) || (mass - 1.0).abs() > 1e-12 {
            return Err(Error::Parameter(format!(
                "initial distribution must be a probability vector, mass {mass}"
            )));
        }
        Ok(Self {
            stage_games,
            kernel,
            discount,
            initial_dist,
        })
    }

    pub fn num_states(&self) -> usize {
        self.stage_games.len()
    }

    pub fn num_agents(&self) -> usize {
        self.stage_games[0].num_agents()
    }

    pub fn action_sizes(&self) -> &[usize] {
        self.stage_games[0].action_sizes()
    }

    pub fn num_joint_actions(&self) -> usize {
        self.stage_games[0].num_joint_actions()
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn initial_dist(&self) -> &[f64] {
        &self.initial_dist
    }

    pub fn stage_game(&self, state: usize) -> &StaticGame {
        &self.stage_games[state]
    }

    pub fn kernel(&self) -> &Array3<f64> {
        &self.kernel
    }

    /// Transition probabilities out of `(state, joint action index)`.
    pub fn kernel_row(&self, state: usize, joint_index: usize) -> Vec<f64> {
        (0..self.num_states())
            .map(|s2| self.kernel[(state, joint_index, s2)])
            .collect()
    }
}

/// Per-agent, per-state policies over own actions.
#[derive(Debug, Clone, PartialEq)]
pub struct StatePolicyProfile {
    /// Indexed `[agent][state][action]`.
    policies: Vec<Vec<Vec<f64>>>,
}

impl StatePolicyProfile {
    /// Validates and normalizes every per-state distribution.
    pub fn new(policies: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        if policies.is_empty() || policies[0].is_empty() {
            return Err(Error::Parameter(
                "state profile needs at least one agent and one state".into(),
            ));
        }
        let states = policies[0].len();
        let mut out = Vec::with_capacity(policies.len());
        for (agent, per_state) in policies.into_iter().enumerate() {
            if per_state.len() != states {
                return Err(Error::Dimension(format!(
                    "agent {agent} has {} states, expected {states}",
                    per_state.len()
                )));
            }
            // Route through the static validator for the entry checks.
            let normalized = PolicyProfile::new(per_state)
                .map_err(|e| Error::Parameter(format!("agent {agent}: {e}")))?;
            out.push(normalized.policies().to_vec());
        }
        Ok(Self { policies: out })
    }

    pub fn uniform(action_sizes: &[usize], num_states: usize) -> Self {
        let policies = action_sizes
            .iter()
            .map(|&m| vec![vec![1.0 / m as f64; m]; num_states])
            .collect();
        Self { policies }
    }

    pub fn num_agents(&self) -> usize {
        self.policies.len()
    }

    pub fn num_states(&self) -> usize {
        self.policies[0].len()
    }

    pub fn policy(&self, agent: usize, state: usize) -> &[f64] {
        &self.policies[agent][state]
    }

    /// The static profile played at one state.
    pub fn at_state(&self, state: usize) -> PolicyProfile {
        PolicyProfile::new(
            self.policies
                .iter()
                .map(|per_state| per_state[state].clone())
                .collect(),
        )
        .expect("stored policies are valid")
    }

    fn check_matches(&self, mgame: &MarkovGame) -> Result<()> {
        if self.num_agents() != mgame.num_agents() || self.num_states() != mgame.num_states() {
            return Err(Error::Dimension(format!(
                "profile is {} agents x {} states, game is {} x {}",
                self.num_agents(),
                self.num_states(),
                mgame.num_agents(),
                mgame.num_states()
            )));
        }
        for (agent, &m) in mgame.action_sizes().iter().enumerate() {
            for state in 0..self.num_states() {
                if self.policy(agent, state).len() != m {
                    return Err(Error::Dimension(format!(
                        "agent {agent} state {state} policy has {} actions, expected {m}",
                        self.policy(agent, state).len()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Joint-action distribution at each state: `weights[s][a]` with `a` the
/// row-major joint index.
fn joint_weights(mgame: &MarkovGame, profile: &StatePolicyProfile) -> Vec<Vec<f64>> {
    let sizes = mgame.action_sizes().to_vec();
    let states = mgame.num_states();
    let mut out = Vec::with_capacity(states);
    for s in 0..states {
        let mut weights = Vec::with_capacity(mgame.num_joint_actions());
        let mut joint = vec![0usize; sizes.len()];
        loop {
            let w: f64 = joint
                .iter()
                .enumerate()
                .map(|(i, &a)| profile.policy(i, s)[a])
                .product();
            weights.push(w);
            if !next_joint(&mut joint, &sizes) {
                break;
            }
        }
        out.push(weights);
    }
    out
}

/// Discounted values of the profile for every agent, one vector over states
/// per agent. Each agent's per-state reward is its expected stage reward
/// plus `tau` times the entropy of its *own* policy at that state; the
/// linear system `V = r + discount * P V` is solved directly.
pub fn evaluate_policy(
    mgame: &MarkovGame,
    profile: &StatePolicyProfile,
    tau: f64,
) -> Result<Vec<Vec<f64>>> {
    if !tau.is_finite() || tau < 0.0 {
        return Err(Error::Parameter(format!(
            "temperature must be finite and nonnegative, got {tau}"
        )));
    }
    profile.check_matches(mgame)?;
    let states = mgame.num_states();
    let joint_count = mgame.num_joint_actions();
    let weights = joint_weights(mgame, profile);

    // Policy-induced state chain.
    let mut chain = DMatrix::<f64>::zeros(states, states);
    for s in 0..states {
        for a in 0..joint_count {
            let w = weights[s][a];
            if w == 0.0 {
                continue;
            }
            for s2 in 0..states {
                chain[(s, s2)] += w * mgame.kernel[(s, a, s2)];
            }
        }
    }
    let system = DMatrix::<f64>::identity(states, states) - mgame.discount * &chain;
    let lu = system.lu();

    let sizes = mgame.action_sizes().to_vec();
    let mut values = Vec::with_capacity(mgame.num_agents());
    for agent in 0..mgame.num_agents() {
        let mut reward = DVector::<f64>::zeros(states);
        for s in 0..states {
            let stage = &mgame.stage_games[s];
            let mut acc = 0.0;
            if let Some(flat) = stage.dense_reward_slice(agent) {
                for (idx, &w) in weights[s].iter().enumerate() {
                    if w != 0.0 {
                        acc += w * flat[idx];
                    }
                }
            } else {
                let mut joint = vec![0usize; sizes.len()];
                let mut idx = 0;
                loop {
                    let w = weights[s][idx];
                    if w != 0.0 {
                        acc += w * stage.reward(agent, &joint);
                    }
                    idx += 1;
                    if !next_joint(&mut joint, &sizes) {
                        break;
                    }
                }
            }
            reward[s] = acc + tau * entropy(profile.policy(agent, s));
        }
        let v = lu.solve(&reward).ok_or_else(|| {
            Error::Numeric("singular policy-evaluation system; kernel invalid".into())
        })?;
        values.push(v.iter().copied().collect());
    }
    Ok(values)
}

/// The single-agent decision process seen by `agent` when the other agents'
/// per-state policies are frozen: expected stage rewards (states x own
/// actions) and expected transitions (states x own actions x states).
fn induced_mdp(
    mgame: &MarkovGame,
    profile: &StatePolicyProfile,
    agent: usize,
) -> (Array2<f64>, Array3<f64>) {
    let states = mgame.num_states();
    let sizes = mgame.action_sizes().to_vec();
    let m = sizes[agent];
    let joint_count = mgame.num_joint_actions();
    let mut rewards = Array2::<f64>::zeros((states, m));
    let mut transitions = Array3::<f64>::zeros((states, m, states));
    let kernel_flat = mgame.kernel.as_slice().expect("standard layout");
    let trans_flat = transitions.as_slice_mut().expect("standard layout");
    for s in 0..states {
        let stage = &mgame.stage_games[s];
        let reward_flat = stage.dense_reward_slice(agent);
        let rows: Vec<&[f64]> = (0..sizes.len())
            .map(|i| profile.policy(i, s))
            .collect();
        let mut joint = vec![0usize; sizes.len()];
        let mut idx = 0;
        loop {
            let mut w_other = 1.0;
            for (i, &a) in joint.iter().enumerate() {
                if i != agent {
                    w_other *= rows[i][a];
                }
            }
            let own = joint[agent];
            if w_other != 0.0 {
                let r = match reward_flat {
                    Some(flat) => flat[idx],
                    None => stage.reward(agent, &joint),
                };
                rewards[(s, own)] += w_other * r;
                let src = &kernel_flat[(s * joint_count + idx) * states..][..states];
                let dst = &mut trans_flat[(s * m + own) * states..][..states];
                for (d, &p) in dst.iter_mut().zip(src) {
                    *d += w_other * p;
                }
            }
            idx += 1;
            if !next_joint(&mut joint, &sizes) {
                break;
            }
        }
    }
    (rewards, transitions)
}

/// Marginalized advantage table of `agent`, indexed (state, own action):
/// the expected one-step reward plus discounted continuation value of
/// pinning the own action, centered so that its mean under the agent's own
/// policy is zero at every state. Continuation values include the agent's
/// entropy bonus (they come from [`evaluate_policy`] at the same `tau`).
pub fn marginalized_advantage(
    mgame: &MarkovGame,
    profile: &StatePolicyProfile,
    agent: usize,
    tau: f64,
) -> Result<Array2<f64>> {
    if agent >= mgame.num_agents() {
        return Err(Error::Dimension(format!(
            "agent {agent} out of range for {} agents",
            mgame.num_agents()
        )));
    }
    let values = evaluate_policy(mgame, profile, tau)?;
    Ok(advantage_from_values(mgame, profile, agent, &values[agent]))
}

fn advantage_from_values(
    mgame: &MarkovGame,
    profile: &StatePolicyProfile,
    agent: usize,
    values: &[f64],
) -> Array2<f64> {
    let (rewards, transitions) = induced_mdp(mgame, profile, agent);
    let states = mgame.num_states();
    let m = mgame.action_sizes()[agent];
    let mut q = rewards;
    for s in 0..states {
        for a in 0..m {
            let mut cont = 0.0;
            for s2 in 0..states {
                cont += transitions[(s, a, s2)] * values[s2];
            }
            q[(s, a)] += mgame.discount * cont;
        }
        let pi = profile.policy(agent, s);
        let baseline: f64 = (0..m).map(|a| pi[a] * q[(s, a)]).sum();
        for a in 0..m {
            q[(s, a)] -= baseline;
        }
    }
    q
}

/// Options for the stochastic-game update.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MarkovOptions {
    /// Also subtract `tau * log pi(a|s)` inside the update exponent. The
    /// default follows the plain advantage rule; this variant folds the
    /// regularizer into the advantage instead.
    pub entropy_adjusted_exponent: bool,
}

/// One synchronous update of every agent's per-state policy:
///
/// ```text
/// pi'(a|s)  ∝  pi(a|s)^(1 - eta*tau) * exp(eta / (1 - discount) * A(s, a))
/// ```
///
/// with `A` the marginalized advantage of the incoming profile.
pub fn markov_npg_step(
    mgame: &MarkovGame,
    profile: &StatePolicyProfile,
    params: &DynamicsParams,
) -> Result<StatePolicyProfile> {
    markov_npg_step_with(mgame, profile, params, MarkovOptions::default())
}

/// [`markov_npg_step`] with explicit [`MarkovOptions`].
pub fn markov_npg_step_with(
    mgame: &MarkovGame,
    profile: &StatePolicyProfile,
    params: &DynamicsParams,
    opts: MarkovOptions,
) -> Result<StatePolicyProfile> {
    profile.check_matches(mgame)?;
    let values = evaluate_policy(mgame, profile, params.tau)?;
    let keep = (1.0 - params.eta * params.tau).max(0.0);
    let scale = params.eta / (1.0 - mgame.discount);
    let mut next = Vec::with_capacity(mgame.num_agents());
    for agent in 0..mgame.num_agents() {
        let advantage = advantage_from_values(mgame, profile, agent, &values[agent]);
        let mut per_state = Vec::with_capacity(mgame.num_states());
        for s in 0..mgame.num_states() {
            let pi = profile.policy(agent, s);
            let logits: Vec<f64> = pi
                .iter()
                .enumerate()
                .map(|(a, &p)| {
                    let mut adv = advantage[(s, a)];
                    if opts.entropy_adjusted_exponent {
                        adv -= params.tau * log_floored(p);
                    }
                    keep * log_floored(p) + scale * adv
                })
                .collect();
            let stepped = softmax_slice(&logits);
            if stepped.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!(
                    "update produced non-finite policy at state {s}, agent {agent}"
                )));
            }
            per_state.push(stepped);
        }
        next.push(per_state);
    }
    StatePolicyProfile::new(next)
}

/// Optimal regularized values of a single-agent decision process, found by
/// iterating the soft Bellman operator
/// `V(s) <- tau * log sum_a exp(Q(s, a) / tau)` with
/// `Q = rewards + discount * transitions V` until successive iterates differ
/// by at most `tol` in sup norm.
#[derive(Debug, Clone)]
pub struct ValueReport {
    pub values: Vec<f64>,
    /// Sup-norm difference after each sweep; a discount-rate contraction.
    pub sup_diffs: Vec<f64>,
    pub sweeps: usize,
}

pub fn soft_value_iteration(
    rewards: &Array2<f64>,
    transitions: &Array3<f64>,
    tau: f64,
    discount: f64,
    tol: f64,
) -> Result<ValueReport> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::Parameter(format!(
            "soft value iteration requires finite tau > 0, got {tau}"
        )));
    }
    let (states, actions) = rewards.dim();
    // Hot loop: the sweep count scales like log(tol)/log(discount), so work
    // on the contiguous backing slices instead of checked 2-d/3-d indexing.
    let rewards_std = rewards.as_standard_layout();
    let transitions_std = transitions.as_standard_layout();
    let reward_flat = rewards_std.as_slice().expect("standard layout");
    let kernel_flat = transitions_std.as_slice().expect("standard layout");
    let mut v = vec![0.0; states];
    let mut sup_diffs = Vec::new();
    for sweep in 1..=SOFT_VI_MAX_SWEEPS {
        let mut next = vec![0.0; states];
        let mut scaled = vec![0.0; actions];
        for s in 0..states {
            for a in 0..actions {
                let mut q = reward_flat[s * actions + a];
                let row = &kernel_flat[(s * actions + a) * states..(s * actions + a + 1) * states];
                for (s2, &p) in row.iter().enumerate() {
                    q += discount * p * v[s2];
                }
                scaled[a] = q / tau;
            }
            next[s] = tau * log_sum_exp(&scaled);
        }
        let diff = v
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        sup_diffs.push(diff);
        v = next;
        if diff <= tol {
            return Ok(ValueReport {
                values: v,
                sup_diffs,
                sweeps: sweep,
            });
        }
    }
    Err(Error::NoConvergence(format!(
        "soft value iteration exceeded {SOFT_VI_MAX_SWEEPS} sweeps (discount {discount})"
    )))
}

/// Regularized gap of a state profile: for each agent, how much scalarized
/// value (under the game's initial state distribution) the agent gives up
/// relative to its optimal regularized response against the frozen others.
///
/// The best-response value solves the induced single-agent process by soft
/// value iteration to sup-norm tolerance 1e-12. The definition of this gap
/// (soft best response, initial-distribution weighting) is this library's
/// own; outputs that report it are labeled accordingly.
pub fn markov_qre_gap(
    mgame: &MarkovGame,
    profile: &StatePolicyProfile,
    tau: f64,
) -> Result<GapReportMarkov> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::Parameter(format!(
            "regularized gap requires finite tau > 0, got {tau}"
        )));
    }
    profile.check_matches(mgame)?;
    let values = evaluate_policy(mgame, profile, tau)?;
    let rho = mgame.initial_dist();
    let mut per_agent = Vec::with_capacity(mgame.num_agents());
    for agent in 0..mgame.num_agents() {
        let (rewards, transitions) = induced_mdp(mgame, profile, agent);
        let best = soft_value_iteration(&rewards, &transitions, tau, mgame.discount, 1e-12)?;
        let current: f64 = rho.iter().zip(&values[agent]).map(|(&p, &v)| p * v).sum();
        let optimal: f64 = rho.iter().zip(&best.values).map(|(&p, &v)| p * v).sum();
        per_agent.push((optimal - current).max(0.0));
    }
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
    Ok(GapReportMarkov {
        per_agent,
        max_gap,
        worst_agent,
    })
}

/// Per-agent regularized gaps for a stochastic game.
#[derive(Debug, Clone)]
pub struct GapReportMarkov {
    pub per_agent: Vec<f64>,
    pub max_gap: f64,
    pub worst_agent: usize,
}

/// Metrics recorded at one stochastic-game iterate.
#[derive(Debug, Clone, Copy)]
pub struct MarkovRecord {
    pub iter: usize,
    pub markov_qre_gap: f64,
    pub wall_time_ms: f64,
}

/// Output of [`run_markov`].
#[derive(Debug, Clone)]
pub struct MarkovTrace {
    pub records: Vec<MarkovRecord>,
    pub final_profile: StatePolicyProfile,
    pub converged: bool,
}

/// Runs the stochastic-game dynamics from `initial`, recording the
/// regularized gap at every visited iterate (including the first and last).
/// Requires `tau > 0`; there is no a-priori bound column because the
/// geometric certificate covers only the static case.
pub fn run_markov(
    mgame: &MarkovGame,
    initial: &StatePolicyProfile,
    params: &DynamicsParams,
) -> Result<MarkovTrace> {
    run_markov_with(mgame, initial, params, MarkovOptions::default())
}

/// [`run_markov`] with explicit [`MarkovOptions`].
pub fn run_markov_with(
    mgame: &MarkovGame,
    initial: &StatePolicyProfile,
    params: &DynamicsParams,
    opts: MarkovOptions,
) -> Result<MarkovTrace> {
    let mut profile = initial.clone();
    profile.check_matches(mgame)?;
    let start = Instant::now();
    let mut records = Vec::with_capacity(params.max_iters.min(1 << 20) + 1);
    let mut converged = false;
    for iter in 0..=params.max_iters {
        let gap = markov_qre_gap(mgame, &profile, params.tau)?.max_gap;
        records.push(MarkovRecord {
            iter,
            markov_qre_gap: gap,
            wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
        });
        if gap < params.stop_gap {
            converged = true;
            break;
        }
        if iter == params.max_iters {
            break;
        }
        profile = markov_npg_step_with(mgame, &profile, params, opts)?;
    }
    Ok(MarkovTrace {
        records,
        final_profile: profile,
        converged,
    })
}
