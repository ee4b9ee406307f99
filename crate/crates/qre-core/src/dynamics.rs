//! The entropy-regularized independent natural policy gradient iteration,
//! its geometric convergence certificate, and trajectory recording.
//!
//! Every agent updates synchronously by the multiplicative rule
//!
//! ```text
//! pi'(a)  ∝  pi(a)^(1 - eta*tau) * exp(eta * rbar(a))
//! ```
//!
//! where `rbar` is the agent's marginalized reward against the *current*
//! policies of the others. The step is carried out in the log domain and
//! normalized with log-sum-exp, so iterates remain valid (interior)
//! distributions even when `eta * rbar` spans hundreds of nats.
//!
//! The auxiliary sequence `xi` tracks the same recursion applied to
//! unnormalized log weights. Its distance to `rbar / tau` contracts at the
//! factor returned by [`contraction_factor`], which is what powers the
//! a-priori bound [`theoretical_bound`] on the equilibrium gap.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::game::{
    all_marginals, ne_gap_from_marginals, qre_gap_from_marginals, PolicyProfile, StaticGame,
};
use crate::num::{log_floored, log_softmax_slice, log_sum_exp, softmax_slice, sup_norm_diff};

/// Tolerance by which `eta * tau` may exceed one: `fl(1/x) * x` can round one
/// ulp above 1 for admissible step sizes, and the update is still well
/// defined there (the retention exponent is clamped at zero).
const ETA_TAU_SLACK: f64 = 1e-9;

/// Step size, temperature, and stopping controls for one run.
#[derive(Debug, Clone, Copy)]
pub struct DynamicsParams {
    /// Step size `eta > 0`.
    pub eta: f64,
    /// Entropy temperature `tau >= 0`; zero disables regularization.
    pub tau: f64,
    /// Hard cap on the number of update steps.
    pub max_iters: usize,
    /// Stop once the primary gap falls below this threshold.
    pub stop_gap: f64,
}

impl DynamicsParams {
    pub const DEFAULT_MAX_ITERS: usize = 10_000;
    pub const DEFAULT_STOP_GAP: f64 = 1e-12;

    /// Validates `eta > 0`, `tau >= 0`, and `eta * tau <= 1` (up to rounding
    /// slack), with the default iteration cap and stop threshold.
    pub fn new(eta: f64, tau: f64) -> Result<Self> {
        Self::with_limits(eta, tau, Self::DEFAULT_MAX_ITERS, Self::DEFAULT_STOP_GAP)
    }

    pub fn with_limits(eta: f64, tau: f64, max_iters: usize, stop_gap: f64) -> Result<Self> {
        if !eta.is_finite() || eta <= 0.0 {
            return Err(Error::Parameter(format!(
                "step size must be finite and positive, got {eta}"
            )));
        }
        if !tau.is_finite() || tau < 0.0 {
            return Err(Error::Parameter(format!(
                "temperature must be finite and nonnegative, got {tau}"
            )));
        }
        if eta * tau > 1.0 + ETA_TAU_SLACK {
            return Err(Error::Parameter(format!(
                "eta * tau = {} exceeds 1; the retention exponent would be negative",
                eta * tau
            )));
        }
        if max_iters == 0 {
            return Err(Error::Parameter("max_iters must be at least 1".into()));
        }
        if !stop_gap.is_finite() || stop_gap < 0.0 {
            return Err(Error::Parameter(format!(
                "stop_gap must be finite and nonnegative, got {stop_gap}"
            )));
        }
        Ok(Self {
            eta,
            tau,
            max_iters,
            stop_gap,
        })
    }

    /// Exponent on the current policy in the multiplicative update,
    /// `max(0, 1 - eta * tau)`.
    fn retention(&self) -> f64 {
        (1.0 - self.eta * self.tau).max(0.0)
    }
}

/// Largest admissible-by-default step size for the given game size and
/// temperature: `1 / (2 * (tau - 2 * sum_i |A_i|))`. Requires the
/// temperature to clear `2 * sum_i |A_i|`, the regime in which the iteration
/// is a contraction.
pub fn default_learning_rate(action_sizes: &[usize], tau: f64) -> Result<f64> {
    let total: usize = action_sizes.iter().sum();
    let threshold = 2.0 * total as f64;
    if !tau.is_finite() || tau <= threshold {
        return Err(Error::Parameter(format!(
            "temperature {tau} must exceed twice the total action count ({threshold}) \
             for the default step size"
        )));
    }
    Ok(1.0 / (2.0 * (tau - threshold)))
}

/// Contraction factor `rho = 1 - eta * tau + 2 * eta * sum_i |A_i|` of the
/// auxiliary recursion. Meaningful as a convergence rate only when it lies
/// in `[0, 1)`.
pub fn contraction_factor(action_sizes: &[usize], eta: f64, tau: f64) -> f64 {
    let total: usize = action_sizes.iter().sum();
    1.0 - eta * tau + 2.0 * eta * total as f64
}

/// Sup-norm distance between the profile's log policies and the logs of
/// their softmax responses, maximized over agents:
/// `max_i || log pi_i - log softmax(rbar_i / tau) ||_inf`. This is the
/// constant in the a-priori bound, and equals the auxiliary residual of a
/// freshly initialized [`AuxSequence`].
pub fn initial_log_distance(game: &StaticGame, profile: &PolicyProfile, tau: f64) -> Result<f64> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::Parameter(format!(
            "log distance to softmax targets requires finite tau > 0, got {tau}"
        )));
    }
    let marginals = all_marginals(game, profile)?;
    let mut worst = 0.0_f64;
    for (pi, rbar) in profile.policies().iter().zip(&marginals) {
        let scaled: Vec<f64> = rbar.iter().map(|&r| r / tau).collect();
        let log_star = log_softmax_slice(&scaled);
        for (&p, &ls) in pi.iter().zip(&log_star) {
            worst = worst.max((log_floored(p) - ls).abs());
        }
    }
    Ok(worst)
}

/// A-priori gap bound after `k` steps: `2 * tau * rho^k * initial_distance`,
/// where `initial_distance` is the starting sup-norm distance between the
/// log policies and their softmax targets (see [`initial_log_distance`]).
///
/// Returns NaN when the hypotheses behind the bound fail: `tau` not above
/// twice the total action count, or a step size at which `rho >= 1`.
pub fn theoretical_bound(
    action_sizes: &[usize],
    eta: f64,
    tau: f64,
    initial_distance: f64,
    k: u32,
) -> f64 {
    let total: usize = action_sizes.iter().sum();
    if !(tau > 2.0 * total as f64) || !(eta > 0.0) {
        return f64::NAN;
    }
    let rho = contraction_factor(action_sizes, eta, tau);
    if !(rho < 1.0) {
        return f64::NAN;
    }
    2.0 * tau * rho.powi(k as i32) * initial_distance
}

/// One synchronous update of every agent's policy. All marginalized rewards
/// are evaluated at the incoming profile before any agent moves.
pub fn npg_step(
    game: &StaticGame,
    profile: &PolicyProfile,
    params: &DynamicsParams,
) -> Result<PolicyProfile> {
    let marginals = all_marginals(game, profile)?;
    npg_step_with_marginals(profile, &marginals, params)
}

pub(crate) fn npg_step_with_marginals(
    profile: &PolicyProfile,
    marginals: &[Vec<f64>],
    params: &DynamicsParams,
) -> Result<PolicyProfile> {
    let keep = params.retention();
    let mut next = Vec::with_capacity(profile.num_agents());
    for (pi, rbar) in profile.policies().iter().zip(marginals) {
        let logits: Vec<f64> = pi
            .iter()
            .zip(rbar)
            .map(|(&p, &r)| keep * log_floored(p) + params.eta * r)
            .collect();
        next.push(softmax_slice(&logits));
    }
    PolicyProfile::new(next)
}

/// Per-agent unnormalized log weights tracked alongside the policy iterates.
#[derive(Debug, Clone)]
pub struct AuxSequence {
    log_xi: Vec<Vec<f64>>,
}

impl AuxSequence {
    pub fn log_weights(&self, agent: usize) -> &[f64] {
        &self.log_xi[agent]
    }
}

/// Initial auxiliary weights `log xi_i = log pi_i + log || exp(rbar_i / tau) ||_1`,
/// chosen so the weights renormalize to the starting policies while sitting
/// on the same additive scale as `rbar / tau`. Requires `tau > 0`.
pub fn aux_init(game: &StaticGame, profile: &PolicyProfile, tau: f64) -> Result<AuxSequence> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::Parameter(format!(
            "auxiliary sequence requires finite tau > 0, got {tau}"
        )));
    }
    let marginals = all_marginals(game, profile)?;
    Ok(aux_init_with_marginals(profile, &marginals, tau))
}

pub(crate) fn aux_init_with_marginals(
    profile: &PolicyProfile,
    marginals: &[Vec<f64>],
    tau: f64,
) -> AuxSequence {
    let log_xi = profile
        .policies()
        .iter()
        .zip(marginals)
        .map(|(pi, rbar)| {
            let scaled: Vec<f64> = rbar.iter().map(|&r| r / tau).collect();
            let shift = log_sum_exp(&scaled);
            pi.iter().map(|&p| log_floored(p) + shift).collect()
        })
        .collect();
    AuxSequence { log_xi }
}

/// Advances the auxiliary weights by the same linear recursion the policies
/// follow: `log xi' = (1 - eta*tau) * log xi + eta * rbar`, with `rbar`
/// evaluated at the policy iterate the weights shadow.
pub fn aux_step(aux: &AuxSequence, marginals: &[Vec<f64>], params: &DynamicsParams) -> AuxSequence {
    let keep = params.retention();
    let log_xi = aux
        .log_xi
        .iter()
        .zip(marginals)
        .map(|(xi, rbar)| {
            xi.iter()
                .zip(rbar)
                .map(|(&x, &r)| keep * x + params.eta * r)
                .collect()
        })
        .collect();
    AuxSequence { log_xi }
}

/// Sup-norm distance of the auxiliary weights from their moving target:
/// `max_i || log xi_i - rbar_i / tau ||_inf`.
pub fn aux_residual(aux: &AuxSequence, marginals: &[Vec<f64>], tau: f64) -> f64 {
    aux.log_xi
        .iter()
        .zip(marginals)
        .map(|(xi, rbar)| {
            let scaled: Vec<f64> = rbar.iter().map(|&r| r / tau).collect();
            sup_norm_diff(xi, &scaled)
        })
        .fold(0.0, f64::max)
}

/// Metrics recorded at one policy iterate.
#[derive(Debug, Clone, Copy)]
pub struct IterateRecord {
    /// Iterate index; 0 is the initial profile, before any update.
    pub iter: usize,
    /// Regularized gap at the run temperature. Equal to `ne_gap` when the
    /// run is unregularized (`tau = 0`).
    pub qre_gap: f64,
    /// Unregularized best-response gap.
    pub ne_gap: f64,
    /// A-priori geometric bound on `qre_gap`; NaN when the contraction
    /// hypotheses do not hold or `tau = 0`.
    pub bound: f64,
    /// Auxiliary-sequence residual; NaN when `tau = 0`.
    pub aux_residual: f64,
    /// Milliseconds elapsed since the start of the run.
    pub wall_time_ms: f64,
}

/// Full output of a run: one record per visited iterate plus the final
/// profile.
#[derive(Debug, Clone)]
pub struct RunTrace {
    pub records: Vec<IterateRecord>,
    pub final_profile: PolicyProfile,
    /// True when the primary gap dropped below `stop_gap` before the
    /// iteration cap.
    pub converged: bool,
    /// Contraction factor of the run; NaN when the hypotheses fail or
    /// `tau = 0`.
    pub rho: f64,
    /// Auxiliary residual at iterate 0 (the constant in the a-priori
    /// bound); NaN when `tau = 0`.
    pub initial_residual: f64,
}

/// Runs the dynamics from `initial`, recording gaps at every visited
/// iterate including the starting profile and the final one. Stops early
/// once the primary gap (the regularized gap, or the best-response gap when
/// `tau = 0`) falls below `params.stop_gap`.
pub fn run(game: &StaticGame, initial: &PolicyProfile, params: &DynamicsParams) -> Result<RunTrace> {
    let mut profile = initial.clone();
    profile.check_matches(game)?;
    let tau = params.tau;
    let regularized = tau > 0.0;

    let total_actions = game.sum_action_sizes() as f64;
    let rho_raw = contraction_factor(game.action_sizes(), params.eta, tau);
    let bound_valid = regularized && tau > 2.0 * total_actions && rho_raw < 1.0;
    let rho = if bound_valid { rho_raw } else { f64::NAN };

    let start = Instant::now();
    let mut marginals = all_marginals(game, &profile)?;
    let mut aux = regularized.then(|| aux_init_with_marginals(&profile, &marginals, tau));
    let initial_residual = match &aux {
        Some(a) => aux_residual(a, &marginals, tau),
        None => f64::NAN,
    };

    let mut records = Vec::with_capacity(params.max_iters.min(1 << 20) + 1);
    let mut converged = false;
    // bound_k = 2 * tau * rho^k * initial_residual, advanced multiplicatively.
    let mut bound_k = if bound_valid {
        2.0 * tau * initial_residual
    } else {
        f64::NAN
    };

    for iter in 0..=params.max_iters {
        let ne = ne_gap_from_marginals(&profile, &marginals);
        let qre = if regularized {
            qre_gap_from_marginals(&profile, &marginals, tau).max_gap
        } else {
            ne.max_gap
        };
        let residual = match &aux {
            Some(a) => aux_residual(a, &marginals, tau),
            None => f64::NAN,
        };
        records.push(IterateRecord {
            iter,
            qre_gap: qre,
            ne_gap: ne.max_gap,
            bound: bound_k,
            aux_residual: residual,
            wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
        });
        if qre < params.stop_gap {
            converged = true;
            break;
        }
        if iter == params.max_iters {
            break;
        }
        profile = npg_step_with_marginals(&profile, &marginals, params)?;
        if let Some(a) = aux.take() {
            aux = Some(aux_step(&a, &marginals, params));
        }
        marginals = all_marginals(game, &profile)?;
        bound_k *= rho_raw;
    }

    Ok(RunTrace {
        records,
        final_profile: profile,
        converged,
        rho,
        initial_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{marginalized_reward, soft_best_response};
    use crate::generators::{random_game, random_profile, GameKind, GameSpec};
    use crate::num::l1_diff;
    use ndarray::{ArrayD, IxDyn};

    fn dense_game(shape: &[usize], data: Vec<Vec<f64>>) -> StaticGame {
        let rewards = data
            .into_iter()
            .map(|d| ArrayD::from_shape_vec(IxDyn(shape), d).unwrap())
            .collect();
        StaticGame::from_rewards(rewards, (-1.0, 1.0)).unwrap()
    }

    fn small_spec(seed: u64) -> GameSpec {
        GameSpec {
            kind: GameKind::Random,
            num_agents: 3,
            action_sizes: vec![3, 4, 5],
            num_states: 1,
            discount: 0.0,
            edges: vec![],
            edge_half_width: 0.5,
            seed,
        }
    }

    /// Multiplicative-weights oracle in the probability domain, written
    /// independently of the log-domain implementation.
    fn mwu_oracle(
        game: &StaticGame,
        profile: &PolicyProfile,
        eta: f64,
        tau: f64,
    ) -> PolicyProfile {
        let mut next = Vec::new();
        for agent in 0..game.num_agents() {
            let rbar = marginalized_reward(game, profile, agent).unwrap();
            let pi = profile.policy(agent);
            let weights: Vec<f64> = pi
                .iter()
                .zip(&rbar)
                .map(|(&p, &r)| p.powf(1.0 - eta * tau) * (eta * r).exp())
                .collect();
            next.push(weights);
        }
        PolicyProfile::new(next).unwrap()
    }

    #[test]
    fn step_matches_probability_domain_oracle() {
        for seed in [1, 2, 3] {
            let game = random_game(&small_spec(seed)).unwrap();
            let profile = random_profile(game.action_sizes(), seed + 100);
            for (eta, tau) in [(0.05, 3.0), (0.2, 1.0), (0.01, 48.0)] {
                let params = DynamicsParams::new(eta, tau).unwrap();
                let stepped = npg_step(&game, &profile, &params).unwrap();
                let oracle = mwu_oracle(&game, &profile, eta, tau);
                for agent in 0..3 {
                    let d = sup_norm_diff(stepped.policy(agent), oracle.policy(agent));
                    assert!(d < 1e-12, "seed {seed} eta {eta} tau {tau}: diff {d}");
                }
            }
        }
    }

    #[test]
    fn zero_temperature_step_is_hedge() {
        let game = random_game(&small_spec(9)).unwrap();
        let profile = random_profile(game.action_sizes(), 42);
        let eta = 0.3;
        let params = DynamicsParams::new(eta, 0.0).unwrap();
        let stepped = npg_step(&game, &profile, &params).unwrap();
        for agent in 0..3 {
            let rbar = marginalized_reward(&game, &profile, agent).unwrap();
            let weights: Vec<f64> = profile
                .policy(agent)
                .iter()
                .zip(&rbar)
                .map(|(&p, &r)| p * (eta * r).exp())
                .collect();
            let z: f64 = weights.iter().sum();
            for (a, &w) in weights.iter().enumerate() {
                assert!((stepped.policy(agent)[a] - w / z).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn step_is_synchronous() {
        // Agent 1's update must see agent 0's *old* policy. Compare a joint
        // step against a sequential one on a game where they differ.
        let game = dense_game(
            &[2, 2],
            vec![
                vec![1.0, 0.0, 0.0, 1.0],
                vec![0.0, 1.0, 1.0, 0.0],
            ],
        );
        let profile = PolicyProfile::new(vec![vec![0.8, 0.2], vec![0.3, 0.7]]).unwrap();
        let params = DynamicsParams::new(0.5, 0.4).unwrap();
        let joint = npg_step(&game, &profile, &params).unwrap();

        // Sequential: step agent 0, then step agent 1 against the result.
        let m0 = marginalized_reward(&game, &profile, 0).unwrap();
        let w0: Vec<f64> = profile
            .policy(0)
            .iter()
            .zip(&m0)
            .map(|(&p, &r)| p.powf(1.0 - 0.5 * 0.4) * (0.5 * r).exp())
            .collect();
        let intermediate =
            PolicyProfile::new(vec![w0, profile.policy(1).to_vec()]).unwrap();
        let m1_seq = marginalized_reward(&game, &intermediate, 1).unwrap();
        let m1_sync = marginalized_reward(&game, &profile, 1).unwrap();
        assert!(
            sup_norm_diff(&m1_seq, &m1_sync) > 1e-3,
            "test game too symmetric to distinguish orders"
        );
        let w1: Vec<f64> = profile
            .policy(1)
            .iter()
            .zip(&m1_sync)
            .map(|(&p, &r)| p.powf(1.0 - 0.5 * 0.4) * (0.5 * r).exp())
            .collect();
        let z: f64 = w1.iter().sum();
        for a in 0..2 {
            assert!((joint.policy(1)[a] - w1[a] / z).abs() < 1e-14);
        }
    }

    #[test]
    fn full_step_lands_on_soft_best_response() {
        // With eta * tau = 1 the retention exponent vanishes and the update
        // maps any profile straight onto the softmax responses.
        let game = random_game(&small_spec(31)).unwrap();
        let tau = 5.0;
        let params = DynamicsParams::new(1.0 / tau, tau).unwrap();
        let profile = random_profile(game.action_sizes(), 77);
        let stepped = npg_step(&game, &profile, &params).unwrap();
        for agent in 0..3 {
            let rbar = marginalized_reward(&game, &profile, agent).unwrap();
            let star = soft_best_response(&rbar, tau).unwrap();
            assert!(sup_norm_diff(stepped.policy(agent), &star) < 1e-13);
        }
    }

    #[test]
    fn reward_shift_does_not_move_the_step() {
        // Adding a constant to one agent's reward tensor shifts rbar by a
        // constant, which the softmax normalization absorbs.
        let base = dense_game(
            &[2, 3],
            vec![
                vec![0.1, -0.4, 0.3, 0.0, 0.2, -0.2],
                vec![0.5, 0.1, -0.3, 0.2, 0.0, 0.4],
            ],
        );
        let shifted = dense_game(
            &[2, 3],
            vec![
                vec![0.4, -0.1, 0.6, 0.3, 0.5, 0.1],
                vec![0.5, 0.1, -0.3, 0.2, 0.0, 0.4],
            ],
        );
        let profile = random_profile(&[2, 3], 12);
        let params = DynamicsParams::new(0.2, 1.5).unwrap();
        let a = npg_step(&base, &profile, &params).unwrap();
        let b = npg_step(&shifted, &profile, &params).unwrap();
        for agent in 0..2 {
            assert!(sup_norm_diff(a.policy(agent), b.policy(agent)) < 1e-12);
        }
    }

    #[test]
    fn softmax_response_is_fixed_point_single_agent() {
        let game = dense_game(&[3], vec![vec![0.4, -0.2, 0.1]]);
        let tau = 0.9;
        let star = soft_best_response(&[0.4, -0.2, 0.1], tau).unwrap();
        let profile = PolicyProfile::new(vec![star.clone()]).unwrap();
        let params = DynamicsParams::new(0.7, tau).unwrap();
        let stepped = npg_step(&game, &profile, &params).unwrap();
        assert!(sup_norm_diff(stepped.policy(0), &star) < 1e-14);
    }

    #[test]
    fn default_learning_rate_values_and_domain() {
        // Five agents with ten actions each at temperature 200:
        // 1 / (2 * (200 - 100)) = 0.005.
        let sizes = [10usize; 5];
        assert_eq!(default_learning_rate(&sizes, 200.0).unwrap(), 0.005);
        // Sizes (3, 4, 5) at tau = 48: 1 / (2 * 24) = 1/48.
        let eta = default_learning_rate(&[3, 4, 5], 48.0).unwrap();
        assert_eq!(eta, 1.0 / 48.0);
        assert!(default_learning_rate(&sizes, 200.0 - 100.0).is_err());
        assert!(default_learning_rate(&sizes, 50.0).is_err());
        assert!(default_learning_rate(&sizes, f64::INFINITY).is_err());
    }

    #[test]
    fn contraction_factor_reference_point() {
        // Sizes (3, 4, 5), tau = 48, eta = 1/48: rho = 1 - 1 + 24/48 = 0.5,
        // and the floating-point evaluation lands on 0.5 exactly.
        let rho = contraction_factor(&[3, 4, 5], 1.0 / 48.0, 48.0);
        assert_eq!(rho, 0.5);
        // Smaller steps contract more slowly.
        let slower = contraction_factor(&[3, 4, 5], 1.0 / 96.0, 48.0);
        assert!(slower > rho && slower < 1.0);
    }

    #[test]
    fn theoretical_bound_values_and_hypotheses() {
        let sizes = [3usize, 4, 5];
        let c0 = 0.8;
        let b0 = theoretical_bound(&sizes, 1.0 / 48.0, 48.0, c0, 0);
        assert!((b0 - 2.0 * 48.0 * c0).abs() < 1e-12);
        let b3 = theoretical_bound(&sizes, 1.0 / 48.0, 48.0, c0, 3);
        assert!((b3 - 2.0 * 48.0 * 0.125 * c0).abs() < 1e-12);
        // Temperature at or below twice the total action count: no bound.
        assert!(theoretical_bound(&sizes, 0.01, 24.0, c0, 5).is_nan());
        assert!(theoretical_bound(&sizes, 0.01, 23.0, c0, 5).is_nan());
        // Step size large enough that rho >= 1 is impossible here since
        // rho = 1 - eta * (tau - 2 * total) < 1 whenever tau clears the
        // threshold, but a zero or negative step must be rejected.
        assert!(theoretical_bound(&sizes, 0.0, 48.0, c0, 5).is_nan());
    }

    #[test]
    fn params_validation() {
        assert!(DynamicsParams::new(0.1, 5.0).is_ok());
        assert!(DynamicsParams::new(0.0, 5.0).is_err());
        assert!(DynamicsParams::new(-0.1, 5.0).is_err());
        assert!(DynamicsParams::new(0.1, -1.0).is_err());
        assert!(DynamicsParams::new(0.3, 4.0).is_err(), "eta * tau > 1");
        // One-ulp overshoot of eta * tau = 1 is tolerated.
        assert!(DynamicsParams::new(1.0 / 250.0, 250.0).is_ok());
        assert!(DynamicsParams::with_limits(0.1, 1.0, 0, 1e-12).is_err());
        assert!(DynamicsParams::with_limits(0.1, 1.0, 10, -1.0).is_err());
    }

    #[test]
    fn aux_residual_starts_at_log_distance_to_softmax_target() {
        let game = random_game(&small_spec(4)).unwrap();
        let profile = random_profile(game.action_sizes(), 17);
        let tau = 48.0;
        let aux = aux_init(&game, &profile, tau).unwrap();
        let marginals: Vec<Vec<f64>> = (0..3)
            .map(|i| marginalized_reward(&game, &profile, i).unwrap())
            .collect();
        let got = aux_residual(&aux, &marginals, tau);
        // Independent evaluation: max_i || log pi_i - log softmax(rbar_i/tau) ||_inf.
        let mut want = 0.0_f64;
        for agent in 0..3 {
            let star = soft_best_response(&marginals[agent], tau).unwrap();
            for (a, &p) in profile.policy(agent).iter().enumerate() {
                want = want.max((p.ln() - star[a].ln()).abs());
            }
        }
        assert!((got - want).abs() < 1e-10, "{got} vs {want}");
    }

    #[test]
    fn aux_weights_renormalize_to_the_policy_along_a_run() {
        // log xi and log pi differ by a per-agent scalar at every step, so
        // softmax of the auxiliary weights must reproduce the policies.
        let game = random_game(&small_spec(7)).unwrap();
        let tau = 48.0;
        let eta = 1.0 / 96.0;
        let params = DynamicsParams::new(eta, tau).unwrap();
        let mut profile = random_profile(game.action_sizes(), 7);
        let mut marginals: Vec<Vec<f64>> = (0..3)
            .map(|i| marginalized_reward(&game, &profile, i).unwrap())
            .collect();
        let mut aux = aux_init(&game, &profile, tau).unwrap();
        for step in 0..50 {
            for agent in 0..3 {
                let renormalized = crate::num::softmax_slice(aux.log_weights(agent));
                let d = sup_norm_diff(&renormalized, profile.policy(agent));
                assert!(d < 1e-9, "step {step} agent {agent}: drift {d}");
            }
            aux = aux_step(&aux, &marginals, &params);
            profile = npg_step_with_marginals(&profile, &marginals, &params).unwrap();
            marginals = (0..3)
                .map(|i| marginalized_reward(&game, &profile, i).unwrap())
                .collect();
        }
    }

    #[test]
    fn initial_log_distance_vanishes_at_soft_best_responses() {
        let game = random_game(&small_spec(19)).unwrap();
        let tau = 48.0;
        // Converge the softmax-response map, then measure the distance.
        let mut profile = PolicyProfile::uniform(game.action_sizes());
        for _ in 0..400 {
            let next: Vec<Vec<f64>> = (0..3)
                .map(|i| {
                    let rbar = marginalized_reward(&game, &profile, i).unwrap();
                    soft_best_response(&rbar, tau).unwrap()
                })
                .collect();
            profile = PolicyProfile::new(next).unwrap();
        }
        let d = initial_log_distance(&game, &profile, tau).unwrap();
        assert!(d < 1e-12, "distance {d}");
        // And the k = 0 bound is correspondingly zero.
        let b = theoretical_bound(game.action_sizes(), 1.0 / 48.0, tau, d, 0);
        assert!(b < 1e-9);
        // Off the fixed point the distance is positive and agrees with the
        // fresh auxiliary residual.
        let off = random_profile(game.action_sizes(), 3);
        let d_off = initial_log_distance(&game, &off, tau).unwrap();
        assert!(d_off > 1e-3);
        let aux = aux_init(&game, &off, tau).unwrap();
        let marginals: Vec<Vec<f64>> = (0..3)
            .map(|i| marginalized_reward(&game, &off, i).unwrap())
            .collect();
        assert!((aux_residual(&aux, &marginals, tau) - d_off).abs() < 1e-10);
    }

    #[test]
    fn single_agent_full_step_converges_immediately() {
        // n = 1, eta * tau = 1: one step reaches softmax(r / tau), where the
        // gap is exactly zero.
        let game = dense_game(&[3], vec![vec![0.2, 0.9, -0.1]]);
        let params = DynamicsParams::with_limits(1.0, 1.0, 10, 1e-12).unwrap();
        let initial = PolicyProfile::uniform(&[3]);
        let trace = run(&game, &initial, &params).unwrap();
        assert!(trace.converged);
        assert!(trace.records.len() <= 2, "records: {}", trace.records.len());
        let star = soft_best_response(&[0.2, 0.9, -0.1], 1.0).unwrap();
        assert!(sup_norm_diff(trace.final_profile.policy(0), &star) < 1e-13);
    }

    #[test]
    fn aux_residual_contracts_exactly_for_single_agent() {
        // With one agent the marginal reward is constant, so the residual
        // scales by exactly (1 - eta * tau) each step.
        let game = dense_game(&[4], vec![vec![0.3, -0.5, 0.9, 0.0]]);
        let profile = PolicyProfile::new(vec![vec![0.1, 0.2, 0.3, 0.4]]).unwrap();
        let eta = 0.05;
        let tau = 2.0;
        let params = DynamicsParams::new(eta, tau).unwrap();
        let marginals = vec![marginalized_reward(&game, &profile, 0).unwrap()];
        let mut aux = aux_init(&game, &profile, tau).unwrap();
        let r0 = aux_residual(&aux, &marginals, tau);
        for k in 1..=20 {
            aux = aux_step(&aux, &marginals, &params);
            let rk = aux_residual(&aux, &marginals, tau);
            let predicted = (1.0 - eta * tau).powi(k) * r0;
            assert!(
                (rk - predicted).abs() <= 1e-12 * (1.0 + predicted),
                "step {k}: {rk} vs {predicted}"
            );
        }
    }

    #[test]
    fn run_converges_geometrically_with_certificate() {
        for seed in [5, 6, 7] {
            let game = random_game(&small_spec(seed)).unwrap();
            let tau = 48.0;
            let eta = default_learning_rate(game.action_sizes(), tau).unwrap();
            let params =
                DynamicsParams::with_limits(eta, tau, 200, 1e-13).unwrap();
            let initial = random_profile(game.action_sizes(), seed + 50);
            let trace = run(&game, &initial, &params).unwrap();
            assert_eq!(trace.rho, 0.5);
            assert!(trace.converged, "seed {seed} did not converge");
            for rec in &trace.records {
                assert!(
                    rec.qre_gap <= rec.bound + 1e-10,
                    "seed {seed} iter {}: gap {} above bound {}",
                    rec.iter,
                    rec.qre_gap,
                    rec.bound
                );
            }
            // Geometric envelope implies the gap is tiny within ~50 steps.
            assert!(trace.records.len() < 80);
        }
    }

    #[test]
    fn run_records_are_windowed_and_ordered() {
        let game = random_game(&small_spec(11)).unwrap();
        let params = DynamicsParams::with_limits(0.01, 48.0, 25, 0.0).unwrap();
        let initial = PolicyProfile::uniform(game.action_sizes());
        let trace = run(&game, &initial, &params).unwrap();
        assert_eq!(trace.records.len(), 26, "iterates 0..=25");
        for (k, rec) in trace.records.iter().enumerate() {
            assert_eq!(rec.iter, k);
            assert!(rec.qre_gap.is_finite() && rec.qre_gap >= 0.0);
            assert!(rec.ne_gap.is_finite() && rec.ne_gap >= 0.0);
        }
        for pair in trace.records.windows(2) {
            assert!(pair[1].wall_time_ms >= pair[0].wall_time_ms);
        }
        assert!(!trace.converged, "stop_gap = 0 can never trigger");
    }

    #[test]
    fn run_with_zero_temperature_reports_ne_gap_and_nan_extras() {
        let game = random_game(&small_spec(13)).unwrap();
        let params = DynamicsParams::with_limits(0.1, 0.0, 50, 1e-12).unwrap();
        let initial = random_profile(game.action_sizes(), 99);
        let trace = run(&game, &initial, &params).unwrap();
        assert!(trace.rho.is_nan());
        assert!(trace.initial_residual.is_nan());
        for rec in &trace.records {
            assert_eq!(rec.qre_gap, rec.ne_gap);
            assert!(rec.bound.is_nan());
            assert!(rec.aux_residual.is_nan());
        }
    }

    #[test]
    fn run_without_contraction_hypotheses_has_nan_bound() {
        // tau = 1 is far below twice the total action count, so the
        // certificate does not apply even though the dynamics still run.
        let game = random_game(&small_spec(13)).unwrap();
        let params = DynamicsParams::with_limits(0.1, 1.0, 30, 1e-14).unwrap();
        let initial = random_profile(game.action_sizes(), 1);
        let trace = run(&game, &initial, &params).unwrap();
        assert!(trace.rho.is_nan());
        assert!(trace.initial_residual.is_finite());
        for rec in &trace.records {
            assert!(rec.bound.is_nan());
            assert!(rec.aux_residual.is_finite());
        }
    }

    #[test]
    fn unregularized_matching_pennies_cycles() {
        let game = dense_game(
            &[2, 2],
            vec![
                vec![1.0, -1.0, -1.0, 1.0],
                vec![-1.0, 1.0, 1.0, -1.0],
            ],
        );
        // The uniform center is a fixed point, so start slightly off it.
        let initial = PolicyProfile::new(vec![vec![0.6, 0.4], vec![0.5, 0.5]]).unwrap();
        let params = DynamicsParams::with_limits(0.1, 0.0, 2000, 1e-12).unwrap();
        let trace = run(&game, &initial, &params).unwrap();
        assert!(!trace.converged);
        let last = trace.records.last().unwrap();
        assert!(
            last.ne_gap > 1e-3,
            "expected persistent cycling, final gap {}",
            last.ne_gap
        );
    }

    #[test]
    fn regularization_stabilizes_matching_pennies() {
        let game = dense_game(
            &[2, 2],
            vec![
                vec![1.0, -1.0, -1.0, 1.0],
                vec![-1.0, 1.0, 1.0, -1.0],
            ],
        );
        let initial = PolicyProfile::new(vec![vec![0.6, 0.4], vec![0.5, 0.5]]).unwrap();
        let params = DynamicsParams::with_limits(0.1, 1.0, 2000, 1e-12).unwrap();
        let trace = run(&game, &initial, &params).unwrap();
        assert!(trace.converged, "regularized run should settle");
        // The regularized equilibrium of matching pennies is the center.
        let p = trace.final_profile.policy(0);
        assert!(l1_diff(p, &[0.5, 0.5]) < 1e-6);
    }
}
