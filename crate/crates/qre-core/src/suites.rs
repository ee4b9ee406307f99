//! Runtime self-check suites: every numerical identity and inequality the
//! library's correctness rests on, re-verified over freshly seeded
//! instances. The CLI exposes these through its `verify` subcommand.
//!
//! Each suite runs `cases` independent instances and reports how many
//! violated the property, with the first violation described. Suites are
//! independent and safe to run concurrently.

use ndarray::{ArrayD, IxDyn};

use crate::dynamics::{
    aux_init, aux_residual, aux_step, contraction_factor, default_learning_rate, npg_step, run,
    DynamicsParams,
};
use crate::game::{
    expected_reward, marginalized_reward, ne_gap, next_joint, qre_gap, soft_best_response,
    PolicyProfile, StaticGame,
};
use crate::generators::{polymatrix_network, random_game, random_markov_game, random_profile, GameKind, GameSpec};
use crate::gradient::{
    fisher_matrix, fisher_pseudo_inverse, npg_step_via_fisher, policy_gradient, softmax,
    LogitProfile,
};
use crate::markov::{
    evaluate_policy, marginalized_advantage, markov_npg_step, markov_qre_gap, run_markov,
    soft_value_iteration, MarkovGame, StatePolicyProfile,
};
use crate::num::{l1_diff, log_floored, sup_norm_diff};
use crate::rng::{range_f64, stream, unit_f64};

/// Outcome of one property suite.
#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub name: &'static str,
    pub cases: usize,
    pub failures: usize,
    pub first_failure: Option<String>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }

    fn collect<F>(name: &'static str, cases: usize, mut check: F) -> Self
    where
        F: FnMut(u64) -> Option<String>,
    {
        let mut failures = 0;
        let mut first_failure = None;
        for case in 0..cases as u64 {
            if let Some(msg) = check(case) {
                failures += 1;
                if first_failure.is_none() {
                    first_failure = Some(format!("case {case}: {msg}"));
                }
            }
        }
        Self {
            name,
            cases,
            failures,
            first_failure,
        }
    }
}

fn spec_random(sizes: Vec<usize>, seed: u64) -> GameSpec {
    GameSpec {
        kind: GameKind::Random,
        num_agents: sizes.len(),
        action_sizes: sizes,
        num_states: 1,
        discount: 0.0,
        edges: vec![],
        edge_half_width: GameSpec::DEFAULT_EDGE_HALF_WIDTH,
        seed,
    }
}

fn spec_markov(sizes: Vec<usize>, states: usize, discount: f64, seed: u64) -> GameSpec {
    GameSpec {
        kind: GameKind::RandomMarkov,
        num_agents: sizes.len(),
        action_sizes: sizes,
        num_states: states,
        discount,
        edges: vec![],
        edge_half_width: GameSpec::DEFAULT_EDGE_HALF_WIDTH,
        seed,
    }
}

/// Small randomized shape: 2-3 agents, 2-4 actions each.
fn small_sizes(case: u64, tag: &str) -> Vec<usize> {
    let mut rng = stream(case, tag);
    let agents = 2 + (rng_usize(&mut rng, 2));
    (0..agents).map(|_| 2 + rng_usize(&mut rng, 3)).collect()
}

fn rng_usize(rng: &mut rand_chacha::ChaCha12Rng, n: usize) -> usize {
    (unit_f64(rng) * n as f64) as usize % n
}

/// Both equilibrium gaps are nonnegative on random games and profiles.
pub fn suite_gaps_nonnegative(cases: usize) -> SuiteReport {
    SuiteReport::collect("gaps_nonnegative", cases, |case| {
        let sizes = small_sizes(case, "gapnn-sizes");
        let game = random_game(&spec_random(sizes.clone(), case)).unwrap();
        let profile = random_profile(&sizes, case.wrapping_add(1 << 32));
        let mut rng = stream(case, "gapnn-tau");
        let tau = range_f64(&mut rng, 1e-3, 10.0);
        let q = qre_gap(&game, &profile, tau).unwrap();
        let n = ne_gap(&game, &profile).unwrap();
        if q.per_agent.iter().any(|&g| g < 0.0) || n.per_agent.iter().any(|&g| g < 0.0) {
            return Some(format!("negative gap: qre {:?} ne {:?}", q.per_agent, n.per_agent));
        }
        None
    })
}

/// `qre_gap / tau` is invariant to adding one constant to all of an agent's
/// rewards.
pub fn suite_gap_shift_invariance(cases: usize) -> SuiteReport {
    SuiteReport::collect("gap_shift_invariance", cases, |case| {
        let sizes = small_sizes(case, "gapshift-sizes");
        let game = random_game(&spec_random(sizes.clone(), case)).unwrap();
        let dense = game.to_dense().unwrap();
        let profile = random_profile(&sizes, case.wrapping_add(2 << 32));
        let mut rng = stream(case, "gapshift-c");
        let c = range_f64(&mut rng, -5.0, 5.0);
        let tau = range_f64(&mut rng, 0.05, 5.0);
        let agent = rng_usize(&mut rng, sizes.len());
        let shifted_rewards: Vec<ArrayD<f64>> = (0..sizes.len())
            .map(|i| {
                let mut joint = vec![0usize; sizes.len()];
                let mut t = ArrayD::zeros(IxDyn(&sizes));
                loop {
                    let mut v = dense.reward(i, &joint);
                    if i == agent {
                        v += c;
                    }
                    t[IxDyn(&joint)] = v;
                    if !next_joint(&mut joint, &sizes) {
                        break;
                    }
                }
                t
            })
            .collect();
        let shifted = StaticGame::from_rewards(shifted_rewards, (-6.0, 7.0)).unwrap();
        let a = qre_gap(&game, &profile, tau).unwrap().max_gap / tau;
        let b = qre_gap(&shifted, &profile, tau).unwrap().max_gap / tau;
        if (a - b).abs() > 1e-10 {
            return Some(format!("shift {c}: {a} vs {b}"));
        }
        None
    })
}

/// Marginalized reward is linear in any other agent's policy.
pub fn suite_marginal_linearity(cases: usize) -> SuiteReport {
    SuiteReport::collect("marginal_linearity", cases, |case| {
        let sizes = small_sizes(case, "marlin-sizes");
        let game = random_game(&spec_random(sizes.clone(), case)).unwrap();
        let base = random_profile(&sizes, case.wrapping_add(3 << 32));
        let alt = random_profile(&sizes, case.wrapping_add(4 << 32));
        let mut rng = stream(case, "marlin-lambda");
        let lambda = unit_f64(&mut rng);
        let agent = rng_usize(&mut rng, sizes.len());
        let other = (agent + 1) % sizes.len();

        let mix_policy: Vec<f64> = base
            .policy(other)
            .iter()
            .zip(alt.policy(other))
            .map(|(&p, &q)| lambda * p + (1.0 - lambda) * q)
            .collect();
        let mut mixed = base.policies().to_vec();
        mixed[other] = mix_policy;
        let mixed = PolicyProfile::new(mixed).unwrap();
        let mut swapped = base.policies().to_vec();
        swapped[other] = alt.policy(other).to_vec();
        let swapped = PolicyProfile::new(swapped).unwrap();

        let r_mixed = marginalized_reward(&game, &mixed, agent).unwrap();
        let r_base = marginalized_reward(&game, &base, agent).unwrap();
        let r_alt = marginalized_reward(&game, &swapped, agent).unwrap();
        for a in 0..sizes[agent] {
            let combo = lambda * r_base[a] + (1.0 - lambda) * r_alt[a];
            if (r_mixed[a] - combo).abs() > 1e-12 {
                return Some(format!("action {a}: {} vs {combo}", r_mixed[a]));
            }
        }
        None
    })
}

/// Expected reward equals the policy-weighted marginalized reward.
pub fn suite_expected_matches_marginal(cases: usize) -> SuiteReport {
    SuiteReport::collect("expected_matches_marginal", cases, |case| {
        let sizes = small_sizes(case, "expmar-sizes");
        let game = random_game(&spec_random(sizes.clone(), case)).unwrap();
        let profile = random_profile(&sizes, case.wrapping_add(5 << 32));
        for agent in 0..sizes.len() {
            let direct = expected_reward(&game, &profile, agent).unwrap();
            let rbar = marginalized_reward(&game, &profile, agent).unwrap();
            let dot: f64 = profile
                .policy(agent)
                .iter()
                .zip(&rbar)
                .map(|(&p, &r)| p * r)
                .sum();
            if (direct - dot).abs() > 1e-12 {
                return Some(format!("agent {agent}: {direct} vs {dot}"));
            }
        }
        None
    })
}

/// Product-measure total variation is at most the sum of marginal total
/// variations (joint computed by explicit tensor product).
pub fn suite_product_tv_bound(cases: usize) -> SuiteReport {
    SuiteReport::collect("product_tv_bound", cases, |case| {
        let mut rng = stream(case, "tv-sizes");
        // Keep the explicit joint small: 3 agents, sizes summing <= 15.
        let sizes = vec![
            2 + rng_usize(&mut rng, 4),
            2 + rng_usize(&mut rng, 4),
            2 + rng_usize(&mut rng, 4),
        ];
        let p1 = random_profile(&sizes, case.wrapping_add(6 << 32));
        let p2 = random_profile(&sizes, case.wrapping_add(7 << 32));
        let mut joint_l1 = 0.0;
        let mut joint = vec![0usize; sizes.len()];
        loop {
            joint_l1 += (p1.joint_probability(&joint) - p2.joint_probability(&joint)).abs();
            if !next_joint(&mut joint, &sizes) {
                break;
            }
        }
        let marginal_sum: f64 = (0..sizes.len())
            .map(|i| l1_diff(p1.policy(i), p2.policy(i)))
            .sum();
        if joint_l1 > marginal_sum + 1e-12 {
            return Some(format!("joint L1 {joint_l1} > marginal sum {marginal_sum}"));
        }
        None
    })
}

/// Log policies are 2-Lipschitz in the logits under the sup norm.
pub fn suite_log_policy_lipschitz(cases: usize) -> SuiteReport {
    SuiteReport::collect("log_policy_lipschitz", cases, |case| {
        let mut rng = stream(case, "lip-logits");
        let m = 2 + rng_usize(&mut rng, 6);
        let t1: Vec<f64> = (0..m).map(|_| range_f64(&mut rng, -3.0, 3.0)).collect();
        let t2: Vec<f64> = (0..m).map(|_| range_f64(&mut rng, -3.0, 3.0)).collect();
        let p1 = softmax(&t1);
        let p2 = softmax(&t2);
        let log_diff: f64 = p1
            .iter()
            .zip(&p2)
            .map(|(&a, &b)| (log_floored(a) - log_floored(b)).abs())
            .fold(0.0, f64::max);
        let theta_diff = sup_norm_diff(&t1, &t2);
        if log_diff > 2.0 * theta_diff + 1e-12 {
            return Some(format!("log diff {log_diff} > 2 * {theta_diff}"));
        }
        None
    })
}

/// One update step keeps policies strictly positive.
pub fn suite_support_preservation(cases: usize) -> SuiteReport {
    SuiteReport::collect("support_preservation", cases, |case| {
        let sizes = small_sizes(case, "supp-sizes");
        let game = random_game(&spec_random(sizes.clone(), case)).unwrap();
        let profile = random_profile(&sizes, case.wrapping_add(8 << 32));
        let mut rng = stream(case, "supp-params");
        let tau = range_f64(&mut rng, 0.0, 5.0);
        let eta = range_f64(&mut rng, 1e-4, 1.0) / (1.0 + tau);
        let params = DynamicsParams::new(eta, tau).unwrap();
        let stepped = npg_step(&game, &profile, &params).unwrap();
        for agent in 0..sizes.len() {
            if stepped.policy(agent).iter().any(|&p| !(p > 0.0)) {
                return Some(format!("agent {agent} lost support"));
            }
        }
        None
    })
}

/// Relabeling agents commutes with the update step.
pub fn suite_relabel_equivariance(cases: usize) -> SuiteReport {
    SuiteReport::collect("relabel_equivariance", cases, |case| {
        let sizes = small_sizes(case, "relab-sizes");
        let n = sizes.len();
        let game = random_game(&spec_random(sizes.clone(), case)).unwrap();
        let profile = random_profile(&sizes, case.wrapping_add(9 << 32));
        let mut rng = stream(case, "relab-perm");
        // Random permutation by sorting random keys.
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = rng_usize(&mut rng, i + 1);
            perm.swap(i, j);
        }
        // perm[new_index] = old_index.
        let new_sizes: Vec<usize> = perm.iter().map(|&old| sizes[old]).collect();
        let dense = game.to_dense().unwrap();
        let permuted_rewards: Vec<ArrayD<f64>> = (0..n)
            .map(|new_agent| {
                let mut t = ArrayD::zeros(IxDyn(&new_sizes));
                let mut new_joint = vec![0usize; n];
                loop {
                    let mut old_joint = vec![0usize; n];
                    for (new_axis, &old_axis) in perm.iter().enumerate() {
                        old_joint[old_axis] = new_joint[new_axis];
                    }
                    t[IxDyn(&new_joint)] = dense.reward(perm[new_agent], &old_joint);
                    if !next_joint(&mut new_joint, &new_sizes) {
                        break;
                    }
                }
                t
            })
            .collect();
        let permuted_game = StaticGame::from_rewards(permuted_rewards, (0.0, 1.0)).unwrap();
        let permuted_profile = PolicyProfile::new(
            perm.iter().map(|&old| profile.policy(old).to_vec()).collect(),
        )
        .unwrap();
        let params = DynamicsParams::new(0.05, 2.0).unwrap();
        let stepped = npg_step(&game, &profile, &params).unwrap();
        let stepped_permuted = npg_step(&permuted_game, &permuted_profile, &params).unwrap();
        for new_agent in 0..n {
            let d = sup_norm_diff(
                stepped_permuted.policy(new_agent),
                stepped.policy(perm[new_agent]),
            );
            if d > 1e-12 {
                return Some(format!("agent {new_agent}: drift {d}"));
            }
        }
        None
    })
}

/// Constant reward shifts do not move the update (softmax absorbs them).
pub fn suite_reward_shift_covariance(cases: usize) -> SuiteReport {
    SuiteReport::collect("reward_shift_covariance", cases, |case| {
        let sizes = small_sizes(case, "shiftcov-sizes");
        let game = random_game(&spec_random(sizes.clone(), case)).unwrap();
        let dense = game.to_dense().unwrap();
        let profile = random_profile(&sizes, case.wrapping_add(10 << 32));
        let mut rng = stream(case, "shiftcov-c");
        let c = range_f64(&mut rng, -3.0, 3.0);
        let agent = rng_usize(&mut rng, sizes.len());
        let shifted_rewards: Vec<ArrayD<f64>> = (0..sizes.len())
            .map(|i| {
                let mut joint = vec![0usize; sizes.len()];
                let mut t = ArrayD::zeros(IxDyn(&sizes));
                loop {
                    t[IxDyn(&joint)] =
                        dense.reward(i, &joint) + if i == agent { c } else { 0.0 };
                    if !next_joint(&mut joint, &sizes) {
                        break;
                    }
                }
                t
            })
            .collect();
        let shifted = StaticGame::from_rewards(shifted_rewards, (-4.0, 5.0)).unwrap();
        let params = DynamicsParams::new(0.1, 1.0).unwrap();
        let a = npg_step(&game, &profile, &params).unwrap();
        let b = npg_step(&shifted, &profile, &params).unwrap();
        for i in 0..sizes.len() {
            let d = sup_norm_diff(a.policy(i), b.policy(i));
            if d > 1e-12 {
                return Some(format!("agent {i}: drift {d}"));
            }
        }
        None
    })
}

/// Under the contraction hypotheses, the auxiliary residual shrinks by at
/// least the contraction factor every step, and the regularized gap stays
/// below `2 * tau * residual`.
pub fn suite_residual_contraction(cases: usize) -> SuiteReport {
    SuiteReport::collect("residual_contraction", cases, |case| {
        let sizes = vec![3usize, 4, 5];
        let tau = 48.0;
        let eta = default_learning_rate(&sizes, tau).unwrap();
        let rho = contraction_factor(&sizes, eta, tau);
        let game = random_game(&spec_random(sizes.clone(), case)).unwrap();
        let profile0 = random_profile(&sizes, case.wrapping_add(11 << 32));
        let params = DynamicsParams::with_limits(eta, tau, 80, 0.0).unwrap();

        let mut profile = profile0;
        let mut marginals: Vec<Vec<f64>> = (0..sizes.len())
            .map(|i| marginalized_reward(&game, &profile, i).unwrap())
            .collect();
        let mut aux = aux_init(&game, &profile, tau).unwrap();
        let mut residual = aux_residual(&aux, &marginals, tau);
        for step in 0..80 {
            let gap = qre_gap(&game, &profile, tau).unwrap().max_gap;
            if gap > 2.0 * tau * residual + 1e-10 {
                return Some(format!(
                    "step {step}: gap {gap} above 2*tau*residual {}",
                    2.0 * tau * residual
                ));
            }
            aux = aux_step(&aux, &marginals, &params);
            profile = npg_step(&game, &profile, &params).unwrap();
            marginals = (0..sizes.len())
                .map(|i| marginalized_reward(&game, &profile, i).unwrap())
                .collect();
            let next_residual = aux_residual(&aux, &marginals, tau);
            if next_residual > rho * residual + 1e-12 {
                return Some(format!(
                    "step {step}: residual {next_residual} above rho * {residual}"
                ));
            }
            residual = next_residual;
        }
        None
    })
}

/// The recorded gap never exceeds the a-priori geometric envelope.
pub fn suite_gap_envelope(cases: usize) -> SuiteReport {
    SuiteReport::collect("gap_envelope", cases, |case| {
        let sizes = vec![3usize, 4, 5];
        let tau = 48.0;
        let eta = default_learning_rate(&sizes, tau).unwrap();
        let game = random_game(&spec_random(sizes.clone(), case)).unwrap();
        let initial = random_profile(&sizes, case.wrapping_add(12 << 32));
        let params = DynamicsParams::with_limits(eta, tau, 80, 1e-13).unwrap();
        let trace = run(&game, &initial, &params).unwrap();
        for rec in &trace.records {
            if rec.qre_gap > rec.bound + 1e-10 {
                return Some(format!(
                    "iter {}: gap {} above bound {}",
                    rec.iter, rec.qre_gap, rec.bound
                ));
            }
        }
        None
    })
}

/// A profile of softmax responses to itself is a fixed point of the update
/// for any admissible step size.
pub fn suite_softmax_fixed_point(cases: usize) -> SuiteReport {
    SuiteReport::collect("softmax_fixed_point", cases, |case| {
        let sizes = small_sizes(case, "fix-sizes");
        let game = random_game(&spec_random(sizes.clone(), case)).unwrap();
        let tau = 40.0;
        let mut profile = PolicyProfile::uniform(&sizes);
        for _ in 0..300 {
            let next: Vec<Vec<f64>> = (0..sizes.len())
                .map(|i| {
                    let rbar = marginalized_reward(&game, &profile, i).unwrap();
                    soft_best_response(&rbar, tau).unwrap()
                })
                .collect();
            profile = PolicyProfile::new(next).unwrap();
        }
        for eta in [1.0 / tau, 0.5 / tau, 0.01 / tau] {
            let params = DynamicsParams::new(eta, tau).unwrap();
            let stepped = npg_step(&game, &profile, &params).unwrap();
            for agent in 0..sizes.len() {
                let d = sup_norm_diff(stepped.policy(agent), profile.policy(agent));
                if d > 1e-12 {
                    return Some(format!("eta {eta} agent {agent}: moved {d}"));
                }
            }
        }
        None
    })
}

/// Exact gradient components sum to zero (tangent space).
pub fn suite_gradient_tangency(cases: usize) -> SuiteReport {
    SuiteReport::collect("gradient_tangency", cases, |case| {
        let sizes = small_sizes(case, "tan-sizes");
        let game = random_game(&spec_random(sizes.clone(), case)).unwrap();
        let profile = random_profile(&sizes, case.wrapping_add(13 << 32));
        let mut rng = stream(case, "tan-tau");
        let tau = range_f64(&mut rng, 0.0, 5.0);
        for agent in 0..sizes.len() {
            let g = policy_gradient(&game, &profile, agent, tau).unwrap();
            let total: f64 = g.iter().sum();
            if total.abs() > 1e-12 {
                return Some(format!("agent {agent}: component sum {total}"));
            }
        }
        None
    })
}

/// Analytic gradient against central finite differences.
pub fn suite_finite_difference_agreement(cases: usize) -> SuiteReport {
    gradient_agreement_suite(cases, &|game, profile, agent, tau| {
        policy_gradient(game, profile, agent, tau).unwrap()
    })
}

/// Core of the finite-difference suite, parameterized over the gradient
/// implementation so a deliberately broken one can prove the check has
/// teeth.
pub fn gradient_agreement_suite(
    cases: usize,
    gradient_fn: &dyn Fn(&StaticGame, &PolicyProfile, usize, f64) -> Vec<f64>,
) -> SuiteReport {
    SuiteReport::collect("finite_difference_agreement", cases, |case| {
        let sizes = small_sizes(case, "fd-sizes");
        let game = random_game(&spec_random(sizes.clone(), case)).unwrap();
        let mut rng = stream(case, "fd-setup");
        let theta: Vec<Vec<f64>> = sizes
            .iter()
            .map(|&m| (0..m).map(|_| range_f64(&mut rng, -2.0, 2.0)).collect())
            .collect();
        let logits = LogitProfile::new(theta.clone()).unwrap();
        let profile = logits.to_profile();
        let tau = range_f64(&mut rng, 0.0, 3.0);
        let agent = rng_usize(&mut rng, sizes.len());
        let h = 1e-6;
        let analytic = gradient_fn(&game, &profile, agent, tau);
        for k in 0..sizes[agent] {
            let mut up = theta.clone();
            let mut down = theta.clone();
            up[agent][k] += h;
            down[agent][k] -= h;
            let pu = LogitProfile::new(up).unwrap().to_profile();
            let pd = LogitProfile::new(down).unwrap().to_profile();
            let ru = crate::game::regularized_reward(&game, &pu, agent, tau).unwrap();
            let rd = crate::game::regularized_reward(&game, &pd, agent, tau).unwrap();
            let numeric = (ru - rd) / (2.0 * h);
            if (analytic[k] - numeric).abs() > 1e-6 * (1.0 + analytic[k].abs()) {
                return Some(format!(
                    "agent {agent} component {k}: analytic {} vs numeric {numeric}",
                    analytic[k]
                ));
            }
        }
        None
    })
}

/// Gradient vanishes at softmax responses.
pub fn suite_gradient_vanishes_at_soft_response(cases: usize) -> SuiteReport {
    SuiteReport::collect("gradient_vanishes_at_soft_response", cases, |case| {
        let sizes = small_sizes(case, "gvan-sizes");
        let game = random_game(&spec_random(sizes.clone(), case)).unwrap();
        let mut rng = stream(case, "gvan-tau");
        // Large temperatures make the softmax-response map a contraction,
        // so iterating it lands on a genuine simultaneous soft response.
        let tau = range_f64(&mut rng, 30.0, 60.0);
        let mut profile = PolicyProfile::uniform(&sizes);
        for _ in 0..2000 {
            let next: Vec<Vec<f64>> = (0..sizes.len())
                .map(|i| {
                    let rbar = marginalized_reward(&game, &profile, i).unwrap();
                    soft_best_response(&rbar, tau).unwrap()
                })
                .collect();
            let next = PolicyProfile::new(next).unwrap();
            let moved: f64 = (0..sizes.len())
                .map(|i| sup_norm_diff(next.policy(i), profile.policy(i)))
                .fold(0.0, f64::max);
            profile = next;
            if moved < 1e-16 {
                break;
            }
        }
        for agent in 0..sizes.len() {
            let g = policy_gradient(&game, &profile, agent, tau).unwrap();
            if g.iter().any(|v| v.abs() > 1e-12) {
                return Some(format!("agent {agent}: gradient {g:?}"));
            }
        }
        None
    })
}

/// Fisher matrix symmetry, null space, and positive semidefiniteness.
pub fn suite_fisher_structure(cases: usize) -> SuiteReport {
    SuiteReport::collect("fisher_structure", cases, |case| {
        let mut rng = stream(case, "fisher-size");
        let m = 2 + rng_usize(&mut rng, 6);
        let profile = random_profile(&[m], case.wrapping_add(14 << 32));
        let f = fisher_matrix(profile.policy(0));
        if f != f.transpose() {
            return Some("asymmetric".into());
        }
        for i in 0..m {
            let row_sum: f64 = (0..m).map(|j| f[(i, j)]).sum();
            if row_sum.abs() > 1e-14 {
                return Some(format!("row {i} sums to {row_sum}"));
            }
        }
        let eigen = nalgebra::SymmetricEigen::new(f);
        if eigen.eigenvalues.iter().any(|&l| l < -1e-12) {
            return Some(format!("negative eigenvalue {:?}", eigen.eigenvalues));
        }
        None
    })
}

/// The logit-space preconditioned step matches the closed-form
/// multiplicative update after the softmax.
pub fn suite_fisher_step_equivalence(cases: usize) -> SuiteReport {
    fisher_equivalence_suite(cases, &|game, logits, params| {
        npg_step_via_fisher(game, logits, params).unwrap()
    })
}

/// Core of the equivalence suite, parameterized over the logit-step
/// implementation (see [`gradient_agreement_suite`]).
pub fn fisher_equivalence_suite(
    cases: usize,
    step_fn: &dyn Fn(&StaticGame, &LogitProfile, &DynamicsParams) -> LogitProfile,
) -> SuiteReport {
    SuiteReport::collect("fisher_step_equivalence", cases, |case| {
        let sizes = small_sizes(case, "feq-sizes");
        let game = random_game(&spec_random(sizes.clone(), case)).unwrap();
        let profile = random_profile(&sizes, case.wrapping_add(15 << 32));
        let mut rng = stream(case, "feq-params");
        let tau = range_f64(&mut rng, 0.5, 50.0);
        let eta = range_f64(&mut rng, 0.1, 1.0) / tau;
        let params = DynamicsParams::new(eta, tau).unwrap();
        let logits = LogitProfile::from_profile(&profile);
        let via_fisher = step_fn(&game, &logits, &params).to_profile();
        let closed = npg_step(&game, &profile, &params).unwrap();
        for agent in 0..sizes.len() {
            let d = sup_norm_diff(via_fisher.policy(agent), closed.policy(agent));
            if d > 1e-8 {
                return Some(format!("agent {agent} tau {tau} eta {eta}: {d}"));
            }
        }
        None
    })
}

/// The pseudo-inverse solves `F x = g` with the minimum-norm (ones-free)
/// solution on tangent right-hand sides.
pub fn suite_pseudo_inverse_solves(cases: usize) -> SuiteReport {
    SuiteReport::collect("pseudo_inverse_solves", cases, |case| {
        let mut rng = stream(case, "pinv-size");
        let m = 2 + rng_usize(&mut rng, 5);
        let profile = random_profile(&[m], case.wrapping_add(16 << 32));
        let f = fisher_matrix(profile.policy(0));
        let mut g: Vec<f64> = (0..m).map(|_| range_f64(&mut rng, -1.0, 1.0)).collect();
        let mean = g.iter().sum::<f64>() / m as f64;
        for v in &mut g {
            *v -= mean;
        }
        let x = fisher_pseudo_inverse(&f, &g).unwrap();
        let fx = &f * nalgebra::DVector::from_column_slice(&x);
        for (got, want) in fx.iter().zip(&g) {
            if (got - want).abs() > 1e-9 {
                return Some(format!("residual {}", (got - want).abs()));
            }
        }
        let ones_component: f64 = x.iter().sum();
        if ones_component.abs() > 1e-9 {
            return Some(format!("null-space leakage {ones_component}"));
        }
        None
    })
}

/// Generators are bit-deterministic in their seeds.
pub fn suite_generator_determinism(cases: usize) -> SuiteReport {
    SuiteReport::collect("generator_determinism", cases, |case| {
        let sizes = small_sizes(case, "det-sizes");
        let spec = spec_random(sizes.clone(), case);
        let g1 = random_game(&spec).unwrap();
        let g2 = random_game(&spec).unwrap();
        let mut joint = vec![0usize; sizes.len()];
        loop {
            for agent in 0..sizes.len() {
                if g1.reward(agent, &joint).to_bits() != g2.reward(agent, &joint).to_bits() {
                    return Some(format!("agent {agent} differs at {joint:?}"));
                }
            }
            if !next_joint(&mut joint, &sizes) {
                break;
            }
        }
        let mspec = spec_markov(vec![2, 2], 3, 0.9, case);
        let m1 = random_markov_game(&mspec).unwrap();
        let m2 = random_markov_game(&mspec).unwrap();
        for s in 0..3 {
            for a in 0..4 {
                if m1.kernel_row(s, a) != m2.kernel_row(s, a) {
                    return Some(format!("kernel row ({s}, {a}) differs"));
                }
            }
        }
        None
    })
}

/// Polymatrix rewards sum to zero over agents at every joint action
/// (exhaustive when the game is small, sampled at 10^4 joints otherwise).
pub fn suite_polymatrix_zero_sum(cases: usize) -> SuiteReport {
    SuiteReport::collect("polymatrix_zero_sum", cases, |case| {
        let mut rng = stream(case, "zs-shape");
        let large = case % 4 == 3;
        let (n, m) = if large {
            (5usize, 10usize)
        } else {
            (3 + rng_usize(&mut rng, 2), 2 + rng_usize(&mut rng, 3))
        };
        let spec = GameSpec {
            kind: GameKind::PolymatrixZeroSum,
            num_agents: n,
            action_sizes: vec![m; n],
            num_states: 1,
            discount: 0.0,
            edges: GameSpec::ring_edges(n),
            edge_half_width: GameSpec::DEFAULT_EDGE_HALF_WIDTH,
            seed: case,
        };
        let game = polymatrix_network(&spec).unwrap();
        let sizes = game.action_sizes().to_vec();
        let total_actions: usize = sizes.iter().sum();
        let check = |joint: &[usize]| -> Option<String> {
            let total: f64 = (0..n).map(|i| game.reward(i, joint)).sum();
            if total.abs() > 1e-12 {
                return Some(format!("joint {joint:?} sums to {total}"));
            }
            None
        };
        if total_actions <= 20 {
            let mut joint = vec![0usize; n];
            loop {
                if let Some(msg) = check(&joint) {
                    return Some(msg);
                }
                if !next_joint(&mut joint, &sizes) {
                    break;
                }
            }
        } else {
            let mut sample_rng = stream(case, "zs-sample");
            for _ in 0..10_000 {
                let joint: Vec<usize> =
                    sizes.iter().map(|&mi| rng_usize(&mut sample_rng, mi)).collect();
                if let Some(msg) = check(&joint) {
                    return Some(msg);
                }
            }
        }
        None
    })
}

/// Markov kernel rows are strictly positive probability vectors.
pub fn suite_kernel_rows_stochastic(cases: usize) -> SuiteReport {
    SuiteReport::collect("kernel_rows_stochastic", cases, |case| {
        let mut rng = stream(case, "ker-shape");
        let states = 2 + rng_usize(&mut rng, 4);
        let game = random_markov_game(&spec_markov(vec![2, 3], states, 0.9, case)).unwrap();
        for s in 0..states {
            for a in 0..6 {
                let row = game.kernel_row(s, a);
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > 1e-12 {
                    return Some(format!("row ({s}, {a}) sums to {sum}"));
                }
                if row.iter().any(|&p| !(p > 0.0)) {
                    return Some(format!("row ({s}, {a}) not strictly positive"));
                }
            }
        }
        None
    })
}

/// Single-state, undiscounted stochastic games reproduce the static
/// dynamics: step, gap, and short trajectories agree within 1e-10.
pub fn suite_markov_static_reduction(cases: usize) -> SuiteReport {
    SuiteReport::collect("markov_static_reduction", cases, |case| {
        let sizes = small_sizes(case, "mred-sizes");
        let game = random_game(&spec_random(sizes.clone(), case)).unwrap();
        let joint = game.num_joint_actions();
        let kernel = ndarray::Array3::from_elem((1, joint, 1), 1.0);
        let mgame =
            MarkovGame::new(vec![game.clone()], kernel, 0.0, vec![1.0]).unwrap();
        let initial = random_profile(&sizes, case.wrapping_add(17 << 32));
        let state_initial = StatePolicyProfile::new(
            initial
                .policies()
                .iter()
                .map(|p| vec![p.clone()])
                .collect(),
        )
        .unwrap();
        let mut rng = stream(case, "mred-params");
        let tau = range_f64(&mut rng, 0.5, 10.0);
        let eta = range_f64(&mut rng, 0.1, 0.9) / tau;
        let params = DynamicsParams::with_limits(eta, tau, 20, 0.0).unwrap();

        let static_trace = run(&game, &initial, &params).unwrap();
        let markov_trace = run_markov(&mgame, &state_initial, &params).unwrap();
        for (s, m) in static_trace.records.iter().zip(&markov_trace.records) {
            if (s.qre_gap - m.markov_qre_gap).abs() > 1e-10 {
                return Some(format!(
                    "iter {}: static gap {} vs markov gap {}",
                    s.iter, s.qre_gap, m.markov_qre_gap
                ));
            }
        }
        for agent in 0..sizes.len() {
            let d = sup_norm_diff(
                markov_trace.final_profile.policy(agent, 0),
                static_trace.final_profile.policy(agent),
            );
            if d > 1e-10 {
                return Some(format!("agent {agent}: final policies differ by {d}"));
            }
        }
        None
    })
}

/// Soft value iteration contracts at the discount rate.
pub fn suite_soft_vi_contraction(cases: usize) -> SuiteReport {
    SuiteReport::collect("soft_vi_contraction", cases, |case| {
        let mut rng = stream(case, "svi-mdp");
        let states = 3 + rng_usize(&mut rng, 3);
        let actions = 2 + rng_usize(&mut rng, 3);
        let mut rewards = ndarray::Array2::zeros((states, actions));
        let mut transitions = ndarray::Array3::zeros((states, actions, states));
        for s in 0..states {
            for a in 0..actions {
                rewards[(s, a)] = unit_f64(&mut rng);
                let mut row: Vec<f64> = (0..states).map(|_| 1.0 - unit_f64(&mut rng)).collect();
                let total: f64 = row.iter().sum();
                for (s2, v) in row.drain(..).enumerate() {
                    transitions[(s, a, s2)] = v / total;
                }
            }
        }
        let discount = 0.9;
        let report =
            soft_value_iteration(&rewards, &transitions, 0.7, discount, 1e-12).unwrap();
        for pair in report.sup_diffs.windows(2) {
            if pair[0] < 1e-13 {
                continue;
            }
            if pair[1] > discount * pair[0] + 1e-12 {
                return Some(format!("diff grew: {} -> {}", pair[0], pair[1]));
            }
        }
        None
    })
}

/// Policy evaluation is linear in the stage rewards (tau = 0).
pub fn suite_evaluate_linearity(cases: usize) -> SuiteReport {
    SuiteReport::collect("evaluate_linearity", cases, |case| {
        let ga = random_markov_game(&spec_markov(vec![2, 2], 3, 0.85, case)).unwrap();
        let gb = random_markov_game(&spec_markov(vec![2, 2], 3, 0.85, case.wrapping_add(18 << 32)))
            .unwrap();
        let sizes = vec![2usize, 2];
        let summed: Vec<StaticGame> = (0..3)
            .map(|s| {
                let mut tensors = Vec::new();
                for agent in 0..2 {
                    let mut t = ArrayD::zeros(IxDyn(&sizes));
                    let mut joint = vec![0usize; 2];
                    loop {
                        t[IxDyn(&joint)] = ga.stage_game(s).reward(agent, &joint)
                            + gb.stage_game(s).reward(agent, &joint);
                        if !next_joint(&mut joint, &sizes) {
                            break;
                        }
                    }
                    tensors.push(t);
                }
                StaticGame::from_rewards(tensors, (0.0, 2.0)).unwrap()
            })
            .collect();
        let gb_shared = MarkovGame::new(
            (0..3).map(|s| gb.stage_game(s).clone()).collect(),
            ga.kernel().clone(),
            0.85,
            ga.initial_dist().to_vec(),
        )
        .unwrap();
        let sum_game =
            MarkovGame::new(summed, ga.kernel().clone(), 0.85, ga.initial_dist().to_vec())
                .unwrap();
        let profile = StatePolicyProfile::uniform(&sizes, 3);
        let va = evaluate_policy(&ga, &profile, 0.0).unwrap();
        let vb = evaluate_policy(&gb_shared, &profile, 0.0).unwrap();
        let vs = evaluate_policy(&sum_game, &profile, 0.0).unwrap();
        for agent in 0..2 {
            for s in 0..3 {
                if (vs[agent][s] - va[agent][s] - vb[agent][s]).abs() > 1e-10 {
                    return Some(format!("agent {agent} state {s} not additive"));
                }
            }
        }
        None
    })
}

/// Advantages average to zero under the agent's own policy at every state.
pub fn suite_advantage_centering(cases: usize) -> SuiteReport {
    SuiteReport::collect("advantage_centering", cases, |case| {
        let game = random_markov_game(&spec_markov(vec![2, 3], 4, 0.9, case)).unwrap();
        let mut policies = Vec::new();
        for (agent, &m) in game.action_sizes().iter().enumerate() {
            let mut per_state = Vec::new();
            for state in 0..4 {
                let mut rng = stream(case, &format!("advc-{agent}-{state}"));
                per_state.push((0..m).map(|_| 0.1 + unit_f64(&mut rng)).collect::<Vec<_>>());
            }
            policies.push(per_state);
        }
        let profile = StatePolicyProfile::new(policies).unwrap();
        let mut rng = stream(case, "advc-tau");
        let tau = range_f64(&mut rng, 0.0, 2.0);
        for agent in 0..2 {
            let adv = marginalized_advantage(&game, &profile, agent, tau).unwrap();
            for s in 0..4 {
                let mean: f64 = profile
                    .policy(agent, s)
                    .iter()
                    .enumerate()
                    .map(|(a, &p)| p * adv[(s, a)])
                    .sum();
                if mean.abs() > 1e-12 {
                    return Some(format!("agent {agent} state {s}: mean {mean}"));
                }
            }
        }
        None
    })
}

/// A Markov fixed point (reached at discount 0, where states decouple) has
/// vanishing regularized gap, and one more step does not move it.
pub fn suite_markov_fixed_point_consistency(cases: usize) -> SuiteReport {
    SuiteReport::collect("markov_fixed_point_consistency", cases, |case| {
        let game = random_markov_game(&spec_markov(vec![2, 3], 3, 0.0, case)).unwrap();
        let initial = StatePolicyProfile::uniform(game.action_sizes(), 3);
        let tau = 30.0;
        let params = DynamicsParams::with_limits(1.0 / 60.0, tau, 600, 1e-11).unwrap();
        let trace = run_markov(&game, &initial, &params).unwrap();
        if !trace.converged {
            return Some("run did not converge".into());
        }
        let gap = markov_qre_gap(&game, &trace.final_profile, tau).unwrap().max_gap;
        if gap > 1e-10 {
            return Some(format!("fixed-point gap {gap}"));
        }
        // The gap is quadratic in the log-space distance to the fixed
        // point, so a 1e-11 gap only pins the profile down to ~1e-6.
        let stepped = markov_npg_step(&game, &trace.final_profile, &params).unwrap();
        for agent in 0..2 {
            for s in 0..3 {
                let d = sup_norm_diff(
                    stepped.policy(agent, s),
                    trace.final_profile.policy(agent, s),
                );
                if d > 1e-6 {
                    return Some(format!("agent {agent} state {s} moved {d}"));
                }
            }
        }
        None
    })
}

/// Runs every suite. `cases` scales the instance count of each suite
/// (heavier suites run a fraction of it, noted per suite). Suites execute
/// concurrently.
pub fn run_all(cases: usize) -> Vec<SuiteReport> {
    let light = cases.max(1);
    // Trajectory-heavy suites get a smaller budget.
    let heavy = (cases / 5).max(1);
    let jobs: Vec<(&'static str, Box<dyn Fn() -> SuiteReport + Send>)> = vec![
        ("gaps_nonnegative", Box::new(move || suite_gaps_nonnegative(light))),
        ("gap_shift_invariance", Box::new(move || suite_gap_shift_invariance(light))),
        ("marginal_linearity", Box::new(move || suite_marginal_linearity(light))),
        ("expected_matches_marginal", Box::new(move || suite_expected_matches_marginal(light))),
        ("product_tv_bound", Box::new(move || suite_product_tv_bound(light))),
        ("log_policy_lipschitz", Box::new(move || suite_log_policy_lipschitz(light))),
        ("support_preservation", Box::new(move || suite_support_preservation(light))),
        ("relabel_equivariance", Box::new(move || suite_relabel_equivariance(heavy))),
        ("reward_shift_covariance", Box::new(move || suite_reward_shift_covariance(heavy))),
        ("residual_contraction", Box::new(move || suite_residual_contraction(heavy))),
        ("gap_envelope", Box::new(move || suite_gap_envelope(heavy))),
        ("softmax_fixed_point", Box::new(move || suite_softmax_fixed_point(heavy))),
        ("gradient_tangency", Box::new(move || suite_gradient_tangency(light))),
        ("finite_difference_agreement", Box::new(move || suite_finite_difference_agreement(light))),
        (
            "gradient_vanishes_at_soft_response",
            Box::new(move || suite_gradient_vanishes_at_soft_response(heavy)),
        ),
        ("fisher_structure", Box::new(move || suite_fisher_structure(light))),
        ("fisher_step_equivalence", Box::new(move || suite_fisher_step_equivalence(light))),
        ("pseudo_inverse_solves", Box::new(move || suite_pseudo_inverse_solves(light))),
        ("generator_determinism", Box::new(move || suite_generator_determinism(heavy))),
        ("polymatrix_zero_sum", Box::new(move || suite_polymatrix_zero_sum(heavy))),
        ("kernel_rows_stochastic", Box::new(move || suite_kernel_rows_stochastic(heavy))),
        ("markov_static_reduction", Box::new(move || suite_markov_static_reduction(heavy))),
        ("soft_vi_contraction", Box::new(move || suite_soft_vi_contraction(heavy))),
        ("evaluate_linearity", Box::new(move || suite_evaluate_linearity(heavy))),
        ("advantage_centering", Box::new(move || suite_advantage_centering(heavy))),
        (
            "markov_fixed_point_consistency",
            Box::new(move || suite_markov_fixed_point_consistency((cases / 20).max(1))),
        ),
    ];
    let mut reports: Vec<(usize, SuiteReport)> = Vec::with_capacity(jobs.len());
    std::thread::scope(|scope| {
        let handles: Vec<_> = jobs
            .into_iter()
            .enumerate()
            .map(|(idx, (_, job))| scope.spawn(move || (idx, job())))
            .collect();
        for h in handles {
            reports.push(h.join().expect("suite thread panicked"));
        }
    });
    reports.sort_by_key(|(idx, _)| *idx);
    reports.into_iter().map(|(_, r)| r).collect()
}
