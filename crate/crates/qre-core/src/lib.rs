//! Entropy-regularized independent natural policy gradient dynamics for
//! finite multi-agent games.
//!
//! The crate models tabular normal-form and stochastic games, runs the
//! multiplicative-weights-style update each agent applies to its own
//! policy, and measures convergence toward the softmax (quantal response)
//! fixed point through regularized equilibrium gaps, an auxiliary
//! contraction certificate, and an a-priori geometric envelope.

pub mod dynamics;
pub mod error;
pub mod game;
pub mod generators;
pub mod gradient;
pub mod markov;
pub mod num;
pub mod rng;
pub mod suites;

pub use dynamics::{
    aux_init, aux_residual, aux_step, contraction_factor, default_learning_rate,
    initial_log_distance, npg_step, run, theoretical_bound, AuxSequence, DynamicsParams,
    IterateRecord, RunTrace,
};
pub use error::{Error, Result};
pub use game::{
    entropy, expected_reward, marginalized_reward, ne_gap, next_joint, qre_gap,
    regularized_reward, soft_best_response, EdgeGame, GapReport, PolicyProfile, StaticGame,
};
pub use generators::{
    polymatrix_network, random_game, random_markov_game, random_profile, random_state_profile,
    GameKind, GameSpec,
};
pub use gradient::{
    fisher_matrix, fisher_pseudo_inverse, npg_step_via_fisher, policy_gradient, softmax,
    LogitProfile,
};
pub use markov::{
    evaluate_policy, marginalized_advantage, markov_npg_step, markov_npg_step_with,
    markov_qre_gap, run_markov, run_markov_with, soft_value_iteration, GapReportMarkov,
    MarkovGame, MarkovOptions, MarkovRecord, MarkovTrace, StatePolicyProfile, ValueReport,
};
pub use suites::{run_all, SuiteReport};
