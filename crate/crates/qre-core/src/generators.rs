//! Seeded construction of the three benchmark game families: dense random
//! games, zero-sum polymatrix network games, and random discounted
//! stochastic games.
//!
//! Everything is a pure function of `GameSpec`, including its 64-bit seed.
//! Draw order is fixed and documented on each generator, so two builds of
//! the same spec agree bit for bit.

use ndarray::{Array2, Array3, ArrayD, IxDyn};

use crate::error::{Error, Result};
use crate::game::{EdgeGame, PolicyProfile, StaticGame};
use crate::markov::{MarkovGame, StatePolicyProfile};
use crate::rng::{stream, unit_f64};

/// Which generator a [`GameSpec`] drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GameKind {
    /// Dense rewards, i.i.d. Uniform[0,1] per entry.
    Random,
    /// Pairwise zero-sum edge games on an undirected graph.
    PolymatrixZeroSum,
    /// Discounted stochastic game with random rewards and kernel.
    RandomMarkov,
}

/// Declarative description of a game instance; the seed makes it a complete
/// recipe.
#[derive(Debug, Clone, PartialEq)]
pub struct GameSpec {
    pub kind: GameKind,
    pub num_agents: usize,
    /// One action count per agent, each at least 2.
    pub action_sizes: Vec<usize>,
    /// State count; only meaningful for [`GameKind::RandomMarkov`].
    pub num_states: usize,
    /// Discount factor in `[0, 1)`; only meaningful for Markov games.
    pub discount: f64,
    /// Undirected edges; only meaningful for polymatrix games.
    pub edges: Vec<(usize, usize)>,
    /// Half-width of the Uniform[-w, w] edge-entry distribution.
    pub edge_half_width: f64,
    pub seed: u64,
}

impl GameSpec {
    pub const DEFAULT_EDGE_HALF_WIDTH: f64 = 0.5;

    /// The ring graph `0-1, 1-2, ..., (n-1)-0` used by the network
    /// benchmark.
    pub fn ring_edges(num_agents: usize) -> Vec<(usize, usize)> {
        if num_agents < 2 {
            return vec![];
        }
        if num_agents == 2 {
            return vec![(0, 1)];
        }
        (0..num_agents).map(|i| (i, (i + 1) % num_agents)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_agents == 0 {
            return Err(Error::Parameter("spec needs at least one agent".into()));
        }
        if self.action_sizes.len() != self.num_agents {
            return Err(Error::Dimension(format!(
                "{} agents but {} action sizes",
                self.num_agents,
                self.action_sizes.len()
            )));
        }
        if let Some(&m) = self.action_sizes.iter().find(|&&m| m < 2) {
            return Err(Error::Parameter(format!(
                "every agent needs at least 2 actions, got {m}"
            )));
        }
        match self.kind {
            GameKind::Random => {}
            GameKind::PolymatrixZeroSum => {
                if !(self.edge_half_width > 0.0) || !self.edge_half_width.is_finite() {
                    return Err(Error::Parameter(format!(
                        "edge half-width must be finite and positive, got {}",
                        self.edge_half_width
                    )));
                }
                let mut seen = std::collections::HashSet::new();
                for &(i, j) in &self.edges {
                    if i >= self.num_agents || j >= self.num_agents {
                        return Err(Error::Dimension(format!(
                            "edge ({i}, {j}) references a missing agent"
                        )));
                    }
                    if i == j {
                        return Err(Error::Parameter(format!("self-loop on agent {i}")));
                    }
                    if !seen.insert((i.min(j), i.max(j))) {
                        return Err(Error::Parameter(format!(
                            "duplicate undirected edge ({i}, {j})"
                        )));
                    }
                }
            }
            GameKind::RandomMarkov => {
                if self.num_states == 0 {
                    return Err(Error::Parameter("Markov spec needs at least one state".into()));
                }
                if !self.discount.is_finite() || !(0.0..1.0).contains(&self.discount) {
                    return Err(Error::Parameter(format!(
                        "discount must lie in [0, 1), got {}",
                        self.discount
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Dense game with every reward entry i.i.d. Uniform[0,1].
///
/// Draw order: one stream per agent, tagged `reward-agent-{i}`, filling that
/// agent's tensor in row-major order. Declared range `[0, 1]`.
pub fn random_game(spec: &GameSpec) -> Result<StaticGame> {
    spec.validate()?;
    if spec.kind != GameKind::Random {
        return Err(Error::Parameter(format!(
            "random_game requires kind Random, got {:?}",
            spec.kind
        )));
    }
    let rewards = random_reward_tensors(&spec.action_sizes, spec.seed, "reward");
    StaticGame::from_rewards(rewards, (0.0, 1.0))
}

fn random_reward_tensors(sizes: &[usize], seed: u64, tag_prefix: &str) -> Vec<ArrayD<f64>> {
    let count: usize = sizes.iter().product();
    (0..sizes.len())
        .map(|agent| {
            let mut rng = stream(seed, &format!("{tag_prefix}-agent-{agent}"));
            let data: Vec<f64> = (0..count).map(|_| unit_f64(&mut rng)).collect();
            ArrayD::from_shape_vec(IxDyn(sizes), data).expect("shape matches draw count")
        })
        .collect()
}

/// Zero-sum network game on the [`GameSpec`]'s undirected edge list.
///
/// For each listed edge `(i, j)` a matrix with entries i.i.d.
/// Uniform[-w, w] (w = `edge_half_width`) is drawn from the stream tagged
/// `edge-{i}-{j}`, filled in row-major order; agent `i` receives the matrix
/// and agent `j` its negated transpose. Rewards are sums over incident
/// edges divided by the maximum degree, and the declared range `[-2w, 2w]`
/// bounds them with slack to spare (each reward is a mean of entries).
pub fn polymatrix_network(spec: &GameSpec) -> Result<StaticGame> {
    spec.validate()?;
    if spec.kind != GameKind::PolymatrixZeroSum {
        return Err(Error::Parameter(format!(
            "polymatrix_network requires kind PolymatrixZeroSum, got {:?}",
            spec.kind
        )));
    }
    let w = spec.edge_half_width;
    let edges = spec
        .edges
        .iter()
        .map(|&(i, j)| {
            let mut rng = stream(spec.seed, &format!("edge-{i}-{j}"));
            let rows = spec.action_sizes[i];
            let cols = spec.action_sizes[j];
            let data: Vec<f64> = (0..rows * cols)
                .map(|_| -w + 2.0 * w * unit_f64(&mut rng))
                .collect();
            EdgeGame {
                a: i,
                b: j,
                matrix: Array2::from_shape_vec((rows, cols), data).expect("shape matches"),
            }
        })
        .collect();
    StaticGame::from_edges(spec.action_sizes.clone(), edges, (-2.0 * w, 2.0 * w))
}

/// Random discounted stochastic game.
///
/// Per-state rewards are i.i.d. Uniform[0,1], drawn from streams tagged
/// `markov-s{state}-reward-agent-{i}` in row-major order. The transition
/// kernel row for each (state, joint action) pair is an i.i.d.
/// Uniform(0,1] vector over next states, normalized to sum to one; rows are
/// drawn from the single stream tagged `markov-kernel`, ordered by state,
/// then joint action (row-major), then next state. The initial state
/// distribution is uniform.
pub fn random_markov_game(spec: &GameSpec) -> Result<MarkovGame> {
    spec.validate()?;
    if spec.kind != GameKind::RandomMarkov {
        return Err(Error::Parameter(format!(
            "random_markov_game requires kind RandomMarkov, got {:?}",
            spec.kind
        )));
    }
    let s = spec.num_states;
    let joint: usize = spec.action_sizes.iter().product();
    let stage_games = (0..s)
        .map(|state| {
            let rewards =
                random_reward_tensors(&spec.action_sizes, spec.seed, &format!("markov-s{state}-reward"));
            StaticGame::from_rewards(rewards, (0.0, 1.0))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rng = stream(spec.seed, "markov-kernel");
    let mut kernel = Array3::zeros((s, joint, s));
    for state in 0..s {
        for a in 0..joint {
            let mut row: Vec<f64> = (0..s)
                .map(|_| 1.0 - unit_f64(&mut rng)) // in (0, 1]
                .collect();
            let total: f64 = row.iter().sum();
            for v in &mut row {
                *v /= total;
            }
            for (next, &v) in row.iter().enumerate() {
                kernel[(state, a, next)] = v;
            }
        }
    }

    let initial_dist = vec![1.0 / s as f64; s];
    MarkovGame::new(stage_games, kernel, spec.discount, initial_dist)
}

/// Random interior policy profile: each agent's policy is uniform on the
/// simplex (normalized exponential draws), floored away from the boundary.
///
/// Draw order: one stream per agent, tagged `init-policy-agent-{i}`, one
/// uniform variate per action.
pub fn random_profile(action_sizes: &[usize], seed: u64) -> PolicyProfile {
    let policies = action_sizes
        .iter()
        .enumerate()
        .map(|(agent, &m)| {
            let mut rng = stream(seed, &format!("init-policy-agent-{agent}"));
            (0..m)
                .map(|_| {
                    let u = unit_f64(&mut rng);
                    (-(1.0 - u).ln()).max(1e-12)
                })
                .collect()
        })
        .collect();
    PolicyProfile::new(policies).expect("exponential draws are strictly positive")
}

/// Per-state analogue of [`random_profile`] for stochastic games.
///
/// Draw order: one stream per agent and state, tagged
/// `init-policy-agent-{i}-state-{s}`, one uniform variate per action.
pub fn random_state_profile(
    action_sizes: &[usize],
    num_states: usize,
    seed: u64,
) -> StatePolicyProfile {
    let policies = action_sizes
        .iter()
        .enumerate()
        .map(|(agent, &m)| {
            (0..num_states)
                .map(|state| {
                    let mut rng =
                        stream(seed, &format!("init-policy-agent-{agent}-state-{state}"));
                    (0..m)
                        .map(|_| {
                            let u = unit_f64(&mut rng);
                            (-(1.0 - u).ln()).max(1e-12)
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    StatePolicyProfile::new(policies).expect("exponential draws are strictly positive")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{expected_reward, next_joint};

    fn random_spec(sizes: Vec<usize>, seed: u64) -> GameSpec {
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

    fn ring_spec(n: usize, sizes: Vec<usize>, seed: u64) -> GameSpec {
        GameSpec {
            kind: GameKind::PolymatrixZeroSum,
            num_agents: n,
            action_sizes: sizes,
            num_states: 1,
            discount: 0.0,
            edges: GameSpec::ring_edges(n),
            edge_half_width: GameSpec::DEFAULT_EDGE_HALF_WIDTH,
            seed,
        }
    }

    fn markov_spec(n: usize, sizes: Vec<usize>, states: usize, seed: u64) -> GameSpec {
        GameSpec {
            kind: GameKind::RandomMarkov,
            num_agents: n,
            action_sizes: sizes,
            num_states: states,
            discount: 0.95,
            edges: vec![],
            edge_half_width: GameSpec::DEFAULT_EDGE_HALF_WIDTH,
            seed,
        }
    }

    #[test]
    fn random_game_is_deterministic_and_in_range() {
        let spec = random_spec(vec![3, 4, 5], 7);
        let g1 = random_game(&spec).unwrap();
        let g2 = random_game(&spec).unwrap();
        assert_eq!(g1.action_sizes(), &[3, 4, 5]);
        let sizes = g1.action_sizes().to_vec();
        let mut joint = vec![0usize; 3];
        loop {
            for agent in 0..3 {
                let a = g1.reward(agent, &joint);
                let b = g2.reward(agent, &joint);
                assert_eq!(a.to_bits(), b.to_bits(), "nondeterministic at {joint:?}");
                assert!((0.0..=1.0).contains(&a));
            }
            if !next_joint(&mut joint, &sizes) {
                break;
            }
        }
        let g3 = random_game(&random_spec(vec![3, 4, 5], 8)).unwrap();
        assert_ne!(
            g1.reward(0, &[0, 0, 0]).to_bits(),
            g3.reward(0, &[0, 0, 0]).to_bits()
        );
    }

    #[test]
    fn random_game_entry_mean_near_half() {
        // 2 * 6 * 9 * 10^3-ish entries; the mean of Uniform[0,1] draws
        // should concentrate near 0.5.
        let spec = random_spec(vec![20, 50, 100], 3);
        let game = random_game(&spec).unwrap();
        let sizes = game.action_sizes().to_vec();
        let mut joint = vec![0usize; 3];
        let mut sum = 0.0;
        let mut count = 0u64;
        loop {
            sum += game.reward(0, &joint);
            count += 1;
            if !next_joint(&mut joint, &sizes) {
                break;
            }
        }
        let mean = sum / count as f64;
        assert_eq!(count, 100_000);
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn spec_validation_rejects_bad_inputs() {
        let mut spec = random_spec(vec![3, 4], 1);
        spec.num_agents = 3;
        assert!(random_game(&spec).is_err());
        assert!(random_game(&random_spec(vec![3, 1], 1)).is_err());
        let mut ring = ring_spec(3, vec![2, 2, 2], 1);
        ring.edges.push((0, 0));
        assert!(polymatrix_network(&ring).is_err());
        let mut dup = ring_spec(3, vec![2, 2, 2], 1);
        dup.edges.push((1, 0)); // (0,1) already present
        assert!(polymatrix_network(&dup).is_err());
        let mut bad_kind = ring_spec(3, vec![2, 2, 2], 1);
        bad_kind.kind = GameKind::Random;
        assert!(polymatrix_network(&bad_kind).is_err());
        let mut markov = markov_spec(2, vec![2, 2], 3, 1);
        markov.discount = 1.0;
        assert!(random_markov_game(&markov).is_err());
        markov.discount = 0.5;
        markov.num_states = 0;
        assert!(random_markov_game(&markov).is_err());
    }

    #[test]
    fn ring_edges_have_expected_shape() {
        assert_eq!(GameSpec::ring_edges(2), vec![(0, 1)]);
        assert_eq!(
            GameSpec::ring_edges(5),
            vec![(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)]
        );
        assert!(GameSpec::ring_edges(1).is_empty());
    }

    #[test]
    fn polymatrix_rewards_sum_to_zero_everywhere() {
        let game = polymatrix_network(&ring_spec(4, vec![2, 3, 2, 3], 11)).unwrap();
        let sizes = game.action_sizes().to_vec();
        let mut joint = vec![0usize; 4];
        loop {
            let total: f64 = (0..4).map(|i| game.reward(i, &joint)).sum();
            assert!(total.abs() < 1e-12, "joint {joint:?}: sum {total}");
            if !next_joint(&mut joint, &sizes) {
                break;
            }
        }
    }

    #[test]
    fn polymatrix_two_agent_instance_is_zero_sum_in_expectation() {
        let game = polymatrix_network(&ring_spec(2, vec![3, 4], 5)).unwrap();
        let profile = random_profile(game.action_sizes(), 23);
        let r0 = expected_reward(&game, &profile, 0).unwrap();
        let r1 = expected_reward(&game, &profile, 1).unwrap();
        assert!((r0 + r1).abs() < 1e-14);
        // Single edge, degree 1: rewards are the raw matrix entries.
        let (edges, deg_max) = game.edges().unwrap();
        assert_eq!(edges.len(), 1);
        assert_eq!(deg_max, 1);
        assert_eq!(game.reward(0, &[1, 2]), edges[0].matrix[(1, 2)]);
        assert_eq!(game.reward(1, &[1, 2]), -edges[0].matrix[(1, 2)]);
    }

    #[test]
    fn polymatrix_entries_respect_half_width() {
        let mut spec = ring_spec(3, vec![2, 2, 2], 9);
        spec.edge_half_width = 0.25;
        let game = polymatrix_network(&spec).unwrap();
        let (edges, _) = game.edges().unwrap();
        for e in edges {
            for &v in e.matrix.iter() {
                assert!(v.abs() <= 0.25);
            }
        }
        assert_eq!(game.reward_range(), (-0.5, 0.5));
    }

    #[test]
    fn polymatrix_structural_matches_materialized() {
        let game = polymatrix_network(&ring_spec(3, vec![2, 3, 2], 21)).unwrap();
        let dense = game.to_dense().unwrap();
        let profile = random_profile(game.action_sizes(), 8);
        for agent in 0..3 {
            let a = expected_reward(&game, &profile, agent).unwrap();
            let b = expected_reward(&dense, &profile, agent).unwrap();
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn markov_game_shapes_and_stochastic_rows() {
        let spec = markov_spec(3, vec![5, 5, 5], 5, 13);
        let game = random_markov_game(&spec).unwrap();
        assert_eq!(game.num_states(), 5);
        assert_eq!(game.action_sizes(), &[5, 5, 5]);
        assert_eq!(game.discount(), 0.95);
        for s in 0..5 {
            assert_eq!(game.stage_game(s).action_sizes(), &[5, 5, 5]);
            for a in 0..125 {
                let row = game.kernel_row(s, a);
                let sum: f64 = row.iter().sum();
                assert!((sum - 1.0).abs() < 1e-12, "row ({s}, {a}) sums to {sum}");
                assert!(row.iter().all(|&p| p > 0.0));
            }
        }
        let init = game.initial_dist();
        assert!(init.iter().all(|&p| (p - 0.2).abs() < 1e-15));
    }

    #[test]
    fn markov_single_state_kernel_is_all_ones() {
        let spec = markov_spec(2, vec![2, 3], 1, 4);
        let game = random_markov_game(&spec).unwrap();
        for a in 0..6 {
            assert_eq!(game.kernel_row(0, a), &[1.0]);
        }
    }

    #[test]
    fn markov_game_is_deterministic() {
        let spec = markov_spec(2, vec![2, 2], 3, 77);
        let g1 = random_markov_game(&spec).unwrap();
        let g2 = random_markov_game(&spec).unwrap();
        for s in 0..3 {
            for a in 0..4 {
                assert_eq!(g1.kernel_row(s, a), g2.kernel_row(s, a));
            }
            let joint = [1usize, 0];
            for agent in 0..2 {
                assert_eq!(
                    g1.stage_game(s).reward(agent, &joint).to_bits(),
                    g2.stage_game(s).reward(agent, &joint).to_bits()
                );
            }
        }
    }

    #[test]
    fn random_profile_is_deterministic_and_interior() {
        let p1 = random_profile(&[3, 5], 31);
        let p2 = random_profile(&[3, 5], 31);
        let p3 = random_profile(&[3, 5], 32);
        assert_eq!(p1, p2);
        assert_ne!(p1, p3);
        for agent in 0..2 {
            let pi = p1.policy(agent);
            assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(pi.iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn random_state_profile_varies_by_state_and_matches_flat_draws() {
        let sp1 = random_state_profile(&[3, 5], 4, 31);
        let sp2 = random_state_profile(&[3, 5], 4, 31);
        for agent in 0..2 {
            for state in 0..4 {
                let pi = sp1.policy(agent, state);
                assert_eq!(pi, sp2.policy(agent, state));
                assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(pi.iter().all(|&v| v > 0.0));
            }
            assert_ne!(sp1.policy(agent, 0), sp1.policy(agent, 1));
        }
    }
}
