//! Self-describing text format for exported game instances.
//!
//! Layout: a fixed-order header (`qre-game v1`, kind, shapes, discounting,
//! seed, declared reward range) followed by one or more value blocks with
//! one float per line. Floats are printed in shortest round-trip form, so a
//! load reproduces the generated game bit for bit.
//!
//! Block order is row-major everywhere: dense rewards enumerate agents,
//! then joint actions with the last agent's action fastest; edge matrices
//! enumerate rows then columns; Markov files write stage rewards
//! (state-major, then agent, then joint), the transition kernel
//! (state, joint action, next state), and the initial state distribution.

use ndarray::{Array2, Array3, ArrayD, IxDyn};

use qre_core::generators::{polymatrix_network, random_game, random_markov_game};
use qre_core::markov::MarkovGame;
use qre_core::{next_joint, EdgeGame, GameKind, GameSpec, StaticGame};

use crate::error::{CliError, CliResult};

/// A game loaded from disk or built from an inline spec.
#[derive(Debug, Clone)]
pub enum LoadedGame {
    Static(StaticGame),
    Markov(MarkovGame),
}

/// Header fields of a game file.
#[derive(Debug, Clone, PartialEq)]
pub struct GameFileMeta {
    pub kind: String,
    pub action_sizes: Vec<usize>,
    pub num_states: usize,
    pub discount: f64,
    pub seed: u64,
    pub range: (f64, f64),
    pub edge_half_width: Option<f64>,
}

fn kind_name(kind: GameKind) -> &'static str {
    match kind {
        GameKind::Random => "random",
        GameKind::PolymatrixZeroSum => "polymatrix-zero-sum",
        GameKind::RandomMarkov => "random-markov",
    }
}

/// Builds the game a spec describes and serializes it.
pub fn render(spec: &GameSpec) -> CliResult<(String, LoadedGame)> {
    spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let mut out = String::new();
    out.push_str("qre-game v1\n");
    out.push_str(&format!("kind {}\n", kind_name(spec.kind)));
    out.push_str(&format!("agents {}\n", spec.num_agents));
    out.push_str("actions");
    for m in &spec.action_sizes {
        out.push_str(&format!(" {m}"));
    }
    out.push('\n');
    let (states, discount) = match spec.kind {
        GameKind::RandomMarkov => (spec.num_states, spec.discount),
        _ => (1, 0.0),
    };
    out.push_str(&format!("states {states}\n"));
    out.push_str(&format!("discount {discount}\n"));
    out.push_str(&format!("seed {}\n", spec.seed));

    let loaded = match spec.kind {
        GameKind::Random => {
            let game = random_game(spec)?;
            let (lo, hi) = game.reward_range();
            out.push_str(&format!("range {lo} {hi}\n"));
            push_dense_block(&mut out, &game);
            LoadedGame::Static(game)
        }
        GameKind::PolymatrixZeroSum => {
            let game = polymatrix_network(spec)?;
            let (lo, hi) = game.reward_range();
            out.push_str(&format!("range {lo} {hi}\n"));
            out.push_str(&format!("edge_half_width {}\n", spec.edge_half_width));
            let (edges, _) = game.edges().expect("polymatrix games carry edges");
            out.push_str(&format!("edges {}\n", edges.len()));
            for e in edges {
                out.push_str(&format!("edge {} {}\n", e.a, e.b));
                for i in 0..e.matrix.nrows() {
                    for j in 0..e.matrix.ncols() {
                        out.push_str(&format!("{}\n", e.matrix[(i, j)]));
                    }
                }
            }
            LoadedGame::Static(game)
        }
        GameKind::RandomMarkov => {
            let game = random_markov_game(spec)?;
            let (lo, hi) = game.stage_game(0).reward_range();
            out.push_str(&format!("range {lo} {hi}\n"));
            let sizes = game.action_sizes().to_vec();
            let joint = game.num_joint_actions();
            let count = game.num_states() * sizes.len() * joint;
            out.push_str(&format!("values {count}\n"));
            for s in 0..game.num_states() {
                let stage = game.stage_game(s);
                for agent in 0..sizes.len() {
                    let mut ja = vec![0usize; sizes.len()];
                    loop {
                        out.push_str(&format!("{}\n", stage.reward(agent, &ja)));
                        if !next_joint(&mut ja, &sizes) {
                            break;
                        }
                    }
                }
            }
            out.push_str(&format!("kernel {}\n", game.num_states() * joint * game.num_states()));
            for s in 0..game.num_states() {
                for a in 0..joint {
                    for next in game.kernel_row(s, a) {
                        out.push_str(&format!("{next}\n"));
                    }
                }
            }
            out.push_str(&format!("initial {}\n", game.num_states()));
            for p in game.initial_dist() {
                out.push_str(&format!("{p}\n"));
            }
            LoadedGame::Markov(game)
        }
    };
    Ok((out, loaded))
}

fn push_dense_block(out: &mut String, game: &StaticGame) {
    let sizes = game.action_sizes().to_vec();
    let count = sizes.len() * game.num_joint_actions();
    out.push_str(&format!("values {count}\n"));
    for agent in 0..sizes.len() {
        let mut joint = vec![0usize; sizes.len()];
        loop {
            out.push_str(&format!("{}\n", game.reward(agent, &joint)));
            if !next_joint(&mut joint, &sizes) {
                break;
            }
        }
    }
}

struct Cursor<'a> {
    lines: Vec<&'a str>,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn next_line(&mut self) -> CliResult<&'a str> {
        while self.pos < self.lines.len() {
            let line = self.lines[self.pos].trim_end();
            self.pos += 1;
            if !line.is_empty() {
                return Ok(line);
            }
        }
        Err(CliError::Usage("game file ended early".into()))
    }

    fn expect_key(&mut self, key: &str) -> CliResult<&'a str> {
        let line = self.next_line()?;
        match line.strip_prefix(key) {
            Some(rest) if rest.starts_with(' ') || rest.is_empty() => Ok(rest.trim_start()),
            _ => Err(CliError::Usage(format!(
                "game file: expected `{key} ...`, found `{line}`"
            ))),
        }
    }

    fn floats(&mut self, count: usize, what: &str) -> CliResult<Vec<f64>> {
        let mut values = Vec::with_capacity(count);
        for _ in 0..count {
            let line = self.next_line()?;
            let v: f64 = line.parse().map_err(|_| {
                CliError::Usage(format!("game file: bad float `{line}` in {what} block"))
            })?;
            if !v.is_finite() {
                return Err(CliError::Usage(format!(
                    "game file: non-finite value in {what} block"
                )));
            }
            values.push(v);
        }
        Ok(values)
    }
}

fn parse_num<T: std::str::FromStr>(text: &str, what: &str) -> CliResult<T> {
    text.parse()
        .map_err(|_| CliError::Usage(format!("game file: bad {what} `{text}`")))
}

/// Parses a game file produced by [`render`].
pub fn parse(text: &str) -> CliResult<(LoadedGame, GameFileMeta)> {
    let mut cur = Cursor {
        lines: text.lines().collect(),
        pos: 0,
    };
    let magic = cur.next_line()?;
    if magic != "qre-game v1" {
        return Err(CliError::Usage(format!(
            "not a game file (first line `{magic}`, expected `qre-game v1`)"
        )));
    }
    let kind = cur.expect_key("kind")?.to_string();
    let agents: usize = parse_num(cur.expect_key("agents")?, "agent count")?;
    let action_sizes: Vec<usize> = cur
        .expect_key("actions")?
        .split_whitespace()
        .map(|t| parse_num(t, "action count"))
        .collect::<CliResult<_>>()?;
    if action_sizes.len() != agents {
        return Err(CliError::Usage(format!(
            "game file: {agents} agents but {} action counts",
            action_sizes.len()
        )));
    }
    let num_states: usize = parse_num(cur.expect_key("states")?, "state count")?;
    let discount: f64 = parse_num(cur.expect_key("discount")?, "discount")?;
    let seed: u64 = parse_num(cur.expect_key("seed")?, "seed")?;
    let range_parts: Vec<f64> = cur
        .expect_key("range")?
        .split_whitespace()
        .map(|t| parse_num(t, "range bound"))
        .collect::<CliResult<_>>()?;
    if range_parts.len() != 2 {
        return Err(CliError::Usage("game file: range needs two bounds".into()));
    }
    let range = (range_parts[0], range_parts[1]);
    let joint: usize = action_sizes.iter().product();

    let mut meta = GameFileMeta {
        kind: kind.clone(),
        action_sizes: action_sizes.clone(),
        num_states,
        discount,
        seed,
        range,
        edge_half_width: None,
    };

    let loaded = match kind.as_str() {
        "random" => {
            let declared: usize = parse_num(cur.expect_key("values")?, "value count")?;
            let expected = agents * joint;
            if declared != expected {
                return Err(CliError::Usage(format!(
                    "game file: values block declares {declared}, shape needs {expected}"
                )));
            }
            let mut tensors = Vec::with_capacity(agents);
            for _ in 0..agents {
                let flat = cur.floats(joint, "values")?;
                let tensor = ArrayD::from_shape_vec(IxDyn(&action_sizes), flat)
                    .map_err(|e| CliError::Usage(format!("game file: {e}")))?;
                tensors.push(tensor);
            }
            LoadedGame::Static(
                StaticGame::from_rewards(tensors, range)
                    .map_err(|e| CliError::Usage(e.to_string()))?,
            )
        }
        "polymatrix-zero-sum" => {
            let w: f64 = parse_num(cur.expect_key("edge_half_width")?, "edge half-width")?;
            meta.edge_half_width = Some(w);
            let edge_count: usize = parse_num(cur.expect_key("edges")?, "edge count")?;
            let mut edges = Vec::with_capacity(edge_count);
            for _ in 0..edge_count {
                let header = cur.expect_key("edge")?;
                let idx: Vec<usize> = header
                    .split_whitespace()
                    .map(|t| parse_num(t, "edge endpoint"))
                    .collect::<CliResult<_>>()?;
                if idx.len() != 2 || idx[0] >= agents || idx[1] >= agents {
                    return Err(CliError::Usage(format!(
                        "game file: bad edge header `edge {header}`"
                    )));
                }
                let (a, b) = (idx[0], idx[1]);
                let flat = cur.floats(action_sizes[a] * action_sizes[b], "edge")?;
                let matrix = Array2::from_shape_vec((action_sizes[a], action_sizes[b]), flat)
                    .map_err(|e| CliError::Usage(format!("game file: {e}")))?;
                edges.push(EdgeGame { a, b, matrix });
            }
            LoadedGame::Static(
                StaticGame::from_edges(action_sizes.clone(), edges, range)
                    .map_err(|e| CliError::Usage(e.to_string()))?,
            )
        }
        "random-markov" => {
            let declared: usize = parse_num(cur.expect_key("values")?, "value count")?;
            let expected = num_states * agents * joint;
            if declared != expected {
                return Err(CliError::Usage(format!(
                    "game file: values block declares {declared}, shape needs {expected}"
                )));
            }
            let mut stage_games = Vec::with_capacity(num_states);
            for _ in 0..num_states {
                let mut tensors = Vec::with_capacity(agents);
                for _ in 0..agents {
                    let flat = cur.floats(joint, "values")?;
                    let tensor = ArrayD::from_shape_vec(IxDyn(&action_sizes), flat)
                        .map_err(|e| CliError::Usage(format!("game file: {e}")))?;
                    tensors.push(tensor);
                }
                stage_games.push(
                    StaticGame::from_rewards(tensors, range)
                        .map_err(|e| CliError::Usage(e.to_string()))?,
                );
            }
            let kernel_count: usize = parse_num(cur.expect_key("kernel")?, "kernel count")?;
            if kernel_count != num_states * joint * num_states {
                return Err(CliError::Usage("game file: kernel count mismatch".into()));
            }
            let flat = cur.floats(kernel_count, "kernel")?;
            let kernel = Array3::from_shape_vec((num_states, joint, num_states), flat)
                .map_err(|e| CliError::Usage(format!("game file: {e}")))?;
            let initial_count: usize = parse_num(cur.expect_key("initial")?, "initial count")?;
            if initial_count != num_states {
                return Err(CliError::Usage("game file: initial count mismatch".into()));
            }
            let initial = cur.floats(initial_count, "initial")?;
            LoadedGame::Markov(
                MarkovGame::new(stage_games, kernel, discount, initial)
                    .map_err(|e| CliError::Usage(e.to_string()))?,
            )
        }
        other => {
            return Err(CliError::Usage(format!("game file: unknown kind `{other}`")));
        }
    };
    Ok((loaded, meta))
}
