//! Versioned TOML experiment configuration.
//!
//! A config names a game (an inline generator spec or a path to an
//! exported game file) and the run parameters: temperature sweep, step
//! size (explicit or `"auto"`), iteration budget, stopping gap, initial
//! policy, and output options. Command-line flags override individual
//! fields; the hash recorded in every trace covers the *effective* values,
//! so a trace is traceable to the exact inputs that produced it. Output
//! location never enters the hash.

use serde::Deserialize;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

use qre_core::dynamics::default_learning_rate;
use qre_core::generators::{polymatrix_network, random_game, random_markov_game};
use qre_core::{GameKind, GameSpec, StaticGame};

use crate::error::{CliError, CliResult};
use crate::gamefile::{self, LoadedGame};

pub const CONFIG_VERSION: u32 = 1;
/// Environment variable consulted for the default output directory.
pub const OUTPUT_DIR_ENV: &str = "QRE_OUT_DIR";

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    version: u32,
    game: GameSection,
    run: RunSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GameSection {
    file: Option<PathBuf>,
    kind: Option<String>,
    num_agents: Option<usize>,
    action_sizes: Option<Vec<usize>>,
    seed: Option<u64>,
    num_states: Option<usize>,
    discount: Option<f64>,
    edges: Option<Vec<[usize; 2]>>,
    edge_half_width: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunSection {
    tau_values: Vec<f64>,
    eta: EtaSetting,
    max_iters: Option<usize>,
    stop_gap: Option<f64>,
    initial_policy: Option<InitialPolicySetting>,
    output_dir: Option<PathBuf>,
    emit_svg: Option<bool>,
    markov_entropy_in_exponent: Option<bool>,
}

/// Step size: a literal value or `"auto"` (the contraction-certified
/// default rate, which requires `tau > 2 * sum of action counts`).
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum EtaSetting {
    Value(f64),
    Keyword(String),
}

impl EtaSetting {
    pub fn from_flag(text: &str) -> CliResult<Self> {
        if text == "auto" {
            return Ok(EtaSetting::Keyword("auto".into()));
        }
        text.parse::<f64>()
            .map(EtaSetting::Value)
            .map_err(|_| CliError::Usage(format!("--eta wants a number or `auto`, got `{text}`")))
    }

    fn canonical(&self) -> String {
        match self {
            EtaSetting::Value(v) => format!("{v}"),
            EtaSetting::Keyword(_) => "auto".into(),
        }
    }
}

/// Starting profile: `"uniform"` or `{ random = <seed> }`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum InitialPolicySetting {
    Named(String),
    Random { random: u64 },
}

impl InitialPolicySetting {
    pub fn descriptor(&self) -> String {
        match self {
            InitialPolicySetting::Named(name) => name.clone(),
            InitialPolicySetting::Random { random } => format!("random:{random}"),
        }
    }
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub tau: Option<Vec<f64>>,
    pub eta: Option<String>,
    pub iters: Option<usize>,
    pub svg: bool,
}

/// Descriptive facts about the resolved game, echoed into trace metadata.
#[derive(Debug, Clone)]
pub struct GameMeta {
    pub kind: String,
    pub descriptor: String,
    pub action_sizes: Vec<usize>,
    pub num_states: usize,
    /// Declared entry range of edge matrices; polymatrix games only.
    pub edge_range: Option<(f64, f64)>,
    /// Discount factor; stochastic games only.
    pub discount: Option<f64>,
}

/// A fully validated configuration with every override applied.
#[derive(Debug)]
pub struct ResolvedConfig {
    pub version: u32,
    pub game: LoadedGame,
    /// The inline generator spec, when the game was not loaded from a file.
    pub spec: Option<GameSpec>,
    pub meta: GameMeta,
    pub tau_values: Vec<f64>,
    pub eta: EtaSetting,
    /// Iteration cap; `None` defers to the per-command default.
    pub max_iters: Option<usize>,
    pub stop_gap: f64,
    pub initial: InitialPolicySetting,
    pub out_dir: PathBuf,
    pub emit_svg: bool,
    pub markov_entropy_in_exponent: bool,
    /// SHA-256 of the canonical effective configuration.
    pub config_hash: String,
}

impl ResolvedConfig {
    /// The static game this config describes. A one-state undiscounted
    /// stochastic game collapses to its stage game.
    pub fn static_game(&self) -> CliResult<StaticGame> {
        match &self.game {
            LoadedGame::Static(g) => Ok(g.clone()),
            LoadedGame::Markov(m) if m.num_states() == 1 && m.discount() == 0.0 => {
                Ok(m.stage_game(0).clone())
            }
            LoadedGame::Markov(_) => Err(CliError::Usage(
                "config describes a stochastic game; use run-markov".into(),
            )),
        }
    }

    pub fn markov_game(&self) -> CliResult<&qre_core::MarkovGame> {
        match &self.game {
            LoadedGame::Markov(m) => Ok(m),
            LoadedGame::Static(_) => Err(CliError::Usage(
                "config describes a static game; use run".into(),
            )),
        }
    }

    /// The step size for one sweep entry.
    pub fn resolve_eta(&self, tau: f64) -> CliResult<f64> {
        match &self.eta {
            EtaSetting::Value(v) => Ok(*v),
            EtaSetting::Keyword(_) => default_learning_rate(&self.meta.action_sizes, tau)
                .map_err(|e| CliError::Usage(e.to_string())),
        }
    }
}

fn parse_kind(name: &str) -> CliResult<GameKind> {
    match name {
        "random" => Ok(GameKind::Random),
        "polymatrix-zero-sum" => Ok(GameKind::PolymatrixZeroSum),
        "random-markov" => Ok(GameKind::RandomMarkov),
        other => Err(CliError::Usage(format!(
            "unknown game kind `{other}` (expected random, polymatrix-zero-sum, or random-markov)"
        ))),
    }
}

fn kind_name(kind: GameKind) -> &'static str {
    match kind {
        GameKind::Random => "random",
        GameKind::PolymatrixZeroSum => "polymatrix-zero-sum",
        GameKind::RandomMarkov => "random-markov",
    }
}

fn sizes_csv(sizes: &[usize]) -> String {
    sizes
        .iter()
        .map(|m| m.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

/// Loads, overrides, validates, and hashes a configuration.
pub fn resolve(config_path: &Path, ov: &Overrides) -> CliResult<ResolvedConfig> {
    let text = std::fs::read_to_string(config_path).map_err(|e| {
        CliError::Usage(format!("cannot read config {}: {e}", config_path.display()))
    })?;
    let file: ConfigFile = toml::from_str(&text)
        .map_err(|e| CliError::Usage(format!("{}: {e}", config_path.display())))?;
    if file.version != CONFIG_VERSION {
        return Err(CliError::Usage(format!(
            "config version {} unsupported (this build reads version {CONFIG_VERSION})",
            file.version
        )));
    }

    // --- Game ------------------------------------------------------------
    let g = &file.game;
    let inline_keys_used = g.kind.is_some()
        || g.num_agents.is_some()
        || g.action_sizes.is_some()
        || g.seed.is_some()
        || g.num_states.is_some()
        || g.discount.is_some()
        || g.edges.is_some()
        || g.edge_half_width.is_some();

    let (game, spec, meta, game_hash_line) = if let Some(rel) = &g.file {
        if inline_keys_used {
            return Err(CliError::Usage(
                "[game] must give either `file` or an inline spec, not both".into(),
            ));
        }
        if ov.seed.is_some() {
            return Err(CliError::Usage(
                "--seed only applies to inline game specs, not game files".into(),
            ));
        }
        let path = config_path.parent().unwrap_or(Path::new(".")).join(rel);
        let bytes = std::fs::read(&path).map_err(|e| {
            CliError::Usage(format!("cannot read game file {}: {e}", path.display()))
        })?;
        let sha = hex::encode(Sha256::digest(&bytes));
        let text = String::from_utf8(bytes)
            .map_err(|_| CliError::Usage(format!("{}: not UTF-8 text", path.display())))?;
        let (loaded, fmeta) = gamefile::parse(&text)?;
        let edge_range = match &loaded {
            LoadedGame::Static(game) => game.edges().map(|_| fmeta.range),
            LoadedGame::Markov(_) => None,
        };
        let discount = match &loaded {
            LoadedGame::Markov(m) => Some(m.discount()),
            LoadedGame::Static(_) => None,
        };
        let file_name = rel.display().to_string();
        let meta = GameMeta {
            kind: fmeta.kind.clone(),
            descriptor: format!("file:{file_name} sha256:{sha}"),
            action_sizes: fmeta.action_sizes.clone(),
            num_states: fmeta.num_states,
            edge_range,
            discount,
        };
        (loaded, None, meta, format!("game file sha256={sha}"))
    } else {
        let kind_name_raw = g
            .kind
            .as_deref()
            .ok_or_else(|| CliError::Usage("[game] needs `kind` or `file`".into()))?;
        let kind = parse_kind(kind_name_raw)?;
        let action_sizes = g
            .action_sizes
            .clone()
            .ok_or_else(|| CliError::Usage("[game] needs `action_sizes`".into()))?;
        let num_agents = g.num_agents.unwrap_or(action_sizes.len());
        if kind != GameKind::RandomMarkov {
            if g.num_states.map_or(false, |s| s != 1) {
                return Err(CliError::Usage(
                    "`num_states` only applies to random-markov games".into(),
                ));
            }
            if g.discount.map_or(false, |d| d != 0.0) {
                return Err(CliError::Usage(
                    "`discount` only applies to random-markov games".into(),
                ));
            }
        }
        if kind != GameKind::PolymatrixZeroSum
            && (g.edges.is_some() || g.edge_half_width.is_some())
        {
            return Err(CliError::Usage(
                "`edges` and `edge_half_width` only apply to polymatrix-zero-sum games".into(),
            ));
        }
        let edges = match (&g.edges, kind) {
            (Some(list), _) => list.iter().map(|e| (e[0], e[1])).collect(),
            (None, GameKind::PolymatrixZeroSum) => GameSpec::ring_edges(num_agents),
            (None, _) => vec![],
        };
        let spec = GameSpec {
            kind,
            num_agents,
            action_sizes,
            num_states: g.num_states.unwrap_or(1),
            // Stochastic games default to a 0.95 discount; everything else
            // is undiscounted.
            discount: g.discount.unwrap_or(if kind == GameKind::RandomMarkov {
                0.95
            } else {
                0.0
            }),
            edges,
            edge_half_width: g.edge_half_width.unwrap_or(GameSpec::DEFAULT_EDGE_HALF_WIDTH),
            seed: ov.seed.or(g.seed).unwrap_or(0),
        };
        spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        let loaded = match kind {
            GameKind::Random => LoadedGame::Static(random_game(&spec)?),
            GameKind::PolymatrixZeroSum => LoadedGame::Static(polymatrix_network(&spec)?),
            GameKind::RandomMarkov => LoadedGame::Markov(random_markov_game(&spec)?),
        };
        let edge_range = match &loaded {
            LoadedGame::Static(game) => game.edges().map(|_| game.reward_range()),
            LoadedGame::Markov(_) => None,
        };
        let discount = matches!(kind, GameKind::RandomMarkov).then_some(spec.discount);
        let meta = GameMeta {
            kind: kind_name(kind).to_string(),
            descriptor: format!(
                "{} sizes={} seed={}",
                kind_name(kind),
                sizes_csv(&spec.action_sizes),
                spec.seed
            ),
            action_sizes: spec.action_sizes.clone(),
            num_states: spec.num_states,
            edge_range,
            discount,
        };
        let mut line = format!(
            "game inline kind={} agents={} actions={} states={} discount={} seed={}",
            kind_name(kind),
            spec.num_agents,
            sizes_csv(&spec.action_sizes),
            spec.num_states,
            spec.discount,
            spec.seed
        );
        if kind == GameKind::PolymatrixZeroSum {
            let edges_txt: Vec<String> = spec
                .edges
                .iter()
                .map(|(a, b)| format!("({a},{b})"))
                .collect();
            line.push_str(&format!(
                " edges={} half_width={}",
                edges_txt.join(""),
                spec.edge_half_width
            ));
        }
        (loaded, Some(spec), meta, line)
    };

    // --- Run parameters ---------------------------------------------------
    let tau_values = ov.tau.clone().unwrap_or_else(|| file.run.tau_values.clone());
    if tau_values.is_empty() {
        return Err(CliError::Usage("tau_values must be nonempty".into()));
    }
    for &tau in &tau_values {
        if !tau.is_finite() || tau < 0.0 {
            return Err(CliError::Usage(format!(
                "temperatures must be finite and nonnegative, got {tau}"
            )));
        }
    }

    let eta = match &ov.eta {
        Some(text) => EtaSetting::from_flag(text)?,
        None => file.run.eta.clone(),
    };
    match &eta {
        EtaSetting::Keyword(word) if word != "auto" => {
            return Err(CliError::Usage(format!(
                "eta must be a number or `auto`, got `{word}`"
            )));
        }
        EtaSetting::Keyword(_) => {
            for &tau in &tau_values {
                if let Err(e) = default_learning_rate(&meta.action_sizes, tau) {
                    return Err(CliError::Usage(format!(
                        "eta = \"auto\" does not apply at tau = {tau}: {e}"
                    )));
                }
            }
        }
        EtaSetting::Value(v) => {
            if !v.is_finite() || *v <= 0.0 {
                return Err(CliError::Usage(format!(
                    "eta must be finite and positive, got {v}"
                )));
            }
        }
    }

    let max_iters = ov.iters.or(file.run.max_iters);
    if max_iters == Some(0) {
        return Err(CliError::Usage("max_iters must be at least 1".into()));
    }
    let stop_gap = file.run.stop_gap.unwrap_or(1e-12);
    if !stop_gap.is_finite() || stop_gap < 0.0 {
        return Err(CliError::Usage(format!(
            "stop_gap must be finite and nonnegative, got {stop_gap}"
        )));
    }

    let initial = file
        .run
        .initial_policy
        .clone()
        .unwrap_or(InitialPolicySetting::Named("uniform".into()));
    if let InitialPolicySetting::Named(name) = &initial {
        if name != "uniform" {
            return Err(CliError::Usage(format!(
                "initial_policy must be \"uniform\" or {{ random = <seed> }}, got `{name}`"
            )));
        }
    }

    let out_dir = ov
        .out
        .clone()
        .or(file.run.output_dir.clone())
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let emit_svg = ov.svg || file.run.emit_svg.unwrap_or(false);
    let markov_entropy_in_exponent = file.run.markov_entropy_in_exponent.unwrap_or(false);

    // --- Canonical hash ----------------------------------------------------
    let tau_txt: Vec<String> = tau_values.iter().map(|t| format!("{t}")).collect();
    let canonical = format!(
        "version {}\n{}\ntau {}\neta {}\nmax_iters {}\nstop_gap {}\ninitial {}\nmarkov_entropy_in_exponent {}\n",
        file.version,
        game_hash_line,
        tau_txt.join(" "),
        eta.canonical(),
        max_iters.map_or("default".to_string(), |n| n.to_string()),
        stop_gap,
        initial.descriptor(),
        markov_entropy_in_exponent,
    );
    let config_hash = hex::encode(Sha256::digest(canonical.as_bytes()));

    Ok(ResolvedConfig {
        version: file.version,
        game,
        spec,
        meta,
        tau_values,
        eta,
        max_iters,
        stop_gap,
        initial,
        out_dir,
        emit_svg,
        markov_entropy_in_exponent,
        config_hash,
    })
}
