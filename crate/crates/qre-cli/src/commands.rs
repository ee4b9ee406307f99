//! The five subcommands: generate, run, run-markov, verify, plot.

use std::path::{Path, PathBuf};

use qre_core::dynamics::{run, DynamicsParams};
use qre_core::generators::{random_profile, random_state_profile};
use qre_core::markov::{run_markov_with, MarkovOptions, StatePolicyProfile};
use qre_core::{suites, PolicyProfile};

use crate::config::{InitialPolicySetting, ResolvedConfig};
use crate::error::{CliError, CliResult};
use crate::gamefile;
use crate::svg::{self, Series};
use crate::trace;

pub const STATIC_COLUMNS: [&str; 6] = [
    "iter",
    "qre_gap",
    "ne_gap",
    "bound",
    "aux_residual",
    "wall_time_ms",
];
pub const MARKOV_COLUMNS: [&str; 3] = ["iter", "markov_qre_gap", "wall_time_ms"];

/// Default iteration budgets, sized so the shipped sweeps reach their gap
/// floors.
pub const DEFAULT_STATIC_ITERS: usize = 10_000;
pub const DEFAULT_MARKOV_ITERS: usize = 2_000;

/// Filesystem-safe tag for a temperature: shortest decimal form with `.`
/// as `p` (and `-` as `m`, for exponent forms like `1e-9`).
pub fn tau_file_tag(tau: f64) -> String {
    format!("{tau}").replace('.', "p").replace('-', "m")
}

pub fn trace_path(dir: &Path, tau: f64) -> PathBuf {
    dir.join(format!("trace_tau_{}.csv", tau_file_tag(tau)))
}

fn figure_path(dir: &Path, column: &str) -> PathBuf {
    dir.join(format!("figure_{column}.svg"))
}

fn base_meta(cfg: &ResolvedConfig, kind: &str) -> Vec<(String, String)> {
    let mut meta = vec![
        (
            "tool".to_string(),
            format!("qre {}", env!("CARGO_PKG_VERSION")),
        ),
        ("config_version".to_string(), cfg.version.to_string()),
        ("config_sha256".to_string(), cfg.config_hash.clone()),
        ("kind".to_string(), kind.to_string()),
        ("game".to_string(), cfg.meta.descriptor.clone()),
    ];
    if let Some((lo, hi)) = cfg.meta.edge_range {
        meta.push(("edge_range".to_string(), format!("{lo} {hi}")));
    }
    meta
}

/// Writes the game described by the config's inline spec.
pub fn cmd_generate(cfg: &ResolvedConfig) -> CliResult<PathBuf> {
    let spec = cfg.spec.as_ref().ok_or_else(|| {
        CliError::Usage("generate needs an inline [game] spec, not a game file".into())
    })?;
    let (text, _) = gamefile::render(spec)?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    let path = cfg.out_dir.join("game.txt");
    std::fs::write(&path, text)?;
    Ok(path)
}

fn gap_series(curves: &[(f64, Vec<(f64, f64)>)]) -> Vec<Series> {
    curves
        .iter()
        .map(|(tau, points)| Series {
            label: format!("τ = {tau}"),
            points: points.clone(),
        })
        .collect()
}

fn write_figure(dir: &Path, column: &str, series: &[Series]) -> CliResult<PathBuf> {
    let path = figure_path(dir, column);
    let svg = svg::render(series, column)?;
    std::fs::write(&path, svg)?;
    Ok(path)
}

/// Runs the static sweep: one trace per temperature, same game and initial
/// profile throughout, optional figures.
pub fn cmd_run(cfg: &ResolvedConfig) -> CliResult<Vec<PathBuf>> {
    let game = cfg.static_game()?;
    let sizes = game.action_sizes().to_vec();
    let initial = match &cfg.initial {
        InitialPolicySetting::Named(_) => PolicyProfile::uniform(&sizes),
        InitialPolicySetting::Random { random } => random_profile(&sizes, *random),
    };
    let max_iters = cfg.max_iters.unwrap_or(DEFAULT_STATIC_ITERS);

    // Sweep entries are independent pure functions; fan them out.
    type StaticRun = (f64, f64, qre_core::RunTrace);
    let results: Vec<CliResult<StaticRun>> = std::thread::scope(|scope| {
        let game = &game;
        let initial = &initial;
        let handles: Vec<_> = cfg
            .tau_values
            .iter()
            .map(|&tau| {
                scope.spawn(move || -> CliResult<StaticRun> {
                    let eta = cfg.resolve_eta(tau)?;
                    let params = DynamicsParams::with_limits(eta, tau, max_iters, cfg.stop_gap)
                        .map_err(|e| CliError::Usage(format!("tau = {tau}: {e}")))?;
                    let trace = run(game, initial, &params).map_err(|e| {
                        match CliError::from(e) {
                            CliError::Numeric(m) => {
                                CliError::Numeric(format!("tau = {tau}: {m}"))
                            }
                            other => other,
                        }
                    })?;
                    Ok((tau, eta, trace))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sweep thread panicked"))
            .collect()
    });

    std::fs::create_dir_all(&cfg.out_dir)?;
    let mut paths = Vec::new();
    let mut qre_curves = Vec::new();
    let mut ne_curves = Vec::new();
    for result in results {
        let (tau, eta, tr) = result?;
        let mut meta = base_meta(cfg, "static");
        meta.push(("tau".to_string(), format!("{tau}")));
        meta.push(("eta".to_string(), format!("{eta}")));
        meta.push(("rho".to_string(), format!("{}", tr.rho)));
        meta.push(("initial_policy".to_string(), cfg.initial.descriptor()));
        meta.push(("max_iters".to_string(), max_iters.to_string()));
        meta.push(("stop_gap".to_string(), format!("{}", cfg.stop_gap)));
        meta.push(("converged".to_string(), tr.converged.to_string()));
        let rows: Vec<Vec<f64>> = tr
            .records
            .iter()
            .map(|r| {
                vec![
                    r.iter as f64,
                    r.qre_gap,
                    r.ne_gap,
                    r.bound,
                    r.aux_residual,
                    r.wall_time_ms,
                ]
            })
            .collect();
        let path = trace_path(&cfg.out_dir, tau);
        trace::write_csv(&path, &meta, &STATIC_COLUMNS, &rows)?;
        paths.push(path);
        qre_curves.push((
            tau,
            tr.records
                .iter()
                .map(|r| (r.iter as f64, r.qre_gap))
                .collect(),
        ));
        ne_curves.push((
            tau,
            tr.records
                .iter()
                .map(|r| (r.iter as f64, r.ne_gap))
                .collect(),
        ));
    }
    if cfg.emit_svg {
        paths.push(write_figure(&cfg.out_dir, "qre_gap", &gap_series(&qre_curves))?);
        paths.push(write_figure(&cfg.out_dir, "ne_gap", &gap_series(&ne_curves))?);
    }
    Ok(paths)
}

/// Runs the stochastic-game sweep.
pub fn cmd_run_markov(cfg: &ResolvedConfig) -> CliResult<Vec<PathBuf>> {
    let game = cfg.markov_game()?;
    let sizes = game.action_sizes().to_vec();
    let states = game.num_states();
    let initial = match &cfg.initial {
        InitialPolicySetting::Named(_) => StatePolicyProfile::uniform(&sizes, states),
        InitialPolicySetting::Random { random } => {
            random_state_profile(&sizes, states, *random)
        }
    };
    let max_iters = cfg.max_iters.unwrap_or(DEFAULT_MARKOV_ITERS);
    let opts = MarkovOptions {
        entropy_adjusted_exponent: cfg.markov_entropy_in_exponent,
    };

    type MarkovRun = (f64, f64, qre_core::MarkovTrace);
    let results: Vec<CliResult<MarkovRun>> = std::thread::scope(|scope| {
        let initial = &initial;
        let handles: Vec<_> = cfg
            .tau_values
            .iter()
            .map(|&tau| {
                scope.spawn(move || -> CliResult<MarkovRun> {
                    let eta = cfg.resolve_eta(tau)?;
                    let params = DynamicsParams::with_limits(eta, tau, max_iters, cfg.stop_gap)
                        .map_err(|e| CliError::Usage(format!("tau = {tau}: {e}")))?;
                    let trace =
                        run_markov_with(game, initial, &params, opts).map_err(|e| {
                            match CliError::from(e) {
                                CliError::Numeric(m) => {
                                    CliError::Numeric(format!("tau = {tau}: {m}"))
                                }
                                other => other,
                            }
                        })?;
                    Ok((tau, eta, trace))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sweep thread panicked"))
            .collect()
    });

    std::fs::create_dir_all(&cfg.out_dir)?;
    let mut paths = Vec::new();
    let mut curves = Vec::new();
    for result in results {
        let (tau, eta, tr) = result?;
        let mut meta = base_meta(cfg, "markov");
        meta.push(("discount".to_string(), format!("{}", game.discount())));
        meta.push(("tau".to_string(), format!("{tau}")));
        meta.push(("eta".to_string(), format!("{eta}")));
        meta.push((
            "entropy_in_exponent".to_string(),
            cfg.markov_entropy_in_exponent.to_string(),
        ));
        meta.push(("initial_policy".to_string(), cfg.initial.descriptor()));
        meta.push(("max_iters".to_string(), max_iters.to_string()));
        meta.push(("stop_gap".to_string(), format!("{}", cfg.stop_gap)));
        meta.push(("converged".to_string(), tr.converged.to_string()));
        let rows: Vec<Vec<f64>> = tr
            .records
            .iter()
            .map(|r| vec![r.iter as f64, r.markov_qre_gap, r.wall_time_ms])
            .collect();
        let path = trace_path(&cfg.out_dir, tau);
        trace::write_csv(&path, &meta, &MARKOV_COLUMNS, &rows)?;
        paths.push(path);
        curves.push((
            tau,
            tr.records
                .iter()
                .map(|r| (r.iter as f64, r.markov_qre_gap))
                .collect(),
        ));
    }
    if cfg.emit_svg {
        paths.push(write_figure(
            &cfg.out_dir,
            "markov_qre_gap",
            &gap_series(&curves),
        )?);
    }
    Ok(paths)
}

/// Runs every property suite and returns the JSON summary plus the total
/// violation count.
pub fn cmd_verify(cases: usize) -> (String, usize) {
    let reports = suites::run_all(cases);
    let failures: usize = reports.iter().map(|r| r.failures).sum();
    let summary = serde_json::json!({
        "cases": cases,
        "suites_failed": reports.iter().filter(|r| !r.passed()).count(),
        "total_failures": failures,
        "suites": reports
            .iter()
            .map(|r| {
                serde_json::json!({
                    "name": r.name,
                    "cases": r.cases,
                    "failures": r.failures,
                    "first_failure": r.first_failure,
                })
            })
            .collect::<Vec<_>>(),
    });
    (
        serde_json::to_string_pretty(&summary).expect("summary serializes"),
        failures,
    )
}

/// Re-renders figures from the trace files a previous run left in the
/// output directory.
pub fn cmd_plot(cfg: &ResolvedConfig) -> CliResult<Vec<PathBuf>> {
    let mut parsed = Vec::new();
    for &tau in &cfg.tau_values {
        let path = trace_path(&cfg.out_dir, tau);
        let trace = trace::read_csv(&path)?;
        parsed.push((tau, trace));
    }
    let kind = parsed[0]
        .1
        .meta_value("kind")
        .unwrap_or("static")
        .to_string();
    let columns: &[&str] = if kind == "markov" {
        &["markov_qre_gap"]
    } else {
        &["qre_gap", "ne_gap"]
    };
    let mut paths = Vec::new();
    for column in columns {
        let mut curves = Vec::new();
        for (tau, trace) in &parsed {
            let iters = trace.column("iter")?;
            let gaps = trace.column(column)?;
            curves.push((*tau, iters.into_iter().zip(gaps).collect::<Vec<_>>()));
        }
        paths.push(write_figure(&cfg.out_dir, column, &gap_series(&curves))?);
    }
    Ok(paths)
}
