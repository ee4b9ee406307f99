//! Acceptance gate: one test per release criterion, each checking the
//! stated quantitative tolerances end to end. Criteria 3, 4, and 8 drive
//! the shipped figure configs; criterion 9 double-runs the binary itself.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use qre_cli::config::{resolve, InitialPolicySetting, Overrides, ResolvedConfig};
use qre_cli::trace::read_csv;
use qre_core::dynamics::{run, DynamicsParams};
use qre_core::generators::{random_game, random_profile, random_state_profile, GameKind, GameSpec};
use qre_core::markov::{markov_npg_step, markov_qre_gap, run_markov_with, MarkovOptions};
use qre_core::{npg_step, qre_gap, suites, PolicyProfile, RunTrace, StaticGame};

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

fn resolved(name: &str) -> ResolvedConfig {
    resolve(&config_path(name), &Overrides::default()).unwrap()
}

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

fn initial_for(cfg: &ResolvedConfig, sizes: &[usize]) -> PolicyProfile {
    match &cfg.initial {
        InitialPolicySetting::Named(_) => PolicyProfile::uniform(sizes),
        InitialPolicySetting::Random { random } => random_profile(sizes, *random),
    }
}

fn sweep(cfg: &ResolvedConfig, default_iters: usize) -> Vec<(f64, RunTrace)> {
    let game = cfg.static_game().unwrap();
    let initial = initial_for(cfg, game.action_sizes());
    let max_iters = cfg.max_iters.unwrap_or(default_iters);
    cfg.tau_values
        .iter()
        .map(|&tau| {
            let eta = cfg.resolve_eta(tau).unwrap();
            let params = DynamicsParams::with_limits(eta, tau, max_iters, cfg.stop_gap).unwrap();
            (tau, run(&game, &initial, &params).unwrap())
        })
        .collect()
}

/// Least-squares slope of log10(gap) against the iteration index over
/// iterations 100..=1000, ignoring points at or below 1e-14. Runs that have
/// already left the window (converged earlier) rank as -inf: the fastest.
fn decay_slope(trace: &RunTrace) -> f64 {
    let pts: Vec<(f64, f64)> = trace
        .records
        .iter()
        .filter(|r| (100..=1000).contains(&r.iter) && r.qre_gap > 1e-14)
        .map(|r| (r.iter as f64, r.qre_gap.log10()))
        .collect();
    if pts.len() < 2 {
        return f64::NEG_INFINITY;
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

#[test]
fn criterion_1_contraction_envelope_over_100_seeds() {
    let start = Instant::now();
    let tau = 48.0;
    let eta = 1.0 / 48.0;
    for seed in 0..100u64 {
        let game = random_game(&random_spec(vec![3, 4, 5], seed)).unwrap();
        let initial = random_profile(&[3, 4, 5], seed.wrapping_add(1000));
        let params = DynamicsParams::with_limits(eta, tau, 60, 0.0).unwrap();
        let trace = run(&game, &initial, &params).unwrap();
        assert_eq!(
            trace.rho.to_bits(),
            0.5f64.to_bits(),
            "seed {seed}: contraction factor must be exactly 0.5"
        );
        let c0 = trace.initial_residual;
        assert!(c0.is_finite() && c0 > 0.0, "seed {seed}: bad C0 {c0}");
        let mut reached = None;
        for rec in &trace.records {
            let envelope = 2.0 * tau * 0.5f64.powi(rec.iter as i32) * c0 + 1e-10;
            assert!(
                rec.qre_gap <= envelope,
                "seed {seed} iterate {}: gap {} above envelope {envelope}",
                rec.iter,
                rec.qre_gap
            );
            if reached.is_none() && rec.qre_gap < 1e-10 {
                reached = Some(rec.iter);
            }
        }
        let hit = reached.unwrap_or(usize::MAX);
        assert!(
            hit <= 60,
            "seed {seed}: gap never dropped below 1e-10 within 60 iterations"
        );
    }
    let elapsed = start.elapsed();
    assert!(
        elapsed < Duration::from_secs(5),
        "envelope sweep took {elapsed:?}, budget is 5 s"
    );
    println!("criterion 1 PASS: rho = 0.5 exactly, envelope and 60-iteration convergence hold on 100 seeds in {elapsed:?}");
}

#[test]
fn criterion_2_residual_contraction_over_100_seeds() {
    let tau = 48.0;
    let eta = 1.0 / 48.0;
    for seed in 0..100u64 {
        let game = random_game(&random_spec(vec![3, 4, 5], seed)).unwrap();
        let initial = random_profile(&[3, 4, 5], seed.wrapping_add(2000));
        let params = DynamicsParams::with_limits(eta, tau, 200, 1e-12).unwrap();
        let trace = run(&game, &initial, &params).unwrap();
        let rho = trace.rho;
        assert!(rho.is_finite() && rho < 1.0);
        for pair in trace.records.windows(2) {
            assert!(
                pair[1].aux_residual <= rho * pair[0].aux_residual + 1e-12,
                "seed {seed} iterate {}: residual {} -> {} breaks the per-step contraction",
                pair[0].iter,
                pair[0].aux_residual,
                pair[1].aux_residual
            );
        }
        for rec in &trace.records {
            assert!(
                rec.qre_gap <= 2.0 * tau * rec.aux_residual,
                "seed {seed} iterate {}: gap {} exceeds 2*tau*residual {}",
                rec.iter,
                rec.qre_gap,
                2.0 * tau * rec.aux_residual
            );
        }
    }
    println!("criterion 2 PASS: residual contracts per step and dominates the gap on 100 seeds");
}

#[test]
fn criterion_3_temperature_sweep_reproduction() {
    let cfg = resolved("fig1.toml");
    assert_eq!(cfg.tau_values, vec![0.0, 0.001, 0.1, 1.0, 48.0]);
    let runs = sweep(&cfg, qre_cli::commands::DEFAULT_STATIC_ITERS);

    let by_tau = |t: f64| &runs.iter().find(|(tau, _)| *tau == t).unwrap().1;

    // Unregularized dynamics never settle.
    let min_unreg = by_tau(0.0)
        .records
        .iter()
        .map(|r| r.qre_gap)
        .fold(f64::INFINITY, f64::min);
    assert!(
        min_unreg > 1e-3,
        "tau = 0 trace dipped to {min_unreg}, expected to stay above 1e-3"
    );
    assert_eq!(by_tau(0.0).records.len(), 10_001);

    // Mild regularization already converges.
    let hit = by_tau(0.1)
        .records
        .iter()
        .find(|r| r.qre_gap < 1e-6)
        .map(|r| r.iter);
    assert!(
        hit.is_some_and(|it| it <= 10_000),
        "tau = 0.1 never fell below 1e-6 within 10^4 iterations"
    );

    // Decay rate strictly improves with tau among converging runs.
    let converging: Vec<(f64, f64)> = runs
        .iter()
        .filter(|(_, trace)| trace.records.iter().any(|r| r.qre_gap < 1e-6))
        .map(|(tau, trace)| (*tau, decay_slope(trace)))
        .collect();
    assert!(converging.len() >= 3, "expected at least three converging runs");
    for pair in converging.windows(2) {
        assert!(
            pair[1].1 < pair[0].1,
            "slope did not improve from tau {} ({}) to tau {} ({})",
            pair[0].0,
            pair[0].1,
            pair[1].0,
            pair[1].1
        );
    }
    println!(
        "criterion 3 PASS: tau = 0 floor, tau = 0.1 convergence, slopes {converging:?}"
    );
}

#[test]
fn criterion_4_network_plateau_and_zero_sum() {
    let cfg = resolved("fig2.toml");
    let runs = sweep(&cfg, qre_cli::commands::DEFAULT_STATIC_ITERS);
    let plateau = |t: f64| -> f64 {
        let records = &runs.iter().find(|(tau, _)| *tau == t).unwrap().1.records;
        let tail: Vec<f64> = records.iter().rev().take(100).map(|r| r.ne_gap).collect();
        tail.iter().sum::<f64>() / tail.len() as f64
    };
    let moderate = plateau(1.0);
    let large = plateau(300.0);
    assert!(
        moderate < large,
        "moderate-tau ne_gap plateau {moderate} is not strictly below the large-tau plateau {large}"
    );

    // Pairwise zero-sum rewards cancel across agents on sampled joints.
    let game: StaticGame = cfg.static_game().unwrap();
    let sizes = game.action_sizes().to_vec();
    let joint_count: usize = sizes.iter().product();
    let mut joint = vec![0usize; sizes.len()];
    let mut worst: f64 = 0.0;
    for k in 0..10_000usize {
        let mut idx = (k.wrapping_mul(99_991) + 17) % joint_count;
        for (slot, &m) in joint.iter_mut().zip(&sizes).rev() {
            *slot = idx % m;
            idx /= m;
        }
        let total: f64 = (0..sizes.len()).map(|i| game.reward(i, &joint)).sum();
        worst = worst.max(total.abs());
    }
    assert!(
        worst <= 1e-12,
        "sampled joint rewards sum to {worst}, expected zero-sum within 1e-12"
    );
    println!(
        "criterion 4 PASS: plateau {moderate:.6} < {large:.6}; zero-sum residual {worst:.2e} on 10^4 joints"
    );
}

#[test]
fn criterion_5_fisher_bridge_on_100_instances() {
    let report = suites::suite_fisher_step_equivalence(100);
    assert_eq!(
        report.failures, 0,
        "Fisher-route update disagreed with the closed form: {:?}",
        report.first_failure
    );
    println!("criterion 5 PASS: preconditioned ascent matches the closed-form update (1e-8) on {} instances", report.cases);
}

#[test]
fn criterion_6_gradient_checks() {
    let fd = suites::suite_finite_difference_agreement(1000);
    assert_eq!(fd.failures, 0, "finite differences: {:?}", fd.first_failure);
    let tangent = suites::suite_gradient_tangency(1000);
    assert_eq!(tangent.failures, 0, "tangency: {:?}", tangent.first_failure);
    let vanish = suites::suite_gradient_vanishes_at_soft_response(200);
    assert_eq!(vanish.failures, 0, "stationarity: {:?}", vanish.first_failure);
    println!(
        "criterion 6 PASS: finite-difference agreement x{}, tangency x{}, soft-response stationarity x{}",
        fd.cases, tangent.cases, vanish.cases
    );
}

#[test]
fn criterion_7_policy_map_inequalities() {
    let lipschitz = suites::suite_log_policy_lipschitz(1000);
    assert_eq!(
        lipschitz.failures, 0,
        "log-policy Lipschitz: {:?}",
        lipschitz.first_failure
    );
    let tv = suites::suite_product_tv_bound(1000);
    assert_eq!(tv.failures, 0, "product TV bound: {:?}", tv.first_failure);
    println!(
        "criterion 7 PASS: log-policy Lipschitz x{} and product TV bound x{} with zero violations",
        lipschitz.cases, tv.cases
    );
}

#[test]
fn criterion_8_markov_reduction_and_sweep() {
    // One-state undiscounted trajectories coincide with the static ones.
    let params = DynamicsParams::with_limits(1.0 / 60.0, 30.0, 200, 0.0).unwrap();
    for seed in 0..10u64 {
        let spec = GameSpec {
            kind: GameKind::RandomMarkov,
            num_agents: 2,
            action_sizes: vec![3, 4],
            num_states: 1,
            discount: 0.0,
            edges: vec![],
            edge_half_width: GameSpec::DEFAULT_EDGE_HALF_WIDTH,
            seed,
        };
        let mgame = qre_core::generators::random_markov_game(&spec).unwrap();
        let game = mgame.stage_game(0).clone();
        let mut state_profile = random_state_profile(&[3, 4], 1, seed.wrapping_add(500));
        let mut flat_profile = state_profile.at_state(0);
        for step in 0..200 {
            state_profile = markov_npg_step(&mgame, &state_profile, &params).unwrap();
            flat_profile = npg_step(&game, &flat_profile, &params).unwrap();
            for agent in 0..2 {
                let a = state_profile.policy(agent, 0);
                let b = flat_profile.policy(agent);
                let diff = a
                    .iter()
                    .zip(b)
                    .map(|(x, y)| (x - y).abs())
                    .fold(0.0, f64::max);
                assert!(
                    diff <= 1e-10,
                    "seed {seed} step {step} agent {agent}: policies diverged by {diff}"
                );
            }
            let mg = markov_qre_gap(&mgame, &state_profile, params.tau)
                .unwrap()
                .max_gap;
            let sg = qre_gap(&game, &flat_profile, params.tau).unwrap().max_gap;
            assert!(
                (mg - sg).abs() <= 1e-10,
                "seed {seed} step {step}: gaps diverged ({mg} vs {sg})"
            );
        }
    }

    // The shipped stochastic-game sweep decays monotonically at its
    // largest temperature.
    let cfg = resolved("fig3.toml");
    let mgame = cfg.markov_game().unwrap();
    let sizes = mgame.action_sizes().to_vec();
    let initial = match &cfg.initial {
        InitialPolicySetting::Random { random } => {
            random_state_profile(&sizes, mgame.num_states(), *random)
        }
        InitialPolicySetting::Named(_) => {
            qre_core::markov::StatePolicyProfile::uniform(&sizes, mgame.num_states())
        }
    };
    let largest = cfg
        .tau_values
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let eta = cfg.resolve_eta(largest).unwrap();
    let iters = cfg.max_iters.unwrap_or(qre_cli::commands::DEFAULT_MARKOV_ITERS);
    let params = DynamicsParams::with_limits(eta, largest, iters, cfg.stop_gap).unwrap();
    let opts = MarkovOptions {
        entropy_adjusted_exponent: cfg.markov_entropy_in_exponent,
    };
    let trace = run_markov_with(&mgame, &initial, &params, opts).unwrap();
    let gaps: Vec<f64> = trace.records.iter().map(|r| r.markov_qre_gap).collect();
    for (k, pair) in gaps.windows(2).enumerate() {
        assert!(
            pair[1] <= pair[0] + 1e-9,
            "iterate {k}: markov_qre_gap rose from {} to {}",
            pair[0],
            pair[1]
        );
    }
    let (first, last) = (gaps[0], *gaps.last().unwrap());
    assert!(
        last < first / 100.0,
        "expected at least two decades of decay, got {first} -> {last}"
    );
    println!(
        "criterion 8 PASS: one-state reduction matches over 200 steps x10 seeds; tau = {largest} decays {first:.3e} -> {last:.3e} monotonically"
    );
}

#[test]
fn criterion_9_cli_is_byte_reproducible() {
    let qre = env!("CARGO_BIN_EXE_qre");
    let dir = tempfile::tempdir().unwrap();
    let cfg_static = dir.path().join("static.toml");
    fs::write(
        &cfg_static,
        r#"
version = 1
[game]
kind = "polymatrix-zero-sum"
action_sizes = [3, 3, 3]
seed = 2
[run]
tau_values = [0.7, 30.0]
eta = 0.01
max_iters = 250
initial_policy = { random = 8 }
emit_svg = true
"#,
    )
    .unwrap();
    let cfg_markov = dir.path().join("markov.toml");
    fs::write(
        &cfg_markov,
        r#"
version = 1
[game]
kind = "random-markov"
action_sizes = [2, 3]
num_states = 3
discount = 0.8
seed = 5
[run]
tau_values = [6.0]
eta = 0.05
max_iters = 60
initial_policy = { random = 3 }
emit_svg = true
"#,
    )
    .unwrap();

    let invoke = |args: &[&str], out_dir: &Path| {
        let out = Command::new(qre)
            .env_remove("QRE_OUT_DIR")
            .args(args)
            .arg("--out")
            .arg(out_dir)
            .output()
            .unwrap();
        assert_eq!(
            out.status.code(),
            Some(0),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        out.stdout
    };
    let mask = |text: &str| -> String {
        text.lines()
            .map(|line| {
                if line.starts_with('#') || line.starts_with("iter") {
                    line.to_string()
                } else {
                    line.rfind(',').map_or_else(|| line.to_string(), |c| line[..c].to_string())
                }
            })
            .collect::<Vec<_>>()
            .join("\n")
    };
    let compare_dirs = |a: &Path, b: &Path| {
        let mut names: Vec<String> = fs::read_dir(a)
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        names.sort();
        let mut names_b: Vec<String> = fs::read_dir(b)
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        names_b.sort();
        assert_eq!(names, names_b, "output sets differ");
        for name in &names {
            let left = fs::read(a.join(name)).unwrap();
            let right = fs::read(b.join(name)).unwrap();
            if name.ends_with(".csv") {
                assert_eq!(
                    mask(&String::from_utf8(left).unwrap()),
                    mask(&String::from_utf8(right).unwrap()),
                    "{name} differs beyond wall time"
                );
            } else {
                assert_eq!(left, right, "{name} differs");
            }
        }
        names.len()
    };

    let mut compared = 0;
    let cs = cfg_static.to_str().unwrap();
    let cm = cfg_markov.to_str().unwrap();
    for (label, args) in [
        ("generate", vec!["generate", "--config", cs]),
        ("run", vec!["run", "--config", cs]),
        ("run-markov", vec!["run-markov", "--config", cm]),
        ("verify", vec!["verify", "--seed", "4"]),
    ] {
        let a = dir.path().join(format!("{label}_a"));
        let b = dir.path().join(format!("{label}_b"));
        let out_a = invoke(&args, &a);
        let out_b = invoke(&args, &b);
        if label == "verify" {
            assert_eq!(out_a, out_b, "verify stdout differs between runs");
        }
        compared += compare_dirs(&a, &b);
    }

    // plot re-renders figures from the CSVs alone.
    let run_dir = dir.path().join("run_a");
    for sub in ["plot_a", "plot_b"] {
        let plot_dir = dir.path().join(sub);
        fs::create_dir_all(&plot_dir).unwrap();
        for entry in fs::read_dir(&run_dir).unwrap() {
            let entry = entry.unwrap();
            let name = entry.file_name().into_string().unwrap();
            if name.ends_with(".csv") {
                fs::copy(entry.path(), plot_dir.join(name)).unwrap();
            }
        }
        invoke(&["plot", "--config", cs], &plot_dir);
    }
    compared += compare_dirs(&dir.path().join("plot_a"), &dir.path().join("plot_b"));
    let figure = |p: &str| dir.path().join(p).join("figure_qre_gap.svg");
    assert_eq!(
        fs::read(figure("plot_a")).unwrap(),
        fs::read(figure("run_a")).unwrap(),
        "plot output differs from the run-time figure"
    );

    // Spot-check that the traces parse and carry the config hash.
    let parsed = read_csv(&run_dir.join("trace_tau_30.csv")).unwrap();
    assert!(parsed.meta_value("config_sha256").is_some());
    println!("criterion 9 PASS: double runs byte-identical across {compared} files (wall time excluded)");
}
