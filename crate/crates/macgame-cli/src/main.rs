//! `macgame`: generate, solve, audit, and simulate power-allocation games
//! on parallel multiple access channels.
//!
//! Exit codes: 0 success/converged, 2 usage error, 3 non-convergence or
//! failed verification, 4 I/O error.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use macgame::dynamics::{integrate, IntegrateOptions, StopReason};
use macgame::equilibrium::{
    equilibrium_face_dim, kkt_residual, profile_graph, solve_potential_min,
    solve_sequential_waterfilling, waterfill_ratio_deviation, EquilibriumReport, SolveOptions,
    SolverKind, DEFAULT_SUPPORT_TOL,
};
use macgame::game::{GainDistribution, Game, PowerProfile};
use macgame::io;
use macgame::structure::{check_conditions, degeneracy_index, DEFAULT_RANK_TOL};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use config::ScenarioConfig;

const EXIT_NONCONVERGED: u8 = 3;
const EXIT_USAGE: u8 = 2;
const EXIT_IO: u8 = 4;

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn io(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_IO,
            message: message.into(),
        }
    }

    fn nonconverged(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_NONCONVERGED,
            message: message.into(),
        }
    }
}

type CmdResult = Result<(), Failure>;

#[derive(Parser)]
#[command(
    name = "macgame",
    about = "Power-allocation games on parallel multiple access channels",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a game document (random gains, or a collinear degenerate
    /// construction).
    Generate(GenerateArgs),
    /// Compute a Nash equilibrium and write the report.
    Solve(SolveArgs),
    /// Audit the uniqueness conditions and degeneracy of a game.
    Check(CheckArgs),
    /// Integrate the replicator dynamics and write the trajectory CSV.
    Simulate(SimulateArgs),
    /// Run the invariant suite on a game (and optionally a profile).
    Verify(VerifyArgs),
    /// Solve and audit many random instances, writing a CSV summary.
    Batch(BatchArgs),
}

/// Game source shared by most commands: an inline document or a random
/// specification. Exactly one source must be given.
#[derive(Args, Clone)]
struct GameSource {
    /// Scenario config file; command-line flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Read the game from a game document.
    #[arg(long, value_name = "FILE")]
    game: Option<PathBuf>,

    /// Number of users for a random game.
    #[arg(short = 'K', long)]
    users: Option<usize>,

    /// Number of nodes for a random game.
    #[arg(short = 'A', long)]
    nodes: Option<usize>,

    /// Seed for a random game.
    #[arg(long)]
    seed: Option<u64>,

    /// Gain law: exponential | log_uniform.
    #[arg(long)]
    distribution: Option<String>,

    /// Build a degenerate game: row k of the gains is factor^k times row 0.
    #[arg(long, value_name = "FACTOR")]
    collinear: Option<f64>,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    source: GameSource,

    /// Output path for the game document (default game.toml).
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SolverFlags {
    /// Solver: pgd (projected gradient) | swf (sequential water-filling).
    #[arg(long)]
    solver: Option<String>,

    /// Target KKT residual.
    #[arg(long)]
    tol: Option<f64>,

    /// Iteration cap (gradient steps or water-filling rounds).
    #[arg(long)]
    max_iters: Option<usize>,

    /// Relative support threshold recorded in reports.
    #[arg(long)]
    support_tol: Option<f64>,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    source: GameSource,

    #[command(flatten)]
    solver: SolverFlags,

    /// Initial profile: uniform | random.
    #[arg(long)]
    init: Option<String>,

    /// Seed for a random initial profile.
    #[arg(long)]
    init_seed: Option<u64>,

    /// Output path for the equilibrium report (default equilibrium.toml).
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    source: GameSource,

    /// Rank tolerance for the degeneracy index.
    #[arg(long)]
    rank_tol: Option<f64>,

    /// Output path for the condition report (default conditions.toml).
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    source: GameSource,

    /// Initial profile: uniform | random | vertex | file.
    #[arg(long)]
    init: Option<String>,

    /// Seed for a random-interior initial profile.
    #[arg(long)]
    init_seed: Option<u64>,

    /// Vertex assignment, one node index per user (e.g. "0,2,1").
    #[arg(long, value_name = "NODES")]
    vertex: Option<String>,

    /// Profile document for an explicit initial condition.
    #[arg(long, value_name = "FILE")]
    init_file: Option<PathBuf>,

    /// Integration step size.
    #[arg(long)]
    step: Option<f64>,

    /// Time horizon.
    #[arg(long)]
    horizon: Option<f64>,

    /// Stationarity residual at which the run stops as converged.
    #[arg(long)]
    tol: Option<f64>,

    /// Store every n-th step.
    #[arg(long)]
    stride: Option<usize>,

    /// KL reference: auto | none.
    #[arg(long)]
    kl: Option<String>,

    /// Output path for the trajectory CSV (default trajectory.csv; a
    /// .meta.toml sidecar is written next to it).
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    source: GameSource,

    /// Profile document to verify against the game.
    #[arg(long, value_name = "FILE")]
    profile: Option<PathBuf>,

    /// Deviation samples for the exact-potential check.
    #[arg(long, default_value_t = 200)]
    samples: usize,

    /// Sampling seed for the checks.
    #[arg(long, default_value_t = 0)]
    check_seed: u64,

    /// Residual below which a profile is treated as a claimed equilibrium.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
}

#[derive(Args)]
struct BatchArgs {
    #[command(flatten)]
    source: GameSource,

    #[command(flatten)]
    solver: SolverFlags,

    /// Number of random instances.
    #[arg(long)]
    count: Option<usize>,

    /// Largest number of users to draw.
    #[arg(long)]
    users_max: Option<usize>,

    /// Largest number of nodes to draw.
    #[arg(long)]
    nodes_max: Option<usize>,

    /// Solver starts per instance for the multi-start agreement check.
    #[arg(long)]
    inits: Option<usize>,

    /// Directory for per-instance game/equilibrium/condition documents.
    #[arg(long, value_name = "DIR")]
    reports_dir: Option<PathBuf>,

    /// Output path for the CSV summary (default batch.csv).
    #[arg(short, long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    // MACGAME_THREADS caps batch parallelism.
    if let Ok(threads) = std::env::var("MACGAME_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build_global();
        }
    }

    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Solve(args) => cmd_solve(args),
        Command::Check(args) => cmd_check(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Batch(args) => cmd_batch(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<ScenarioConfig, Failure> {
    match path {
        Some(p) => ScenarioConfig::load(p).map_err(Failure::usage),
        None => Ok(ScenarioConfig::default()),
    }
}

fn parse_distribution(name: &str) -> Result<GainDistribution, Failure> {
    name.parse::<GainDistribution>()
        .map_err(|e| Failure::usage(e.to_string()))
}

/// Provenance of a resolved game, carried into the documents it produces.
struct ResolvedGame {
    game: Game,
    seed: Option<u64>,
    distribution: Option<GainDistribution>,
}

fn resolve_game(source: &GameSource, cfg: &ScenarioConfig) -> Result<ResolvedGame, Failure> {
    let file = source.game.clone().or_else(|| cfg.game.file.clone());
    let users = source.users.or(cfg.game.users);
    let nodes = source.nodes.or(cfg.game.nodes);
    let seed = source.seed.or(cfg.game.seed);
    let collinear = source.collinear.or(cfg.game.collinear);
    let dist_name = source
        .distribution
        .clone()
        .or_else(|| cfg.game.distribution.clone());

    let has_random_spec = users.is_some() || nodes.is_some();
    match (file, has_random_spec) {
        (Some(_), true) => Err(Failure::usage(
            "give either --game FILE or a random spec (--users/--nodes), not both",
        )),
        (Some(path), false) => {
            let (game, doc) = io::read_game(&path)
                .map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
            Ok(ResolvedGame {
                game,
                seed: doc.seed,
                distribution: doc.gain_distribution,
            })
        }
        (None, _) => {
            let (users, nodes) = match (users, nodes) {
                (Some(k), Some(a)) => (k, a),
                _ => {
                    return Err(Failure::usage(
                        "no game source: give --game FILE or both --users and --nodes",
                    ))
                }
            };
            if users == 0 || nodes == 0 {
                return Err(Failure::usage("--users and --nodes must be at least 1"));
            }
            let distribution = match dist_name {
                Some(name) => parse_distribution(&name)?,
                None => GainDistribution::default(),
            };
            let seed_value = seed.unwrap_or(0);
            let game = match collinear {
                Some(factor) => {
                    Game::random_collinear(users, nodes, seed_value, factor, distribution)
                }
                None => Game::random(users, nodes, seed_value, distribution),
            }
            .map_err(|e| Failure::usage(e.to_string()))?;
            Ok(ResolvedGame {
                game,
                seed: Some(seed_value),
                distribution: Some(distribution),
            })
        }
    }
}

fn resolve_solver(flags: &SolverFlags, cfg: &ScenarioConfig) -> Result<(SolverKind, SolveOptions), Failure> {
    let name = flags
        .solver
        .clone()
        .or_else(|| cfg.solver.solver.clone())
        .unwrap_or_else(|| "pgd".to_string());
    let kind = name
        .parse::<SolverKind>()
        .map_err(|e| Failure::usage(e.to_string()))?;
    let defaults = SolveOptions::default();
    let opts = SolveOptions {
        tol: flags.tol.or(cfg.solver.tol).unwrap_or(defaults.tol),
        max_iters: flags
            .max_iters
            .or(cfg.solver.max_iters)
            .unwrap_or(defaults.max_iters),
        support_tol: flags
            .support_tol
            .or(cfg.solver.support_tol)
            .unwrap_or(defaults.support_tol),
    };
    if !(opts.tol > 0.0) || !(opts.support_tol > 0.0) {
        return Err(Failure::usage("tolerances must be positive"));
    }
    Ok((kind, opts))
}

fn run_solver(
    kind: SolverKind,
    game: &Game,
    init: Option<&PowerProfile>,
    opts: &SolveOptions,
) -> EquilibriumReport {
    match kind {
        SolverKind::ProjectedGradient => solve_potential_min(game, init, opts),
        SolverKind::SequentialWaterfilling => solve_sequential_waterfilling(game, init, opts),
    }
}

fn write_or_io<T>(result: macgame::Result<T>, path: &Path) -> Result<T, Failure> {
    result.map_err(|e| Failure::io(format!("{}: {e}", path.display())))
}

// ---- generate ------------------------------------------------------------------

fn cmd_generate(args: GenerateArgs) -> CmdResult {
    let cfg = load_config(&args.source.config)?;
    if args.source.game.is_some() || cfg.game.file.is_some() {
        return Err(Failure::usage("generate builds random games; --game is not accepted"));
    }
    let resolved = resolve_game(&args.source, &cfg)?;
    let out = args.out.or_else(|| cfg.output.out.clone()).unwrap_or_else(|| PathBuf::from("game.toml"));
    write_or_io(
        io::write_game(&resolved.game, resolved.seed, resolved.distribution, &out),
        &out,
    )?;
    println!(
        "generated game: K={} A={} seed={} distribution={} hash={} -> {}",
        resolved.game.num_users(),
        resolved.game.num_nodes(),
        resolved.seed.unwrap_or(0),
        resolved.distribution.unwrap_or_default().name(),
        &resolved.game.content_hash()[..16],
        out.display()
    );
    Ok(())
}

// ---- solve ---------------------------------------------------------------------

fn cmd_solve(args: SolveArgs) -> CmdResult {
    let cfg = load_config(&args.source.config)?;
    let resolved = resolve_game(&args.source, &cfg)?;
    let (kind, opts) = resolve_solver(&args.solver, &cfg)?;

    let init_name = args.init.or_else(|| cfg.dynamics.init.clone());
    let init_seed = args.init_seed.or(cfg.dynamics.init_seed);
    let init = match init_name.as_deref() {
        None | Some("uniform") => None,
        Some("random") => Some(resolved.game.random_interior_profile(init_seed.unwrap_or(0))),
        Some(other) => {
            return Err(Failure::usage(format!(
                "unknown solver init `{other}` (expected `uniform` or `random`)"
            )))
        }
    };

    let report = run_solver(kind, &resolved.game, init.as_ref(), &opts);
    let out = args.out.or_else(|| cfg.output.out.clone()).unwrap_or_else(|| PathBuf::from("equilibrium.toml"));
    write_or_io(
        io::write_equilibrium_report(&report, &resolved.game, init_seed, &out),
        &out,
    )?;
    println!(
        "{} on K={} A={}: converged={} iterations={} kkt_residual={:.3e} potential={:.12} -> {}",
        report.solver.name(),
        resolved.game.num_users(),
        resolved.game.num_nodes(),
        report.converged,
        report.iterations,
        report.kkt_residual,
        report.potential_value,
        out.display()
    );
    if report.converged {
        Ok(())
    } else {
        Err(Failure::nonconverged(format!(
            "solver stopped at residual {:.3e} after {} iterations (tol {:.1e})",
            report.kkt_residual, report.iterations, report.tolerance
        )))
    }
}

// ---- check ---------------------------------------------------------------------

fn cmd_check(args: CheckArgs) -> CmdResult {
    let cfg = load_config(&args.source.config)?;
    let resolved = resolve_game(&args.source, &cfg)?;
    let game = &resolved.game;

    let mut report = check_conditions(game);
    if let Some(rank_tol) = args.rank_tol {
        if !(rank_tol > 0.0) {
            return Err(Failure::usage("--rank-tol must be positive"));
        }
        let d = degeneracy_index(game, rank_tol);
        report.degeneracy_index = d.index;
        report.constraint_rank = d.constraint_rank;
    }

    let out = args.out.or_else(|| cfg.output.out.clone()).unwrap_or_else(|| PathBuf::from("conditions.toml"));
    write_or_io(io::write_condition_report(&report, game, &out), &out)?;

    println!(
        "conditions for K={} A={} (hash {}):",
        game.num_users(),
        game.num_nodes(),
        &game.content_hash()[..16]
    );
    println!(
        "  rho(S_max) = {:.6} (lower bound {:.6})  Cmax holds: {}",
        report.rho_smax, report.spectral_lower_bound, report.cmax_holds
    );
    let min_rho = report.rho_s_alpha.iter().copied().fold(f64::INFINITY, f64::min);
    println!(
        "  min_a rho(S(a)) = {:.6}  C1 holds: {}  C2 holds: {}",
        min_rho, report.c1_holds, report.c2_holds
    );
    println!(
        "  degeneracy index = {} (constraint rank {})  -> {}",
        report.degeneracy_index,
        report.constraint_rank,
        out.display()
    );
    Ok(())
}

// ---- simulate ------------------------------------------------------------------

fn parse_vertex_list(text: &str) -> Result<Vec<usize>, Failure> {
    text.split(',')
        .map(|part| {
            part.trim()
                .parse::<usize>()
                .map_err(|_| Failure::usage(format!("bad vertex assignment `{part}`")))
        })
        .collect()
}

fn cmd_simulate(args: SimulateArgs) -> CmdResult {
    let cfg = load_config(&args.source.config)?;
    let resolved = resolve_game(&args.source, &cfg)?;
    let game = &resolved.game;

    let defaults = IntegrateOptions::default();
    let opts = IntegrateOptions {
        step: args.step.or(cfg.dynamics.step).unwrap_or(defaults.step),
        horizon: args
            .horizon
            .or(cfg.dynamics.horizon)
            .unwrap_or(defaults.horizon),
        residual_tol: args
            .tol
            .or(cfg.dynamics.residual_tol)
            .unwrap_or(defaults.residual_tol),
        stride: args
            .stride
            .or(cfg.dynamics.stride)
            .unwrap_or(defaults.stride)
            .max(1),
        ..defaults
    };
    if !(opts.step > 0.0) || !(opts.horizon > 0.0) || !(opts.residual_tol >= 0.0) {
        return Err(Failure::usage("step and horizon must be positive"));
    }

    let init_name = args
        .init
        .or_else(|| cfg.dynamics.init.clone())
        .unwrap_or_else(|| "uniform".to_string());
    let init_seed = args.init_seed.or(cfg.dynamics.init_seed);
    let init = match init_name.as_str() {
        "uniform" => game.uniform_profile(),
        "random" => game.random_interior_profile(init_seed.unwrap_or(0)),
        "vertex" => {
            let text = args
                .vertex
                .clone()
                .or_else(|| {
                    cfg.dynamics
                        .vertex
                        .clone()
                        .map(|v| v.iter().map(ToString::to_string).collect::<Vec<_>>().join(","))
                })
                .ok_or_else(|| Failure::usage("--init vertex needs --vertex \"a_1,...,a_K\""))?;
            let assignment = parse_vertex_list(&text)?;
            game.vertex_profile(&assignment)
                .map_err(|e| Failure::usage(e.to_string()))?
        }
        "file" => {
            let path = args
                .init_file
                .clone()
                .or_else(|| cfg.dynamics.init_file.clone())
                .ok_or_else(|| Failure::usage("--init file needs --init-file FILE"))?;
            io::read_profile(&path, game)
                .map_err(|e| Failure::io(format!("{}: {e}", path.display())))?
        }
        other => {
            return Err(Failure::usage(format!(
                "unknown init `{other}` (expected uniform|random|vertex|file)"
            )))
        }
    };

    let kl_mode = args
        .kl
        .or_else(|| cfg.dynamics.kl.clone())
        .unwrap_or_else(|| "auto".to_string());
    let degeneracy = degeneracy_index(game, DEFAULT_RANK_TOL).index;
    let reference = match kl_mode.as_str() {
        "none" => None,
        "auto" => {
            if degeneracy == 0 {
                let eq = solve_potential_min(game, None, &SolveOptions::default());
                if eq.converged {
                    Some(eq.profile)
                } else {
                    None
                }
            } else {
                // Degenerate game: no single a-priori target; the monitor is
                // recomputed below against the trajectory's own limit.
                None
            }
        }
        other => {
            return Err(Failure::usage(format!(
                "unknown kl mode `{other}` (expected auto|none)"
            )))
        }
    };

    let mut trajectory = integrate(game, &init, &opts, reference.as_ref())
        .map_err(|e| Failure::usage(e.to_string()))?;
    if kl_mode == "auto" && degeneracy > 0 {
        let limit = trajectory.last_profile().clone();
        trajectory.recompute_kl(&limit);
    }

    let out = args
        .out
        .or_else(|| cfg.output.out.clone())
        .unwrap_or_else(|| PathBuf::from("trajectory.csv"));
    write_or_io(
        io::write_trajectory_with_metadata(&trajectory, game, init_seed, &opts, &out),
        &out,
    )?;

    let final_t = trajectory.times.last().copied().unwrap_or(0.0);
    let final_res = trajectory.kkt_residuals.last().copied().unwrap_or(f64::NAN);
    println!(
        "simulated K={} A={} init={}: reason={} t_end={:.3} samples={} final_residual={:.3e} underflows={} -> {}",
        game.num_users(),
        game.num_nodes(),
        init_name,
        trajectory.reason.name(),
        final_t,
        trajectory.len(),
        final_res,
        trajectory.support_underflows.len(),
        out.display()
    );
    if trajectory.reason == StopReason::Converged {
        Ok(())
    } else {
        Err(Failure::nonconverged(format!(
            "trajectory stopped ({}) at residual {:.3e}",
            trajectory.reason.name(),
            final_res
        )))
    }
}

// ---- verify --------------------------------------------------------------------

fn cmd_verify(args: VerifyArgs) -> CmdResult {
    let cfg = load_config(&args.source.config)?;
    let resolved = resolve_game(&args.source, &cfg)?;
    let game = &resolved.game;
    let mut all_ok = true;
    let mut record = |name: &str, ok: bool, details: String| {
        println!("{}: {name} {details}", if ok { "PASS" } else { "FAIL" });
        all_ok &= ok;
    };

    // Exact-potential identity over sampled unilateral deviations.
    let check = game.verify_exact_potential(args.samples, args.check_seed, 1e-8);
    record(
        "exact-potential identity",
        check.holds,
        format!("(max deviation {:.3e}, {} samples)", check.max_deviation, check.samples),
    );

    // Marginal payoffs against central differences of the potential.
    let mut worst_rel = 0.0_f64;
    for i in 0..20u64 {
        let p = game.random_interior_profile(args.check_seed ^ (0x100 + i));
        let v = game.marginal_payoffs(&p);
        let eps = 1e-6;
        for k in 0..game.num_users() {
            for a in 0..game.num_nodes() {
                let mut plus = p.allocation().clone();
                plus[[k, a]] += eps;
                let mut minus = p.allocation().clone();
                minus[[k, a]] -= eps;
                let fd = -(raw_potential(game, &plus) - raw_potential(game, &minus)) / (2.0 * eps);
                worst_rel = worst_rel.max((fd - v[[k, a]]).abs() / v[[k, a]]);
            }
        }
    }
    record(
        "potential gradient",
        worst_rel <= 1e-5,
        format!("(worst relative error {worst_rel:.3e})"),
    );

    // Convexity along random segments.
    let mut convex_ok = true;
    let mut rng = ChaCha8Rng::seed_from_u64(args.check_seed ^ 0xc0);
    for i in 0..50u64 {
        let p = game.random_interior_profile(args.check_seed ^ (0x200 + i));
        let q = game.random_interior_profile(args.check_seed ^ (0x300 + i));
        let lambda: f64 = rng.random();
        let blend = game
            .profile(p.allocation() * lambda + q.allocation() * (1.0 - lambda))
            .expect("convex combination is feasible");
        let lhs = game.potential(&blend);
        let rhs = lambda * game.potential(&p) + (1.0 - lambda) * game.potential(&q);
        convex_ok &= lhs <= rhs + 1e-12;
    }
    record("potential convexity", convex_ok, "(50 segments)".to_string());

    // Per-node utilities sum to the utility.
    let mut sum_ok = true;
    for i in 0..20u64 {
        let p = game.random_interior_profile(args.check_seed ^ (0x400 + i));
        for k in 0..game.num_users() {
            let total: f64 = (0..game.num_nodes())
                .map(|a| game.utility_per_node(&p, k, a))
                .sum();
            let u = game.utility(&p, k);
            sum_ok &= (total - u).abs() <= 1e-12 * u.abs().max(1.0);
        }
    }
    record("per-node utility sum", sum_ok, "(20 profiles)".to_string());

    if let Some(path) = &args.profile {
        let profile = io::read_profile(path, game)
            .map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
        record("profile simplex constraints", true, String::new());
        let residual = kkt_residual(game, &profile);
        println!("INFO: kkt_residual = {residual:.6e}");
        if residual <= args.tol {
            let graph = profile_graph(&profile, DEFAULT_SUPPORT_TOL);
            record(
                "equilibrium graph is a forest",
                graph.is_forest(),
                format!("({} edges)", graph.edges.len()),
            );
            let dim = equilibrium_face_dim(&profile, DEFAULT_SUPPORT_TOL);
            record(
                "face dimension <= A-1",
                dim <= game.num_nodes() - 1,
                format!("(dim {dim})"),
            );
            let ratio = waterfill_ratio_deviation(game, &profile, DEFAULT_SUPPORT_TOL);
            record(
                "water-filling ratios",
                ratio <= 1e-6,
                format!("(max deviation {ratio:.3e})"),
            );
        } else {
            println!(
                "INFO: residual above {:.1e}; equilibrium structure checks skipped",
                args.tol
            );
        }
    }

    if all_ok {
        Ok(())
    } else {
        Err(Failure::nonconverged("verification failed".to_string()))
    }
}

fn raw_potential(game: &Game, allocation: &ndarray::Array2<f64>) -> f64 {
    let mut total = 0.0;
    for a in 0..game.num_nodes() {
        let mut load = game.noise()[a];
        for k in 0..game.num_users() {
            load += game.gain(k, a) * allocation[[k, a]];
        }
        total -= game.bandwidths()[a] * load.ln();
    }
    total
}

// ---- batch ---------------------------------------------------------------------

struct BatchRow {
    seed: u64,
    users: usize,
    nodes: usize,
    rho_smax: f64,
    rho_s_alpha_min: f64,
    cmax: bool,
    c1: bool,
    c2: bool,
    ind: usize,
    constraint_rank: usize,
    forest: bool,
    agreement: bool,
    converged: bool,
}

fn cmd_batch(args: BatchArgs) -> CmdResult {
    let cfg = load_config(&args.source.config)?;
    if args.source.game.is_some() || cfg.game.file.is_some() {
        return Err(Failure::usage("batch draws random instances; --game is not accepted"));
    }
    let count = args
        .count
        .or(cfg.batch.count)
        .ok_or_else(|| Failure::usage("batch needs --count"))?;
    if count == 0 {
        return Err(Failure::usage("--count must be at least 1"));
    }
    let users_max = args.source.users.or(cfg.batch.users_max).unwrap_or(4);
    let nodes_max = args.source.nodes.or(cfg.batch.nodes_max).unwrap_or(4);
    if users_max == 0 || nodes_max == 0 {
        return Err(Failure::usage("--users and --nodes must be at least 1"));
    }
    let base_seed = args.source.seed.or(cfg.game.seed).unwrap_or(0);
    let inits = args.inits.or(cfg.batch.inits).unwrap_or(3).max(1);
    let (kind, solve_opts) = resolve_solver(&args.solver, &cfg)?;
    let reports_dir = args.reports_dir.or_else(|| cfg.batch.reports_dir.clone());
    if let Some(dir) = &reports_dir {
        std::fs::create_dir_all(dir).map_err(|e| Failure::io(format!("{}: {e}", dir.display())))?;
    }

    let rows: Vec<BatchRow> = (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let seed = base_seed + i;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let users = rng.random_range(1..=users_max);
            let nodes = rng.random_range(1..=nodes_max);
            let game = Game::random(users, nodes, seed, GainDistribution::Exponential)
                .expect("valid dimensions");
            let conditions = check_conditions(&game);

            let mut reports = Vec::with_capacity(inits);
            for j in 0..inits as u64 {
                let init = game.random_interior_profile(seed ^ (0x9e37_79b9 + j));
                reports.push(run_solver(kind, &game, Some(&init), &solve_opts));
            }
            let converged = reports.iter().all(|r| r.converged);
            let mut agreement = true;
            for a in 0..reports.len() {
                for b in a + 1..reports.len() {
                    agreement &=
                        reports[a].profile.max_norm_distance(&reports[b].profile) <= 1e-6;
                }
            }
            let best = &reports[0];
            let forest = profile_graph(&best.profile, solve_opts.support_tol).is_forest();

            if let Some(dir) = &reports_dir {
                let game_path = dir.join(format!("game_{i:04}.toml"));
                let _ = io::write_game(
                    &game,
                    Some(seed),
                    Some(GainDistribution::Exponential),
                    &game_path,
                );
                let _ = io::write_equilibrium_report(
                    best,
                    &game,
                    Some(seed),
                    &dir.join(format!("equilibrium_{i:04}.toml")),
                );
                let _ = io::write_condition_report(
                    &conditions,
                    &game,
                    &dir.join(format!("conditions_{i:04}.toml")),
                );
            }

            BatchRow {
                seed,
                users,
                nodes,
                rho_smax: conditions.rho_smax,
                rho_s_alpha_min: conditions
                    .rho_s_alpha
                    .iter()
                    .copied()
                    .fold(f64::INFINITY, f64::min),
                cmax: conditions.cmax_holds,
                c1: conditions.c1_holds,
                c2: conditions.c2_holds,
                ind: conditions.degeneracy_index,
                constraint_rank: conditions.constraint_rank,
                forest,
                agreement,
                converged,
            }
        })
        .collect();

    let mut csv = String::from("seed,K,A,rho_smax,rho_s_alpha_min,cmax,c1,c2,ind,constraint_rank\n");
    for row in &rows {
        csv.push_str(&format!(
            "{},{},{},{:.16e},{:.16e},{},{},{},{},{}\n",
            row.seed,
            row.users,
            row.nodes,
            row.rho_smax,
            row.rho_s_alpha_min,
            row.cmax,
            row.c1,
            row.c2,
            row.ind,
            row.constraint_rank
        ));
    }
    let out = args
        .out
        .or_else(|| cfg.output.out.clone())
        .unwrap_or_else(|| PathBuf::from("batch.csv"));
    std::fs::write(&out, csv).map_err(|e| Failure::io(format!("{}: {e}", out.display())))?;

    let multi = rows.iter().filter(|r| r.users >= 2).count();
    let cond_failed = rows
        .iter()
        .filter(|r| r.users >= 2 && !r.cmax && !r.c1 && !r.c2)
        .count();
    let forests = rows.iter().filter(|r| r.forest).count();
    let agreements = rows.iter().filter(|r| r.agreement).count();
    let converged = rows.iter().filter(|r| r.converged).count();
    println!(
        "batch: {count} instances (K<={users_max}, A<={nodes_max}, base seed {base_seed}) -> {}",
        out.display()
    );
    println!("  solver convergence:        {converged}/{count}");
    println!("  forest equilibria:         {forests}/{count}");
    println!("  multi-start agreement:     {agreements}/{count} (x{inits} inits, 1e-6)");
    println!("  Cmax/C1/C2 all fail (K>1): {cond_failed}/{multi}");
    Ok(())
}
