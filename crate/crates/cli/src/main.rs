//! rulenav: batch CLI over the simulator — graph generation, benchmark
//! construction, score filtering, evaluation runs, ablation sweeps, and
//! report inspection.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use rulenav_core::bench_gen::{
    build_levels, emit_level, generate_routes, load_gen_config, load_routes, save_routes, GenConfig,
};
use rulenav_core::eval::{
    self, load_episodes, load_summary_csv, prepare_level, run_cell, sweep_grid, write_summary_csv,
    Episode, ReportRow, RunConfig, SweepCell, SweepConfig,
};
use rulenav_core::gmm::{filter_file, GmmConfig};
use rulenav_core::graph::{generate_grid_jittered, load_graph, save_graph};
use rulenav_core::rules::load_catalog;

#[derive(Parser)]
#[command(name = "rulenav", version, about = "Rule-constrained navigation simulator and benchmark toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic grid graph (optionally with gold routes).
    GenGraph(GenGraphArgs),
    /// Score node criticality and emit per-level constraint files.
    GenBenchmark(GenBenchmarkArgs),
    /// Fit the two-mode mixture over scores and keep the high mode.
    Filter(FilterArgs),
    /// Run one policy configuration over every level file.
    Run(RunArgs),
    /// Print a summary report written by `run` or `sweep`.
    Report(ReportArgs),
    /// Run the full level x policy x rectification x setup grid.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct GenGraphArgs {
    /// Grid dimensions, e.g. 15x15.
    #[arg(long)]
    grid: String,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    edge_length: f64,
    /// Relative edge-length jitter in [0, 1).
    #[arg(long, default_value_t = 0.0)]
    jitter: f64,
    #[arg(long)]
    out: PathBuf,
    /// Also generate this many random shortest-path routes.
    #[arg(long)]
    routes: Option<usize>,
    #[arg(long, default_value_t = 6)]
    route_min_hops: usize,
    /// Where to write the generated routes (requires --routes).
    #[arg(long)]
    routes_out: Option<PathBuf>,
}

#[derive(Args)]
struct GenBenchmarkArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    routes: PathBuf,
    #[arg(long)]
    catalog: PathBuf,
    /// Generator config JSON; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct FilterArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Override the config file's root seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the policy selector.
    #[arg(long)]
    policy: Option<String>,
    /// Override the rectification toggle.
    #[arg(long)]
    snrm: Option<bool>,
    /// Override the episode limit.
    #[arg(long)]
    episode_limit: Option<usize>,
    /// Override the output directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory holding summary.csv (or sweep.csv), or the CSV itself.
    #[arg(long)]
    from: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Override the config file's root seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the episode limit.
    #[arg(long)]
    episode_limit: Option<usize>,
    /// Override the output directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("RULENAV_THREADS") {
        match threads.parse::<usize>() {
            Ok(n) => rulenav_core::set_thread_cap(n),
            Err(_) => {
                eprintln!("error: RULENAV_THREADS must be an integer, got `{threads}`");
                return ExitCode::from(2);
            }
        }
    }
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenGraph(args) => cmd_gen_graph(args),
        Command::GenBenchmark(args) => cmd_gen_benchmark(args),
        Command::Filter(args) => cmd_filter(args),
        Command::Run(args) => cmd_run(args),
        Command::Report(args) => cmd_report(args),
        Command::Sweep(args) => cmd_sweep(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn parse_grid(spec: &str) -> Result<(usize, usize)> {
    let (rows, cols) = spec
        .split_once(['x', 'X'])
        .with_context(|| format!("grid must look like 15x15, got `{spec}`"))?;
    Ok((
        rows.trim().parse().with_context(|| format!("bad row count in `{spec}`"))?,
        cols.trim().parse().with_context(|| format!("bad column count in `{spec}`"))?,
    ))
}

fn cmd_gen_graph(args: GenGraphArgs) -> Result<()> {
    let (rows, cols) = parse_grid(&args.grid)?;
    if args.routes.is_some() != args.routes_out.is_some() {
        bail!("--routes and --routes-out must be given together");
    }
    let graph = generate_grid_jittered(rows, cols, args.edge_length, args.jitter, args.seed)?;
    let routes = match args.routes {
        Some(n) => Some(generate_routes(&graph, n, args.route_min_hops, args.seed)?),
        None => None,
    };
    save_graph(&graph, &args.out)?;
    println!(
        "wrote {} ({} nodes, {} directed edges)",
        args.out.display(),
        graph.node_count(),
        graph.edge_count()
    );
    if let (Some(routes), Some(path)) = (routes, args.routes_out) {
        save_routes(&routes, &path)?;
        println!("wrote {} ({} routes)", path.display(), routes.len());
    }
    Ok(())
}

fn cmd_gen_benchmark(args: GenBenchmarkArgs) -> Result<()> {
    let graph = load_graph(&args.graph)?;
    let routes = load_routes(&args.routes)?;
    let catalog = load_catalog(&args.catalog)?;
    let config = match &args.config {
        Some(path) => load_gen_config(path)?,
        None => GenConfig::default(),
    };
    let levels = build_levels(&graph, &routes, &catalog, &config)?;
    // All inputs validated; only now touch the output directory.
    std::fs::create_dir_all(&args.out_dir)?;
    println!("root seed {}", config.seed);
    for level in &levels {
        let path = args.out_dir.join(format!("level{}.json", level.level));
        emit_level(level, &path)?;
        println!(
            "level {}: {} placements, affected nodes {:.2}%, affected instructions {:.2}% (target {:.2}%){}",
            level.level,
            level.placements.len(),
            100.0 * level.affected_node_fraction,
            100.0 * level.affected_instruction_fraction,
            100.0 * level.coverage_target,
            if level.budget_exhausted { " [budget exhausted]" } else { "" },
        );
    }
    Ok(())
}

fn cmd_filter(args: FilterArgs) -> Result<()> {
    let config = GmmConfig {
        max_iter: args.max_iter,
        tol: args.tol,
        seed: args.seed,
        ..GmmConfig::default()
    };
    let summary = filter_file(&args.input, &args.out, &config)?;
    for note in &summary.skipped {
        eprintln!("warning: {note}");
    }
    print!("{summary}");
    Ok(())
}

type RunInputs = (
    rulenav_core::NavGraph,
    rulenav_core::RuleCatalog,
    Vec<rulenav_core::rules::LevelFile>,
    Vec<Episode>,
);

fn load_run_inputs(paths: &eval::RunPaths) -> Result<RunInputs> {
    let graph = load_graph(&paths.graph)?;
    let catalog = load_catalog(&paths.catalog)?;
    let levels = eval::load_levels_dir(&paths.levels_dir)?;
    let episodes = load_episodes(&paths.episodes, &graph)?;
    if episodes.is_empty() {
        bail!("{} holds no episodes", paths.episodes.display());
    }
    Ok((graph, catalog, levels, episodes))
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let raw = std::fs::read_to_string(&args.config)
        .with_context(|| format!("reading {}", args.config.display()))?;
    let mut config: RunConfig = serde_json::from_str(&raw)
        .with_context(|| format!("parsing {}", args.config.display()))?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(policy) = &args.policy {
        config.policy = serde_json::from_value(serde_json::Value::String(policy.clone()))
            .with_context(|| format!("unknown policy `{policy}`"))?;
    }
    if let Some(snrm) = args.snrm {
        config.snrm = snrm;
    }
    if args.episode_limit.is_some() {
        config.episode_limit = args.episode_limit;
    }
    if let Some(out_dir) = args.out_dir {
        config.paths.out_dir = out_dir;
    }
    config.perception.validate()?;
    config.planner.validate()?;
    let (graph, catalog, levels, mut episodes) = load_run_inputs(&config.paths)?;
    if let Some(limit) = config.episode_limit {
        episodes.truncate(limit);
    }
    let setup = config.setup();
    println!("root seed {}", config.seed);

    let mut rows: Vec<ReportRow> = Vec::new();
    let mut all_records = Vec::new();
    for level in &levels {
        let prepared = prepare_level(&graph, &catalog, level)?;
        let cell = SweepCell { level: level.level, policy: config.policy, snrm: config.snrm, setup };
        let (report, records) = run_cell(
            &prepared,
            &catalog,
            &episodes,
            &cell,
            &config.perception,
            &config.planner,
            config.seed,
            config.proximity_radius,
        )?;
        println!(
            "level {}: tc={:.4} spd={:.4} cvr={:.4} over {} episodes [fingerprint {}]",
            level.level,
            report.tc,
            report.spd,
            report.cvr,
            report.n_episodes,
            report.config_fingerprint
        );
        for warning in &report.warnings {
            eprintln!("warning: {warning}");
        }
        rows.push(ReportRow {
            level: level.level,
            policy: config.policy.to_string(),
            snrm: config.snrm,
            setup,
            tc: report.tc,
            spd: report.spd,
            cvr: report.cvr,
            n_episodes: report.n_episodes,
            seed: config.seed,
        });
        if config.emit_trajectories {
            all_records.push((level.level, prepared, records));
        }
    }
    std::fs::create_dir_all(&config.paths.out_dir)?;
    let summary = config.paths.out_dir.join("summary.csv");
    write_summary_csv(&rows, &summary, false)?;
    println!("wrote {}", summary.display());
    for (level, prepared, records) in &all_records {
        let dir = config.paths.out_dir.join(format!("trajectories-level{level}"));
        eval::emit_trajectories(records, &prepared.graph, &prepared.constraints, &dir)?;
        println!("wrote {}", dir.display());
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let raw = std::fs::read_to_string(&args.config)
        .with_context(|| format!("reading {}", args.config.display()))?;
    let mut config: SweepConfig = serde_json::from_str(&raw)
        .with_context(|| format!("parsing {}", args.config.display()))?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if args.episode_limit.is_some() {
        config.episode_limit = args.episode_limit;
    }
    if let Some(out_dir) = args.out_dir {
        config.paths.out_dir = out_dir;
    }
    config.perception.validate()?;
    config.planner.validate()?;
    if config.policies.is_empty() || config.snrm_modes.is_empty() || config.setups.is_empty() {
        bail!("sweep needs at least one policy, one rectification mode, and one setup");
    }
    let (graph, catalog, levels, mut episodes) = load_run_inputs(&config.paths)?;
    if let Some(limit) = config.episode_limit {
        episodes.truncate(limit);
    }
    println!("root seed {}", config.seed);
    let prepared: Vec<_> = levels
        .iter()
        .map(|l| prepare_level(&graph, &catalog, l))
        .collect::<rulenav_core::Result<_>>()?;
    let results = sweep_grid(
        &prepared,
        &catalog,
        &episodes,
        &config.policies,
        &config.snrm_modes,
        &config.setups,
        &config.perception,
        &config.planner,
        config.seed,
        config.proximity_radius,
    )?;
    let rows: Vec<ReportRow> = results.iter().map(|r| r.to_row(config.seed)).collect();
    std::fs::create_dir_all(&config.paths.out_dir)?;
    let path = config.paths.out_dir.join("sweep.csv");
    write_summary_csv(&rows, &path, true)?;
    println!("wrote {} ({} rows)", path.display(), rows.len());
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    let path = resolve_report_path(&args.from)?;
    let rows = load_summary_csv(&path)?;
    if rows.is_empty() {
        println!("{}: empty report", path.display());
        return Ok(());
    }
    println!("{}", path.display());
    println!(
        "{:<6} {:<18} {:<6} {:<6} {:>8} {:>8} {:>8} {:>6} {:>6}",
        "level", "policy", "snrm", "setup", "tc", "spd", "cvr", "eps", "seed"
    );
    for r in &rows {
        println!(
            "{:<6} {:<18} {:<6} {:<6} {:>8.4} {:>8.4} {:>8.4} {:>6} {:>6}",
            r.level, r.policy, r.snrm, r.setup, r.tc, r.spd, r.cvr, r.n_episodes, r.seed
        );
    }
    Ok(())
}

fn resolve_report_path(from: &Path) -> Result<PathBuf> {
    if from.is_file() {
        return Ok(from.to_path_buf());
    }
    for name in ["summary.csv", "sweep.csv"] {
        let candidate = from.join(name);
        if candidate.is_file() {
            return Ok(candidate);
        }
    }
    bail!("no summary.csv or sweep.csv under {}", from.display())
}
