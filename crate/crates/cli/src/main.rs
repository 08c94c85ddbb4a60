//! Batch experiment driver: run a scenario or scene file with one or more
//! solvers, or sweep the descent factor.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nscd::nlgs::Method;
use nscd::scene::parse_scene;
use nscd_cli::experiments::{
    self, run_on_scene, summary_csv, sweep_csv, ConfigOverrides, PositionsWriter,
};
use nscd_cli::scenarios::{build_scenario, ScenarioDefaults, ScenarioName, ScenarioSpec};

#[derive(Parser)]
#[command(
    name = "nscd",
    about = "Granular dynamics with non-smooth frictional contact solvers",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario or scene file and emit summary/trace CSVs.
    Run(RunArgs),
    /// Run one scenario once per descent factor and tabulate the results.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scene file in the plain-text format.
    #[arg(long, conflicts_with = "scenario")]
    scene: Option<PathBuf>,
    /// Built-in scenario: ball_on_plane, sediment4, sediment500, or their
    /// *_2d variants.
    #[arg(long)]
    scenario: Option<ScenarioName>,
    /// Solver(s): sbp, sal, ebp, eal; comma-separated for a comparison run.
    #[arg(long, value_delimiter = ',', required = true)]
    solver: Vec<Method>,
    /// Descent factor; the per-contact parameter is alpha * rho_bar
    /// (default 0.6 for sbp/sal, 1 for ebp/eal).
    #[arg(long)]
    alpha: Option<f64>,
    /// Number of time steps (default: scenario-specific).
    #[arg(long)]
    steps: Option<usize>,
    /// Override the time step in seconds.
    #[arg(long)]
    dt: Option<f64>,
    /// Outer stopping tolerance.
    #[arg(long)]
    eps_glob: Option<f64>,
    /// Outer iteration cap per step.
    #[arg(long)]
    max_nlgs: Option<usize>,
    /// Local Newton tolerance (ebp/eal).
    #[arg(long)]
    eps_newt: Option<f64>,
    /// Local Newton iteration cap.
    #[arg(long)]
    max_newton: Option<usize>,
    /// Packing seed for the sediment scenarios.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Start each step from the previous step's contact forces.
    #[arg(long)]
    warm_start: bool,
    /// Use the impact-law variant with e_n in the tangential numerator
    /// (comparison runs).
    #[arg(long)]
    paper_typo_mode: bool,
    /// Write the last step's per-iteration error terms here (method name
    /// inserted before the extension when several solvers run).
    #[arg(long)]
    trace_out: Option<PathBuf>,
    /// Write the per-method summary table here.
    #[arg(long)]
    summary_out: Option<PathBuf>,
    /// Write per-step body positions here.
    #[arg(long)]
    positions_out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    scenario: ScenarioName,
    #[arg(long)]
    solver: Method,
    /// Comma-separated descent factors.
    #[arg(long, value_delimiter = ',', required = true)]
    alphas: Vec<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run(args) => run(args),
        Command::Sweep(args) => sweep(args),
    }
}

fn with_method_suffix(path: &std::path::Path, method: Method, multi: bool) -> PathBuf {
    if !multi {
        return path.to_path_buf();
    }
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    let ext = path.extension().and_then(|s| s.to_str()).unwrap_or("csv");
    path.with_file_name(format!("{}.{}.{}", stem, method, ext))
}

fn run(args: RunArgs) -> ExitCode {
    let overrides = ConfigOverrides {
        alpha: args.alpha,
        steps: args.steps,
        dt: args.dt,
        eps_glob: args.eps_glob,
        max_nlgs: args.max_nlgs,
        eps_newt: args.eps_newt,
        max_newton: args.max_newton,
        warm_start: args.warm_start,
        paper_typo_mode: args.paper_typo_mode,
    };

    let (scene, defaults) = match (&args.scene, args.scenario) {
        (Some(path), None) => {
            let text = match std::fs::read_to_string(path) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: cannot read {}: {}", path.display(), e);
                    return ExitCode::FAILURE;
                }
            };
            match parse_scene(&text) {
                Ok(scene) => {
                    (scene, ScenarioDefaults { n_steps: 1000, eps_glob: 1e-10, max_nlgs: 5000 })
                }
                Err(e) => {
                    eprintln!("error: {}: {}", path.display(), e);
                    return ExitCode::FAILURE;
                }
            }
        }
        (None, Some(name)) => {
            let mut spec = ScenarioSpec::new(name);
            spec.seed = args.seed;
            spec.dt = args.dt;
            match build_scenario(&spec) {
                Ok(pair) => pair,
                Err(e) => {
                    eprintln!("error: {}", e);
                    return ExitCode::FAILURE;
                }
            }
        }
        _ => {
            eprintln!("error: exactly one of --scene or --scenario is required");
            return ExitCode::FAILURE;
        }
    };

    let multi = args.solver.len() > 1;
    let mut writers: Vec<(Method, PositionsWriter)> = Vec::new();
    if let Some(path) = &args.positions_out {
        for &m in &args.solver {
            match PositionsWriter::create(&with_method_suffix(path, m, multi)) {
                Ok(w) => writers.push((m, w)),
                Err(e) => {
                    eprintln!("error: cannot create {}: {}", path.display(), e);
                    return ExitCode::FAILURE;
                }
            }
        }
    }
    let mut io_error = None;
    let mut on_step = |method: Method, step: usize, state: &nscd::scene::BodyState| {
        if let Some((_, w)) = writers.iter_mut().find(|(m, _)| *m == method) {
            if let Err(e) = w.record(step, state) {
                io_error.get_or_insert(e);
            }
        }
    };
    let result = run_on_scene(
        &scene,
        &defaults,
        &args.solver,
        &overrides,
        if args.positions_out.is_some() { Some(&mut on_step) } else { None },
    );
    for (_, w) in writers {
        if let Err(e) = w.finish() {
            eprintln!("error: writing positions: {}", e);
            return ExitCode::FAILURE;
        }
    }
    if let Some(e) = io_error {
        eprintln!("error: writing positions: {}", e);
        return ExitCode::FAILURE;
    }

    print!("{}", summary_csv(&result.rows));
    for row in &result.rows {
        if !row.converged {
            eprintln!(
                "note: {} had steps that hit the iteration cap (max_nlgs = {})",
                row.method,
                overrides.max_nlgs.unwrap_or(defaults.max_nlgs)
            );
        }
    }

    if let Some(path) = &args.summary_out {
        if let Err(e) = experiments::write_summary_csv(path, &result.rows) {
            eprintln!("error: cannot write {}: {}", path.display(), e);
            return ExitCode::FAILURE;
        }
    }
    if let Some(path) = &args.trace_out {
        for (method, rows) in &result.traces {
            let out = with_method_suffix(path, *method, multi);
            if let Err(e) = experiments::write_trace_csv(&out, rows) {
                eprintln!("error: cannot write {}: {}", out.display(), e);
                return ExitCode::FAILURE;
            }
        }
    }
    ExitCode::SUCCESS
}

fn sweep(args: SweepArgs) -> ExitCode {
    let mut spec = ScenarioSpec::new(args.scenario);
    spec.seed = args.seed;
    let overrides = ConfigOverrides { steps: args.steps, ..Default::default() };
    let rows = match experiments::rho_sweep(&spec, args.solver, &args.alphas, &overrides) {
        Ok(rows) => rows,
        Err(e) => {
            eprintln!("error: {}", e);
            return ExitCode::FAILURE;
        }
    };
    let csv = sweep_csv(&rows);
    match &args.out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, &csv) {
                eprintln!("error: cannot write {}: {}", path.display(), e);
                return ExitCode::FAILURE;
            }
        }
        None => print!("{}", csv),
    }
    ExitCode::SUCCESS
}
