//! Experiment execution and CSV emission: summary tables, last-step
//! convergence traces, the descent-parameter sweep and optional position
//! dumps.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use nscd::nlgs::{self, Method, SolverConfig, StepReport};
use nscd::projection::ContactStatus;
use nscd::scene::{BodyState, Scene};

use crate::scenarios::{build_scenario, ScenarioDefaults, ScenarioSpec};

/// Command-line overrides applied on top of the scenario defaults.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ConfigOverrides {
    pub alpha: Option<f64>,
    pub steps: Option<usize>,
    pub dt: Option<f64>,
    pub eps_glob: Option<f64>,
    pub max_nlgs: Option<usize>,
    pub eps_newt: Option<f64>,
    pub max_newton: Option<usize>,
    pub warm_start: bool,
    pub paper_typo_mode: bool,
}

impl ConfigOverrides {
    pub fn solver_config(&self, method: Method, defaults: &ScenarioDefaults) -> SolverConfig {
        let mut config = SolverConfig::new(method);
        config.eps_glob = self.eps_glob.unwrap_or(defaults.eps_glob);
        config.max_nlgs = self.max_nlgs.unwrap_or(defaults.max_nlgs);
        if let Some(alpha) = self.alpha {
            config.alpha = alpha;
        }
        if let Some(eps_newt) = self.eps_newt {
            config.eps_newt = eps_newt;
        }
        if let Some(max_newton) = self.max_newton {
            config.max_newton = max_newton;
        }
        config.warm_start = self.warm_start;
        config.paper_typo_mode = self.paper_typo_mode;
        config
    }
}

/// One row of the per-method summary table.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: Method,
    pub steps: usize,
    /// Gauss-Seidel iterations of the last time step.
    pub nlgs_last: usize,
    pub eps_glob_last: f64,
    /// Largest velocity penetration over contacts at the last step.
    pub max_penetration_last: f64,
    pub total_nlgs: usize,
    pub wall_time_s: f64,
    /// True when every step reached the stopping tolerance before the cap.
    pub converged: bool,
}

/// One row of the last-step convergence trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub time_step: usize,
    pub nlgs_iter: usize,
    pub eps_motion: f64,
    pub eps_proj: f64,
    pub eps_bipo: f64,
    pub eps_pen: f64,
    pub eps_glob: f64,
    pub newton_iters: usize,
}

/// Compact per-step record kept for every method of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct StepScalars {
    pub nlgs_iterations: usize,
    pub converged: bool,
    pub eps_glob_final: f64,
    pub max_velocity_penetration: f64,
    pub max_geometric_penetration: f64,
    /// Final contact statuses, kept only for small contact sets.
    pub statuses: Vec<ContactStatus>,
}

/// Everything an experiment produces in memory; CSV writers serialize the
/// pieces.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub scene: Scene,
    pub n_steps: usize,
    pub rows: Vec<SummaryRow>,
    pub traces: Vec<(Method, Vec<TraceRow>)>,
    pub per_step: Vec<(Method, Vec<StepScalars>)>,
    pub final_states: Vec<(Method, BodyState)>,
}

fn step_scalars(report: &StepReport) -> StepScalars {
    StepScalars {
        nlgs_iterations: report.nlgs_iterations,
        converged: report.converged,
        eps_glob_final: report.eps_glob_final,
        max_velocity_penetration: report.max_velocity_penetration,
        max_geometric_penetration: report.max_geometric_penetration,
        statuses: if report.contacts.len() <= 8 {
            report.contacts.iter().map(|c| c.status).collect()
        } else {
            Vec::new()
        },
    }
}

fn trace_rows(step_number: usize, report: &StepReport) -> Vec<TraceRow> {
    report
        .trace
        .iter()
        .enumerate()
        .map(|(i, sweep)| TraceRow {
            time_step: step_number,
            nlgs_iter: i + 1,
            eps_motion: sweep.eps.motion,
            eps_proj: sweep.eps.proj,
            eps_bipo: sweep.eps.bipo,
            eps_pen: sweep.eps.pen,
            eps_glob: sweep.eps.glob,
            newton_iters: sweep.newton_iterations,
        })
        .collect()
}

/// Per-step observer used for streaming output.
pub type StepObserver<'a> = &'a mut dyn FnMut(Method, usize, &BodyState);

/// Run the given methods on one scene. All methods see the identical scene
/// and step count; `on_step` is invoked after every step (position dumps).
pub fn run_on_scene(
    scene: &Scene,
    defaults: &ScenarioDefaults,
    methods: &[Method],
    overrides: &ConfigOverrides,
    mut on_step: Option<StepObserver<'_>>,
) -> ExperimentResult {
    let n_steps = overrides.steps.unwrap_or(defaults.n_steps);
    let mut scene = scene.clone();
    if let Some(dt) = overrides.dt {
        scene.dt = dt;
    }
    let mut rows = Vec::new();
    let mut traces = Vec::new();
    let mut per_step = Vec::new();
    let mut final_states = Vec::new();
    for &method in methods {
        let config = overrides.solver_config(method, defaults);
        let mut scalars = Vec::with_capacity(n_steps);
        let mut last_trace = Vec::new();
        let mut total_nlgs = 0usize;
        let started = Instant::now();
        let out = nlgs::run_with(&scene, &config, n_steps, |k, state, report| {
            total_nlgs += report.nlgs_iterations;
            scalars.push(step_scalars(report));
            if k + 1 == n_steps {
                last_trace = trace_rows(k + 1, report);
            }
            if let Some(cb) = on_step.as_mut() {
                cb(method, k, state);
            }
        });
        let wall_time_s = started.elapsed().as_secs_f64();
        let converged = scalars.iter().all(|s| s.converged);
        let last = scalars.last();
        rows.push(SummaryRow {
            method,
            steps: n_steps,
            nlgs_last: last.map_or(0, |s| s.nlgs_iterations),
            eps_glob_last: last.map_or(0.0, |s| s.eps_glob_final),
            max_penetration_last: last.map_or(0.0, |s| s.max_velocity_penetration),
            total_nlgs,
            wall_time_s,
            converged,
        });
        traces.push((method, last_trace));
        per_step.push((method, scalars));
        final_states.push((method, out.state));
    }
    ExperimentResult { scene, n_steps, rows, traces, per_step, final_states }
}

/// Build the scenario and run the given methods on it.
pub fn run_experiment(
    spec: &ScenarioSpec,
    methods: &[Method],
    overrides: &ConfigOverrides,
) -> Result<ExperimentResult, String> {
    let (scene, defaults) = build_scenario(spec)?;
    Ok(run_on_scene(&scene, &defaults, methods, overrides, None))
}

/// One row of the descent-parameter study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub alpha: f64,
    pub nlgs_last: usize,
    pub max_penetration_last: f64,
    pub wall_time_s: f64,
    /// Whether the last step reached the tolerance before the cap, the
    /// quantity the study tables report.
    pub converged: bool,
}

/// Run the scenario once per descent factor with identical initial
/// conditions. Divergence shows up as a row with `converged = false`, not
/// an error.
pub fn rho_sweep(
    spec: &ScenarioSpec,
    method: Method,
    alphas: &[f64],
    overrides: &ConfigOverrides,
) -> Result<Vec<SweepRow>, String> {
    let (scene, defaults) = build_scenario(spec)?;
    let mut rows = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let mut cell = *overrides;
        cell.alpha = Some(alpha);
        let result = run_on_scene(&scene, &defaults, &[method], &cell, None);
        let row = &result.rows[0];
        let last = result.per_step[0].1.last();
        rows.push(SweepRow {
            alpha,
            nlgs_last: row.nlgs_last,
            max_penetration_last: row.max_penetration_last,
            wall_time_s: row.wall_time_s,
            converged: last.is_some_and(|s| s.converged),
        });
    }
    Ok(rows)
}

/// 17 significant digits: round-trips through `f64` parsing exactly.
pub fn fmt_float(x: f64) -> String {
    format!("{:.16e}", x)
}

pub const SUMMARY_HEADER: &str =
    "method,steps,nlgs_last,eps_glob_last,max_penetration_last,total_nlgs,wall_time_s,converged";
pub const TRACE_HEADER: &str =
    "time_step,nlgs_iter,eps_motion,eps_proj,eps_bipo,eps_pen,eps_glob,newton_iters";
pub const SWEEP_HEADER: &str = "alpha,nlgs_last,max_penetration_last,wall_time_s,converged";
pub const POSITIONS_HEADER: &str = "step,body,x,y,z";

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.method,
            r.steps,
            r.nlgs_last,
            fmt_float(r.eps_glob_last),
            fmt_float(r.max_penetration_last),
            r.total_nlgs,
            fmt_float(r.wall_time_s),
            r.converged
        ));
    }
    out
}

pub fn trace_csv(rows: &[TraceRow]) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.time_step,
            r.nlgs_iter,
            fmt_float(r.eps_motion),
            fmt_float(r.eps_proj),
            fmt_float(r.eps_bipo),
            fmt_float(r.eps_pen),
            fmt_float(r.eps_glob),
            r.newton_iters
        ));
    }
    out
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_float(r.alpha),
            r.nlgs_last,
            fmt_float(r.max_penetration_last),
            fmt_float(r.wall_time_s),
            r.converged
        ));
    }
    out
}

pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> std::io::Result<()> {
    std::fs::write(path, summary_csv(rows))
}

pub fn write_trace_csv(path: &Path, rows: &[TraceRow]) -> std::io::Result<()> {
    std::fs::write(path, trace_csv(rows))
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> std::io::Result<()> {
    std::fs::write(path, sweep_csv(rows))
}

/// Streaming writer for per-step body positions.
pub struct PositionsWriter {
    out: BufWriter<File>,
}

impl PositionsWriter {
    pub fn create(path: &Path) -> std::io::Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{}", POSITIONS_HEADER)?;
        Ok(PositionsWriter { out })
    }

    pub fn record(&mut self, step: usize, state: &BodyState) -> std::io::Result<()> {
        for (body, p) in state.positions.iter().enumerate() {
            writeln!(
                self.out,
                "{},{},{},{},{}",
                step,
                body,
                fmt_float(p.x),
                fmt_float(p.y),
                fmt_float(p.z)
            )?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> std::io::Result<()> {
        self.out.flush()
    }
}

/// Write per-step positions for an already-completed run.
pub fn write_positions_csv(
    path: &Path,
    scene: &Scene,
    config: &SolverConfig,
    n_steps: usize,
) -> std::io::Result<()> {
    let mut writer = PositionsWriter::create(path)?;
    let mut failed = None;
    nlgs::run_with(scene, config, n_steps, |k, state, _| {
        if failed.is_none() {
            if let Err(e) = writer.record(k, state) {
                failed = Some(e);
            }
        }
    });
    if let Some(e) = failed {
        return Err(e);
    }
    writer.finish()
}
