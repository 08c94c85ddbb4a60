//! Time stepping and the nonlinear Gauss-Seidel outer loop.
//!
//! One step: predict the mid-step configuration, detect contacts there,
//! compute the free velocity, then sweep the contacts in their fixed order
//! until the averaged four-term criterion drops below `eps_glob` or the
//! iteration cap binds, and finish with the trailing half position update.
//!
//! The per-contact unknown iterated here is the mean contact force over the
//! step (the velocity responds through `dt * M^{-1} P`), which makes the
//! reference descent parameter `rho_bar = m_eff / dt` the unit-consistent
//! scaling of the one-shot updates; reports expose physical impulses
//! `dt * r`.

use std::collections::HashMap;

use crate::kinematics::{
    apply_impulse, delassus_block, detect_contacts, max_geometric_penetration, predict_positions,
    relative_velocity, Contact, ContactPartner,
};
use crate::linalg::{self, LMat, LVec};
use crate::local_solver::{
    augmented_reaction, newton_solve_contact, sal_step, sbp_step, LocalContactState, RhoPair,
};
use crate::projection::{contact_status, project_coulomb_cone, ContactStatus, Law};
use crate::scene::{rho_bar, BodyState, Scene};

/// Local solver selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// Standard bi-potential: one Uzawa step on the Coulomb cone.
    Sbp,
    /// Standard augmented Lagrangian: one projected-gradient step on the
    /// cylinder.
    Sal,
    /// Enhanced bi-potential: local Newton solve, cone law.
    Ebp,
    /// Enhanced augmented Lagrangian: local Newton solve, cylinder law.
    Eal,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Sbp, Method::Sal, Method::Ebp, Method::Eal];

    pub fn law(self) -> Law {
        match self {
            Method::Sbp | Method::Ebp => Law::Cone,
            Method::Sal | Method::Eal => Law::Cylinder,
        }
    }

    pub fn is_newton(self) -> bool {
        matches!(self, Method::Ebp | Method::Eal)
    }

    /// Recommended rho factor: 0.6 for the one-shot methods, 1 for the
    /// Newton methods.
    pub fn default_alpha(self) -> f64 {
        if self.is_newton() {
            1.0
        } else {
            0.6
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Sbp => "sbp",
            Method::Sal => "sal",
            Method::Ebp => "ebp",
            Method::Eal => "eal",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sbp" => Ok(Method::Sbp),
            "sal" => Ok(Method::Sal),
            "ebp" => Ok(Method::Ebp),
            "eal" => Ok(Method::Eal),
            other => Err(format!("unknown solver `{}` (expected sbp|sal|ebp|eal)", other)),
        }
    }
}

/// Solver parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub method: Method,
    /// Descent factor: the per-contact parameter is `alpha * rho_bar`.
    pub alpha: f64,
    /// Outer stopping tolerance on the averaged four-term criterion.
    pub eps_glob: f64,
    /// Outer iteration cap per step.
    pub max_nlgs: usize,
    /// Local Newton tolerance (enhanced methods).
    pub eps_newt: f64,
    /// Local Newton iteration cap.
    pub max_newton: usize,
    /// Reuse the previous step's forces for persisting pairs instead of the
    /// zero initialization. Changes iteration counts; off by default.
    pub warm_start: bool,
    /// Use the impact-law variant that places the normal restitution in
    /// the tangential numerator (for comparison runs).
    pub paper_typo_mode: bool,
}

impl SolverConfig {
    pub fn new(method: Method) -> Self {
        SolverConfig {
            method,
            alpha: method.default_alpha(),
            eps_glob: 1e-10,
            max_nlgs: 5000,
            eps_newt: 1e-5,
            max_newton: 100,
            warm_start: false,
            paper_typo_mode: false,
        }
    }
}

/// One row of the four-term criterion, each term averaged over contacts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsBreakdown {
    pub motion: f64,
    pub proj: f64,
    pub bipo: f64,
    pub pen: f64,
    pub glob: f64,
}

impl EpsBreakdown {
    pub fn zero() -> Self {
        EpsBreakdown { motion: 0.0, proj: 0.0, bipo: 0.0, pen: 0.0, glob: 0.0 }
    }
}

/// Trace entry for one Gauss-Seidel sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRecord {
    pub eps: EpsBreakdown,
    /// Newton iterations spent in this sweep (0 for the one-shot methods).
    pub newton_iterations: usize,
}

/// Converged per-contact data exposed in the step report.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactRecord {
    pub body_a: usize,
    pub partner: ContactPartner,
    /// Physical impulse over the step, `dt * r`, in N s.
    pub impulse: LVec,
    pub u_tilde: LVec,
    pub status: ContactStatus,
    /// Gap at the predicted configuration.
    pub gap: f64,
}

/// Outcome of one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub nlgs_iterations: usize,
    pub converged: bool,
    pub eps_glob_final: f64,
    /// One entry per Gauss-Seidel sweep.
    pub trace: Vec<SweepRecord>,
    pub newton_iterations_total: usize,
    /// Local solves that ended through the Uzawa fallback.
    pub newton_fallbacks: usize,
    /// Largest velocity penetration `-min(0, u~_n)` over contacts at the
    /// final iterate; the quantity the experiment tables report.
    pub max_velocity_penetration: f64,
    /// Largest geometric overlap at the end-of-step positions.
    pub max_geometric_penetration: f64,
    pub contacts: Vec<ContactRecord>,
}

/// Free velocity: the velocity the bodies would take without contact
/// forces.
///
/// With gravity as the only (constant) external force the theta average
/// collapses to `qdot + dt g` on translations; spins are unchanged (no
/// torque).
pub fn free_velocity(scene: &Scene, state: &BodyState) -> BodyState {
    let mut out = state.clone();
    for v in &mut out.velocities {
        *v += scene.dt * scene.gravity;
    }
    out
}

/// Newton shock law blending pre- and post-impact relative velocities:
/// `u~_n = (u+_n + e_n u-_n) / (1 + e_n)` and its tangential analog with
/// `e_t`. `paper_typo` selects the variant with `e_n` in the tangential
/// numerator.
pub fn newton_impact_transform(
    u_plus: &LVec,
    u_minus: &LVec,
    e_n: f64,
    e_t: f64,
    paper_typo: bool,
) -> LVec {
    let e_t_num = if paper_typo { e_n } else { e_t };
    [
        (u_plus[0] + e_n * u_minus[0]) / (1.0 + e_n),
        (u_plus[1] + e_t_num * u_minus[1]) / (1.0 + e_t),
        (u_plus[2] + e_t_num * u_minus[2]) / (1.0 + e_t),
    ]
}

/// Averaged four-term stopping criterion over the given contact states.
///
/// Per contact: the motion error `||u~ - b_loc - W r||`, the Coulomb-cone
/// projection error, the absolute bi-potential value and the velocity
/// penetration; each averaged over contacts, the total being their sum.
/// Zero contacts give zero.
pub fn global_error(
    chi: &[LocalContactState],
    b_loc: &[LVec],
    w: &[LMat],
    mu: &[f64],
    dim: usize,
) -> EpsBreakdown {
    let n = chi.len();
    if n == 0 {
        return EpsBreakdown::zero();
    }
    let mut eps = EpsBreakdown::zero();
    for c in 0..n {
        let motion = linalg::sub(
            &linalg::sub(&chi[c].u_tilde, &b_loc[c]),
            &linalg::mat_vec(&w[c], &chi[c].r, dim),
        );
        eps.motion += linalg::norm(&motion);
        let proj = project_coulomb_cone(&chi[c].r, mu[c]);
        eps.proj += linalg::norm(&linalg::sub(&chi[c].r, &proj));
        let ut = linalg::tangential_norm(&chi[c].u_tilde);
        eps.bipo += (linalg::dot(&chi[c].u_tilde, &chi[c].r) + mu[c] * chi[c].r[0] * ut).abs();
        eps.pen += (-chi[c].u_tilde[0]).max(0.0);
    }
    let inv = 1.0 / n as f64;
    eps.motion *= inv;
    eps.proj *= inv;
    eps.bipo *= inv;
    eps.pen *= inv;
    eps.glob = eps.motion + eps.proj + eps.bipo + eps.pen;
    eps
}

/// Statistics of one sweep.
#[derive(Debug, Clone, Copy, Default)]
pub struct SweepStats {
    pub newton_iterations: usize,
    pub newton_fallbacks: usize,
}

/// Per-step solve state: the contact set frozen at the predicted
/// configuration with its local operators, descent parameters and unknowns.
pub struct SolveContext<'a> {
    scene: &'a Scene,
    pub contacts: Vec<Contact>,
    /// Geometric Delassus self-blocks, 1/kg.
    pub w_geo: Vec<LMat>,
    /// Effective local operators `dt * S W_cc` mapping force to u~ change,
    /// with `S` the restitution scaling of the shock law.
    pub w_eff: Vec<LMat>,
    /// Per-contact scalar descent parameter `alpha * rho_bar`, used by the
    /// Newton methods.
    pub rho: Vec<f64>,
    /// Per-contact componentwise descent parameters of the one-shot
    /// methods: `alpha / (dt W_jj)` in each local direction. The normal
    /// entry equals `alpha * rho_bar` (the lever is parallel to the normal
    /// for spheres); the tangential entry absorbs the rotation term of the
    /// Delassus diagonal so the sticking branch contracts at the same rate
    /// `|1 - alpha|` instead of oscillating.
    pub rho_pair: Vec<RhoPair>,
    /// Pre-step relative velocities `P*(q_{k+1/2}) qdot_k`.
    pub u_minus: Vec<LVec>,
    /// Local unknowns; `r` is the mean contact force over the step.
    pub chi: Vec<LocalContactState>,
}

impl<'a> SolveContext<'a> {
    /// Detect contacts at the predicted configuration and assemble the local
    /// operators. `state_k` must carry the pre-step velocities.
    pub fn new(
        scene: &'a Scene,
        state_k: &BodyState,
        predicted: &BodyState,
        config: &SolverConfig,
    ) -> Self {
        let contacts = detect_contacts(scene, predicted);
        let n = contacts.len();
        let mut w_geo = Vec::with_capacity(n);
        let mut w_eff = Vec::with_capacity(n);
        let mut rho = Vec::with_capacity(n);
        let mut rho_pair = Vec::with_capacity(n);
        let mut u_minus = Vec::with_capacity(n);
        for c in &contacts {
            let w = delassus_block(c, scene);
            let scale = [
                1.0 / (1.0 + c.e_n),
                1.0 / (1.0 + c.e_t),
                1.0 / (1.0 + c.e_t),
            ];
            let mut we = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    we[i][j] = scene.dt * scale[i] * w[i][j];
                }
            }
            let w_tt = if scene.dimension == 3 { w[1][1].max(w[2][2]) } else { w[1][1] };
            w_geo.push(w);
            w_eff.push(we);
            rho.push(config.alpha * rho_bar(c, scene.dt));
            rho_pair.push(RhoPair {
                normal: config.alpha * rho_bar(c, scene.dt),
                tangential: config.alpha / (scene.dt * w_tt),
            });
            u_minus.push(relative_velocity(c, state_k));
        }
        SolveContext {
            scene,
            contacts,
            w_geo,
            w_eff,
            rho,
            rho_pair,
            u_minus,
            chi: vec![LocalContactState::zero(); n],
        }
    }

    pub fn dim(&self) -> usize {
        self.scene.dimension
    }

    fn shocked(&self, c: usize, u_plus: &LVec, config: &SolverConfig) -> LVec {
        let contact = &self.contacts[c];
        newton_impact_transform(
            u_plus,
            &self.u_minus[c],
            contact.e_n,
            contact.e_t,
            config.paper_typo_mode,
        )
    }

    /// One Gauss-Seidel sweep: each contact in order gets its current
    /// shocked relative velocity, one local solve, and an immediate velocity
    /// actualization `qdot += M^{-1} P (dt dr)`.
    pub fn sweep(&mut self, state: &mut BodyState, config: &SolverConfig) -> SweepStats {
        self.sweep_relaxed(state, config, 1.0)
    }

    /// [`sweep`](Self::sweep) with the local updates scaled by `relax`.
    ///
    /// Exact per-contact solves can drive the outer loop into a period-two
    /// cycle on frictional loops (a ball wedged between a neighbor and two
    /// walls trades reversed slip velocities every sweep); scaling the
    /// reaction increments damps that cycle without moving the fixed point.
    /// The stepping loop engages it only when the criterion stagnates.
    pub fn sweep_relaxed(
        &mut self,
        state: &mut BodyState,
        config: &SolverConfig,
        relax: f64,
    ) -> SweepStats {
        let dim = self.dim();
        let mut stats = SweepStats::default();
        for c in 0..self.contacts.len() {
            let u_plus = relative_velocity(&self.contacts[c], state);
            let ut = self.shocked(c, &u_plus, config);
            let mu = self.contacts[c].mu;
            let r_old = self.chi[c].r;
            let b_loc = linalg::sub(&ut, &linalg::mat_vec(&self.w_eff[c], &r_old, dim));
            if config.method.is_newton() {
                let chi0 = LocalContactState::new(r_old, ut);
                let res = newton_solve_contact(
                    config.method.law(),
                    &self.w_eff[c],
                    &b_loc,
                    &chi0,
                    self.rho[c],
                    mu,
                    config.eps_newt,
                    config.max_newton,
                    dim,
                );
                stats.newton_iterations += res.iterations;
                if res.fallback {
                    stats.newton_fallbacks += 1;
                }
                self.chi[c] = res.chi;
            } else {
                self.chi[c].u_tilde = ut;
                self.chi[c].r = match config.method {
                    Method::Sbp => sbp_step(&self.chi[c], self.rho_pair[c], mu),
                    Method::Sal => sal_step(&self.chi[c], self.rho_pair[c], mu),
                    _ => unreachable!(),
                };
            }
            if relax < 1.0 {
                for i in 0..3 {
                    self.chi[c].r[i] = r_old[i] + relax * (self.chi[c].r[i] - r_old[i]);
                }
                self.chi[c].u_tilde =
                    linalg::add(&b_loc, &linalg::mat_vec(&self.w_eff[c], &self.chi[c].r, dim));
            }
            let dr = linalg::sub(&self.chi[c].r, &r_old);
            if dr != [0.0; 3] {
                let imp = linalg::scale(&dr, self.scene.dt);
                apply_impulse(&self.contacts[c], &imp, self.scene, state);
            }
        }
        stats
    }

    /// Evaluate the stopping criterion at the current iterate. The one-shot
    /// methods carry no independent velocity unknown, so their `u~` is
    /// refreshed from the actual velocities first (their motion term is then
    /// zero by construction); the Newton methods keep their local iterate.
    pub fn evaluate(&mut self, state: &BodyState, config: &SolverConfig) -> EpsBreakdown {
        let dim = self.dim();
        let n = self.contacts.len();
        let mut b_loc = Vec::with_capacity(n);
        let mut mu = Vec::with_capacity(n);
        for c in 0..n {
            let u_plus = relative_velocity(&self.contacts[c], state);
            let u_eval = self.shocked(c, &u_plus, config);
            if !config.method.is_newton() {
                self.chi[c].u_tilde = u_eval;
            }
            b_loc.push(linalg::sub(
                &u_eval,
                &linalg::mat_vec(&self.w_eff[c], &self.chi[c].r, dim),
            ));
            mu.push(self.contacts[c].mu);
        }
        global_error(&self.chi, &b_loc, &self.w_eff, &mu, dim)
    }

    /// Largest velocity penetration over contacts at the current iterate.
    pub fn max_velocity_penetration(&self) -> f64 {
        self.chi
            .iter()
            .map(|chi| (-chi.u_tilde[0]).max(0.0))
            .fold(0.0, f64::max)
    }

    fn records(&self, config: &SolverConfig) -> Vec<ContactRecord> {
        let law = config.method.law();
        self.contacts
            .iter()
            .zip(&self.chi)
            .map(|(contact, chi)| {
                let tau = augmented_reaction(chi, self.rho[contact.id], contact.mu, law);
                ContactRecord {
                    body_a: contact.body_a,
                    partner: contact.partner,
                    impulse: linalg::scale(&chi.r, self.scene.dt),
                    u_tilde: chi.u_tilde,
                    status: contact_status(&tau, contact.mu, law),
                    gap: contact.gap,
                }
            })
            .collect()
    }
}

type PairKey = (usize, ContactPartner);

/// Force cache for warm starts, keyed by contact pair.
#[derive(Debug, Default, Clone)]
pub struct WarmStart {
    forces: HashMap<PairKey, LVec>,
}

/// Advance one time step, mutating `state` in place.
pub fn step(
    scene: &Scene,
    state: &mut BodyState,
    config: &SolverConfig,
    warm: Option<&mut WarmStart>,
) -> StepReport {
    assert!(config.alpha > 0.0, "alpha must be positive");
    assert!(config.eps_glob > 0.0, "eps_glob must be positive");
    assert!(config.max_nlgs >= 1, "max_nlgs must be at least 1");
    let predicted = predict_positions(state, scene.dt);
    let mut ctx = SolveContext::new(scene, state, &predicted, config);
    state.velocities = free_velocity(scene, state).velocities;

    if config.warm_start {
        if let Some(w) = warm.as_ref() {
            for c in 0..ctx.contacts.len() {
                let key = (ctx.contacts[c].body_a, ctx.contacts[c].partner);
                if let Some(force) = w.forces.get(&key) {
                    let dr = *force;
                    ctx.chi[c].r = dr;
                    let imp = linalg::scale(&dr, scene.dt);
                    apply_impulse(&ctx.contacts[c], &imp, scene, state);
                }
            }
        }
    }

    let mut trace = Vec::new();
    let mut converged = false;
    let mut newton_total = 0;
    let mut fallbacks = 0;
    let mut eps_final = EpsBreakdown::zero();
    let mut best = f64::INFINITY;
    let mut stagnant = 0usize;
    let mut relax = 1.0;
    while trace.len() < config.max_nlgs {
        let stats = ctx.sweep_relaxed(state, config, relax);
        newton_total += stats.newton_iterations;
        fallbacks += stats.newton_fallbacks;
        let eps = ctx.evaluate(state, config);
        trace.push(SweepRecord { eps, newton_iterations: stats.newton_iterations });
        eps_final = eps;
        if eps.glob <= config.eps_glob {
            converged = true;
            break;
        }
        // Damp the Newton sweeps when they stop improving: period-two
        // cycles of the exact local solves collapse under under-relaxation
        // while the fixed point is unchanged. The one-shot methods are
        // left untouched; their convergence domain in rho is part of the
        // method.
        if config.method.is_newton() {
            if eps.glob < 0.999 * best {
                best = eps.glob;
                stagnant = 0;
            } else {
                stagnant += 1;
                if stagnant >= 8 {
                    relax = (relax * 0.5).max(0.125);
                    stagnant = 0;
                }
            }
        }
    }

    for i in 0..state.len() {
        state.positions[i] = predicted.positions[i] + 0.5 * scene.dt * state.velocities[i];
        state.rotations[i] = predicted.rotations[i] + 0.5 * scene.dt * state.spins[i];
    }

    if let Some(w) = warm {
        w.forces.clear();
        for (contact, chi) in ctx.contacts.iter().zip(&ctx.chi) {
            w.forces.insert((contact.body_a, contact.partner), chi.r);
        }
    }

    StepReport {
        nlgs_iterations: trace.len(),
        converged,
        eps_glob_final: eps_final.glob,
        newton_iterations_total: newton_total,
        newton_fallbacks: fallbacks,
        max_velocity_penetration: ctx.max_velocity_penetration(),
        max_geometric_penetration: max_geometric_penetration(scene, state),
        contacts: ctx.records(config),
        trace,
    }
}

/// Full trajectory result.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub state: BodyState,
    pub reports: Vec<StepReport>,
}

/// Apply `step` n times from the scene's initial state. Deterministic:
/// identical inputs give bit-identical outputs.
pub fn run(scene: &Scene, config: &SolverConfig, n_steps: usize) -> RunResult {
    run_with(scene, config, n_steps, |_, _, _| {})
}

/// Like [`run`], invoking `observer(step_index, state, report)` after every
/// step.
pub fn run_with(
    scene: &Scene,
    config: &SolverConfig,
    n_steps: usize,
    mut observer: impl FnMut(usize, &BodyState, &StepReport),
) -> RunResult {
    let mut state = BodyState::initial(scene);
    let mut warm = WarmStart::default();
    let mut reports = Vec::with_capacity(n_steps);
    for k in 0..n_steps {
        let report = step(scene, &mut state, config, Some(&mut warm));
        observer(k, &state, &report);
        reports.push(report);
    }
    RunResult { state, reports }
}
