//! Per-contact solvers: the one-shot projected-gradient (Uzawa) updates of
//! the standard methods and the semi-smooth Newton kernel of the enhanced
//! methods, including the status-dependent tangent blocks and the condensed
//! linear solve.
//!
//! All functions work on the local unknown pair `chi = (r, u~)`: the contact
//! reaction and the post-impact relative velocity in the `(n, t1[, t2])`
//! frame. The local equation of motion is `u~ = b_loc + W r`, where the
//! caller folds every other contact's contribution and the impact-law
//! transform into the frozen term `b_loc`.

use crate::linalg::{self, LMat, LVec};
use crate::projection::{
    contact_status, project_coulomb_cone, project_cylinder, ContactStatus, Law,
};

/// Norms below this are treated as zero in nonsmooth quotients
/// (`v_t/||v_t||`, `tau_t/||tau_t||`): a valid subgradient selection at the
/// kink.
const NORM_EPS: f64 = 1e-12;

/// Condition proxy above which the condensed matrix is declared singular.
const COND_LIMIT: f64 = 1e12;

/// Per-contact unknown pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalContactState {
    /// Reaction in the local frame, normal component first.
    pub r: LVec,
    /// Post-impact relative velocity in the local frame.
    pub u_tilde: LVec,
}

impl LocalContactState {
    pub fn new(r: LVec, u_tilde: LVec) -> Self {
        LocalContactState { r, u_tilde }
    }

    pub fn zero() -> Self {
        LocalContactState { r: [0.0; 3], u_tilde: [0.0; 3] }
    }
}

/// Descent parameters of the one-shot updates, one per local direction.
///
/// The normal value is the classical `alpha * rho_bar`. A distinct
/// tangential value turns the update into a projected gradient step in the
/// diagonal metric `diag(1/rho_n, 1/rho_t, 1/rho_t)`; solutions of the
/// contact law stay exact fixed points for any positive pair (the
/// bi-potential inequality is metric-free), while the tangential direction,
/// whose Delassus diagonal carries the rotation lever term, gets the same
/// contraction rate as the normal one. `uniform` recovers the plain scalar
/// update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhoPair {
    pub normal: f64,
    pub tangential: f64,
}

impl RhoPair {
    pub fn uniform(rho: f64) -> Self {
        RhoPair { normal: rho, tangential: rho }
    }

    fn is_uniform(&self) -> bool {
        self.normal == self.tangential
    }
}

/// Descent direction of the one-shot update: `mu ||u_t|| n + u` for the cone
/// law, `u` for the cylinder law.
fn descent_direction(u: &LVec, mu: f64, law: Law) -> LVec {
    match law {
        Law::Cone => [u[0] + mu * linalg::tangential_norm(u), u[1], u[2]],
        Law::Cylinder => *u,
    }
}

/// Augmented reaction `tau = r - rho D` used by prediction, status
/// classification and the residual.
pub fn augmented_reaction(chi: &LocalContactState, rho: f64, mu: f64, law: Law) -> LVec {
    let d = descent_direction(&chi.u_tilde, mu, law);
    linalg::sub(&chi.r, &linalg::scale(&d, rho))
}

fn augmented_reaction_pair(chi: &LocalContactState, rho: RhoPair, mu: f64, law: Law) -> LVec {
    let d = descent_direction(&chi.u_tilde, mu, law);
    [
        chi.r[0] - rho.normal * d[0],
        chi.r[1] - rho.tangential * d[1],
        chi.r[2] - rho.tangential * d[2],
    ]
}

/// One Uzawa step of the standard bi-potential method: predict
/// `tau = r - rho (mu ||u_t|| n + u)`, correct by projecting onto the
/// Coulomb cone (in the metric matching `rho` when the pair is not
/// uniform: scale, project onto the cone widened to
/// `mu sqrt(rho_n/rho_t)`, unscale).
pub fn sbp_step(chi: &LocalContactState, rho: RhoPair, mu: f64) -> LVec {
    let tau = augmented_reaction_pair(chi, rho, mu, Law::Cone);
    if rho.is_uniform() {
        return project_coulomb_cone(&tau, mu);
    }
    let sn = rho.normal.sqrt();
    let st = rho.tangential.sqrt();
    let scaled = [tau[0] / sn, tau[1] / st, tau[2] / st];
    let mu_scaled = mu * sn / st;
    let p = project_coulomb_cone(&scaled, mu_scaled);
    [p[0] * sn, p[1] * st, p[2] * st]
}

/// One projected-gradient step of the standard augmented-Lagrangian method:
/// `tau = r - rho u`, projected onto the friction cylinder (separable, so
/// the componentwise projection is already the metric projection).
pub fn sal_step(chi: &LocalContactState, rho: RhoPair, mu: f64) -> LVec {
    project_cylinder(&augmented_reaction_pair(chi, rho, mu, Law::Cylinder), mu)
}

/// Error on the prediction of the reaction, `Z = r - proj(tau, set)`.
/// Vanishes exactly on states satisfying the Signorini-Coulomb law.
pub fn residual_z(chi: &LocalContactState, rho: f64, mu: f64, law: Law) -> LVec {
    let tau = augmented_reaction(chi, rho, mu, law);
    let proj = match law {
        Law::Cone => project_coulomb_cone(&tau, mu),
        Law::Cylinder => project_cylinder(&tau, mu),
    };
    linalg::sub(&chi.r, &proj)
}

/// Partial derivatives of `Z` with respect to the reaction (`a`) and the
/// velocity (`b`); column `j` of `a` is `dZ/dr_j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangentBlocks {
    pub a: LMat,
    pub b: LMat,
}

fn set_col(m: &mut LMat, col: usize, v: &LVec, dim: usize) {
    for row in 0..dim {
        m[row][col] = v[row];
    }
}

/// Tangent blocks of the residual at `chi`, per contact status.
///
/// Separating contacts give `a = I`, `b = 0` exactly. Sticking and sliding
/// branches follow the derivative tables of the respective law; tangential
/// unit vectors at a vanishing norm are replaced by zero.
pub fn tangent_blocks(
    chi: &LocalContactState,
    rho: f64,
    mu: f64,
    law: Law,
    dim: usize,
) -> TangentBlocks {
    let tau = augmented_reaction(chi, rho, mu, law);
    let status = contact_status(&tau, mu, law);
    let v = &chi.u_tilde;
    let mut a = [[0.0; 3]; 3];
    let mut b = [[0.0; 3]; 3];

    match (law, status) {
        (_, ContactStatus::Separating) => {
            a = linalg::identity(dim);
        }
        (Law::Cone, ContactStatus::Sticking) => {
            // Z = rho (mu ||v_t|| n + v).
            let vt = linalg::tangential_norm(v);
            b[0][0] = rho;
            for j in 1..dim {
                let unit_vj = if vt < NORM_EPS { 0.0 } else { v[j] / vt };
                let col = [rho * mu * unit_vj, if j == 1 { rho } else { 0.0 }, if j == 2 { rho } else { 0.0 }];
                set_col(&mut b, j, &col, dim);
            }
        }
        (Law::Cone, ContactStatus::Sliding) => {
            let tt = linalg::tangential_norm(&tau).max(NORM_EPS);
            let vt = linalg::tangential_norm(v);
            let that = [tau[1] / tt, tau[2] / tt];
            let h = linalg::tangential_norm(&tau) - mu * tau[0];
            let one_mu2 = 1.0 + mu * mu;
            // q = tau_t/||tau_t|| - mu n in local coordinates.
            let q = [-mu, that[0], that[1]];

            set_col(&mut a, 0, &linalg::scale(&q, -mu / one_mu2), dim);
            for j in 1..dim {
                let p = proj_tangent_derivative(&tau, j, tt);
                let col = linalg::add(
                    &linalg::scale(&q, tau[j] / (one_mu2 * tt)),
                    &linalg::scale(&p, h / one_mu2),
                );
                set_col(&mut a, j, &col, dim);
            }

            let b0 = linalg::add(&[rho, 0.0, 0.0], &linalg::scale(&q, rho * mu / one_mu2));
            set_col(&mut b, 0, &b0, dim);
            for j in 1..dim {
                let unit_vj = if vt < NORM_EPS { 0.0 } else { v[j] / vt };
                let mut e_j = [0.0; 3];
                e_j[j] = 1.0;
                let direct = linalg::add(&e_j, &[mu * unit_vj, 0.0, 0.0]);
                let p = proj_tangent_derivative(&tau, j, tt);
                let correction = linalg::add(
                    &linalg::scale(&q, tau[j] / tt - mu * mu * unit_vj),
                    &linalg::scale(&p, h),
                );
                let col = linalg::sub(
                    &linalg::scale(&direct, rho),
                    &linalg::scale(&correction, rho / one_mu2),
                );
                set_col(&mut b, j, &col, dim);
            }
        }
        (Law::Cylinder, ContactStatus::Sticking) => {
            // Z = rho v.
            for j in 0..dim {
                b[j][j] = rho;
            }
        }
        (Law::Cylinder, ContactStatus::Sliding) => {
            let tt = linalg::tangential_norm(&tau).max(NORM_EPS);
            let that = [tau[1] / tt, tau[2] / tt];

            set_col(&mut a, 0, &[0.0, -mu * that[0], -mu * that[1]], dim);
            for j in 1..dim {
                let p = proj_tangent_derivative(&tau, j, tt);
                let mut e_j = [0.0; 3];
                e_j[j] = 1.0;
                let col = linalg::sub(&e_j, &linalg::scale(&p, mu * tau[0]));
                set_col(&mut a, j, &col, dim);
            }

            set_col(&mut b, 0, &[rho, rho * mu * that[0], rho * mu * that[1]], dim);
            for j in 1..dim {
                let p = proj_tangent_derivative(&tau, j, tt);
                set_col(&mut b, j, &linalg::scale(&p, rho * mu * tau[0]), dim);
            }
        }
    }
    TangentBlocks { a, b }
}

/// Derivative of `tau_t / ||tau_t||` with respect to `tau_{t_j}`:
/// `t_j / ||tau_t|| - tau_{t_j} tau_t / ||tau_t||^3`, as a local vector.
fn proj_tangent_derivative(tau: &LVec, j: usize, tt: f64) -> LVec {
    let mut p = [0.0; 3];
    p[j] = 1.0 / tt;
    p[1] -= tau[j] * tau[1] / (tt * tt * tt);
    p[2] -= tau[j] * tau[2] / (tt * tt * tt);
    p[0] = 0.0;
    p
}

/// Singular (or numerically singular) condensed matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NewtonBreakdown;

impl std::fmt::Display for NewtonBreakdown {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "singular condensed tangent matrix")
    }
}

impl std::error::Error for NewtonBreakdown {}

/// Solve the Newton system
///
/// ```text
/// [ -W  I ] [dr]   [-f]
/// [  A  B ] [dv] = [-g]
/// ```
///
/// by eliminating the velocity block: `(A + B W) dr = -g + B f`, then
/// `dv = -f + W dr`. The d x d solve uses partial pivoting; a vanishing
/// pivot or a pivot-ratio estimate above 1e12 reports [`NewtonBreakdown`].
pub fn condensed_solve(
    a: &LMat,
    b: &LMat,
    w: &LMat,
    f: &LVec,
    g: &LVec,
    dim: usize,
) -> Result<(LVec, LVec), NewtonBreakdown> {
    let mut m = linalg::mat_mul(b, w, dim);
    for i in 0..dim {
        for j in 0..dim {
            m[i][j] += a[i][j];
        }
    }
    let rhs = linalg::sub(&linalg::mat_vec(b, f, dim), g);
    let (dr, cond) = linalg::solve(&m, &rhs, dim).ok_or(NewtonBreakdown)?;
    if cond > COND_LIMIT {
        return Err(NewtonBreakdown);
    }
    let dv = linalg::sub(&linalg::mat_vec(w, &dr, dim), f);
    Ok((dr, dv))
}

/// Local convergence measure: the norm of both residual blocks,
/// `||v - b_loc - W r|| + ||r - proj(tau, set)||`.
pub fn eps_newton(
    chi: &LocalContactState,
    w: &LMat,
    b_loc: &LVec,
    rho: f64,
    mu: f64,
    law: Law,
    dim: usize,
) -> f64 {
    let motion = linalg::sub(
        &linalg::sub(&chi.u_tilde, b_loc),
        &linalg::mat_vec(w, &chi.r, dim),
    );
    linalg::norm(&motion) + linalg::norm(&residual_z(chi, rho, mu, law))
}

/// Output of the per-contact Newton solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonResult {
    pub chi: LocalContactState,
    pub iterations: usize,
    pub converged: bool,
    /// The solve ended through the Uzawa fallback (singular tangent or
    /// stalled residual).
    pub fallback: bool,
}

/// Semi-smooth Newton solve of the local problem `f(chi) = 0` with
///
/// ```text
/// f = ( v - b_loc - W r ,  r - proj(tau, set) )
/// ```
///
/// at one contact, everything else frozen in `b_loc`. Iterates
/// `chi <- chi + dchi` from the condensed solve until the residual drops
/// below `eps_newt` or `max_iter` is reached; the status and the augmented
/// reaction are re-evaluated every iteration. On a singular tangent, or when
/// the residual has not decreased for five consecutive iterations, one
/// matching-family Uzawa step is taken instead and the solve reports
/// `converged = false`.
#[allow(clippy::too_many_arguments)]
pub fn newton_solve_contact(
    law: Law,
    w: &LMat,
    b_loc: &LVec,
    chi0: &LocalContactState,
    rho: f64,
    mu: f64,
    eps_newt: f64,
    max_iter: usize,
    dim: usize,
) -> NewtonResult {
    let mut chi = *chi0;
    let eps_entry = eps_newton(&chi, w, b_loc, rho, mu, law, dim);
    if eps_entry == 0.0 {
        return NewtonResult { chi, iterations: 0, converged: true, fallback: false };
    }

    // Fallback step parameters: componentwise, matched to the local
    // operator's diagonal and clamped into the contractive range so the
    // escape step always makes progress, whatever rho the Newton solve ran
    // with.
    let w_nn = w[0][0].max(f64::MIN_POSITIVE);
    let w_tt = if dim == 3 { w[1][1].max(w[2][2]) } else { w[1][1] }.max(f64::MIN_POSITIVE);
    let fb = (rho * w_nn).min(1.0);
    let rho_fb = RhoPair { normal: fb / w_nn, tangential: fb / w_tt };
    let uzawa_fallback = |chi: &LocalContactState| {
        let r = match law {
            Law::Cone => sbp_step(chi, rho_fb, mu),
            Law::Cylinder => sal_step(chi, rho_fb, mu),
        };
        let u_tilde = linalg::add(b_loc, &linalg::mat_vec(w, &r, dim));
        LocalContactState { r, u_tilde }
    };

    // Stall rule: five iterations without improving the best residual so
    // far. This also catches the alternating down-up cycles a plain
    // non-decrease test misses.
    let mut best = eps_entry;
    let mut stalled = 0usize;
    for iteration in 1..=max_iter {
        let status = contact_status(&augmented_reaction(&chi, rho, mu, law), mu, law);
        let motion = linalg::sub(
            &linalg::sub(&chi.u_tilde, b_loc),
            &linalg::mat_vec(w, &chi.r, dim),
        );
        let z = residual_z(&chi, rho, mu, law);
        let blocks = tangent_blocks(&chi, rho, mu, law, dim);
        match condensed_solve(&blocks.a, &blocks.b, w, &motion, &z, dim) {
            Ok((dr, dv)) => {
                chi.r = linalg::add(&chi.r, &dr);
                chi.u_tilde = linalg::add(&chi.u_tilde, &dv);
            }
            Err(NewtonBreakdown) => {
                return NewtonResult {
                    chi: uzawa_fallback(&chi),
                    iterations: iteration,
                    converged: false,
                    fallback: true,
                };
            }
        }
        let eps = eps_newton(&chi, w, b_loc, rho, mu, law, dim);
        // Accept only iterates that landed in the status region the step
        // was built for: consistent landings solve their branch exactly,
        // while a flipped status below the tolerance is a spurious exit
        // that would leave the complementarity unresolved.
        let landed = contact_status(&augmented_reaction(&chi, rho, mu, law), mu, law);
        if eps <= eps_newt && landed == status {
            return NewtonResult { chi, iterations: iteration, converged: true, fallback: false };
        }
        if eps < best {
            best = eps;
            stalled = 0;
        } else {
            stalled += 1;
            if stalled >= 5 {
                return NewtonResult {
                    chi: uzawa_fallback(&chi),
                    iterations: iteration,
                    converged: false,
                    fallback: true,
                };
            }
        }
    }
    NewtonResult { chi, iterations: max_iter, converged: false, fallback: false }
}
