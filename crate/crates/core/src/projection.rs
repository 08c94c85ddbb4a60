//! Projections onto the two admissible-force sets and the contact status
//! classification derived from them.
//!
//! The Coulomb cone `K_mu = { r : ||r_t|| <= mu r_n }` is the admissible set
//! of the bi-potential formulation; the augmented-Lagrangian formulation
//! uses the half cylinder `R+ x B(0, mu r_n)` whose radius is taken at the
//! just-computed normal component.

use crate::linalg::{tangential_norm, LVec};

/// Which admissible set a solver family projects on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Law {
    /// Coulomb cone (SBP / EBP).
    Cone,
    /// Friction cylinder (SAL / EAL).
    Cylinder,
}

/// Classification of the augmented reaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContactStatus {
    Separating,
    Sticking,
    Sliding,
}

/// Exact orthogonal projection onto the Coulomb cone `K_mu`.
///
/// Three branches: inside the polar cone (`mu ||tau_t|| <= -tau_n`) maps to
/// the apex, inside the cone is unchanged, otherwise the sliding formula
/// `tau - (||tau_t|| - mu tau_n)/(1 + mu^2) (tau_t/||tau_t|| - mu n)`.
/// `mu = 0` degenerates to the ray `{ r_t = 0, r_n >= 0 }` without division
/// by zero.
pub fn project_coulomb_cone(tau: &LVec, mu: f64) -> LVec {
    let tn = tau[0];
    let tt = tangential_norm(tau);
    if mu * tt <= -tn {
        return [0.0, 0.0, 0.0];
    }
    if tt <= mu * tn {
        return *tau;
    }
    // Sliding: tt > 0 here, since tt = 0 lands in one of the first branches.
    let coeff = (tt - mu * tn) / (1.0 + mu * mu);
    [
        tau[0] + coeff * mu,
        tau[1] - coeff * tau[1] / tt,
        tau[2] - coeff * tau[2] / tt,
    ]
}

/// Projection onto the half cylinder `R+ x B(0, mu r_n)` with radius at the
/// clamped normal component: `r_n = max(0, tau_n)`, tangential part clamped
/// to `mu r_n`.
pub fn project_cylinder(tau: &LVec, mu: f64) -> LVec {
    let rn = tau[0].max(0.0);
    let tt = tangential_norm(tau);
    let bound = mu * rn;
    if tt <= bound || tt == 0.0 {
        return [rn, tau[1], tau[2]];
    }
    let s = bound / tt;
    [rn, tau[1] * s, tau[2] * s]
}

/// Status of the augmented reaction under the given law.
///
/// Ties resolve deterministically: the boundary `||tau_t|| = mu tau_n` is
/// Sliding; the polar-cone boundary (cone) and `tau_n = 0` (cylinder) are
/// Separating.
pub fn contact_status(tau: &LVec, mu: f64, law: Law) -> ContactStatus {
    let tn = tau[0];
    let tt = tangential_norm(tau);
    match law {
        Law::Cone => {
            if mu * tt <= -tn {
                ContactStatus::Separating
            } else if tt >= mu * tn {
                ContactStatus::Sliding
            } else {
                ContactStatus::Sticking
            }
        }
        Law::Cylinder => {
            if tn <= 0.0 {
                ContactStatus::Separating
            } else if tt >= mu * tn {
                ContactStatus::Sliding
            } else {
                ContactStatus::Sticking
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cone_examples() {
        // Inside.
        assert_eq!(project_coulomb_cone(&[1.0, 0.2, 0.0], 0.5), [1.0, 0.2, 0.0]);
        // Sliding: (0, 1) -> (0.4, 0.2) at mu = 0.5.
        let p = project_coulomb_cone(&[0.0, 1.0, 0.0], 0.5);
        assert!((p[0] - 0.4).abs() < 1e-15 && (p[1] - 0.2).abs() < 1e-15);
        // Polar cone.
        assert_eq!(project_coulomb_cone(&[-1.0, 0.3, 0.0], 0.5), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn cone_mu_zero() {
        assert_eq!(project_coulomb_cone(&[1.0, 0.5, 0.0], 0.0), [1.0, 0.0, 0.0]);
        assert_eq!(project_coulomb_cone(&[-1.0, 0.5, 0.0], 0.0), [0.0, 0.0, 0.0]);
        assert_eq!(project_coulomb_cone(&[-1.0, 0.0, 0.0], 0.0), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn cylinder_examples() {
        assert_eq!(project_cylinder(&[1.0, 0.2, 0.0], 0.5), [1.0, 0.2, 0.0]);
        let p = project_cylinder(&[1.0, 0.8, 0.0], 0.5);
        assert!((p[1] - 0.5).abs() < 1e-15);
        assert_eq!(project_cylinder(&[-0.3, 0.2, 0.0], 0.5), [0.0, 0.0, 0.0]);
        assert_eq!(project_cylinder(&[2.0, 0.0, 0.0], 0.0), [2.0, 0.0, 0.0]);
    }

    #[test]
    fn status_examples() {
        assert_eq!(contact_status(&[1.0, 0.2, 0.0], 0.5, Law::Cone), ContactStatus::Sticking);
        assert_eq!(contact_status(&[0.0, 1.0, 0.0], 0.5, Law::Cone), ContactStatus::Sliding);
        assert_eq!(
            contact_status(&[-0.3, 0.2, 0.0], 0.5, Law::Cylinder),
            ContactStatus::Separating
        );
        // Tie rules: cone boundary -> Sliding, polar boundary -> Separating.
        assert_eq!(contact_status(&[1.0, 0.5, 0.0], 0.5, Law::Cone), ContactStatus::Sliding);
        assert_eq!(
            contact_status(&[-0.25, 0.5, 0.0], 0.5, Law::Cone),
            ContactStatus::Separating
        );
        assert_eq!(contact_status(&[0.0, 0.1, 0.0], 0.5, Law::Cylinder), ContactStatus::Separating);
    }

    #[test]
    fn projection_at_polar_boundary_is_continuous() {
        // On the polar boundary the sliding formula collapses to the apex.
        let tau = [-0.25, 0.5, 0.0];
        let coeff = (0.5 - 0.5 * (-0.25)) / 1.25;
        let slide = [tau[0] + coeff * 0.5, tau[1] - coeff, 0.0];
        let proj = project_coulomb_cone(&tau, 0.5);
        assert!((slide[0] - proj[0]).abs() < 1e-15);
        assert!((slide[1] - proj[1]).abs() < 1e-15);
    }
}
