//! Rigid-body granular dynamics with the non-smooth discrete element method.
//!
//! Bodies are spheres (3D) or disks (2D) interacting through frictional
//! unilateral contacts solved at the impulse level: no penalty springs.
//! Each time step detects contacts at a mid-step predicted configuration,
//! then runs a nonlinear Gauss-Seidel loop over contacts, dispatching one of
//! four interchangeable local solvers:
//!
//! * `SBP` — one projected-gradient (Uzawa) step onto the Coulomb cone,
//! * `SAL` — one projected-gradient step onto the friction cylinder,
//! * `EBP` — a local semi-smooth Newton solve in the cone formulation,
//! * `EAL` — a local semi-smooth Newton solve in the cylinder formulation.
//!
//! The outer loop stops on a four-term residual combining the equation of
//! motion, cone feasibility, the bi-potential value and the normal-velocity
//! penetration.

pub mod kinematics;
mod linalg;
pub mod local_solver;
pub mod nlgs;
pub mod projection;
pub mod scene;

pub use kinematics::{detect_contacts, predict_positions, Contact, ContactPartner};
pub use local_solver::{
    condensed_solve, newton_solve_contact, residual_z, sal_step, sbp_step, tangent_blocks,
    LocalContactState, NewtonBreakdown, NewtonResult, TangentBlocks,
};
pub use nlgs::{
    free_velocity, newton_impact_transform, ContactRecord, EpsBreakdown, Method, RunResult,
    SolveContext, SolverConfig, StepReport,
};
pub use projection::{contact_status, project_coulomb_cone, project_cylinder, ContactStatus, Law};
pub use scene::{
    parse_scene, rho_bar, Body, BodyState, Material, Scene, SceneError, Shape, Wall,
};
