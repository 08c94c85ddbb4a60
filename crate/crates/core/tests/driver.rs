//! Integration tests of the stepping loop: momentum bookkeeping, impulse
//! admissibility, actualization equivalence and criterion behavior.

use nalgebra::Vector3;

use nscd::kinematics::{apply_impulse, detect_contacts, predict_positions};
use nscd::nlgs::{self, free_velocity, Method, SolveContext, SolverConfig};
use nscd::scene::{parse_scene, BodyState, Scene};

fn sediment_scene() -> Scene {
    parse_scene(
        "scene v1
dim 3
dt 1e-4
gravity 0 0 -9.81
material m mu 0.3 en 0 et 0 density 2500
sphere m r 4.2e-4 pos -0.00042 -0.00030 0.00045
sphere m r 4.9e-4 pos  0.00040  0.00035 0.00140
sphere m r 4.4e-4 pos -0.00025  0.00040 0.00235
sphere m r 4.7e-4 pos  0.00030 -0.00042 0.00330
plane m n 0 0 1 offset 0
plane m n 1 0 0 offset -1.1e-3
plane m n -1 0 0 offset -1.1e-3
plane m n 0 1 0 offset -1.1e-3
plane m n 0 -1 0 offset -1.1e-3
",
    )
    .unwrap()
}

fn wedge_scene_2d() -> Scene {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    parse_scene(&format!(
        "scene v1
dim 2
dt 1e-4
gravity 0 -9.81
material m mu 0.4 en 0 et 0 density 2500
sphere m r 1e-3 pos 0 {}
plane m n {s} {s} offset 0
plane m n -{s} {s} offset 0
",
        1e-3 * std::f64::consts::SQRT_2 * 0.9999
    ))
    .unwrap()
}

/// Advance a state several steps so a nontrivial contact set is active.
fn settled(scene: &Scene, config: &SolverConfig, steps: usize) -> BodyState {
    let mut state = BodyState::initial(scene);
    for _ in 0..steps {
        nlgs::step(scene, &mut state, config, None);
    }
    state
}

#[test]
fn momentum_bookkeeping_matches_impulse_sum() {
    let scene = sediment_scene();
    for method in Method::ALL {
        let config = SolverConfig::new(method);
        let mut state = settled(&scene, &config, 120);
        let state_k = state.clone();
        let free = free_velocity(&scene, &state_k);
        let predicted = predict_positions(&state_k, scene.dt);
        let contacts = detect_contacts(&scene, &predicted);
        let report = nlgs::step(&scene, &mut state, &config, None);
        assert_eq!(contacts.len(), report.contacts.len());
        assert!(!contacts.is_empty());

        // Accumulate P_c r_c from the reported impulses.
        let n = scene.bodies.len();
        let mut dp = vec![Vector3::zeros(); n];
        let mut dl = vec![Vector3::zeros(); n];
        for (c, rec) in contacts.iter().zip(&report.contacts) {
            assert_eq!(c.body_a, rec.body_a);
            let f = rec.impulse[0] * c.normal
                + rec.impulse[1] * c.tangents[0]
                + rec.impulse[2] * c.tangents[1];
            dp[c.body_a] += f;
            dl[c.body_a] += c.lever_a.cross(&f);
            if let nscd::ContactPartner::Body(b) = c.partner {
                dp[b] -= f;
                dl[b] -= c.lever_b.cross(&f);
            }
        }
        let p_scale: f64 = (0..n)
            .map(|i| scene.bodies[i].mass * state.velocities[i].norm())
            .sum::<f64>()
            .max(1e-12);
        for i in 0..n {
            let lin = scene.bodies[i].mass * (state.velocities[i] - free.velocities[i]);
            let ang = scene.bodies[i].inertia * (state.spins[i] - free.spins[i]);
            assert!(
                (lin - dp[i]).norm() <= 1e-12 * p_scale,
                "{}: body {} linear {} vs {}",
                method,
                i,
                lin,
                dp[i]
            );
            assert!(
                (ang - dl[i]).norm() <= 1e-12 * p_scale,
                "{}: body {} angular defect {}",
                method,
                i,
                (ang - dl[i]).norm()
            );
        }
    }
}

#[test]
fn converged_states_satisfy_signorini_coulomb_disjunction() {
    // Each converged contact is separating (r = 0, u_n >= -tol), sticking
    // (r strictly inside the cone, u ~ 0) or sliding (r on the cone
    // boundary with the slip antiparallel to the tangential reaction).
    let scene = sediment_scene();
    let dt = scene.dt;
    for method in Method::ALL {
        let config = SolverConfig::new(method);
        let mut state = settled(&scene, &config, 300);
        let report = nlgs::step(&scene, &mut state, &config, None);
        assert!(report.converged);
        assert!(!report.contacts.is_empty());
        for rec in &report.contacts {
            let r = [rec.impulse[0] / dt, rec.impulse[1] / dt, rec.impulse[2] / dt];
            let rt = (r[1] * r[1] + r[2] * r[2]).sqrt();
            let u = rec.u_tilde;
            let ut = (u[1] * u[1] + u[2] * u[2]).sqrt();
            let unorm = (u[0] * u[0] + ut * ut).sqrt();
            let separating = r[0].abs() <= 1e-8 && rt <= 1e-8 && u[0] >= -1e-8;
            let sticking = rt < 0.3 * r[0] && unorm <= 1e-8;
            let sliding = (rt - 0.3 * r[0]).abs() <= 1e-8 && {
                // Slip antiparallel to the tangential reaction.
                let dot = u[1] * r[1] + u[2] * r[2];
                ut <= 1e-12 || {
                    let cos = dot / (ut * rt.max(1e-300));
                    (cos + 1.0).abs() <= 1e-6
                }
            };
            assert!(
                separating || sticking || sliding,
                "{}: contact violates the law: r = {:?}, u = {:?}",
                method,
                r,
                u
            );
        }
    }
}

#[test]
fn converged_impulses_are_cone_admissible() {
    let scene = sediment_scene();
    for method in Method::ALL {
        let config = SolverConfig::new(method);
        let mut state = settled(&scene, &config, 400);
        let report = nlgs::step(&scene, &mut state, &config, None);
        assert!(report.converged);
        for rec in &report.contacts {
            let rn = rec.impulse[0];
            let rt = (rec.impulse[1].powi(2) + rec.impulse[2].powi(2)).sqrt();
            assert!(rn >= -1e-10, "{}: negative normal impulse {}", method, rn);
            assert!(
                rt <= 0.3 * rn + 1e-10,
                "{}: impulse outside cone: rt = {}, mu rn = {}",
                method,
                rt,
                0.3 * rn
            );
        }
    }
}

#[test]
fn incremental_actualization_equals_explicit_resummation() {
    // On a <= 4 contact configuration, the velocities after each sweep must
    // equal the explicit sum qdot_free + M^{-1} sum_c P_c (dt r_c).
    let scene = sediment_scene();
    for method in Method::ALL {
        let config = SolverConfig::new(method);
        // A time early in the fall: the first two balls touch the floor.
        let mut state = settled(&scene, &config, 80);
        let state_k = state.clone();
        let predicted = predict_positions(&state_k, scene.dt);
        let mut ctx = SolveContext::new(&scene, &state_k, &predicted, &config);
        assert!(!ctx.contacts.is_empty() && ctx.contacts.len() <= 4);
        state.velocities = free_velocity(&scene, &state_k).velocities;
        let free = state.clone();
        let vel_scale: f64 = free.velocities.iter().map(|v| v.norm()).fold(1e-9, f64::max);
        for _ in 0..5 {
            ctx.sweep(&mut state, &config);
            let mut explicit = free.clone();
            for (c, chi) in ctx.contacts.iter().zip(&ctx.chi) {
                let imp = [
                    chi.r[0] * scene.dt,
                    chi.r[1] * scene.dt,
                    chi.r[2] * scene.dt,
                ];
                apply_impulse(c, &imp, &scene, &mut explicit);
            }
            for i in 0..scene.bodies.len() {
                assert!(
                    (explicit.velocities[i] - state.velocities[i]).norm() <= 1e-12 * vel_scale,
                    "{}: velocity mismatch on body {}",
                    method,
                    i
                );
                assert!(
                    (explicit.spins[i] - state.spins[i]).norm()
                        <= 1e-12 * vel_scale / scene.bodies[i].radius(),
                    "{}: spin mismatch on body {}",
                    method,
                    i
                );
            }
        }
    }
}

#[test]
fn eps_glob_weakly_decreases_over_final_iterations() {
    let scene = sediment_scene();
    for method in [Method::Sbp, Method::Sal] {
        let config = SolverConfig::new(method);
        let mut state = BodyState::initial(&scene);
        let mut checked = 0;
        for _ in 0..500 {
            let report = nlgs::step(&scene, &mut state, &config, None);
            if report.converged && report.trace.len() >= 10 {
                let last = report.trace.last().unwrap().eps.glob;
                let earlier = report.trace[report.trace.len() - 10].eps.glob;
                assert!(
                    last <= earlier,
                    "{}: eps rose over the final 10 sweeps: {} vs {}",
                    method,
                    last,
                    earlier
                );
                checked += 1;
            }
        }
        assert!(checked > 50, "only {} steps exercised the check", checked);
    }
}

#[test]
fn wedge_contact_impulses_are_mirror_symmetric() {
    let scene = wedge_scene_2d();
    for method in Method::ALL {
        let config = SolverConfig::new(method);
        let mut state = BodyState::initial(&scene);
        let mut report = None;
        for _ in 0..200 {
            report = Some(nlgs::step(&scene, &mut state, &config, None));
        }
        let report = report.unwrap();
        assert!(report.converged, "{}", method);
        assert_eq!(report.contacts.len(), 2);
        let a = &report.contacts[0];
        let b = &report.contacts[1];
        // Mirroring x maps one wall frame onto the other with the tangent
        // reversed: r_n equal, r_t opposite. The sweep itself is sequential,
        // so symmetry holds at convergence up to the stopping tolerance.
        let scale = a.impulse[0].abs().max(1e-14);
        assert!(
            (a.impulse[0] - b.impulse[0]).abs() <= 1e-6 * scale,
            "{}: normal impulses {} vs {}",
            method,
            a.impulse[0],
            b.impulse[0]
        );
        assert!(
            (a.impulse[1] + b.impulse[1]).abs() <= 1e-6 * scale,
            "{}: tangential impulses {} vs {}",
            method,
            a.impulse[1],
            b.impulse[1]
        );
    }
}

#[test]
fn sediment_runs_converge_and_dissipate() {
    // Balls may keep rolling (no rolling resistance), but every late step
    // must converge, penetrations must stay at the tolerance level and
    // kinetic energy must have dropped from the release state.
    let scene = sediment_scene();
    let initial_pe: f64 = (0..scene.bodies.len())
        .map(|i| scene.bodies[i].mass * 9.81 * scene.bodies[i].position.z)
        .sum();
    for method in Method::ALL {
        let config = SolverConfig::new(method);
        let out = nlgs::run(&scene, &config, 1000);
        let last = out.reports.last().unwrap();
        assert!(last.converged, "{}", method);
        assert!(last.max_velocity_penetration < 1e-8, "{}", method);
        assert!(last.max_geometric_penetration < 1e-5, "{}", method);
        let ke: f64 = (0..scene.bodies.len())
            .map(|i| {
                0.5 * scene.bodies[i].mass * out.state.velocities[i].norm_squared()
                    + 0.5 * scene.bodies[i].inertia * out.state.spins[i].norm_squared()
            })
            .sum();
        assert!(ke < 0.5 * initial_pe, "{}: kinetic energy {} too large", method, ke);
    }
}

#[test]
fn warm_start_changes_iterations_not_early_physics() {
    let scene = sediment_scene();
    let cold = SolverConfig::new(Method::Ebp);
    let mut warm = cold;
    warm.warm_start = true;
    assert!(!cold.warm_start);
    // Compare over a horizon covering the first floor impact, before
    // collision chains amplify solver-path differences.
    let a = nlgs::run(&scene, &cold, 40);
    let b = nlgs::run(&scene, &warm, 40);
    for (p, q) in a.state.positions.iter().zip(&b.state.positions) {
        assert!((p - q).norm() < 1e-9);
    }
    // The one-shot methods show the iteration-count effect of reusing the
    // previous forces once persistent contacts carry load.
    let cold_sbp = SolverConfig::new(Method::Sbp);
    let mut warm_sbp = cold_sbp;
    warm_sbp.warm_start = true;
    let a = nlgs::run(&scene, &cold_sbp, 300);
    let b = nlgs::run(&scene, &warm_sbp, 300);
    let cold_total: usize = a.reports.iter().map(|r| r.nlgs_iterations).sum();
    let warm_total: usize = b.reports.iter().map(|r| r.nlgs_iterations).sum();
    assert_ne!(cold_total, warm_total);
}
