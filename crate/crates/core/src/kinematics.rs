//! Contact detection at the mid-step predicted configuration, local frames,
//! the local-global velocity/impulse mapping and Delassus self-blocks.
//!
//! Local contact quantities are `[f64; 3]` in the frame `(n, t1[, t2])`,
//! component 0 along the normal. 2D scenes use a single tangent and keep the
//! third component zero.

use std::collections::HashMap;

use nalgebra::Vector3;

use crate::scene::{BodyState, Scene};

/// The second participant of a contact: another body or a wall.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ContactPartner {
    Body(usize),
    Wall(usize),
}

/// One detected contact between body `body_a` and `partner`.
///
/// The unit normal points from the partner toward `body_a`, so a positive
/// normal relative velocity separates the pair and the Signorini conditions
/// read `u_n >= 0, r_n >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Contact {
    /// Position in the deterministic contact ordering.
    pub id: usize,
    pub body_a: usize,
    pub partner: ContactPartner,
    /// Unit normal, from partner toward `body_a`.
    pub normal: Vector3<f64>,
    /// Orthonormal tangents; `tangents[1]` is zero in 2D.
    pub tangents: [Vector3<f64>; 2],
    /// Signed surface distance at the predicted configuration, negative when
    /// penetrating.
    pub gap: f64,
    /// Contact point in world coordinates.
    pub point: Vector3<f64>,
    /// Contact point minus the center of `body_a`.
    pub lever_a: Vector3<f64>,
    /// Contact point minus the partner center (zero for walls).
    pub lever_b: Vector3<f64>,
    /// Pair friction coefficient.
    pub mu: f64,
    /// Pair normal restitution.
    pub e_n: f64,
    /// Pair tangential restitution.
    pub e_t: f64,
    pub mass_a: f64,
    /// `None` for walls (infinite mass).
    pub mass_b: Option<f64>,
}

impl Contact {
    /// Number of local components: the scene dimension.
    pub fn dim(&self) -> usize {
        if self.tangents[1] == Vector3::zeros() {
            2
        } else {
            3
        }
    }
}

/// Half-step position prediction `q_{k+1/2} = q_k + (dt/2) qdot_k`,
/// applied componentwise to translations and rotation coordinates.
pub fn predict_positions(state: &BodyState, dt: f64) -> BodyState {
    let h = 0.5 * dt;
    BodyState {
        positions: state
            .positions
            .iter()
            .zip(&state.velocities)
            .map(|(q, v)| q + h * v)
            .collect(),
        rotations: state
            .rotations
            .iter()
            .zip(&state.spins)
            .map(|(q, w)| q + h * w)
            .collect(),
        velocities: state.velocities.clone(),
        spins: state.spins.clone(),
    }
}

/// Deterministic tangent basis for a unit normal.
///
/// 3D: `t1` is the projection of the global x axis onto the plane normal to
/// `n` (the y axis if that projection is shorter than 1e-8), `t2 = n x t1`.
/// 2D: the single tangent is the normal rotated by +90 degrees.
pub fn tangent_basis(normal: &Vector3<f64>, dim: usize) -> [Vector3<f64>; 2] {
    if dim == 2 {
        return [Vector3::new(-normal.y, normal.x, 0.0), Vector3::zeros()];
    }
    let mut t1 = Vector3::new(1.0, 0.0, 0.0) - normal.x * normal;
    if t1.norm() < 1e-8 {
        t1 = Vector3::new(0.0, 1.0, 0.0) - normal.y * normal;
    }
    t1 /= t1.norm();
    let t2 = normal.cross(&t1);
    [t1, t2]
}

fn sort_key(scene: &Scene, body_a: usize, partner: ContactPartner) -> (usize, usize) {
    match partner {
        ContactPartner::Body(b) => (body_a.min(b), body_a.max(b)),
        ContactPartner::Wall(w) => (body_a, scene.bodies.len() + w),
    }
}

/// Detect all contacts with nonpositive gap at the given (predicted)
/// configuration.
///
/// Broad phase: uniform spatial hashing with cell size `2 * max radius`;
/// narrow phase: exact sphere-sphere and sphere-plane distances. Output is
/// ordered lexicographically by `(min body id, max body id)` with wall
/// partners ranked after all bodies, so the contact sequence is
/// deterministic; `id` is the index in that order.
pub fn detect_contacts(scene: &Scene, predicted: &BodyState) -> Vec<Contact> {
    let n = scene.bodies.len();
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    let cell = 2.0 * scene.max_radius();
    if cell > 0.0 && n > 1 {
        let key = |p: &Vector3<f64>| {
            (
                (p.x / cell).floor() as i64,
                (p.y / cell).floor() as i64,
                (p.z / cell).floor() as i64,
            )
        };
        let mut grid: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in predicted.positions.iter().enumerate() {
            grid.entry(key(p)).or_default().push(i);
        }
        for (i, p) in predicted.positions.iter().enumerate() {
            let (cx, cy, cz) = key(p);
            for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        if let Some(cellmates) = grid.get(&(cx + dx, cy + dy, cz + dz)) {
                            for &j in cellmates {
                                if j > i {
                                    pairs.push((i, j));
                                }
                            }
                        }
                    }
                }
            }
        }
        pairs.sort_unstable();
        pairs.dedup();
    }

    let mut contacts = Vec::new();
    for (i, j) in pairs {
        let (ba, bb) = (&scene.bodies[i], &scene.bodies[j]);
        let delta = predicted.positions[i] - predicted.positions[j];
        let dist = delta.norm();
        if dist < 1e-14 {
            continue; // coincident centers have no defined normal
        }
        let gap = dist - ba.radius() - bb.radius();
        if gap > 0.0 {
            continue;
        }
        let normal = delta / dist;
        let point = predicted.positions[j] + (bb.radius() + 0.5 * gap) * normal;
        let (mu, e_n, e_t) = scene.pair_parameters(ba.material, bb.material);
        contacts.push(Contact {
            id: 0,
            body_a: i,
            partner: ContactPartner::Body(j),
            normal,
            tangents: tangent_basis(&normal, scene.dimension),
            gap,
            point,
            lever_a: point - predicted.positions[i],
            lever_b: point - predicted.positions[j],
            mu,
            e_n,
            e_t,
            mass_a: ba.mass,
            mass_b: Some(bb.mass),
        });
    }

    for (i, body) in scene.bodies.iter().enumerate() {
        for (w, wall) in scene.walls.iter().enumerate() {
            let center_dist = wall.signed_distance(&predicted.positions[i]);
            let gap = center_dist - body.radius();
            if gap > 0.0 {
                continue;
            }
            let point = predicted.positions[i] - center_dist * wall.normal;
            let (mu, e_n, e_t) = scene.pair_parameters(body.material, wall.material);
            contacts.push(Contact {
                id: 0,
                body_a: i,
                partner: ContactPartner::Wall(w),
                normal: wall.normal,
                tangents: tangent_basis(&wall.normal, scene.dimension),
                gap,
                point,
                lever_a: point - predicted.positions[i],
                lever_b: Vector3::zeros(),
                mu,
                e_n,
                e_t,
                mass_a: body.mass,
                mass_b: None,
            });
        }
    }

    contacts.sort_by_key(|c| sort_key(scene, c.body_a, c.partner));
    for (idx, c) in contacts.iter_mut().enumerate() {
        c.id = idx;
    }
    contacts
}

/// Local relative velocity `u = P* qdot` of the contact surfaces, expressed
/// in the `(n, t1, t2)` frame. Includes the lever-arm spin contribution, so
/// this is the relative velocity of the material contact points.
pub fn relative_velocity(contact: &Contact, state: &BodyState) -> [f64; 3] {
    let a = contact.body_a;
    let mut u = state.velocities[a] + state.spins[a].cross(&contact.lever_a);
    if let ContactPartner::Body(b) = contact.partner {
        u -= state.velocities[b] + state.spins[b].cross(&contact.lever_b);
    }
    [
        contact.normal.dot(&u),
        contact.tangents[0].dot(&u),
        contact.tangents[1].dot(&u),
    ]
}

/// Apply a local impulse through the mapping and the inverse mass matrix:
/// `qdot += M^{-1} P(c) imp`.
pub fn apply_impulse(contact: &Contact, imp_local: &[f64; 3], scene: &Scene, state: &mut BodyState) {
    let f = imp_local[0] * contact.normal
        + imp_local[1] * contact.tangents[0]
        + imp_local[2] * contact.tangents[1];
    let a = contact.body_a;
    let body_a = &scene.bodies[a];
    state.velocities[a] += f / body_a.mass;
    state.spins[a] += contact.lever_a.cross(&f) / body_a.inertia;
    if let ContactPartner::Body(b) = contact.partner {
        let body_b = &scene.bodies[b];
        state.velocities[b] -= f / body_b.mass;
        state.spins[b] -= contact.lever_b.cross(&f) / body_b.inertia;
    }
}

/// Self-block of the Delassus operator, `W_cc = P*(c) M^{-1} P(c)`,
/// in the local frame (units 1/kg). Symmetric positive definite.
pub fn delassus_block(contact: &Contact, scene: &Scene) -> [[f64; 3]; 3] {
    let dim = contact.dim();
    let basis = [contact.normal, contact.tangents[0], contact.tangents[1]];
    let mut w = [[0.0; 3]; 3];
    let mut add_side = |mass: f64, inertia: f64, lever: &Vector3<f64>| {
        for j in 0..dim {
            for k in j..dim {
                let val = basis[j].dot(&basis[k]) / mass
                    + lever.cross(&basis[j]).dot(&lever.cross(&basis[k])) / inertia;
                w[j][k] += val;
                if k != j {
                    w[k][j] += val;
                }
            }
        }
    };
    let body_a = &scene.bodies[contact.body_a];
    add_side(body_a.mass, body_a.inertia, &contact.lever_a);
    if let ContactPartner::Body(b) = contact.partner {
        let body_b = &scene.bodies[b];
        add_side(body_b.mass, body_b.inertia, &contact.lever_b);
    }
    w
}

/// Largest geometric penetration depth over all overlapping pairs at the
/// given configuration (0 when nothing overlaps).
pub fn max_geometric_penetration(scene: &Scene, state: &BodyState) -> f64 {
    detect_contacts(scene, state)
        .iter()
        .map(|c| -c.gap)
        .fold(0.0, f64::max)
}
