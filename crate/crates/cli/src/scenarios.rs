//! Built-in scenarios reproducing the experiment setups, plus the seeded
//! initial packing generator.
//!
//! Values the experiment descriptions leave open are fixed here: density
//! 2500 kg/m^3 (glass beads), zero restitution, gravity 9.81 m/s^2 downward,
//! a 2.2 mm square column for the 4-ball case and a 12 mm column for the
//! 500-ball case. Each has an override in [`ScenarioSpec`].

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nscd::scene::{Body, Material, NamedMaterial, Scene, Shape, Wall};

/// Named experiment setups. The `2d` variants run the same configurations
/// with disks to exercise the planar formulas.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioName {
    BallOnPlane,
    Sediment4,
    Sediment500,
    BallOnPlane2d,
    Sediment4_2d,
    Sediment500_2d,
}

impl ScenarioName {
    pub const ALL: [ScenarioName; 6] = [
        ScenarioName::BallOnPlane,
        ScenarioName::Sediment4,
        ScenarioName::Sediment500,
        ScenarioName::BallOnPlane2d,
        ScenarioName::Sediment4_2d,
        ScenarioName::Sediment500_2d,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioName::BallOnPlane => "ball_on_plane",
            ScenarioName::Sediment4 => "sediment4",
            ScenarioName::Sediment500 => "sediment500",
            ScenarioName::BallOnPlane2d => "ball_on_plane_2d",
            ScenarioName::Sediment4_2d => "sediment4_2d",
            ScenarioName::Sediment500_2d => "sediment500_2d",
        }
    }
}

impl std::str::FromStr for ScenarioName {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ScenarioName::ALL
            .iter()
            .copied()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<_> = ScenarioName::ALL.iter().map(|n| n.as_str()).collect();
                format!("unknown scenario `{}` (expected one of {})", s, names.join(", "))
            })
    }
}

impl std::fmt::Display for ScenarioName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A scenario selection with optional overrides of the built-in values.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub name: ScenarioName,
    pub seed: u64,
    pub dt: Option<f64>,
    pub mu: Option<f64>,
    pub density: Option<f64>,
    pub box_width: Option<f64>,
}

impl ScenarioSpec {
    pub fn new(name: ScenarioName) -> Self {
        ScenarioSpec { name, seed: 1, dt: None, mu: None, density: None, box_width: None }
    }
}

/// Per-scenario solver defaults.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioDefaults {
    pub n_steps: usize,
    pub eps_glob: f64,
    pub max_nlgs: usize,
}

/// Axis-aligned packing region: a square column of the given width above
/// the floor (a vertical strip in 2D).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PackBox {
    pub dimension: usize,
    pub width: f64,
    pub height: f64,
}

/// Total placement attempts before packing gives up.
const PACK_BUDGET: usize = 1_000_000;
/// Required surface clearance between packed bodies and to the walls.
const PACK_GAP: f64 = 1e-6;

/// Sample `n` radii uniformly in `[r_min, r_max]` and place non-overlapping
/// bodies in the box by rejection, deterministically for a given seed.
///
/// The generator is ChaCha8 keyed by the 64-bit seed; uniform doubles are
/// drawn in [0, 1) and scaled, so packings reproduce across platforms.
pub fn pack_initial(
    n: usize,
    r_min: f64,
    r_max: f64,
    pack_box: &PackBox,
    seed: u64,
) -> Result<Vec<(Vector3<f64>, f64)>, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let radii: Vec<f64> = (0..n)
        .map(|_| r_min + (r_max - r_min) * rng.gen::<f64>())
        .collect();
    let mut placed: Vec<(Vector3<f64>, f64)> = Vec::with_capacity(n);
    let mut attempts = 0usize;
    let up = pack_box.dimension - 1; // y in 2D, z in 3D
    for (i, &r) in radii.iter().enumerate() {
        let half = pack_box.width / 2.0 - r - PACK_GAP;
        if half <= 0.0 {
            return Err(format!("body {} of radius {} does not fit the box width", i, r));
        }
        loop {
            attempts += 1;
            if attempts > PACK_BUDGET {
                return Err(format!(
                    "packing failed after {} attempts with {} of {} bodies placed; \
                     use a larger box",
                    PACK_BUDGET,
                    placed.len(),
                    n
                ));
            }
            let mut p = Vector3::zeros();
            p.x = (2.0 * rng.gen::<f64>() - 1.0) * half;
            if pack_box.dimension == 3 {
                p.y = (2.0 * rng.gen::<f64>() - 1.0) * half;
            }
            p[up] = r + PACK_GAP + rng.gen::<f64>() * pack_box.height;
            if placed
                .iter()
                .all(|(q, rq)| (p - q).norm() > r + rq + PACK_GAP)
            {
                placed.push((p, r));
                break;
            }
        }
    }
    Ok(placed)
}

fn column_walls(dimension: usize, width: f64) -> Vec<Wall> {
    let h = width / 2.0;
    if dimension == 2 {
        vec![
            Wall { normal: Vector3::new(0.0, 1.0, 0.0), offset: 0.0, material: 0 },
            Wall { normal: Vector3::new(1.0, 0.0, 0.0), offset: -h, material: 0 },
            Wall { normal: Vector3::new(-1.0, 0.0, 0.0), offset: -h, material: 0 },
        ]
    } else {
        vec![
            Wall { normal: Vector3::new(0.0, 0.0, 1.0), offset: 0.0, material: 0 },
            Wall { normal: Vector3::new(1.0, 0.0, 0.0), offset: -h, material: 0 },
            Wall { normal: Vector3::new(-1.0, 0.0, 0.0), offset: -h, material: 0 },
            Wall { normal: Vector3::new(0.0, 1.0, 0.0), offset: -h, material: 0 },
            Wall { normal: Vector3::new(0.0, -1.0, 0.0), offset: -h, material: 0 },
        ]
    }
}

fn gravity(dimension: usize) -> Vector3<f64> {
    if dimension == 2 {
        Vector3::new(0.0, -9.81, 0.0)
    } else {
        Vector3::new(0.0, 0.0, -9.81)
    }
}

fn shape(dimension: usize, radius: f64) -> Shape {
    if dimension == 2 {
        Shape::Disk { radius }
    } else {
        Shape::Sphere { radius }
    }
}

/// Build the scene for a scenario, returning it with the per-scenario
/// solver defaults (step count, tolerance, iteration cap).
pub fn build_scenario(spec: &ScenarioSpec) -> Result<(Scene, ScenarioDefaults), String> {
    use ScenarioName::*;
    let (dimension, two_d) = match spec.name {
        BallOnPlane | Sediment4 | Sediment500 => (3, false),
        BallOnPlane2d | Sediment4_2d | Sediment500_2d => (2, true),
    };
    let density = spec.density.unwrap_or(2500.0);

    let scene = match spec.name {
        BallOnPlane | BallOnPlane2d => {
            let mu = spec.mu.unwrap_or(0.7);
            let radius = 5e-3;
            let material = Material { mu, e_n: 0.0, e_t: 0.0, density };
            let mut body = Body::new(shape(dimension, radius), 0, &material);
            body.position = if two_d {
                Vector3::new(0.0, radius, 0.0)
            } else {
                Vector3::new(0.0, 0.0, radius)
            };
            body.velocity = Vector3::new(1.5, 0.0, 0.0);
            let floor_normal = if two_d {
                Vector3::new(0.0, 1.0, 0.0)
            } else {
                Vector3::new(0.0, 0.0, 1.0)
            };
            Scene {
                dimension,
                dt: spec.dt.unwrap_or(1e-4),
                theta: 0.5,
                gravity: gravity(dimension),
                materials: vec![NamedMaterial { name: "glass".into(), material }],
                bodies: vec![body],
                walls: vec![Wall { normal: floor_normal, offset: 0.0, material: 0 }],
            }
        }
        Sediment4 | Sediment4_2d => {
            let width = spec.box_width.unwrap_or(2.2e-3);
            let height = if two_d { 6e-3 } else { 1.6e-3 };
            build_sediment(spec, dimension, density, 4, 4e-4, 5e-4, width, height)?
        }
        Sediment500 | Sediment500_2d => {
            let width = spec.box_width.unwrap_or(1.2e-2);
            let height = if two_d { 8e-2 } else { 6e-3 };
            build_sediment(spec, dimension, density, 500, 2.5e-4, 5e-4, width, height)?
        }
    };
    scene.validate()?;

    let defaults = match spec.name {
        BallOnPlane | BallOnPlane2d => {
            ScenarioDefaults { n_steps: 2000, eps_glob: 1e-10, max_nlgs: 5000 }
        }
        Sediment4 | Sediment4_2d => {
            ScenarioDefaults { n_steps: 1000, eps_glob: 1e-10, max_nlgs: 5000 }
        }
        Sediment500 | Sediment500_2d => {
            ScenarioDefaults { n_steps: 1000, eps_glob: 1e-12, max_nlgs: 5000 }
        }
    };
    Ok((scene, defaults))
}

#[allow(clippy::too_many_arguments)]
fn build_sediment(
    spec: &ScenarioSpec,
    dimension: usize,
    density: f64,
    n: usize,
    r_min: f64,
    r_max: f64,
    width: f64,
    height: f64,
) -> Result<Scene, String> {
    let mu = spec.mu.unwrap_or(0.3);
    let material = Material { mu, e_n: 0.0, e_t: 0.0, density };
    let pack_box = PackBox { dimension, width, height };
    let placed = pack_initial(n, r_min, r_max, &pack_box, spec.seed)?;
    let bodies = placed
        .into_iter()
        .map(|(position, radius)| {
            let mut body = Body::new(shape(dimension, radius), 0, &material);
            body.position = position;
            body
        })
        .collect();
    Ok(Scene {
        dimension,
        dt: spec.dt.unwrap_or(if n >= 500 { 5e-5 } else { 1e-4 }),
        theta: 0.5,
        gravity: gravity(dimension),
        materials: vec![NamedMaterial { name: "glass".into(), material }],
        bodies,
        walls: column_walls(dimension, width),
    })
}
