//! Problem description: materials, bodies, walls, the plain-text scene
//! format and derived per-pair quantities such as the reference descent
//! parameter.
//!
//! A [`Scene`] is immutable after parsing and safe to share read-only across
//! threads. All quantities are SI.

use std::fmt;

use nalgebra::Vector3;

use crate::kinematics::Contact;

/// Contact material parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Material {
    /// Friction coefficient, dimensionless, >= 0.
    pub mu: f64,
    /// Normal restitution in [0, 1].
    pub e_n: f64,
    /// Tangential restitution in [0, 1].
    pub e_t: f64,
    /// Mass density in kg/m^3, > 0.
    pub density: f64,
}

impl Material {
    fn validate(&self) -> Result<(), String> {
        if !(self.mu >= 0.0) {
            return Err(format!("friction coefficient must be >= 0, got {}", self.mu));
        }
        if !(0.0..=1.0).contains(&self.e_n) {
            return Err(format!("normal restitution must be in [0, 1], got {}", self.e_n));
        }
        if !(0.0..=1.0).contains(&self.e_t) {
            return Err(format!("tangential restitution must be in [0, 1], got {}", self.e_t));
        }
        if !(self.density > 0.0) {
            return Err(format!("density must be > 0, got {}", self.density));
        }
        Ok(())
    }
}

/// Body geometry. Spheres in 3D scenes, disks in 2D scenes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Sphere { radius: f64 },
    Disk { radius: f64 },
}

impl Shape {
    pub fn radius(&self) -> f64 {
        match *self {
            Shape::Sphere { radius } | Shape::Disk { radius } => radius,
        }
    }

    /// Mass from density: solid sphere 4/3 pi R^3 rho, disk pi R^2 rho
    /// (unit thickness).
    pub fn mass(&self, density: f64) -> f64 {
        match *self {
            Shape::Sphere { radius } => density * 4.0 / 3.0 * std::f64::consts::PI * radius.powi(3),
            Shape::Disk { radius } => density * std::f64::consts::PI * radius.powi(2),
        }
    }

    /// Scalar moment of inertia: 2/5 m R^2 for a solid sphere, 1/2 m R^2
    /// for a disk.
    pub fn inertia(&self, mass: f64) -> f64 {
        match *self {
            Shape::Sphere { radius } => 0.4 * mass * radius * radius,
            Shape::Disk { radius } => 0.5 * mass * radius * radius,
        }
    }
}

/// One rigid body with its initial kinematic state.
#[derive(Debug, Clone, PartialEq)]
pub struct Body {
    pub shape: Shape,
    /// Index into `Scene::materials`.
    pub material: usize,
    /// Derived from shape and material density.
    pub mass: f64,
    /// Derived scalar inertia (isotropic for spheres, about z for disks).
    pub inertia: f64,
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    /// Initial spin; not part of the file format, settable through the API.
    pub angular_velocity: Vector3<f64>,
}

impl Body {
    pub fn new(shape: Shape, material_index: usize, material: &Material) -> Self {
        let mass = shape.mass(material.density);
        Body {
            shape,
            material: material_index,
            mass,
            inertia: shape.inertia(mass),
            position: Vector3::zeros(),
            velocity: Vector3::zeros(),
            angular_velocity: Vector3::zeros(),
        }
    }

    pub fn radius(&self) -> f64 {
        self.shape.radius()
    }
}

/// Infinite plane `{ x : normal . x = offset }` bounding the domain.
/// The unit normal points into the domain; walls never move (infinite mass).
#[derive(Debug, Clone, PartialEq)]
pub struct Wall {
    pub normal: Vector3<f64>,
    pub offset: f64,
    /// Index into `Scene::materials`.
    pub material: usize,
}

impl Wall {
    /// Signed distance of a point from the plane, positive on the domain side.
    pub fn signed_distance(&self, point: &Vector3<f64>) -> f64 {
        self.normal.dot(point) - self.offset
    }
}

/// Named material as declared in a scene file.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedMaterial {
    pub name: String,
    pub material: Material,
}

/// Immutable problem description.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    /// 2 or 3.
    pub dimension: usize,
    /// Time step in seconds, > 0.
    pub dt: f64,
    /// Integration parameter of the theta-method, in [1/2, 1]. With the
    /// constant external forces supported here it does not influence the
    /// free velocity; it is kept configurable for nonconstant-force
    /// extensions.
    pub theta: f64,
    pub gravity: Vector3<f64>,
    pub materials: Vec<NamedMaterial>,
    pub bodies: Vec<Body>,
    pub walls: Vec<Wall>,
}

impl Scene {
    /// Pair parameters for a contact: the more conservative (minimum) value
    /// of each coefficient of the two materials.
    pub fn pair_parameters(&self, mat_a: usize, mat_b: usize) -> (f64, f64, f64) {
        let a = &self.materials[mat_a].material;
        let b = &self.materials[mat_b].material;
        (a.mu.min(b.mu), a.e_n.min(b.e_n), a.e_t.min(b.e_t))
    }

    pub fn max_radius(&self) -> f64 {
        self.bodies.iter().map(|b| b.radius()).fold(0.0, f64::max)
    }

    /// Check the structural invariants of a scene, whether parsed or built
    /// through the API.
    pub fn validate(&self) -> Result<(), String> {
        if self.dimension != 2 && self.dimension != 3 {
            return Err(format!("dimension must be 2 or 3, got {}", self.dimension));
        }
        if !(self.dt > 0.0) {
            return Err(format!("dt must be > 0, got {}", self.dt));
        }
        if !(0.5..=1.0).contains(&self.theta) {
            return Err(format!("theta must be in [1/2, 1], got {}", self.theta));
        }
        for nm in &self.materials {
            nm.material
                .validate()
                .map_err(|e| format!("material {}: {}", nm.name, e))?;
        }
        for (i, b) in self.bodies.iter().enumerate() {
            if !(b.radius() > 0.0) {
                return Err(format!("body {}: radius must be > 0", i));
            }
            if !(b.mass > 0.0) || !(b.inertia > 0.0) {
                return Err(format!("body {}: mass and inertia must be > 0", i));
            }
            if b.material >= self.materials.len() {
                return Err(format!("body {}: material index out of range", i));
            }
            let expect_sphere = self.dimension == 3;
            let is_sphere = matches!(b.shape, Shape::Sphere { .. });
            if is_sphere != expect_sphere {
                return Err(format!("body {}: shape inconsistent with dimension", i));
            }
        }
        for (i, w) in self.walls.iter().enumerate() {
            if (w.normal.norm() - 1.0).abs() > 1e-12 {
                return Err(format!("wall {}: normal must be a unit vector", i));
            }
            if w.material >= self.materials.len() {
                return Err(format!("wall {}: material index out of range", i));
            }
            if self.dimension == 2 && w.normal.z != 0.0 {
                return Err(format!("wall {}: normal inconsistent with dimension", i));
            }
        }
        Ok(())
    }
}

/// Generalized coordinates and velocities of all bodies at one instant.
///
/// 2D scenes keep the third translational component zero and spin only about
/// the z axis; rotations are accumulated rotation coordinates (spheres and
/// disks are rotationally symmetric, so only their integrals matter).
#[derive(Debug, Clone, PartialEq)]
pub struct BodyState {
    pub positions: Vec<Vector3<f64>>,
    pub rotations: Vec<Vector3<f64>>,
    pub velocities: Vec<Vector3<f64>>,
    pub spins: Vec<Vector3<f64>>,
}

impl BodyState {
    pub fn initial(scene: &Scene) -> Self {
        BodyState {
            positions: scene.bodies.iter().map(|b| b.position).collect(),
            rotations: vec![Vector3::zeros(); scene.bodies.len()],
            velocities: scene.bodies.iter().map(|b| b.velocity).collect(),
            spins: scene.bodies.iter().map(|b| b.angular_velocity).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Reference descent parameter of a contact: the harmonic-mean mass of the
/// pair over the time step, in kg/s. A wall counts as infinitely heavy, so
/// a body-wall contact yields `m_i / dt`.
pub fn rho_bar(contact: &Contact, dt: f64) -> f64 {
    match contact.mass_b {
        Some(mb) => (contact.mass_a * mb) / (contact.mass_a + mb) / dt,
        None => contact.mass_a / dt,
    }
}

/// Scene-file error classification.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SceneErrorKind {
    /// Malformed directive: wrong token count, unparsable number, unknown
    /// keyword.
    Syntax,
    /// Well-formed directive with invalid content: negative radius, non-unit
    /// normal, unknown material, dimension mismatch.
    Semantic,
}

/// Parse error with the 1-based source line.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneError {
    pub line: usize,
    pub kind: SceneErrorKind,
    pub message: String,
}

impl fmt::Display for SceneError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            SceneErrorKind::Syntax => "syntax error",
            SceneErrorKind::Semantic => "semantic error",
        };
        write!(f, "line {}: {}: {}", self.line, kind, self.message)
    }
}

impl std::error::Error for SceneError {}

fn syntax(line: usize, message: impl Into<String>) -> SceneError {
    SceneError { line, kind: SceneErrorKind::Syntax, message: message.into() }
}

fn semantic(line: usize, message: impl Into<String>) -> SceneError {
    SceneError { line, kind: SceneErrorKind::Semantic, message: message.into() }
}

struct TokenReader<'a> {
    line: usize,
    tokens: std::str::SplitWhitespace<'a>,
}

impl<'a> TokenReader<'a> {
    fn next(&mut self, what: &str) -> Result<&'a str, SceneError> {
        self.tokens
            .next()
            .ok_or_else(|| syntax(self.line, format!("missing {}", what)))
    }

    fn next_f64(&mut self, what: &str) -> Result<f64, SceneError> {
        let tok = self.next(what)?;
        tok.parse::<f64>()
            .map_err(|_| syntax(self.line, format!("expected a number for {}, got `{}`", what, tok)))
    }

    fn keyword(&mut self, kw: &str) -> Result<(), SceneError> {
        let tok = self.next(&format!("keyword `{}`", kw))?;
        if tok != kw {
            return Err(syntax(self.line, format!("expected keyword `{}`, got `{}`", kw, tok)));
        }
        Ok(())
    }

    fn peek_remaining(&mut self) -> Option<&'a str> {
        self.tokens.clone().next()
    }

    fn finish(&mut self) -> Result<(), SceneError> {
        match self.tokens.next() {
            None => Ok(()),
            Some(tok) => Err(syntax(self.line, format!("unexpected trailing token `{}`", tok))),
        }
    }
}

/// Parse the plain-text scene format.
///
/// The format is line oriented, UTF-8, `#` starts a comment, one directive
/// per line:
///
/// ```text
/// scene v1
/// dim {2|3}
/// dt <float>
/// theta <float>                 # optional, default 0.5
/// gravity <gx> <gy> [<gz>]
/// material <name> mu <f> en <f> et <f> density <f>
/// sphere <material> r <f> pos <x> <y> [<z>] [vel <vx> <vy> [<vz>]]
/// plane <material> n <nx> <ny> [<nz>] offset <f>
/// ```
///
/// Velocities default to zero. File order of bodies is preserved; it fixes
/// the Gauss-Seidel contact ordering.
pub fn parse_scene(text: &str) -> Result<Scene, SceneError> {
    let mut dim: Option<(usize, usize)> = None; // (value, line)
    let mut dt: Option<f64> = None;
    let mut theta: Option<f64> = None;
    let mut gravity: Option<Vector3<f64>> = None;
    let mut materials: Vec<NamedMaterial> = Vec::new();
    let mut bodies: Vec<Body> = Vec::new();
    let mut walls: Vec<Wall> = Vec::new();
    let mut header_seen = false;
    let mut last_line = 0;

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        last_line = lineno;
        let content = raw.split('#').next().unwrap_or("");
        let mut rd = TokenReader { line: lineno, tokens: content.split_whitespace() };
        let first = match rd.tokens.next() {
            None => continue,
            Some(t) => t,
        };
        if !header_seen {
            if first != "scene" {
                return Err(syntax(lineno, "file must start with `scene v1`"));
            }
            let version = rd.next("format version")?;
            if version != "v1" {
                return Err(syntax(lineno, format!("unsupported scene version `{}`", version)));
            }
            rd.finish()?;
            header_seen = true;
            continue;
        }
        match first {
            "scene" => return Err(syntax(lineno, "duplicate `scene` header")),
            "dim" => {
                let tok = rd.next("dimension")?;
                let d: usize = tok
                    .parse()
                    .map_err(|_| syntax(lineno, format!("expected 2 or 3, got `{}`", tok)))?;
                if d != 2 && d != 3 {
                    return Err(semantic(lineno, format!("dimension must be 2 or 3, got {}", d)));
                }
                if dim.is_some() {
                    return Err(semantic(lineno, "duplicate `dim` directive"));
                }
                dim = Some((d, lineno));
                rd.finish()?;
            }
            "dt" => {
                let v = rd.next_f64("time step")?;
                if !(v > 0.0) {
                    return Err(semantic(lineno, format!("dt must be > 0, got {}", v)));
                }
                dt = Some(v);
                rd.finish()?;
            }
            "theta" => {
                let v = rd.next_f64("theta")?;
                if !(0.5..=1.0).contains(&v) {
                    return Err(semantic(lineno, format!("theta must be in [1/2, 1], got {}", v)));
                }
                theta = Some(v);
                rd.finish()?;
            }
            "gravity" => {
                let d = require_dim(&dim, lineno)?;
                let g = read_vector(&mut rd, d, "gravity component")?;
                gravity = Some(g);
                rd.finish()?;
            }
            "material" => {
                let name = rd.next("material name")?.to_string();
                if materials.iter().any(|m| m.name == name) {
                    return Err(semantic(lineno, format!("duplicate material `{}`", name)));
                }
                rd.keyword("mu")?;
                let mu = rd.next_f64("mu")?;
                rd.keyword("en")?;
                let e_n = rd.next_f64("en")?;
                rd.keyword("et")?;
                let e_t = rd.next_f64("et")?;
                rd.keyword("density")?;
                let density = rd.next_f64("density")?;
                rd.finish()?;
                let material = Material { mu, e_n, e_t, density };
                material.validate().map_err(|e| semantic(lineno, e))?;
                materials.push(NamedMaterial { name, material });
            }
            "sphere" => {
                let d = require_dim(&dim, lineno)?;
                let mat_name = rd.next("material name")?;
                let mat_idx = find_material(&materials, mat_name, lineno)?;
                rd.keyword("r")?;
                let radius = rd.next_f64("radius")?;
                if !(radius > 0.0) {
                    return Err(semantic(lineno, format!("radius must be > 0, got {}", radius)));
                }
                rd.keyword("pos")?;
                let pos = read_vector(&mut rd, d, "position component")?;
                let vel = match rd.peek_remaining() {
                    Some("vel") => {
                        rd.keyword("vel")?;
                        read_vector(&mut rd, d, "velocity component")?
                    }
                    Some(other) => {
                        return Err(syntax(lineno, format!("unexpected token `{}`", other)))
                    }
                    None => Vector3::zeros(),
                };
                rd.finish()?;
                let shape = if d == 3 { Shape::Sphere { radius } } else { Shape::Disk { radius } };
                let mut body = Body::new(shape, mat_idx, &materials[mat_idx].material);
                body.position = pos;
                body.velocity = vel;
                bodies.push(body);
            }
            "plane" => {
                let d = require_dim(&dim, lineno)?;
                let mat_name = rd.next("material name")?;
                let mat_idx = find_material(&materials, mat_name, lineno)?;
                rd.keyword("n")?;
                let normal = read_vector(&mut rd, d, "normal component")?;
                rd.keyword("offset")?;
                let offset = rd.next_f64("offset")?;
                rd.finish()?;
                if (normal.norm() - 1.0).abs() > 1e-12 {
                    return Err(semantic(
                        lineno,
                        format!("wall normal must be a unit vector, |n| = {}", normal.norm()),
                    ));
                }
                walls.push(Wall { normal, offset, material: mat_idx });
            }
            other => return Err(syntax(lineno, format!("unknown directive `{}`", other))),
        }
    }

    if !header_seen {
        return Err(syntax(1, "empty input, expected `scene v1`"));
    }
    let scene = Scene {
        dimension: require_dim(&dim, last_line)?,
        dt: dt.ok_or_else(|| semantic(last_line, "missing `dt` directive"))?,
        theta: theta.unwrap_or(0.5),
        gravity: gravity.ok_or_else(|| semantic(last_line, "missing `gravity` directive"))?,
        materials,
        bodies,
        walls,
    };
    scene.validate().map_err(|e| semantic(last_line, e))?;
    Ok(scene)
}

fn require_dim(dim: &Option<(usize, usize)>, line: usize) -> Result<usize, SceneError> {
    dim.map(|(d, _)| d)
        .ok_or_else(|| semantic(line, "`dim` must be declared first"))
}

fn find_material(
    materials: &[NamedMaterial],
    name: &str,
    line: usize,
) -> Result<usize, SceneError> {
    materials
        .iter()
        .position(|m| m.name == name)
        .ok_or_else(|| semantic(line, format!("unknown material `{}`", name)))
}

fn read_vector(rd: &mut TokenReader, dim: usize, what: &str) -> Result<Vector3<f64>, SceneError> {
    let x = rd.next_f64(what)?;
    let y = rd.next_f64(what)?;
    let z = if dim == 3 { rd.next_f64(what)? } else { 0.0 };
    Ok(Vector3::new(x, y, z))
}

/// Serialize a scene back to the text format. `parse_scene(emit_scene(s))`
/// reproduces `s` field for field (initial angular velocities are not part
/// of the format and are dropped).
pub fn emit_scene(scene: &Scene) -> String {
    let mut out = String::from("scene v1\n");
    let d = scene.dimension;
    out.push_str(&format!("dim {}\n", d));
    out.push_str(&format!("dt {}\n", scene.dt));
    out.push_str(&format!("theta {}\n", scene.theta));
    out.push_str(&format!("gravity {}\n", fmt_vec(&scene.gravity, d)));
    for nm in &scene.materials {
        let m = &nm.material;
        out.push_str(&format!(
            "material {} mu {} en {} et {} density {}\n",
            nm.name, m.mu, m.e_n, m.e_t, m.density
        ));
    }
    for b in &scene.bodies {
        out.push_str(&format!(
            "sphere {} r {} pos {} vel {}\n",
            scene.materials[b.material].name,
            b.radius(),
            fmt_vec(&b.position, d),
            fmt_vec(&b.velocity, d)
        ));
    }
    for w in &scene.walls {
        out.push_str(&format!(
            "plane {} n {} offset {}\n",
            scene.materials[w.material].name,
            fmt_vec(&w.normal, d),
            w.offset
        ));
    }
    out
}

fn fmt_vec(v: &Vector3<f64>, dim: usize) -> String {
    if dim == 3 {
        format!("{} {} {}", v.x, v.y, v.z)
    } else {
        format!("{} {}", v.x, v.y)
    }
}
