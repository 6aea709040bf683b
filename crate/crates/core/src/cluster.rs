//! Hole geometry and admissibility of a cluster.
//!
//! Two distance matrices are kept: centre distances `|z_i - z_j|`, which
//! drive delays and couplings, and set distances `dist(D_i, D_j)` between
//! hole surfaces, which enter the expansion condition.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::capacitance::SurfaceMesh;
use crate::error::{invalid, Error, Result};
use crate::geometry::{AxisBox, Vec3};
use crate::signal::CausalSignal;

#[derive(Clone, Debug)]
pub enum HoleShape {
    Sphere {
        radius: f64,
    },
    /// `scale * B` for a reference mesh `B` containing the origin.
    Mesh {
        mesh: Arc<SurfaceMesh>,
        scale: f64,
        /// Where the reference mesh was loaded from, for serialization.
        label: String,
    },
}

#[derive(Clone, Debug)]
pub struct Hole {
    pub center: Vec3,
    pub shape: HoleShape,
    pub capacitance: Option<f64>,
}

impl Hole {
    pub fn sphere(center: Vec3, radius: f64) -> Self {
        Self {
            center,
            shape: HoleShape::Sphere { radius },
            capacitance: None,
        }
    }

    pub fn diameter(&self) -> f64 {
        match &self.shape {
            HoleShape::Sphere { radius } => 2.0 * radius,
            HoleShape::Mesh { mesh, scale, .. } => scale * mesh.diameter(),
        }
    }

    fn validate(&self, index: usize) -> Result<()> {
        if !self.center.iter().all(|c| c.is_finite()) {
            return invalid(format!("hole {index}: non-finite centre"));
        }
        match &self.shape {
            HoleShape::Sphere { radius } if !(*radius > 0.0 && radius.is_finite()) => {
                invalid(format!("hole {index}: sphere radius must be positive, got {radius}"))
            }
            HoleShape::Mesh { scale, .. } if !(*scale > 0.0 && scale.is_finite()) => {
                invalid(format!("hole {index}: mesh scale must be positive, got {scale}"))
            }
            _ => match self.capacitance {
                Some(c) if !(c > 0.0) => invalid(format!("hole {index}: capacitance must be positive, got {c}")),
                _ => Ok(()),
            },
        }
    }
}

/// World-space geometry used for distance queries.
#[derive(Clone, Debug)]
enum Body {
    Ball { center: Vec3, radius: f64 },
    Surface(SurfaceMesh),
}

impl Body {
    fn of(hole: &Hole) -> Result<Self> {
        Ok(match &hole.shape {
            HoleShape::Sphere { radius } => Body::Ball {
                center: hole.center,
                radius: *radius,
            },
            HoleShape::Mesh { mesh, scale, .. } => Body::Surface(mesh.transformed(*scale, hole.center)?),
        })
    }

    /// Distance from `p` to the body; non-positive when `p` is inside or on it.
    fn distance_to_point(&self, p: &Vec3) -> f64 {
        match self {
            Body::Ball { center, radius } => (p - center).norm() - radius,
            Body::Surface(m) => {
                let d = m.distance_to(p);
                if m.contains(p) {
                    -d
                } else {
                    d
                }
            }
        }
    }

    /// Set distance; vertex-to-surface for meshes.
    fn distance_to(&self, other: &Body) -> f64 {
        match (self, other) {
            (Body::Ball { center: a, radius: ra }, Body::Ball { center: b, radius: rb }) => (a - b).norm() - ra - rb,
            (Body::Ball { center, radius }, s @ Body::Surface(_))
            | (s @ Body::Surface(_), Body::Ball { center, radius }) => s.distance_to_point(center) - radius,
            (Body::Surface(a), Body::Surface(b)) => {
                let one = |x: &SurfaceMesh, y: &Body| {
                    x.vertices()
                        .iter()
                        .map(|v| y.distance_to_point(v))
                        .fold(f64::INFINITY, f64::min)
                };
                one(a, other).min(one(b, self))
            }
        }
    }
}

/// `(a, d, d_ij)`: max hole diameter, min set distance, set-distance matrix.
#[derive(Clone, Debug)]
pub struct Separations {
    pub max_diameter: f64,
    /// `+inf` for a single hole.
    pub min_distance: f64,
    pub set_distance: Vec<Vec<f64>>,
}

/// Regime exponents `M ~ eps^-s`, `d ~ eps^beta` with the error exponents
/// of the point-source expansion, `2 - s`, `3 - 2s` and `3 - 2 beta - s`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Regime {
    pub s: f64,
    pub beta: f64,
    pub error_exponents: [f64; 3],
}

impl Regime {
    pub fn worst_error_exponent(&self) -> f64 {
        self.error_exponents.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Clone, Debug)]
pub struct Cluster {
    holes: Vec<Hole>,
    bodies: Vec<Body>,
    center_distance: Vec<f64>,
    set_distance: Vec<f64>,
    max_diameter: f64,
    min_distance: f64,
}

impl Cluster {
    /// Validates the holes and rejects overlapping or touching pairs.
    pub fn new(holes: Vec<Hole>) -> Result<Self> {
        for (i, h) in holes.iter().enumerate() {
            h.validate(i)?;
        }
        let bodies = holes.iter().map(Body::of).collect::<Result<Vec<_>>>()?;
        let m = holes.len();
        let mut center_distance = vec![0.0; m * m];
        let mut set_distance = vec![0.0; m * m];
        let mut min_distance = f64::INFINITY;
        for i in 0..m {
            for j in i + 1..m {
                let c = (holes[i].center - holes[j].center).norm();
                let d = bodies[i].distance_to(&bodies[j]);
                if !(d > 0.0) {
                    return Err(Error::Overlap { i, j, distance: d });
                }
                center_distance[i * m + j] = c;
                center_distance[j * m + i] = c;
                set_distance[i * m + j] = d;
                set_distance[j * m + i] = d;
                min_distance = min_distance.min(d);
            }
        }
        let max_diameter = holes.iter().map(Hole::diameter).fold(0.0, f64::max);
        Ok(Self {
            holes,
            bodies,
            center_distance,
            set_distance,
            max_diameter,
            min_distance,
        })
    }

    pub fn empty() -> Self {
        Self::new(Vec::new()).expect("empty cluster is valid")
    }

    pub fn len(&self) -> usize {
        self.holes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.holes.is_empty()
    }

    pub fn holes(&self) -> &[Hole] {
        &self.holes
    }

    pub fn centers(&self) -> Vec<Vec3> {
        self.holes.iter().map(|h| h.center).collect()
    }

    pub fn center_distance(&self, i: usize, j: usize) -> f64 {
        self.center_distance[i * self.len() + j]
    }

    pub fn set_distance(&self, i: usize, j: usize) -> f64 {
        self.set_distance[i * self.len() + j]
    }

    /// `a`: largest hole diameter (0 for an empty cluster).
    pub fn max_diameter(&self) -> f64 {
        self.max_diameter
    }

    /// `d`: smallest set distance (`+inf` for fewer than two holes).
    pub fn min_distance(&self) -> f64 {
        self.min_distance
    }

    pub fn separations(&self) -> Result<Separations> {
        if self.is_empty() {
            return invalid("separations need at least one hole");
        }
        let m = self.len();
        Ok(Separations {
            max_diameter: self.max_diameter,
            min_distance: self.min_distance,
            set_distance: (0..m)
                .map(|i| self.set_distance[i * m..(i + 1) * m].to_vec())
                .collect(),
        })
    }

    /// Signed distance from `p` to the nearest hole (non-positive inside).
    pub fn distance_to_point(&self, p: &Vec3) -> f64 {
        self.bodies
            .iter()
            .map(|b| b.distance_to_point(p))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn capacitances(&self) -> Result<Vec<f64>> {
        self.holes
            .iter()
            .enumerate()
            .map(|(i, h)| h.capacitance.ok_or(Error::MissingCapacitance(i)))
            .collect()
    }

    pub fn with_capacitances(&self, caps: &[f64]) -> Result<Self> {
        if caps.len() != self.len() {
            return invalid(format!("{} capacitances for {} holes", caps.len(), self.len()));
        }
        let mut out = self.clone();
        for (i, (h, &c)) in out.holes.iter_mut().zip(caps).enumerate() {
            if !(c > 0.0 && c.is_finite()) {
                return invalid(format!("hole {i}: capacitance must be positive, got {c}"));
            }
            h.capacitance = Some(c);
        }
        Ok(out)
    }

    /// Rigid translation by `shift`.
    pub fn translated(&self, shift: Vec3) -> Result<Self> {
        Self::new(
            self.holes
                .iter()
                .map(|h| Hole {
                    center: h.center + shift,
                    ..h.clone()
                })
                .collect(),
        )
    }

    /// Rotation of every centre by `rot` about the origin (spheres only keep
    /// their shape exactly; meshes keep their reference orientation).
    pub fn rotated(&self, rot: &nalgebra::Rotation3<f64>) -> Result<Self> {
        Self::new(
            self.holes
                .iter()
                .map(|h| Hole {
                    center: rot * h.center,
                    ..h.clone()
                })
                .collect(),
        )
    }

    /// `eps * max_i sum_{j != i} d_ij^-2` with `eps = a`; the point-source
    /// expansion is justified when this is below 1.
    pub fn check_expansion_condition(&self) -> f64 {
        let m = self.len();
        let worst = (0..m)
            .map(|i| {
                (0..m)
                    .filter(|&j| j != i)
                    .map(|j| self.set_distance(i, j).powi(-2))
                    .fold(0.0, |s, v| s + v)
            })
            .fold(0.0, f64::max);
        self.max_diameter * worst
    }

    /// `C max_i sum_{j != i} 1 / (4π|z_i - z_j|)` with `C = max_j C_j`; the
    /// retarded system is uniquely solvable when this is below 1.
    pub fn check_solvability_condition(&self) -> Result<f64> {
        let caps = self.capacitances()?;
        let c = caps.iter().copied().fold(0.0, f64::max);
        let m = self.len();
        let worst = (0..m)
            .map(|i| {
                (0..m)
                    .filter(|&j| j != i)
                    .map(|j| 1.0 / (4.0 * PI * self.center_distance(i, j)))
                    .fold(0.0, |s, v| s + v)
            })
            .fold(0.0, f64::max);
        Ok(c * worst)
    }

    /// Diagnostic regime exponents with `eps = a`.
    pub fn regime_exponents(&self) -> Result<Regime> {
        let m = self.len();
        if m < 2 {
            return invalid("regime exponents need at least two holes");
        }
        let eps = self.max_diameter;
        if !(eps > 0.0 && eps < 1.0) {
            return invalid(format!("regime exponents need 0 < a < 1, got a = {eps}"));
        }
        let log_inv = (1.0 / eps).ln();
        let s = (m as f64).ln() / log_inv;
        let beta = (1.0 / self.min_distance).ln() / log_inv;
        Ok(Regime {
            s,
            beta,
            error_exponents: [2.0 - s, 3.0 - 2.0 * s, 3.0 - 2.0 * beta - s],
        })
    }
}

/// Point source `z*` emitting `signal` into a background of speed `c0`.
#[derive(Clone, Debug)]
pub struct SourceConfig {
    pub position: Vec3,
    pub signal: CausalSignal,
    pub c0: f64,
}

impl SourceConfig {
    pub fn new(position: Vec3, signal: CausalSignal, c0: f64) -> Result<Self> {
        if !(c0 > 0.0 && c0.is_finite()) {
            return invalid(format!("wave speed must be positive, got {c0}"));
        }
        if !position.iter().all(|c| c.is_finite()) {
            return invalid("non-finite source position");
        }
        Ok(Self { position, signal, c0 })
    }

    /// Requires the source to lie strictly outside every hole.
    pub fn check_outside(&self, cluster: &Cluster) -> Result<()> {
        for (j, b) in cluster.bodies.iter().enumerate() {
            if !(b.distance_to_point(&self.position) > 0.0) {
                return invalid(format!("source lies inside or on hole {j}"));
            }
        }
        Ok(())
    }
}

/// One sphere per cubic cell of volume `a` (side `a^(1/3)`), centred in the
/// box; the radius `C̄(z) a / (4π)` gives capacitance `C̄(z) a`.
///
/// The lattice holds `floor(L_k / a^(1/3))` cells along each axis, so a box
/// of volume `|Ω|` receives `[|Ω| / a]` cells when the sides are commensurate.
pub fn periodic_layout(bx: &AxisBox, a: f64, cbar: &dyn Fn(&Vec3) -> f64) -> Result<Cluster> {
    if !(a > 0.0 && a.is_finite()) {
        return invalid(format!("cell volume must be positive, got {a}"));
    }
    let side = a.cbrt();
    let lengths = bx.lengths();
    let counts = lengths.map(|l| (l / side + 1e-9).floor() as usize);
    if counts.contains(&0) {
        return invalid(format!("cells of side {side:e} do not fit in the box {lengths:?}"));
    }
    let offset: [f64; 3] = std::array::from_fn(|k| bx.min[k] + 0.5 * (lengths[k] - counts[k] as f64 * side));
    let mut holes = Vec::with_capacity(counts.iter().product());
    for i in 0..counts[0] {
        for j in 0..counts[1] {
            for k in 0..counts[2] {
                let z = Vec3::new(
                    offset[0] + (i as f64 + 0.5) * side,
                    offset[1] + (j as f64 + 0.5) * side,
                    offset[2] + (k as f64 + 0.5) * side,
                );
                let c = cbar(&z);
                if !(c > 0.0 && c.is_finite()) {
                    return invalid(format!("capacitance density must be positive, got {c} at {z:?}"));
                }
                let radius = c * a / (4.0 * PI);
                if radius >= 0.5 * side {
                    return invalid(format!(
                        "hole radius {radius:e} reaches half the cell side {:e}; holes would collide",
                        0.5 * side
                    ));
                }
                holes.push(Hole {
                    center: z,
                    shape: HoleShape::Sphere { radius },
                    capacitance: Some(c * a),
                });
            }
        }
    }
    Cluster::new(holes)
}

/// Spheres of one radius on the nodes of an `n[0] x n[1] x n[2]` lattice
/// spanning the closed box (faces included); a count of 1 uses the midplane.
pub fn node_lattice(bx: &AxisBox, n: [usize; 3], radius: f64) -> Result<Cluster> {
    if n.contains(&0) {
        return invalid("node lattice needs at least one node per axis");
    }
    let lengths = bx.lengths();
    let coord = |axis: usize, i: usize| {
        if n[axis] == 1 {
            0.5 * (bx.min[axis] + bx.max[axis])
        } else {
            bx.min[axis] + lengths[axis] * i as f64 / (n[axis] - 1) as f64
        }
    };
    let mut holes = Vec::new();
    for i in 0..n[0] {
        for j in 0..n[1] {
            for k in 0..n[2] {
                let mut h = Hole::sphere(Vec3::new(coord(0, i), coord(1, j), coord(2, k)), radius);
                h.capacitance = Some(4.0 * PI * radius);
                holes.push(h);
            }
        }
    }
    Cluster::new(holes)
}
