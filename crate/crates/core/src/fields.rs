//! Incident, scattered and total fields.
//!
//! The scattered field of a cluster is the superposition of retarded
//! monopoles, `u^s(x,t) = Σ_j C_j α_j(t - |x - z_j|/c0) / (4π|x - z_j|)`.

use std::f64::consts::PI;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{Cluster, Hole, SourceConfig};
use crate::error::{invalid, Error, Result};
use crate::geometry::{to_array, Vec3};
use crate::retarded::SystemSolution;
use crate::signal::Trace;

/// Exclusion radius in units of the largest hole diameter.
pub const DEFAULT_EXCLUSION_FACTOR: f64 = 5.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    Incident,
    Scattered,
    Total,
}

impl FromStr for FieldKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "incident" => Ok(FieldKind::Incident),
            "scattered" => Ok(FieldKind::Scattered),
            "total" => Ok(FieldKind::Total),
            other => invalid(format!("unknown field '{other}' (incident, scattered, total)")),
        }
    }
}

/// `λ(t - |x - z*|/c0) / (4π|x - z*|)`.
pub fn incident(source: &SourceConfig, x: &Vec3, t: f64) -> Result<f64> {
    let r = (x - source.position).norm();
    if !(r > 0.0) {
        return invalid("incident field is singular at the source");
    }
    Ok(source.signal.evaluate(t - r / source.c0) / (4.0 * PI * r))
}

/// `Σ_j C_j α_j(t - |x - z_j|/c0) / (4π|x - z_j|)`.
pub fn scattered_asymptotic(cluster: &Cluster, sol: &SystemSolution, c0: f64, x: &Vec3, t: f64) -> Result<f64> {
    if sol.len() != cluster.len() {
        return invalid(format!("solution has {} signals for {} holes", sol.len(), cluster.len()));
    }
    if cluster.distance_to_point(x) <= 0.0 {
        return invalid("evaluation point lies inside a hole");
    }
    let caps = cluster.capacitances()?;
    let mut u = 0.0;
    for (j, hole) in cluster.holes().iter().enumerate() {
        let r = (x - hole.center).norm();
        u += caps[j] * sol.alpha(j).interp(t - r / c0, sol.interp())? / (4.0 * PI * r);
    }
    Ok(u)
}

/// `-C λ(t - |x - z|/c0 - |z - z*|/c0) / (16π² |x - z| |z - z*|)`.
pub fn single_hole_closed_form(hole: &Hole, source: &SourceConfig, x: &Vec3, t: f64) -> Result<f64> {
    let c = hole.capacitance.ok_or(Error::MissingCapacitance(0))?;
    let r1 = (x - hole.center).norm();
    let r2 = (hole.center - source.position).norm();
    if !(r1 > 0.0 && r2 > 0.0) {
        return invalid("closed form needs x, z and z* pairwise distinct");
    }
    let delay = (r1 + r2) / source.c0;
    Ok(-c * source.signal.evaluate(t - delay) / (16.0 * PI * PI * r1 * r2))
}

pub fn total(cluster: &Cluster, sol: &SystemSolution, source: &SourceConfig, x: &Vec3, t: f64) -> Result<f64> {
    Ok(incident(source, x, t)? + scattered_asymptotic(cluster, sol, source.c0, x, t)?)
}

pub fn field(
    which: FieldKind,
    cluster: &Cluster,
    sol: &SystemSolution,
    source: &SourceConfig,
    x: &Vec3,
    t: f64,
) -> Result<f64> {
    match which {
        FieldKind::Incident => incident(source, x, t),
        FieldKind::Scattered => scattered_asymptotic(cluster, sol, source.c0, x, t),
        FieldKind::Total => total(cluster, sol, source, x, t),
    }
}

/// `min_j (|z_j - z*| + |x - z_j|) / c0` (`+inf` for an empty cluster).
pub fn first_arrival(cluster: &Cluster, source: &SourceConfig, x: &Vec3) -> f64 {
    cluster
        .holes()
        .iter()
        .map(|h| ((h.center - source.position).norm() + (x - h.center).norm()) / source.c0)
        .fold(f64::INFINITY, f64::min)
}

/// Default exclusion radius, `5 a`.
pub fn default_exclusion(cluster: &Cluster) -> f64 {
    DEFAULT_EXCLUSION_FACTOR * cluster.max_diameter()
}

/// True when `x` keeps the exclusion distance from every hole centre, lies
/// outside every hole and differs from the source.
pub fn admissible_point(cluster: &Cluster, source: &SourceConfig, exclusion: f64, x: &Vec3) -> bool {
    (x - source.position).norm() > 0.0
        && cluster.distance_to_point(x) > 0.0
        && cluster.holes().iter().all(|h| (x - h.center).norm() >= exclusion)
}

#[derive(Clone, Debug)]
pub struct ProbeSet {
    points: Vec<Vec3>,
    exclusion: f64,
}

impl ProbeSet {
    /// Rejects probes that are not admissible for `exclusion`.
    pub fn new(points: Vec<Vec3>, exclusion: f64, cluster: &Cluster, source: &SourceConfig) -> Result<Self> {
        if !(exclusion >= 0.0) {
            return invalid(format!("exclusion radius must be non-negative, got {exclusion}"));
        }
        for (k, p) in points.iter().enumerate() {
            if !admissible_point(cluster, source, exclusion, p) {
                return invalid(format!(
                    "probe {k} at {:?} is inside the exclusion zone (radius {exclusion:e}) or at the source",
                    to_array(p)
                ));
            }
        }
        Ok(Self { points, exclusion })
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn exclusion(&self) -> f64 {
        self.exclusion
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// One trace per probe on the grid `t0 + k dt`, `k < n`.
    pub fn traces(&self, n: usize, dt: f64, eval: &(dyn Fn(&Vec3, f64) -> Result<f64> + Sync)) -> Result<Vec<Trace>> {
        self.points
            .par_iter()
            .map(|p| {
                let v = (0..n).map(|k| eval(p, k as f64 * dt)).collect::<Result<Vec<_>>>()?;
                Trace::new(0.0, dt, v)
            })
            .collect()
    }
}

/// Writes `time,<name>_0,...` for traces sharing one grid.
pub fn write_traces_csv<W: Write>(mut w: W, name: &str, traces: &[Trace]) -> Result<()> {
    let mut header = String::from("time");
    for k in 0..traces.len() {
        header.push_str(&format!(",{name}_{k}"));
    }
    writeln!(w, "{header}")?;
    let n = traces.first().map_or(0, Trace::len);
    if traces.iter().any(|t| t.len() != n) {
        return invalid("traces do not share a time grid");
    }
    for k in 0..n {
        let mut line = format!("{:e}", traces[0].time(k));
        for tr in traces {
            line.push_str(&format!(",{:e}", tr.samples()[k]));
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Lattice of sample points `center + (i - (n-1)/2) h` per axis, with
/// output times. A count of 1 collapses an axis (planar grids).
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct FieldGrid {
    pub center: [f64; 3],
    pub spacing: [f64; 3],
    pub counts: [usize; 3],
    pub times: Vec<f64>,
}

impl FieldGrid {
    pub fn new(center: [f64; 3], spacing: [f64; 3], counts: [usize; 3], times: Vec<f64>) -> Result<Self> {
        for k in 0..3 {
            if counts[k] == 0 {
                return invalid("grid counts must be positive");
            }
            if counts[k] > 1 && !(spacing[k] > 0.0) {
                return invalid(format!("grid spacing must be positive, got {}", spacing[k]));
            }
        }
        Ok(Self {
            center,
            spacing,
            counts,
            times,
        })
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Points with x varying fastest.
    pub fn points(&self) -> Vec<Vec3> {
        let coord = |axis: usize, i: usize| {
            self.center[axis] + (i as f64 - 0.5 * (self.counts[axis] - 1) as f64) * self.spacing[axis]
        };
        let mut out = Vec::with_capacity(self.len());
        for k in 0..self.counts[2] {
            for j in 0..self.counts[1] {
                for i in 0..self.counts[0] {
                    out.push(Vec3::new(coord(0, i), coord(1, j), coord(2, k)));
                }
            }
        }
        out
    }
}

/// Field values on a grid; `None` marks excluded or failed points.
#[derive(Clone, Debug)]
pub struct GridSnapshots {
    pub points: Vec<Vec3>,
    pub times: Vec<f64>,
    pub which: FieldKind,
    /// `values[time][point]`.
    pub values: Vec<Vec<Option<f64>>>,
    pub excluded: usize,
    pub failed: usize,
}

impl GridSnapshots {
    /// `x,y,z,value` rows; missing values are empty fields.
    pub fn write_csv<W: Write>(&self, k: usize, mut w: W) -> Result<()> {
        writeln!(w, "x,y,z,value")?;
        for (p, v) in self.points.iter().zip(&self.values[k]) {
            match v {
                Some(v) => writeln!(w, "{:e},{:e},{:e},{:e}", p.x, p.y, p.z, v)?,
                None => writeln!(w, "{:e},{:e},{:e},", p.x, p.y, p.z)?,
            }
        }
        Ok(())
    }
}

/// Evaluates `which` at every grid point and time. Points in the exclusion
/// zone and points whose evaluation fails become sentinels.
pub fn grid_eval(
    cluster: &Cluster,
    sol: &SystemSolution,
    source: &SourceConfig,
    grid: &FieldGrid,
    which: FieldKind,
    exclusion: f64,
) -> GridSnapshots {
    let points = grid.points();
    let ok: Vec<bool> = points
        .iter()
        .map(|p| admissible_point(cluster, source, exclusion, p))
        .collect();
    let excluded = ok.iter().filter(|&&b| !b).count();
    let per_point: Vec<Vec<Option<f64>>> = points
        .par_iter()
        .zip(&ok)
        .map(|(p, &admissible)| {
            grid.times
                .iter()
                .map(|&t| {
                    if admissible {
                        field(which, cluster, sol, source, p, t).ok()
                    } else {
                        None
                    }
                })
                .collect()
        })
        .collect();
    let values: Vec<Vec<Option<f64>>> = (0..grid.times.len())
        .map(|k| per_point.iter().map(|v| v[k]).collect())
        .collect();
    let missing: usize = values.iter().flatten().filter(|v| v.is_none()).count();
    let failed = missing - excluded * grid.times.len();
    if failed > 0 {
        log::warn!("{failed} grid evaluations failed and were written as missing values");
    }
    GridSnapshots {
        points,
        times: grid.times.clone(),
        which,
        values,
        excluded,
        failed,
    }
}
