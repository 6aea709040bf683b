//! Electrostatic capacitance of a hole.
//!
//! The equilibrium density `sigma` of a closed surface solves
//! `∫ sigma(y) / (4π|x - y|) ds(y) = 1` on the surface, and the capacitance
//! is its total charge. Spheres have the closed form `4πr`; general shapes
//! use piecewise-constant collocation on a [`SurfaceMesh`].

mod mesh;

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use mesh::SurfaceMesh;

use crate::cluster::{Cluster, HoleShape};
use crate::error::{invalid, Error, Result};

/// Panel-method solution of the unit-potential problem.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CapacitanceResult {
    pub capacitance: f64,
    /// Max collocation residual `|(A sigma)_k - 1|`.
    pub residual: f64,
    pub panels: usize,
    pub min_density: f64,
    #[serde(skip)]
    pub density: Vec<f64>,
}

impl CapacitanceResult {
    /// True when every panel density is positive (expected for convex bodies).
    pub fn density_positive(&self) -> bool {
        self.min_density > 0.0
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("capacitance result serializes")
    }
}

pub fn capacitance_sphere(radius: f64) -> Result<f64> {
    if !(radius > 0.0) || !radius.is_finite() {
        return invalid(format!("sphere radius must be positive, got {radius}"));
    }
    Ok(4.0 * PI * radius)
}

/// Capacitance of `eps * B` from that of `B`.
pub fn scale_capacitance(c_reference: f64, eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return invalid(format!("scale must be positive, got {eps}"));
    }
    Ok(eps * c_reference)
}

/// Collocation matrix `A_km = ∫_{panel m} ds / (4π|x_k - y|)` at centroids.
///
/// Off-diagonal entries use the one-point rule `area_m / (4π|x_k - c_m|)`;
/// the diagonal integrates over the disk of equal area, `sqrt(area/π) / 2`.
fn collocation_matrix(mesh: &SurfaceMesh) -> DMatrix<f64> {
    let n = mesh.panel_count();
    let c = mesh.centroids();
    let a = mesh.areas();
    let rows: Vec<f64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|k| {
            (0..n).map(move |m| {
                if k == m {
                    0.5 * (a[k] / PI).sqrt()
                } else {
                    a[m] / (4.0 * PI * (c[k] - c[m]).norm())
                }
            })
        })
        .collect();
    DMatrix::from_row_slice(n, n, &rows)
}

pub fn solve_equilibrium_density(mesh: &SurfaceMesh) -> Result<CapacitanceResult> {
    let n = mesh.panel_count();
    let a = collocation_matrix(mesh);
    let ones = DVector::from_element(n, 1.0);
    let sigma = a
        .clone()
        .lu()
        .solve(&ones)
        .ok_or_else(|| Error::Singular(format!("collocation matrix of {n} panels is singular")))?;
    if sigma.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("collocation solve produced non-finite densities".into()));
    }
    let residual = (&a * &sigma - &ones).amax();
    let capacitance: f64 = sigma.iter().zip(mesh.areas()).map(|(s, ar)| s * ar).sum();
    let min_density = sigma.iter().copied().fold(f64::INFINITY, f64::min);
    if min_density <= 0.0 {
        log::warn!("equilibrium density has non-positive panels (min {min_density:e})");
    }
    if !(capacitance > 0.0) {
        return Err(Error::Singular(format!("non-positive capacitance {capacitance:e}")));
    }
    Ok(CapacitanceResult {
        capacitance,
        residual,
        panels: n,
        min_density,
        density: sigma.iter().copied().collect(),
    })
}

/// Fills in every hole's capacitance: `4πr` for spheres, `eps * C(B)` for
/// meshes, with one panel solve per distinct reference mesh.
pub fn assign_capacitances(cluster: &Cluster) -> Result<Cluster> {
    let mut cache: HashMap<*const SurfaceMesh, f64> = HashMap::new();
    let mut caps = Vec::with_capacity(cluster.len());
    for hole in cluster.holes() {
        let c = match &hole.shape {
            HoleShape::Sphere { radius } => capacitance_sphere(*radius)?,
            HoleShape::Mesh { mesh, scale, .. } => {
                let key = Arc::as_ptr(mesh);
                let reference = match cache.get(&key) {
                    Some(&c) => c,
                    None => {
                        let c = solve_equilibrium_density(mesh)?.capacitance;
                        cache.insert(key, c);
                        c
                    }
                };
                scale_capacitance(reference, *scale)?
            }
        };
        caps.push(c);
    }
    cluster.with_capacitances(&caps)
}
