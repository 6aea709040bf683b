//! Mass density and capacitance density.
//!
//! A density `ρ` with `p = ρ^{-1/2}` subharmonic is realized by drilling
//! holes with capacitance density `C̄ = Δp / p`. Conversely `C̄ >= 0` gives
//! `p` through `-Δp + C̄ p = 0` in Ω with `p = 1` on ∂Ω.
//!
//! Fields live on the nodes `min + i h` of a box, boundary nodes included;
//! the Laplacian is the 7-point stencil.

use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{periodic_layout, Cluster};
use crate::error::{invalid, Error, Result};
use crate::geometry::{AxisBox, Vec3};

/// Round-off allowance for `Δp` when the tolerant subharmonicity check is on.
pub const SUBHARMONIC_TOLERANCE: f64 = 1e-12;
pub const DEFAULT_RELATIVE_RESIDUAL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct DensityField {
    bx: AxisBox,
    h: f64,
    counts: [usize; 3],
    values: Vec<f64>,
}

/// Grid description written next to node files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldManifest {
    pub quantity: String,
    pub min: [f64; 3],
    pub max: [f64; 3],
    pub h: f64,
    pub counts: [usize; 3],
}

impl DensityField {
    /// Node grid of spacing `h`; `h` must divide every side.
    pub fn from_fn(bx: AxisBox, h: f64, f: &dyn Fn(&Vec3) -> f64) -> Result<Self> {
        if !(h > 0.0) {
            return invalid(format!("grid spacing must be positive, got {h}"));
        }
        let lengths = bx.lengths();
        let mut counts = [0; 3];
        for k in 0..3 {
            let x = lengths[k] / h;
            let n = x.round();
            if n < 2.0 || (x - n).abs() > 1e-6 * n {
                return invalid(format!(
                    "spacing {h:e} must divide the side {:e} at least twice",
                    lengths[k]
                ));
            }
            counts[k] = n as usize + 1;
        }
        let mut field = Self {
            bx,
            h,
            counts,
            values: Vec::new(),
        };
        field.values = (0..field.len()).map(|m| f(&field.node(m))).collect();
        Ok(field)
    }

    pub fn constant(bx: AxisBox, h: f64, value: f64) -> Result<Self> {
        Self::from_fn(bx, h, &|_| value)
    }

    pub fn bx(&self) -> &AxisBox {
        &self.bx
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    /// Nodes per axis, boundary included.
    pub fn counts(&self) -> [usize; 3] {
        self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.counts[1] + j) * self.counts[2] + k
    }

    pub fn ijk(&self, m: usize) -> [usize; 3] {
        let [_, ny, nz] = self.counts;
        [m / (ny * nz), (m / nz) % ny, m % nz]
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.index(i, j, k)]
    }

    pub fn node(&self, m: usize) -> Vec3 {
        let [i, j, k] = self.ijk(m);
        Vec3::new(
            self.bx.min[0] + i as f64 * self.h,
            self.bx.min[1] + j as f64 * self.h,
            self.bx.min[2] + k as f64 * self.h,
        )
    }

    pub fn is_boundary(&self, m: usize) -> bool {
        let idx = self.ijk(m);
        (0..3).any(|a| idx[a] == 0 || idx[a] + 1 == self.counts[a])
    }

    fn with_values(&self, values: Vec<f64>) -> Self {
        Self {
            values,
            ..self.clone()
        }
    }

    /// 7-point Laplacian at an interior node.
    pub fn laplacian(&self, m: usize) -> f64 {
        let [i, j, k] = self.ijk(m);
        let c = self.values[m];
        let s = self.get(i - 1, j, k)
            + self.get(i + 1, j, k)
            + self.get(i, j - 1, k)
            + self.get(i, j + 1, k)
            + self.get(i, j, k - 1)
            + self.get(i, j, k + 1);
        (s - 6.0 * c) / (self.h * self.h)
    }

    /// Trilinear interpolation; points outside the box are clamped to it.
    pub fn sample(&self, p: &Vec3) -> f64 {
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for a in 0..3 {
            let x = ((p[a] - self.bx.min[a]) / self.h).clamp(0.0, (self.counts[a] - 1) as f64);
            let b = (x.floor() as usize).min(self.counts[a] - 2);
            base[a] = b;
            frac[a] = x - b as f64;
        }
        let mut v = 0.0;
        for corner in 0..8 {
            let d = [corner >> 2 & 1, corner >> 1 & 1, corner & 1];
            let w: f64 = (0..3)
                .map(|a| if d[a] == 1 { frac[a] } else { 1.0 - frac[a] })
                .product();
            if w != 0.0 {
                v += w * self.get(base[0] + d[0], base[1] + d[1], base[2] + d[2]);
            }
        }
        v
    }

    pub fn manifest(&self, quantity: &str) -> FieldManifest {
        FieldManifest {
            quantity: quantity.into(),
            min: self.bx.min,
            max: self.bx.max,
            h: self.h,
            counts: self.counts,
        }
    }

    /// `i,j,k,value` rows.
    pub fn write_nodes<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "i,j,k,value")?;
        for (m, v) in self.values.iter().enumerate() {
            let [i, j, k] = self.ijk(m);
            writeln!(w, "{i},{j},{k},{v:e}")?;
        }
        Ok(())
    }

    /// Reads node rows for the grid described by `manifest`; every node
    /// must appear exactly once.
    pub fn read_nodes<R: BufRead>(r: R, manifest: &FieldManifest) -> Result<Self> {
        let bx = AxisBox::new(manifest.min, manifest.max)?;
        let mut field = Self::constant(bx, manifest.h, f64::NAN)?;
        if field.counts != manifest.counts {
            return Err(Error::Parse(format!(
                "manifest counts {:?} disagree with box and spacing {:?}",
                manifest.counts, field.counts
            )));
        }
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if lineno == 0 || line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() != 4 {
                return Err(Error::Parse(format!("line {}: expected i,j,k,value", lineno + 1)));
            }
            let idx = |s: &str| {
                s.parse::<usize>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))
            };
            let (i, j, k) = (idx(cols[0])?, idx(cols[1])?, idx(cols[2])?);
            if i >= field.counts[0] || j >= field.counts[1] || k >= field.counts[2] {
                return Err(Error::Parse(format!("line {}: node index out of range", lineno + 1)));
            }
            let v: f64 = cols[3]
                .parse()
                .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
            let m = field.index(i, j, k);
            if !field.values[m].is_nan() {
                return Err(Error::Parse(format!("line {}: node ({i},{j},{k}) repeated", lineno + 1)));
            }
            field.values[m] = v;
        }
        if let Some(m) = field.values.iter().position(|v| v.is_nan()) {
            return Err(Error::Parse(format!("node {:?} missing", field.ijk(m))));
        }
        Ok(field)
    }
}

/// `p = ρ^{-1/2}` with the boundary layer forced to 1.
#[derive(Clone, Debug)]
pub struct PFromRho {
    pub p: DensityField,
    /// Largest `|ρ^{-1/2} - 1|` overwritten on the boundary.
    pub max_boundary_adjustment: f64,
}

pub fn p_from_rho(rho: &DensityField) -> Result<PFromRho> {
    if let Some(m) = rho.values.iter().position(|v| !(*v > 0.0 && v.is_finite())) {
        return invalid(format!("density must be positive, got {} at node {:?}", rho.values[m], rho.ijk(m)));
    }
    let mut adjust: f64 = 0.0;
    let values = rho
        .values
        .iter()
        .enumerate()
        .map(|(m, r)| {
            let p = 1.0 / r.sqrt();
            if rho.is_boundary(m) {
                adjust = adjust.max((p - 1.0).abs());
                1.0
            } else {
                p
            }
        })
        .collect();
    Ok(PFromRho {
        p: rho.with_values(values),
        max_boundary_adjustment: adjust,
    })
}

/// `ρ = p^{-2}`.
pub fn rho_from_p(p: &DensityField) -> Result<DensityField> {
    if let Some(m) = p.values.iter().position(|v| !(*v > 0.0)) {
        return invalid(format!("p must be positive, got {} at node {:?}", p.values[m], p.ijk(m)));
    }
    Ok(p.with_values(p.values.iter().map(|v| v.powi(-2)).collect()))
}

/// `C̄ = Δp / p` at interior nodes; boundary nodes copy their nearest
/// interior neighbour.
///
/// Subharmonicity is strict (`Δp > 0`) unless `tolerant`, which accepts
/// `Δp >= -1e-12` and clamps the result at 0.
pub fn cbar_from_p(p: &DensityField, tolerant: bool) -> Result<DensityField> {
    if let Some(m) = p.values.iter().position(|v| !(*v > 0.0)) {
        return invalid(format!("p must be positive, got {} at node {:?}", p.values[m], p.ijk(m)));
    }
    if p.counts.iter().any(|&n| n < 3) {
        return invalid("need at least one interior node per axis");
    }
    let floor = if tolerant { -SUBHARMONIC_TOLERANCE } else { 0.0 };
    let mut worst: Option<(usize, f64)> = None;
    let mut values = vec![0.0; p.len()];
    for (m, v) in values.iter_mut().enumerate() {
        if p.is_boundary(m) {
            continue;
        }
        let lap = p.laplacian(m);
        let bad = if tolerant { lap < floor } else { lap <= floor };
        if bad && worst.is_none_or(|(_, w)| lap < w) {
            worst = Some((m, lap));
        }
        *v = (lap / p.values[m]).max(0.0);
    }
    if let Some((m, laplacian)) = worst {
        return Err(Error::NotSubharmonic {
            node: p.ijk(m),
            laplacian,
        });
    }
    let mut out = p.with_values(values);
    for m in 0..out.len() {
        if out.is_boundary(m) {
            let idx = out.ijk(m);
            let c: [usize; 3] = std::array::from_fn(|a| idx[a].clamp(1, out.counts[a] - 2));
            out.values[m] = out.values[out.index(c[0], c[1], c[2])];
        }
    }
    Ok(out)
}

/// Result of [`solve_p`].
#[derive(Clone, Debug)]
pub struct PSolve {
    pub p: DensityField,
    pub iterations: usize,
    pub relative_residual: f64,
    pub history: Vec<f64>,
}

/// Solves `-Δp + C̄ p = 0`, `p = 1` on the boundary layer, by conjugate
/// gradients with a diagonal preconditioner to relative residual `rtol`.
pub fn solve_p(cbar: &DensityField, rtol: f64) -> Result<PSolve> {
    if let Some(m) = cbar.values.iter().position(|v| !(*v >= 0.0 && v.is_finite())) {
        return invalid(format!(
            "capacitance density must be non-negative, got {} at node {:?}",
            cbar.values[m],
            cbar.ijk(m)
        ));
    }
    if cbar.counts.iter().any(|&n| n < 3) {
        return invalid("need at least one interior node per axis");
    }
    let [nx, ny, nz] = cbar.counts;
    let (ix, iy, iz) = (nx - 2, ny - 2, nz - 2);
    let n = ix * iy * iz;
    let h2 = cbar.h * cbar.h;
    let id = |i: usize, j: usize, k: usize| (i * iy + j) * iz + k;
    let node = |u: usize| {
        let (i, j, k) = (u / (iy * iz), (u / iz) % iy, u % iz);
        (i, j, k)
    };
    let diag: Vec<f64> = (0..n)
        .map(|u| {
            let (i, j, k) = node(u);
            6.0 / h2 + cbar.get(i + 1, j + 1, k + 1)
        })
        .collect();
    // boundary neighbours carry p = 1 into the right-hand side
    let b: Vec<f64> = (0..n)
        .map(|u| {
            let (i, j, k) = node(u);
            let edges = [i == 0, i + 1 == ix, j == 0, j + 1 == iy, k == 0, k + 1 == iz];
            edges.iter().filter(|&&e| e).count() as f64 / h2
        })
        .collect();
    let apply = |x: &[f64], out: &mut [f64]| {
        out.par_iter_mut().enumerate().for_each(|(u, o)| {
            let (i, j, k) = node(u);
            let mut s = 0.0;
            if i > 0 {
                s += x[id(i - 1, j, k)];
            }
            if i + 1 < ix {
                s += x[id(i + 1, j, k)];
            }
            if j > 0 {
                s += x[id(i, j - 1, k)];
            }
            if j + 1 < iy {
                s += x[id(i, j + 1, k)];
            }
            if k > 0 {
                s += x[id(i, j, k - 1)];
            }
            if k + 1 < iz {
                s += x[id(i, j, k + 1)];
            }
            *o = diag[u] * x[u] - s / h2;
        });
    };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let bnorm = dot(&b, &b).sqrt();
    let mut x = vec![1.0; n];
    let mut r = vec![0.0; n];
    apply(&x, &mut r);
    for u in 0..n {
        r[u] = b[u] - r[u];
    }
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
    let mut d = z.clone();
    let mut rz = dot(&r, &z);
    let mut q = vec![0.0; n];
    let mut history = Vec::new();
    let max_iter = 20 * (ix.max(iy).max(iz)) + 200;
    let mut rel = dot(&r, &r).sqrt() / bnorm;
    history.push(rel);
    let mut iterations = 0;
    while !(rel <= rtol) {
        let dq = if iterations < max_iter && rel.is_finite() {
            apply(&d, &mut q);
            dot(&d, &q)
        } else {
            0.0
        };
        if !(dq > 0.0) {
            return Err(Error::Stagnation {
                iterations,
                residual: rel,
                history,
            });
        }
        let alpha = rz / dq;
        for u in 0..n {
            x[u] += alpha * d[u];
            r[u] -= alpha * q[u];
        }
        for u in 0..n {
            z[u] = r[u] / diag[u];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for u in 0..n {
            d[u] = z[u] + beta * d[u];
        }
        iterations += 1;
        rel = dot(&r, &r).sqrt() / bnorm;
        history.push(rel);
    }
    let mut values = vec![1.0; cbar.len()];
    for (u, v) in x.iter().enumerate() {
        let (i, j, k) = node(u);
        values[cbar.index(i + 1, j + 1, k + 1)] = *v;
    }
    Ok(PSolve {
        p: cbar.with_values(values),
        iterations,
        relative_residual: rel,
        history,
    })
}

/// Holes on the cells of volume `a` with capacitance `C̄(z_j) a`, using
/// the trilinear interpolant of the node field.
pub fn layout_from_cbar(cbar: &DensityField, a: f64) -> Result<Cluster> {
    periodic_layout(&cbar.bx, a, &|z| cbar.sample(z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::HoleShape;
    use std::f64::consts::PI;

    fn unit() -> AxisBox {
        AxisBox::new([0.0; 3], [1.0; 3]).unwrap()
    }

    #[test]
    fn rho_to_p() {
        let one = DensityField::constant(unit(), 0.25, 1.0).unwrap();
        let p = p_from_rho(&one).unwrap();
        assert!(p.p.values().iter().all(|&v| v == 1.0));
        assert_eq!(p.max_boundary_adjustment, 0.0);
        let four = DensityField::constant(unit(), 0.25, 4.0).unwrap();
        let p = p_from_rho(&four).unwrap();
        for m in 0..p.p.len() {
            let expect = if p.p.is_boundary(m) { 1.0 } else { 0.5 };
            assert_eq!(p.p.values()[m], expect);
        }
        assert_eq!(p.max_boundary_adjustment, 0.5);
        let back = rho_from_p(&p.p).unwrap();
        for m in 0..back.len() {
            if !back.is_boundary(m) {
                assert_eq!(back.values()[m], 4.0);
            }
        }
        assert!(p_from_rho(&DensityField::constant(unit(), 0.25, 0.0).unwrap()).is_err());
    }

    #[test]
    fn cbar_of_cosh_profile() {
        let k: f64 = 2.0;
        let errs: Vec<f64> = [0.125, 0.0625]
            .iter()
            .map(|&h| {
                let p = DensityField::from_fn(unit(), h, &|x| (k * x.x).cosh() / k.cosh()).unwrap();
                let c = cbar_from_p(&p, false).unwrap();
                (0..c.len())
                    .filter(|&m| !c.is_boundary(m))
                    .map(|m| (c.values()[m] - k * k).abs())
                    .fold(0.0, f64::max)
            })
            .collect();
        assert!(errs[1] < 1e-2);
        assert!((errs[0] / errs[1]).log2() > 1.9, "{errs:?}");
    }

    #[test]
    fn subharmonicity_is_enforced() {
        let flat = DensityField::constant(unit(), 0.25, 1.0).unwrap();
        assert!(matches!(cbar_from_p(&flat, false), Err(Error::NotSubharmonic { .. })));
        let c = cbar_from_p(&flat, true).unwrap();
        assert!(c.values().iter().all(|&v| v == 0.0));
        // strict interior maximum at the centre
        let bump = DensityField::from_fn(unit(), 0.25, &|x| 2.0 - (x - Vec3::repeat(0.5)).norm_squared()).unwrap();
        match cbar_from_p(&bump, true) {
            Err(Error::NotSubharmonic { node, laplacian }) => {
                assert!(laplacian < 0.0);
                assert!(node.iter().all(|&i| (1..=3).contains(&i)));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn vacuous_medium_gives_unit_p() {
        let c = DensityField::constant(unit(), 0.125, 0.0).unwrap();
        let s = solve_p(&c, 1e-10).unwrap();
        assert!(s.p.values().iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn solve_p_properties() {
        let bx = AxisBox::centered_cube(0.018).unwrap();
        let c = DensityField::constant(bx, 0.036 / 12.0, 4.0 * PI).unwrap();
        let s = solve_p(&c, 1e-13).unwrap();
        assert!(s.relative_residual <= 1e-13);
        let n = s.p.counts()[0];
        for m in 0..s.p.len() {
            let v = s.p.values()[m];
            assert!(v > 0.0 && v <= 1.0);
            if !s.p.is_boundary(m) {
                assert!(v < 1.0);
            }
            let [i, j, k] = s.p.ijk(m);
            for mirrored in [[n - 1 - i, j, k], [j, i, k], [i, k, j], [k, j, i]] {
                let w = s.p.get(mirrored[0], mirrored[1], mirrored[2]);
                assert!((v - w).abs() < 1e-12);
            }
        }
        // discrete roundtrip is exact up to the solver tolerance
        let back = cbar_from_p(&s.p, false).unwrap();
        for m in 0..back.len() {
            assert!((back.values()[m] - 4.0 * PI).abs() < 1e-6);
        }
        assert!(solve_p(&DensityField::constant(unit(), 0.25, -1.0).unwrap(), 1e-10).is_err());
    }

    #[test]
    fn stagnation_reports_history() {
        let c = DensityField::constant(unit(), 0.125, 1.0).unwrap();
        match solve_p(&c, 0.0) {
            Err(Error::Stagnation { history, .. }) => assert!(history.len() > 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn layouts_follow_cbar() {
        let bx = AxisBox::new([0.0; 3], [0.09; 3]).unwrap();
        let c = DensityField::constant(bx, 0.03, 4.0 * PI).unwrap();
        let a = 0.0055f64.powi(3) * 8.0;
        let cl = layout_from_cbar(&c, a).unwrap();
        let radius = |cl: &Cluster| match cl.holes()[0].shape {
            HoleShape::Sphere { radius } => radius,
            _ => unreachable!(),
        };
        assert!((radius(&cl) - a).abs() < 1e-15);
        let half = layout_from_cbar(&c, a / 2.0).unwrap();
        assert!((radius(&half) - a / 2.0).abs() < 1e-15);
        // radii proportional to a linear C̄
        let lin = DensityField::from_fn(bx, 0.03, &|x| 100.0 * (1.0 + x.x)).unwrap();
        let cl = layout_from_cbar(&lin, a).unwrap();
        for h in cl.holes() {
            if let HoleShape::Sphere { radius } = h.shape {
                let expect = 100.0 * (1.0 + h.center.x) * a / (4.0 * PI);
                assert!((radius - expect).abs() < 1e-12 * expect);
            }
        }
    }

    #[test]
    fn node_files_roundtrip() {
        let f = DensityField::from_fn(unit(), 0.5, &|x| x.x + 2.0 * x.y - x.z).unwrap();
        let mut buf = Vec::new();
        f.write_nodes(&mut buf).unwrap();
        let man = f.manifest("rho");
        let text = toml::to_string(&man).unwrap();
        let man2: FieldManifest = toml::from_str(&text).unwrap();
        let g = DensityField::read_nodes(&buf[..], &man2).unwrap();
        assert_eq!(f, g);
        let truncated = &buf[..buf.len() / 2];
        assert!(DensityField::read_nodes(truncated, &man2).is_err());
    }
}
