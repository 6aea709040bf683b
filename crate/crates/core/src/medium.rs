//! Effective medium: the retarded volume integral equation
//!
//! ```text
//! v(x,t) + ∫_Ω C̄(z) v(z, t - |x-z|/c0) / (4π|x-z|) dz = -u^i(x,t)
//! ```
//!
//! on a uniform voxel grid, and the exterior field
//! `W(x,t) = ∫_Ω C̄(z) v(z, t - |x-z|/c0) / (4π|x-z|) dz`.
//!
//! Off-diagonal voxel pairs use the midpoint rule. The self term integrates
//! `1/(4π|z|)` over the ball of equal volume, `r_v² / 2`, with its sub-voxel
//! delay dropped, so each step is explicit once `dt <= h/c0`.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{Cluster, SourceConfig};
use crate::error::{invalid, Result};
use crate::fields::{incident, scattered_asymptotic};
use crate::geometry::{AxisBox, Vec3};
use crate::retarded::{grid_steps, MarchOptions, RetardedSystem};
use crate::signal::{Interp, Lag, Trace};

#[derive(Clone, Debug)]
pub struct VoxelGrid {
    bx: AxisBox,
    h: f64,
    counts: [usize; 3],
    cbar: Vec<f64>,
}

impl VoxelGrid {
    /// `counts[k]` voxels along axis `k`; all voxels must be cubes.
    pub fn new(bx: AxisBox, counts: [usize; 3], cbar: &dyn Fn(&Vec3) -> f64) -> Result<Self> {
        if counts.contains(&0) {
            return invalid("voxel counts must be positive");
        }
        let lengths = bx.lengths();
        let h = lengths[0] / counts[0] as f64;
        for k in 1..3 {
            let hk = lengths[k] / counts[k] as f64;
            if (hk - h).abs() > 1e-9 * h {
                return invalid(format!("voxels are not cubic: spacing {h:e} along x, {hk:e} along axis {k}"));
            }
        }
        let mut grid = Self {
            bx,
            h,
            counts,
            cbar: Vec::new(),
        };
        let cbar: Vec<f64> = (0..grid.len()).map(|m| cbar(&grid.center(m))).collect();
        if let Some(m) = cbar.iter().position(|c| !(*c >= 0.0 && c.is_finite())) {
            return invalid(format!("capacitance density must be non-negative, got {} in voxel {m}", cbar[m]));
        }
        grid.cbar = cbar;
        Ok(grid)
    }

    /// `n` voxels per axis on a cube.
    pub fn cubic(bx: AxisBox, n: usize, cbar: &dyn Fn(&Vec3) -> f64) -> Result<Self> {
        Self::new(bx, [n; 3], cbar)
    }

    /// Voxel with spacing `h` (`h` must divide the box sides).
    pub fn with_spacing(bx: AxisBox, h: f64, cbar: &dyn Fn(&Vec3) -> f64) -> Result<Self> {
        if !(h > 0.0) {
            return invalid(format!("voxel spacing must be positive, got {h}"));
        }
        let lengths = bx.lengths();
        let mut counts = [0; 3];
        for k in 0..3 {
            let x = lengths[k] / h;
            let n = x.round();
            if n < 1.0 || (x - n).abs() > 1e-6 * n {
                return invalid(format!("spacing {h:e} does not divide the box side {:e}", lengths[k]));
            }
            counts[k] = n as usize;
        }
        Self::new(bx, counts, cbar)
    }

    pub fn bx(&self) -> &AxisBox {
        &self.bx
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn counts(&self) -> [usize; 3] {
        self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cbar(&self) -> &[f64] {
        &self.cbar
    }

    pub fn voxel_volume(&self) -> f64 {
        self.h.powi(3)
    }

    fn ijk(&self, m: usize) -> [usize; 3] {
        let [_, ny, nz] = self.counts;
        [m / (ny * nz), (m / nz) % ny, m % nz]
    }

    pub fn center(&self, m: usize) -> Vec3 {
        let [i, j, k] = self.ijk(m);
        Vec3::new(
            self.bx.min[0] + (i as f64 + 0.5) * self.h,
            self.bx.min[1] + (j as f64 + 0.5) * self.h,
            self.bx.min[2] + (k as f64 + 0.5) * self.h,
        )
    }

    /// Voxel containing `p`, if any.
    pub fn locate(&self, p: &Vec3) -> Option<usize> {
        if !self.bx.contains(p) {
            return None;
        }
        let idx: [usize; 3] =
            std::array::from_fn(|k| (((p[k] - self.bx.min[k]) / self.h).floor() as usize).min(self.counts[k] - 1));
        let [_, ny, nz] = self.counts;
        Some((idx[0] * ny + idx[1]) * nz + idx[2])
    }

    /// Radius of the ball with the voxel's volume.
    pub fn equal_volume_radius(&self) -> f64 {
        (3.0 * self.voxel_volume() / (4.0 * PI)).cbrt()
    }
}

/// Pair weights and delays, stored per lattice offset.
#[derive(Clone, Debug)]
pub struct VolumeKernel {
    counts: [usize; 3],
    cbar: Vec<f64>,
    /// `h³ / (4π|offset|)` indexed by shifted offset.
    geometry: Vec<f64>,
    /// `|offset| / c0`.
    delays: Vec<f64>,
    self_weights: Vec<f64>,
}

pub fn assemble_volume_kernel(grid: &VoxelGrid, c0: f64) -> Result<VolumeKernel> {
    if !(c0 > 0.0) {
        return invalid(format!("wave speed must be positive, got {c0}"));
    }
    let [nx, ny, nz] = grid.counts;
    let (sx, sy, sz) = (2 * nx - 1, 2 * ny - 1, 2 * nz - 1);
    let h = grid.h;
    let mut geometry = vec![0.0; sx * sy * sz];
    let mut delays = vec![0.0; sx * sy * sz];
    for a in 0..sx {
        for b in 0..sy {
            for c in 0..sz {
                let d = Vec3::new(
                    a as f64 - (nx - 1) as f64,
                    b as f64 - (ny - 1) as f64,
                    c as f64 - (nz - 1) as f64,
                )
                .norm()
                    * h;
                let o = (a * sy + b) * sz + c;
                if d > 0.0 {
                    geometry[o] = h.powi(3) / (4.0 * PI * d);
                    delays[o] = d / c0;
                }
            }
        }
    }
    let rv = grid.equal_volume_radius();
    Ok(VolumeKernel {
        counts: grid.counts,
        cbar: grid.cbar.clone(),
        geometry,
        delays,
        self_weights: grid.cbar.iter().map(|c| c * rv * rv / 2.0).collect(),
    })
}

impl VolumeKernel {
    fn offset(&self, m: usize, n: usize) -> usize {
        let [nx, ny, nz] = self.counts;
        let (_, sy, sz) = (2 * nx - 1, 2 * ny - 1, 2 * nz - 1);
        let im = [m / (ny * nz), (m / nz) % ny, m % nz];
        let inn = [n / (ny * nz), (n / nz) % ny, n % nz];
        let a = inn[0] + nx - 1 - im[0];
        let b = inn[1] + ny - 1 - im[1];
        let c = inn[2] + nz - 1 - im[2];
        (a * sy + b) * sz + c
    }

    /// `w_mn` (the self weight when `m == n`).
    pub fn weight(&self, m: usize, n: usize) -> f64 {
        if m == n {
            self.self_weights[m]
        } else {
            self.cbar[n] * self.geometry[self.offset(m, n)]
        }
    }

    /// `τ_mn` (0 when `m == n`).
    pub fn delay(&self, m: usize, n: usize) -> f64 {
        self.delays[self.offset(m, n)]
    }

    pub fn self_weight(&self, m: usize) -> f64 {
        self.self_weights[m]
    }

    pub fn len(&self) -> usize {
        self.cbar.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cbar.is_empty()
    }
}

/// Per-voxel traces `v(z_m, ·)` on a shared grid.
#[derive(Clone, Debug)]
pub struct VolumeSolution {
    traces: Vec<Trace>,
    dt: f64,
    interp: Interp,
}

impl VolumeSolution {
    pub fn traces(&self) -> &[Trace] {
        &self.traces
    }

    pub fn voxel(&self, m: usize) -> &Trace {
        &self.traces[m]
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn interp(&self) -> Interp {
        self.interp
    }

    pub fn steps(&self) -> usize {
        self.traces.first().map_or(0, |t| t.len() - 1)
    }

    /// `voxel,time,value` rows.
    pub fn write_dump<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "voxel,time,value")?;
        for (m, tr) in self.traces.iter().enumerate() {
            for (k, v) in tr.samples().iter().enumerate() {
                writeln!(w, "{m},{:e},{:e}", tr.time(k), v)?;
            }
        }
        Ok(())
    }
}

/// Marches `(1 + w_mm) v_m(t_n) = -u^i(z_m, t_n) - Σ_{n≠m} w_mn v_n(t_n - τ_mn)`.
pub fn march_volume(
    grid: &VoxelGrid,
    source: &SourceConfig,
    t_end: f64,
    dt: f64,
    interp: Interp,
) -> Result<VolumeSolution> {
    if !(t_end > 0.0) {
        return invalid(format!("final time must be positive, got {t_end}"));
    }
    if !(dt > 0.0) {
        return invalid(format!("time step must be positive, got {dt}"));
    }
    let limit = grid.h / source.c0;
    if dt > limit * (1.0 + 1e-12) {
        return invalid(format!(
            "dt = {dt:e} exceeds h/c0 = {limit:e}; neighbour lookups would need the current step"
        ));
    }
    let kernel = assemble_volume_kernel(grid, source.c0)?;
    let nvox = grid.len();
    let steps = grid_steps(t_end, dt);
    let lags: Vec<Lag> = kernel.delays.iter().map(|d| Lag::new(d / dt, interp)).collect();
    let centers: Vec<Vec3> = (0..nvox).map(|m| grid.center(m)).collect();
    if let Some(m) = centers.iter().position(|c| *c == source.position) {
        return invalid(format!("source sits at the centre of voxel {m}"));
    }
    let [nx, ny, nz] = grid.counts;
    let (sy, sz) = (2 * ny - 1, 2 * nz - 1);
    // voxels with nonzero density, with their lattice indices
    let active: Vec<(usize, [usize; 3])> = (0..nvox)
        .filter(|&n| kernel.cbar[n] != 0.0)
        .map(|n| (n, grid.ijk(n)))
        .collect();
    let mut v = vec![vec![0.0; steps + 1]; nvox];
    let mut next = vec![0.0; nvox];
    for step in 0..=steps {
        let t = step as f64 * dt;
        let vr = &v;
        next.par_iter_mut().enumerate().for_each(|(m, out)| {
            let im = grid.ijk(m);
            let mut s = 0.0;
            for &(n, inn) in &active {
                if n == m {
                    continue;
                }
                let o = ((inn[0] + nx - 1 - im[0]) * sy + (inn[1] + ny - 1 - im[1])) * sz + (inn[2] + nz - 1 - im[2]);
                s += kernel.cbar[n] * kernel.geometry[o] * lags[o].eval(&vr[n], step);
            }
            let ui = incident(source, &centers[m], t).expect("source is off the voxel centres");
            *out = (-ui - s) / (1.0 + kernel.self_weights[m]);
        });
        for (m, x) in next.iter().enumerate() {
            v[m][step] = *x;
        }
    }
    let traces = v
        .into_iter()
        .map(|s| Trace::new(0.0, dt, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(VolumeSolution { traces, dt, interp })
}

/// `W(x,t) = Σ_m C̄_m h³ v_m(t - |x - z_m|/c0) / (4π|x - z_m|)` for `x`
/// outside the closed box.
pub fn exterior_w(grid: &VoxelGrid, sol: &VolumeSolution, c0: f64, x: &Vec3, t: f64) -> Result<f64> {
    if grid.bx.contains(x) {
        return invalid("exterior field requested inside the medium");
    }
    let vol = grid.voxel_volume();
    let mut w = 0.0;
    for (m, c) in grid.cbar.iter().enumerate() {
        if *c == 0.0 {
            continue;
        }
        let r = (x - grid.center(m)).norm();
        w += c * vol * sol.traces[m].interp(t - r / c0, sol.interp)? / (4.0 * PI * r);
    }
    Ok(w)
}

type PointField<'a> = Box<dyn Fn(&Vec3, f64) -> Result<f64> + Sync + 'a>;

/// Cluster-versus-medium probe differences.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct MediumComparison {
    pub holes: usize,
    pub cell_volume: f64,
    /// `||u^s - W||_{L²(0,T)} / ||u^s||_{L²(0,T)}` per probe.
    pub relative_l2: Vec<f64>,
    /// `max_t |u^s - W|` per probe.
    pub max_diff: Vec<f64>,
    pub cluster_norm: Vec<f64>,
    pub medium_norm: Vec<f64>,
}

impl MediumComparison {
    pub fn worst_relative_l2(&self) -> f64 {
        self.relative_l2.iter().copied().fold(0.0, f64::max)
    }
}

/// Checks that `cluster` is a lattice layout over the grid's box whose
/// capacitances are `C̄(z_j) a`, and returns the inferred cell volume `a`.
pub fn matching_cell_volume(cluster: &Cluster, grid: &VoxelGrid) -> Result<f64> {
    if cluster.is_empty() {
        if grid.cbar.iter().any(|&c| c != 0.0) {
            return invalid("an empty cluster only matches a vacuous medium");
        }
        return Ok(grid.bx.volume());
    }
    let m = cluster.len();
    let a = if m == 1 {
        grid.bx.volume()
    } else {
        let side = (0..m)
            .flat_map(|i| (i + 1..m).map(move |j| (i, j)))
            .map(|(i, j)| cluster.center_distance(i, j))
            .fold(f64::INFINITY, f64::min);
        side.powi(3)
    };
    let caps = cluster.capacitances()?;
    let cmax = grid.cbar.iter().copied().fold(0.0, f64::max);
    for (j, hole) in cluster.holes().iter().enumerate() {
        let v = grid
            .locate(&hole.center)
            .ok_or_else(|| crate::Error::InvalidInput(format!("hole {j} lies outside the medium box")))?;
        let [i0, j0, k0] = grid.ijk(v);
        // C̄ range over the neighbouring voxels
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for di in i0.saturating_sub(1)..=(i0 + 1).min(grid.counts[0] - 1) {
            for dj in j0.saturating_sub(1)..=(j0 + 1).min(grid.counts[1] - 1) {
                for dk in k0.saturating_sub(1)..=(k0 + 1).min(grid.counts[2] - 1) {
                    let c = grid.cbar[(di * grid.counts[1] + dj) * grid.counts[2] + dk];
                    lo = lo.min(c);
                    hi = hi.max(c);
                }
            }
        }
        let local = caps[j] / a;
        let slack = 1e-6 * cmax.max(local);
        if local < lo - slack || local > hi + slack {
            return invalid(format!(
                "hole {j}: capacitance per cell volume {local:e} does not match the medium density [{lo:e}, {hi:e}]"
            ));
        }
    }
    Ok(a)
}

/// Runs both pipelines on the grid `t_k = k dt` of `[0, T]` and compares
/// the probe traces of `u^s` and `W`.
pub fn compare_cluster_vs_medium(
    cluster: &Cluster,
    grid: &VoxelGrid,
    source: &SourceConfig,
    probes: &[Vec3],
    t_end: f64,
    dt: f64,
    interp: Interp,
) -> Result<MediumComparison> {
    matching_cell_volume(cluster, grid)?;
    let medium = march_volume(grid, source, t_end, dt, interp)?;
    compare_cluster_vs_solution(cluster, grid, &medium, source, probes)
}

/// As [`compare_cluster_vs_medium`], reusing a marched medium; the cluster
/// is marched on the same time grid.
pub fn compare_cluster_vs_solution(
    cluster: &Cluster,
    grid: &VoxelGrid,
    medium: &VolumeSolution,
    source: &SourceConfig,
    probes: &[Vec3],
) -> Result<MediumComparison> {
    let a = matching_cell_volume(cluster, grid)?;
    for (k, p) in probes.iter().enumerate() {
        if grid.bx.contains(p) {
            return invalid(format!("probe {k} lies inside the medium"));
        }
    }
    let (steps, dt, interp) = (medium.steps(), medium.dt(), medium.interp());
    let cluster_trace: PointField = if cluster.is_empty() {
        Box::new(|_, _| Ok(0.0))
    } else {
        let sys = RetardedSystem::assemble(cluster, source)?;
        let sol = sys.march(&MarchOptions::new(steps as f64 * dt).with_dt(dt).with_interp(interp))?;
        let c0 = source.c0;
        Box::new(move |x, t| scattered_asymptotic(cluster, &sol, c0, x, t))
    };
    let mut out = MediumComparison {
        holes: cluster.len(),
        cell_volume: a,
        relative_l2: Vec::new(),
        max_diff: Vec::new(),
        cluster_norm: Vec::new(),
        medium_norm: Vec::new(),
    };
    for p in probes {
        let (mut du, mut nu, mut nw, mut mx) = (0.0, 0.0, 0.0, 0.0f64);
        for k in 0..=steps {
            let t = k as f64 * dt;
            let w = if k == 0 || k == steps { 0.5 * dt } else { dt };
            let us = cluster_trace(p, t)?;
            let wm = exterior_w(grid, medium, source.c0, p, t)?;
            du += w * (us - wm).powi(2);
            nu += w * us * us;
            nw += w * wm * wm;
            mx = mx.max((us - wm).abs());
        }
        let (du, nu) = (du.sqrt(), nu.sqrt());
        out.relative_l2.push(if nu > 0.0 { du / nu } else { du });
        out.max_diff.push(mx);
        out.cluster_norm.push(nu);
        out.medium_norm.push(nw.sqrt());
    }
    Ok(out)
}
