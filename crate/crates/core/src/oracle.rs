//! Exact single-sphere reference for spatially uniform boundary data.
//!
//! For a density `φ(t)` spread uniformly over a sphere of radius `r`, the
//! retarded single layer collapses to one-dimensional integrals:
//!
//! ```text
//! on the sphere:   (c0/2) ∫_{t-2r/c0}^{t} φ
//! at distance R:   (r c0 / 2R) ∫_{t-(R+r)/c0}^{t-(R-r)/c0} φ
//! ```
//!
//! Setting the first equal to `g(t) = -λ(t - |z - z*|/c0) / (4π|z - z*|)` and
//! differentiating gives `φ(t) = φ(t - 2r/c0) + (2/c0) g'(t)`, which is exact
//! on grids commensurate with `2r/c0`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::cluster::{Cluster, Hole, SourceConfig};
use crate::error::{invalid, Error, Result};
use crate::fields::{scattered_asymptotic, single_hole_closed_form};
use crate::geometry::Vec3;
use crate::rates::{loglog_slope, Rate};
use crate::retarded::{grid_steps, MarchOptions, RetardedSystem};
use crate::signal::{Trace, NODE_SNAP};

#[derive(Clone, Debug)]
pub struct OracleProblem {
    radius: f64,
    center: Vec3,
    source: SourceConfig,
    dt: f64,
    t_end: f64,
    /// `2r / (c0 dt)`.
    divisions: usize,
}

impl OracleProblem {
    /// Requires `2r / c0` to be an integer multiple of `dt`.
    pub fn new(radius: f64, center: Vec3, source: SourceConfig, dt: f64, t_end: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return invalid(format!("radius must be positive, got {radius}"));
        }
        if !(dt > 0.0) || !(t_end > 0.0) {
            return invalid(format!("need dt > 0 and T > 0 (dt = {dt}, T = {t_end})"));
        }
        if (center - source.position).norm() <= radius {
            return invalid("source lies inside or on the sphere");
        }
        let k = 2.0 * radius / (source.c0 * dt);
        let kr = k.round();
        if kr < 1.0 || (k - kr).abs() > NODE_SNAP * kr {
            return invalid(format!(
                "dt = {dt:e} does not divide the sphere delay 2r/c0 = {:e} ({k} steps)",
                2.0 * radius / source.c0
            ));
        }
        Ok(Self {
            radius,
            center,
            source,
            dt,
            t_end,
            divisions: kr as usize,
        })
    }

    /// `dt = 2r / (c0 k)`.
    pub fn with_divisions(radius: f64, center: Vec3, source: SourceConfig, k: usize, t_end: f64) -> Result<Self> {
        if k == 0 {
            return invalid("need at least one step per sphere delay");
        }
        let dt = 2.0 * radius / (source.c0 * k as f64);
        Self::new(radius, center, source, dt, t_end)
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn center(&self) -> Vec3 {
        self.center
    }

    pub fn source(&self) -> &SourceConfig {
        &self.source
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn divisions(&self) -> usize {
        self.divisions
    }

    fn source_distance(&self) -> f64 {
        (self.center - self.source.position).norm()
    }

    /// `g(t) = -λ(t - |z - z*|/c0) / (4π|z - z*|)`.
    pub fn uniform_rhs(&self, t: f64) -> f64 {
        let d = self.source_distance();
        -self.source.signal.evaluate(t - d / self.source.c0) / (4.0 * PI * d)
    }

    pub fn uniform_rhs_derivative(&self, t: f64) -> f64 {
        let d = self.source_distance();
        -self
            .source
            .signal
            .derivative(t - d / self.source.c0, 1)
            .expect("first derivative is supported")
            / (4.0 * PI * d)
    }

    /// Sphere with its capacitance `4πr`, as a one-hole cluster.
    pub fn cluster(&self) -> Result<Cluster> {
        Cluster::new(vec![Hole {
            capacitance: Some(4.0 * PI * self.radius),
            ..Hole::sphere(self.center, self.radius)
        }])
    }
}

/// Marches `φ_n = φ_{n-K} + (2/c0) g'(t_n)` from rest.
pub fn solve_uniform_density(p: &OracleProblem) -> Result<Trace> {
    let steps = grid_steps(p.t_end, p.dt);
    let k = p.divisions;
    let scale = 2.0 / p.source.c0;
    let mut phi = vec![0.0; steps + 1];
    for n in 0..=steps {
        let past = if n >= k { phi[n - k] } else { 0.0 };
        phi[n] = past + scale * p.uniform_rhs_derivative(n as f64 * p.dt);
    }
    Trace::new(0.0, p.dt, phi)
}

/// `∫_a^b` of the piecewise-linear interpolant of `tr`, which vanishes
/// before `t0`.
#[allow(clippy::needless_range_loop)]
pub fn integrate_linear(tr: &Trace, a: f64, b: f64) -> Result<f64> {
    if b < a {
        return Ok(-integrate_linear(tr, b, a)?);
    }
    let end = tr.end_time();
    if b > end + NODE_SNAP * tr.dt() {
        return Err(Error::OutOfWindow { t: b, end });
    }
    let s = tr.samples();
    let last = s.len() - 1;
    let xa = ((a - tr.t0()) / tr.dt()).max(0.0);
    let xb = ((b - tr.t0()) / tr.dt()).min(last as f64);
    if xb <= xa || last == 0 {
        return Ok(0.0);
    }
    let value = |x: f64| {
        let m = (x.floor() as usize).min(last - 1);
        let th = x - m as f64;
        (1.0 - th) * s[m] + th * s[m + 1]
    };
    let mut total = 0.0;
    let (mut x_prev, mut v_prev) = (xa, value(xa));
    for node in (xa.floor() as usize + 1)..=(xb.ceil() as usize).min(last) {
        let x = node as f64;
        if x >= xb {
            break;
        }
        total += 0.5 * (v_prev + s[node]) * (x - x_prev);
        x_prev = x;
        v_prev = s[node];
    }
    total += 0.5 * (v_prev + value(xb)) * (xb - x_prev);
    Ok(total * tr.dt())
}

/// `(c0/2) ∫_{t-2r/c0}^{t} φ - g(t)` at every grid time, max magnitude.
pub fn integral_residual(p: &OracleProblem, phi: &Trace) -> Result<f64> {
    let delay = 2.0 * p.radius / p.source.c0;
    let mut worst: f64 = 0.0;
    for n in 0..phi.len() {
        let t = phi.time(n);
        let lhs = 0.5 * p.source.c0 * integrate_linear(phi, t - delay, t)?;
        worst = worst.max((lhs - p.uniform_rhs(t)).abs());
    }
    Ok(worst)
}

/// Exact exterior single layer of the uniform density, by trapezoid on the
/// `φ` grid.
pub fn exterior_field(p: &OracleProblem, phi: &Trace, x: &Vec3, t: f64) -> Result<f64> {
    let r = p.radius;
    let big_r = (x - p.center).norm();
    if big_r <= r {
        return invalid(format!("point at distance {big_r:e} is not outside the sphere of radius {r:e}"));
    }
    let c0 = p.source.c0;
    let integral = integrate_linear(phi, t - (big_r + r) / c0, t - (big_r - r) / c0)?;
    Ok(r * c0 / (2.0 * big_r) * integral)
}

/// Oracle-versus-asymptotic differences at one radius.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct OracleComparison {
    pub radius: f64,
    pub dt: f64,
    /// Max over probes and times of `|oracle - closed form|`.
    pub max_diff_closed_form: f64,
    /// Max over probes of the time-L² norm of `oracle - closed form`.
    pub l2_diff_closed_form: f64,
    pub max_diff_asymptotic: f64,
    pub l2_diff_asymptotic: f64,
    pub max_oracle: f64,
}

/// Compares the oracle field with the closed form and with the marched
/// one-hole asymptotic field at `probes`, over the grid times of `[0, T]`.
pub fn compare_with_asymptotic(p: &OracleProblem, probes: &[Vec3]) -> Result<OracleComparison> {
    let phi = solve_uniform_density(p)?;
    let cluster = p.cluster()?;
    let sys = RetardedSystem::assemble(&cluster, &p.source)?;
    let sol = sys.march(&MarchOptions::new(p.t_end).with_dt(p.dt))?;
    let hole = &cluster.holes()[0];
    let mut out = OracleComparison {
        radius: p.radius,
        dt: p.dt,
        max_diff_closed_form: 0.0,
        l2_diff_closed_form: 0.0,
        max_diff_asymptotic: 0.0,
        l2_diff_asymptotic: 0.0,
        max_oracle: 0.0,
    };
    for x in probes {
        let (mut l2c, mut l2a) = (0.0, 0.0);
        for n in 0..phi.len() {
            let t = phi.time(n);
            let w = if n == 0 || n + 1 == phi.len() { 0.5 } else { 1.0 } * p.dt;
            let oracle = exterior_field(p, &phi, x, t)?;
            let closed = single_hole_closed_form(hole, &p.source, x, t)?;
            let asym = scattered_asymptotic(&cluster, &sol, p.source.c0, x, t)?;
            out.max_oracle = out.max_oracle.max(oracle.abs());
            out.max_diff_closed_form = out.max_diff_closed_form.max((oracle - closed).abs());
            out.max_diff_asymptotic = out.max_diff_asymptotic.max((oracle - asym).abs());
            l2c += w * (oracle - closed).powi(2);
            l2a += w * (oracle - asym).powi(2);
        }
        out.l2_diff_closed_form = out.l2_diff_closed_form.max(l2c.sqrt());
        out.l2_diff_asymptotic = out.l2_diff_asymptotic.max(l2a.sqrt());
    }
    Ok(out)
}

/// Radius sweep with the fitted log-log slope of the max difference.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OracleSweep {
    pub comparisons: Vec<OracleComparison>,
    pub slope_closed_form: Rate,
    pub slope_asymptotic: Rate,
    /// Differences shrink with every radius reduction.
    pub monotone: bool,
}

impl OracleSweep {
    pub fn passes(&self, threshold: f64) -> bool {
        self.monotone && self.slope_closed_form.at_least(threshold)
    }
}

/// Runs [`compare_with_asymptotic`] for each radius with `dt = 2r/(c0 k)`.
pub fn radius_sweep(
    radii: &[f64],
    center: Vec3,
    source: &SourceConfig,
    divisions: usize,
    t_end: f64,
    probes: &[Vec3],
) -> Result<OracleSweep> {
    let comparisons = radii
        .iter()
        .map(|&r| {
            let p = OracleProblem::with_divisions(r, center, source.clone(), divisions, t_end)?;
            compare_with_asymptotic(&p, probes)
        })
        .collect::<Result<Vec<_>>>()?;
    let max_c: Vec<f64> = comparisons.iter().map(|c| c.max_diff_closed_form).collect();
    let max_a: Vec<f64> = comparisons.iter().map(|c| c.max_diff_asymptotic).collect();
    let monotone = radii
        .windows(2)
        .zip(max_c.windows(2))
        .all(|(r, d)| (r[1] < r[0]) == (d[1] < d[0]));
    Ok(OracleSweep {
        slope_closed_form: loglog_slope(radii, &max_c),
        slope_asymptotic: loglog_slope(radii, &max_a),
        comparisons,
        monotone,
    })
}
