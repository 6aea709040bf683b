//! The retarded Foldy–Lax system
//!
//! ```text
//! α_i(t) + Σ_{j≠i} w_ij α_j(t - τ_ij) = f_i(t),   f_i(t) = -g_i λ(t - τ_i*)
//! ```
//!
//! with `w_ij = C_j / (4π|z_i - z_j|)`, `τ_ij = |z_i - z_j| / c0` and
//! `g_i = 1 / (4π|z_i - z*|)`. Every coupling is delayed, so the system is
//! marched causally on a uniform grid. When some delay is shorter than the
//! step, the current-step unknowns are found by Jacobi iteration.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{Cluster, SourceConfig};
use crate::error::{invalid, Error, Result};
use crate::geometry::Vec3;
use crate::signal::{CausalSignal, Interp, Lag, Trace};

/// Default absolute tolerance for the per-step equations.
pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 1000;

/// Systems with at least this many equations update them in parallel.
const PARALLEL_THRESHOLD: usize = 32;

#[derive(Clone, Debug)]
pub struct RetardedSystem {
    m: usize,
    c0: f64,
    centers: Vec<Vec3>,
    capacitances: Vec<f64>,
    delays: Vec<f64>,
    weights: Vec<f64>,
    source_delays: Vec<f64>,
    gains: Vec<f64>,
    signal: CausalSignal,
    margin: f64,
}

/// Step-size and iteration controls for [`RetardedSystem::march`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MarchOptions {
    pub t_end: f64,
    /// `None` selects [`RetardedSystem::default_dt`].
    pub dt: Option<f64>,
    pub interp: Interp,
    pub tol: f64,
    pub max_iter: usize,
    /// Run even when the solvability margin is at least 1.
    pub force: bool,
}

impl MarchOptions {
    pub fn new(t_end: f64) -> Self {
        Self {
            t_end,
            dt: None,
            interp: Interp::Cubic,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            force: false,
        }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = Some(dt);
        self
    }

    pub fn with_interp(mut self, interp: Interp) -> Self {
        self.interp = interp;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn forced(mut self, force: bool) -> Self {
        self.force = force;
        self
    }
}

/// Marched signals `α_i` on the grid `t_n = n dt`, `n = 0..=steps`.
#[derive(Clone, Debug)]
pub struct SystemSolution {
    traces: Vec<Trace>,
    dt: f64,
    iterations: Vec<u32>,
    max_residual: f64,
    margin: f64,
    interp: Interp,
    tol: f64,
    forced: bool,
    explicit: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolutionMeta {
    pub holes: usize,
    pub dt: f64,
    pub steps: usize,
    pub t_end: f64,
    pub interp: Interp,
    pub tol: f64,
    pub max_residual: f64,
    pub margin: f64,
    pub forced: bool,
    pub explicit: bool,
    pub total_iterations: u64,
    pub max_step_iterations: u32,
}

impl SystemSolution {
    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    pub fn alpha(&self, i: usize) -> &Trace {
        &self.traces[i]
    }

    pub fn traces(&self) -> &[Trace] {
        &self.traces
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of steps; the grid has `steps + 1` nodes.
    pub fn steps(&self) -> usize {
        self.iterations.len() - 1
    }

    pub fn end_time(&self) -> f64 {
        self.steps() as f64 * self.dt
    }

    /// Jacobi iterations per step (0 for explicit steps).
    pub fn iterations(&self) -> &[u32] {
        &self.iterations
    }

    pub fn max_residual(&self) -> f64 {
        self.max_residual
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    pub fn interp(&self) -> Interp {
        self.interp
    }

    pub fn is_explicit(&self) -> bool {
        self.explicit
    }

    pub fn meta(&self) -> SolutionMeta {
        SolutionMeta {
            holes: self.len(),
            dt: self.dt,
            steps: self.steps(),
            t_end: self.end_time(),
            interp: self.interp,
            tol: self.tol,
            max_residual: self.max_residual,
            margin: self.margin,
            forced: self.forced,
            explicit: self.explicit,
            total_iterations: self.iterations.iter().map(|&k| k as u64).sum(),
            max_step_iterations: self.iterations.iter().copied().max().unwrap_or(0),
        }
    }

    /// `time,alpha_0,...,alpha_{M-1}`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header = String::from("time");
        for i in 0..self.len() {
            header.push_str(&format!(",alpha_{i}"));
        }
        writeln!(w, "{header}")?;
        let mut line = String::new();
        for n in 0..=self.steps() {
            line.clear();
            line.push_str(&format!("{:e}", n as f64 * self.dt));
            for tr in &self.traces {
                line.push_str(&format!(",{:e}", tr.samples()[n]));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn meta_toml(&self) -> String {
        toml::to_string(&self.meta()).expect("solution metadata serializes")
    }
}

/// Worst-case ratio in the discrete stability estimate
/// `|α(t)| <= (1 - margin)^-1 sqrt(Σ_i ||f_i||²_{H¹})`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StabilityReport {
    /// `max_t |α(t)| / bound`; the estimate holds iff this is at most 1.
    pub worst_ratio: f64,
    pub worst_time: f64,
    pub forcing_h1: f64,
    pub bound: f64,
    pub passed: bool,
}

impl RetardedSystem {
    pub fn assemble(cluster: &Cluster, source: &SourceConfig) -> Result<Self> {
        let capacitances = cluster.capacitances()?;
        source.check_outside(cluster)?;
        let m = cluster.len();
        let c0 = source.c0;
        let centers = cluster.centers();
        let mut delays = vec![0.0; m * m];
        let mut weights = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                if i == j {
                    continue;
                }
                let r = (centers[i] - centers[j]).norm();
                if !(r > 0.0) {
                    return invalid(format!("holes {i} and {j} share a centre"));
                }
                delays[i * m + j] = r / c0;
                weights[i * m + j] = capacitances[j] / (4.0 * PI * r);
            }
        }
        let mut source_delays = Vec::with_capacity(m);
        let mut gains = Vec::with_capacity(m);
        for (i, z) in centers.iter().enumerate() {
            let r = (z - source.position).norm();
            if !(r > 0.0) {
                return invalid(format!("source coincides with the centre of hole {i}"));
            }
            source_delays.push(r / c0);
            gains.push(1.0 / (4.0 * PI * r));
        }
        let margin = if m == 0 { 0.0 } else { cluster.check_solvability_condition()? };
        Ok(Self {
            m,
            c0,
            centers,
            capacitances,
            delays,
            weights,
            source_delays,
            gains,
            signal: source.signal.clone(),
            margin,
        })
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn centers(&self) -> &[Vec3] {
        &self.centers
    }

    pub fn capacitances(&self) -> &[f64] {
        &self.capacitances
    }

    pub fn signal(&self) -> &CausalSignal {
        &self.signal
    }

    /// `τ_ij` (0 on the diagonal).
    pub fn delay(&self, i: usize, j: usize) -> f64 {
        self.delays[i * self.m + j]
    }

    /// `w_ij` (0 on the diagonal).
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.m + j]
    }

    pub fn source_delay(&self, i: usize) -> f64 {
        self.source_delays[i]
    }

    pub fn gain(&self, i: usize) -> f64 {
        self.gains[i]
    }

    /// Solvability margin recorded at assembly.
    pub fn margin(&self) -> f64 {
        self.margin
    }

    /// The same system driven by `signal`.
    pub fn with_signal(&self, signal: CausalSignal) -> Self {
        Self { signal, ..self.clone() }
    }

    /// `f_i(t) = -g_i λ(t - τ_i*)`.
    pub fn forcing(&self, i: usize, t: f64) -> f64 {
        -self.gains[i] * self.signal.evaluate(t - self.source_delays[i])
    }

    pub fn forcing_derivative(&self, i: usize, t: f64) -> f64 {
        -self.gains[i]
            * self
                .signal
                .derivative(t - self.source_delays[i], 1)
                .expect("first derivative is supported")
    }

    /// Smallest inter-hole delay (`+inf` below two holes).
    pub fn min_delay(&self) -> f64 {
        (0..self.m)
            .flat_map(|i| (0..self.m).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| self.delay(i, j))
            .fold(f64::INFINITY, f64::min)
    }

    /// `min(τ_min / 4, T / 1024)` when that needs at most 65536 steps,
    /// otherwise `T / 4096` (the march then iterates on short delays).
    pub fn default_dt(&self, t_end: f64) -> f64 {
        let dt = (self.min_delay() / 4.0).min(t_end / 1024.0);
        if t_end / dt <= 65536.0 {
            dt
        } else {
            t_end / 4096.0
        }
    }

    fn lags(&self, dt: f64, interp: Interp) -> Vec<Option<Lag>> {
        let m = self.m;
        (0..m * m)
            .map(|k| (k / m != k % m).then(|| Lag::new(self.delays[k] / dt, interp)))
            .collect()
    }

    pub fn march(&self, opts: &MarchOptions) -> Result<SystemSolution> {
        if !(opts.t_end > 0.0 && opts.t_end.is_finite()) {
            return invalid(format!("final time must be positive, got {}", opts.t_end));
        }
        if !(opts.tol > 0.0) {
            return invalid(format!("tolerance must be positive, got {}", opts.tol));
        }
        if self.margin >= 1.0 {
            if !opts.force {
                return Err(Error::ConditionRefused { margin: self.margin });
            }
            log::warn!("solvability margin {:.4} >= 1; marching anyway", self.margin);
        }
        let dt = opts.dt.unwrap_or_else(|| self.default_dt(opts.t_end));
        if !(dt > 0.0 && dt.is_finite()) {
            return invalid(format!("time step must be positive, got {dt}"));
        }
        let steps = grid_steps(opts.t_end, dt);
        let m = self.m;
        let lags = self.lags(dt, opts.interp);
        let explicit = lags.iter().flatten().all(Lag::is_explicit);
        let mut alpha = vec![vec![0.0; steps + 1]; m];
        let mut iterations = vec![0u32; steps + 1];
        let mut max_residual: f64 = 0.0;
        let mut base = vec![0.0; m];
        let mut next = vec![0.0; m];

        // sum over j of w_ij * lag_ij(α_j) restricted to explicit or implicit lags
        let coupling = |alpha: &[Vec<f64>], i: usize, n: usize, want_explicit: bool| -> f64 {
            let mut s = 0.0;
            for j in 0..m {
                if let Some(lag) = &lags[i * m + j] {
                    if lag.is_explicit() == want_explicit {
                        s += self.weights[i * m + j] * lag.eval(&alpha[j], n);
                    }
                }
            }
            s
        };
        let sweep = |out: &mut [f64], f: &(dyn Fn(usize) -> f64 + Sync)| {
            if m >= PARALLEL_THRESHOLD {
                out.par_iter_mut().enumerate().for_each(|(i, v)| *v = f(i));
            } else {
                out.iter_mut().enumerate().for_each(|(i, v)| *v = f(i));
            }
        };

        for n in 0..=steps {
            let t = n as f64 * dt;
            {
                let a = &alpha;
                sweep(&mut base, &|i| self.forcing(i, t) - coupling(a, i, n, true));
            }
            for i in 0..m {
                alpha[i][n] = base[i];
            }
            if explicit {
                continue;
            }
            let mut iters = 0u32;
            loop {
                {
                    let a = &alpha;
                    sweep(&mut next, &|i| base[i] - coupling(a, i, n, false));
                }
                let (worst, change) = (0..m)
                    .map(|i| (i, (next[i] - alpha[i][n]).abs()))
                    .fold((0, 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
                for i in 0..m {
                    alpha[i][n] = next[i];
                }
                iters += 1;
                if change <= opts.tol {
                    break;
                }
                if iters as usize >= opts.max_iter || !change.is_finite() {
                    return Err(Error::NonConvergence {
                        step: n,
                        equation: worst,
                        residual: change,
                        iterations: iters as usize,
                        margin: self.margin,
                    });
                }
            }
            iterations[n] = iters;
            let a = &alpha;
            let step_res = (0..m)
                .map(|i| (a[i][n] - base[i] + coupling(a, i, n, false)).abs())
                .fold(0.0, f64::max);
            max_residual = max_residual.max(step_res);
        }
        if let Some(i) = alpha.iter().position(|a| a.iter().any(|v| !v.is_finite())) {
            return Err(Error::Singular(format!(
                "signal {i} diverged (margin {:.4}); the march is unstable",
                self.margin
            )));
        }
        let traces = alpha
            .into_iter()
            .map(|a| Trace::new(0.0, dt, a))
            .collect::<Result<Vec<_>>>()?;
        Ok(SystemSolution {
            traces,
            dt,
            iterations,
            max_residual,
            margin: self.margin,
            interp: opts.interp,
            tol: opts.tol,
            forced: opts.force,
            explicit,
        })
    }

    /// `max_{i,n} |α_i(t_n) + Σ_j w_ij α_j(t_n - τ_ij) - f_i(t_n)|`, with the
    /// same causal lookup rule the march uses.
    pub fn residual(&self, sol: &SystemSolution) -> Result<f64> {
        let m = self.m;
        if sol.len() != m {
            return invalid(format!("solution has {} signals for {} equations", sol.len(), m));
        }
        let lags = self.lags(sol.dt, sol.interp);
        let per_eq = |i: usize| -> f64 {
            let mut worst: f64 = 0.0;
            for n in 0..=sol.steps() {
                let t = n as f64 * sol.dt;
                let mut r = sol.traces[i].samples()[n] - self.forcing(i, t);
                for j in 0..m {
                    if let Some(lag) = &lags[i * m + j] {
                        r += self.weights[i * m + j] * lag.eval(sol.traces[j].samples(), n);
                    }
                }
                worst = worst.max(r.abs());
            }
            worst
        };
        Ok((0..m).into_par_iter().map(per_eq).reduce(|| 0.0, f64::max))
    }

    /// Checks `sqrt(Σ_i α_i(t)²) <= (1 - margin)^-1 sqrt(Σ_i ||f_i||²_{H¹})`
    /// at every grid time, with the H¹ norms over `[0, T]` by the trapezoid
    /// rule and analytic `f_i'`.
    pub fn stability_check(&self, sol: &SystemSolution) -> StabilityReport {
        let steps = sol.steps();
        let dt = sol.dt;
        let mut h1 = 0.0;
        for i in 0..self.m {
            for n in 0..=steps {
                let t = n as f64 * dt;
                let f = self.forcing(i, t);
                let fp = self.forcing_derivative(i, t);
                let w = if n == 0 || n == steps { 0.5 } else { 1.0 };
                h1 += w * dt * (f * f + fp * fp);
            }
        }
        let forcing_h1 = h1.sqrt();
        let bound = if self.margin < 1.0 {
            forcing_h1 / (1.0 - self.margin)
        } else {
            f64::INFINITY
        };
        let mut worst_ratio: f64 = 0.0;
        let mut worst_time = 0.0;
        for n in 0..=steps {
            let norm = sol.traces.iter().map(|a| a.samples()[n].powi(2)).sum::<f64>().sqrt();
            let ratio = if norm == 0.0 { 0.0 } else { norm / bound };
            if ratio > worst_ratio {
                worst_ratio = ratio;
                worst_time = n as f64 * dt;
            }
        }
        StabilityReport {
            worst_ratio,
            worst_time,
            forcing_h1,
            bound,
            passed: self.margin < 1.0 && worst_ratio <= 1.0,
        }
    }
}

/// Number of steps of size `dt` needed to reach `t_end`.
pub(crate) fn grid_steps(t_end: f64, dt: f64) -> usize {
    let x = t_end / dt;
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.max(1.0) {
        r.max(1.0) as usize
    } else {
        x.ceil() as usize
    }
}
