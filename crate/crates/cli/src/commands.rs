//! The five batch commands. Each writes its artifacts under the output
//! directory and finishes with `manifest.toml`.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::Serialize;

use holewave::capacitance::assign_capacitances;
use holewave::cluster::{periodic_layout, Cluster, Regime, SourceConfig};
use holewave::design::{cbar_from_p, layout_from_cbar, p_from_rho, rho_from_p, solve_p, DensityField};
use holewave::fields::{self, default_exclusion, grid_eval, write_traces_csv, FieldGrid, FieldKind, ProbeSet};
use holewave::io::{atomic_write, atomic_write_with};
use holewave::medium::{compare_cluster_vs_solution, exterior_w, march_volume, MediumComparison, VoxelGrid};
use holewave::oracle::radius_sweep;
use holewave::rates::{halving_orders, loglog_slope, Rate};
use holewave::retarded::{MarchOptions, RetardedSystem, StabilityReport, SystemSolution};
use holewave::signal::{Interp, Trace};
use holewave::Vec3;

use crate::config::{ClusterSpec, ConvergenceKind, DesignInput, RunConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Simulate,
    OracleValidate,
    Medium,
    Design,
    Convergence,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::OracleValidate => "oracle-validate",
            Command::Medium => "medium",
            Command::Design => "design",
            Command::Convergence => "convergence",
        }
    }
}

/// What a run produced. `passed` is false when an acceptance threshold of
/// the command failed; hard errors are returned as `Err` instead.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub passed: bool,
    pub summary: String,
    pub outputs: Vec<PathBuf>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    force: bool,
    passed: bool,
    outputs: Vec<String>,
    config: &'a RunConfig,
}

/// Collects written files relative to the output root.
struct Artifacts {
    root: PathBuf,
    files: Vec<PathBuf>,
}

impl Artifacts {
    fn new(root: &Path) -> Self {
        Self {
            root: root.to_path_buf(),
            files: Vec::new(),
        }
    }

    fn write(&mut self, rel: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
        let rel = rel.as_ref();
        atomic_write(&self.root.join(rel), bytes).with_context(|| format!("writing {}", rel.display()))?;
        self.files.push(rel.to_path_buf());
        Ok(())
    }

    fn write_with(&mut self, rel: impl AsRef<Path>, f: impl FnOnce(&mut Vec<u8>) -> holewave::Result<()>) -> Result<()> {
        let rel = rel.as_ref();
        atomic_write_with(&self.root.join(rel), f).with_context(|| format!("writing {}", rel.display()))?;
        self.files.push(rel.to_path_buf());
        Ok(())
    }

    fn toml<T: Serialize>(&mut self, rel: impl AsRef<Path>, value: &T) -> Result<()> {
        let text = toml::to_string(value)?;
        self.write(rel, text.as_bytes())
    }

    fn finish(mut self, command: Command, cfg: &RunConfig, force: bool, passed: bool, summary: String) -> Result<Outcome> {
        let outputs = self.files.iter().map(|p| p.display().to_string()).collect();
        let manifest = Manifest {
            command: command.name(),
            version: env!("CARGO_PKG_VERSION"),
            force,
            passed,
            outputs,
            config: cfg,
        };
        let text = toml::to_string(&manifest)?;
        self.write("manifest.toml", text.as_bytes())?;
        Ok(Outcome {
            passed,
            summary,
            outputs: self.files,
        })
    }
}

/// Resolves defaults and runs `command`, writing under `out`.
pub fn run(command: Command, mut cfg: RunConfig, out: &Path, force: bool) -> Result<Outcome> {
    cfg.resolve()?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    match command {
        Command::Simulate => simulate(cfg, out, force),
        Command::OracleValidate => oracle_validate(cfg, out, force),
        Command::Medium => medium(cfg, out, force),
        Command::Design => design(cfg, out, force),
        Command::Convergence => convergence(cfg, out, force),
    }
}

#[derive(Serialize)]
struct Conditions {
    holes: usize,
    max_diameter: f64,
    min_distance: f64,
    solvability_margin: f64,
    expansion_margin: f64,
    exclusion: f64,
    regime: Option<Regime>,
}

#[derive(Serialize)]
struct SolutionReport {
    dt: f64,
    steps: usize,
    t_end: f64,
    interp: Interp,
    tol: f64,
    max_iter: usize,
    explicit: bool,
    max_step_residual: f64,
    residual: f64,
    total_iterations: u64,
    max_step_iterations: u32,
    stability: StabilityReport,
}

/// Capacitances, assembly and march for one cluster.
struct Simulated {
    cluster: Cluster,
    sol: SystemSolution,
}

fn march_cluster(cfg: &RunConfig, cluster: Cluster, source: &SourceConfig, force: bool, art: &mut Artifacts, dir: &Path) -> Result<Simulated> {
    let time = cfg.time()?;
    let cluster = if cluster.is_empty() {
        cluster
    } else {
        assign_capacitances(&cluster)?
    };
    source.check_outside(&cluster)?;
    let caps = cluster.capacitances()?;
    art.write_with(dir.join("capacitances.csv"), |w| {
        writeln!(w, "hole,x,y,z,diameter,capacitance")?;
        for (j, (h, c)) in cluster.holes().iter().zip(&caps).enumerate() {
            writeln!(w, "{j},{:e},{:e},{:e},{:e},{:e}", h.center.x, h.center.y, h.center.z, h.diameter(), c)?;
        }
        Ok(())
    })?;
    let exclusion = cfg
        .probes
        .as_ref()
        .and_then(|p| p.exclusion)
        .unwrap_or_else(|| default_exclusion(&cluster));
    let conditions = Conditions {
        holes: cluster.len(),
        max_diameter: cluster.max_diameter(),
        min_distance: if cluster.len() > 1 { cluster.min_distance() } else { f64::INFINITY },
        solvability_margin: if cluster.is_empty() { 0.0 } else { cluster.check_solvability_condition()? },
        expansion_margin: cluster.check_expansion_condition(),
        exclusion,
        regime: cluster.regime_exponents().ok(),
    };
    art.toml(dir.join("conditions.toml"), &conditions)?;

    let sys = RetardedSystem::assemble(&cluster, source)?;
    let mut opts = MarchOptions::new(time.t_end)
        .with_interp(time.interp.unwrap_or_default())
        .forced(force);
    opts.tol = time.tol.unwrap_or(opts.tol);
    opts.max_iter = time.max_iter.unwrap_or(opts.max_iter);
    opts.dt = Some(time.dt.unwrap_or_else(|| sys.default_dt(time.t_end)));
    let sol = sys.march(&opts)?;
    let meta = sol.meta();
    let report = SolutionReport {
        dt: sol.dt(),
        steps: sol.steps(),
        t_end: sol.end_time(),
        interp: sol.interp(),
        tol: opts.tol,
        max_iter: opts.max_iter,
        explicit: sol.is_explicit(),
        max_step_residual: sol.max_residual(),
        residual: sys.residual(&sol)?,
        total_iterations: meta.total_iterations,
        max_step_iterations: meta.max_step_iterations,
        stability: sys.stability_check(&sol),
    };
    art.toml(dir.join("solution.toml"), &report)?;
    art.write_with(dir.join("alpha.csv"), |w| sol.write_csv(w))?;
    Ok(Simulated { cluster, sol })
}

fn probe_outputs(cfg: &RunConfig, s: &Simulated, source: &SourceConfig, art: &mut Artifacts, dir: &Path) -> Result<()> {
    let exclusion = cfg
        .probes
        .as_ref()
        .and_then(|p| p.exclusion)
        .unwrap_or_else(|| default_exclusion(&s.cluster));
    if let Some(spec) = &cfg.probes {
        let points: Vec<Vec3> = spec.points.iter().map(|p| Vec3::from(*p)).collect();
        let probes = ProbeSet::new(points, exclusion, &s.cluster, source)?;
        for kind in spec.fields.clone().unwrap_or_default() {
            let eval = |x: &Vec3, t: f64| fields::field(kind, &s.cluster, &s.sol, source, x, t);
            let traces = probes.traces(s.sol.steps() + 1, s.sol.dt(), &eval)?;
            let name = kind_name(kind);
            art.write_with(dir.join(format!("probes_{name}.csv")), |w| write_traces_csv(w, "probe", &traces))?;
        }
    }
    if let Some(g) = &cfg.grid {
        let grid = FieldGrid::new(g.center, g.spacing, g.counts, g.times.clone())?;
        let snaps = grid_eval(&s.cluster, &s.sol, source, &grid, g.field.unwrap_or(FieldKind::Scattered), exclusion);
        for k in 0..snaps.times.len() {
            art.write_with(dir.join(format!("grid_{k:03}.csv")), |w| snaps.write_csv(k, w))?;
        }
        #[derive(Serialize)]
        struct GridReport {
            field: FieldKind,
            times: Vec<f64>,
            points: usize,
            excluded: usize,
            failed: usize,
        }
        art.toml(
            dir.join("grid.toml"),
            &GridReport {
                field: snaps.which,
                times: snaps.times.clone(),
                points: snaps.points.len(),
                excluded: snaps.excluded,
                failed: snaps.failed,
            },
        )?;
    }
    Ok(())
}

fn kind_name(kind: FieldKind) -> &'static str {
    match kind {
        FieldKind::Incident => "incident",
        FieldKind::Scattered => "scattered",
        FieldKind::Total => "total",
    }
}

fn simulate(mut cfg: RunConfig, out: &Path, force: bool) -> Result<Outcome> {
    let source = cfg.source()?;
    let spec = cfg.cluster_spec()?.clone();
    let sweep = spec.sweep();
    let mut art = Artifacts::new(out);
    let mut dts = Vec::new();
    let mut summary = String::new();
    for (k, radius) in sweep.iter().enumerate() {
        let dir = if sweep.len() > 1 {
            PathBuf::from(format!("radius_{k:02}"))
        } else {
            PathBuf::new()
        };
        let s = march_cluster(&cfg, spec.build(*radius)?, &source, force, &mut art, &dir)?;
        probe_outputs(&cfg, &s, &source, &mut art, &dir)?;
        dts.push(s.sol.dt());
        let _ = writeln!(
            summary,
            "{}holes={} dt={:e} steps={} margin={:.4e} max_residual={:.3e}",
            radius.map_or(String::new(), |r| format!("radius={r:e} ")),
            s.cluster.len(),
            s.sol.dt(),
            s.sol.steps(),
            s.sol.margin(),
            s.sol.max_residual()
        );
    }
    if let Some(t) = &mut cfg.time {
        if t.dt.is_none() && dts.windows(2).all(|w| w[0] == w[1]) {
            t.dt = dts.first().copied();
        }
    }
    art.finish(Command::Simulate, &cfg, force, true, summary)
}

fn oracle_validate(cfg: RunConfig, out: &Path, force: bool) -> Result<Outcome> {
    let source = cfg.source()?;
    let o = cfg.oracle.clone().context("oracle-validate needs an [oracle] section")?;
    let t_end = cfg.time()?.t_end;
    let radii = o.radii.clone().unwrap_or_default();
    let probes: Vec<Vec3> = o.probes.clone().unwrap_or_default().into_iter().map(Vec3::from).collect();
    let center = Vec3::from(o.center.unwrap_or_default());
    let sweep = radius_sweep(&radii, center, &source, o.divisions.unwrap_or_default(), t_end, &probes)?;
    let threshold = o.threshold.unwrap_or_default();
    let passed = sweep.passes(threshold);
    let mut art = Artifacts::new(out);
    art.write_with("oracle.csv", |w| {
        writeln!(w, "radius,dt,max_diff_closed_form,l2_diff_closed_form,max_diff_asymptotic,l2_diff_asymptotic,max_oracle")?;
        for c in &sweep.comparisons {
            writeln!(
                w,
                "{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
                c.radius, c.dt, c.max_diff_closed_form, c.l2_diff_closed_form, c.max_diff_asymptotic, c.l2_diff_asymptotic, c.max_oracle
            )?;
        }
        Ok(())
    })?;
    #[derive(Serialize)]
    struct Verdict<'a> {
        threshold: f64,
        passed: bool,
        monotone: bool,
        slope_closed_form: &'a Rate,
        slope_asymptotic: &'a Rate,
    }
    art.toml(
        "oracle.toml",
        &Verdict {
            threshold,
            passed,
            monotone: sweep.monotone,
            slope_closed_form: &sweep.slope_closed_form,
            slope_asymptotic: &sweep.slope_asymptotic,
        },
    )?;
    let summary = format!(
        "slope (closed form) {} slope (asymptotic) {} threshold {threshold} monotone {}: {}\n",
        sweep.slope_closed_form,
        sweep.slope_asymptotic,
        sweep.monotone,
        if passed { "PASS" } else { "FAIL" }
    );
    art.finish(Command::OracleValidate, &cfg, force, passed, summary)
}

/// Voxel grid, its time step and the probe points of a medium run.
fn medium_setup(cfg: &RunConfig, counts: Option<[usize; 3]>) -> Result<(VoxelGrid, f64, Vec<Vec3>)> {
    let m = cfg.medium.as_ref().context("config needs a [medium] section")?;
    let source = cfg.source()?;
    let grid = VoxelGrid::new(m.bx()?, counts.unwrap_or(m.counts), &*m.cbar_fn()?)?;
    let dt = match (counts, m.dt) {
        (None, Some(dt)) => dt,
        _ => grid.spacing() / (2.0 * source.c0),
    };
    let probes = cfg
        .probes
        .as_ref()
        .map(|p| p.points.iter().map(|x| Vec3::from(*x)).collect())
        .unwrap_or_default();
    Ok((grid, dt, probes))
}

fn w_traces(grid: &VoxelGrid, sol: &holewave::medium::VolumeSolution, c0: f64, probes: &[Vec3], dt: f64, n: usize) -> Result<Vec<Trace>> {
    probes
        .iter()
        .map(|p| {
            let v = (0..n)
                .map(|k| exterior_w(grid, sol, c0, p, k as f64 * dt))
                .collect::<holewave::Result<Vec<_>>>()?;
            Ok(Trace::new(0.0, dt, v)?)
        })
        .collect()
}

fn medium(mut cfg: RunConfig, out: &Path, force: bool) -> Result<Outcome> {
    let source = cfg.source()?;
    let time = cfg.time()?.clone();
    let interp = time.interp.unwrap_or_default();
    let (grid, dt, probes) = medium_setup(&cfg, None)?;
    if let Some(m) = &mut cfg.medium {
        m.dt = Some(dt);
    }
    let sol = march_volume(&grid, &source, time.t_end, dt, interp)?;
    let mut art = Artifacts::new(out);
    let traces = w_traces(&grid, &sol, source.c0, &probes, dt, sol.steps() + 1)?;
    art.write_with("probes_w.csv", |w| write_traces_csv(w, "probe", &traces))?;
    let centre = grid
        .locate(&grid.bx().center())
        .context("box centre has no voxel")?;
    art.write_with("voxel_center.csv", |w| sol.voxel(centre).write_csv(w))?;

    let mut comparisons: Vec<(usize, MediumComparison)> = Vec::new();
    let compare = cfg.medium.as_ref().and_then(|m| m.compare.clone()).unwrap_or_default();
    for &n in &compare {
        ensure!(n > 0, "medium.compare entries must be positive");
        let a = grid.bx().volume() / (n * n * n) as f64;
        let cbar = cfg.medium.as_ref().context("medium section")?.cbar_fn()?;
        let cluster = periodic_layout(grid.bx(), a, &*cbar)?;
        comparisons.push((n, compare_cluster_vs_solution(&cluster, &grid, &sol, &source, &probes)?));
    }
    if !comparisons.is_empty() {
        art.write_with("comparison.csv", |w| {
            writeln!(w, "cells,holes,cell_volume,probe,relative_l2,max_diff,cluster_norm,medium_norm")?;
            for (n, c) in &comparisons {
                for k in 0..c.relative_l2.len() {
                    writeln!(
                        w,
                        "{n},{},{:e},{k},{:e},{:e},{:e},{:e}",
                        c.holes, c.cell_volume, c.relative_l2[k], c.max_diff[k], c.cluster_norm[k], c.medium_norm[k]
                    )?;
                }
            }
            Ok(())
        })?;
    }
    let worst: Vec<f64> = comparisons.iter().map(|(_, c)| c.worst_relative_l2()).collect();
    let monotone = worst.windows(2).all(|w| w[1] < w[0]);
    #[derive(Serialize)]
    struct MediumReport {
        voxels: usize,
        spacing: f64,
        dt: f64,
        steps: usize,
        max_abs_v: f64,
        worst_relative_l2: Vec<f64>,
        decreasing: bool,
    }
    art.toml(
        "medium.toml",
        &MediumReport {
            voxels: grid.len(),
            spacing: grid.spacing(),
            dt,
            steps: sol.steps(),
            max_abs_v: sol.traces().iter().map(Trace::max_abs).fold(0.0, f64::max),
            worst_relative_l2: worst.clone(),
            decreasing: monotone,
        },
    )?;
    let summary = format!(
        "voxels={} dt={dt:e} steps={} worst relative L2 by cluster {:?}{}\n",
        grid.len(),
        sol.steps(),
        worst,
        if comparisons.len() > 1 {
            if monotone { ": decreasing, PASS" } else { ": not decreasing, FAIL" }
        } else {
            ""
        }
    );
    art.finish(Command::Medium, &cfg, force, monotone, summary)
}

fn field_files(art: &mut Artifacts, name: &str, field: &DensityField) -> Result<()> {
    art.write_with(format!("{name}.csv"), |w| field.write_nodes(w))?;
    art.toml(format!("{name}.toml"), &field.manifest(name))
}

fn interior_max_diff(a: &DensityField, b: &DensityField) -> f64 {
    (0..a.len())
        .filter(|&m| !a.is_boundary(m))
        .map(|m| (a.values()[m] - b.values()[m]).abs())
        .fold(0.0, f64::max)
}

fn design(cfg: RunConfig, out: &Path, force: bool) -> Result<Outcome> {
    let d = cfg.design.clone().context("design needs a [design] section")?;
    let tolerant = d.tolerant.unwrap_or(false);
    let rtol = d.rtol.unwrap_or(crate::config::DEFAULT_DESIGN_RTOL);
    let input = d.input_field()?;
    let mut art = Artifacts::new(out);
    #[derive(Serialize)]
    struct DesignReport {
        input: DesignInput,
        nodes: usize,
        h: f64,
        cell_volume: f64,
        holes: usize,
        cg_iterations: usize,
        cg_relative_residual: f64,
        max_boundary_adjustment: f64,
        roundtrip_max_error: f64,
        roundtrip_bound: f64,
        passed: bool,
    }
    let (cbar, p, solve, adjust, roundtrip) = match d.input {
        DesignInput::Cbar => {
            let solve = solve_p(&input, rtol)?;
            let recovered = cbar_from_p(&solve.p, tolerant)?;
            let err = interior_max_diff(&input, &recovered);
            field_files(&mut art, "cbar_recovered", &recovered)?;
            (input, solve.p.clone(), solve, 0.0, err)
        }
        DesignInput::Rho => {
            let pr = p_from_rho(&input)?;
            let cbar = cbar_from_p(&pr.p, tolerant)?;
            let solve = solve_p(&cbar, rtol)?;
            let err = interior_max_diff(&pr.p, &solve.p);
            (cbar, pr.p, solve, pr.max_boundary_adjustment, err)
        }
    };
    let rho = rho_from_p(&p)?;
    field_files(&mut art, "cbar", &cbar)?;
    field_files(&mut art, "p", &p)?;
    field_files(&mut art, "rho", &rho)?;
    let cluster = layout_from_cbar(&cbar, d.cell_volume)?;
    let emitted = RunConfig {
        cluster: Some(ClusterSpec::from_spheres(&cluster)?),
        ..RunConfig::default()
    };
    art.write("cluster.toml", emitted.to_toml()?.as_bytes())?;
    let cmax = cbar.values().iter().copied().fold(0.0, f64::max);
    // 7-point truncation scale; the discrete chain should sit far below it
    let bound = cmax.max(1.0) * d.h * d.h;
    let passed = roundtrip <= bound;
    let report = DesignReport {
        input: d.input,
        nodes: cbar.len(),
        h: d.h,
        cell_volume: d.cell_volume,
        holes: cluster.len(),
        cg_iterations: solve.iterations,
        cg_relative_residual: solve.relative_residual,
        max_boundary_adjustment: adjust,
        roundtrip_max_error: roundtrip,
        roundtrip_bound: bound,
        passed,
    };
    art.toml("design.toml", &report)?;
    let summary = format!(
        "nodes={} holes={} cg_iterations={} roundtrip error {:.3e} (bound {:.3e}): {}\n",
        report.nodes,
        report.holes,
        report.cg_iterations,
        roundtrip,
        bound,
        if passed { "PASS" } else { "FAIL" }
    );
    art.finish(Command::Design, &cfg, force, passed, summary)
}

#[derive(Serialize)]
struct RateReport {
    kind: ConvergenceKind,
    parameter: String,
    values: Vec<f64>,
    changes: Vec<f64>,
    orders: Vec<f64>,
    slope: Rate,
    expected_order: Option<f64>,
}

/// Largest difference between successive refinements, sampled on the
/// coarsest grid. `traces[level][probe]`; level `k` has `2^k` times as
/// many steps.
fn successive_changes(traces: &[Vec<Trace>]) -> Vec<f64> {
    let n = traces
        .iter()
        .enumerate()
        .map(|(k, level)| ((level[0].len() - 1) >> k) + 1)
        .min()
        .unwrap_or(0);
    traces
        .windows(2)
        .enumerate()
        .map(|(k, w)| {
            let stride_c = 1usize << k;
            w[0].iter()
                .zip(&w[1])
                .map(|(c, f)| {
                    (0..n)
                        .map(|i| (c.samples()[i * stride_c] - f.samples()[i * 2 * stride_c]).abs())
                        .fold(0.0, f64::max)
                })
                .fold(0.0, f64::max)
        })
        .collect()
}

fn convergence(cfg: RunConfig, out: &Path, force: bool) -> Result<Outcome> {
    let conv = cfg.convergence.clone().context("convergence needs a [convergence] section")?;
    let levels = conv.levels.unwrap_or(2);
    let mut art = Artifacts::new(out);
    let report = match conv.kind {
        ConvergenceKind::Radius => {
            let source = cfg.source()?;
            let o = cfg.oracle.clone().context("radius convergence needs an [oracle] section")?;
            let radii = o.radii.clone().unwrap_or_default();
            let probes: Vec<Vec3> = o.probes.clone().unwrap_or_default().into_iter().map(Vec3::from).collect();
            let sweep = radius_sweep(
                &radii,
                Vec3::from(o.center.unwrap_or_default()),
                &source,
                o.divisions.unwrap_or_default(),
                cfg.time()?.t_end,
                &probes,
            )?;
            let changes: Vec<f64> = sweep.comparisons.iter().map(|c| c.max_diff_closed_form).collect();
            RateReport {
                kind: conv.kind,
                parameter: "radius".into(),
                orders: log_ratio_orders(&radii, &changes),
                slope: loglog_slope(&radii, &changes),
                values: radii,
                changes,
                expected_order: Some(2.0),
            }
        }
        ConvergenceKind::Dt => {
            let source = cfg.source()?;
            let time = cfg.time()?;
            let interp = time.interp.unwrap_or_default();
            let cluster = cfg.cluster_spec()?.build(cfg.cluster_spec()?.sweep()[0])?;
            let cluster = if cluster.is_empty() { cluster } else { assign_capacitances(&cluster)? };
            let sys = RetardedSystem::assemble(&cluster, &source)?;
            let dt0 = time.dt.unwrap_or_else(|| sys.default_dt(time.t_end));
            let spec = cfg.probes.as_ref().context("dt convergence needs [probes]")?;
            let exclusion = spec.exclusion.unwrap_or_else(|| default_exclusion(&cluster));
            let probes = ProbeSet::new(spec.points.iter().map(|p| Vec3::from(*p)).collect(), exclusion, &cluster, &source)?;
            let mut dts = Vec::new();
            let mut traces = Vec::new();
            for k in 0..=levels {
                let dt = dt0 / (1u64 << k) as f64;
                let mut opts = MarchOptions::new(time.t_end).with_dt(dt).with_interp(interp).forced(force);
                opts.tol = time.tol.unwrap_or(opts.tol);
                opts.max_iter = time.max_iter.unwrap_or(opts.max_iter);
                let sol = sys.march(&opts)?;
                let eval = |x: &Vec3, t: f64| fields::scattered_asymptotic(&cluster, &sol, source.c0, x, t);
                traces.push(probes.traces(sol.steps() + 1, dt, &eval)?);
                dts.push(dt);
            }
            let changes = successive_changes(&traces);
            RateReport {
                kind: conv.kind,
                parameter: "dt".into(),
                orders: halving_orders(&changes),
                slope: loglog_slope(&dts[..levels], &changes),
                values: dts,
                changes,
                expected_order: Some(interp.order() as f64),
            }
        }
        ConvergenceKind::Medium => {
            let source = cfg.source()?;
            let time = cfg.time()?;
            let interp = time.interp.unwrap_or_default();
            let n0 = conv.base_counts.unwrap_or(3);
            let mut hs = Vec::new();
            let mut traces = Vec::new();
            for k in 0..=levels {
                let n = n0 << k;
                let (grid, dt, probes) = medium_setup(&cfg, Some([n; 3]))?;
                let sol = march_volume(&grid, &source, time.t_end, dt, interp)?;
                traces.push(w_traces(&grid, &sol, source.c0, &probes, dt, sol.steps() + 1)?);
                hs.push(grid.spacing());
            }
            let changes = successive_changes(&traces);
            RateReport {
                kind: conv.kind,
                parameter: "h".into(),
                orders: halving_orders(&changes),
                slope: loglog_slope(&hs[..levels], &changes),
                values: hs,
                changes,
                expected_order: Some(2.0),
            }
        }
        ConvergenceKind::Cell => {
            let source = cfg.source()?;
            let (grid, dt, probes) = medium_setup(&cfg, None)?;
            let time = cfg.time()?;
            let sol = march_volume(&grid, &source, time.t_end, dt, time.interp.unwrap_or_default())?;
            let cbar = cfg.medium.as_ref().context("cell convergence needs [medium]")?.cbar_fn()?;
            let mut cells = Vec::new();
            let mut changes = Vec::new();
            for &n in conv.cells.as_deref().unwrap_or(&[]) {
                let a = grid.bx().volume() / (n * n * n) as f64;
                let cluster = periodic_layout(grid.bx(), a, &*cbar)?;
                let c = compare_cluster_vs_solution(&cluster, &grid, &sol, &source, &probes)?;
                cells.push(a);
                changes.push(c.worst_relative_l2());
            }
            RateReport {
                kind: conv.kind,
                parameter: "cell_volume".into(),
                orders: log_ratio_orders(&cells, &changes),
                slope: loglog_slope(&cells, &changes),
                values: cells,
                changes,
                expected_order: None,
            }
        }
    };
    art.write_with("rates.csv", |w| {
        writeln!(w, "{},change,order", report.parameter)?;
        for (k, v) in report.values.iter().enumerate() {
            let change = report.changes.get(k).map_or(String::new(), |c| format!("{c:e}"));
            let order = k
                .checked_sub(1)
                .and_then(|j| report.orders.get(j))
                .map_or(String::new(), |o| format!("{o:.4}"));
            writeln!(w, "{v:e},{change},{order}")?;
        }
        Ok(())
    })?;
    art.toml("rates.toml", &report)?;
    let summary = format!(
        "{} sweep over {:?}: changes {:?} orders {:?} slope {}\n",
        report.parameter, report.values, report.changes, report.orders, report.slope
    );
    art.finish(Command::Convergence, &cfg, force, true, summary)
}

/// Local slopes `ln(e_k / e_{k+1}) / ln(x_k / x_{k+1})`.
fn log_ratio_orders(xs: &[f64], es: &[f64]) -> Vec<f64> {
    xs.windows(2)
        .zip(es.windows(2))
        .map(|(x, e)| (e[0] / e[1]).ln() / (x[0] / x[1]).ln())
        .collect()
}

/// Reads a run's manifest back as a configuration.
pub fn config_from_manifest(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    let value: toml::Value = toml::from_str(&text)?;
    let Some(cfg) = value.get("config") else {
        bail!("{} has no [config] table", path.display());
    };
    Ok(cfg.clone().try_into()?)
}
