//! Acceptance suite: one PASS/FAIL line per criterion; exits nonzero when
//! any criterion fails.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{ensure, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use holewave::capacitance::{solve_equilibrium_density, SurfaceMesh};
use holewave::cluster::{periodic_layout, Cluster, Hole, SourceConfig};
use holewave::design::{cbar_from_p, solve_p, DensityField};
use holewave::fields::{first_arrival, grid_eval, scattered_asymptotic, FieldGrid, FieldKind};
use holewave::medium::{compare_cluster_vs_solution, march_volume, VoxelGrid};
use holewave::oracle::radius_sweep;
use holewave::retarded::{MarchOptions, RetardedSystem, DEFAULT_TOL};
use holewave::signal::{CausalSignal, Interp};
use holewave::{AxisBox, Vec3};
use holewave_cli::{run, Command, RunConfig};

struct Verdict {
    passed: bool,
    detail: String,
}

type Check<'a> = Box<dyn Fn() -> Result<Verdict> + 'a>;

fn verdict(passed: bool, detail: String) -> Result<Verdict> {
    Ok(Verdict { passed, detail })
}

fn sci(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn smooth_source(position: [f64; 3]) -> SourceConfig {
    SourceConfig::new(Vec3::from(position), CausalSignal::smooth_bump(), 1.0).unwrap()
}

/// Sweep of the exact sphere solution against the closed-form single-hole
/// field; slope of the max difference over radii.
fn single_hole_order() -> Result<Verdict> {
    let start = Instant::now();
    let source = smooth_source([0.15, 0.0, 0.0]);
    let center = Vec3::new(0.1, 0.0, 0.0);
    let probes = [center + Vec3::new(0.0, 0.1, 0.0)];
    let sweep = radius_sweep(&[0.02, 0.01, 0.005], center, &source, 20, 1.0, &probes)?;
    let elapsed = start.elapsed();
    let diffs: Vec<f64> = sweep.comparisons.iter().map(|c| c.max_diff_closed_form).collect();
    verdict(
        sweep.slope_closed_form.at_least(1.8) && elapsed <= Duration::from_secs(60),
        format!("slope {} (>= 1.8), max diffs {}, {elapsed:.1?} (<= 60s)", sweep.slope_closed_form, sci(&diffs)),
    )
}

fn capacitance() -> Result<Verdict> {
    let start = Instant::now();
    let mesh = SurfaceMesh::icosphere(1.0, 10)?;
    ensure!(mesh.panel_count() >= 2000);
    let unit = solve_equilibrium_density(&mesh)?.capacitance;
    let unit_err = (unit - 4.0 * PI).abs() / (4.0 * PI);
    let mut worst_scaling: f64 = 0.0;
    for eps in [1.0, 0.1, 0.01] {
        let shifted = mesh.transformed(eps, Vec3::new(0.3, -0.2, 0.1))?;
        let c = solve_equilibrium_density(&shifted)?.capacitance;
        worst_scaling = worst_scaling.max((c - eps * unit).abs() / (eps * unit));
    }
    let elapsed = start.elapsed();
    verdict(
        unit_err <= 0.01 && worst_scaling <= 0.005 && elapsed <= Duration::from_secs(60),
        format!(
            "{} panels: |C - 4π|/4π = {unit_err:.2e} (<= 1e-2), scaling error {worst_scaling:.2e} (<= 5e-3), {elapsed:.1?} (<= 60s)",
            mesh.panel_count()
        ),
    )
}

/// Admissible random cluster of at most 16 spheres with a source outside.
fn random_problem(rng: &mut ChaCha8Rng) -> (Cluster, SourceConfig) {
    loop {
        let m = rng.gen_range(1..=16);
        let radius = 10f64.powf(rng.gen_range(-4.0..-2.3));
        let holes: Vec<Hole> = (0..m)
            .map(|_| {
                let c = Vec3::new(rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1));
                let mut h = Hole::sphere(c, radius);
                h.capacitance = Some(4.0 * PI * radius);
                h
            })
            .collect();
        let Ok(cluster) = Cluster::new(holes) else { continue };
        if m > 1 && cluster.min_distance() < 4.0 * radius {
            continue;
        }
        if cluster.check_solvability_condition().unwrap() >= 1.0 {
            continue;
        }
        let dir = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        if dir.norm() < 0.1 {
            continue;
        }
        let source = smooth_source((dir.normalize() * rng.gen_range(0.2..0.3)).into());
        return (cluster, source);
    }
}

fn random_dt(rng: &mut ChaCha8Rng, sys: &RetardedSystem, t_end: f64) -> f64 {
    // half the trials step past the shortest delay, forcing the iterative path
    if sys.len() > 1 && rng.gen_bool(0.5) {
        let dt = 2.0 * sys.min_delay();
        if dt < t_end / 8.0 {
            return dt;
        }
    }
    sys.default_dt(t_end)
}

fn retarded_exactness() -> Result<Verdict> {
    let source = smooth_source([0.15, 0.0, 0.0]);
    let z = Vec3::new(0.1, 0.0, 0.0);
    let cluster = Cluster::new(vec![Hole::sphere(z, 1e-3)])?;
    let cluster = holewave::capacitance::assign_capacitances(&cluster)?;
    let sys = RetardedSystem::assemble(&cluster, &source)?;
    let sol = sys.march(&MarchOptions::new(1.0))?;
    let d = (z - source.position).norm();
    let (mut err, mut peak): (f64, f64) = (0.0, 0.0);
    for (n, got) in sol.alpha(0).samples().iter().enumerate() {
        let exact = -source.signal.evaluate(n as f64 * sol.dt() - d) / (4.0 * PI * d);
        err = err.max((got - exact).abs());
        peak = peak.max(exact.abs());
    }
    let worst_rel = err / peak;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_residual: f64 = 0.0;
    let mut implicit = 0;
    for _ in 0..100 {
        let (cluster, source) = random_problem(&mut rng);
        let sys = RetardedSystem::assemble(&cluster, &source)?;
        let dt = random_dt(&mut rng, &sys, 0.5);
        let sol = sys.march(&MarchOptions::new(0.5).with_dt(dt))?;
        implicit += usize::from(!sol.is_explicit());
        worst_residual = worst_residual.max(sys.residual(&sol)?);
    }
    verdict(
        worst_rel <= 1e-12 && worst_residual <= DEFAULT_TOL,
        format!(
            "M=1 max relative error {worst_rel:.2e} (<= 1e-12); 100 random clusters ({implicit} iterative) max residual {worst_residual:.2e} (<= 1e-10)"
        ),
    )
}

fn stability() -> Result<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for _ in 0..100 {
        let (cluster, source) = random_problem(&mut rng);
        let sys = RetardedSystem::assemble(&cluster, &source)?;
        let dt = random_dt(&mut rng, &sys, 0.5);
        let sol = sys.march(&MarchOptions::new(0.5).with_dt(dt))?;
        let report = sys.stability_check(&sol);
        worst = worst.max(report.worst_ratio);
        failures += usize::from(!report.passed);
    }
    verdict(
        failures == 0,
        format!("100 random clusters: {failures} failures, worst |α(t)|/bound {worst:.3}"),
    )
}

fn causality() -> Result<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let t_end = 0.6;
    let mut worst: f64 = 0.0;
    let mut checked = 0usize;
    for _ in 0..100 {
        let (cluster, source) = random_problem(&mut rng);
        let sys = RetardedSystem::assemble(&cluster, &source)?;
        let dt = random_dt(&mut rng, &sys, t_end);
        let sol = sys.march(&MarchOptions::new(t_end).with_dt(dt))?;
        let lambda_max = (0..=sol.steps())
            .map(|n| source.signal.evaluate(n as f64 * dt).abs())
            .fold(0.0, f64::max);
        for _ in 0..5 {
            let x = Vec3::new(rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3));
            if cluster.holes().iter().any(|h| (x - h.center).norm() < 5.0 * h.diameter()) {
                continue;
            }
            let arrival = first_arrival(&cluster, &source, &x);
            for n in 0..=sol.steps() {
                let t = n as f64 * dt;
                if t >= arrival {
                    break;
                }
                let u = scattered_asymptotic(&cluster, &sol, 1.0, &x, t)?;
                worst = worst.max(u.abs() / lambda_max);
                checked += 1;
            }
        }
    }
    verdict(
        worst <= 1e-10,
        format!("{checked} pre-arrival samples: max |u^s|/||λ|| = {worst:.2e} (<= 1e-10)"),
    )
}

fn symmetry() -> Result<Verdict> {
    let source = smooth_source([0.2, 0.0, 0.0]);
    let holes = vec![Hole::sphere(Vec3::new(0.0, 0.05, 0.0), 0.002), Hole::sphere(Vec3::new(0.0, -0.05, 0.0), 0.002)];
    let cluster = holewave::capacitance::assign_capacitances(&Cluster::new(holes)?)?;
    let sys = RetardedSystem::assemble(&cluster, &source)?;
    let sol = sys.march(&MarchOptions::new(0.8))?;
    let a1 = sol.alpha(0).samples();
    let a2 = sol.alpha(1).samples();
    let norm = sol.alpha(0).max_abs();
    let alpha_diff = a1.iter().zip(a2).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    // the grid is symmetric under y -> -y: row j mirrors row ny-1-j
    let grid = FieldGrid::new([0.0, 0.0, 0.01], [0.02, 0.02, 0.0], [21, 21, 1], vec![0.3, 0.5, 0.8])?;
    let snaps = grid_eval(&cluster, &sol, &source, &grid, FieldKind::Scattered, 0.02);
    let (mut snap_diff, mut snap_max): (f64, f64) = (0.0, 0.0);
    for values in &snaps.values {
        for j in 0..21 {
            for i in 0..21 {
                if let (Some(a), Some(b)) = (values[j * 21 + i], values[(20 - j) * 21 + i]) {
                    snap_diff = snap_diff.max((a - b).abs());
                    snap_max = snap_max.max(a.abs());
                }
            }
        }
    }
    let rel_alpha = alpha_diff / norm;
    let rel_snap = snap_diff / snap_max;
    verdict(
        rel_alpha <= 1e-12 && rel_snap <= 1e-12,
        format!("||α1-α2||/||α1|| = {rel_alpha:.2e}, snapshot mirror error {rel_snap:.2e} (both <= 1e-12)"),
    )
}

fn medium_trend() -> Result<Verdict> {
    let start = Instant::now();
    let bx = AxisBox::centered_cube(0.018)?;
    let cbar = 4.0 * PI;
    let source = smooth_source([0.0243, 0.0, 0.0]);
    let grid = VoxelGrid::cubic(bx, 12, &|_| cbar)?;
    let probes = [Vec3::new(-0.05, 0.0, 0.0), Vec3::new(0.0, 0.05, 0.0), Vec3::new(0.0, 0.0, 0.045)];
    let medium = march_volume(&grid, &source, 0.8, grid.spacing() / 2.0, Interp::Cubic)?;
    let mut worst = Vec::new();
    let mut holes = Vec::new();
    for n in [3usize, 4, 5] {
        let cluster = periodic_layout(&bx, bx.volume() / (n * n * n) as f64, &|_| cbar)?;
        holes.push(cluster.len());
        worst.push(compare_cluster_vs_solution(&cluster, &grid, &medium, &source, &probes)?.worst_relative_l2());
    }
    let elapsed = start.elapsed();
    let decreasing = worst.windows(2).all(|w| w[1] < w[0]);
    verdict(
        decreasing && elapsed <= Duration::from_secs(600),
        format!("M = {holes:?}: relative L2 {} decreasing = {decreasing}, {elapsed:.1?} (<= 600s)", sci(&worst)),
    )
}

/// `-Δp + k² p = 0` in `[-L/2, L/2]^3`, `p = 1` on the boundary, as the sum
/// of six single-face double sine series.
fn cube_series(half: f64, k2: f64, x: &Vec3, terms: usize) -> f64 {
    let l = 2.0 * half;
    let face = |s: f64, u: f64, v: f64| {
        let mut sum = 0.0;
        for m in (1..terms).step_by(2) {
            for n in (1..terms).step_by(2) {
                let (mf, nf) = (m as f64, n as f64);
                let g = (k2 + (PI / l).powi(2) * (mf * mf + nf * nf)).sqrt();
                let ratio = (g * (s - l)).exp() * (1.0 - (-2.0 * g * s).exp()) / (1.0 - (-2.0 * g * l).exp());
                sum += 16.0 / (PI * PI * mf * nf) * (mf * PI * u / l).sin() * (nf * PI * v / l).sin() * ratio;
            }
        }
        sum
    };
    let (a, b, c) = (x.x + half, x.y + half, x.z + half);
    face(a, b, c) + face(l - a, b, c) + face(b, a, c) + face(l - b, a, c) + face(c, a, b) + face(l - c, a, b)
}

fn design_roundtrip() -> Result<Verdict> {
    let half = 0.018;
    let k2 = 4.0 * PI;
    let bx = AxisBox::centered_cube(half)?;
    let coarse = DensityField::constant(bx, 2.0 * half / 12.0, k2)?;
    let probes: Vec<Vec3> = (0..coarse.len()).filter(|&m| !coarse.is_boundary(m)).map(|m| coarse.node(m)).collect();
    let exact: Vec<f64> = probes.iter().map(|x| cube_series(half, k2, x, 301)).collect();
    let mut p_err = Vec::new();
    let mut roundtrip: f64 = 0.0;
    let mut in_range = true;
    for n in [12usize, 24, 48] {
        let c = DensityField::constant(bx, 2.0 * half / n as f64, k2)?;
        let s = solve_p(&c, 1e-13)?;
        in_range &= s.p.values().iter().all(|&v| v > 0.0 && v <= 1.0);
        let back = cbar_from_p(&s.p, false)?;
        roundtrip = roundtrip.max(
            (0..back.len())
                .filter(|&m| !back.is_boundary(m))
                .map(|m| (back.values()[m] - k2).abs() / k2)
                .fold(0.0, f64::max),
        );
        p_err.push(probes.iter().zip(&exact).map(|(x, e)| (s.p.sample(x) - e).abs()).fold(0.0, f64::max));
    }
    let orders: Vec<f64> = p_err.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    // further non-negative fields for the maximum principle
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let unit = AxisBox::new([0.0; 3], [1.0; 3])?;
    let mut tested = 3;
    for _ in 0..5 {
        let (a, b) = (rng.gen_range(0.0..50.0), rng.gen_range(0.0..6.0));
        let c = DensityField::from_fn(unit, 1.0 / 16.0, &|x| a * (b * x.x).sin().powi(2) + (x.y - 0.5).abs())?;
        let s = solve_p(&c, 1e-10)?;
        in_range &= s.p.values().iter().all(|&v| v > 0.0 && v <= 1.0);
        tested += 1;
    }
    let zero = solve_p(&DensityField::constant(unit, 1.0 / 8.0, 0.0)?, 1e-10)?;
    in_range &= zero.p.values().iter().all(|&v| v > 0.0 && v <= 1.0);
    tested += 1;
    verdict(
        orders.iter().all(|&o| o >= 1.8) && roundtrip <= 1e-6 && in_range,
        format!(
            "max interior error of p against the continuum {}, orders {orders:.3?} (>= 1.8); discrete C̄ roundtrip {roundtrip:.1e} relative (<= 1e-6); 0 < p <= 1 on {tested} fields: {in_range}",
            sci(&p_err)
        ),
    )
}

fn rates_orders(dir: &Path) -> Result<(Vec<f64>, f64)> {
    let text = fs::read_to_string(dir.join("rates.toml"))?;
    let v: toml::Value = toml::from_str(&text)?;
    let orders = v["orders"]
        .as_array()
        .context("orders")?
        .iter()
        .map(|o| o.as_float().context("order"))
        .collect::<Result<Vec<_>>>()?;
    let expected = v["expected_order"].as_float().context("expected order")?;
    Ok((orders, expected))
}

fn grid_self_convergence(out: &Path) -> Result<Verdict> {
    let mut details = Vec::new();
    let mut passed = true;
    for (name, label) in [("example2", "retarded dt"), ("example3", "volume dt,h")] {
        let cfg = RunConfig::load(&configs_dir().join(format!("{name}.cfg")))?;
        let dir = out.join(format!("conv_{name}"));
        run(Command::Convergence, cfg, &dir, false)?;
        let (orders, expected) = rates_orders(&dir)?;
        passed &= !orders.is_empty() && orders.iter().all(|&o| o >= expected);
        details.push(format!("{label} orders {orders:.3?} (>= {expected})"));
    }
    verdict(passed, details.join("; "))
}

fn tree_bytes(root: &Path) -> Result<Vec<(PathBuf, Vec<u8>)>> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir)? {
            let p = entry?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root)?.to_path_buf(), fs::read(&p)?));
            }
        }
    }
    out.sort();
    Ok(out)
}

fn determinism(out: &Path) -> Result<Verdict> {
    let runs = [
        ("example1", Command::Simulate),
        ("example1", Command::OracleValidate),
        ("example2", Command::Simulate),
        ("example2", Command::Convergence),
        ("example3", Command::Simulate),
        ("example3", Command::Medium),
        ("design", Command::Design),
    ];
    let mut files = 0;
    let mut mismatches = Vec::new();
    for (name, command) in runs {
        let cfg = RunConfig::load(&configs_dir().join(format!("{name}.cfg")))?;
        let a = out.join(format!("det_{name}_{}_a", command.name()));
        let b = out.join(format!("det_{name}_{}_b", command.name()));
        run(command, cfg.clone(), &a, false)?;
        // the rerun uses a single worker thread
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build()?;
        pool.install(|| run(command, cfg, &b, false))?;
        let (ta, tb) = (tree_bytes(&a)?, tree_bytes(&b)?);
        files += ta.len();
        if ta != tb {
            mismatches.push(format!("{name} {}", command.name()));
        }
    }
    verdict(
        mismatches.is_empty(),
        format!("{files} files across 7 runs compared byte for byte; mismatches: {mismatches:?}"),
    )
}

fn main() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path();
    let criteria: Vec<(&str, Check)> = vec![
        ("single-hole order", Box::new(single_hole_order)),
        ("capacitance", Box::new(capacitance)),
        ("retarded-system exactness", Box::new(retarded_exactness)),
        ("stability inequality", Box::new(stability)),
        ("causality", Box::new(causality)),
        ("symmetry", Box::new(symmetry)),
        ("effective medium trend", Box::new(medium_trend)),
        ("design roundtrip", Box::new(design_roundtrip)),
        ("grid self-convergence", Box::new(move || grid_self_convergence(out))),
        ("determinism", Box::new(move || determinism(out))),
    ];
    let mut failed = Vec::new();
    for (k, (name, check)) in criteria.iter().enumerate() {
        let (passed, detail) = match check() {
            Ok(v) => (v.passed, v.detail),
            Err(e) => (false, format!("error: {e:#}")),
        };
        println!("criterion {:>2} {name}: {} | {detail}", k + 1, if passed { "PASS" } else { "FAIL" });
        if !passed {
            failed.push(k + 1);
        }
    }
    drop(criteria);
    tmp.close().unwrap();
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
