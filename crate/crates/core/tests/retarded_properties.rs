//! Marching the retarded system against a two-hole series solution, plus
//! invariants of the march over random admissible clusters.

use std::f64::consts::PI;

use holewave::cluster::{Cluster, Hole, SourceConfig};
use holewave::retarded::{MarchOptions, RetardedSystem, SystemSolution};
use holewave::signal::CausalSignal;
use holewave::Vec3;
use nalgebra::Rotation3;
use proptest::prelude::*;

fn sphere(center: Vec3, radius: f64) -> Hole {
    let mut h = Hole::sphere(center, radius);
    h.capacitance = Some(4.0 * PI * radius);
    h
}

fn source_at(p: Vec3, signal: CausalSignal) -> SourceConfig {
    SourceConfig::new(p, signal, 1.0).unwrap()
}

fn solve(cluster: &Cluster, source: &SourceConfig, t_end: f64, dt: Option<f64>) -> SystemSolution {
    let sys = RetardedSystem::assemble(cluster, source).unwrap();
    let mut opts = MarchOptions::new(t_end);
    opts.dt = dt;
    sys.march(&opts).unwrap()
}

/// `α_1(t) = f_1(t) - w_12 α_2(t - τ)` and its mirror, unrolled through the
/// delay chain down to `t <= 0`.
struct TwoHoleSeries {
    radii: [f64; 2],
    source_dist: [f64; 2],
    r: f64,
}

impl TwoHoleSeries {
    fn alpha(&self, i: usize, t: f64, signal: &CausalSignal) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let d = self.source_dist[i];
        let f = -signal.evaluate(t - d) / (4.0 * PI * d);
        let j = 1 - i;
        let w = self.radii[j] / self.r;
        f - w * self.alpha(j, t - self.r, signal)
    }
}

fn two_hole_setup() -> (Cluster, SourceConfig, TwoHoleSeries) {
    let z1 = Vec3::new(0.05, 0.0, 0.0);
    let z2 = Vec3::new(-0.05, 0.0, 0.0);
    let zs = Vec3::new(0.0, 0.2, 0.0);
    let radii = [0.01, 0.02];
    let cluster = Cluster::new(vec![sphere(z1, radii[0]), sphere(z2, radii[1])]).unwrap();
    let source = source_at(zs, CausalSignal::smooth_bump());
    let series = TwoHoleSeries {
        radii,
        source_dist: [(z1 - zs).norm(), (z2 - zs).norm()],
        r: 0.1,
    };
    (cluster, source, series)
}

#[test]
fn node_aligned_delays_reproduce_the_series() {
    let (cluster, source, series) = two_hole_setup();
    let sol = solve(&cluster, &source, 1.0, Some(0.1 / 40.0));
    for i in 0..2 {
        let trace = sol.alpha(i);
        let peak = trace.max_abs();
        for (n, got) in trace.samples().iter().enumerate() {
            let exact = series.alpha(i, trace.time(n), &source.signal);
            assert!((got - exact).abs() <= 1e-12 * peak, "hole {i} step {n}: {got} vs {exact}");
        }
    }
}

#[test]
fn off_node_delays_converge_to_the_series() {
    let (cluster, source, series) = two_hole_setup();
    let errors: Vec<f64> = [0.1 / 13.3, 0.1 / 26.6, 0.1 / 53.2]
        .iter()
        .map(|&dt| {
            let sol = solve(&cluster, &source, 1.0, Some(dt));
            (0..2)
                .flat_map(|i| {
                    let trace = sol.alpha(i).clone();
                    let signal = source.signal.clone();
                    let series = &series;
                    (0..trace.len()).map(move |n| (trace.samples()[n] - series.alpha(i, trace.time(n), &signal)).abs())
                })
                .fold(0.0, f64::max)
        })
        .collect();
    for w in errors.windows(2) {
        assert!(w[0] / w[1] > 8.0, "errors {errors:?}");
    }
}

fn admissible_cluster() -> impl Strategy<Value = (Cluster, Vec3)> {
    (
        prop::collection::vec(prop::array::uniform3(-0.1..0.1f64), 1..8),
        1e-4..3e-3f64,
        prop::array::uniform3(-1.0..1.0f64),
    )
        .prop_filter_map("inadmissible cluster", |(centers, radius, dir)| {
            let holes = centers.iter().map(|c| sphere(Vec3::from(*c), radius)).collect();
            let cluster = Cluster::new(holes).ok()?;
            if cluster.len() > 1 && cluster.min_distance() < 4.0 * radius {
                return None;
            }
            if cluster.check_solvability_condition().ok()? >= 1.0 {
                return None;
            }
            let dir = Vec3::from(dir);
            (dir.norm() > 0.1).then(|| (cluster, dir.normalize() * 0.25))
        })
}

fn max_diff(a: &SystemSolution, b: &SystemSolution) -> (f64, f64) {
    let mut diff: f64 = 0.0;
    let mut peak: f64 = 0.0;
    for (ta, tb) in a.traces().iter().zip(b.traces()) {
        peak = peak.max(ta.max_abs());
        for (x, y) in ta.samples().iter().zip(tb.samples()) {
            diff = diff.max((x - y).abs());
        }
    }
    (diff, peak)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn response_is_linear_in_the_signal((cluster, zs) in admissible_cluster(), k in -3.0..3.0f64) {
        let base = solve(&cluster, &source_at(zs, CausalSignal::smooth_bump()), 0.5, None);
        let scaled = solve(&cluster, &source_at(zs, CausalSignal::smooth_bump().scaled(k)), 0.5, None);
        for (ta, tb) in base.traces().iter().zip(scaled.traces()) {
            for (x, y) in ta.samples().iter().zip(tb.samples()) {
                prop_assert!((k * x - y).abs() <= 1e-12 * (1.0 + k.abs()) * ta.max_abs());
            }
        }
    }

    #[test]
    fn rigid_motions_leave_signals_unchanged(
        (cluster, zs) in admissible_cluster(),
        shift in prop::array::uniform3(-1.0..1.0f64),
        axis in prop::array::uniform3(-1.0..1.0f64),
        angle in 0.0..PI,
    ) {
        let source = source_at(zs, CausalSignal::smooth_bump());
        let base = solve(&cluster, &source, 0.5, None);
        let dt = Some(base.dt());

        let shift = Vec3::from(shift);
        let moved = solve(&cluster.translated(shift).unwrap(), &source_at(zs + shift, CausalSignal::smooth_bump()), 0.5, dt);
        let (diff, peak) = max_diff(&base, &moved);
        prop_assert!(diff <= 1e-9 * peak, "translation: {diff} vs {peak}");

        let axis = Vec3::from(axis);
        prop_assume!(axis.norm() > 0.1);
        let rot = Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle);
        let turned = solve(&cluster.rotated(&rot).unwrap(), &source_at(rot * zs, CausalSignal::smooth_bump()), 0.5, dt);
        let (diff, peak) = max_diff(&base, &turned);
        prop_assert!(diff <= 1e-9 * peak, "rotation: {diff} vs {peak}");
    }

    #[test]
    fn mirror_image_about_a_source_plane_is_exact((cluster, zs) in admissible_cluster()) {
        let zs = Vec3::new(zs.x, 0.0, zs.z);
        prop_assume!(zs.norm() > 0.15);
        let mirrored = Cluster::new(
            cluster.holes().iter().map(|h| sphere(Vec3::new(h.center.x, -h.center.y, h.center.z), h.diameter() / 2.0)).collect(),
        ).unwrap();
        let source = source_at(zs, CausalSignal::smooth_bump());
        let base = solve(&cluster, &source, 0.5, None);
        let image = solve(&mirrored, &source, 0.5, Some(base.dt()));
        let (diff, peak) = max_diff(&base, &image);
        prop_assert!(diff <= 1e-12 * peak);
    }

    #[test]
    fn holes_are_silent_before_the_direct_wave_arrives((cluster, zs) in admissible_cluster()) {
        let source = source_at(zs, CausalSignal::smooth_bump());
        let sol = solve(&cluster, &source, 0.6, None);
        for (hole, trace) in cluster.holes().iter().zip(sol.traces()) {
            let arrival = (hole.center - zs).norm();
            for (n, v) in trace.samples().iter().enumerate() {
                if trace.time(n) < arrival {
                    prop_assert!(v.abs() <= 1e-10);
                }
            }
        }
    }

    #[test]
    fn stability_estimate_holds((cluster, zs) in admissible_cluster()) {
        let source = source_at(zs, CausalSignal::smooth_bump());
        let sys = RetardedSystem::assemble(&cluster, &source).unwrap();
        let sol = sys.march(&MarchOptions::new(0.6)).unwrap();
        let report = sys.stability_check(&sol);
        prop_assert!(report.passed, "ratio {}", report.worst_ratio);
        prop_assert!(sys.residual(&sol).unwrap() <= 1e-10);
    }
}
