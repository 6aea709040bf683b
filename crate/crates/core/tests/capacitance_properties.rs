use std::f64::consts::PI;

use holewave::capacitance::{solve_equilibrium_density, SurfaceMesh};
use holewave::Vec3;
use proptest::prelude::*;

#[test]
fn refinement_approaches_the_sphere_value() {
    let errors: Vec<f64> = [2, 4, 8]
        .iter()
        .map(|&f| {
            let mesh = SurfaceMesh::icosphere(1.0, f).unwrap();
            (solve_equilibrium_density(&mesh).unwrap().capacitance - 4.0 * PI).abs()
        })
        .collect();
    for w in errors.windows(2) {
        assert!((w[0] / w[1]).log2() >= 1.0, "errors {errors:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn capacitance_scales_with_size_and_ignores_position(
        eps in 1e-4..10.0f64,
        shift in prop::array::uniform3(-5.0..5.0f64),
    ) {
        let mesh = SurfaceMesh::icosphere(1.0, 3).unwrap();
        let unit = solve_equilibrium_density(&mesh).unwrap();
        let moved = solve_equilibrium_density(&mesh.transformed(eps, Vec3::from(shift)).unwrap()).unwrap();
        prop_assert!((moved.capacitance - eps * unit.capacitance).abs() <= 1e-9 * eps * unit.capacitance);
        prop_assert!(moved.density_positive());
    }
}
