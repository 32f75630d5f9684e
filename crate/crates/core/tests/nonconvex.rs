//! Large-p solves on an L-shape with the pole near the re-entrant corner.
//!
//! The near-pole gradient dwarfs the one in the arms there, so the arms
//! contribute almost nothing to the energy at large p.

use pcap_core::*;

fn l_shape() -> Domain {
    Domain::polygon(vec![
        Point::new(0.0, 0.0),
        Point::new(2.0, 0.0),
        Point::new(2.0, 1.0),
        Point::new(1.0, 1.0),
        Point::new(1.0, 2.0),
        Point::new(0.0, 2.0),
    ])
    .unwrap()
}

#[test]
fn large_p_fields_stay_below_the_radial_comparison_function() {
    // 1 - (r/m)^((p-2)/(p-1)) is p-harmonic off the pole, equals 1 there and
    // is nonnegative on the boundary, so it dominates u_p.
    let dom = l_shape();
    let pole = dom.centroid();
    let m = dom.farthest_boundary_distance(&pole);
    let mesh = MeshParams::default().build(&dom, pole).unwrap();
    for p in [10.0, 30.0, 50.0] {
        let pb = PoleProblem::new(dom.clone(), mesh.clone(), p).unwrap();
        let r = solve_capacity(&pb, &SolverOptions::default()).unwrap();
        let a = (p - 2.0) / (p - 1.0);
        for (y, &u) in mesh.vertices().iter().zip(&r.u) {
            let bound = 1.0 - (y.dist(&pole) / m).powf(a);
            assert!(
                u <= bound + 1e-3,
                "p = {p} at ({}, {}): {u} > {bound}",
                y.x,
                y.y
            );
        }
    }
}

#[test]
fn far_field_is_settled_by_the_step_test() {
    let dom = l_shape();
    let pole = dom.centroid();
    let mesh = MeshParams::default().build(&dom, pole).unwrap();
    let pb = PoleProblem::new(dom, mesh, 50.0).unwrap();
    let r = solve_capacity(&pb, &SolverOptions::default()).unwrap();
    let tight = SolverOptions {
        step_tol: 1e-13,
        ..SolverOptions::default()
    };
    let r2 = solve_capacity(&pb, &tight).unwrap();
    let diff =
        r.u.iter()
            .zip(&r2.u)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
    assert!(diff < 1e-6, "{diff}");
    assert!(((r.s - r2.s) / r2.s).abs() < 1e-10);
}
