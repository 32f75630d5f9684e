use pcap_core::infinity::{
    check_cone_comparison, check_up_convergence, cone_sup_error, lattice_resolution,
    up_gap_tolerance, up_gaps, DEFAULT_MAX_ITERS, DEFAULT_TOL,
};
use pcap_core::oracles::up_ball_center;
use pcap_core::*;

fn disk_family(ps: &[f64]) -> Vec<(PoleProblem, SolveResult)> {
    let disk = Domain::unit_disk();
    let mesh = MeshParams::default()
        .build(&disk, Point::new(0.0, 0.0))
        .unwrap();
    ps.iter()
        .map(|&p| {
            let pb = PoleProblem::new(disk.clone(), mesh.clone(), p).unwrap();
            let r = solve_capacity(&pb, &SolverOptions::default()).unwrap();
            (pb, r)
        })
        .collect()
}

#[test]
fn disk_lattice_follows_the_cone_and_the_large_p_fields() {
    let h = 0.02;
    let lattice = InfinityProblem::new(Domain::unit_disk(), Point::new(0.0, 0.0), h).unwrap();
    let field = solve_infinity_harmonic(&lattice, DEFAULT_TOL, DEFAULT_MAX_ITERS).unwrap();
    assert!(cone_sup_error(&field, &lattice) <= 3.0 * h);
    assert!(check_cone_comparison(&field, &lattice).pass);
    assert!(field
        .update_history
        .windows(2)
        .all(|w| w[1] <= w[0] + 1e-15));

    let solved = disk_family(&[4.0, 10.0, 30.0, 50.0]);
    let family: Vec<(&PoleProblem, &SolveResult)> = solved.iter().map(|(a, b)| (a, b)).collect();
    let report = check_up_convergence(&family, &field, &lattice).unwrap();
    assert!(report.pass, "{report:#?}");
    let gaps = up_gaps(&family, &field, &lattice).unwrap();
    let (_, last) = gaps[gaps.len() - 1];
    assert!(last <= up_gap_tolerance(50.0, h));

    // The radial profiles alone differ by max_r |(1 - r) - u_50(r)|.
    let analytic = (0..=10_000)
        .map(|k| {
            let r = k as f64 / 10_000.0;
            ((1.0 - r) - up_ball_center(2, 1.0, 50.0, r).unwrap()).abs()
        })
        .fold(0.0, f64::max);
    assert!((analytic - 0.0075).abs() < 1e-3);
    assert!(last <= analytic + 3.0 * h);
}

#[test]
fn square_gaps_are_ordered_up_to_the_lattice_resolution() {
    let square = Domain::polygon(vec![
        Point::new(0.0, 0.0),
        Point::new(1.0, 0.0),
        Point::new(1.0, 1.0),
        Point::new(0.0, 1.0),
    ])
    .unwrap();
    let pole = Point::new(0.5, 0.5);
    let h = 0.02;
    let lattice = InfinityProblem::new(square.clone(), pole, h).unwrap();
    let field = solve_infinity_harmonic(&lattice, DEFAULT_TOL, DEFAULT_MAX_ITERS).unwrap();
    assert!(check_cone_comparison(&field, &lattice).pass);

    let mesh = MeshParams::default().build(&square, pole).unwrap();
    let solved: Vec<(PoleProblem, SolveResult)> = [4.0, 10.0, 30.0, 50.0]
        .iter()
        .map(|&p| {
            let pb = PoleProblem::new(square.clone(), mesh.clone(), p).unwrap();
            let r = solve_capacity(&pb, &SolverOptions::default()).unwrap();
            (pb, r)
        })
        .collect();
    let family: Vec<(&PoleProblem, &SolveResult)> = solved.iter().map(|(a, b)| (a, b)).collect();
    let gaps = up_gaps(&family, &field, &lattice).unwrap();
    let resolution = lattice_resolution(&lattice);
    for w in gaps.windows(2) {
        assert!(w[1].1 <= w[0].1 + resolution, "{gaps:?}");
    }
    let report = check_up_convergence(&family, &field, &lattice).unwrap();
    assert!(report.pass, "{report:#?}");
}
