//! Hyperbolic position solving and dilution-of-precision analytics:
//! round-trip recovery from exact range differences, covariance
//! consistency under noise, and the geometric invariances of the PDoP.

use approx::{assert_abs_diff_eq, assert_relative_eq};
use dtdoa_core::dtdoa::DtdoaMeasurement;
use dtdoa_core::geometry::{distance, NetworkGeometry, Point, SPEED_OF_LIGHT};
use dtdoa_core::rng::substream;
use dtdoa_core::solver::{pdop, pdop_map, solve, SolveOptions};
use dtdoa_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn square_geometry() -> NetworkGeometry {
    NetworkGeometry::new(
        Point::new(0.0, 0.0),
        vec![Point::new(10.0, 0.0), Point::new(10.0, 10.0), Point::new(0.0, 10.0)],
        SPEED_OF_LIGHT,
    )
    .unwrap()
}

fn exact_measurements(geometry: &NetworkGeometry, p: Point) -> Vec<DtdoaMeasurement> {
    (0..geometry.anchors.len())
        .map(|i| DtdoaMeasurement {
            anchor_id: i,
            value: geometry.range_diff(i, p),
            predicted_variance: None,
            truth: None,
        })
        .collect()
}

#[test]
fn center_of_the_square_has_all_zero_differences() {
    let geometry = square_geometry();
    let truth = Point::new(5.0, 5.0);
    let measurements = exact_measurements(&geometry, truth);
    for m in &measurements {
        assert_abs_diff_eq!(m.value, 0.0, epsilon = 1e-12);
    }
    let fix = solve(&geometry, &measurements, &SolveOptions::default()).unwrap();
    assert!(fix.converged);
    assert!(distance(fix.position, truth) < 1e-9, "fix {:?}", fix.position);
    assert!(fix.residual_norm < 1e-9);
    assert!(fix.pdop > 0.0);
}

fn random_solver_case(rng: &mut ChaCha8Rng, n: usize) -> (NetworkGeometry, Point) {
    let mut nodes: Vec<Point> = Vec::new();
    while nodes.len() < n + 2 {
        let p = Point::new(rng.random_range(0.0..=20.0), rng.random_range(0.0..=20.0));
        if nodes.iter().all(|q| distance(*q, p) > 1.0) {
            nodes.push(p);
        }
    }
    let master = nodes[0];
    let truth = nodes[1];
    let geometry = NetworkGeometry::new(master, nodes[2..].to_vec(), SPEED_OF_LIGHT).unwrap();
    (geometry, truth)
}

#[test]
fn exact_measurements_round_trip_for_random_geometries() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for case in 0..200 {
        let n = 4 + (case % 3);
        let (geometry, truth) = random_solver_case(&mut rng, n);
        let measurements = exact_measurements(&geometry, truth);
        let fix = solve(&geometry, &measurements, &SolveOptions::default()).unwrap();
        assert!(fix.converged, "case {case} did not converge");
        worst = worst.max(distance(fix.position, truth));
    }
    assert!(worst < 1e-8, "worst recovery error {worst:e} m");
}

#[test]
fn solve_requires_two_measurements() {
    let geometry = square_geometry();
    let one = exact_measurements(&geometry, Point::new(5.0, 5.0));
    let err = solve(&geometry, &one[..1], &SolveOptions::default()).unwrap_err();
    assert!(matches!(err, Error::Degenerate(_)));
    assert!(solve(&geometry, &[], &SolveOptions::default()).is_err());
}

#[test]
fn solve_validates_measurements() {
    let geometry = square_geometry();
    let mut bad_id = exact_measurements(&geometry, Point::new(5.0, 5.0));
    bad_id[0].anchor_id = 17;
    assert!(solve(&geometry, &bad_id, &SolveOptions::default()).is_err());

    let mut bad_value = exact_measurements(&geometry, Point::new(5.0, 5.0));
    bad_value[1].value = f64::NAN;
    assert!(solve(&geometry, &bad_value, &SolveOptions::default()).is_err());
}

#[test]
fn fit_cost_never_exceeds_the_starting_cost() {
    let geometry = square_geometry();
    let truth = Point::new(3.0, 4.0);
    let measurements = exact_measurements(&geometry, truth);
    let start = Point::new(9.0, 1.0);
    let opts = SolveOptions {
        initial_guess: Some(start),
        multi_start: false,
        ..SolveOptions::default()
    };
    let fix = solve(&geometry, &measurements, &opts).unwrap();

    let cost_at = |p: Point| -> f64 {
        measurements
            .iter()
            .map(|m| {
                let r = geometry.range_diff(m.anchor_id, p) - m.value;
                r * r
            })
            .sum::<f64>()
            .sqrt()
    };
    assert!(fix.residual_norm <= cost_at(start) + 1e-12);
    assert!(fix.iterations <= 50);
}

#[test]
fn reported_covariance_matches_the_error_scatter() {
    let geometry = square_geometry();
    let truth = Point::new(3.0, 4.0);
    let sigma = 0.05;
    let exact = exact_measurements(&geometry, truth);

    let mut rng = substream(42, 30);
    let trials = 1000;
    let mut errs: Vec<(f64, f64)> = Vec::with_capacity(trials);
    let mut reported: Option<[f64; 3]> = None;
    for _ in 0..trials {
        let noisy: Vec<DtdoaMeasurement> = exact
            .iter()
            .map(|m| DtdoaMeasurement {
                anchor_id: m.anchor_id,
                value: m.value + sigma * rng.sample::<f64, _>(StandardNormal),
                predicted_variance: Some(sigma * sigma),
                truth: None,
            })
            .collect();
        let fix = solve(&geometry, &noisy, &SolveOptions::default()).unwrap();
        assert!(fix.converged);
        errs.push((fix.position.x - truth.x, fix.position.y - truth.y));
        if reported.is_none() {
            let c = fix.covariance;
            reported = Some([c[0][0], c[1][1], c[0][1]]);
        }
    }

    let n = errs.len() as f64;
    let (mx, my) = errs.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x / n, b + y / n));
    let mut cxx = 0.0;
    let mut cyy = 0.0;
    let mut cxy = 0.0;
    for (x, y) in &errs {
        cxx += (x - mx) * (x - mx) / (n - 1.0);
        cyy += (y - my) * (y - my) / (n - 1.0);
        cxy += (x - mx) * (y - my) / (n - 1.0);
    }
    let [rxx, ryy, rxy] = reported.unwrap();

    // Empirical and predicted variances agree within a factor of two.
    assert!(cxx / rxx > 0.5 && cxx / rxx < 2.0, "xx: empirical {cxx:e} vs reported {rxx:e}");
    assert!(cyy / ryy > 0.5 && cyy / ryy < 2.0, "yy: empirical {cyy:e} vs reported {ryy:e}");
    // The cross term has the same sign and scale.
    assert!((cxy - rxy).abs() < 2.0 * (rxx * ryy).sqrt());
}

#[test]
fn unweighted_and_weighted_solves_agree_on_equal_variances() {
    let geometry = square_geometry();
    let truth = Point::new(6.5, 2.5);
    let plain = exact_measurements(&geometry, truth);
    let weighted: Vec<DtdoaMeasurement> = plain
        .iter()
        .map(|m| DtdoaMeasurement { predicted_variance: Some(4e-4), ..*m })
        .collect();
    let a = solve(&geometry, &plain, &SolveOptions::default()).unwrap();
    let b = solve(&geometry, &weighted, &SolveOptions::default()).unwrap();
    assert!(distance(a.position, b.position) < 1e-9);
}

#[test]
fn pdop_is_invariant_under_rigid_motion() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..50 {
        let (geometry, query) = random_solver_case(&mut rng, 5);
        let base = pdop(&geometry, query).unwrap();

        let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let (s, c) = theta.sin_cos();
        let shift = Point::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0));
        let rot = |p: Point| Point::new(c * p.x - s * p.y + shift.x, s * p.x + c * p.y + shift.y);

        let moved = NetworkGeometry::new(
            rot(geometry.master),
            geometry.anchors.iter().copied().map(rot).collect(),
            geometry.c,
        )
        .unwrap();
        let transformed = pdop(&moved, rot(query)).unwrap();
        assert_relative_eq!(base, transformed, max_relative = 1e-9);
    }
}

#[test]
fn collinear_networks_are_degenerate() {
    let geometry = NetworkGeometry::new(
        Point::new(0.0, 0.0),
        vec![Point::new(1.0, 0.0), Point::new(2.0, 0.0), Point::new(3.0, 0.0)],
        SPEED_OF_LIGHT,
    )
    .unwrap();
    let err = pdop(&geometry, Point::new(5.0, 0.0)).unwrap_err();
    assert!(matches!(err, Error::Degenerate(_)));
}

#[test]
fn pdop_at_a_node_is_degenerate() {
    let geometry = square_geometry();
    assert!(pdop(&geometry, geometry.master).is_err());
    assert!(pdop(&geometry, geometry.anchors[1]).is_err());
}

#[test]
fn pdop_map_single_cell_samples_the_midpoint() {
    let geometry = square_geometry();
    let map = pdop_map(&geometry, (2.0, 8.0), (3.0, 7.0), 1, 1).unwrap();
    assert_eq!(map.len(), 1);
    assert_eq!(map[0].len(), 1);
    let center = pdop(&geometry, Point::new(5.0, 5.0)).unwrap();
    assert_eq!(map[0][0], Some(center));
}

#[test]
fn pdop_map_of_a_symmetric_network_has_fourfold_symmetry() {
    // Master at the center, anchors on the four corners: rotating the
    // query plane by a quarter turn maps the network onto itself.
    let geometry = NetworkGeometry::new(
        Point::new(5.0, 5.0),
        vec![
            Point::new(0.0, 0.0),
            Point::new(10.0, 0.0),
            Point::new(10.0, 10.0),
            Point::new(0.0, 10.0),
        ],
        SPEED_OF_LIGHT,
    )
    .unwrap();
    let n = 21;
    let map = pdop_map(&geometry, (0.0, 10.0), (0.0, 10.0), n, n).unwrap();
    assert_eq!(map.len(), n);

    for iy in 0..n {
        for ix in 0..n {
            // (x, y) -> (10 - y, x): column index from the flipped row.
            let (jx, jy) = (n - 1 - iy, ix);
            match (map[iy][ix], map[jy][jx]) {
                (Some(a), Some(b)) => assert_relative_eq!(a, b, max_relative = 1e-9),
                (None, None) => {}
                (a, b) => panic!("asymmetric degeneracy at ({ix},{iy}): {a:?} vs {b:?}"),
            }
            if let Some(v) = map[iy][ix] {
                assert!(v > 0.0 && v.is_finite());
            }
        }
    }
}

#[test]
fn pdop_map_validates_bounds_and_resolution() {
    let geometry = square_geometry();
    assert!(pdop_map(&geometry, (0.0, 10.0), (0.0, 10.0), 0, 5).is_err());
    assert!(pdop_map(&geometry, (10.0, 0.0), (0.0, 10.0), 5, 5).is_err());
    assert!(pdop_map(&geometry, (0.0, 10.0), (0.0, f64::NAN), 5, 5).is_err());
}

#[test]
fn good_geometry_beats_a_flat_one() {
    // A query surrounded by anchors resolves both coordinates; the same
    // query far outside the hull dilutes.
    let geometry = square_geometry();
    let inside = pdop(&geometry, Point::new(5.0, 5.0)).unwrap();
    let outside = pdop(&geometry, Point::new(5.0, 80.0)).unwrap();
    assert!(outside > inside);
}
