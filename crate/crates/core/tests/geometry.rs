//! Planar geometry primitives: distances, times of flight, tag motion, and
//! network validation.

use approx::assert_relative_eq;
use dtdoa_core::clocks::ClockModel;
use dtdoa_core::geometry::{
    distance, tof, tof_motion_bound, NetworkGeometry, Point, TagState, SPEED_OF_LIGHT,
};
use dtdoa_core::rng::substream;
use dtdoa_core::Error;
use proptest::prelude::*;
use rand::Rng;

#[test]
fn distance_examples() {
    assert_eq!(distance(Point::new(0.0, 0.0), Point::new(0.0, 0.0)), 0.0);
    assert_eq!(distance(Point::new(0.0, 0.0), Point::new(3.0, 4.0)), 5.0);
    assert_eq!(distance(Point::new(1.0, 1.0), Point::new(4.0, 5.0)), 5.0);
}

#[test]
fn time_of_flight_examples() {
    let p = Point::new(0.0, 0.0);
    assert_relative_eq!(
        tof(p, Point::new(299.792458, 0.0), SPEED_OF_LIGHT),
        1e-6,
        max_relative = 1e-12
    );
    assert_eq!(tof(p, p, SPEED_OF_LIGHT), 0.0);
    assert_relative_eq!(
        tof(p, Point::new(5.0, 0.0), SPEED_OF_LIGHT),
        1.66782e-8,
        max_relative = 1e-5
    );
}

#[test]
fn tag_propagation_examples() {
    let tag = TagState {
        position: Point::new(0.0, 0.0),
        velocity: Point::new(1.0, 2.0),
        clock: ClockModel::ideal(),
    };
    let p = tag.position_at(0.5);
    assert_eq!(p, Point::new(0.5, 1.0));
    assert_eq!(tag.position_at(0.0), tag.position);

    let parked = TagState {
        position: Point::new(3.0, 4.0),
        velocity: Point::new(0.0, 0.0),
        clock: ClockModel::ideal(),
    };
    assert_eq!(parked.position_at(123.0), parked.position);

    let moved = tag.propagate(0.5);
    assert_eq!(moved.position, Point::new(0.5, 1.0));
    assert_eq!(moved.velocity, tag.velocity);
}

#[test]
fn motion_bound_contains_future_time_of_flight() {
    let tag = TagState {
        position: Point::new(0.0, 0.0),
        velocity: Point::new(1.0, 0.0),
        clock: ClockModel::ideal(),
    };
    let anchor = Point::new(10.0, 0.0);
    let (lo, hi) = tof_motion_bound(&tag, anchor, 1.0, SPEED_OF_LIGHT);
    // Walking straight at the anchor for one second: 9 m left.
    let actual = tof(tag.position_at(1.0), anchor, SPEED_OF_LIGHT);
    assert!(lo <= actual && actual <= hi);
    assert_relative_eq!(actual, 9.0 / SPEED_OF_LIGHT, max_relative = 1e-12);
    assert_relative_eq!(lo, 9.0 / SPEED_OF_LIGHT, max_relative = 1e-12);
    assert_relative_eq!(hi, 11.0 / SPEED_OF_LIGHT, max_relative = 1e-12);
}

#[test]
fn motion_bound_contains_actual_tof_for_random_motion() {
    let mut rng = substream(42, 11);
    for _ in 0..1000 {
        let tag = TagState {
            position: Point::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0)),
            velocity: Point::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)),
            clock: ClockModel::ideal(),
        };
        let anchor = Point::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0));
        let dt = rng.random_range(0.0..2.0);
        let (lo, hi) = tof_motion_bound(&tag, anchor, dt, SPEED_OF_LIGHT);
        let actual = tof(tag.position_at(dt), anchor, SPEED_OF_LIGHT);
        assert!(
            lo - 1e-20 <= actual && actual <= hi + 1e-20,
            "tof {actual} outside [{lo}, {hi}]"
        );
    }
}

#[test]
fn network_validation() {
    let master = Point::new(0.0, 0.0);
    let three = vec![Point::new(10.0, 0.0), Point::new(10.0, 10.0), Point::new(0.0, 10.0)];
    assert!(NetworkGeometry::new(master, three.clone(), SPEED_OF_LIGHT).is_ok());

    let two = vec![Point::new(10.0, 0.0), Point::new(10.0, 10.0)];
    assert!(matches!(
        NetworkGeometry::new(master, two, SPEED_OF_LIGHT),
        Err(Error::InvalidGeometry(_))
    ));

    let mut dup = three.clone();
    dup.push(Point::new(10.0, 0.0));
    assert!(NetworkGeometry::new(master, dup, SPEED_OF_LIGHT).is_err());

    // Master sitting on an anchor is also a coincidence.
    assert!(NetworkGeometry::new(Point::new(10.0, 0.0), three.clone(), SPEED_OF_LIGHT).is_err());

    assert!(NetworkGeometry::new(master, three.clone(), 0.0).is_err());
    assert!(NetworkGeometry::new(master, three.clone(), -1.0).is_err());

    let mut nan = three.clone();
    nan[0] = Point::new(f64::NAN, 0.0);
    assert!(NetworkGeometry::new(master, nan, SPEED_OF_LIGHT).is_err());
}

#[test]
fn range_difference_is_anchor_distance_minus_master_distance() {
    let geo = NetworkGeometry::new(
        Point::new(0.0, 0.0),
        vec![Point::new(10.0, 0.0), Point::new(10.0, 10.0), Point::new(0.0, 10.0)],
        SPEED_OF_LIGHT,
    )
    .unwrap();
    let p = Point::new(2.0, 1.0);
    for (i, a) in geo.anchors.iter().enumerate() {
        let expect = distance(p, *a) - distance(p, geo.master);
        assert_eq!(geo.range_diff(i, p), expect);
    }
    assert_relative_eq!(
        geo.master_tof(0),
        10.0 / SPEED_OF_LIGHT,
        max_relative = 1e-15
    );
}

#[test]
fn point_arithmetic() {
    let a = Point::new(1.0, 2.0);
    let b = Point::new(3.0, -4.0);
    assert_eq!(a + b, Point::new(4.0, -2.0));
    assert_eq!(b - a, Point::new(2.0, -6.0));
    assert_eq!(a * 2.0, Point::new(2.0, 4.0));
    assert_eq!(b.norm(), 5.0);
    assert!(a.is_finite());
    assert!(!Point::new(f64::NAN, 0.0).is_finite());
}

proptest! {
    #[test]
    fn distance_is_symmetric(
        ax in -100.0..100.0f64, ay in -100.0..100.0f64,
        bx in -100.0..100.0f64, by in -100.0..100.0f64,
    ) {
        let a = Point::new(ax, ay);
        let b = Point::new(bx, by);
        prop_assert_eq!(distance(a, b), distance(b, a));
        prop_assert!(distance(a, b) >= 0.0);
    }

    #[test]
    fn distance_satisfies_triangle_inequality(
        ax in -100.0..100.0f64, ay in -100.0..100.0f64,
        bx in -100.0..100.0f64, by in -100.0..100.0f64,
        cx in -100.0..100.0f64, cy in -100.0..100.0f64,
    ) {
        let a = Point::new(ax, ay);
        let b = Point::new(bx, by);
        let c = Point::new(cx, cy);
        // Slack for rounding at the coordinate scale.
        prop_assert!(distance(a, c) <= distance(a, b) + distance(b, c) + 1e-12);
    }

    #[test]
    fn tof_scales_inversely_with_propagation_speed(
        d in 0.1..1000.0f64,
        scale in 0.5..2.0f64,
    ) {
        let p = Point::new(0.0, 0.0);
        let q = Point::new(d, 0.0);
        let base = tof(p, q, SPEED_OF_LIGHT);
        let scaled = tof(p, q, SPEED_OF_LIGHT * scale);
        prop_assert!((scaled * scale - base).abs() <= 1e-15 * base.max(1e-30));
    }
}
