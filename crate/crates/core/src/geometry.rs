//! Planar geometry: positions, ranges, times of flight, tag kinematics.
//!
//! Everything is strictly 2-D. Positions are meters, velocities m/s.

use serde::{Deserialize, Serialize};

use crate::clocks::ClockModel;
use crate::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// 2-D point, displacement, or velocity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y).sqrt()
    }
}

impl std::ops::Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl std::ops::Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl std::ops::Mul<f64> for Point {
    type Output = Point;
    fn mul(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }
}

/// Euclidean distance in meters.
pub fn distance(p: Point, q: Point) -> f64 {
    (p - q).norm()
}

/// Time of flight between two points at propagation speed `c`.
pub fn tof(p: Point, q: Point, c: f64) -> f64 {
    distance(p, q) / c
}

/// Fixed infrastructure: a master plus surveyed anchors and the propagation
/// speed. Anchor ids are indices into `anchors`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkGeometry {
    pub master: Point,
    pub anchors: Vec<Point>,
    pub c: f64,
}

impl NetworkGeometry {
    /// Validates: at least 3 anchors, all nodes finite and pairwise
    /// distinct, c > 0.
    pub fn new(master: Point, anchors: Vec<Point>, c: f64) -> Result<Self> {
        if anchors.len() < 3 {
            return Err(Error::InvalidGeometry("need at least 3 anchors for 2-D solving"));
        }
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::InvalidGeometry("propagation speed must be positive"));
        }
        if !master.is_finite() || anchors.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidGeometry("all positions must be finite"));
        }
        let mut nodes = vec![master];
        nodes.extend(anchors.iter().copied());
        for i in 0..nodes.len() {
            for j in (i + 1)..nodes.len() {
                if distance(nodes[i], nodes[j]) == 0.0 {
                    return Err(Error::InvalidGeometry("coincident nodes"));
                }
            }
        }
        Ok(NetworkGeometry { master, anchors, c })
    }

    /// Master-to-anchor time of flight.
    pub fn master_tof(&self, anchor: usize) -> f64 {
        tof(self.master, self.anchors[anchor], self.c)
    }

    /// Range difference ‖p − anchor‖ − ‖p − master‖ at a query point.
    pub fn range_diff(&self, anchor: usize, p: Point) -> f64 {
        distance(p, self.anchors[anchor]) - distance(p, self.master)
    }
}

/// Mobile node: position, constant velocity, local clock.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TagState {
    pub position: Point,
    pub velocity: Point,
    pub clock: ClockModel,
}

impl TagState {
    /// State after coasting for `dt` at constant velocity.
    pub fn propagate(&self, dt: f64) -> TagState {
        TagState { position: self.position_at(dt), velocity: self.velocity, clock: self.clock }
    }

    /// Position after coasting for `dt`.
    pub fn position_at(&self, dt: f64) -> Point {
        self.position + self.velocity * dt
    }
}

/// Interval certain to contain the tag-to-anchor time of flight after the
/// tag moves for `dt`: current tof widened by the worst-case displacement
/// ‖dt·v‖/c on both sides.
pub fn tof_motion_bound(tag: &TagState, anchor: Point, dt: f64, c: f64) -> (f64, f64) {
    let base = tof(tag.position, anchor, c);
    let d = (tag.velocity * dt).norm();
    (base - d / c, base + d / c)
}
