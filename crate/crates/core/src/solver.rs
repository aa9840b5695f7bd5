//! Hyperbolic multilateration and dilution-of-precision analytics.
//!
//! Each range-difference measurement constrains the tag to a hyperbola
//! with the anchor and the master as foci. The solver fits the tag
//! position by damped Gauss-Newton iteration on the weighted residuals,
//! weighting each measurement by the inverse of its predicted variance
//! when one is attached.

use crate::dtdoa::DtdoaMeasurement;
use crate::geometry::{distance, NetworkGeometry, Point};
use crate::{Error, Result};

/// Options controlling the iterative position fit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveOptions {
    /// Starting point; network centroid when absent.
    pub initial_guess: Option<Point>,
    /// Also try perturbed starts around the base start plus one near each
    /// network node, and keep the best converged fit. Guards against the
    /// mirror-image local minimum of near-collinear geometries.
    pub multi_start: bool,
    pub max_iterations: usize,
    /// Accept convergence when the step norm falls below this, meters.
    pub step_tol: f64,
    /// Accept convergence when the cost gradient falls below this.
    pub grad_tol: f64,
    /// Initial damping factor, scaled against the normal matrix diagonal.
    pub damping: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            initial_guess: None,
            multi_start: true,
            max_iterations: 50,
            step_tol: 1e-10,
            grad_tol: 1e-12,
            damping: 1e-3,
        }
    }
}

/// A fitted tag position with quality metrics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PositionFix {
    pub position: Point,
    /// Square root of the weighted sum of squared residuals at the fit.
    pub residual_norm: f64,
    pub iterations: usize,
    /// First-order position covariance, inverse of the weighted normal
    /// matrix; meters squared.
    pub covariance: [[f64; 2]; 2],
    /// Dilution of precision of the full network at the fit, NaN when the
    /// fit coincides with a node.
    pub pdop: f64,
    pub converged: bool,
}

/// Direction from `from` toward `p`, zero when they coincide.
fn unit_toward(p: Point, from: Point) -> (f64, f64) {
    let d = distance(p, from);
    if d == 0.0 {
        (0.0, 0.0)
    } else {
        ((p.x - from.x) / d, (p.y - from.y) / d)
    }
}

/// Jacobian row of the range-difference model at `p` for one anchor.
fn model_gradient(geometry: &NetworkGeometry, anchor: usize, p: Point) -> (f64, f64) {
    let (ax, ay) = unit_toward(p, geometry.anchors[anchor]);
    let (mx, my) = unit_toward(p, geometry.master);
    (ax - mx, ay - my)
}

struct NormalSystem {
    a: [[f64; 2]; 2],
    g: [f64; 2],
    cost: f64,
}

fn build_system(
    geometry: &NetworkGeometry,
    measurements: &[DtdoaMeasurement],
    weights: &[f64],
    p: Point,
) -> NormalSystem {
    let mut a = [[0.0; 2]; 2];
    let mut g = [0.0; 2];
    let mut cost = 0.0;
    for (m, &w) in measurements.iter().zip(weights) {
        let r = m.value - geometry.range_diff(m.anchor_id, p);
        let (jx, jy) = model_gradient(geometry, m.anchor_id, p);
        a[0][0] += w * jx * jx;
        a[0][1] += w * jx * jy;
        a[1][0] += w * jy * jx;
        a[1][1] += w * jy * jy;
        g[0] += w * jx * r;
        g[1] += w * jy * r;
        cost += w * r * r;
    }
    NormalSystem { a, g, cost }
}

fn solve2(a: [[f64; 2]; 2], b: [f64; 2]) -> Option<(f64, f64)> {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let scale = a[0][0].abs().max(a[1][1].abs()).max(a[0][1].abs()).max(a[1][0].abs());
    if det.abs() <= f64::EPSILON * scale * scale * 16.0 || det == 0.0 {
        return None;
    }
    Some(((a[1][1] * b[0] - a[0][1] * b[1]) / det, (a[0][0] * b[1] - a[1][0] * b[0]) / det))
}

fn invert2(a: [[f64; 2]; 2]) -> Option<[[f64; 2]; 2]> {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let scale = a[0][0].abs().max(a[1][1].abs()).max(a[0][1].abs()).max(a[1][0].abs());
    if det.abs() <= f64::EPSILON * scale * scale * 16.0 || det == 0.0 {
        return None;
    }
    Some([[a[1][1] / det, -a[0][1] / det], [-a[1][0] / det, a[0][0] / det]])
}

struct StartResult {
    position: Point,
    cost: f64,
    iterations: usize,
    converged: bool,
}

fn run_start(
    geometry: &NetworkGeometry,
    measurements: &[DtdoaMeasurement],
    weights: &[f64],
    start: Point,
    opts: &SolveOptions,
) -> StartResult {
    let mut p = start;
    let mut damping = opts.damping;
    let mut sys = build_system(geometry, measurements, weights, p);
    let mut converged = false;
    let mut iterations = 0;
    for iter in 1..=opts.max_iterations {
        iterations = iter;
        if sys.g[0].abs().max(sys.g[1].abs()) < opts.grad_tol {
            converged = true;
            break;
        }
        let damped = [
            [sys.a[0][0] * (1.0 + damping), sys.a[0][1]],
            [sys.a[1][0], sys.a[1][1] * (1.0 + damping)],
        ];
        let step = match solve2(damped, sys.g) {
            Some(s) => s,
            None => {
                damping = (damping * 10.0).min(1e12);
                continue;
            }
        };
        let candidate = Point::new(p.x + step.0, p.y + step.1);
        let cand_sys = build_system(geometry, measurements, weights, candidate);
        if cand_sys.cost <= sys.cost {
            p = candidate;
            sys = cand_sys;
            damping = (damping / 10.0).max(1e-12);
            if (step.0 * step.0 + step.1 * step.1).sqrt() < opts.step_tol {
                converged = true;
                break;
            }
        } else {
            damping *= 10.0;
            if damping > 1e12 {
                break;
            }
        }
    }
    StartResult { position: p, cost: sys.cost, iterations, converged }
}

/// Fits the tag position to a set of range-difference measurements.
///
/// Needs at least two measurements with valid anchor ids. Measurements
/// carrying a positive `predicted_variance` are weighted by its inverse;
/// the rest get unit weight.
pub fn solve(
    geometry: &NetworkGeometry,
    measurements: &[DtdoaMeasurement],
    opts: &SolveOptions,
) -> Result<PositionFix> {
    if measurements.len() < 2 {
        return Err(Error::Degenerate("need at least two measurements for a 2D fix"));
    }
    for m in measurements {
        if m.anchor_id >= geometry.anchors.len() {
            return Err(Error::InvalidConfig(format!(
                "measurement references anchor {} but the network has {}",
                m.anchor_id,
                geometry.anchors.len()
            )));
        }
        if !m.value.is_finite() {
            return Err(Error::InvalidConfig("non-finite measurement value".into()));
        }
    }
    let weights: Vec<f64> = measurements
        .iter()
        .map(|m| match m.predicted_variance {
            Some(v) if v > 0.0 && v.is_finite() => 1.0 / v,
            _ => 1.0,
        })
        .collect();

    let base = opts.initial_guess.unwrap_or_else(|| {
        let mut c = geometry.master;
        for a in &geometry.anchors {
            c = c + *a;
        }
        c * (1.0 / (geometry.anchors.len() + 1) as f64)
    });
    let mut starts = vec![base];
    if opts.multi_start {
        let xs: Vec<f64> = geometry
            .anchors
            .iter()
            .chain(std::iter::once(&geometry.master))
            .map(|p| p.x)
            .collect();
        let ys: Vec<f64> = geometry
            .anchors
            .iter()
            .chain(std::iter::once(&geometry.master))
            .map(|p| p.y)
            .collect();
        let span = |v: &[f64]| {
            let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if hi > lo {
                hi - lo
            } else {
                1.0
            }
        };
        let dx = 0.25 * span(&xs);
        let dy = 0.25 * span(&ys);
        starts.push(Point::new(base.x + dx, base.y));
        starts.push(Point::new(base.x - dx, base.y));
        starts.push(Point::new(base.x, base.y + dy));
        starts.push(Point::new(base.x, base.y - dy));
        for node in geometry.anchors.iter().chain(std::iter::once(&geometry.master)) {
            // Nudged off the node itself, where the range gradient is undefined.
            starts.push(*node + (base - *node) * 0.1);
        }
    }

    let mut best: Option<StartResult> = None;
    for start in starts {
        let result = run_start(geometry, measurements, &weights, start, opts);
        let better = match &best {
            None => true,
            Some(b) => {
                (result.converged && !b.converged) || (result.converged == b.converged && result.cost < b.cost)
            }
        };
        if better {
            best = Some(result);
        }
    }
    let best = best.expect("at least one start");
    if !best.converged {
        return Err(Error::NoConvergence { iterations: best.iterations });
    }

    let sys = build_system(geometry, measurements, &weights, best.position);
    let covariance = invert2(sys.a)
        .ok_or(Error::Degenerate("normal matrix is singular at the solution"))?;
    let pdop = pdop(geometry, best.position).unwrap_or(f64::NAN);
    Ok(PositionFix {
        position: best.position,
        residual_norm: sys.cost.sqrt(),
        iterations: best.iterations,
        covariance,
        pdop,
        converged: true,
    })
}

/// Position dilution of precision of the full network at `p`: the root
/// trace of the inverse unweighted normal matrix of the range-difference
/// model. Fails when `p` coincides with a node or the geometry row space
/// collapses.
pub fn pdop(geometry: &NetworkGeometry, p: Point) -> Result<f64> {
    if distance(p, geometry.master) == 0.0 {
        return Err(Error::Degenerate("evaluation point coincides with the master"));
    }
    for a in &geometry.anchors {
        if distance(p, *a) == 0.0 {
            return Err(Error::Degenerate("evaluation point coincides with an anchor"));
        }
    }
    let mut g = [[0.0; 2]; 2];
    for anchor in 0..geometry.anchors.len() {
        let (jx, jy) = model_gradient(geometry, anchor, p);
        g[0][0] += jx * jx;
        g[0][1] += jx * jy;
        g[1][0] += jy * jx;
        g[1][1] += jy * jy;
    }
    let inv = invert2(g).ok_or(Error::Degenerate("geometry matrix is singular"))?;
    let trace = inv[0][0] + inv[1][1];
    if !(trace >= 0.0) {
        return Err(Error::Degenerate("geometry matrix is not positive definite"));
    }
    Ok(trace.sqrt())
}

/// Samples the dilution of precision on a regular grid over the given
/// bounds. The result is row-major with `grid[iy][ix]`, y ascending;
/// degenerate points are `None`. A single-cell axis samples the bound
/// midpoint.
pub fn pdop_map(
    geometry: &NetworkGeometry,
    x_bounds: (f64, f64),
    y_bounds: (f64, f64),
    nx: usize,
    ny: usize,
) -> Result<Vec<Vec<Option<f64>>>> {
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidConfig("grid must have at least one cell per axis".into()));
    }
    if !(x_bounds.0 <= x_bounds.1) || !(y_bounds.0 <= y_bounds.1) {
        return Err(Error::InvalidConfig("grid bounds are empty".into()));
    }
    let coord = |lo: f64, hi: f64, i: usize, n: usize| {
        if n == 1 {
            0.5 * (lo + hi)
        } else {
            lo + (hi - lo) * i as f64 / (n - 1) as f64
        }
    };
    let mut rows = Vec::with_capacity(ny);
    for iy in 0..ny {
        let y = coord(y_bounds.0, y_bounds.1, iy, ny);
        let mut row = Vec::with_capacity(nx);
        for ix in 0..nx {
            let x = coord(x_bounds.0, x_bounds.1, ix, nx);
            row.push(pdop(geometry, Point::new(x, y)).ok());
        }
        rows.push(row);
    }
    Ok(rows)
}
