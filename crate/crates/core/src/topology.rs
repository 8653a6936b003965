//! Path topology in the point world: signed-distance signatures built from
//! winding numbers of an explicit closed loop, complex-log H-signatures as
//! the homology oracle, and the candidate signature set enumerating all
//! 2^M sign vectors.

use crate::flow::PathPolyline;
use crate::transform::PointWorld;
use crate::Vec2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("obstacle {index} within {tol:.0e} of the classification loop")]
    ObstacleOnLoop { index: usize, tol: f64 },
    #[error("marker {index} within {tol:.0e} of the path")]
    MarkerOnPath { index: usize, tol: f64 },
    #[error("paths do not share endpoints")]
    EndpointMismatch,
}

const LOOP_TOL: f64 = 1e-9;

/// Signed-distance signature: per-obstacle side of the path and clearance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DSignature {
    pub signs: Vec<i8>,
    pub distances: Vec<f64>,
    pub signed: Vec<f64>,
}

impl DSignature {
    pub fn new(signs: Vec<i8>, distances: Vec<f64>) -> Self {
        debug_assert_eq!(signs.len(), distances.len());
        debug_assert!(signs.iter().all(|&s| s == 1 || s == -1));
        debug_assert!(distances.iter().all(|&d| d >= 0.0));
        let signed = signs
            .iter()
            .zip(&distances)
            .map(|(&s, &d)| s as f64 * d)
            .collect();
        Self {
            signs,
            distances,
            signed,
        }
    }

    pub fn len(&self) -> usize {
        self.signs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signs.is_empty()
    }
}

/// H-signature: one complex winding integral per obstacle marker.
#[derive(Debug, Clone, PartialEq)]
pub struct HSignature {
    pub components: Vec<Complex64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnclosingCircle {
    pub center: Vec2,
    pub radius: f64,
}

/// Circle centered at the start/goal midpoint covering the obstacles,
/// endpoints and every path sample with a 1.2 inflation factor.
pub fn enclosing_circle(world: &PointWorld, path: &PathPolyline) -> EnclosingCircle {
    let center = (world.start + world.goal) * 0.5;
    let mut max_d: f64 = 0.0;
    for &p in world
        .points
        .iter()
        .chain([&world.start, &world.goal])
        .chain(path.samples.iter())
    {
        max_d = max_d.max((p - center).norm());
    }
    EnclosingCircle {
        center,
        radius: 1.2 * max_d,
    }
}

/// Winding number of a closed polyline around `p`. Exact for polylines not
/// passing through `p`: signed subtended angles summed per edge.
fn winding_number(loop_pts: &[Vec2], p: Vec2) -> i32 {
    let mut total = 0.0;
    for w in loop_pts.windows(2) {
        let a = w[0] - p;
        let b = w[1] - p;
        total += (a.x * b.y - a.y * b.x).atan2(a.dot(&b));
    }
    (total / std::f64::consts::TAU).round() as i32
}

/// The closed anticlockwise classification loop: path, ray segment from the
/// goal out to the circle, counterclockwise half-arc, ray segment back to
/// the start.
fn classification_loop(
    world: &PointWorld,
    path: &PathPolyline,
    circle: &EnclosingCircle,
) -> Vec<Vec2> {
    let u = (world.goal - world.start).normalize();
    let qg_prime = circle.center + u * circle.radius;
    let qs_prime = circle.center - u * circle.radius;
    let theta_g = u.y.atan2(u.x);
    let mut pts = path.samples.clone();
    pts.push(qg_prime);
    let arc_samples = 128;
    for k in 1..arc_samples {
        let theta = theta_g + std::f64::consts::PI * k as f64 / arc_samples as f64;
        pts.push(circle.center + Vec2::new(theta.cos(), theta.sin()) * circle.radius);
    }
    pts.push(qs_prime);
    pts.push(path.samples[0]);
    pts
}

fn min_distance_to_polyline(pts: &[Vec2], p: Vec2) -> f64 {
    pts.windows(2)
        .map(|w| point_segment_distance(p, w[0], w[1]))
        .fold(f64::INFINITY, f64::min)
}

pub(crate) fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Per-obstacle sides of the path: +1 iff the obstacle lies in the region
/// enclosed by the anticlockwise classification loop.
pub fn sign_vector(
    world: &PointWorld,
    path: &PathPolyline,
    circle: &EnclosingCircle,
) -> Result<Vec<i8>, TopologyError> {
    let loop_pts = classification_loop(world, path, circle);
    let mut signs = Vec::with_capacity(world.points.len());
    for (i, &p) in world.points.iter().enumerate() {
        if min_distance_to_polyline(&loop_pts, p) < LOOP_TOL {
            return Err(TopologyError::ObstacleOnLoop {
                index: i,
                tol: LOOP_TOL,
            });
        }
        signs.push(if winding_number(&loop_pts, p) != 0 { 1 } else { -1 });
    }
    Ok(signs)
}

/// D-signature of a path: loop-winding signs Hadamard minimal clearances.
pub fn d_signature(world: &PointWorld, path: &PathPolyline) -> Result<DSignature, TopologyError> {
    let circle = enclosing_circle(world, path);
    let signs = sign_vector(world, path, &circle)?;
    let distances = world
        .points
        .iter()
        .map(|&p| min_distance_to_polyline(&path.samples, p))
        .collect();
    Ok(DSignature::new(signs, distances))
}

/// Splits segment a-b (as complex numbers relative to marker zp) until every
/// piece subtends less than pi/2, then sums principal logs — exact branch
/// tracking for polylines.
fn log_increment(a: Complex64, b: Complex64) -> Complex64 {
    let ratio = b / a;
    if ratio.arg().abs() < std::f64::consts::FRAC_PI_2 {
        ratio.ln()
    } else {
        let mid = (a + b) * 0.5;
        log_increment(a, mid) + log_increment(mid, b)
    }
}

/// Complex winding integrals of the path around each point obstacle.
pub fn h_signature(world: &PointWorld, path: &PathPolyline) -> Result<HSignature, TopologyError> {
    let mut components = Vec::with_capacity(world.points.len());
    for (i, &p) in world.points.iter().enumerate() {
        if min_distance_to_polyline(&path.samples, p) < LOOP_TOL {
            return Err(TopologyError::MarkerOnPath {
                index: i,
                tol: LOOP_TOL,
            });
        }
        let zp = Complex64::new(p.x, p.y);
        let mut total = Complex64::new(0.0, 0.0);
        for w in path.samples.windows(2) {
            let a = Complex64::new(w[0].x, w[0].y) - zp;
            let b = Complex64::new(w[1].x, w[1].y) - zp;
            total += log_increment(a, b);
        }
        components.push(total);
    }
    Ok(HSignature { components })
}

/// Homology decision by sign-vector equality (the H-signature equivalence
/// is exercised as a test oracle).
pub fn homologous(
    world: &PointWorld,
    path_a: &PathPolyline,
    path_b: &PathPolyline,
) -> Result<bool, TopologyError> {
    if (path_a.start() - path_b.start()).norm() > 1e-9
        || (path_a.end() - path_b.end()).norm() > 1e-9
    {
        return Err(TopologyError::EndpointMismatch);
    }
    let sa = sign_vector(world, path_a, &enclosing_circle(world, path_a))?;
    let sb = sign_vector(world, path_b, &enclosing_circle(world, path_b))?;
    Ok(sa == sb)
}

/// All 2^M candidate signatures in binary-counter order (+1 for bit 0).
/// Distances pair each obstacle with its closest opposite-signed peer; for
/// uniform sign vectors the fallback is the obstacle's distance to the
/// straight start-goal segment.
pub fn candidate_signatures(world: &PointWorld) -> Vec<DSignature> {
    let m = world.points.len();
    let mut out = Vec::with_capacity(1 << m);
    for code in 0u64..(1u64 << m) {
        let signs: Vec<i8> = (0..m)
            .map(|i| if (code >> i) & 1 == 0 { 1 } else { -1 })
            .collect();
        let distances: Vec<f64> = (0..m)
            .map(|i| {
                let opposite = (0..m)
                    .filter(|&j| signs[j] != signs[i])
                    .map(|j| (world.points[i] - world.points[j]).norm())
                    .fold(f64::INFINITY, f64::min);
                if opposite.is_finite() {
                    opposite
                } else {
                    point_segment_distance(world.points[i], world.start, world.goal)
                }
            })
            .collect();
        out.push(DSignature::new(signs, distances));
    }
    out
}
