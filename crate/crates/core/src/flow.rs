//! Gradient-descent path integration in the point world and the forest
//! world: unit-speed RK4 on the negated potential gradient, with seeded
//! saddle-escape perturbations and goal-convergence detection.

use crate::potential::{self, PotentialError, WeightVector};
use crate::transform::{DiffeoChain, PointWorld, TransformError};
use crate::Vec2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("weights infeasible for margin {margin}")]
    InfeasibleWeights { margin: f64 },
    #[error("start point is singular (coincides with goal or an obstacle)")]
    SingularStart,
    #[error(transparent)]
    OutsideFreeSpace(#[from] TransformError),
}

/// Which world a polyline lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorldTag {
    Forest,
    Point,
}

/// A sampled path with normalized arc-length parameterization.
#[derive(Debug, Clone, PartialEq)]
pub struct PathPolyline {
    pub samples: Vec<Vec2>,
    pub times: Vec<f64>,
    pub converged: bool,
    pub world_tag: WorldTag,
}

impl PathPolyline {
    pub fn start(&self) -> Vec2 {
        self.samples[0]
    }

    pub fn end(&self) -> Vec2 {
        *self.samples.last().unwrap()
    }

    pub fn arc_length(&self) -> f64 {
        self.samples
            .windows(2)
            .map(|w| (w[1] - w[0]).norm())
            .sum()
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct IntegrationConfig {
    /// RK4 step in workspace units (unit-speed flow).
    pub step: f64,
    /// Goal ball radius that counts as convergence.
    pub goal_tol: f64,
    pub max_steps: usize,
    /// Gradient norm below which the flow is considered stuck at a saddle.
    pub saddle_tol: f64,
    /// Magnitude of the saddle-escape perturbation.
    pub saddle_kick: f64,
    pub seed: u64,
}

impl Default for IntegrationConfig {
    fn default() -> Self {
        Self {
            step: 0.01,
            goal_tol: 0.05,
            max_steps: 100_000,
            saddle_tol: 1e-8,
            saddle_kick: 1e-4,
            seed: 0,
        }
    }
}

/// Deterministic pseudo-random kick away from a saddle. Points with
/// gradient norm at or above `saddle_tol` are returned unchanged.
pub fn escape_saddle(
    q: Vec2,
    grad_norm: f64,
    cfg: &IntegrationConfig,
    rng: &mut impl Rng,
) -> Vec2 {
    if grad_norm >= cfg.saddle_tol {
        return q;
    }
    let angle = rng.gen::<f64>() * std::f64::consts::TAU;
    q + Vec2::new(angle.cos(), angle.sin()) * cfg.saddle_kick
}

fn finish(
    samples: Vec<Vec2>,
    converged: bool,
    world_tag: WorldTag,
) -> PathPolyline {
    let mut samples = samples;
    if samples.len() < 2 {
        let p = samples[0];
        samples.push(p);
    }
    let mut arc = Vec::with_capacity(samples.len());
    arc.push(0.0);
    for w in samples.windows(2) {
        arc.push(arc.last().unwrap() + (w[1] - w[0]).norm());
    }
    let total = *arc.last().unwrap();
    let n = samples.len();
    let times: Vec<f64> = if total > 0.0 {
        // Tiny linear ramp keeps times strictly increasing even across
        // repeated samples; endpoints stay exactly 0 and 1.
        arc.iter()
            .enumerate()
            .map(|(i, &a)| {
                (1.0 - 1e-9) * (a / total) + 1e-9 * i as f64 / (n - 1) as f64
            })
            .collect()
    } else {
        (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
    };
    PathPolyline {
        samples,
        times,
        converged,
        world_tag,
    }
}

/// Core unit-speed RK4 driver over an arbitrary gradient field. `step_for`
/// returns the step length to attempt from a point given the unit flow
/// direction there (at most `cfg.step`); proposed samples rejected by
/// `valid` trigger further step halving. Both guards exist because the
/// diffeomorphism chain distorts length scales by orders of magnitude: a
/// full step would jump across the thin repulsive layer at an obstacle
/// boundary or overshoot a trajectory hugging the workspace boundary.
fn integrate<F, S, V>(
    start: Vec2,
    goal: Vec2,
    cfg: &IntegrationConfig,
    world_tag: WorldTag,
    mut gradient: F,
    mut step_for: S,
    mut valid: V,
) -> Result<PathPolyline, FlowError>
where
    F: FnMut(Vec2) -> Result<Vec2, FlowError>,
    S: FnMut(Vec2, Vec2) -> f64,
    V: FnMut(Vec2) -> bool,
{
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut q = start;
    let mut samples = vec![q];
    if (q - goal).norm() < cfg.goal_tol {
        return Ok(finish(samples, true, world_tag));
    }
    let dir = |g: Vec2| {
        let n = g.norm();
        if n > 0.0 {
            -g / n
        } else {
            Vec2::zeros()
        }
    };
    let mut converged = false;
    for _ in 0..cfg.max_steps {
        let g0 = gradient(q)?;
        if g0.norm() < cfg.saddle_tol {
            let kicked = escape_saddle(q, g0.norm(), cfg, &mut rng);
            if valid(kicked) {
                q = kicked;
                samples.push(q);
            }
            continue;
        }
        let mut h = step_for(q, dir(g0)).min(cfg.step);
        let mut next = None;
        for _ in 0..40 {
            let k1 = dir(g0);
            let k2 = dir(gradient(q + k1 * (h / 2.0))?);
            let k3 = dir(gradient(q + k2 * (h / 2.0))?);
            let k4 = dir(gradient(q + k3 * h)?);
            let cand = q + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            if valid(cand) {
                next = Some(cand);
                break;
            }
            h /= 2.0;
        }
        let Some(nq) = next else {
            break; // pinned against a boundary: report non-convergence
        };
        q = nq;
        samples.push(q);
        if (q - goal).norm() < cfg.goal_tol {
            converged = true;
            break;
        }
    }
    Ok(finish(samples, converged, world_tag))
}

/// Gradient descent of the point-world potential from `q_start`.
pub fn integrate_point_path(
    world: &PointWorld,
    w: &WeightVector,
    q_start: Vec2,
    cfg: &IntegrationConfig,
) -> Result<PathPolyline, FlowError> {
    if !potential::is_feasible(w, 0.0) {
        return Err(FlowError::InfeasibleWeights { margin: 0.0 });
    }
    let singular = (q_start - world.goal).norm() < 1e-12
        || world.points.iter().any(|p| (q_start - p).norm() < 1e-12);
    if singular {
        return Err(FlowError::SingularStart);
    }
    integrate(
        q_start,
        world.goal,
        cfg,
        WorldTag::Point,
        |q| {
            potential::point_gradient(world, w, q).map_err(|e| match e {
                PotentialError::SingularPoint { .. } => FlowError::SingularStart,
                PotentialError::Transform(t) => FlowError::OutsideFreeSpace(t),
                PotentialError::DimensionMismatch { .. } => FlowError::SingularStart,
            })
        },
        |_, _| cfg.step,
        |q| world.points.iter().all(|p| (q - p).norm() > 0.0),
    )
}

/// Gradient descent of the forest potential from `p_start`. Every recorded
/// sample is validated against the forest free space.
pub fn integrate_forest_path(
    chain: &DiffeoChain,
    w: &WeightVector,
    p_start: Vec2,
    cfg: &IntegrationConfig,
) -> Result<PathPolyline, FlowError> {
    if !potential::is_feasible(w, 0.0) {
        return Err(FlowError::InfeasibleWeights { margin: 0.0 });
    }
    chain.map_point(p_start)?;
    let world = chain.point_world();
    let goal = chain.forest().goal();
    // Unchecked evaluation inside RK4 stages: intermediate stage points may
    // graze the free-space boundary; only recorded samples are validated.
    // The logistic squashing factor is dropped: it is strictly positive, so
    // the unit-speed flow direction is unchanged, while its magnitude (as
    // small as e^-60 far from the goal) would defeat the saddle test.
    let path = integrate(
        p_start,
        goal,
        cfg,
        WorldTag::Forest,
        |p| {
            let mut q = chain.map_point_unchecked(p);
            // Free-space points hugging an obstacle boundary land within
            // rounding of the collapsed marker; evaluate on a tiny shell
            // around it instead (the direction is all that matters here).
            for &m in &world.points {
                let d = q - m;
                let n = d.norm();
                if n < 1e-9 {
                    q = if n > 0.0 { m + d * (1e-9 / n) } else { m + Vec2::new(1e-9, 0.0) };
                }
            }
            let j = chain.map_jacobian_unchecked(p);
            let g = potential::point_gradient(&world, w, q).map_err(|e| match e {
                PotentialError::Transform(t) => FlowError::OutsideFreeSpace(t),
                _ => FlowError::SingularStart,
            })?;
            // Pull the point-world *velocity* back (J^-1 g) rather than the
            // covector (J^T g): the image of this flow is exactly the
            // point-world gradient flow, so it inherits its convergence and
            // homotopy class, and it still strictly descends the composed
            // potential. The covector flow has the same critical points but
            // zigzags in the exponentially thin valleys along obstacle
            // boundaries where the chain compresses space, stalling there.
            Ok(j.lu().solve(&g).unwrap_or_else(|| j.transpose() * g))
        },
        |p, d| {
            // Keep the image step resolved: where the chain stretches space
            // (near the workspace boundary) a nominal step would sweep the
            // image across a large fraction of the point world. Bound the
            // image displacement by a fraction of the distance to the
            // nearest point-world feature (the log potential's length scale).
            let q = chain.map_point_unchecked(p);
            let gain = (chain.map_jacobian_unchecked(p) * d).norm();
            let scale = world
                .points
                .iter()
                .map(|m| (q - m).norm())
                .fold((q - world.goal).norm(), f64::min)
                .max(1e-6);
            if gain > 0.0 {
                cfg.step.min(0.1 * scale / gain)
            } else {
                cfg.step
            }
        },
        |p| chain.forest().free_space_margin(p) >= 0.0,
    )?;
    for (i, &p) in path.samples.iter().enumerate() {
        let margin = chain.forest().free_space_margin(p);
        if margin < -1e-9 {
            return Err(FlowError::OutsideFreeSpace(
                TransformError::OutsideFreeSpace {
                    index: Some(i),
                    margin,
                },
            ));
        }
    }
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn empty_point_world() -> PointWorld {
        PointWorld::new(vec![], Vec2::new(-3.0, 0.0), Vec2::new(3.0, 0.0), Vec2::zeros(), 10.0)
    }

    #[test]
    fn empty_world_converges_straight() {
        let world = empty_point_world();
        let w = WeightVector::new(2.0, vec![]);
        let cfg = IntegrationConfig::default();
        let path = integrate_point_path(&world, &w, world.start, &cfg).unwrap();
        assert!(path.converged);
        // Single attractor: path stays on the start-goal line.
        for p in &path.samples {
            assert!(p.y.abs() < 1e-9);
        }
        assert!((path.end() - world.goal).norm() < cfg.goal_tol);
    }

    #[test]
    fn start_inside_goal_ball_is_trivial_path() {
        let world = empty_point_world();
        let w = WeightVector::new(2.0, vec![]);
        let cfg = IntegrationConfig::default();
        let start = world.goal + Vec2::new(cfg.goal_tol / 2.0, 0.0);
        let path = integrate_point_path(&world, &w, start, &cfg).unwrap();
        assert!(path.converged);
        assert_eq!(path.samples.len(), 2);
        assert_eq!(path.times, vec![0.0, 1.0]);
    }

    #[test]
    fn detour_side_matches_start_offset() {
        // Obstacle on the start-goal segment: perpendicular offset decides
        // the detour side.
        let mut world = empty_point_world();
        world.points = vec![Vec2::new(0.0, 0.0)];
        let w = WeightVector::new(4.0, vec![1.0]);
        let cfg = IntegrationConfig::default();
        for side in [1.0, -1.0] {
            let start = Vec2::new(-3.0, 0.3 * side);
            let path = integrate_point_path(&world, &w, start, &cfg).unwrap();
            assert!(path.converged, "side {side} failed to converge");
            let max_y = path
                .samples
                .iter()
                .map(|p| p.y * side)
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(max_y > 0.0, "detour did not stay on start side");
            let min_clear = path
                .samples
                .iter()
                .map(|p| p.norm())
                .fold(f64::INFINITY, f64::min);
            assert!(min_clear > 0.0);
        }
    }

    #[test]
    fn times_are_normalized_arc_length() {
        let world = empty_point_world();
        let w = WeightVector::new(2.0, vec![]);
        let path =
            integrate_point_path(&world, &w, world.start, &IntegrationConfig::default()).unwrap();
        assert_relative_eq!(path.times[0], 0.0);
        assert_relative_eq!(*path.times.last().unwrap(), 1.0);
        for t in path.times.windows(2) {
            assert!(t[1] > t[0]);
        }
        // Mid-sample time equals its arc-length fraction.
        let k = path.samples.len() / 2;
        let partial: f64 = path.samples[..=k]
            .windows(2)
            .map(|w| (w[1] - w[0]).norm())
            .sum();
        assert_relative_eq!(path.times[k], partial / path.arc_length(), epsilon = 1e-9);
    }

    #[test]
    fn infeasible_weights_rejected() {
        let world = empty_point_world();
        let w = WeightVector::new(0.5, vec![]);
        assert!(matches!(
            integrate_point_path(&world, &w, world.start, &IntegrationConfig::default()),
            Err(FlowError::InfeasibleWeights { .. })
        ));
    }

    #[test]
    fn escape_saddle_is_deterministic_and_gated() {
        let cfg = IntegrationConfig::default();
        let q = Vec2::new(1.0, 2.0);
        assert_eq!(escape_saddle(q, 1.0, &cfg, &mut ChaCha8Rng::seed_from_u64(0)), q);
        let mut r1 = ChaCha8Rng::seed_from_u64(7);
        let mut r2 = ChaCha8Rng::seed_from_u64(7);
        let a = escape_saddle(q, 0.0, &cfg, &mut r1);
        let b = escape_saddle(q, 0.0, &cfg, &mut r2);
        assert_eq!(a, b);
        assert_relative_eq!((a - q).norm(), cfg.saddle_kick, epsilon = 1e-15);
        // Successive draws differ.
        let c = escape_saddle(q, 0.0, &cfg, &mut r1);
        assert_ne!(a, c);
    }

    #[test]
    fn symmetric_saddle_is_escaped() {
        // Two obstacles symmetric about the x-axis, start on the axis: the
        // axis is a stable manifold of a saddle between them.
        let mut world = empty_point_world();
        world.points = vec![Vec2::new(0.0, 1.0), Vec2::new(0.0, -1.0)];
        let w = WeightVector::new(4.0, vec![1.0, 1.0]);
        let cfg = IntegrationConfig {
            max_steps: 200_000,
            ..IntegrationConfig::default()
        };
        let path = integrate_point_path(&world, &w, world.start, &cfg).unwrap();
        assert!(path.converged);
    }

    #[test]
    fn monotone_descent_of_potential() {
        let mut world = empty_point_world();
        world.points = vec![Vec2::new(0.3, 0.4)];
        let w = WeightVector::new(4.0, vec![1.0]);
        let path =
            integrate_point_path(&world, &w, world.start, &IntegrationConfig::default()).unwrap();
        let mut prev = f64::INFINITY;
        for &q in &path.samples {
            let v = potential::point_potential(&world, &w, q).unwrap();
            assert!(v <= prev + 1e-9);
            prev = v;
        }
    }
}
