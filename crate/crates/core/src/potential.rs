//! Harmonic log-distance potentials in the point world, the squashed
//! forest potential obtained by pulling back through the diffeomorphism
//! chain, and the weight feasibility region.

use crate::transform::{DiffeoChain, PointWorld, TransformError};
use crate::Vec2;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PotentialError {
    #[error("evaluation point within {tol:.0e} of {what}")]
    SingularPoint { what: &'static str, tol: f64 },
    #[error("weights must match obstacle count: {weights} weights, {obstacles} obstacles")]
    DimensionMismatch { weights: usize, obstacles: usize },
    #[error(transparent)]
    Transform(#[from] TransformError),
}

const SINGULAR_TOL: f64 = 1e-12;

/// Goal and per-obstacle weights of the harmonic potential.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    pub goal_weight: f64,
    pub obstacle_weights: Vec<f64>,
}

impl WeightVector {
    pub fn new(goal_weight: f64, obstacle_weights: Vec<f64>) -> Self {
        Self {
            goal_weight,
            obstacle_weights,
        }
    }

    /// Default initialization: 1.0 per obstacle, goal weight 12 (raised when
    /// many obstacles would make 12 infeasible).
    pub fn default_for(obstacle_count: usize, margin: f64) -> Self {
        let needed = obstacle_count as f64 + 1.0 + 2.0 * margin;
        Self::new(12.0_f64.max(needed), vec![1.0; obstacle_count])
    }

    pub fn len(&self) -> usize {
        self.obstacle_weights.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Flat view [w_g, w_1, ..., w_M] used by the optimizer.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        v.push(self.goal_weight);
        v.extend_from_slice(&self.obstacle_weights);
        v
    }

    pub fn from_flat(flat: &[f64]) -> Self {
        assert!(!flat.is_empty());
        Self::new(flat[0], flat[1..].to_vec())
    }
}

/// Strict feasibility with margin: every entry at least `margin` and
/// `goal_weight - sum(obstacle_weights) >= 1 + margin`.
pub fn is_feasible(w: &WeightVector, margin: f64) -> bool {
    debug_assert!(margin >= 0.0);
    let sum: f64 = w.obstacle_weights.iter().sum();
    w.goal_weight >= margin
        && w.obstacle_weights.iter().all(|&wi| wi >= margin)
        && w.goal_weight - sum >= 1.0 + margin
}

fn check_dims(world: &PointWorld, w: &WeightVector) -> Result<(), PotentialError> {
    if w.obstacle_weights.len() != world.points.len() {
        return Err(PotentialError::DimensionMismatch {
            weights: w.obstacle_weights.len(),
            obstacles: world.points.len(),
        });
    }
    Ok(())
}

/// `w_g ln|q - q_g|^2 - sum_i w_i ln|q - P_i|^2`.
pub fn point_potential(
    world: &PointWorld,
    w: &WeightVector,
    q: Vec2,
) -> Result<f64, PotentialError> {
    check_dims(world, w)?;
    let dg = (q - world.goal).norm();
    if dg < SINGULAR_TOL {
        return Err(PotentialError::SingularPoint {
            what: "the goal",
            tol: SINGULAR_TOL,
        });
    }
    let mut value = 2.0 * w.goal_weight * dg.ln();
    for (p, &wi) in world.points.iter().zip(&w.obstacle_weights) {
        let d = (q - p).norm();
        if d < SINGULAR_TOL {
            return Err(PotentialError::SingularPoint {
                what: "a point obstacle",
                tol: SINGULAR_TOL,
            });
        }
        value -= 2.0 * wi * d.ln();
    }
    Ok(value)
}

/// Analytic gradient of [`point_potential`].
pub fn point_gradient(
    world: &PointWorld,
    w: &WeightVector,
    q: Vec2,
) -> Result<Vec2, PotentialError> {
    check_dims(world, w)?;
    let dg = q - world.goal;
    let ng2 = dg.norm_squared();
    if ng2 < SINGULAR_TOL * SINGULAR_TOL {
        return Err(PotentialError::SingularPoint {
            what: "the goal",
            tol: SINGULAR_TOL,
        });
    }
    let mut grad = dg * (2.0 * w.goal_weight / ng2);
    for (p, &wi) in world.points.iter().zip(&w.obstacle_weights) {
        let d = q - p;
        let n2 = d.norm_squared();
        if n2 < SINGULAR_TOL * SINGULAR_TOL {
            return Err(PotentialError::SingularPoint {
                what: "a point obstacle",
                tol: SINGULAR_TOL,
            });
        }
        grad -= d * (2.0 * wi / n2);
    }
    Ok(grad)
}

/// Logistic squashing with overflow-safe clamping.
fn squash(x: f64) -> f64 {
    let x = x.clamp(-500.0, 500.0);
    let e = x.exp();
    e / (e + 1.0)
}

fn squash_derivative(x: f64) -> f64 {
    let s = squash(x);
    s * (1.0 - s)
}

/// Forest potential: logistic squashing of the point potential pulled back
/// through the chain. Values lie in (0, 1).
pub fn forest_potential(
    chain: &DiffeoChain,
    w: &WeightVector,
    p: Vec2,
) -> Result<f64, PotentialError> {
    let world = chain.point_world();
    let q = chain.map_point(p)?;
    Ok(squash(point_potential(&world, w, q)?))
}

/// Chain-rule gradient of [`forest_potential`]: `sigma' * J_Phi^T grad`.
pub fn forest_gradient(
    chain: &DiffeoChain,
    w: &WeightVector,
    p: Vec2,
) -> Result<Vec2, PotentialError> {
    let world = chain.point_world();
    let q = chain.map_point(p)?;
    let j = chain.map_jacobian_unchecked(p);
    let g = point_gradient(&world, w, q)?;
    let phi = point_potential(&world, w, q)?;
    Ok(j.transpose() * g * squash_derivative(phi))
}
