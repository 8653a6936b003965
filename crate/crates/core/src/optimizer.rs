//! Structure selection by Fisher distance and projected-gradient weight
//! optimization against a target D-signature, with a finite-difference
//! signature Jacobian obtained from fresh path integrations.

use crate::flow::{self, FlowError, IntegrationConfig};
use crate::geometry::ForestWorld;
use crate::potential::{self, WeightVector};
use crate::topology::{self, DSignature, TopologyError};
use crate::transform::{self, PointWorld, TransformError};
use crate::Vec2;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OptimizerError {
    #[error("initial weights infeasible with margin {margin}")]
    InfeasibleInit { margin: f64 },
    #[error("perturbed weights leave the feasible region (entry {index}, step {step})")]
    InfeasiblePerturbation { index: usize, step: f64 },
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Transform(#[from] TransformError),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OptimizerConfig {
    /// Gradient step size delta_k.
    pub step_size: f64,
    /// Feasibility margin eta.
    pub margin: f64,
    /// Finite-difference step for the signature Jacobian.
    pub fd_step: f64,
    /// Terminate when the Jacobian Frobenius norm drops below this.
    pub grad_threshold: f64,
    pub max_iters: usize,
    /// Regularizer in the Fisher-distance denominator.
    pub fisher_epsilon: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            step_size: 0.01,
            margin: 0.1,
            fd_step: 1e-2,
            grad_threshold: 1e-4,
            max_iters: 1000,
            fisher_epsilon: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    Threshold,
    MaxIters,
}

#[derive(Debug, Clone)]
pub struct OptimizationTrace {
    pub iterates: Vec<(WeightVector, DSignature, f64)>,
    pub terminated_by: TerminationReason,
    /// Iterations at which the sign vector changed discontinuously.
    pub discontinuity_iters: Vec<usize>,
    /// Point-world path integrations performed (complexity accounting).
    pub integrations: usize,
}

/// Fisher separation of the obstacles split by the target's signs: squared
/// distance between group centroids over the sum of group variances.
/// Returns +infinity when either group is empty.
pub fn fisher_distance(world: &PointWorld, target: &DSignature, cfg: &OptimizerConfig) -> f64 {
    let group: Vec<Vec2> = Vec::new();
    let (mut neg, mut pos) = (group.clone(), group);
    for (&p, &s) in world.points.iter().zip(&target.signs) {
        if s < 0 {
            neg.push(p);
        } else {
            pos.push(p);
        }
    }
    if neg.is_empty() || pos.is_empty() {
        return f64::INFINITY;
    }
    let stats = |g: &[Vec2]| {
        let mean = g.iter().sum::<Vec2>() / g.len() as f64;
        let var = g.iter().map(|p| (p - mean).norm_squared()).sum::<f64>() / g.len() as f64;
        (mean, var)
    };
    let (m1, v1) = stats(&neg);
    let (m2, v2) = stats(&pos);
    (m1 - m2).norm_squared() / (v1 + v2 + cfg.fisher_epsilon)
}

/// Argmax of the Fisher distance over forest structures; ties keep the
/// earliest structure in the list.
pub fn select_structure(
    forests: &[ForestWorld],
    target: &DSignature,
    cfg: &OptimizerConfig,
    switch_sharpness: f64,
) -> Result<(ForestWorld, f64), OptimizerError> {
    assert!(!forests.is_empty());
    let mut best: Option<(usize, f64)> = None;
    for (i, f) in forests.iter().enumerate() {
        let chain = transform::build_chain(f, switch_sharpness)?;
        let j = fisher_distance(&chain.point_world(), target, cfg);
        if best.map_or(true, |(_, bj)| j > bj) {
            best = Some((i, j));
        }
    }
    let (i, j) = best.unwrap();
    Ok((forests[i].clone(), j))
}

fn path_signature(
    world: &PointWorld,
    w: &WeightVector,
    icfg: &IntegrationConfig,
) -> Result<DSignature, OptimizerError> {
    let path = flow::integrate_point_path(world, w, world.start, icfg)?;
    Ok(topology::d_signature(world, &path)?)
}

fn jacobian_with_step(
    world: &PointWorld,
    w: &WeightVector,
    eps: f64,
    icfg: &IntegrationConfig,
    integrations: &mut usize,
) -> Result<DMatrix<f64>, OptimizerError> {
    let m = world.points.len();
    let flat = w.to_flat();
    let mut jac = DMatrix::zeros(m, m + 1);
    for j in 0..=m {
        let mut hi = flat.clone();
        let mut lo = flat.clone();
        hi[j] += eps;
        lo[j] -= eps;
        let d_hi = path_signature(world, &WeightVector::from_flat(&hi), icfg)?;
        let d_lo = path_signature(world, &WeightVector::from_flat(&lo), icfg)?;
        *integrations += 2;
        for i in 0..m {
            jac[(i, j)] = (d_hi.signed[i] - d_lo.signed[i]) / (2.0 * eps);
        }
    }
    Ok(jac)
}

/// Central-difference Jacobian of the signed D-signature with respect to
/// the flat weight vector [w_g, w_1, ..., w_M]; one fresh path integration
/// per perturbation.
pub fn dsig_jacobian(
    world: &PointWorld,
    w: &WeightVector,
    cfg: &OptimizerConfig,
    icfg: &IntegrationConfig,
) -> Result<DMatrix<f64>, OptimizerError> {
    let flat = w.to_flat();
    for j in 0..flat.len() {
        for dir in [1.0, -1.0] {
            let mut pert = flat.clone();
            pert[j] += dir * cfg.fd_step;
            if !potential::is_feasible(&WeightVector::from_flat(&pert), cfg.margin) {
                return Err(OptimizerError::InfeasiblePerturbation {
                    index: j,
                    step: cfg.fd_step,
                });
            }
        }
    }
    let mut n = 0;
    jacobian_with_step(world, w, cfg.fd_step, icfg, &mut n)
}

/// Euclidean projection onto the feasible region W_eta (box w >= eta and
/// halfspace w_g - sum w_i >= 1 + eta) by Dykstra's alternating method.
pub fn project_weights(w_raw: &WeightVector, cfg: &OptimizerConfig) -> WeightVector {
    let eta = cfg.margin;
    let mut x = w_raw.to_flat();
    let n = x.len();
    // Halfspace a^T w >= c with a = (1, -1, ..., -1).
    let a: Vec<f64> = std::iter::once(1.0).chain(std::iter::repeat(-1.0)).take(n).collect();
    let a2 = n as f64;
    let c = 1.0 + eta;
    let mut p_box = vec![0.0; n];
    let mut p_half = vec![0.0; n];
    for _ in 0..10_000 {
        let prev = x.clone();
        // Box projection with Dykstra correction.
        let y: Vec<f64> = x.iter().zip(&p_box).map(|(&xi, &pi)| xi + pi).collect();
        let bx: Vec<f64> = y.iter().map(|&yi| yi.max(eta)).collect();
        for i in 0..n {
            p_box[i] = y[i] - bx[i];
        }
        // Halfspace projection with correction.
        let y: Vec<f64> = bx.iter().zip(&p_half).map(|(&xi, &pi)| xi + pi).collect();
        let dot: f64 = a.iter().zip(&y).map(|(ai, yi)| ai * yi).sum();
        let hx: Vec<f64> = if dot >= c {
            y.clone()
        } else {
            y.iter()
                .zip(&a)
                .map(|(&yi, &ai)| yi + ai * (c - dot) / a2)
                .collect()
        };
        for i in 0..n {
            p_half[i] = y[i] - hx[i];
        }
        x = hx;
        let delta: f64 = x
            .iter()
            .zip(&prev)
            .map(|(xi, pi)| (xi - pi) * (xi - pi))
            .sum::<f64>()
            .sqrt();
        if delta < 1e-13 {
            break;
        }
    }
    // Snap to the constraints exactly (>=, not approximately): clamp the
    // box, then raise w_g until the halfspace holds despite fp rounding.
    for xi in x.iter_mut() {
        if *xi < eta {
            *xi = eta;
        }
    }
    for _ in 0..16 {
        let dot: f64 = a.iter().zip(&x).map(|(ai, xi)| ai * xi).sum();
        if dot >= c {
            break;
        }
        x[0] += (c - dot).max(f64::EPSILON * x[0].abs().max(1.0));
    }
    WeightVector::from_flat(&x)
}

/// Projected gradient descent of ||D(w) - D*|| over the feasible weights.
pub fn optimize_weights(
    world: &PointWorld,
    w0: &WeightVector,
    target: &DSignature,
    cfg: &OptimizerConfig,
    icfg: &IntegrationConfig,
) -> Result<(WeightVector, OptimizationTrace), OptimizerError> {
    if !potential::is_feasible(w0, cfg.margin) {
        return Err(OptimizerError::InfeasibleInit { margin: cfg.margin });
    }
    let m = world.points.len();
    let mut w = w0.clone();
    let mut integrations = 0usize;
    let mut iterates = Vec::new();
    let mut discontinuity_iters = Vec::new();
    let mut terminated_by = TerminationReason::MaxIters;
    let mut prev_signs: Option<Vec<i8>> = None;

    for k in 0..cfg.max_iters {
        // Extreme iterates can drive the path across a marker; keep the
        // trace gathered so far rather than discarding the whole run.
        let Ok(d) = path_signature(world, &w, icfg) else {
            break;
        };
        integrations += 1;
        let objective = d
            .signed
            .iter()
            .zip(&target.signed)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if let Some(prev) = &prev_signs {
            if *prev != d.signs {
                discontinuity_iters.push(k);
            }
        }
        prev_signs = Some(d.signs.clone());
        iterates.push((w.clone(), d.clone(), objective));

        // Shrink the FD step if a perturbation would leave plain
        // feasibility (projected iterates can sit on the margin boundary).
        let mut eps = cfg.fd_step;
        let flat = w.to_flat();
        while eps > 1e-8 {
            let ok = (0..flat.len()).all(|j| {
                [1.0, -1.0].iter().all(|&dir| {
                    let mut p = flat.clone();
                    p[j] += dir * eps;
                    potential::is_feasible(&WeightVector::from_flat(&p), 0.0)
                })
            });
            if ok {
                break;
            }
            eps *= 0.5;
        }
        let Ok(jac) = jacobian_with_step(world, &w, eps, icfg, &mut integrations) else {
            break;
        };
        if jac.norm() < cfg.grad_threshold {
            terminated_by = TerminationReason::Threshold;
            break;
        }
        let residual = DMatrix::from_fn(1, m, |_, i| d.signed[i] - target.signed[i]);
        let step = residual * &jac; // 1 x (M+1)
        let mut flat = w.to_flat();
        for j in 0..flat.len() {
            flat[j] -= cfg.step_size * step[(0, j)];
        }
        w = project_weights(&WeightVector::from_flat(&flat), cfg);
    }

    Ok((
        w,
        OptimizationTrace {
            iterates,
            terminated_by,
            discontinuity_iters,
            integrations,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn world(points: Vec<Vec2>) -> PointWorld {
        PointWorld::new(
            points,
            Vec2::new(-4.0, 0.0),
            Vec2::new(4.0, 0.0),
            Vec2::zeros(),
            20.0,
        )
    }

    #[test]
    fn fisher_two_points_variance_free() {
        let cfg = OptimizerConfig::default();
        let w = world(vec![Vec2::new(0.0, 1.0), Vec2::new(0.0, -2.0)]);
        let target = DSignature::new(vec![1, -1], vec![1.0, 1.0]);
        let d2 = 9.0;
        assert_relative_eq!(
            fisher_distance(&w, &target, &cfg),
            d2 / cfg.fisher_epsilon,
            max_relative = 1e-12
        );
    }

    #[test]
    fn fisher_uniform_signs_is_infinite() {
        let cfg = OptimizerConfig::default();
        let w = world(vec![Vec2::new(0.0, 1.0), Vec2::new(0.0, -2.0)]);
        let target = DSignature::new(vec![1, 1], vec![1.0, 1.0]);
        assert!(fisher_distance(&w, &target, &cfg).is_infinite());
    }

    #[test]
    fn projection_is_identity_on_feasible() {
        let cfg = OptimizerConfig::default();
        let w = WeightVector::new(12.0, vec![1.0, 1.0, 1.0]);
        assert_eq!(project_weights(&w, &cfg), w);
    }

    #[test]
    fn projection_hits_halfspace_boundary() {
        let cfg = OptimizerConfig::default();
        // Violates only the halfspace constraint.
        let w = WeightVector::new(3.0, vec![1.5, 1.5]);
        let p = project_weights(&w, &cfg);
        let slack = p.goal_weight - p.obstacle_weights.iter().sum::<f64>();
        assert!(slack >= 1.0 + cfg.margin - 1e-12);
        assert_relative_eq!(slack, 1.0 + cfg.margin, epsilon = 1e-9);
        // KKT: residual parallel to the constraint normal (1, -1, -1).
        let r = [
            p.goal_weight - 3.0,
            p.obstacle_weights[0] - 1.5,
            p.obstacle_weights[1] - 1.5,
        ];
        assert_relative_eq!(r[0], -r[1], epsilon = 1e-9);
        assert_relative_eq!(r[1], r[2], epsilon = 1e-9);
    }

    #[test]
    fn projection_idempotent_on_random_inputs() {
        let cfg = OptimizerConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let w = WeightVector::new(
                rng.gen_range(-5.0..15.0),
                (0..3).map(|_| rng.gen_range(-2.0..4.0)).collect(),
            );
            let p1 = project_weights(&w, &cfg);
            let p2 = project_weights(&p1, &cfg);
            assert!(potential::is_feasible(&p1, cfg.margin));
            for (a, b) in p1.to_flat().iter().zip(p2.to_flat()) {
                assert_relative_eq!(*a, b, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn jacobian_rejects_marginal_perturbations() {
        let cfg = OptimizerConfig::default();
        let icfg = IntegrationConfig::default();
        let w = world(vec![Vec2::new(0.0, 1.0)]);
        // An obstacle weight exactly at the margin: w - eps leaves W_eta.
        let weights = WeightVector::new(12.0, vec![cfg.margin]);
        assert!(matches!(
            dsig_jacobian(&w, &weights, &cfg, &icfg),
            Err(OptimizerError::InfeasiblePerturbation { index: 1, .. })
        ));
    }

    #[test]
    fn jacobian_is_deterministic() {
        let cfg = OptimizerConfig::default();
        let icfg = IntegrationConfig {
            max_steps: 20_000,
            ..IntegrationConfig::default()
        };
        let w = world(vec![Vec2::new(0.0, 1.0), Vec2::new(1.0, -1.5)]);
        let weights = WeightVector::new(12.0, vec![1.0, 1.0]);
        let j1 = dsig_jacobian(&w, &weights, &cfg, &icfg).unwrap();
        let j2 = dsig_jacobian(&w, &weights, &cfg, &icfg).unwrap();
        assert_eq!(j1, j2);
    }

    #[test]
    fn already_matching_target_stays_put() {
        let cfg = OptimizerConfig {
            max_iters: 5,
            ..OptimizerConfig::default()
        };
        let icfg = IntegrationConfig {
            max_steps: 20_000,
            ..IntegrationConfig::default()
        };
        let pw = world(vec![Vec2::new(0.0, 1.0)]);
        let w0 = WeightVector::new(12.0, vec![1.0]);
        let d0 = path_signature(&pw, &w0, &icfg).unwrap();
        let (_, trace) = optimize_weights(&pw, &w0, &d0, &cfg, &icfg).unwrap();
        assert!(trace.discontinuity_iters.is_empty());
        assert_eq!(trace.iterates[0].1.signs, d0.signs);
    }

    #[test]
    fn infeasible_init_rejected() {
        let cfg = OptimizerConfig::default();
        let icfg = IntegrationConfig::default();
        let pw = world(vec![Vec2::new(0.0, 1.0)]);
        let w0 = WeightVector::new(1.5, vec![1.0]);
        assert!(matches!(
            optimize_weights(&pw, &w0, &DSignature::new(vec![1], vec![1.0]), &cfg, &icfg),
            Err(OptimizerError::InfeasibleInit { .. })
        ));
    }

    #[test]
    fn reachable_target_class_is_attained() {
        // Oracle: the target signature is produced by an actual feasible
        // weight vector, so the class is reachable by construction. The
        // optimizer must recover it from the default initialization.
        let pw = PointWorld::new(
            vec![Vec2::new(-1.0, 0.5), Vec2::new(1.0, -0.5)],
            Vec2::new(-4.0, 0.1),
            Vec2::new(4.0, 0.0),
            Vec2::zeros(),
            20.0,
        );
        let cfg = OptimizerConfig {
            max_iters: 300,
            step_size: 0.05,
            ..OptimizerConfig::default()
        };
        let icfg = IntegrationConfig {
            max_steps: 20_000,
            ..IntegrationConfig::default()
        };
        let w0 = WeightVector::new(12.0, vec![1.0, 1.0]);
        let d0 = path_signature(&pw, &w0, &icfg).unwrap();
        let oracle_w = WeightVector::new(12.0, vec![0.2, 4.0]);
        let target = path_signature(&pw, &oracle_w, &icfg).unwrap();
        assert_ne!(d0.signs, target.signs, "oracle weights must change the class");
        let (wf, trace) = optimize_weights(&pw, &w0, &target, &cfg, &icfg).unwrap();
        let df = path_signature(&pw, &wf, &icfg).unwrap();
        assert_eq!(df.signs, target.signs, "target class not attained");
        assert!(!trace.discontinuity_iters.is_empty());
        assert!(potential::is_feasible(&wf, cfg.margin));
    }
}
