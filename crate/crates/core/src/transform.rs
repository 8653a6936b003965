//! The forest-to-point-world diffeomorphism chain: purging trees to their
//! roots, star-to-sphere, sphere-to-bounded-point, and the unbounding map.
//!
//! Every stage is a switch-blended local deformation. The switch is the
//! product of a compactly supported C-infinity bump in the stage's own
//! implicit value and a rational factor that vanishes at the goal and on
//! other obstacle boundaries. Compact support makes the goal and all tree
//! root centers exact fixed points of the inner stages, which downstream
//! modules rely on.

use crate::flow::{PathPolyline, WorldTag};
use crate::geometry::{ForestWorld, Squircle};
use crate::{Mat2, Vec2};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TransformError {
    #[error("invalid forest: {0}")]
    InvalidForest(String),
    #[error("point outside free space (margin {margin:.3e}{})",
        .index.map(|i| format!(", sample {i}")).unwrap_or_default())]
    OutsideFreeSpace { index: Option<usize>, margin: f64 },
}

/// Obstacle representation after the transform: M point obstacles in the
/// unbounded plane, plus the mapped start/goal and the sphere-world frame
/// used by the unbounding map.
#[derive(Debug, Clone, PartialEq)]
pub struct PointWorld {
    pub points: Vec<Vec2>,
    pub start: Vec2,
    pub goal: Vec2,
    pub sphere_center: Vec2,
    pub sphere_radius: f64,
}

impl PointWorld {
    pub fn new(
        points: Vec<Vec2>,
        start: Vec2,
        goal: Vec2,
        sphere_center: Vec2,
        sphere_radius: f64,
    ) -> Self {
        debug_assert!(sphere_radius > 0.0);
        debug_assert!((start - goal).norm() > 0.0);
        Self {
            points,
            start,
            goal,
            sphere_center,
            sphere_radius,
        }
    }

    pub fn obstacle_count(&self) -> usize {
        self.points.len()
    }
}

/// C-infinity bump: 1 for t <= 0, 0 for t >= 1, strictly monotone between.
fn bump(t: f64) -> f64 {
    if t <= 0.0 {
        1.0
    } else if t >= 1.0 {
        0.0
    } else {
        let zeta = |s: f64| (-1.0 / s).exp();
        let a = zeta(1.0 - t);
        let b = zeta(t);
        // Cap strictly below 1 in the interior: the ratio rounds to exactly
        // 1.0 for t below ~0.024, which would project a whole shell onto the
        // stage target and silently drop the Jacobian to rank one there.
        (a / (a + b)).min(1.0 - 1e-9)
    }
}

fn goal_obstacle_product(p: Vec2, goal: Vec2, others: &[ObstacleRef]) -> f64 {
    let mut num = (p - goal).norm_squared();
    for o in others {
        num *= o.beta(p).max(0.0);
    }
    num
}

/// Rational switch factor: `n / (n + lambda * v)` with `n` the goal-distance
/// times other-obstacle product normalized by its value at the stage anchor,
/// and `v` the stage's implicit value normalized by the cutoff. Exactly 1
/// where `value <= 0`, exactly 0 at the goal and on other obstacle
/// boundaries. The normalization keeps both terms O(1) so the switch never
/// saturates to floating-point 1 inside the band — unnormalized, the product
/// over a dozen obstacles reaches 1e16 and stacked stages collapse the
/// normal direction below floating-point resolution.
fn rational_switch(
    p: Vec2,
    value: f64,
    goal: Vec2,
    others: &[ObstacleRef],
    lambda: f64,
    num_scale: f64,
    beta_scale: f64,
) -> f64 {
    let num = goal_obstacle_product(p, goal, others) / num_scale;
    let denom = num + lambda * value.max(0.0) / beta_scale;
    if denom <= 0.0 {
        1.0
    } else {
        num / denom
    }
}

/// Obstacles referenced by the switches: original squircles or the circles
/// the roots have become after the star-to-sphere stage.
#[derive(Debug, Clone)]
enum ObstacleRef {
    Squircle(Squircle),
    Circle { center: Vec2, radius: f64 },
}

impl ObstacleRef {
    fn beta(&self, p: Vec2) -> f64 {
        match self {
            ObstacleRef::Squircle(s) => s.beta(p),
            ObstacleRef::Circle { center, radius } => {
                (p - center).norm_squared() / (radius * radius) - 1.0
            }
        }
    }
}

/// Absorbs one leaf squircle into its parent: the leaf boundary is mapped
/// onto the parent boundary by ray scaling through a hub point in the
/// overlap region, blended toward the identity across the switch band.
#[derive(Debug, Clone)]
struct PurgeStage {
    leaf: Squircle,
    parent: Squircle,
    hub: Vec2,
    cutoff: f64,
    lambda: f64,
    num_scale: f64,
    others: Vec<ObstacleRef>,
    goal: Vec2,
}

impl PurgeStage {
    fn ray_to_parent_boundary(&self, p: Vec2) -> Vec2 {
        let d = p - self.hub;
        let r = d.norm();
        if r < 1e-15 {
            return self.hub;
        }
        match self.parent.boundary_radius_from(self.hub, d) {
            Some(rb) => self.hub + d * (rb / r),
            None => p,
        }
    }

    fn apply(&self, p: Vec2) -> Vec2 {
        let b = self.leaf.beta(p);
        if b >= self.cutoff {
            return p;
        }
        let sigma = bump(b / self.cutoff)
            * rational_switch(p, b, self.goal, &self.others, self.lambda, self.num_scale, self.cutoff);
        if sigma <= 0.0 {
            return p;
        }
        let target = self.ray_to_parent_boundary(p);
        p * (1.0 - sigma) + target * sigma
    }
}

/// Deforms a purged root squircle onto its inscribed circle by blended
/// radial scaling around the root center.
#[derive(Debug, Clone)]
struct SphereStage {
    star: Squircle,
    rho: f64,
    cutoff: f64,
    lambda: f64,
    num_scale: f64,
    others: Vec<ObstacleRef>,
    goal: Vec2,
}

impl SphereStage {
    fn apply(&self, p: Vec2) -> Vec2 {
        let b = self.star.beta(p);
        if b >= self.cutoff {
            return p;
        }
        let sigma = bump(b / self.cutoff)
            * rational_switch(p, b, self.goal, &self.others, self.lambda, self.num_scale, self.cutoff);
        if sigma <= 0.0 {
            return p;
        }
        let c = self.star.center();
        let d = p - c;
        let r = d.norm();
        let target = if r < 1e-15 {
            c
        } else {
            c + d * (self.rho * (1.0 + b).max(0.0).sqrt() / r)
        };
        p * (1.0 - sigma) + target * sigma
    }
}

/// Collapses a sphere onto its center by blended radial contraction.
#[derive(Debug, Clone)]
struct CollapseStage {
    center: Vec2,
    rho: f64,
    band: f64,
    lambda: f64,
    num_scale: f64,
    others: Vec<ObstacleRef>,
    goal: Vec2,
}

impl CollapseStage {
    fn apply(&self, p: Vec2) -> Vec2 {
        let d = p - self.center;
        let r = d.norm();
        let t = r - self.rho;
        if t >= self.band {
            return p;
        }
        let sigma = bump(t / self.band)
            * rational_switch(p, t, self.goal, &self.others, self.lambda, self.num_scale, self.band);
        if sigma <= 0.0 {
            return p;
        }
        if r < 1e-15 {
            return self.center;
        }
        let new_r = (r - self.rho * sigma).max(0.0);
        self.center + d * (new_r / r)
    }
}

#[derive(Debug, Clone)]
enum Stage {
    Purge(PurgeStage),
    Sphere(SphereStage),
    Collapse(CollapseStage),
}

impl Stage {
    fn apply(&self, p: Vec2) -> Vec2 {
        match self {
            Stage::Purge(s) => s.apply(p),
            Stage::Sphere(s) => s.apply(p),
            Stage::Collapse(s) => s.apply(p),
        }
    }
}

/// The composed diffeomorphism from a forest world to the unbounded point
/// world. Immutable after construction; all evaluations are pure.
#[derive(Debug, Clone)]
pub struct DiffeoChain {
    forest: ForestWorld,
    switch_sharpness: f64,
    stages: Vec<Stage>,
    sphere_center: Vec2,
    sphere_radius: f64,
    points: Vec<Vec2>,
}

/// Find a hub point strictly inside both squircles: scan the segment
/// between centers, fall back to a grid over the leaf's neighbourhood.
fn find_hub(leaf: &Squircle, parent: &Squircle) -> Option<Vec2> {
    let score = |p: Vec2| leaf.beta(p).max(parent.beta(p));
    let mut best = (f64::INFINITY, Vec2::zeros());
    for k in 0..=200 {
        let t = k as f64 / 200.0;
        let p = leaf.center() * (1.0 - t) + parent.center() * t;
        let s = score(p);
        if s < best.0 {
            best = (s, p);
        }
    }
    if best.0 >= -1e-9 {
        // Grid search around the leaf.
        let half = 0.5 * leaf.width().max(leaf.height());
        for i in 0..=40 {
            for j in 0..=40 {
                let p = leaf.center()
                    + Vec2::new(
                        half * (i as f64 / 20.0 - 1.0),
                        half * (j as f64 / 20.0 - 1.0),
                    );
                let s = score(p);
                if s < best.0 {
                    best = (s, p);
                }
            }
        }
    }
    (best.0 < -1e-9).then_some(best.1)
}

/// Band width from the base clearance: sharpness narrows the band, the
/// clearance caps it, and a small floor keeps it positive.
fn band_width(base: f64, lambda: f64, floor: f64) -> f64 {
    (base / lambda.max(1.0)).clamp(floor, base.max(floor))
}

/// Build the diffeomorphism chain for a forest structure.
pub fn build_chain(forest: &ForestWorld, switch_sharpness: f64) -> Result<DiffeoChain, TransformError> {
    if !(switch_sharpness > 0.0) {
        return Err(TransformError::InvalidForest(
            "switch sharpness must be positive".into(),
        ));
    }
    let goal = forest.goal();
    let root_centers: Vec<Vec2> = forest
        .trees()
        .iter()
        .map(|t| t.root_squircle().center())
        .collect();

    // Points the inner stages must leave untouched exactly.
    let protected: Vec<Vec2> = root_centers.iter().copied().chain([goal]).collect();

    let mut stages = Vec::new();

    // Purging: tree by tree, deepest leaves first, siblings by node index.
    // `active` tracks which squircles still exist in the intermediate world.
    let mut active: Vec<Vec<bool>> = forest
        .trees()
        .iter()
        .map(|t| vec![true; t.len()])
        .collect();
    for (ti, tree) in forest.trees().iter().enumerate() {
        let parents = tree.parents();
        let depths = tree.depths();
        let mut order: Vec<usize> = (0..tree.len()).filter(|&n| n != tree.root()).collect();
        order.sort_by_key(|&n| (std::cmp::Reverse(depths[n]), n));
        for node in order {
            let leaf = tree.nodes()[node].clone();
            let parent_idx = parents[node].expect("non-root node has a parent");
            let parent = tree.nodes()[parent_idx].clone();
            let hub = find_hub(&leaf, &parent).ok_or_else(|| {
                TransformError::InvalidForest(format!(
                    "no interior overlap between node {node} and its parent in tree {ti}"
                ))
            })?;
            let mut others = Vec::new();
            let mut guarded = protected.clone();
            for (tj, t) in forest.trees().iter().enumerate() {
                for (nj, s) in t.nodes().iter().enumerate() {
                    if !active[tj][nj] || (tj == ti && (nj == node || nj == parent_idx)) {
                        continue;
                    }
                    others.push(ObstacleRef::Squircle(s.clone()));
                    guarded.push(s.center());
                }
            }
            let clearance = guarded
                .iter()
                .map(|&q| leaf.beta(q))
                .fold(f64::INFINITY, f64::min);
            // Cap at beta = 1 to keep each stage local to its leaf.
            let cutoff = band_width((0.5 * clearance.max(0.0)).min(1.0), switch_sharpness, 1e-3);
            let num_scale = goal_obstacle_product(leaf.center(), goal, &others).max(1e-12);
            stages.push(Stage::Purge(PurgeStage {
                leaf,
                parent,
                hub,
                cutoff,
                lambda: switch_sharpness,
                num_scale,
                others,
                goal,
            }));
            active[ti][node] = false;
        }
    }

    // Star to sphere, per root.
    for (ti, tree) in forest.trees().iter().enumerate() {
        let star = tree.root_squircle().clone();
        let rho = star.inscribed_radius();
        let others: Vec<ObstacleRef> = forest
            .trees()
            .iter()
            .enumerate()
            .filter(|&(tj, _)| tj != ti)
            .map(|(_, t)| ObstacleRef::Squircle(t.root_squircle().clone()))
            .collect();
        let clearance = protected
            .iter()
            .filter(|&&q| (q - star.center()).norm() > 1e-12)
            .map(|&q| star.beta(q))
            .fold(f64::INFINITY, f64::min);
        let cutoff = band_width((0.5 * clearance.max(0.0)).min(1.0), switch_sharpness, 1e-3);
        let num_scale = goal_obstacle_product(star.center(), goal, &others).max(1e-12);
        stages.push(Stage::Sphere(SphereStage {
            star,
            rho,
            cutoff,
            lambda: switch_sharpness,
            num_scale,
            others,
            goal,
        }));
    }

    // Sphere to bounded point, per root.
    for (ti, center) in root_centers.iter().copied().enumerate() {
        let rho = forest.trees()[ti].root_squircle().inscribed_radius();
        let others: Vec<ObstacleRef> = root_centers
            .iter()
            .copied()
            .enumerate()
            .filter(|&(tj, _)| tj != ti)
            .map(|(tj, c)| ObstacleRef::Circle {
                center: c,
                radius: forest.trees()[tj].root_squircle().inscribed_radius(),
            })
            .collect();
        let clearance = protected
            .iter()
            .filter(|&&q| (q - center).norm() > 1e-12)
            .map(|&q| (q - center).norm() - rho)
            .fold(f64::INFINITY, f64::min);
        let band = band_width(
            (0.5 * clearance.max(0.0)).min(rho),
            switch_sharpness,
            1e-3 * rho.max(1e-3),
        );
        let num_scale = goal_obstacle_product(center, goal, &others).max(1e-12);
        stages.push(Stage::Collapse(CollapseStage {
            center,
            rho,
            band,
            lambda: switch_sharpness,
            num_scale,
            others,
            goal,
        }));
    }

    // Unbounding frame: circumscribed circle of the boundary squircle,
    // inflated so every interior point stays strictly inside.
    let boundary = forest.boundary();
    let sphere_center = boundary.center();
    let mut circumscribed: f64 = 0.0;
    for k in 0..256 {
        let phi = std::f64::consts::TAU * k as f64 / 256.0;
        circumscribed = circumscribed.max((boundary.boundary_point(phi) - sphere_center).norm());
    }
    let sphere_radius = 1.05 * circumscribed;

    let mut chain = DiffeoChain {
        forest: forest.clone(),
        switch_sharpness,
        stages,
        sphere_center,
        sphere_radius,
        points: Vec::new(),
    };
    chain.points = root_centers.iter().map(|&c| chain.unbound(c)).collect();
    Ok(chain)
}

impl DiffeoChain {
    pub fn forest(&self) -> &ForestWorld {
        &self.forest
    }

    pub fn switch_sharpness(&self) -> f64 {
        self.switch_sharpness
    }

    /// Images of the tree root centers: the point obstacles P_i.
    pub fn points(&self) -> &[Vec2] {
        &self.points
    }

    pub fn sphere_center(&self) -> Vec2 {
        self.sphere_center
    }

    pub fn sphere_radius(&self) -> f64 {
        self.sphere_radius
    }

    /// The point world induced by this chain.
    pub fn point_world(&self) -> PointWorld {
        PointWorld::new(
            self.points.clone(),
            self.map_point_unchecked(self.forest.start()),
            self.map_point_unchecked(self.forest.goal()),
            self.sphere_center,
            self.sphere_radius,
        )
    }

    /// Composition of the purge, star-to-sphere and collapse stages only.
    pub fn apply_inner(&self, p: Vec2) -> Vec2 {
        self.stages.iter().fold(p, |q, s| s.apply(q))
    }

    pub fn purge_stage_count(&self) -> usize {
        self.stages
            .iter()
            .filter(|s| matches!(s, Stage::Purge(_)))
            .count()
    }

    /// Worst parent-boundary residual of one purge stage: samples the leaf
    /// boundary, applies that stage alone, and returns the largest
    /// |beta_parent| over the images. Verifies that each purge step drops
    /// its leaf boundary exactly onto the parent boundary.
    pub fn purge_boundary_residual(&self, stage: usize, samples: usize) -> f64 {
        let purge = self
            .stages
            .iter()
            .filter_map(|s| match s {
                Stage::Purge(p) => Some(p),
                _ => None,
            })
            .nth(stage)
            .expect("purge stage index in range");
        let mut worst: f64 = 0.0;
        for k in 0..samples {
            let phi = std::f64::consts::TAU * k as f64 / samples as f64;
            let p = purge.leaf.boundary_point(phi);
            let img = purge.apply(p);
            worst = worst.max(purge.parent.beta(img).abs());
        }
        worst
    }

    /// Unbounding map psi.
    pub fn unbound(&self, q: Vec2) -> Vec2 {
        let d = q - self.sphere_center;
        let r = d.norm().min(self.sphere_radius * (1.0 - 1e-12));
        self.sphere_center + d * (self.sphere_radius / (self.sphere_radius - r))
    }

    /// Full map evaluated without the free-space precondition check.
    pub fn map_point_unchecked(&self, p: Vec2) -> Vec2 {
        self.unbound(self.apply_inner(p))
    }

    fn check_free(&self, p: Vec2, index: Option<usize>) -> Result<(), TransformError> {
        let margin = self.forest.free_space_margin(p);
        if margin < -1e-9 {
            Err(TransformError::OutsideFreeSpace { index, margin })
        } else {
            Ok(())
        }
    }

    /// Image of a free-space point under the full chain.
    pub fn map_point(&self, p: Vec2) -> Result<Vec2, TransformError> {
        self.check_free(p, None)?;
        Ok(self.map_point_unchecked(p))
    }

    /// Central finite-difference Jacobian. The step balances truncation
    /// against subtractive cancellation: near collapse bands the map
    /// compresses space by many orders of magnitude and the tiny Jacobian
    /// entries drown in rounding noise at finer steps.
    pub fn map_jacobian(&self, p: Vec2) -> Result<Mat2, TransformError> {
        self.check_free(p, None)?;
        Ok(self.map_jacobian_unchecked(p))
    }

    pub fn map_jacobian_unchecked(&self, p: Vec2) -> Mat2 {
        let h = 1e-4;
        let dx = (self.map_point_unchecked(p + Vec2::new(h, 0.0))
            - self.map_point_unchecked(p - Vec2::new(h, 0.0)))
            / (2.0 * h);
        let dy = (self.map_point_unchecked(p + Vec2::new(0.0, h))
            - self.map_point_unchecked(p - Vec2::new(0.0, h)))
            / (2.0 * h);
        Mat2::new(dx.x, dy.x, dx.y, dy.y)
    }

    /// Pointwise image of a forest path, preserving time stamps.
    pub fn map_path(&self, path: &PathPolyline) -> Result<PathPolyline, TransformError> {
        let mut samples = Vec::with_capacity(path.samples.len());
        for (i, &p) in path.samples.iter().enumerate() {
            self.check_free(p, Some(i))?;
            samples.push(self.map_point_unchecked(p));
        }
        Ok(PathPolyline {
            samples,
            times: path.times.clone(),
            converged: path.converged,
            world_tag: WorldTag::Point,
        })
    }
}
