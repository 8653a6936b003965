//! Squircle primitives, overlap detection, tree-of-squircles construction
//! and re-rooting.

use crate::{Mat2, Vec2};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("squircle width and height must be positive")]
    NonPositiveExtent,
    #[error("kappa must lie strictly inside (0, 1), got {0}")]
    KappaOutOfRange(f64),
    #[error("overlap graph of a connected component contains a cycle")]
    CyclicAdjacency,
    #[error("node index {index} out of range for tree of {len} nodes")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("trees are not pairwise disjoint (squircles {0} and {1} overlap)")]
    TreesOverlap(usize, usize),
    #[error("{what} lies outside free space")]
    PointNotFree { what: &'static str },
}

/// Number of boundary samples used by the overlap test.
const OVERLAP_SAMPLES: usize = 256;

/// Smooth star-shaped obstacle interpolating between a circle and a square.
///
/// The implicit function in the unit frame is
/// `beta(p) = (|p|^2 + sqrt(|p|^4 - 4 k^2 (x y)^2)) / 2 - 1`,
/// negative inside, zero on the boundary, positive outside. World-frame
/// squircles are obtained by rotating, translating and anisotropically
/// scaling the unit squircle; `width` and `height` are full extents.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Squircle {
    center: Vec2,
    width: f64,
    height: f64,
    orientation: f64,
    kappa: f64,
}

impl Squircle {
    pub fn new(
        center: Vec2,
        width: f64,
        height: f64,
        orientation: f64,
        kappa: f64,
    ) -> Result<Self, GeometryError> {
        if !(width > 0.0) || !(height > 0.0) {
            return Err(GeometryError::NonPositiveExtent);
        }
        if !(kappa > 0.0 && kappa < 1.0) {
            return Err(GeometryError::KappaOutOfRange(kappa));
        }
        Ok(Self {
            center,
            width,
            height,
            orientation: normalize_angle(orientation),
            kappa,
        })
    }

    /// Circle of a given radius (degenerate squareness).
    pub fn circle(center: Vec2, radius: f64) -> Result<Self, GeometryError> {
        Self::new(center, 2.0 * radius, 2.0 * radius, 0.0, 1e-9)
    }

    pub fn center(&self) -> Vec2 {
        self.center
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    pub fn orientation(&self) -> f64 {
        self.orientation
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Radius of the inscribed circle around the center.
    pub fn inscribed_radius(&self) -> f64 {
        0.5 * self.width.min(self.height)
    }

    fn rotation(&self) -> Mat2 {
        let (s, c) = self.orientation.sin_cos();
        Mat2::new(c, -s, s, c)
    }

    /// Map a world point into the unit frame.
    fn to_unit(&self, p: Vec2) -> Vec2 {
        let local = self.rotation().transpose() * (p - self.center);
        Vec2::new(2.0 * local.x / self.width, 2.0 * local.y / self.height)
    }

    /// Map a unit-frame point back into the world frame.
    fn from_unit(&self, u: Vec2) -> Vec2 {
        let local = Vec2::new(0.5 * self.width * u.x, 0.5 * self.height * u.y);
        self.center + self.rotation() * local
    }

    /// Implicit function: negative inside, zero on the boundary.
    pub fn beta(&self, p: Vec2) -> f64 {
        let u = self.to_unit(p);
        unit_beta(u, self.kappa)
    }

    /// Analytic gradient of [`Squircle::beta`] with respect to the world point.
    pub fn beta_gradient(&self, p: Vec2) -> Vec2 {
        let u = self.to_unit(p);
        let g_unit = unit_beta_gradient(u, self.kappa);
        // beta(p) = beta_unit(S R^T (p - c)); pull back with (S R^T)^T.
        let scaled = Vec2::new(2.0 * g_unit.x / self.width, 2.0 * g_unit.y / self.height);
        self.rotation() * scaled
    }

    pub fn contains(&self, p: Vec2) -> bool {
        self.beta(p) <= 0.0
    }

    /// Boundary point at parameter angle `phi` (unit-frame polar angle).
    pub fn boundary_point(&self, phi: f64) -> Vec2 {
        let (s, c) = phi.sin_cos();
        let r = unit_boundary_radius(c, s, self.kappa);
        self.from_unit(Vec2::new(r * c, r * s))
    }

    /// Distance from `origin` (strictly inside) to the boundary along `dir`.
    ///
    /// Unique for interior origins since squircles with kappa in (0,1) are
    /// convex. Returns `None` if `origin` is not inside.
    pub fn boundary_radius_from(&self, origin: Vec2, dir: Vec2) -> Option<f64> {
        if self.beta(origin) >= 0.0 {
            return None;
        }
        let dir = dir.normalize();
        // Bracket the crossing, then bisect.
        let mut hi = self.inscribed_radius().max(1e-6);
        let mut lo = 0.0;
        let mut tries = 0;
        while self.beta(origin + dir * hi) < 0.0 {
            lo = hi;
            hi *= 2.0;
            tries += 1;
            if tries > 80 {
                return None;
            }
        }
        for _ in 0..90 {
            let mid = 0.5 * (lo + hi);
            if self.beta(origin + dir * mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(0.5 * (lo + hi))
    }
}

fn normalize_angle(theta: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut t = theta.rem_euclid(two_pi);
    if t > std::f64::consts::PI {
        t -= two_pi;
    }
    t
}

fn unit_beta(u: Vec2, kappa: f64) -> f64 {
    let n2 = u.norm_squared();
    let cross = u.x * u.y;
    let radicand = (n2 * n2 - 4.0 * kappa * kappa * cross * cross).max(0.0);
    0.5 * (n2 + radicand.sqrt()) - 1.0
}

fn unit_beta_gradient(u: Vec2, kappa: f64) -> Vec2 {
    let n2 = u.norm_squared();
    let v = u.x * u.y;
    let k2 = kappa * kappa;
    let radicand = (n2 * n2 - 4.0 * k2 * v * v).max(0.0);
    let root = radicand.sqrt();
    if root < 1e-300 {
        // Near the center (or exactly on the axes with kappa -> 1) the
        // radicand vanishes; the limit of the gradient is 2u there.
        return 2.0 * u;
    }
    // d/dx sqrt(R) = (2 n2 x - 4 k^2 v y) / sqrt(R), symmetric in y.
    let gx = u.x + (n2 * u.x - 2.0 * k2 * v * u.y) / root;
    let gy = u.y + (n2 * u.y - 2.0 * k2 * v * u.x) / root;
    Vec2::new(gx, gy)
}

/// Unit-frame boundary radius along direction (c, s), closed form.
fn unit_boundary_radius(c: f64, s: f64, kappa: f64) -> f64 {
    let cs = c * s;
    let inner = (1.0 - 4.0 * kappa * kappa * cs * cs).max(0.0).sqrt();
    (2.0 / (1.0 + inner)).sqrt()
}

/// Free functions mirroring the operation names used throughout the crate.
pub fn squircle_beta(s: &Squircle, p: Vec2) -> f64 {
    s.beta(p)
}

pub fn squircle_beta_gradient(s: &Squircle, p: Vec2) -> Vec2 {
    s.beta_gradient(p)
}

/// Whether the closed regions of two squircles intersect, decided by dense
/// boundary sampling plus mutual center containment.
pub fn detect_overlap(a: &Squircle, b: &Squircle) -> bool {
    if a.contains(b.center) || b.contains(a.center) {
        return true;
    }
    for k in 0..OVERLAP_SAMPLES {
        let phi = std::f64::consts::TAU * (k as f64) / (OVERLAP_SAMPLES as f64);
        if b.contains(a.boundary_point(phi)) || a.contains(b.boundary_point(phi)) {
            return true;
        }
    }
    false
}

/// Rooted tree over overlapping squircles. Edges point from parent to child.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeOfSquircles {
    nodes: Vec<Squircle>,
    edges: Vec<(usize, usize)>,
    root: usize,
}

impl TreeOfSquircles {
    /// Build from nodes and an undirected overlap adjacency; edges are
    /// directed away from `root` by breadth-first search.
    fn from_adjacency(
        nodes: Vec<Squircle>,
        adjacency: &[Vec<usize>],
        root: usize,
    ) -> Result<Self, GeometryError> {
        let n = nodes.len();
        if root >= n {
            return Err(GeometryError::IndexOutOfRange { index: root, len: n });
        }
        let mut edges = Vec::with_capacity(n.saturating_sub(1));
        let mut visited = vec![false; n];
        visited[root] = true;
        let mut queue = std::collections::VecDeque::from([root]);
        while let Some(u) = queue.pop_front() {
            for &v in &adjacency[u] {
                if !visited[v] {
                    visited[v] = true;
                    edges.push((u, v));
                    queue.push_back(v);
                }
            }
        }
        if visited.iter().any(|&v| !v) {
            return Err(GeometryError::CyclicAdjacency);
        }
        edges.sort_unstable();
        Ok(Self { nodes, edges, root })
    }

    pub fn single(node: Squircle) -> Self {
        Self {
            nodes: vec![node],
            edges: Vec::new(),
            root: 0,
        }
    }

    pub fn nodes(&self) -> &[Squircle] {
        &self.nodes
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn root_squircle(&self) -> &Squircle {
        &self.nodes[self.root]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Parent of each node (`None` for the root).
    pub fn parents(&self) -> Vec<Option<usize>> {
        let mut parents = vec![None; self.nodes.len()];
        for &(u, v) in &self.edges {
            parents[v] = Some(u);
        }
        parents
    }

    /// BFS depth of each node below the root.
    pub fn depths(&self) -> Vec<usize> {
        let mut depths = vec![0usize; self.nodes.len()];
        // Edges are BFS-ordered away from the root, so a single pass works
        // after sorting; recompute defensively via the parent map instead.
        let parents = self.parents();
        for i in 0..self.nodes.len() {
            let mut d = 0;
            let mut cur = i;
            while let Some(p) = parents[cur] {
                d += 1;
                cur = p;
            }
            depths[i] = d;
        }
        depths
    }

    fn undirected_adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for &(u, v) in &self.edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }
}

/// Re-root a tree at `new_root`, re-directing edges away from it by BFS.
pub fn reroot(tree: &TreeOfSquircles, new_root: usize) -> Result<TreeOfSquircles, GeometryError> {
    let adjacency = tree.undirected_adjacency();
    TreeOfSquircles::from_adjacency(tree.nodes.clone(), &adjacency, new_root)
}

/// Partition obstacles into trees by overlap adjacency, each rooted at its
/// lowest-index member.
pub fn build_trees(obstacles: &[Squircle]) -> Result<Vec<TreeOfSquircles>, GeometryError> {
    let n = obstacles.len();
    let mut adjacency = vec![Vec::new(); n];
    for i in 0..n {
        for j in (i + 1)..n {
            if detect_overlap(&obstacles[i], &obstacles[j]) {
                adjacency[i].push(j);
                adjacency[j].push(i);
            }
        }
    }
    let mut component = vec![usize::MAX; n];
    let mut components: Vec<Vec<usize>> = Vec::new();
    for start in 0..n {
        if component[start] != usize::MAX {
            continue;
        }
        let id = components.len();
        let mut members = Vec::new();
        let mut queue = std::collections::VecDeque::from([start]);
        component[start] = id;
        while let Some(u) = queue.pop_front() {
            members.push(u);
            for &v in &adjacency[u] {
                if component[v] == usize::MAX {
                    component[v] = id;
                    queue.push_back(v);
                }
            }
        }
        members.sort_unstable();
        components.push(members);
    }
    let mut trees = Vec::with_capacity(components.len());
    for members in components {
        let edge_count: usize = members
            .iter()
            .map(|&u| adjacency[u].iter().filter(|&&v| v > u).count())
            .sum();
        if edge_count != members.len() - 1 {
            return Err(GeometryError::CyclicAdjacency);
        }
        // Relabel indices locally, preserving ascending original order.
        let local: std::collections::HashMap<usize, usize> = members
            .iter()
            .enumerate()
            .map(|(local_idx, &orig)| (orig, local_idx))
            .collect();
        let nodes: Vec<Squircle> = members.iter().map(|&u| obstacles[u].clone()).collect();
        let local_adj: Vec<Vec<usize>> = members
            .iter()
            .map(|&u| {
                let mut list: Vec<usize> = adjacency[u].iter().map(|v| local[v]).collect();
                list.sort_unstable();
                list
            })
            .collect();
        trees.push(TreeOfSquircles::from_adjacency(nodes, &local_adj, 0)?);
    }
    Ok(trees)
}

/// Workspace: outer boundary squircle plus disjoint trees of obstacles.
#[derive(Debug, Clone, PartialEq)]
pub struct ForestWorld {
    boundary: Squircle,
    trees: Vec<TreeOfSquircles>,
    start: Vec2,
    goal: Vec2,
}

impl ForestWorld {
    /// Build a forest world, grouping `obstacles` into trees.
    pub fn new(
        boundary: Squircle,
        obstacles: &[Squircle],
        start: Vec2,
        goal: Vec2,
    ) -> Result<Self, GeometryError> {
        let trees = build_trees(obstacles)?;
        Self::with_trees(boundary, trees, start, goal)
    }

    /// Build from pre-partitioned trees, validating the invariants.
    pub fn with_trees(
        boundary: Squircle,
        trees: Vec<TreeOfSquircles>,
        start: Vec2,
        goal: Vec2,
    ) -> Result<Self, GeometryError> {
        for (i, a) in trees.iter().enumerate() {
            for (j, b) in trees.iter().enumerate().skip(i + 1) {
                for sa in a.nodes() {
                    for sb in b.nodes() {
                        if detect_overlap(sa, sb) {
                            return Err(GeometryError::TreesOverlap(i, j));
                        }
                    }
                }
            }
        }
        let world = Self {
            boundary,
            trees,
            start,
            goal,
        };
        if !world.in_free_space(start) {
            return Err(GeometryError::PointNotFree { what: "start" });
        }
        if !world.in_free_space(goal) {
            return Err(GeometryError::PointNotFree { what: "goal" });
        }
        Ok(world)
    }

    pub fn boundary(&self) -> &Squircle {
        &self.boundary
    }

    pub fn trees(&self) -> &[TreeOfSquircles] {
        &self.trees
    }

    pub fn start(&self) -> Vec2 {
        self.start
    }

    pub fn goal(&self) -> Vec2 {
        self.goal
    }

    /// Number of trees (point obstacles after the transform).
    pub fn tree_count(&self) -> usize {
        self.trees.len()
    }

    /// Strictly inside the boundary and strictly outside every obstacle.
    pub fn in_free_space(&self, p: Vec2) -> bool {
        self.free_space_margin(p) > 0.0
    }

    /// Positive inside free space; min over boundary slack and obstacle betas.
    pub fn free_space_margin(&self, p: Vec2) -> f64 {
        let mut margin = -self.boundary.beta(p);
        for tree in &self.trees {
            for node in tree.nodes() {
                margin = margin.min(node.beta(p));
            }
        }
        margin
    }

    /// Replace tree `index` with a re-rooted copy.
    pub fn rerooted(&self, index: usize, new_root: usize) -> Result<Self, GeometryError> {
        let mut trees = self.trees.clone();
        trees[index] = reroot(&trees[index], new_root)?;
        Ok(Self {
            trees,
            ..self.clone()
        })
    }

    /// Current root choice per tree.
    pub fn roots(&self) -> Vec<usize> {
        self.trees.iter().map(|t| t.root()).collect()
    }
}

/// Cartesian product of root choices across trees, realized via re-rooting.
/// Ordered lexicographically by the root index tuple.
pub fn enumerate_forests(world: &ForestWorld) -> Vec<ForestWorld> {
    let sizes: Vec<usize> = world.trees.iter().map(|t| t.len()).collect();
    let total: usize = sizes.iter().product();
    let mut forests = Vec::with_capacity(total);
    let mut choice = vec![0usize; sizes.len()];
    loop {
        let trees: Vec<TreeOfSquircles> = world
            .trees
            .iter()
            .zip(&choice)
            .map(|(t, &r)| reroot(t, r).expect("root index within tree"))
            .collect();
        forests.push(ForestWorld {
            trees,
            ..world.clone()
        });
        // Increment the mixed-radix counter, last tree fastest.
        let mut k = sizes.len();
        loop {
            if k == 0 {
                return forests;
            }
            k -= 1;
            choice[k] += 1;
            if choice[k] < sizes[k] {
                break;
            }
            choice[k] = 0;
        }
    }
}
