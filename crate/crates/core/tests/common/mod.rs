//! Shared benchmark workspaces for the integration and acceptance suites.
//!
//! Each test binary includes this module separately and uses a subset.
#![allow(dead_code)]

use navfield::{ForestWorld, Squircle, Vec2};

pub fn sq(cx: f64, cy: f64, w: f64, h: f64, theta: f64, kappa: f64) -> Squircle {
    Squircle::new(Vec2::new(cx, cy), w, h, theta, kappa).unwrap()
}

/// Six-tree workspace in a 10x10 near-square boundary: tree sizes
/// {3, 3, 3, 2, 1, 1}, hence 3*3*3*2 = 54 forest structures and 2^6 = 64
/// candidate signatures.
pub fn polygon_world() -> ForestWorld {
    let boundary = sq(5.0, 5.0, 10.0, 10.0, 0.0, 0.95);
    let k = 0.8;
    let obstacles = [
        // Tree A: horizontal 3-chain, bottom left.
        sq(1.5, 1.5, 1.2, 1.2, 0.0, k),
        sq(2.3, 1.5, 1.2, 1.2, 0.0, k),
        sq(3.1, 1.5, 1.2, 1.2, 0.0, k),
        // Tree B: vertical 3-chain, top right.
        sq(7.5, 7.0, 1.2, 1.2, 0.0, k),
        sq(7.5, 7.8, 1.2, 1.2, 0.0, k),
        sq(7.5, 8.6, 1.2, 1.2, 0.0, k),
        // Tree C: L-shaped 3-tree, mid left (legs spaced so the diagonal
        // pair stays disjoint and the adjacency graph is acyclic).
        sq(2.0, 6.5, 1.2, 1.2, 0.0, k),
        sq(3.0, 6.5, 1.2, 1.2, 0.0, k),
        sq(3.0, 7.5, 1.2, 1.2, 0.0, k),
        // Tree D: horizontal pair, center.
        sq(5.0, 4.2, 1.2, 1.2, 0.0, k),
        sq(5.8, 4.2, 1.2, 1.2, 0.0, k),
        // Trees E, F: singletons.
        sq(8.3, 3.0, 1.4, 1.4, 0.0, k),
        sq(4.6, 8.3, 1.2, 1.2, 0.0, k),
    ];
    ForestWorld::new(boundary, &obstacles, Vec2::new(4.2, 6.0), Vec2::new(8.6, 1.6)).unwrap()
}

/// Three isolated obstacles between start and goal; single forest
/// structure, 8 candidate signatures. Small enough for brute-force oracles.
pub fn desk_world() -> ForestWorld {
    let boundary = sq(5.0, 5.0, 10.0, 10.0, 0.0, 0.5);
    let obstacles = [
        sq(3.5, 5.6, 1.4, 1.4, 0.0, 0.6),
        sq(5.0, 4.2, 1.4, 1.4, 0.0, 0.6),
        sq(6.5, 5.8, 1.4, 1.4, 0.0, 0.6),
    ];
    ForestWorld::new(boundary, &obstacles, Vec2::new(1.5, 5.0), Vec2::new(8.5, 5.0)).unwrap()
}

/// Three small trees (sizes 2, 2, 1) for path-pair invariance sweeps.
pub fn three_tree_world() -> ForestWorld {
    let boundary = sq(5.0, 5.0, 10.0, 10.0, 0.0, 0.7);
    let k = 0.7;
    let obstacles = [
        sq(3.0, 3.4, 1.3, 1.3, 0.0, k),
        sq(3.8, 3.4, 1.3, 1.3, 0.0, k),
        sq(6.4, 6.4, 1.3, 1.3, 0.0, k),
        sq(6.4, 7.2, 1.3, 1.3, 0.0, k),
        sq(7.2, 3.2, 1.3, 1.3, 0.0, k),
    ];
    ForestWorld::new(boundary, &obstacles, Vec2::new(1.2, 7.5), Vec2::new(8.8, 5.0)).unwrap()
}
