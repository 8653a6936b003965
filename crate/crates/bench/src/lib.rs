//! Shared workspaces for the pipeline benchmarks.

use navfield::{ForestWorld, Squircle, Vec2};

pub fn sq(cx: f64, cy: f64, w: f64, h: f64, kappa: f64) -> Squircle {
    Squircle::new(Vec2::new(cx, cy), w, h, 0.0, kappa).unwrap()
}

/// Three isolated obstacles between start and goal.
pub fn desk_world() -> ForestWorld {
    let boundary = sq(5.0, 5.0, 10.0, 10.0, 0.5);
    let obstacles = [
        sq(3.5, 5.6, 1.4, 1.4, 0.6),
        sq(5.0, 4.2, 1.4, 1.4, 0.6),
        sq(6.5, 5.8, 1.4, 1.4, 0.6),
    ];
    ForestWorld::new(boundary, &obstacles, Vec2::new(1.5, 5.0), Vec2::new(8.5, 5.0)).unwrap()
}
