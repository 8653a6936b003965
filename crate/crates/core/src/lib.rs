//! Harmonic potential fields over 2-D forest-of-squircle workspaces with
//! customizable path topology.
//!
//! The pipeline: a workspace of overlapping squircle obstacles is grouped
//! into trees ([`geometry`]), mapped to an unbounded point world through a
//! chain of diffeomorphisms ([`transform`]), where log-distance harmonic
//! potentials ([`potential`]) drive gradient-descent paths ([`flow`]).
//! Paths are classified by signed-distance signatures ([`topology`]), and
//! the tree structure plus potential weights are optimized per homotopy
//! class ([`optimizer`], [`planner`]).

pub mod flow;
pub mod geometry;
pub mod optimizer;
pub mod planner;
pub mod potential;
pub mod topology;
pub mod transform;

/// 2-D point or vector.
pub type Vec2 = nalgebra::Vector2<f64>;
/// 2x2 real matrix (Jacobians).
pub type Mat2 = nalgebra::Matrix2<f64>;

pub use flow::{IntegrationConfig, PathPolyline, WorldTag};
pub use geometry::{ForestWorld, Squircle, TreeOfSquircles};
pub use optimizer::{OptimizationTrace, OptimizerConfig};
pub use planner::{PlannerConfig, RegionKind, RegionPreference, Solution};
pub use potential::WeightVector;
pub use topology::{DSignature, EnclosingCircle, HSignature};
pub use transform::{DiffeoChain, PointWorld};
