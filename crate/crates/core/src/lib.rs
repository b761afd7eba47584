//! Whole-body SE(2) trajectory optimization on top of a robot-centric
//! signed distance field.
//!
//! The field is built once in the robot body frame from the footprint
//! ([`rc_esdf::RcEsdf`]). During optimization, world obstacle points are
//! transformed into the body frame only when they fall inside the field's
//! world-frame bounding box, and only those that interpolate to a negative
//! value contribute cost and gradient. Position and yaw are parameterized
//! jointly by a uniform cubic B-spline ([`bspline::BSplineSE2`]) and
//! optimized with L-BFGS under a weak-Wolfe line search that tolerates the
//! kinks of piecewise-bilinear interpolation ([`solver::minimize`]).
//!
//! A dense-sampling baseline over a world-frame field lives in
//! [`env_esdf`] and exists for timing comparisons.

pub mod benchmark;
pub mod bspline;
pub mod distance_field;
pub mod env_esdf;
mod error;
pub mod geom;
pub mod objective;
pub mod pipeline;
pub mod rc_esdf;
pub mod scene;
pub mod scenarios;
pub mod solver;

pub use error::{Error, Result};
pub use geom::{Aabb, Vec2};
