//! Dense-sampling baseline over a world-frame signed distance field.
//!
//! Every body sample is transformed to the world at each pose and looked up
//! in the environment field, regardless of whether any obstacle is nearby.
//! Used only to compare evaluation cost against [`crate::rc_esdf`].

use crate::distance_field::{signed_field, ScalarField2D, SignConvention};
use crate::geom::{rotate, Vec2};
use crate::rc_esdf::{CollisionEval, SE2Pose};
use crate::scene::{rasterize_shape, OccupancyGrid2D, RobotShape};
use crate::{Error, Result};

/// World-frame field: negative inside obstacles, positive outside.
/// Queries outside its extent are errors.
#[derive(Debug, Clone)]
pub struct EnvEsdf {
    pub field: ScalarField2D,
}

/// Body-frame points covering the footprint.
#[derive(Debug, Clone, PartialEq)]
pub struct BodySamples {
    pub points: Vec<Vec2>,
    pub spacing: f64,
}

impl BodySamples {
    /// Cell centers of the footprint rasterized at `spacing`, plus points
    /// along every edge at most `spacing` apart.
    pub fn from_shape(shape: &RobotShape, spacing: f64) -> Result<Self> {
        let grid = rasterize_shape(shape, spacing, 0.0)?;
        let mut points: Vec<Vec2> = grid.occupied_cells().map(|(i, j)| grid.cell_center(i, j)).collect();
        for poly in shape.parts() {
            for (a, b) in poly.edges() {
                let n = ((b - a).norm() / spacing).ceil().max(1.0) as usize;
                for k in 0..n {
                    points.push(a + (b - a) * (k as f64 / n as f64));
                }
            }
        }
        Ok(Self { points, spacing })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Signed field over `map` as given.
pub fn build_env_esdf(map: &OccupancyGrid2D) -> Result<EnvEsdf> {
    Ok(EnvEsdf {
        field: signed_field(map, SignConvention::InsideNegativeOutsidePositive)?,
    })
}

/// Signed field over `map` grown by at least `margin` meters of free space
/// on every side, so that a robot anywhere on the map stays inside it.
pub fn build_env_esdf_padded(map: &OccupancyGrid2D, margin: f64) -> Result<EnvEsdf> {
    let cells = (margin / map.resolution).ceil() as usize + 1;
    build_env_esdf(&map.padded(cells))
}

/// Hinge penalty `Σ (d_thr − d_j)²` over body samples closer than `d_thr`
/// to an obstacle, with gradients with respect to the pose.
///
/// `d` in the result holds `-Σ (d_thr − d_j)` over active samples.
pub fn wbfp_eval(env: &EnvEsdf, samples: &BodySamples, pose: &SE2Pose, d_thr: f64) -> Result<CollisionEval> {
    let (s, c) = pose.yaw.sin_cos();
    let mut cost = 0.0;
    let mut violation = 0.0;
    let mut grad_p = Vec2::zeros();
    let mut grad_yaw = 0.0;
    let mut active = 0;
    for (index, &b) in samples.points.iter().enumerate() {
        let w = rotate(pose.yaw, b) + pose.p;
        let (dist, g) = env
            .field
            .sample(w)
            .ok_or(Error::SampleOutOfBounds { index, x: w.x, y: w.y })?;
        if dist < d_thr {
            let gap = d_thr - dist;
            cost += gap * gap;
            violation += gap;
            let dc_dw = g * (-2.0 * gap);
            grad_p += dc_dw;
            // dw/dyaw = R'(yaw) b
            let dw = Vec2::new(-s * b.x - c * b.y, c * b.x - s * b.y);
            grad_yaw += dc_dw.dot(&dw);
            active += 1;
        }
    }
    Ok(CollisionEval {
        d: -violation,
        cost,
        grad_p,
        grad_yaw,
        samples: active,
    })
}
