//! Robot-centric signed distance field and lazy whole-body collision cost.
//!
//! The field lives in the body frame: negative inside the (inflated)
//! footprint, zero on and outside it. At a pose, only world obstacle points
//! inside the field's world-frame bounding box are transformed into the
//! body frame, and only those that interpolate strictly negative count.
//! The cost at a pose is the square of the summed field values.

use serde::{Deserialize, Serialize};

use crate::distance_field::{signed_field, ScalarField2D, SignConvention};
use crate::geom::{rotate, rotate_inv, Aabb, Vec2};
use crate::scene::{rasterize_shape, PointCloud2D, RobotShape};
use crate::{Error, Result};

/// Planar pose. Yaw is kept unwrapped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SE2Pose {
    pub p: Vec2,
    pub yaw: f64,
}

impl SE2Pose {
    pub fn new(p: Vec2, yaw: f64) -> Self {
        Self { p, yaw }
    }

    pub fn is_finite(&self) -> bool {
        self.p.x.is_finite() && self.p.y.is_finite() && self.yaw.is_finite()
    }

    /// Body point to world: `R(yaw) b + p`.
    #[inline]
    pub fn transform(&self, b: Vec2) -> Vec2 {
        rotate(self.yaw, b) + self.p
    }

    /// World point to body: `R(yaw)ᵀ (w - p)`.
    #[inline]
    pub fn to_body(&self, w: Vec2) -> Vec2 {
        rotate_inv(self.yaw, w - self.p)
    }
}

/// Body-frame field built from the robot footprint.
#[derive(Debug, Clone)]
pub struct RcEsdf {
    pub field: ScalarField2D,
    /// Body-frame extent of the field.
    pub bounds: Aabb,
    pub inflation: f64,
}

/// An obstacle point that penetrates the footprint at some pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollisionSample {
    /// Index into the point cloud.
    pub index: usize,
    pub q_w: Vec2,
    pub q_b: Vec2,
    /// Field value at `q_b`, strictly negative.
    pub h: f64,
    /// Field gradient at `q_b` (body frame).
    pub g_b: Vec2,
}

/// Collision cost and its gradient with respect to the pose.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CollisionEval {
    /// Sum of field values over penetrating points (≤ 0).
    pub d: f64,
    /// `d²`.
    pub cost: f64,
    pub grad_p: Vec2,
    pub grad_yaw: f64,
    /// Number of penetrating points.
    pub samples: usize,
}

impl CollisionEval {
    /// Accumulates per-point terms into `d²` and its gradient.
    pub(crate) fn from_sums(d: f64, dh_dp: Vec2, dh_dyaw: f64, samples: usize) -> Self {
        Self {
            d,
            cost: d * d,
            grad_p: dh_dp * (2.0 * d),
            grad_yaw: 2.0 * d * dh_dyaw,
            samples,
        }
    }
}

/// Rasterizes the footprint and builds its inside-negative, outside-zero field.
pub fn build_rc_esdf(shape: &RobotShape, resolution: f64, inflation: f64) -> Result<RcEsdf> {
    let grid = rasterize_shape(shape, resolution, inflation)?;
    if grid.occupied_count() == 0 {
        return Err(Error::Degenerate(format!(
            "footprint rasterizes to no cells at resolution {resolution}"
        )));
    }
    let field = signed_field(&grid, SignConvention::InsideNegativeOutsideZero)?;
    if field.min_value() >= 0.0 {
        return Err(Error::Degenerate(format!(
            "footprint is too thin for resolution {resolution}: no interior vertex"
        )));
    }
    let (lo, hi) = field.extent();
    Ok(RcEsdf {
        field,
        bounds: Aabb::new(lo, hi),
        inflation,
    })
}

impl RcEsdf {
    /// Field value at a body-frame point (0 outside the extent).
    pub fn value(&self, q_b: Vec2) -> f64 {
        self.field.value_at(q_b).unwrap_or(0.0)
    }

    #[inline]
    fn probe(&self, pose: &SE2Pose, index: usize, q_w: Vec2) -> Option<CollisionSample> {
        let q_b = pose.to_body(q_w);
        let (h, g_b) = self.field.sample(q_b)?;
        (h < 0.0).then_some(CollisionSample { index, q_w, q_b, h, g_b })
    }

    /// Evaluates the pose cost, reusing `scratch` for the box query.
    pub fn eval_with(&self, pose: &SE2Pose, cloud: &PointCloud2D, scratch: &mut Vec<usize>) -> CollisionEval {
        cloud.query(&world_aabb(self, pose), scratch);
        let pts = cloud.points();
        accumulate(pose, scratch.iter().filter_map(|&k| self.probe(pose, k, pts[k])))
    }
}

/// World-frame AABB of the field at `pose`.
pub fn world_aabb(rc: &RcEsdf, pose: &SE2Pose) -> Aabb {
    let corners = rc.bounds.corners().map(|c| pose.transform(c));
    Aabb::from_points(&corners).expect("four corners")
}

/// Obstacle points that penetrate the footprint at `pose`, in cloud order.
pub fn collect_collision_points(rc: &RcEsdf, pose: &SE2Pose, cloud: &PointCloud2D) -> Vec<CollisionSample> {
    let mut idx = Vec::new();
    cloud.query(&world_aabb(rc, pose), &mut idx);
    let pts = cloud.points();
    idx.into_iter().filter_map(|k| rc.probe(pose, k, pts[k])).collect()
}

/// Same as [`collect_collision_points`] but scans every cloud point.
pub fn collect_collision_points_exhaustive(rc: &RcEsdf, pose: &SE2Pose, cloud: &PointCloud2D) -> Vec<CollisionSample> {
    cloud
        .points()
        .iter()
        .enumerate()
        .filter_map(|(k, &q)| rc.probe(pose, k, q))
        .collect()
}

/// Collision cost `(Σ H)²` at `pose` with gradients with respect to
/// position and yaw, using the bounding-box filter.
pub fn collision_eval(rc: &RcEsdf, pose: &SE2Pose, cloud: &PointCloud2D) -> CollisionEval {
    rc.eval_with(pose, cloud, &mut Vec::new())
}

/// Reference evaluation without the bounding-box filter.
pub fn collision_eval_exhaustive(rc: &RcEsdf, pose: &SE2Pose, cloud: &PointCloud2D) -> CollisionEval {
    let pts = cloud.points();
    accumulate(pose, (0..pts.len()).filter_map(|k| rc.probe(pose, k, pts[k])))
}

fn accumulate(pose: &SE2Pose, samples: impl Iterator<Item = CollisionSample>) -> CollisionEval {
    let (s, c) = pose.yaw.sin_cos();
    let mut d = 0.0;
    let mut dp = Vec2::zeros();
    let mut dyaw = 0.0;
    let mut count = 0;
    for smp in samples {
        let g = smp.g_b;
        d += smp.h;
        // dH/dp = -R g
        dp += Vec2::new(-(c * g.x - s * g.y), -(s * g.x + c * g.y));
        // dH/dyaw = (q_w - p)ᵀ [[-s, -c], [c, -s]] g
        let r = smp.q_w - pose.p;
        dyaw += r.x * (-s * g.x - c * g.y) + r.y * (c * g.x - s * g.y);
        count += 1;
    }
    CollisionEval::from_sums(d, dp, dyaw, count)
}
