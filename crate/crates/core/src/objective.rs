//! Trajectory cost: smoothness, dynamic feasibility and collision.
//!
//! Decision variables are the free control points (all but the first and
//! last three), flattened as `[x.., y.., yaw..]`.

use serde::{Deserialize, Serialize};

use crate::bspline::{BSplineSE2, FIXED_PER_END};
use crate::env_esdf::{wbfp_eval, BodySamples, EnvEsdf};
use crate::geom::Vec2;
use crate::rc_esdf::{CollisionEval, RcEsdf, SE2Pose};
use crate::scene::PointCloud2D;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltyWeights {
    pub smooth_pos: f64,
    pub feas_pos: f64,
    pub smooth_yaw: f64,
    pub feas_yaw: f64,
    pub collision: f64,
}

impl Default for PenaltyWeights {
    fn default() -> Self {
        Self {
            smooth_pos: 1.0,
            feas_pos: 10.0,
            smooth_yaw: 1.0,
            feas_yaw: 10.0,
            collision: 1.0e4,
        }
    }
}

impl PenaltyWeights {
    pub fn validate(&self) -> Result<()> {
        let w = [self.smooth_pos, self.feas_pos, self.smooth_yaw, self.feas_yaw, self.collision];
        if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidArgument(format!("weights must be finite and >= 0: {self:?}")));
        }
        Ok(())
    }
}

/// Velocity and acceleration bounds for position (m/s, m/s²) and yaw
/// (rad/s, rad/s²).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Limits {
    pub v_max: f64,
    pub a_max: f64,
    pub yaw_rate_max: f64,
    pub yaw_acc_max: f64,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            v_max: 1.5,
            a_max: 1.5,
            yaw_rate_max: 1.5,
            yaw_acc_max: 1.5,
        }
    }
}

impl Limits {
    pub fn validate(&self) -> Result<()> {
        let l = [self.v_max, self.a_max, self.yaw_rate_max, self.yaw_acc_max];
        if l.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidArgument(format!("limits must be finite and > 0: {self:?}")));
        }
        Ok(())
    }
}

/// Shape of the over-limit penalty applied to `x = ‖v‖² − v_max²`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeasibilityPenalty {
    /// `max(0, x)`
    #[default]
    Hinge,
    /// `max(0, x)³`
    Cubic,
}

impl FeasibilityPenalty {
    #[inline]
    fn apply(self, x: f64) -> (f64, f64) {
        if x <= 0.0 {
            return (0.0, 0.0);
        }
        match self {
            Self::Hinge => (x, 1.0),
            Self::Cubic => (x * x * x, 3.0 * x * x),
        }
    }
}

/// Unweighted term values.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TermValues {
    pub smooth_pos: f64,
    pub feas_pos: f64,
    pub smooth_yaw: f64,
    pub feas_yaw: f64,
    pub collision: f64,
}

impl TermValues {
    pub fn weighted(&self, w: &PenaltyWeights) -> f64 {
        w.smooth_pos * self.smooth_pos
            + w.feas_pos * self.feas_pos
            + w.smooth_yaw * self.smooth_yaw
            + w.feas_yaw * self.feas_yaw
            + w.collision * self.collision
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub total: f64,
    pub terms: TermValues,
    /// Over free control points, `[x.., y.., yaw..]`.
    #[serde(skip)]
    pub gradient: Vec<f64>,
}

/// Gradient over every control point, before restriction to the free set.
#[derive(Debug, Clone, PartialEq)]
pub struct CtrlGradient {
    pub pos: Vec<Vec2>,
    pub yaw: Vec<f64>,
}

impl CtrlGradient {
    pub fn zeros(n: usize) -> Self {
        Self {
            pos: vec![Vec2::zeros(); n],
            yaw: vec![0.0; n],
        }
    }

    fn axpy(&mut self, a: f64, other: &Self) {
        for (g, o) in self.pos.iter_mut().zip(&other.pos) {
            *g += o * a;
        }
        for (g, o) in self.yaw.iter_mut().zip(&other.yaw) {
            *g += a * o;
        }
    }

    /// Restricts to the free control points in the flat layout.
    pub fn free(&self) -> Vec<f64> {
        let n = self.pos.len();
        let range = FIXED_PER_END..n - FIXED_PER_END;
        let mut out = Vec::with_capacity(3 * range.len());
        out.extend(self.pos[range.clone()].iter().map(|g| g.x));
        out.extend(self.pos[range.clone()].iter().map(|g| g.y));
        out.extend(self.yaw[range].iter().copied());
        out
    }
}

/// Number of free control points for `n_ctrl` control points.
pub fn free_count(n_ctrl: usize) -> usize {
    n_ctrl.saturating_sub(2 * FIXED_PER_END)
}

/// Flattens the free control points of `spline`.
pub fn pack_free(spline: &BSplineSE2) -> Vec<f64> {
    let n = spline.len();
    let r = FIXED_PER_END..n - FIXED_PER_END;
    let mut x = Vec::with_capacity(3 * r.len());
    x.extend(spline.ctrl[r.clone()].iter().map(|q| q.x));
    x.extend(spline.ctrl[r.clone()].iter().map(|q| q.y));
    x.extend(spline.yaw[r].iter().copied());
    x
}

/// Writes a flat free-variable vector back into `spline`.
pub fn unpack_free(spline: &mut BSplineSE2, x: &[f64]) {
    let m = free_count(spline.len());
    assert_eq!(x.len(), 3 * m, "free vector length");
    for k in 0..m {
        spline.ctrl[FIXED_PER_END + k] = Vec2::new(x[k], x[m + k]);
        spline.yaw[FIXED_PER_END + k] = x[2 * m + k];
    }
}

/// Adjoint of the finite difference `out[i] = (x[i+1] - x[i]) / dt`.
fn diff_back<T>(g_out: &[T], dt: f64, g_in: &mut [T])
where
    T: Copy + std::ops::AddAssign + std::ops::SubAssign + std::ops::Mul<f64, Output = T>,
{
    for (i, &g) in g_out.iter().enumerate() {
        let s = g * (1.0 / dt);
        g_in[i] -= s;
        g_in[i + 1] += s;
    }
}

/// `Σ‖A_k‖² + Σ‖J_k‖²` for position and the yaw analogue, with gradients
/// over all control points.
pub fn smoothness(spline: &BSplineSE2) -> ((f64, f64), CtrlGradient) {
    let d = spline.derivative_ctrl();
    let dt = spline.dt;
    let n = spline.len();
    let j_ps: f64 = d.a.iter().chain(&d.j).map(|v| v.norm_squared()).sum();
    let j_ys: f64 = d.a_yaw.iter().chain(&d.j_yaw).map(|v| v * v).sum();

    let mut ga: Vec<Vec2> = d.a.iter().map(|a| a * 2.0).collect();
    let gj: Vec<Vec2> = d.j.iter().map(|j| j * 2.0).collect();
    diff_back(&gj, dt, &mut ga);
    let mut gv = vec![Vec2::zeros(); n - 1];
    diff_back(&ga, dt, &mut gv);
    let mut gq = vec![Vec2::zeros(); n];
    diff_back(&gv, dt, &mut gq);

    let mut ga_y: Vec<f64> = d.a_yaw.iter().map(|a| 2.0 * a).collect();
    let gj_y: Vec<f64> = d.j_yaw.iter().map(|j| 2.0 * j).collect();
    diff_back(&gj_y, dt, &mut ga_y);
    let mut gv_y = vec![0.0; n - 1];
    diff_back(&ga_y, dt, &mut gv_y);
    let mut gy = vec![0.0; n];
    diff_back(&gv_y, dt, &mut gy);

    ((j_ps, j_ys), CtrlGradient { pos: gq, yaw: gy })
}

/// Over-limit penalties on velocity and acceleration control points.
pub fn feasibility(spline: &BSplineSE2, limits: &Limits, kind: FeasibilityPenalty) -> ((f64, f64), CtrlGradient) {
    let d = spline.derivative_ctrl();
    let dt = spline.dt;
    let n = spline.len();

    let vec_term = |xs: &[Vec2], lim: f64| -> (f64, Vec<Vec2>) {
        let mut j = 0.0;
        let g = xs
            .iter()
            .map(|v| {
                let (c, dc) = kind.apply(v.norm_squared() - lim * lim);
                j += c;
                v * (2.0 * dc)
            })
            .collect();
        (j, g)
    };
    let scalar_term = |xs: &[f64], lim: f64| -> (f64, Vec<f64>) {
        let mut j = 0.0;
        let g = xs
            .iter()
            .map(|v| {
                let (c, dc) = kind.apply(v * v - lim * lim);
                j += c;
                2.0 * dc * v
            })
            .collect();
        (j, g)
    };

    let (jv, mut gv) = vec_term(&d.v, limits.v_max);
    let (ja, ga) = vec_term(&d.a, limits.a_max);
    diff_back(&ga, dt, &mut gv);
    let mut gq = vec![Vec2::zeros(); n];
    diff_back(&gv, dt, &mut gq);

    let (jvy, mut gvy) = scalar_term(&d.v_yaw, limits.yaw_rate_max);
    let (jay, gay) = scalar_term(&d.a_yaw, limits.yaw_acc_max);
    diff_back(&gay, dt, &mut gvy);
    let mut gy = vec![0.0; n];
    diff_back(&gvy, dt, &mut gy);

    ((jv + ja, jvy + jay), CtrlGradient { pos: gq, yaw: gy })
}

/// Pose-level collision cost used by [`collision`].
pub enum CollisionModel<'a> {
    /// No obstacles considered.
    None,
    /// Lazy robot-centric field against an obstacle cloud.
    Rc { rc: &'a RcEsdf, cloud: &'a PointCloud2D },
    /// Dense body sampling against a world field.
    Wbfp {
        env: &'a EnvEsdf,
        samples: &'a BodySamples,
        threshold: f64,
    },
}

impl CollisionModel<'_> {
    pub fn eval(&self, pose: &SE2Pose, scratch: &mut Vec<usize>) -> Result<CollisionEval> {
        match self {
            Self::None => Ok(CollisionEval::default()),
            Self::Rc { rc, cloud } => Ok(rc.eval_with(pose, cloud, scratch)),
            Self::Wbfp {
                env,
                samples,
                threshold,
            } => wbfp_eval(env, samples, pose, *threshold),
        }
    }
}

/// Sum of pose costs at every constraint point, with each pose gradient
/// spread onto its three control points in the ratio 1:4:1.
pub fn collision(spline: &BSplineSE2, model: &CollisionModel) -> Result<(f64, CtrlGradient)> {
    let n = spline.len();
    let mut g = CtrlGradient::zeros(n);
    let mut cost = 0.0;
    let mut scratch = Vec::new();
    for k in 0..spline.num_constraint_points() {
        let pose = spline.constraint_point(k)?;
        let e = model.eval(&pose, &mut scratch)?;
        if e.samples == 0 {
            continue;
        }
        cost += e.cost;
        for (off, w) in [(0, 1.0 / 6.0), (1, 4.0 / 6.0), (2, 1.0 / 6.0)] {
            g.pos[k + off] += e.grad_p * w;
            g.yaw[k + off] += e.grad_yaw * w;
        }
    }
    Ok((cost, g))
}

/// Weighted total cost with gradient over the free control points.
pub fn total(
    spline: &BSplineSE2,
    weights: &PenaltyWeights,
    limits: &Limits,
    kind: FeasibilityPenalty,
    model: &CollisionModel,
) -> Result<CostBreakdown> {
    let n = spline.len();
    let mut g = CtrlGradient::zeros(n);
    let ((sp, sy), gs) = smoothness(spline);
    let ((fp, fy), gf) = feasibility(spline, limits, kind);
    // Position and yaw parts of each term carry separate weights.
    add_split(&mut g, &gs, weights.smooth_pos, weights.smooth_yaw);
    add_split(&mut g, &gf, weights.feas_pos, weights.feas_yaw);
    let mut jc = 0.0;
    if weights.collision > 0.0 {
        let (c, gc) = collision(spline, model)?;
        jc = c;
        g.axpy(weights.collision, &gc);
    }
    let terms = TermValues {
        smooth_pos: sp,
        feas_pos: fp,
        smooth_yaw: sy,
        feas_yaw: fy,
        collision: jc,
    };
    Ok(CostBreakdown {
        total: terms.weighted(weights),
        terms,
        gradient: g.free(),
    })
}

fn add_split(acc: &mut CtrlGradient, g: &CtrlGradient, w_pos: f64, w_yaw: f64) {
    for (a, b) in acc.pos.iter_mut().zip(&g.pos) {
        *a += b * w_pos;
    }
    for (a, b) in acc.yaw.iter_mut().zip(&g.yaw) {
        *a += w_yaw * b;
    }
}

/// Everything needed to evaluate the cost of a free-variable vector.
pub struct Objective<'a> {
    pub template: BSplineSE2,
    pub weights: PenaltyWeights,
    pub limits: Limits,
    pub penalty: FeasibilityPenalty,
    pub model: CollisionModel<'a>,
}

impl Objective<'_> {
    pub fn spline_at(&self, x: &[f64]) -> BSplineSE2 {
        let mut s = self.template.clone();
        unpack_free(&mut s, x);
        s
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<CostBreakdown> {
        total(&self.spline_at(x), &self.weights, &self.limits, self.penalty, &self.model)
    }
}
