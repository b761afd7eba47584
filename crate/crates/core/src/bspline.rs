//! Uniform cubic B-splines over (x, y, yaw).

use serde::{Deserialize, Serialize};

use crate::geom::{unwrap_angles, Vec2};
use crate::rc_esdf::SE2Pose;
use crate::{Error, Result};

pub const DEGREE: usize = 3;
/// Control points pinned at each end (boundary state).
pub const FIXED_PER_END: usize = DEGREE;
pub const MIN_CONTROL_POINTS: usize = 2 * DEGREE + 1;

/// Uniform cubic B-spline with position and yaw channels sharing one knot
/// vector. Duration is `(n - 3) · dt` for `n` control points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BSplineSE2 {
    pub dt: f64,
    pub ctrl: Vec<Vec2>,
    pub yaw: Vec<f64>,
}

/// Control points of the velocity, acceleration and jerk curves.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeCtrl {
    pub v: Vec<Vec2>,
    pub a: Vec<Vec2>,
    pub j: Vec<Vec2>,
    pub v_yaw: Vec<f64>,
    pub a_yaw: Vec<f64>,
    pub j_yaw: Vec<f64>,
}

/// Pose with time derivatives up to jerk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplineState {
    pub pose: SE2Pose,
    pub vel: Vec2,
    pub yaw_rate: f64,
    pub acc: Vec2,
    pub yaw_acc: f64,
    pub jerk: Vec2,
    pub yaw_jerk: f64,
}

fn diff<T>(xs: &[T], dt: f64) -> Vec<T>
where
    T: Copy + std::ops::Sub<Output = T> + std::ops::Mul<f64, Output = T>,
{
    xs.windows(2).map(|w| (w[1] - w[0]) * (1.0 / dt)).collect()
}

impl BSplineSE2 {
    pub fn new(dt: f64, ctrl: Vec<Vec2>, yaw: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidArgument(format!("knot span must be > 0, got {dt}")));
        }
        if ctrl.len() != yaw.len() {
            return Err(Error::InvalidArgument(format!(
                "{} position control points but {} yaw control points",
                ctrl.len(),
                yaw.len()
            )));
        }
        if ctrl.len() < MIN_CONTROL_POINTS {
            return Err(Error::InvalidArgument(format!(
                "need at least {MIN_CONTROL_POINTS} control points, got {}",
                ctrl.len()
            )));
        }
        Ok(Self { dt, ctrl, yaw })
    }

    pub fn len(&self) -> usize {
        self.ctrl.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ctrl.is_empty()
    }

    pub fn duration(&self) -> f64 {
        (self.len() - DEGREE) as f64 * self.dt
    }

    pub fn derivative_ctrl(&self) -> DerivativeCtrl {
        let v = diff(&self.ctrl, self.dt);
        let a = diff(&v, self.dt);
        let j = diff(&a, self.dt);
        let v_yaw = diff(&self.yaw, self.dt);
        let a_yaw = diff(&v_yaw, self.dt);
        let j_yaw = diff(&a_yaw, self.dt);
        DerivativeCtrl {
            v,
            a,
            j,
            v_yaw,
            a_yaw,
            j_yaw,
        }
    }

    /// Number of constraint points (one per knot): `n - 2`.
    pub fn num_constraint_points(&self) -> usize {
        self.len() - 2
    }

    /// Pose at knot `k` (0-based): `(Q_k + 4 Q_{k+1} + Q_{k+2}) / 6`.
    pub fn constraint_point(&self, k: usize) -> Result<SE2Pose> {
        if k >= self.num_constraint_points() {
            return Err(Error::IndexOutOfRange {
                index: k,
                valid: format!("0..{}", self.num_constraint_points()),
            });
        }
        let q = &self.ctrl;
        let y = &self.yaw;
        Ok(SE2Pose::new(
            (q[k] + q[k + 1] * 4.0 + q[k + 2]) / 6.0,
            (y[k] + 4.0 * y[k + 1] + y[k + 2]) / 6.0,
        ))
    }

    fn segment(&self, t: f64) -> Result<(usize, f64)> {
        let dur = self.duration();
        if !(t >= 0.0 && t <= dur) {
            return Err(Error::InvalidArgument(format!("time {t} outside [0, {dur}]")));
        }
        let s = ((t / self.dt).floor() as usize).min(self.len() - 4);
        Ok((s, t / self.dt - s as f64))
    }

    pub fn evaluate(&self, t: f64) -> Result<SE2Pose> {
        Ok(self.evaluate_full(t)?.pose)
    }

    /// Pose and derivatives at time `t`.
    pub fn evaluate_full(&self, t: f64) -> Result<SplineState> {
        let (s, u) = self.segment(t)?;
        let (u2, u3) = (u * u, u * u * u);
        let w = 1.0 - u;
        let b = [w * w * w / 6.0, (3.0 * u3 - 6.0 * u2 + 4.0) / 6.0, (-3.0 * u3 + 3.0 * u2 + 3.0 * u + 1.0) / 6.0, u3 / 6.0];
        let db = [-w * w / 2.0, (3.0 * u2 - 4.0 * u) / 2.0, (-3.0 * u2 + 2.0 * u + 1.0) / 2.0, u2 / 2.0];
        let ddb = [w, 3.0 * u - 2.0, 1.0 - 3.0 * u, u];
        let dddb = [-1.0, 3.0, -3.0, 1.0];
        let q = &self.ctrl[s..s + 4];
        let y = &self.yaw[s..s + 4];
        let comb = |c: &[f64; 4], scale: f64| -> (Vec2, f64) {
            let mut p = Vec2::zeros();
            let mut a = 0.0;
            for k in 0..4 {
                p += q[k] * c[k];
                a += y[k] * c[k];
            }
            (p * scale, a * scale)
        };
        let dt = self.dt;
        let (p, yaw) = comb(&b, 1.0);
        let (vel, yaw_rate) = comb(&db, 1.0 / dt);
        let (acc, yaw_acc) = comb(&ddb, 1.0 / (dt * dt));
        let (jerk, yaw_jerk) = comb(&dddb, 1.0 / (dt * dt * dt));
        Ok(SplineState {
            pose: SE2Pose::new(p, yaw),
            vel,
            yaw_rate,
            acc,
            yaw_acc,
            jerk,
            yaw_jerk,
        })
    }

    /// Mean jerk magnitude over the trajectory (sampled).
    pub fn mean_jerk(&self, samples: usize) -> f64 {
        let n = samples.max(2);
        let dur = self.duration();
        (0..n)
            .map(|k| self.evaluate_full(dur * k as f64 / (n - 1) as f64).map(|s| s.jerk.norm()).unwrap_or(0.0))
            .sum::<f64>()
            / n as f64
    }

    /// Arc length of the position curve (sampled).
    pub fn length(&self, samples: usize) -> f64 {
        let n = samples.max(2);
        let dur = self.duration();
        let pts: Vec<Vec2> = (0..n)
            .map(|k| self.evaluate(dur * k as f64 / (n - 1) as f64).expect("in range").p)
            .collect();
        pts.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }
}

/// Builds a spline from a reference path.
///
/// The first and last three control points sit on the start and goal poses
/// (zero boundary velocity and acceleration); the `n_ctrl - 6` interior
/// points are spread uniformly by arc length. Yaw is unwrapped along the
/// path and interpolated by arc length.
pub fn fit_from_path(path: &[SE2Pose], dt: f64, n_ctrl: usize) -> Result<BSplineSE2> {
    if path.len() < 2 {
        return Err(Error::InvalidArgument(format!("path needs at least 2 poses, got {}", path.len())));
    }
    if n_ctrl < MIN_CONTROL_POINTS {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_CONTROL_POINTS} control points, got {n_ctrl}"
        )));
    }
    let mut yaws: Vec<f64> = path.iter().map(|p| p.yaw).collect();
    unwrap_angles(&mut yaws);
    let mut arc = vec![0.0];
    for w in path.windows(2) {
        let last = *arc.last().unwrap();
        arc.push(last + (w[1].p - w[0].p).norm());
    }
    let total = *arc.last().unwrap();
    let (start, goal) = (path[0], path[path.len() - 1]);
    if total <= 0.0 {
        if start.p != goal.p || yaws[0] != *yaws.last().unwrap() {
            return Err(Error::Degenerate("path has zero length but distinct start and goal".into()));
        }
        return BSplineSE2::new(dt, vec![start.p; n_ctrl], vec![yaws[0]; n_ctrl]);
    }
    let interior = n_ctrl - 2 * FIXED_PER_END;
    let mut ctrl = vec![start.p; FIXED_PER_END];
    let mut yaw = vec![yaws[0]; FIXED_PER_END];
    let mut seg = 0;
    for i in 1..=interior {
        let s = total * i as f64 / (interior + 1) as f64;
        while seg + 2 < arc.len() && arc[seg + 1] < s {
            seg += 1;
        }
        let len = arc[seg + 1] - arc[seg];
        let f = if len > 0.0 { ((s - arc[seg]) / len).clamp(0.0, 1.0) } else { 0.0 };
        ctrl.push(path[seg].p + (path[seg + 1].p - path[seg].p) * f);
        yaw.push(yaws[seg] + (yaws[seg + 1] - yaws[seg]) * f);
    }
    let last_yaw = *yaws.last().unwrap();
    ctrl.extend(std::iter::repeat(goal.p).take(FIXED_PER_END));
    yaw.extend(std::iter::repeat(last_yaw).take(FIXED_PER_END));
    BSplineSE2::new(dt, ctrl, yaw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn line(n: usize, dt: f64) -> BSplineSE2 {
        BSplineSE2::new(
            dt,
            (0..n).map(|k| Vec2::new(k as f64, 0.0)).collect(),
            (0..n).map(|k| 0.1 * k as f64).collect(),
        )
        .unwrap()
    }

    #[test]
    fn derivative_ctrl_arithmetic() {
        let mut s = line(7, 0.5);
        let d = s.derivative_ctrl();
        assert_eq!(d.v.len(), 6);
        assert_eq!(d.a.len(), 5);
        assert_eq!(d.j.len(), 4);
        assert!(d.v.iter().all(|v| (v - Vec2::new(2.0, 0.0)).norm() < 1e-15));
        assert!(d.a.iter().all(|a| a.norm() < 1e-12));
        s.ctrl = vec![Vec2::new(3.0, -1.0); 7];
        let d = s.derivative_ctrl();
        assert!(d.v.iter().chain(&d.a).chain(&d.j).all(|v| *v == Vec2::zeros()));
    }

    #[test]
    fn constraint_point_cases() {
        let s = line(8, 1.0);
        let p = s.constraint_point(0).unwrap();
        assert!((p.p - Vec2::new(1.0, 0.0)).norm() < 1e-15);
        assert!(s.constraint_point(6).is_err());
        assert!(s.constraint_point(5).is_ok());
    }

    #[test]
    fn invalid_construction() {
        assert!(BSplineSE2::new(1.0, vec![Vec2::zeros(); 6], vec![0.0; 6]).is_err());
        assert!(BSplineSE2::new(1.0, vec![Vec2::zeros(); 7], vec![0.0; 8]).is_err());
        assert!(BSplineSE2::new(0.0, vec![Vec2::zeros(); 7], vec![0.0; 7]).is_err());
    }

    #[test]
    fn straight_line_constant_speed() {
        let s = line(10, 0.5);
        for k in 1..12 {
            let st = s.evaluate_full(0.3 * k as f64).unwrap();
            assert!((st.vel - Vec2::new(2.0, 0.0)).norm() < 1e-12);
            assert!(st.acc.norm() < 1e-9);
        }
        assert!(s.evaluate(-0.1).is_err());
        assert!(s.evaluate(s.duration() + 1e-9).is_err());
        assert!(s.evaluate(s.duration()).is_ok());
    }

    #[test]
    fn fit_two_pose_path() {
        let path = [SE2Pose::new(Vec2::zeros(), 0.0), SE2Pose::new(Vec2::new(7.0, 0.0), 0.0)];
        let s = fit_from_path(&path, 0.5, 12).unwrap();
        // 6 interior points at 1..=6 m.
        for (k, q) in s.ctrl[3..9].iter().enumerate() {
            assert!((q.x - (k + 1) as f64).abs() < 1e-12);
        }
        let st = s.evaluate_full(0.0).unwrap();
        assert_eq!(st.pose.p, Vec2::zeros());
        assert!(st.vel.norm() < 1e-15 && st.acc.norm() < 1e-15);
        let end = s.evaluate_full(s.duration()).unwrap();
        assert!((end.pose.p - Vec2::new(7.0, 0.0)).norm() < 1e-12);
        assert!(end.vel.norm() < 1e-12 && end.acc.norm() < 1e-12);
    }

    #[test]
    fn fit_unwraps_yaw() {
        let path = [
            SE2Pose::new(Vec2::zeros(), 2.9),
            SE2Pose::new(Vec2::new(1.0, 0.0), 3.1),
            SE2Pose::new(Vec2::new(2.0, 0.0), -3.1),
            SE2Pose::new(Vec2::new(3.0, 0.0), -2.9),
        ];
        let s = fit_from_path(&path, 0.3, 15).unwrap();
        for w in s.yaw.windows(2) {
            assert!(w[1] >= w[0] - 1e-12);
        }
        assert!((s.yaw.last().unwrap() - (2.0 * PI - 2.9)).abs() < 1e-12);
    }

    #[test]
    fn fit_degenerate() {
        let p = SE2Pose::new(Vec2::new(1.0, 1.0), 0.0);
        assert!(fit_from_path(&[p, SE2Pose { yaw: 1.0, ..p }], 0.5, 7).is_err());
        let s = fit_from_path(&[p, p], 0.5, 7).unwrap();
        assert!(s.ctrl.iter().all(|q| *q == p.p));
        assert!(fit_from_path(&[p], 0.5, 7).is_err());
    }
}
