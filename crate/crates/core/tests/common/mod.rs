//! Shared oracles and generators for the integration tests.
#![allow(dead_code)]

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rcesdf::bspline::BSplineSE2;
use rcesdf::distance_field::ScalarField2D;
use rcesdf::env_esdf::{BodySamples, EnvEsdf};
use rcesdf::objective::{
    collision, feasibility, smoothness, total, CollisionModel, CtrlGradient, FeasibilityPenalty, Limits,
    PenaltyWeights,
};
use rcesdf::rc_esdf::{build_rc_esdf, collect_collision_points, RcEsdf, SE2Pose};
use rcesdf::scene::{PointCloud2D, RobotShape};
use rcesdf::Vec2;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `‖a − b‖∞ / max(‖a‖∞, ‖b‖∞)`, with the denominator floored at `floor`.
pub fn rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let diff = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    let scale = a.iter().chain(b).fold(0.0f64, |m, v| m.max(v.abs()));
    diff / scale.max(floor)
}

/// Brute-force distance transform: for every vertex, the distance to the
/// nearest `true` vertex (`f64::INFINITY` when there is none).
pub fn brute_edt(mask: &[bool], nx: usize, ny: usize) -> Vec<f64> {
    let sites: Vec<(f64, f64)> = (0..nx * ny)
        .filter(|&k| mask[k])
        .map(|k| ((k % nx) as f64, (k / nx) as f64))
        .collect();
    (0..nx * ny)
        .map(|k| {
            let (x, y) = ((k % nx) as f64, (k / nx) as f64);
            sites
                .iter()
                .map(|&(sx, sy)| ((x - sx).powi(2) + (y - sy).powi(2)).sqrt())
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

pub fn random_robot(rng: &mut impl Rng) -> RobotShape {
    if rng.gen_bool(0.5) {
        RobotShape::rectangle(rng.gen_range(0.6..1.8), rng.gen_range(0.3..1.2)).unwrap()
    } else {
        RobotShape::l_shape(rng.gen_range(0.8..1.4), rng.gen_range(0.3..0.5)).unwrap()
    }
}

pub fn random_rc(rng: &mut impl Rng) -> (RobotShape, RcEsdf) {
    let robot = random_robot(rng);
    let rc = build_rc_esdf(&robot, 0.1, rng.gen_range(0.0..0.2)).unwrap();
    (robot, rc)
}

/// Random-walk spline with `n` control points around the origin.
pub fn random_spline(rng: &mut impl Rng, n: usize) -> BSplineSE2 {
    let mut p = Vec2::zeros();
    let mut yaw = rng.gen_range(-3.0..3.0);
    let mut ctrl = Vec::with_capacity(n);
    let mut yaws = Vec::with_capacity(n);
    for _ in 0..n {
        ctrl.push(p);
        yaws.push(yaw);
        p += Vec2::new(rng.gen_range(-0.3..0.6), rng.gen_range(-0.4..0.4));
        yaw += rng.gen_range(-0.4..0.4);
    }
    BSplineSE2::new(rng.gen_range(0.3..1.0), ctrl, yaws).unwrap()
}

/// Cloud of points scattered over the bounding box of the control
/// polygon, grown by `margin`.
pub fn cloud_around(rng: &mut impl Rng, spline: &BSplineSE2, count: usize, margin: f64) -> PointCloud2D {
    let lo = spline.ctrl.iter().fold(Vec2::repeat(f64::INFINITY), |m, p| m.inf(p)) - Vec2::repeat(margin);
    let hi = spline.ctrl.iter().fold(Vec2::repeat(f64::NEG_INFINITY), |m, p| m.sup(p)) + Vec2::repeat(margin);
    let pts = (0..count)
        .map(|_| Vec2::new(rng.gen_range(lo.x..hi.x), rng.gen_range(lo.y..hi.y)))
        .collect();
    PointCloud2D::new(pts).unwrap()
}

/// Number of scalar coordinates of a spline: x, y and yaw per point.
pub fn coords(s: &BSplineSE2) -> usize {
    3 * s.len()
}

pub fn perturbed(s: &BSplineSE2, c: usize, h: f64) -> BSplineSE2 {
    let mut out = s.clone();
    let (i, axis) = (c / 3, c % 3);
    match axis {
        0 => out.ctrl[i].x += h,
        1 => out.ctrl[i].y += h,
        _ => out.yaw[i] += h,
    }
    out
}

/// Analytic gradient in the same coordinate order as [`perturbed`].
pub fn flatten(g: &CtrlGradient) -> Vec<f64> {
    g.pos.iter().zip(&g.yaw).flat_map(|(p, y)| [p.x, p.y, *y]).collect()
}

/// Central differences of `f` over every spline coordinate. Returns `None`
/// if `sig` changes under any perturbation, i.e. some kink lies within `h`.
pub fn fd_spline<S: PartialEq>(
    s: &BSplineSE2,
    h: f64,
    f: impl Fn(&BSplineSE2) -> f64,
    sig: impl Fn(&BSplineSE2) -> S,
) -> Option<Vec<f64>> {
    let base = sig(s);
    (0..coords(s))
        .map(|c| {
            let (sp, sm) = (perturbed(s, c, h), perturbed(s, c, -h));
            (sig(&sp) == base && sig(&sm) == base).then(|| (f(&sp) - f(&sm)) / (2.0 * h))
        })
        .collect()
}

fn cell_of(field: &ScalarField2D, p: Vec2) -> (i64, i64) {
    let q = (p - field.origin) / field.resolution;
    (q.x.floor() as i64, q.y.floor() as i64)
}

/// Which cloud points penetrate at which constraint point, and in which
/// field cell they fall.
pub fn rc_signature(rc: &RcEsdf, cloud: &PointCloud2D, s: &BSplineSE2) -> Vec<(usize, usize, (i64, i64))> {
    let mut out = Vec::new();
    for k in 0..s.num_constraint_points() {
        let pose = s.constraint_point(k).unwrap();
        for c in collect_collision_points(rc, &pose, cloud) {
            out.push((k, c.index, cell_of(&rc.field, c.q_b)));
        }
    }
    out
}

pub fn rc_pose_signature(rc: &RcEsdf, cloud: &PointCloud2D, pose: &SE2Pose) -> Vec<(usize, (i64, i64))> {
    collect_collision_points(rc, pose, cloud)
        .into_iter()
        .map(|c| (c.index, cell_of(&rc.field, c.q_b)))
        .collect()
}

/// Active body samples and their cells in the world field.
pub fn wbfp_pose_signature(env: &EnvEsdf, samples: &BodySamples, thr: f64, pose: &SE2Pose) -> Vec<(usize, (i64, i64))> {
    samples
        .points
        .iter()
        .enumerate()
        .filter_map(|(k, &b)| {
            let w = pose.transform(b);
            let v = env.field.value_at(w)?;
            (v < thr).then(|| (k, cell_of(&env.field, w)))
        })
        .collect()
}

pub fn wbfp_signature(env: &EnvEsdf, samples: &BodySamples, thr: f64, s: &BSplineSE2) -> Vec<(usize, usize, (i64, i64))> {
    let mut out = Vec::new();
    for k in 0..s.num_constraint_points() {
        let pose = s.constraint_point(k).unwrap();
        out.extend(wbfp_pose_signature(env, samples, thr, &pose).into_iter().map(|(i, c)| (k, i, c)));
    }
    out
}

/// Which velocity / acceleration control points exceed their limits.
pub fn feas_signature(s: &BSplineSE2, lim: &Limits) -> Vec<bool> {
    let d = s.derivative_ctrl();
    let over = |x2: f64, l: f64| x2 > l * l;
    d.v.iter()
        .map(|v| over(v.norm_squared(), lim.v_max))
        .chain(d.a.iter().map(|a| over(a.norm_squared(), lim.a_max)))
        .chain(d.v_yaw.iter().map(|v| over(v * v, lim.yaw_rate_max)))
        .chain(d.a_yaw.iter().map(|a| over(a * a, lim.yaw_acc_max)))
        .collect()
}

/// Outcome of one gradient-check configuration.
pub enum Check {
    /// A kink lies within the step; configuration skipped.
    Skipped,
    Passed,
    Failed(String),
}

pub fn check_smoothness(rng: &mut impl Rng) -> Check {
    let n = rng.gen_range(7..14);
    let s = random_spline(rng, n);
    let (_, g) = smoothness(&s);
    let f = |s: &BSplineSE2| {
        let ((p, y), _) = smoothness(s);
        p + y
    };
    // The term is quadratic, so central differences are exact up to rounding.
    let fd = fd_spline(&s, 1e-3, f, |_| ()).unwrap();
    let e = rel_err(&flatten(&g), &fd, 1.0);
    if e <= 1e-8 {
        Check::Passed
    } else {
        Check::Failed(format!("smoothness rel err {e:e}"))
    }
}

pub fn random_limits(rng: &mut impl Rng) -> Limits {
    Limits {
        v_max: rng.gen_range(0.2..1.0),
        a_max: rng.gen_range(0.2..1.0),
        yaw_rate_max: rng.gen_range(0.2..1.0),
        yaw_acc_max: rng.gen_range(0.2..1.0),
    }
}

pub fn check_feasibility(rng: &mut impl Rng, kind: FeasibilityPenalty) -> Check {
    let n = rng.gen_range(7..14);
    let s = random_spline(rng, n);
    let lim = random_limits(rng);
    let (_, g) = feasibility(&s, &lim, kind);
    let f = |s: &BSplineSE2| {
        let ((p, y), _) = feasibility(s, &lim, kind);
        p + y
    };
    let Some(fd) = fd_spline(&s, 1e-6, f, |s| feas_signature(s, &lim)) else {
        return Check::Skipped;
    };
    let e = rel_err(&flatten(&g), &fd, 1e-3);
    if e <= 1e-6 {
        Check::Passed
    } else {
        Check::Failed(format!("feasibility ({kind:?}) rel err {e:e}"))
    }
}

pub fn check_rc_collision(rng: &mut impl Rng) -> Check {
    let (_, rc) = random_rc(rng);
    let n = rng.gen_range(7..11);
    let s = random_spline(rng, n);
    let count = rng.gen_range(10..60);
    let cloud = cloud_around(rng, &s, count, 0.8);
    let model = CollisionModel::Rc { rc: &rc, cloud: &cloud };
    let (_, g) = collision(&s, &model).unwrap();
    let f = |s: &BSplineSE2| collision(s, &model).unwrap().0;
    let Some(fd) = fd_spline(&s, 1e-6, f, |s| rc_signature(&rc, &cloud, s)) else {
        return Check::Skipped;
    };
    let e = rel_err(&flatten(&g), &fd, 1e-3);
    if e <= 1e-4 {
        Check::Passed
    } else {
        Check::Failed(format!("rc collision rel err {e:e}"))
    }
}

/// World map with a few random blocks, and its padded field.
pub fn random_env(rng: &mut impl Rng, s: &BSplineSE2) -> EnvEsdf {
    use rcesdf::scene::OccupancyGrid2D;
    let lo = s.ctrl.iter().fold(Vec2::repeat(f64::INFINITY), |m, p| m.inf(p)) - Vec2::repeat(2.0);
    let hi = s.ctrl.iter().fold(Vec2::repeat(f64::NEG_INFINITY), |m, p| m.sup(p)) + Vec2::repeat(2.0);
    let res = 0.1;
    let (nx, ny) = (((hi.x - lo.x) / res).ceil() as usize, ((hi.y - lo.y) / res).ceil() as usize);
    let mut g = OccupancyGrid2D::new(lo, res, nx, ny).unwrap();
    for _ in 0..rng.gen_range(3..10) {
        let (i0, j0) = (rng.gen_range(0..nx), rng.gen_range(0..ny));
        let (w, h) = (rng.gen_range(1..6), rng.gen_range(1..6));
        for j in j0..(j0 + h).min(ny) {
            for i in i0..(i0 + w).min(nx) {
                g.set(i, j, true);
            }
        }
    }
    g.set(0, 0, false);
    rcesdf::env_esdf::build_env_esdf_padded(&g, 2.0).unwrap()
}

pub fn check_wbfp_collision(rng: &mut impl Rng) -> Check {
    let robot = random_robot(rng);
    let samples = BodySamples::from_shape(&robot, 0.1).unwrap();
    let n = rng.gen_range(7..11);
    let s = random_spline(rng, n);
    let env = random_env(rng, &s);
    let thr = rng.gen_range(0.0..0.3);
    let model = CollisionModel::Wbfp {
        env: &env,
        samples: &samples,
        threshold: thr,
    };
    let (_, g) = collision(&s, &model).unwrap();
    let f = |s: &BSplineSE2| collision(s, &model).unwrap().0;
    let Some(fd) = fd_spline(&s, 1e-6, f, |s| wbfp_signature(&env, &samples, thr, s)) else {
        return Check::Skipped;
    };
    let e = rel_err(&flatten(&g), &fd, 1e-3);
    if e <= 1e-4 {
        Check::Passed
    } else {
        Check::Failed(format!("wbfp collision rel err {e:e}"))
    }
}

/// Total cost over the free variables against central differences.
pub fn check_total(rng: &mut impl Rng) -> Check {
    use rcesdf::objective::{pack_free, unpack_free};
    let (_, rc) = random_rc(rng);
    let n = rng.gen_range(7..11);
    let s = random_spline(rng, n);
    let count = rng.gen_range(10..60);
    let cloud = cloud_around(rng, &s, count, 0.8);
    let lim = random_limits(rng);
    let w = PenaltyWeights {
        smooth_pos: rng.gen_range(0.1..2.0),
        feas_pos: rng.gen_range(0.1..2.0),
        smooth_yaw: rng.gen_range(0.1..2.0),
        feas_yaw: rng.gen_range(0.1..2.0),
        collision: rng.gen_range(1.0..100.0),
    };
    let model = CollisionModel::Rc { rc: &rc, cloud: &cloud };
    let kind = FeasibilityPenalty::Hinge;
    let cost = total(&s, &w, &lim, kind, &model).unwrap();
    let x0 = pack_free(&s);
    let at = |x: &[f64]| {
        let mut t = s.clone();
        unpack_free(&mut t, x);
        t
    };
    let sig = |t: &BSplineSE2| (rc_signature(&rc, &cloud, t), feas_signature(t, &lim));
    let base = sig(&s);
    let h = 1e-6;
    let mut fd = Vec::with_capacity(x0.len());
    for i in 0..x0.len() {
        let (mut xp, mut xm) = (x0.clone(), x0.clone());
        xp[i] += h;
        xm[i] -= h;
        let (sp, sm) = (at(&xp), at(&xm));
        if sig(&sp) != base || sig(&sm) != base {
            return Check::Skipped;
        }
        let fp = total(&sp, &w, &lim, kind, &model).unwrap().total;
        let fm = total(&sm, &w, &lim, kind, &model).unwrap().total;
        fd.push((fp - fm) / (2.0 * h));
    }
    // Independent recomputation of the total from the individual terms.
    let ((sp, sy), _) = smoothness(&s);
    let ((fp, fy), _) = feasibility(&s, &lim, kind);
    let (jc, _) = collision(&s, &model).unwrap();
    let recomputed = w.smooth_pos * sp + w.smooth_yaw * sy + w.feas_pos * fp + w.feas_yaw * fy + w.collision * jc;
    if (recomputed - cost.total).abs() > 1e-12 * recomputed.abs().max(1.0) {
        return Check::Failed(format!("total {} vs recomputed {recomputed}", cost.total));
    }
    let e = rel_err(&cost.gradient, &fd, 1e-3);
    if e <= 1e-4 {
        Check::Passed
    } else {
        Check::Failed(format!("total rel err {e:e}"))
    }
}

/// Runs `check` until `target` configurations pass the kink filter.
/// Returns the number of failures with the first failure message.
pub fn run_checks(target: usize, seed: u64, mut check: impl FnMut(&mut ChaCha8Rng) -> Check) -> (usize, usize, Option<String>) {
    let mut r = rng(seed);
    let (mut checked, mut failed, mut first) = (0, 0, None);
    let mut attempts = 0;
    while checked < target && attempts < target * 20 {
        attempts += 1;
        match check(&mut r) {
            Check::Skipped => {}
            Check::Passed => checked += 1,
            Check::Failed(msg) => {
                checked += 1;
                failed += 1;
                first.get_or_insert(msg);
            }
        }
    }
    (checked, failed, first)
}
