//! End-to-end planning: reference path, initial trajectory, optimization
//! and validation.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bspline::{fit_from_path, BSplineSE2, MIN_CONTROL_POINTS};
use crate::distance_field::edt_2d;
use crate::env_esdf::{build_env_esdf, build_env_esdf_padded, BodySamples, EnvEsdf};
use crate::geom::{unwrap_angles, Vec2};
use crate::objective::{
    pack_free, CollisionModel, CostBreakdown, FeasibilityPenalty, Limits, Objective, PenaltyWeights,
};
use crate::rc_esdf::{build_rc_esdf, RcEsdf, SE2Pose};
use crate::scene::{OccupancyGrid2D, Scenario};
use crate::solver::{minimize_with, SolveReport, SolverParams};
use crate::{Error, Result};

/// Total time is this factor times the time at the speed limit.
pub const TIME_SLACK: f64 = 1.5;
/// Lower bound on the duration of any trajectory, seconds.
pub const MIN_DURATION: f64 = 1.0;
/// Tolerance applied to limits by the validator.
pub const LIMIT_TOLERANCE: f64 = 0.05;
/// Arc length between constraint points under `KnotSpan::Auto`, in units
/// of `rc_resolution`.
pub const KNOT_SPACING_CELLS: f64 = 2.0;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KnotSpanRepr", into = "KnotSpanRepr")]
pub enum KnotSpan {
    #[default]
    Auto,
    Seconds(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum KnotSpanRepr {
    Seconds(f64),
    Name(String),
}

impl TryFrom<KnotSpanRepr> for KnotSpan {
    type Error = String;
    fn try_from(r: KnotSpanRepr) -> std::result::Result<Self, String> {
        match r {
            KnotSpanRepr::Seconds(s) => Ok(Self::Seconds(s)),
            KnotSpanRepr::Name(n) if n == "auto" => Ok(Self::Auto),
            KnotSpanRepr::Name(n) => Err(format!("knot_span must be a number or \"auto\", got {n:?}")),
        }
    }
}

impl From<KnotSpan> for KnotSpanRepr {
    fn from(k: KnotSpan) -> Self {
        match k {
            KnotSpan::Auto => Self::Name("auto".into()),
            KnotSpan::Seconds(s) => Self::Seconds(s),
        }
    }
}

/// How the initial yaw profile is seeded.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum YawSeed {
    /// Path tangent, blended into the boundary yaws near each end.
    #[default]
    Tangent,
    /// Linear in arc length from start to goal yaw.
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    pub weights: PenaltyWeights,
    pub limits: Limits,
    pub rc_resolution: f64,
    pub inflation: f64,
    pub knot_span: KnotSpan,
    pub solver: SolverParams,
    /// Defaults to half of `rc_resolution`.
    pub validator_density: Option<f64>,
    pub yaw_seed: YawSeed,
    pub feasibility_penalty: FeasibilityPenalty,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            weights: PenaltyWeights::default(),
            limits: Limits::default(),
            rc_resolution: 0.1,
            inflation: 0.1,
            knot_span: KnotSpan::Auto,
            solver: SolverParams::default(),
            validator_density: None,
            yaw_seed: YawSeed::Tangent,
            feasibility_penalty: FeasibilityPenalty::Hinge,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        self.limits.validate()?;
        self.solver.validate()?;
        let pos = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{name} must be > 0, got {v}")))
            }
        };
        pos("rc_resolution", self.rc_resolution)?;
        if !(self.inflation.is_finite() && self.inflation >= 0.0) {
            return Err(Error::InvalidArgument(format!("inflation must be >= 0, got {}", self.inflation)));
        }
        if let KnotSpan::Seconds(s) = self.knot_span {
            pos("knot_span", s)?;
        }
        if let Some(d) = self.validator_density {
            pos("validator_density", d)?;
        }
        Ok(())
    }

    pub fn density(&self) -> f64 {
        self.validator_density.unwrap_or(self.rc_resolution / 2.0)
    }
}

/// Collision backend used by the optimizer.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Lazy robot-centric field.
    #[default]
    Rc,
    /// Dense body sampling of a world field.
    Wbfp,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Rc => "rc",
            Self::Wbfp => "wbfp",
        })
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "rc" => Ok(Self::Rc),
            "wbfp" => Ok(Self::Wbfp),
            other => Err(Error::InvalidArgument(format!("unknown method {other:?}; expected rc or wbfp"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitCheck {
    pub quantity: String,
    pub max_observed: f64,
    pub limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionReport {
    pub collision_free: bool,
    /// Smallest signed distance from a footprint sample to the obstacles;
    /// `None` when the map has no obstacles.
    pub min_clearance: Option<f64>,
    /// Time of the smallest clearance (or of the first collision).
    pub worst_time: f64,
    pub violated_limits: Vec<LimitCheck>,
    /// Peak of each checked quantity.
    pub peaks: Vec<LimitCheck>,
    pub poses_checked: usize,
    pub body_points: usize,
}

impl CollisionReport {
    pub fn limits_ok(&self) -> bool {
        self.violated_limits.is_empty()
    }

    pub fn is_ok(&self) -> bool {
        self.collision_free && self.limits_ok()
    }

    pub fn peak(&self, quantity: &str) -> Option<f64> {
        self.peaks.iter().find(|p| p.quantity == quantity).map(|p| p.max_observed)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub field_build: f64,
    pub init: f64,
    pub optimize: f64,
    pub validate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub method: Method,
    pub trajectory: BSplineSE2,
    pub reference_path: Vec<Vec2>,
    pub report: SolveReport,
    pub cost: CostBreakdown,
    pub validation: CollisionReport,
    pub timings: Timings,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub trace: Option<Vec<CostBreakdown>>,
}

// ---------------------------------------------------------------- search

#[derive(PartialEq)]
struct Node {
    f: f64,
    k: usize,
}

impl Eq for Node {}

impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        other.f.total_cmp(&self.f).then_with(|| other.k.cmp(&self.k))
    }
}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Cells whose center lies closer than `clearance` to an occupied cell's
/// boundary (approximated as center distance minus half a cell).
pub fn dilate(map: &OccupancyGrid2D, clearance: f64) -> Vec<bool> {
    let (nx, ny) = (map.nx, map.ny);
    let mut mask = vec![false; nx * ny];
    for (i, j) in map.occupied_cells() {
        mask[j * nx + i] = true;
    }
    let Ok(dist) = edt_2d(&mask, nx, ny) else {
        return mask;
    };
    let limit = clearance + 0.5 * map.resolution;
    mask.iter()
        .zip(&dist)
        .map(|(&occ, &d)| occ || d * map.resolution < limit - 1e-9)
        .collect()
}

/// 8-connected A* on the map dilated by `clearance`, followed by greedy
/// line-of-sight shortcutting. The returned path starts at `start` and
/// ends at `goal` exactly.
pub fn astar_path(map: &OccupancyGrid2D, start: Vec2, goal: Vec2, clearance: f64) -> Result<Vec<Vec2>> {
    let blocked = dilate(map, clearance);
    let cells = astar_cells(map, &blocked, start, goal, clearance)?;
    let mut path: Vec<Vec2> = cells.iter().map(|&(i, j)| map.cell_center(i, j)).collect();
    path[0] = start;
    let last = path.len() - 1;
    if last == 0 {
        path.push(goal);
    } else {
        path[last] = goal;
    }
    Ok(shortcut(map, &blocked, &path))
}

/// Raw A* cell sequence on a precomputed blocked mask.
pub fn astar_cells(
    map: &OccupancyGrid2D,
    blocked: &[bool],
    start: Vec2,
    goal: Vec2,
    clearance: f64,
) -> Result<Vec<(usize, usize)>> {
    let nx = map.nx;
    let locate = |name: &str, p: Vec2| -> Result<usize> {
        let (i, j) = map
            .cell_of(p)
            .ok_or_else(|| Error::NoPath(format!("{name} ({:.3}, {:.3}) is outside the map", p.x, p.y)))?;
        if blocked[j * nx + i] {
            return Err(Error::NoPath(format!(
                "{name} ({:.3}, {:.3}) is within {clearance:.3} m of an obstacle; try a smaller clearance",
                p.x, p.y
            )));
        }
        Ok(j * nx + i)
    };
    let s = locate("start", start)?;
    let g = locate("goal", goal)?;
    let res = map.resolution;
    let center = |k: usize| map.cell_center(k % nx, k / nx);
    let goal_c = center(g);
    let h = |k: usize| (center(k) - goal_c).norm();

    let n = blocked.len();
    let mut cost = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut open = BinaryHeap::new();
    cost[s] = 0.0;
    open.push(Node { f: h(s), k: s });
    const STEPS: [(i64, i64); 8] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)];
    while let Some(Node { k, .. }) = open.pop() {
        if closed[k] {
            continue;
        }
        closed[k] = true;
        if k == g {
            break;
        }
        let (i, j) = ((k % nx) as i64, (k / nx) as i64);
        for (di, dj) in STEPS {
            let (a, b) = (i + di, j + dj);
            if a < 0 || b < 0 || a >= nx as i64 || b >= map.ny as i64 {
                continue;
            }
            let m = b as usize * nx + a as usize;
            if blocked[m] || closed[m] {
                continue;
            }
            let step = if di != 0 && dj != 0 { std::f64::consts::SQRT_2 } else { 1.0 } * res;
            let c = cost[k] + step;
            if c < cost[m] {
                cost[m] = c;
                parent[m] = k;
                open.push(Node { f: c + h(m), k: m });
            }
        }
    }
    if !closed[g] {
        return Err(Error::NoPath(format!(
            "no path with clearance {clearance:.3} m: some passage is narrower than {:.3} m; try a smaller clearance",
            2.0 * clearance
        )));
    }
    let mut out = vec![(g % nx, g / nx)];
    let mut k = g;
    while k != s {
        k = parent[k];
        out.push((k % nx, k / nx));
    }
    out.reverse();
    Ok(out)
}

fn visible(map: &OccupancyGrid2D, blocked: &[bool], a: Vec2, b: Vec2) -> bool {
    let n = ((b - a).norm() / (0.25 * map.resolution)).ceil().max(1.0) as usize;
    (0..=n).all(|k| {
        let p = a + (b - a) * (k as f64 / n as f64);
        match map.cell_of(p) {
            Some((i, j)) => !blocked[j * map.nx + i],
            None => false,
        }
    })
}

fn shortcut(map: &OccupancyGrid2D, blocked: &[bool], path: &[Vec2]) -> Vec<Vec2> {
    let mut out = vec![path[0]];
    let mut i = 0;
    while i + 1 < path.len() {
        let j = (i + 2..path.len())
            .rev()
            .find(|&j| visible(map, blocked, path[i], path[j]))
            .unwrap_or(i + 1);
        out.push(path[j]);
        i = j;
    }
    out
}

pub fn path_length(path: &[Vec2]) -> f64 {
    path.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
}

/// Inserts points so that consecutive points are at most `spacing` apart.
pub fn densify(path: &[Vec2], spacing: f64) -> Vec<Vec2> {
    let mut out = vec![path[0]];
    for w in path.windows(2) {
        let n = ((w[1] - w[0]).norm() / spacing).ceil().max(1.0) as usize;
        for k in 1..=n {
            out.push(w[0] + (w[1] - w[0]) * (k as f64 / n as f64));
        }
    }
    out
}

// ------------------------------------------------------- initialization

/// Knot span and control-point count for a path of `length` meters whose
/// seeded yaw profile turns through `yaw_travel` radians.
pub fn allocate(length: f64, yaw_travel: f64, config: &PlannerConfig) -> (f64, usize) {
    let lim = &config.limits;
    let t = (TIME_SLACK * length / lim.v_max)
        .max(TIME_SLACK * yaw_travel / lim.yaw_rate_max)
        .max(if length > 0.0 { 0.0 } else { MIN_DURATION });
    let min_segments = MIN_CONTROL_POINTS - 3;
    match config.knot_span {
        KnotSpan::Auto => {
            let spacing = KNOT_SPACING_CELLS * config.rc_resolution;
            let segments = ((length / spacing).round() as usize).max(min_segments);
            (t / segments as f64, segments + 3)
        }
        KnotSpan::Seconds(dt) => {
            let segments = ((t / dt).round() as usize).max(min_segments);
            (dt, segments + 3)
        }
    }
}

/// Yaw at each path point: the unwrapped tangent direction, blended
/// linearly into `start_yaw` over the first tenth of arc length and into
/// `goal_yaw` over the last tenth. The start yaw is kept as given; the
/// goal yaw is shifted by a multiple of 2π to the nearest equivalent.
pub fn init_yaw(path: &[Vec2], start_yaw: f64, goal_yaw: f64) -> Vec<f64> {
    let n = path.len();
    let mut tangents = Vec::with_capacity(n);
    let mut last = start_yaw;
    for k in 0..n {
        let d = if k + 1 < n { path[k + 1] - path[k] } else { path[k] - path[k.saturating_sub(1)] };
        if d.norm() > 1e-12 {
            last = d.y.atan2(d.x);
        }
        tangents.push(last);
    }
    let mut seq = Vec::with_capacity(n + 2);
    seq.push(start_yaw);
    seq.extend(&tangents);
    seq.push(goal_yaw);
    unwrap_angles(&mut seq);
    let (start, goal) = (seq[0], seq[n + 1]);
    let arc = arc_lengths(path);
    let total = arc[n - 1];
    if total <= 0.0 {
        return (0..n).map(|k| if k + 1 == n { goal } else { start }).collect();
    }
    let band = 0.1 * total;
    (0..n)
        .map(|k| {
            let (s, th) = (arc[k], seq[k + 1]);
            if s < band {
                let w = s / band;
                (1.0 - w) * start + w * th
            } else if s > total - band {
                let w = (total - s) / band;
                (1.0 - w) * goal + w * th
            } else {
                th
            }
        })
        .collect()
}

fn constant_yaw(path: &[Vec2], start_yaw: f64, goal_yaw: f64) -> Vec<f64> {
    let mut ends = [start_yaw, goal_yaw];
    unwrap_angles(&mut ends);
    let arc = arc_lengths(path);
    let total = *arc.last().unwrap();
    arc.iter()
        .enumerate()
        .map(|(k, s)| {
            let w = if total > 0.0 { s / total } else if k + 1 == arc.len() { 1.0 } else { 0.0 };
            ends[0] + w * (ends[1] - ends[0])
        })
        .collect()
}

fn arc_lengths(path: &[Vec2]) -> Vec<f64> {
    let mut arc = vec![0.0];
    for w in path.windows(2) {
        arc.push(arc.last().unwrap() + (w[1] - w[0]).norm());
    }
    arc
}

/// Reference path and the spline fitted to it.
pub fn initial_trajectory(scenario: &Scenario) -> Result<(BSplineSE2, Vec<Vec2>)> {
    let cfg = &scenario.config;
    let clearance = 0.5 * scenario.robot.min_cross_section();
    let path = astar_path(&scenario.grid, scenario.start.p, scenario.goal.p, clearance)?;
    let dense = densify(&path, cfg.rc_resolution);
    let yaws = match cfg.yaw_seed {
        YawSeed::Tangent => init_yaw(&dense, scenario.start.yaw, scenario.goal.yaw),
        YawSeed::Constant => constant_yaw(&dense, scenario.start.yaw, scenario.goal.yaw),
    };
    let yaw_travel: f64 = yaws.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    let (dt, n) = allocate(path_length(&path), yaw_travel, cfg);
    let poses: Vec<SE2Pose> = dense.iter().zip(&yaws).map(|(&p, &y)| SE2Pose::new(p, y)).collect();
    Ok((fit_from_path(&poses, dt, n)?, path))
}

// ------------------------------------------------------------- planning

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PlanOptions {
    pub method: Method,
    /// Record the cost breakdown after every accepted step.
    pub trace: bool,
}

enum Backend {
    Rc(RcEsdf),
    Wbfp(EnvEsdf, BodySamples),
}

/// Obstacle points sit at cell centers, half a cell inside the occupied
/// region, so the configured clearance is widened by that amount.
pub fn effective_margin(scenario: &Scenario) -> f64 {
    scenario.config.inflation + 0.5 * scenario.grid.resolution
}

fn build_backend(scenario: &Scenario, method: Method) -> Result<Backend> {
    let cfg = &scenario.config;
    let margin = effective_margin(scenario);
    Ok(match method {
        Method::Rc => Backend::Rc(build_rc_esdf(&scenario.robot, cfg.rc_resolution, margin)?),
        Method::Wbfp => {
            let margin = scenario.robot.circumradius() + margin + 1.0;
            let env = build_env_esdf_padded(&scenario.grid, margin)?;
            let samples = BodySamples::from_shape(&scenario.robot, cfg.rc_resolution)?;
            Backend::Wbfp(env, samples)
        }
    })
}

/// Plans with the lazy robot-centric backend.
pub fn plan(scenario: &Scenario) -> Result<PlanResult> {
    plan_with(scenario, &PlanOptions::default())
}

pub fn plan_with(scenario: &Scenario, opts: &PlanOptions) -> Result<PlanResult> {
    let cfg = &scenario.config;
    let t0 = Instant::now();
    let backend = build_backend(scenario, opts.method)?;
    let field_build = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let (spline, reference_path) = initial_trajectory(scenario)?;
    let init = t1.elapsed().as_secs_f64();

    let model = match &backend {
        Backend::Rc(rc) => CollisionModel::Rc {
            rc,
            cloud: &scenario.cloud,
        },
        Backend::Wbfp(env, samples) => CollisionModel::Wbfp {
            env,
            samples,
            threshold: effective_margin(scenario),
        },
    };
    let objective = Objective {
        template: spline,
        weights: cfg.weights,
        limits: cfg.limits,
        penalty: cfg.feasibility_penalty,
        model,
    };
    let x0 = pack_free(&objective.template);
    let mut iterates = Vec::new();
    if opts.trace {
        iterates.push(x0.clone());
    }
    let t2 = Instant::now();
    let (x, report) = minimize_with(
        |x, g| match objective.evaluate(x) {
            Ok(c) => {
                g.copy_from_slice(&c.gradient);
                c.total
            }
            // Leaving the world field counts as an infinitely bad trial.
            Err(_) => {
                g.fill(0.0);
                f64::INFINITY
            }
        },
        x0,
        &cfg.solver,
        |_, x, _| {
            if opts.trace {
                iterates.push(x.to_vec());
            }
        },
    )?;
    let optimize = t2.elapsed().as_secs_f64();

    let trajectory = objective.spline_at(&x);
    let cost = objective.evaluate(&x)?;
    let trace = if opts.trace {
        Some(iterates.iter().map(|x| objective.evaluate(x)).collect::<Result<Vec<_>>>()?)
    } else {
        None
    };

    let t3 = Instant::now();
    let validation = validate(&trajectory, scenario, cfg.density())?;
    let validate_time = t3.elapsed().as_secs_f64();
    if !validation.collision_free {
        log::warn!("optimized trajectory is not collision-free (worst at t = {:.3} s)", validation.worst_time);
    }
    Ok(PlanResult {
        method: opts.method,
        trajectory,
        reference_path,
        report,
        cost,
        validation,
        timings: Timings {
            field_build,
            init,
            optimize,
            validate: validate_time,
        },
        trace,
    })
}

// ----------------------------------------------------------- validation

/// One row of an exported trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajSample {
    pub t: f64,
    pub pose: SE2Pose,
    pub vel: Vec2,
    pub yaw_rate: f64,
}

struct Checker<'a> {
    grid: &'a OccupancyGrid2D,
    env: Option<EnvEsdf>,
    body: Vec<Vec2>,
    radius: f64,
    collision_free: bool,
    first_collision: Option<f64>,
    min_clearance: Option<f64>,
    worst_time: f64,
    poses: usize,
}

impl<'a> Checker<'a> {
    fn new(scenario: &'a Scenario, density: f64) -> Result<Self> {
        if !(density > 0.0 && density.is_finite()) {
            return Err(Error::InvalidArgument(format!("density must be > 0, got {density}")));
        }
        let body = scenario.robot.sample_points(density);
        let radius = body.iter().map(|b| b.norm()).fold(0.0, f64::max);
        let env = match build_env_esdf(&scenario.grid) {
            Ok(e) => Some(e),
            Err(Error::Degenerate(_)) => None,
            Err(e) => return Err(e),
        };
        Ok(Self {
            grid: &scenario.grid,
            env,
            body,
            radius,
            collision_free: true,
            first_collision: None,
            min_clearance: None,
            worst_time: 0.0,
            poses: 0,
        })
    }

    fn check(&mut self, t: f64, pose: &SE2Pose) {
        self.poses += 1;
        for &b in &self.body {
            let w = pose.transform(b);
            if self.grid.occupied_at(w) {
                self.collision_free = false;
                self.first_collision.get_or_insert(t);
            }
            if let Some(d) = self.env.as_ref().and_then(|e| e.field.value_at(w)) {
                if self.min_clearance.map_or(true, |m| d < m) {
                    self.min_clearance = Some(d);
                    self.worst_time = t;
                }
            }
        }
    }

    fn finish(self, peaks: Vec<LimitCheck>) -> CollisionReport {
        let violated_limits = peaks
            .iter()
            .filter(|p| p.max_observed > p.limit * (1.0 + LIMIT_TOLERANCE))
            .cloned()
            .collect();
        CollisionReport {
            collision_free: self.collision_free,
            min_clearance: self.min_clearance,
            worst_time: self.first_collision.unwrap_or(self.worst_time),
            violated_limits,
            peaks,
            poses_checked: self.poses,
            body_points: self.body.len(),
        }
    }
}

fn peaks(limits: &Limits, v: f64, a: f64, w: f64, dw: f64) -> Vec<LimitCheck> {
    [
        ("speed", v, limits.v_max),
        ("acceleration", a, limits.a_max),
        ("yaw_rate", w, limits.yaw_rate_max),
        ("yaw_acceleration", dw, limits.yaw_acc_max),
    ]
    .into_iter()
    .map(|(q, m, l)| LimitCheck {
        quantity: q.into(),
        max_observed: m,
        limit: l,
    })
    .collect()
}

/// Smallest power of two `n` such that `span / n <= density`.
fn dyadic_steps(span: f64, density: f64) -> usize {
    let mut n = 1usize;
    while span / n as f64 > density && n < (1 << 24) {
        n *= 2;
    }
    n
}

/// Dense check of the uninflated footprint along `traj` against the map
/// occupancy, plus limit checks.
///
/// Time is split dyadically so that no body sample moves more than
/// `density` between checked poses; body samples are at most `density`
/// apart. Refining `density` only adds samples.
pub fn validate(traj: &BSplineSE2, scenario: &Scenario, density: f64) -> Result<CollisionReport> {
    let mut chk = Checker::new(scenario, density)?;
    let d = traj.derivative_ctrl();
    // Convex-hull bounds on speed and yaw rate.
    let vmax = d.v.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let wmax = d.v_yaw.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let dur = traj.duration();
    let n = dyadic_steps(dur * (vmax + wmax * chk.radius), density);
    let (mut pv, mut pa, mut pw, mut pdw) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for k in 0..=n {
        let t = dur * k as f64 / n as f64;
        let s = traj.evaluate_full(t)?;
        chk.check(t, &s.pose);
        pv = pv.max(s.vel.norm());
        pa = pa.max(s.acc.norm());
        pw = pw.max(s.yaw_rate.abs());
        pdw = pdw.max(s.yaw_acc.abs());
    }
    Ok(chk.finish(peaks(&scenario.config.limits, pv, pa, pw, pdw)))
}

/// [`validate`] for a sampled trajectory. Poses are interpolated linearly
/// between rows; accelerations come from differences of the velocity
/// columns.
pub fn validate_samples(samples: &[TrajSample], scenario: &Scenario, density: f64) -> Result<CollisionReport> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("trajectory has no samples".into()));
    }
    let mut chk = Checker::new(scenario, density)?;
    let (mut pv, mut pa, mut pw, mut pdw) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    chk.check(samples[0].t, &samples[0].pose);
    for s in samples {
        pv = pv.max(s.vel.norm());
        pw = pw.max(s.yaw_rate.abs());
    }
    for w in samples.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let dt = b.t - a.t;
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!("sample times not increasing at t = {}", b.t)));
        }
        pa = pa.max(((b.vel - a.vel) / dt).norm());
        pdw = pdw.max(((b.yaw_rate - a.yaw_rate) / dt).abs());
        let span = (b.pose.p - a.pose.p).norm() + (b.pose.yaw - a.pose.yaw).abs() * chk.radius;
        let n = dyadic_steps(span, density);
        for k in 1..=n {
            let f = k as f64 / n as f64;
            let pose = SE2Pose::new(a.pose.p + (b.pose.p - a.pose.p) * f, a.pose.yaw + (b.pose.yaw - a.pose.yaw) * f);
            chk.check(a.t + dt * f, &pose);
        }
    }
    Ok(chk.finish(peaks(&scenario.config.limits, pv, pa, pw, pdw)))
}

// ------------------------------------------------------------------- I/O

pub const TRAJECTORY_HEADER: &str = "t,x,y,yaw,vx,vy,yaw_rate";

/// Samples `traj` every `interval` seconds (and at its end time) as CSV.
pub fn trajectory_csv(traj: &BSplineSE2, interval: f64) -> Result<String> {
    if !(interval > 0.0) {
        return Err(Error::InvalidArgument(format!("sampling interval must be > 0, got {interval}")));
    }
    let dur = traj.duration();
    let n = (dur / interval).floor() as usize;
    let mut times: Vec<f64> = (0..=n).map(|k| k as f64 * interval).filter(|t| *t < dur).collect();
    times.push(dur);
    let mut out = String::from(TRAJECTORY_HEADER);
    out.push('\n');
    for t in times {
        let s = traj.evaluate_full(t)?;
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            t, s.pose.p.x, s.pose.p.y, s.pose.yaw, s.vel.x, s.vel.y, s.yaw_rate
        ));
    }
    Ok(out)
}

/// Parses trajectory CSV rows. Yaw is unwrapped on read.
pub fn parse_trajectory_csv(text: &str) -> Result<Vec<TrajSample>> {
    let mut out = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('t') || line.starts_with('#') {
            continue;
        }
        let vals = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse {
                what: format!("trajectory line {}", line_no + 1),
                message: e.to_string(),
            })?;
        if vals.len() != 7 {
            return Err(Error::Parse {
                what: format!("trajectory line {}", line_no + 1),
                message: format!("expected 7 columns, got {}", vals.len()),
            });
        }
        out.push(TrajSample {
            t: vals[0],
            pose: SE2Pose::new(Vec2::new(vals[1], vals[2]), vals[3]),
            vel: Vec2::new(vals[4], vals[5]),
            yaw_rate: vals[6],
        });
    }
    let mut yaws: Vec<f64> = out.iter().map(|s| s.pose.yaw).collect();
    unwrap_angles(&mut yaws);
    for (s, y) in out.iter_mut().zip(yaws) {
        s.pose.yaw = y;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{MapSpec, RobotShape};
    use std::f64::consts::{FRAC_PI_2, PI};

    fn empty_grid() -> OccupancyGrid2D {
        OccupancyGrid2D::new(Vec2::new(-2.0, -2.0), 0.1, 100, 60).unwrap()
    }

    #[test]
    fn astar_straight_on_empty_map() {
        let p = astar_path(&empty_grid(), Vec2::zeros(), Vec2::new(5.0, 0.0), 0.3).unwrap();
        assert_eq!(p, vec![Vec2::zeros(), Vec2::new(5.0, 0.0)]);
    }

    #[test]
    fn astar_goal_in_obstacle() {
        let mut g = empty_grid();
        g.set(60, 20, true);
        let goal = g.cell_center(60, 20);
        assert!(matches!(astar_path(&g, Vec2::zeros(), goal, 0.2), Err(Error::NoPath(_))));
    }

    #[test]
    fn astar_blocked_wall_suggests_smaller_clearance() {
        let mut g = empty_grid();
        for j in 0..60 {
            if !(28..33).contains(&j) {
                g.set(50, j, true);
            }
        }
        // Gap of 0.5 m: passable at 0.2 clearance, not at 0.3.
        assert!(astar_path(&g, Vec2::zeros(), Vec2::new(5.0, 0.0), 0.2).is_ok());
        let err = astar_path(&g, Vec2::zeros(), Vec2::new(5.0, 0.0), 0.3).unwrap_err();
        assert!(err.to_string().contains("smaller clearance"), "{err}");
    }

    #[test]
    fn allocate_formula() {
        let mut cfg = PlannerConfig::default();
        cfg.limits.v_max = 2.0;
        let (dt, n) = allocate(15.0, 0.0, &cfg);
        assert!(((n - 3) as f64 * dt - 11.25).abs() < 1e-12);
        assert_eq!(n, 78);
        let (_, n) = allocate(0.0, 0.0, &cfg);
        assert_eq!(n, 7);
    }

    #[test]
    fn yaw_seed_cases() {
        let east: Vec<Vec2> = (0..20).map(|k| Vec2::new(0.1 * k as f64, 0.0)).collect();
        assert!(init_yaw(&east, 0.0, 0.0).iter().all(|y| y.abs() < 1e-12));

        let mut turn: Vec<Vec2> = (0..=20).map(|k| Vec2::new(0.1 * k as f64, 0.0)).collect();
        turn.extend((1..=20).map(|k| Vec2::new(2.0, 0.1 * k as f64)));
        let y = init_yaw(&turn, 0.0, FRAC_PI_2);
        assert!(y.windows(2).all(|w| w[1] >= w[0] - 1e-12));
        assert!((y[0]).abs() < 1e-12 && (y.last().unwrap() - FRAC_PI_2).abs() < 1e-12);

        let west: Vec<Vec2> = (0..20).map(|k| Vec2::new(-0.1 * k as f64, -0.014 * k as f64)).collect();
        let y = init_yaw(&west, 3.0, 3.0);
        assert_eq!(y[0], 3.0);
        assert!(y.windows(2).all(|w| (w[1] - w[0]).abs() < PI));
    }

    #[test]
    fn stationary_trajectory_is_free() {
        let robot = RobotShape::rectangle(0.6, 0.4).unwrap();
        let mut g = empty_grid();
        g.set(70, 40, true);
        let pose = SE2Pose::new(Vec2::new(1.0, 1.0), 0.3);
        let sc = Scenario::new(robot, MapSpec::Grid(g), pose, pose, PlannerConfig::default(), None).unwrap();
        let traj = BSplineSE2::new(0.5, vec![pose.p; 7], vec![pose.yaw; 7]).unwrap();
        let r = validate(&traj, &sc, 0.05).unwrap();
        assert!(r.collision_free && r.limits_ok());
        assert!(r.min_clearance.unwrap() > 0.0);
    }

    #[test]
    fn trajectory_through_obstacle_fails() {
        let robot = RobotShape::rectangle(0.6, 0.4).unwrap();
        let mut g = empty_grid();
        for j in 15..25 {
            for i in 45..55 {
                g.set(i, j, true);
            }
        }
        let start = SE2Pose::new(Vec2::new(0.0, 0.0), 0.0);
        let goal = SE2Pose::new(Vec2::new(6.0, 0.0), 0.0);
        let sc = Scenario::new(robot, MapSpec::Grid(g), start, goal, PlannerConfig::default(), None).unwrap();
        let traj = fit_from_path(&[start, goal], 1.0, 12).unwrap();
        let r = validate(&traj, &sc, 0.05).unwrap();
        assert!(!r.collision_free);
        assert!(r.worst_time > 0.0 && r.worst_time < traj.duration());
    }

    #[test]
    fn csv_roundtrip() {
        let start = SE2Pose::new(Vec2::zeros(), 3.0);
        let goal = SE2Pose::new(Vec2::new(2.0, 1.0), -3.0);
        let traj = fit_from_path(&[start, goal], 0.5, 9).unwrap();
        let text = trajectory_csv(&traj, 0.1).unwrap();
        let rows = parse_trajectory_csv(&text).unwrap();
        assert_eq!(rows.first().unwrap().t, 0.0);
        assert_eq!(rows.last().unwrap().t, traj.duration());
        assert!(rows.windows(2).all(|w| (w[1].pose.yaw - w[0].pose.yaw).abs() < PI));
        assert!(parse_trajectory_csv("t,x\n1,2\n").is_err());
    }

    #[test]
    fn config_json_defaults() {
        let c: PlannerConfig = serde_json::from_str(r#"{"knot_span": 0.4}"#).unwrap();
        assert_eq!(c.knot_span, KnotSpan::Seconds(0.4));
        let c: PlannerConfig = serde_json::from_str(r#"{"knot_span": "auto"}"#).unwrap();
        assert_eq!(c, PlannerConfig::default());
        assert!(serde_json::from_str::<PlannerConfig>(r#"{"knot_span": "fast"}"#).is_err());
        assert!(serde_json::from_str::<PlannerConfig>(r#"{"bogus": 1}"#).is_err());
        let mut bad = PlannerConfig::default();
        bad.inflation = -0.1;
        assert!(bad.validate().is_err());
    }
}
