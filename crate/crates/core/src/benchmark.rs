//! Repeated planning from random start/goal pairs to compare backends.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geom::Vec2;
use crate::pipeline::{astar_path, plan_with, Method, PlanOptions};
use crate::rc_esdf::SE2Pose;
use crate::scene::Scenario;
use crate::solver::Termination;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRecord {
    pub method: Method,
    pub rep: usize,
    pub start: SE2Pose,
    pub goal: SE2Pose,
    /// Timing fields are `None` when timings are omitted.
    pub field_build_time: Option<f64>,
    pub total_opt_time: Option<f64>,
    pub per_iteration_time: Option<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub trajectory_length: f64,
    pub mean_jerk: f64,
    pub final_cost: f64,
    pub termination: Termination,
    pub collision_free: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkOptions {
    pub methods: Vec<Method>,
    pub reps: usize,
    pub seed: u64,
    /// Write timing fields as `None` so output is reproducible bit for bit.
    pub omit_timings: bool,
}

impl Default for BenchmarkOptions {
    fn default() -> Self {
        Self {
            methods: vec![Method::Rc, Method::Wbfp],
            reps: 20,
            seed: 0,
            omit_timings: false,
        }
    }
}

/// Per-method means over a set of records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub runs: usize,
    pub collision_free: usize,
    pub mean_field_build_time: Option<f64>,
    pub mean_opt_time: Option<f64>,
    pub mean_per_iteration_time: Option<f64>,
    pub mean_iterations: f64,
    pub mean_length: f64,
    pub mean_jerk: f64,
}

/// Draws a collision-free start/goal pair at yaw 0 that A* can connect.
/// Distances are kept between 40% and 70% of the map diagonal, capped at
/// 12 and 18 meters.
pub fn sample_start_goal(scenario: &Scenario, rng: &mut impl Rng) -> Result<(SE2Pose, SE2Pose)> {
    let b = scenario.grid.bounds();
    let margin = scenario.robot.circumradius() + scenario.config.inflation;
    let (lo, hi) = (Vec2::new(b.min[0] + margin, b.min[1] + margin), Vec2::new(b.max[0] - margin, b.max[1] - margin));
    if lo.x >= hi.x || lo.y >= hi.y {
        return Err(Error::InvalidScenario("map is too small for the robot".into()));
    }
    let diag = (hi - lo).norm();
    let (dmin, dmax) = ((0.4 * diag).min(12.0), (0.7 * diag).min(18.0));
    let clearance = 0.5 * scenario.robot.min_cross_section();
    let body = scenario.robot.sample_points(scenario.grid.resolution / 2.0);
    let free = |p: &SE2Pose| body.iter().all(|&q| !scenario.grid.occupied_at(p.transform(q)));
    let draw = |rng: &mut dyn rand::RngCore| {
        SE2Pose::new(Vec2::new(rng.gen_range(lo.x..hi.x), rng.gen_range(lo.y..hi.y)), 0.0)
    };
    for _ in 0..20_000 {
        let s = draw(rng);
        let g = draw(rng);
        let d = (g.p - s.p).norm();
        if d < dmin || d > dmax || !free(&s) || !free(&g) {
            continue;
        }
        if astar_path(&scenario.grid, s.p, g.p, clearance).is_ok() {
            return Ok((s, g));
        }
    }
    Err(Error::InvalidScenario("could not sample a connected start/goal pair".into()))
}

/// `reps` start/goal pairs drawn from a generator seeded with `seed`.
pub fn sample_pairs(scenario: &Scenario, reps: usize, seed: u64) -> Result<Vec<(SE2Pose, SE2Pose)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..reps).map(|_| sample_start_goal(scenario, &mut rng)).collect()
}

/// Runs every method on the same seeded start/goal pairs. Records are
/// ordered by repetition, then by method.
pub fn run_benchmark(scenario: &Scenario, opts: &BenchmarkOptions) -> Result<Vec<BenchmarkRecord>> {
    if opts.reps == 0 || opts.methods.is_empty() {
        return Err(Error::InvalidArgument("need at least one repetition and one method".into()));
    }
    let pairs = sample_pairs(scenario, opts.reps, opts.seed)?;
    run_on_pairs(scenario, &pairs, &opts.methods, opts.omit_timings)
}

/// Runs every method from each given start/goal pair.
pub fn run_on_pairs(
    scenario: &Scenario,
    pairs: &[(SE2Pose, SE2Pose)],
    methods: &[Method],
    omit_timings: bool,
) -> Result<Vec<BenchmarkRecord>> {
    let mut out = Vec::with_capacity(pairs.len() * methods.len());
    for (rep, &(start, goal)) in pairs.iter().enumerate() {
        let sc = Scenario {
            start,
            goal,
            ..scenario.clone()
        };
        for &method in methods {
            let r = plan_with(&sc, &PlanOptions { method, trace: false })?;
            let iters = r.report.iterations.max(1);
            let keep = |v: f64| (!omit_timings).then_some(v);
            out.push(BenchmarkRecord {
                method,
                rep,
                start,
                goal,
                field_build_time: keep(r.timings.field_build),
                total_opt_time: keep(r.timings.optimize),
                per_iteration_time: keep(r.timings.optimize / iters as f64),
                iterations: r.report.iterations,
                evaluations: r.report.evaluations,
                trajectory_length: r.trajectory.length(2000),
                mean_jerk: r.trajectory.mean_jerk(2000),
                final_cost: r.report.final_cost,
                termination: r.report.termination,
                collision_free: r.validation.collision_free,
            });
        }
    }
    Ok(out)
}

pub fn summarize(records: &[BenchmarkRecord]) -> Vec<MethodSummary> {
    let mut methods: Vec<Method> = Vec::new();
    for r in records {
        if !methods.contains(&r.method) {
            methods.push(r.method);
        }
    }
    methods
        .into_iter()
        .map(|m| {
            let rs: Vec<&BenchmarkRecord> = records.iter().filter(|r| r.method == m).collect();
            let n = rs.len() as f64;
            let mean = |f: &dyn Fn(&BenchmarkRecord) -> f64| rs.iter().map(|r| f(r)).sum::<f64>() / n;
            let mean_opt = |f: &dyn Fn(&BenchmarkRecord) -> Option<f64>| {
                rs.iter().map(|r| f(r)).sum::<Option<f64>>().map(|s| s / n)
            };
            MethodSummary {
                method: m,
                runs: rs.len(),
                collision_free: rs.iter().filter(|r| r.collision_free).count(),
                mean_field_build_time: mean_opt(&|r| r.field_build_time),
                mean_opt_time: mean_opt(&|r| r.total_opt_time),
                mean_per_iteration_time: mean_opt(&|r| r.per_iteration_time),
                mean_iterations: mean(&|r| r.iterations as f64),
                mean_length: mean(&|r| r.trajectory_length),
                mean_jerk: mean(&|r| r.mean_jerk),
            }
        })
        .collect()
}
