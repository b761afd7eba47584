//! Reconstructed test environments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geom::Vec2;
use crate::pipeline::PlannerConfig;
use crate::rc_esdf::SE2Pose;
use crate::scene::{MapSpec, OccupancyGrid2D, RobotShape, Scenario};
use crate::Result;

const RES: f64 = 0.1;
const WALL: f64 = 0.2;

/// Marks every cell whose center lies in `[x0, x1] × [y0, y1]`.
pub fn fill_rect(grid: &mut OccupancyGrid2D, x0: f64, y0: f64, x1: f64, y1: f64) {
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let c = grid.cell_center(i, j);
            if c.x >= x0 && c.x <= x1 && c.y >= y0 && c.y <= y1 {
                grid.set(i, j, true);
            }
        }
    }
}

/// Empty `width × height` grid at 0.1 m with a one-cell border wall.
pub fn walled_grid(width: f64, height: f64) -> OccupancyGrid2D {
    let nx = (width / RES).round() as usize;
    let ny = (height / RES).round() as usize;
    let mut g = OccupancyGrid2D::new(Vec2::zeros(), RES, nx, ny).expect("positive size");
    for i in 0..nx {
        g.set(i, 0, true);
        g.set(i, ny - 1, true);
    }
    for j in 0..ny {
        g.set(0, j, true);
        g.set(nx - 1, j, true);
    }
    g
}

/// Vertical wall at `x` spanning the map except for a gap `[lo, lo + gap]`.
fn wall_with_gap(g: &mut OccupancyGrid2D, x: f64, height: f64, lo: f64, gap: f64) {
    fill_rect(g, x - WALL / 2.0, 0.0, x + WALL / 2.0, lo);
    fill_rect(g, x - WALL / 2.0, lo + gap, x + WALL / 2.0, height);
}

/// 17 × 10 m map with three thin walls, each pierced by one gap of width
/// `gap`, for the 1.8 × 1.2 m rectangle.
pub fn rectangle_gaps(gap: f64) -> Result<Scenario> {
    let (w, h) = (17.0, 10.0);
    let mut g = walled_grid(w, h);
    wall_with_gap(&mut g, 5.0, h, 2.5 - gap / 2.0, gap);
    wall_with_gap(&mut g, 9.0, h, 7.0 - gap / 2.0, gap);
    wall_with_gap(&mut g, 13.0, h, 4.0 - gap / 2.0, gap);
    Scenario::new(
        RobotShape::rectangle(1.8, 1.2)?,
        MapSpec::Grid(g),
        SE2Pose::new(Vec2::new(2.0, 5.0), 0.0),
        SE2Pose::new(Vec2::new(15.5, 5.0), 0.0),
        PlannerConfig::default(),
        None,
    )
}

/// 10 × 6 m serpentine: three thin walls with gaps alternating between the
/// top and bottom, for the 1.2 m / 0.4 m L-shape.
pub fn l_shape_gaps(gap: f64) -> Result<Scenario> {
    let (w, h) = (10.0, 6.0);
    let mut g = walled_grid(w, h);
    let top = h - RES - gap;
    wall_with_gap(&mut g, 2.5, h, top, gap);
    wall_with_gap(&mut g, 5.0, h, RES, gap);
    wall_with_gap(&mut g, 7.5, h, top, gap);
    Scenario::new(
        RobotShape::l_shape(1.2, 0.4)?,
        MapSpec::Grid(g),
        SE2Pose::new(Vec2::new(1.0, 1.0), 0.0),
        SE2Pose::new(Vec2::new(8.6, 1.2), 0.0),
        PlannerConfig::default(),
        None,
    )
}

/// 25 × 18 m field of 0.4 m pillars on a jittered 2.5 m lattice, for
/// timing runs with any of the benchmark robots.
pub fn pillar_field(robot: RobotShape, seed: u64) -> Result<Scenario> {
    let (w, h) = (25.0, 18.0);
    let mut g = walled_grid(w, h);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = SE2Pose::new(Vec2::new(2.5, 9.0), 0.0);
    let goal = SE2Pose::new(Vec2::new(22.5, 9.0), 0.0);
    let spacing = 2.5;
    let mut y = 2.0;
    while y < h - 1.5 {
        let mut x = 2.0;
        while x < w - 1.5 {
            let c = Vec2::new(x + rng.gen_range(-0.4..0.4), y + rng.gen_range(-0.4..0.4));
            if (c - start.p).norm() > 3.0 && (c - goal.p).norm() > 3.0 {
                fill_rect(&mut g, c.x - 0.2, c.y - 0.2, c.x + 0.2, c.y + 0.2);
            }
            x += spacing;
        }
        y += spacing;
    }
    Scenario::new(robot, MapSpec::Grid(g), start, goal, PlannerConfig::default(), None)
}

/// Rectangles used for the size-scaling comparison, smallest first.
pub fn benchmark_robots() -> Result<Vec<RobotShape>> {
    [(0.8, 0.4), (1.8, 1.2), (3.6, 1.4)]
        .into_iter()
        .map(|(l, w)| RobotShape::rectangle(l, w))
        .collect()
}
