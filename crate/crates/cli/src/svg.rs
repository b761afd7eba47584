//! Static SVG renderings of plans and distance fields.

use std::fmt::Write;

use rcesdf::distance_field::ScalarField2D;
use rcesdf::pipeline::PlanResult;
use rcesdf::scene::Scenario;
use rcesdf::Vec2;

const PX_PER_M: f64 = 40.0;

/// Maps world coordinates to pixels with y pointing up.
struct Canvas {
    min: Vec2,
    max: Vec2,
    scale: f64,
    body: String,
}

impl Canvas {
    fn new(min: Vec2, max: Vec2) -> Self {
        let span = (max - min).max();
        let scale = if span * PX_PER_M > 2000.0 { 2000.0 / span } else { PX_PER_M };
        Self {
            min,
            max,
            scale,
            body: String::new(),
        }
    }

    fn px(&self, p: Vec2) -> (f64, f64) {
        ((p.x - self.min.x) * self.scale, (self.max.y - p.y) * self.scale)
    }

    fn points(&self, pts: impl IntoIterator<Item = Vec2>) -> String {
        let mut s = String::new();
        for p in pts {
            let (x, y) = self.px(p);
            write!(s, "{x:.2},{y:.2} ").unwrap();
        }
        s
    }

    /// Axis-aligned rectangle with its lower-left corner at `lo`.
    fn rect(&mut self, lo: Vec2, w: f64, h: f64, fill: &str) {
        let (x, y) = self.px(Vec2::new(lo.x, lo.y + h));
        writeln!(
            self.body,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="{fill}"/>"#,
            w * self.scale,
            h * self.scale
        )
        .unwrap();
    }

    fn polyline(&mut self, pts: impl IntoIterator<Item = Vec2>, style: &str) {
        let pts = self.points(pts);
        writeln!(self.body, r#"<polyline points="{pts}" fill="none" {style}/>"#).unwrap();
    }

    fn polygon(&mut self, pts: impl IntoIterator<Item = Vec2>, style: &str) {
        let pts = self.points(pts);
        writeln!(self.body, r#"<polygon points="{pts}" {style}/>"#).unwrap();
    }

    fn finish(self) -> String {
        let (w, h) = ((self.max.x - self.min.x) * self.scale, (self.max.y - self.min.y) * self.scale);
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.2} {h:.2}\">\n\
             <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
            self.body
        )
    }
}

/// Map, reference path, footprints at every constraint point and the
/// optimized trajectory.
pub fn plan(scenario: &Scenario, result: &PlanResult) -> String {
    let g = &scenario.grid;
    let b = g.bounds();
    let mut c = Canvas::new(b.min.into(), b.max.into());
    // One rectangle per horizontal run of occupied cells.
    for j in 0..g.ny {
        let mut i = 0;
        while i < g.nx {
            if !g.is_occupied(i, j) {
                i += 1;
                continue;
            }
            let start = i;
            while i < g.nx && g.is_occupied(i, j) {
                i += 1;
            }
            let lo = g.origin + Vec2::new(start as f64, j as f64) * g.resolution;
            c.rect(lo, (i - start) as f64 * g.resolution, g.resolution, "#333");
        }
    }
    let traj = &result.trajectory;
    for k in 0..traj.num_constraint_points() {
        let Ok(pose) = traj.constraint_point(k) else { continue };
        for part in scenario.robot.parts() {
            let pts: Vec<Vec2> = part.vertices().iter().map(|&v| pose.transform(v)).collect();
            c.polygon(pts, r##"fill="#4a90d9" fill-opacity="0.08" stroke="#4a90d9" stroke-opacity="0.5" stroke-width="0.6""##);
        }
    }
    c.polyline(
        result.reference_path.iter().copied(),
        r##"stroke="#999" stroke-width="1.5" stroke-dasharray="6 4""##,
    );
    let dur = traj.duration();
    let n = (dur / 0.02).ceil().max(1.0) as usize;
    let centre: Vec<Vec2> = (0..=n)
        .filter_map(|k| traj.evaluate(dur * k as f64 / n as f64).ok())
        .map(|p| p.p)
        .collect();
    let colour = if result.validation.collision_free { "#d0021b" } else { "#f5a623" };
    c.polyline(centre, &format!(r#"stroke="{colour}" stroke-width="2""#));
    for (pose, fill) in [(scenario.start, "#2e7d32"), (scenario.goal, "#6a1b9a")] {
        for part in scenario.robot.parts() {
            let pts: Vec<Vec2> = part.vertices().iter().map(|&v| pose.transform(v)).collect();
            c.polygon(pts, &format!(r#"fill="{fill}" fill-opacity="0.35" stroke="{fill}""#));
        }
    }
    c.finish()
}

/// Heat map of vertex values: blue below zero, white at zero, red above.
pub fn field(f: &ScalarField2D) -> String {
    let (lo, hi) = f.extent();
    let h = f.resolution;
    let mut c = Canvas::new(lo - Vec2::new(h, h) * 0.5, hi + Vec2::new(h, h) * 0.5);
    let neg = f.values.iter().fold(0.0f64, |m, v| m.min(*v));
    let pos = f.values.iter().fold(0.0f64, |m, v| m.max(*v));
    for j in 0..=f.ny {
        for i in 0..=f.nx {
            let v = f.vertex(i, j);
            let t = if v < 0.0 { v / neg } else if pos > 0.0 { v / pos } else { 0.0 };
            let fade = (255.0 * (1.0 - t.clamp(0.0, 1.0))).round() as u8;
            let fill = if v < 0.0 {
                format!("rgb({fade},{fade},255)")
            } else {
                format!("rgb(255,{fade},{fade})")
            };
            let p = f.vertex_position(i, j) - Vec2::new(h, h) * 0.5;
            c.rect(p, h, h, &fill);
        }
    }
    c.finish()
}
