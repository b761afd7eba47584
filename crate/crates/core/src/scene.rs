//! Robot footprints, world maps and scenario documents.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::geom::{point_segment_distance, Aabb, Vec2};
use crate::pipeline::PlannerConfig;
use crate::rc_esdf::SE2Pose;
use crate::{Error, Result};

/// Simple polygon, stored counter-clockwise.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon2D {
    vertices: Vec<Vec2>,
}

impl Polygon2D {
    pub fn new(mut vertices: Vec<Vec2>) -> Result<Self> {
        if vertices.len() > 3 && vertices.first() == vertices.last() {
            vertices.pop();
        }
        if vertices.len() < 3 {
            return Err(Error::InvalidArgument(format!(
                "polygon needs at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        if vertices.iter().any(|v| !v.x.is_finite() || !v.y.is_finite()) {
            return Err(Error::InvalidArgument("polygon has non-finite vertex".into()));
        }
        let area = signed_area(&vertices);
        if area.abs() < 1e-12 {
            return Err(Error::InvalidArgument("polygon has zero area".into()));
        }
        if self_intersects(&vertices) {
            return Err(Error::InvalidArgument("polygon is self-intersecting".into()));
        }
        if area < 0.0 {
            vertices.reverse();
        }
        Ok(Self { vertices })
    }

    /// Axis-aligned rectangle centered at `center`.
    pub fn rectangle(center: Vec2, length: f64, width: f64) -> Result<Self> {
        let (hx, hy) = (length / 2.0, width / 2.0);
        Self::new(vec![
            center + Vec2::new(-hx, -hy),
            center + Vec2::new(hx, -hy),
            center + Vec2::new(hx, hy),
            center + Vec2::new(-hx, hy),
        ])
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    pub fn edges(&self) -> impl Iterator<Item = (Vec2, Vec2)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |k| (self.vertices[k], self.vertices[(k + 1) % n]))
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    pub fn bounds(&self) -> Aabb {
        Aabb::from_points(&self.vertices).expect("non-empty polygon")
    }

    /// Even-odd containment (half-open on edges).
    pub fn contains(&self, p: Vec2) -> bool {
        let mut inside = false;
        for (a, b) in self.edges() {
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
                if p.x < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Distance from `p` to the polygon boundary.
    pub fn boundary_distance(&self, p: Vec2) -> f64 {
        self.edges()
            .map(|(a, b)| point_segment_distance(p, a, b))
            .fold(f64::INFINITY, f64::min)
    }

    /// Smallest width over all directions of the convex hull.
    pub fn min_width(&self) -> f64 {
        let hull = convex_hull(&self.vertices);
        let n = hull.len();
        let mut best = f64::INFINITY;
        for k in 0..n {
            let (a, b) = (hull[k], hull[(k + 1) % n]);
            let e = b - a;
            let len = e.norm();
            if len == 0.0 {
                continue;
            }
            let normal = Vec2::new(-e.y, e.x) / len;
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for v in &hull {
                let d = (v - a).dot(&normal);
                lo = lo.min(d);
                hi = hi.max(d);
            }
            best = best.min(hi - lo);
        }
        best
    }
}

fn signed_area(v: &[Vec2]) -> f64 {
    let n = v.len();
    (0..n)
        .map(|k| {
            let (a, b) = (v[k], v[(k + 1) % n]);
            a.x * b.y - b.x * a.y
        })
        .sum::<f64>()
        / 2.0
}

fn cross(o: Vec2, a: Vec2, b: Vec2) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

fn segments_intersect(p1: Vec2, p2: Vec2, q1: Vec2, q2: Vec2) -> bool {
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on = |a: Vec2, b: Vec2, p: Vec2, d: f64| {
        d == 0.0
            && p.x >= a.x.min(b.x)
            && p.x <= a.x.max(b.x)
            && p.y >= a.y.min(b.y)
            && p.y <= a.y.max(b.y)
    };
    on(q1, q2, p1, d1) || on(q1, q2, p2, d2) || on(p1, p2, q1, d3) || on(p1, p2, q2, d4)
}

fn self_intersects(v: &[Vec2]) -> bool {
    let n = v.len();
    for i in 0..n {
        for j in i + 1..n {
            // Adjacent edges share a vertex by construction.
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            if segments_intersect(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n]) {
                return true;
            }
        }
    }
    false
}

fn convex_hull(points: &[Vec2]) -> Vec<Vec2> {
    let mut pts: Vec<Vec2> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<Vec2> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Vec2> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Robot footprint in the body frame, as a union of simple polygons.
/// The body-frame origin is the rotation center.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotShape {
    parts: Vec<Polygon2D>,
}

impl RobotShape {
    pub fn new(parts: Vec<Polygon2D>) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::InvalidArgument("robot shape has no parts".into()));
        }
        let shape = Self { parts };
        if !shape.parts_connected() {
            return Err(Error::InvalidArgument("robot shape parts are not connected".into()));
        }
        if !shape.contains(Vec2::zeros()) && shape.distance(Vec2::zeros()) > 1e-9 {
            log::warn!("robot rotation center (body origin) lies outside the footprint");
        }
        Ok(shape)
    }

    /// `length` along body x, `width` along body y, centered on the origin.
    pub fn rectangle(length: f64, width: f64) -> Result<Self> {
        Self::new(vec![Polygon2D::rectangle(Vec2::zeros(), length, width)?])
    }

    /// L-shaped footprint with two perpendicular arms of `arm` length and
    /// `width` thickness, one along +x and one along +y. The rotation center
    /// is the middle of the square where the arms meet.
    pub fn l_shape(arm: f64, width: f64) -> Result<Self> {
        let h = width / 2.0;
        let along_x = Polygon2D::new(vec![
            Vec2::new(-h, -h),
            Vec2::new(arm - h, -h),
            Vec2::new(arm - h, h),
            Vec2::new(-h, h),
        ])?;
        let along_y = Polygon2D::new(vec![
            Vec2::new(-h, h),
            Vec2::new(h, h),
            Vec2::new(h, arm - h),
            Vec2::new(-h, arm - h),
        ])?;
        Self::new(vec![along_x, along_y])
    }

    pub fn parts(&self) -> &[Polygon2D] {
        &self.parts
    }

    pub fn contains(&self, p: Vec2) -> bool {
        self.parts.iter().any(|poly| poly.contains(p))
    }

    /// Euclidean distance from `p` to the union (0 inside).
    pub fn distance(&self, p: Vec2) -> f64 {
        if self.contains(p) {
            return 0.0;
        }
        self.parts
            .iter()
            .map(|poly| poly.boundary_distance(p))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn bounds(&self) -> Aabb {
        let mut b = self.parts[0].bounds();
        for poly in &self.parts[1..] {
            let pb = poly.bounds();
            b.expand_to(Vec2::new(pb.min[0], pb.min[1]));
            b.expand_to(Vec2::new(pb.max[0], pb.max[1]));
        }
        b
    }

    /// Largest distance from the rotation center to any footprint point.
    pub fn circumradius(&self) -> f64 {
        self.parts
            .iter()
            .flat_map(|p| p.vertices().iter())
            .map(|v| v.norm())
            .fold(0.0, f64::max)
    }

    /// Narrowest cross-section: the smallest minimal width among the parts.
    pub fn min_cross_section(&self) -> f64 {
        self.parts
            .iter()
            .map(Polygon2D::min_width)
            .fold(f64::INFINITY, f64::min)
    }

    /// Body-frame sample points on and inside the footprint with spacing at
    /// most `max_spacing`.
    ///
    /// Each edge and each part's bounding box is subdivided into a power of
    /// two pieces, so a smaller spacing always yields a superset of points.
    pub fn sample_points(&self, max_spacing: f64) -> Vec<Vec2> {
        let pieces = |len: f64| -> usize {
            let mut n = 1usize;
            while len / n as f64 > max_spacing && n < (1 << 20) {
                n *= 2;
            }
            n
        };
        let mut out = Vec::new();
        for poly in &self.parts {
            for (a, b) in poly.edges() {
                let n = pieces((b - a).norm());
                for k in 0..n {
                    out.push(a + (b - a) * (k as f64 / n as f64));
                }
            }
            let bb = poly.bounds();
            let (mx, my) = (pieces(bb.width()), pieces(bb.height()));
            for j in 1..my {
                for i in 1..mx {
                    let p = Vec2::new(
                        bb.min[0] + bb.width() * i as f64 / mx as f64,
                        bb.min[1] + bb.height() * j as f64 / my as f64,
                    );
                    if poly.contains(p) {
                        out.push(p);
                    }
                }
            }
        }
        out
    }

    fn parts_connected(&self) -> bool {
        let n = self.parts.len();
        let touches = |a: &Polygon2D, b: &Polygon2D| {
            a.edges()
                .any(|(p1, p2)| b.edges().any(|(q1, q2)| segments_intersect(p1, p2, q1, q2)))
                || a.vertices().iter().any(|&v| b.contains(v))
                || b.vertices().iter().any(|&v| a.contains(v))
        };
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(k) = stack.pop() {
            for m in 0..n {
                if !seen[m] && touches(&self.parts[k], &self.parts[m]) {
                    seen[m] = true;
                    stack.push(m);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

/// Boolean occupancy over a regular grid of cells.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid2D {
    pub origin: Vec2,
    pub resolution: f64,
    pub nx: usize,
    pub ny: usize,
    occupied: Vec<bool>,
}

impl OccupancyGrid2D {
    /// All-free grid.
    pub fn new(origin: Vec2, resolution: f64, nx: usize, ny: usize) -> Result<Self> {
        if !(resolution > 0.0) || !resolution.is_finite() {
            return Err(Error::InvalidArgument(format!("resolution must be > 0, got {resolution}")));
        }
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidArgument(format!("grid must have at least one cell, got {nx}x{ny}")));
        }
        Ok(Self {
            origin,
            resolution,
            nx,
            ny,
            occupied: vec![false; nx * ny],
        })
    }

    #[inline]
    pub fn is_occupied(&self, i: usize, j: usize) -> bool {
        self.occupied[j * self.nx + i]
    }

    pub fn set(&mut self, i: usize, j: usize, value: bool) {
        self.occupied[j * self.nx + i] = value;
    }

    pub fn occupied_count(&self) -> usize {
        self.occupied.iter().filter(|&&o| o).count()
    }

    pub fn cell_center(&self, i: usize, j: usize) -> Vec2 {
        self.origin + Vec2::new(i as f64 + 0.5, j as f64 + 0.5) * self.resolution
    }

    /// Cell containing `p`, if inside the grid.
    pub fn cell_of(&self, p: Vec2) -> Option<(usize, usize)> {
        let fx = ((p.x - self.origin.x) / self.resolution).floor();
        let fy = ((p.y - self.origin.y) / self.resolution).floor();
        if fx < 0.0 || fy < 0.0 || fx >= self.nx as f64 || fy >= self.ny as f64 {
            return None;
        }
        Some((fx as usize, fy as usize))
    }

    /// Occupancy at a world point; points outside the grid are free.
    pub fn occupied_at(&self, p: Vec2) -> bool {
        self.cell_of(p).is_some_and(|(i, j)| self.is_occupied(i, j))
    }

    pub fn bounds(&self) -> Aabb {
        Aabb::new(
            self.origin,
            self.origin + Vec2::new(self.nx as f64, self.ny as f64) * self.resolution,
        )
    }

    pub fn occupied_cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.ny).flat_map(move |j| (0..self.nx).filter(move |&i| self.is_occupied(i, j)).map(move |i| (i, j)))
    }

    /// Copy of the grid with `cells` free cells added on every side.
    pub fn padded(&self, cells: usize) -> Self {
        let mut g = OccupancyGrid2D::new(
            self.origin - Vec2::new(cells as f64, cells as f64) * self.resolution,
            self.resolution,
            self.nx + 2 * cells,
            self.ny + 2 * cells,
        )
        .expect("padding keeps a valid grid");
        for (i, j) in self.occupied_cells() {
            g.set(i + cells, j + cells, true);
        }
        g
    }

    /// Loads a binary (P5) PGM. Origin and resolution come from a sidecar
    /// JSON next to it (same stem, `.json`). Image row 0 is the top (max y).
    pub fn from_pgm(path: &Path) -> Result<Self> {
        let sidecar_path = path.with_extension("json");
        let sidecar_text = fs::read_to_string(&sidecar_path).map_err(|e| Error::io(&sidecar_path, e))?;
        let sidecar: PgmSidecar = serde_json::from_str(&sidecar_text).map_err(|e| Error::Parse {
            what: sidecar_path.display().to_string(),
            message: e.to_string(),
        })?;
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let (width, height, maxval, data) = parse_pgm(&bytes).map_err(|message| Error::Parse {
            what: path.display().to_string(),
            message,
        })?;
        let mut grid = OccupancyGrid2D::new(
            Vec2::new(sidecar.origin[0], sidecar.origin[1]),
            sidecar.resolution,
            width,
            height,
        )?;
        for row in 0..height {
            for col in 0..width {
                let px = data[row * width + col] as f64;
                let occ = (maxval as f64 - px) / maxval as f64;
                if occ > sidecar.occupied_thresh {
                    grid.set(col, height - 1 - row, true);
                }
            }
        }
        Ok(grid)
    }
}

#[derive(Debug, Deserialize)]
struct PgmSidecar {
    origin: [f64; 2],
    resolution: f64,
    #[serde(default = "default_occupied_thresh")]
    occupied_thresh: f64,
}

fn default_occupied_thresh() -> f64 {
    0.65
}

fn parse_pgm(bytes: &[u8]) -> std::result::Result<(usize, usize, u16, Vec<u16>), String> {
    let mut pos = 0usize;
    let next_token = |pos: &mut usize| -> std::result::Result<String, String> {
        loop {
            while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if *pos < bytes.len() && bytes[*pos] == b'#' {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
                continue;
            }
            break;
        }
        let start = *pos;
        while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if start == *pos {
            return Err("unexpected end of header".into());
        }
        Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
    };
    let magic = next_token(&mut pos)?;
    if magic != "P5" {
        return Err(format!("expected P5 magic, found {magic:?}"));
    }
    let num = |s: String| s.parse::<usize>().map_err(|_| format!("bad header number {s:?}"));
    let width = num(next_token(&mut pos)?)?;
    let height = num(next_token(&mut pos)?)?;
    let maxval = num(next_token(&mut pos)?)?;
    if maxval == 0 || maxval > 65535 {
        return Err(format!("maxval {maxval} out of range"));
    }
    pos += 1; // single whitespace after maxval
    let bpp = if maxval < 256 { 1 } else { 2 };
    let need = width * height * bpp;
    if bytes.len() < pos + need {
        return Err(format!("pixel data truncated: need {need} bytes, have {}", bytes.len().saturating_sub(pos)));
    }
    let raw = &bytes[pos..pos + need];
    let data = if bpp == 1 {
        raw.iter().map(|&b| b as u16).collect()
    } else {
        raw.chunks(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
    };
    Ok((width, height, maxval as u16, data))
}

/// Obstacle points in the world frame with a uniform bucket index for
/// box queries.
#[derive(Debug, Clone)]
pub struct PointCloud2D {
    points: Vec<Vec2>,
    index: Option<BucketIndex>,
}

#[derive(Debug, Clone)]
struct BucketIndex {
    origin: Vec2,
    size: f64,
    nbx: usize,
    nby: usize,
    starts: Vec<u32>,
    entries: Vec<u32>,
}

/// Edge length of the query buckets, meters.
pub const CLOUD_BUCKET_SIZE: f64 = 0.5;

impl PartialEq for PointCloud2D {
    fn eq(&self, other: &Self) -> bool {
        self.points == other.points
    }
}

impl PointCloud2D {
    pub fn new(points: Vec<Vec2>) -> Result<Self> {
        if let Some(k) = points.iter().position(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::InvalidArgument(format!("cloud point {k} is not finite")));
        }
        let index = BucketIndex::build(&points, CLOUD_BUCKET_SIZE);
        Ok(Self { points, index })
    }

    pub fn empty() -> Self {
        Self {
            points: Vec::new(),
            index: None,
        }
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Indices of all points inside `aabb`, ascending.
    pub fn query(&self, aabb: &Aabb, out: &mut Vec<usize>) {
        out.clear();
        let Some(idx) = &self.index else { return };
        let bx = |x: f64, o: f64, n: usize| -> Option<usize> {
            let f = ((x - o) / idx.size).floor();
            if f < 0.0 {
                Some(0)
            } else if f >= n as f64 {
                Some(n - 1)
            } else {
                Some(f as usize)
            }
        };
        if aabb.max[0] < idx.origin.x
            || aabb.max[1] < idx.origin.y
            || aabb.min[0] > idx.origin.x + idx.nbx as f64 * idx.size
            || aabb.min[1] > idx.origin.y + idx.nby as f64 * idx.size
        {
            return;
        }
        let (Some(i0), Some(i1)) = (bx(aabb.min[0], idx.origin.x, idx.nbx), bx(aabb.max[0], idx.origin.x, idx.nbx)) else {
            return;
        };
        let (Some(j0), Some(j1)) = (bx(aabb.min[1], idx.origin.y, idx.nby), bx(aabb.max[1], idx.origin.y, idx.nby)) else {
            return;
        };
        for j in j0..=j1 {
            for i in i0..=i1 {
                let b = j * idx.nbx + i;
                for &e in &idx.entries[idx.starts[b] as usize..idx.starts[b + 1] as usize] {
                    if aabb.contains(self.points[e as usize]) {
                        out.push(e as usize);
                    }
                }
            }
        }
        out.sort_unstable();
    }
}

impl BucketIndex {
    fn build(points: &[Vec2], size: f64) -> Option<Self> {
        let bb = Aabb::from_points(points)?;
        let origin = Vec2::new(bb.min[0], bb.min[1]);
        let nbx = ((bb.width() / size).floor() as usize + 1).max(1);
        let nby = ((bb.height() / size).floor() as usize + 1).max(1);
        let bucket_of = |p: &Vec2| {
            let i = (((p.x - origin.x) / size).floor() as usize).min(nbx - 1);
            let j = (((p.y - origin.y) / size).floor() as usize).min(nby - 1);
            j * nbx + i
        };
        let mut counts = vec![0u32; nbx * nby + 1];
        for p in points {
            counts[bucket_of(p) + 1] += 1;
        }
        for k in 1..counts.len() {
            counts[k] += counts[k - 1];
        }
        let starts = counts.clone();
        let mut fill = counts;
        let mut entries = vec![0u32; points.len()];
        for (k, p) in points.iter().enumerate() {
            let b = bucket_of(p);
            entries[fill[b] as usize] = k as u32;
            fill[b] += 1;
        }
        Some(Self {
            origin,
            size,
            nbx,
            nby,
            starts,
            entries,
        })
    }
}

/// Rasterizes `shape` into a body-frame grid.
///
/// The grid covers the shape's bounding box grown by `inflation` plus one
/// free cell on every side, aligned so that multiples of `resolution` are
/// vertices. A cell is occupied iff its center lies inside a part or within
/// `inflation` of the union.
pub fn rasterize_shape(shape: &RobotShape, resolution: f64, inflation: f64) -> Result<OccupancyGrid2D> {
    if !(resolution > 0.0) {
        return Err(Error::InvalidArgument(format!("resolution must be > 0, got {resolution}")));
    }
    if !(inflation >= 0.0) {
        return Err(Error::InvalidArgument(format!("inflation must be >= 0, got {inflation}")));
    }
    let bb = shape.bounds().inflated(inflation);
    const SNAP: f64 = 1e-9;
    let i0 = (bb.min[0] / resolution + SNAP).floor() as i64 - 1;
    let j0 = (bb.min[1] / resolution + SNAP).floor() as i64 - 1;
    let i1 = (bb.max[0] / resolution - SNAP).ceil() as i64 + 1;
    let j1 = (bb.max[1] / resolution - SNAP).ceil() as i64 + 1;
    let origin = Vec2::new(i0 as f64 * resolution, j0 as f64 * resolution);
    let mut grid = OccupancyGrid2D::new(origin, resolution, (i1 - i0) as usize, (j1 - j0) as usize)?;
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let c = grid.cell_center(i, j);
            let occ = shape.contains(c) || (inflation > 0.0 && shape.distance(c) <= inflation);
            grid.set(i, j, occ);
        }
    }
    Ok(grid)
}

/// One point per occupied cell, at the cell center.
pub fn pointcloud_from_grid(grid: &OccupancyGrid2D) -> PointCloud2D {
    let pts = grid.occupied_cells().map(|(i, j)| grid.cell_center(i, j)).collect();
    PointCloud2D::new(pts).expect("cell centers are finite")
}

/// Where the world map of a scenario came from.
#[derive(Debug, Clone, PartialEq)]
pub enum MapSpec {
    Grid(OccupancyGrid2D),
    Points(Vec<Vec2>),
    Pgm(PathBuf),
}

/// A planning problem: robot, world, boundary poses and configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub robot: RobotShape,
    pub map: MapSpec,
    pub start: SE2Pose,
    pub goal: SE2Pose,
    pub config: PlannerConfig,
    /// Occupancy used for search and validation.
    pub grid: OccupancyGrid2D,
    /// Obstacle points used by the optimizer.
    pub cloud: PointCloud2D,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    robot: RobotDoc,
    map: MapDoc,
    start: [f64; 3],
    goal: [f64; 3],
    #[serde(default)]
    config: PlannerConfig,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RobotDoc {
    parts: Vec<Vec<[f64; 2]>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum MapDoc {
    Grid(GridDoc),
    Points(Vec<[f64; 2]>),
    Pgm(PathBuf),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridDoc {
    origin: [f64; 2],
    resolution: f64,
    nx: usize,
    ny: usize,
    occupied_cells: Vec<[usize; 2]>,
}

impl Scenario {
    /// Validates and assembles a scenario, deriving the grid / cloud pair.
    pub fn new(
        robot: RobotShape,
        map: MapSpec,
        start: SE2Pose,
        goal: SE2Pose,
        config: PlannerConfig,
        base_dir: Option<&Path>,
    ) -> Result<Self> {
        config.validate()?;
        for (name, p) in [("start", &start), ("goal", &goal)] {
            if !p.is_finite() {
                return Err(Error::InvalidScenario(format!("{name} pose is not finite")));
            }
        }
        let (grid, cloud) = match &map {
            MapSpec::Grid(g) => (g.clone(), pointcloud_from_grid(g)),
            MapSpec::Pgm(path) => {
                let full = match base_dir {
                    Some(dir) if path.is_relative() => dir.join(path),
                    _ => path.clone(),
                };
                let g = OccupancyGrid2D::from_pgm(&full)?;
                let c = pointcloud_from_grid(&g);
                (g, c)
            }
            MapSpec::Points(points) => {
                let cloud = PointCloud2D::new(points.clone())?;
                let grid = grid_from_points(points, &robot, &start, &goal, config.rc_resolution)?;
                (grid, cloud)
            }
        };
        let scenario = Self {
            robot,
            map,
            start,
            goal,
            config,
            grid,
            cloud,
        };
        for (name, pose) in [("start", scenario.start), ("goal", scenario.goal)] {
            if let Some(p) = scenario.first_colliding_point(&pose) {
                return Err(Error::InvalidScenario(format!(
                    "{name} pose ({:.3}, {:.3}, {:.3}) is in collision: footprint point ({:.3}, {:.3}) lies in an occupied cell",
                    pose.p.x, pose.p.y, pose.yaw, p.x, p.y
                )));
            }
        }
        Ok(scenario)
    }

    fn first_colliding_point(&self, pose: &SE2Pose) -> Option<Vec2> {
        let spacing = self.grid.resolution / 2.0;
        self.robot
            .sample_points(spacing)
            .into_iter()
            .map(|b| pose.transform(b))
            .find(|&w| self.grid.occupied_at(w))
    }

    pub fn from_json(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let doc: ScenarioDoc = serde_json::from_str(text).map_err(|e| Error::Parse {
            what: "scenario".into(),
            message: e.to_string(),
        })?;
        let parts = doc
            .robot
            .parts
            .into_iter()
            .enumerate()
            .map(|(k, verts)| {
                Polygon2D::new(verts.into_iter().map(|v| Vec2::new(v[0], v[1])).collect())
                    .map_err(|e| Error::InvalidScenario(format!("robot.parts[{k}]: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let robot = RobotShape::new(parts).map_err(|e| Error::InvalidScenario(format!("robot: {e}")))?;
        let map = match doc.map {
            MapDoc::Grid(g) => {
                let mut grid = OccupancyGrid2D::new(Vec2::new(g.origin[0], g.origin[1]), g.resolution, g.nx, g.ny)
                    .map_err(|e| Error::InvalidScenario(format!("map.grid: {e}")))?;
                for [i, j] in g.occupied_cells {
                    if i >= g.nx || j >= g.ny {
                        return Err(Error::InvalidScenario(format!(
                            "map.grid.occupied_cells: cell [{i}, {j}] outside {}x{}",
                            g.nx, g.ny
                        )));
                    }
                    grid.set(i, j, true);
                }
                MapSpec::Grid(grid)
            }
            MapDoc::Points(pts) => MapSpec::Points(pts.into_iter().map(|p| Vec2::new(p[0], p[1])).collect()),
            MapDoc::Pgm(path) => MapSpec::Pgm(path),
        };
        let pose = |a: [f64; 3]| SE2Pose::new(Vec2::new(a[0], a[1]), a[2]);
        Self::new(robot, map, pose(doc.start), pose(doc.goal), doc.config, base_dir)
    }

    pub fn to_json(&self) -> String {
        let doc = ScenarioDoc {
            robot: RobotDoc {
                parts: self
                    .robot
                    .parts()
                    .iter()
                    .map(|p| p.vertices().iter().map(|v| [v.x, v.y]).collect())
                    .collect(),
            },
            map: match &self.map {
                MapSpec::Grid(g) => MapDoc::Grid(GridDoc {
                    origin: [g.origin.x, g.origin.y],
                    resolution: g.resolution,
                    nx: g.nx,
                    ny: g.ny,
                    occupied_cells: g.occupied_cells().map(|(i, j)| [i, j]).collect(),
                }),
                MapSpec::Points(pts) => MapDoc::Points(pts.iter().map(|p| [p.x, p.y]).collect()),
                MapSpec::Pgm(path) => MapDoc::Pgm(path.clone()),
            },
            start: [self.start.p.x, self.start.p.y, self.start.yaw],
            goal: [self.goal.p.x, self.goal.p.y, self.goal.yaw],
            config: self.config.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("scenario serializes")
    }
}

/// Reads a scenario document from disk.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Scenario::from_json(&text, path.parent())
}

fn grid_from_points(
    points: &[Vec2],
    robot: &RobotShape,
    start: &SE2Pose,
    goal: &SE2Pose,
    resolution: f64,
) -> Result<OccupancyGrid2D> {
    let mut bb = Aabb::new(start.p, start.p);
    bb.expand_to(goal.p);
    for p in points {
        bb.expand_to(*p);
    }
    let bb = bb.inflated(robot.circumradius() + 1.0);
    let i0 = (bb.min[0] / resolution).floor();
    let j0 = (bb.min[1] / resolution).floor();
    let nx = ((bb.max[0] / resolution).ceil() - i0) as usize;
    let ny = ((bb.max[1] / resolution).ceil() - j0) as usize;
    let mut grid = OccupancyGrid2D::new(Vec2::new(i0 * resolution, j0 * resolution), resolution, nx, ny)?;
    for p in points {
        if let Some((i, j)) = grid.cell_of(*p) {
            grid.set(i, j, true);
        }
    }
    Ok(grid)
}
