//! Exact Euclidean distance transforms and vertex-stored scalar fields.
//!
//! Distances are computed with the lower-envelope-of-parabolas algorithm
//! (one pass per row, one per column, each linear in its length). Fields
//! store values at grid *vertices*; queries interpolate bilinearly and the
//! gradient is the analytic derivative of that interpolant, so it jumps
//! across cell edges.

use std::fmt::Write as _;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::geom::Vec2;
use crate::scene::OccupancyGrid2D;
use crate::{Error, Result};

/// Stand-in for +∞ inside the transform.
///
/// Integer valued and far below 2⁵³, so `f + q²` stays exact for any
/// integer `f` and grid extents up to ~10⁷ vertices along one axis; it also
/// exceeds the squared diagonal of any such grid.
pub const EDT_INF: f64 = 1e15;

/// One-dimensional squared distance transform.
///
/// `output[p] = min_q ((p - q)² + f[q])`. `f64::INFINITY` entries are
/// accepted; an output that could only come from infinite inputs is
/// reported as `f64::INFINITY`.
pub fn edt_1d(f: &[f64]) -> Vec<f64> {
    let n = f.len();
    let input: Vec<f64> = f
        .iter()
        .map(|&x| if x >= EDT_INF { EDT_INF } else { x })
        .collect();
    let mut out = vec![0.0; n];
    let mut scratch = Scratch::new(n);
    envelope(&input, &mut out, &mut scratch);
    for v in &mut out {
        if *v >= EDT_INF {
            *v = f64::INFINITY;
        }
    }
    out
}

struct Scratch {
    v: Vec<usize>,
    z: Vec<f64>,
}

impl Scratch {
    fn new(n: usize) -> Self {
        Self {
            v: vec![0; n],
            z: vec![0.0; n + 1],
        }
    }
}

fn envelope(f: &[f64], d: &mut [f64], s: &mut Scratch) {
    let n = f.len();
    if n == 0 {
        return;
    }
    let (v, z) = (&mut s.v, &mut s.z);
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let qf = q as f64;
        let fq = f[q] + qf * qf;
        let mut inter;
        // z[0] = -inf terminates the pop loop at k = 0.
        loop {
            let vk = v[k] as f64;
            inter = (fq - (f[v[k]] + vk * vk)) / (2.0 * qf - 2.0 * vk);
            if inter <= z[k] {
                k -= 1;
            } else {
                break;
            }
        }
        k += 1;
        v[k] = q;
        z[k] = inter;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, out) in d.iter_mut().enumerate() {
        let qf = q as f64;
        while z[k + 1] < qf {
            k += 1;
        }
        let dq = qf - v[k] as f64;
        *out = dq * dq + f[v[k]];
    }
}

/// Exact Euclidean distance (in vertex units) from every vertex of an
/// `nvx × nvy` lattice to the nearest `true` entry of `mask`.
///
/// `mask` is row-major (`mask[j * nvx + i]`).
pub fn edt_2d(mask: &[bool], nvx: usize, nvy: usize) -> Result<Vec<f64>> {
    if mask.len() != nvx * nvy || nvx == 0 || nvy == 0 {
        return Err(Error::InvalidArgument(format!(
            "mask of length {} does not match {nvx}x{nvy}",
            mask.len()
        )));
    }
    if !mask.iter().any(|&m| m) {
        return Err(Error::Degenerate(
            "distance transform needs at least one seed vertex".into(),
        ));
    }
    let mut sq: Vec<f64> = mask
        .iter()
        .map(|&m| if m { 0.0 } else { EDT_INF })
        .collect();

    let mut scratch = Scratch::new(nvx.max(nvy));
    let mut line_in = vec![0.0; nvx.max(nvy)];
    let mut line_out = vec![0.0; nvx.max(nvy)];

    for j in 0..nvy {
        let row = &mut sq[j * nvx..(j + 1) * nvx];
        line_in[..nvx].copy_from_slice(row);
        envelope(&line_in[..nvx], &mut line_out[..nvx], &mut scratch);
        for (r, &o) in row.iter_mut().zip(&line_out[..nvx]) {
            *r = o.min(EDT_INF);
        }
    }
    for i in 0..nvx {
        for j in 0..nvy {
            line_in[j] = sq[j * nvx + i];
        }
        envelope(&line_in[..nvy], &mut line_out[..nvy], &mut scratch);
        for j in 0..nvy {
            sq[j * nvx + i] = line_out[j];
        }
    }
    Ok(sq.into_iter().map(f64::sqrt).collect())
}

/// Which sign each side of the occupied region carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SignConvention {
    /// Negative inside the occupied region, zero elsewhere (robot-centric field).
    InsideNegativeOutsideZero,
    /// Negative inside, positive outside (environment field).
    InsideNegativeOutsidePositive,
}

/// What a query outside the field extent returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueryPolicy {
    /// Value 0 and zero gradient.
    OutsideZero,
    /// [`Error::OutOfBounds`].
    Error,
}

/// Scalar values sampled at the vertices of a regular grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField2D {
    pub origin: Vec2,
    pub resolution: f64,
    /// Cell counts; there are `(nx + 1) × (ny + 1)` vertices.
    pub nx: usize,
    pub ny: usize,
    /// Row-major vertex values, `values[j * (nx + 1) + i]`.
    pub values: Vec<f64>,
}

impl ScalarField2D {
    pub fn new(origin: Vec2, resolution: f64, nx: usize, ny: usize, values: Vec<f64>) -> Result<Self> {
        if !(resolution > 0.0) || nx == 0 || ny == 0 {
            return Err(Error::InvalidArgument(format!(
                "field needs resolution > 0 and at least one cell (got res {resolution}, {nx}x{ny})"
            )));
        }
        if values.len() != (nx + 1) * (ny + 1) {
            return Err(Error::InvalidArgument(format!(
                "expected {} vertex values, got {}",
                (nx + 1) * (ny + 1),
                values.len()
            )));
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("vertex value {bad} is not finite")));
        }
        Ok(Self {
            origin,
            resolution,
            nx,
            ny,
            values,
        })
    }

    #[inline]
    pub fn vertex(&self, i: usize, j: usize) -> f64 {
        self.values[j * (self.nx + 1) + i]
    }

    pub fn vertex_position(&self, i: usize, j: usize) -> Vec2 {
        self.origin + Vec2::new(i as f64, j as f64) * self.resolution
    }

    /// Field extent as `(min, max)` corners.
    pub fn extent(&self) -> (Vec2, Vec2) {
        (
            self.origin,
            self.origin + Vec2::new(self.nx as f64, self.ny as f64) * self.resolution,
        )
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Locates the cell containing `p` and the local coordinates in it.
    #[inline]
    fn locate(&self, p: Vec2) -> Option<(usize, usize, f64, f64)> {
        let fx = (p.x - self.origin.x) / self.resolution;
        let fy = (p.y - self.origin.y) / self.resolution;
        let (nx, ny) = (self.nx as f64, self.ny as f64);
        if !(fx >= 0.0 && fx <= nx && fy >= 0.0 && fy <= ny) {
            return None;
        }
        let i = (fx.floor() as usize).min(self.nx - 1);
        let j = (fy.floor() as usize).min(self.ny - 1);
        Some((i, j, fx - i as f64, fy - j as f64))
    }

    /// Bilinear value and its analytic gradient, or `None` outside the extent.
    #[inline]
    pub fn sample(&self, p: Vec2) -> Option<(f64, Vec2)> {
        let (i, j, u, v) = self.locate(p)?;
        let w = self.nx + 1;
        let base = j * w + i;
        let v00 = self.values[base];
        let v10 = self.values[base + 1];
        let v01 = self.values[base + w];
        let v11 = self.values[base + w + 1];
        let value = (1.0 - u) * (1.0 - v) * v00 + u * (1.0 - v) * v10 + (1.0 - u) * v * v01 + u * v * v11;
        let gx = ((1.0 - v) * (v10 - v00) + v * (v11 - v01)) / self.resolution;
        let gy = ((1.0 - u) * (v01 - v00) + u * (v11 - v10)) / self.resolution;
        Some((value, Vec2::new(gx, gy)))
    }

    /// Value only; cheaper than [`sample`](Self::sample) when the gradient is not needed.
    #[inline]
    pub fn value_at(&self, p: Vec2) -> Option<f64> {
        let (i, j, u, v) = self.locate(p)?;
        let w = self.nx + 1;
        let base = j * w + i;
        Some(
            (1.0 - u) * (1.0 - v) * self.values[base]
                + u * (1.0 - v) * self.values[base + 1]
                + (1.0 - u) * v * self.values[base + w]
                + u * v * self.values[base + w + 1],
        )
    }

    pub fn interpolate(&self, p: Vec2, policy: QueryPolicy) -> Result<f64> {
        match (self.value_at(p), policy) {
            (Some(v), _) => Ok(v),
            (None, QueryPolicy::OutsideZero) => Ok(0.0),
            (None, QueryPolicy::Error) => Err(Error::OutOfBounds { x: p.x, y: p.y }),
        }
    }

    pub fn gradient(&self, p: Vec2, policy: QueryPolicy) -> Result<Vec2> {
        match (self.sample(p), policy) {
            (Some((_, g)), _) => Ok(g),
            (None, QueryPolicy::OutsideZero) => Ok(Vec2::zeros()),
            (None, QueryPolicy::Error) => Err(Error::OutOfBounds { x: p.x, y: p.y }),
        }
    }

    /// Serializes to the dump format: one JSON header line followed by
    /// `ny + 1` CSV rows of `nx + 1` vertex values (row `j` = constant y).
    pub fn to_dump(&self, convention: SignConvention) -> String {
        let header = DumpHeader {
            origin: [self.origin.x, self.origin.y],
            resolution: self.resolution,
            nx: self.nx,
            ny: self.ny,
            convention,
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for row in self.values.chunks(self.nx + 1) {
            for (k, v) in row.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                write!(out, "{v}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn from_dump(reader: impl BufRead) -> Result<(Self, SignConvention)> {
        let parse_err = |message: String| Error::Parse {
            what: "field dump".into(),
            message,
        };
        let mut lines = reader.lines();
        let header_line = lines
            .next()
            .ok_or_else(|| parse_err("empty input".into()))?
            .map_err(|e| parse_err(e.to_string()))?;
        let header: DumpHeader =
            serde_json::from_str(&header_line).map_err(|e| parse_err(format!("header: {e}")))?;
        let mut values = Vec::with_capacity((header.nx + 1) * (header.ny + 1));
        for (row, line) in lines.enumerate() {
            let line = line.map_err(|e| parse_err(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            for (col, tok) in line.split(',').enumerate() {
                let v: f64 = tok.trim().parse().map_err(|_| {
                    parse_err(format!("line {}, column {}: bad number {tok:?}", row + 2, col + 1))
                })?;
                values.push(v);
            }
        }
        let field = ScalarField2D::new(
            Vec2::new(header.origin[0], header.origin[1]),
            header.resolution,
            header.nx,
            header.ny,
            values,
        )?;
        Ok((field, header.convention))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct DumpHeader {
    origin: [f64; 2],
    resolution: f64,
    nx: usize,
    ny: usize,
    convention: SignConvention,
}

/// Per-vertex classification relative to the occupied cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VertexClass {
    /// Every adjacent cell is occupied.
    Inside,
    /// Adjacent to both occupied and free cells.
    Boundary,
    /// No adjacent cell is occupied.
    Outside,
}

/// Classifies the `(nx + 1) × (ny + 1)` vertices of `grid`.
pub fn classify_vertices(grid: &OccupancyGrid2D) -> Vec<VertexClass> {
    let (nx, ny) = (grid.nx, grid.ny);
    let mut out = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            let mut any = false;
            let mut all = true;
            for cj in j.saturating_sub(1)..=j.min(ny - 1) {
                for ci in i.saturating_sub(1)..=i.min(nx - 1) {
                    if grid.is_occupied(ci, cj) {
                        any = true;
                    } else {
                        all = false;
                    }
                }
            }
            out.push(match (any, all) {
                (true, true) => VertexClass::Inside,
                (true, false) => VertexClass::Boundary,
                _ => VertexClass::Outside,
            });
        }
    }
    out
}

/// Builds a signed distance field at the vertices of `grid`.
///
/// Inside vertices get minus the distance to the nearest non-inside vertex.
/// Under [`SignConvention::InsideNegativeOutsidePositive`], outside vertices
/// get the distance to the nearest vertex touching an occupied cell; boundary
/// vertices are always 0.
pub fn signed_field(grid: &OccupancyGrid2D, convention: SignConvention) -> Result<ScalarField2D> {
    let occupied = grid.occupied_count();
    if occupied == 0 {
        return Err(Error::Degenerate("grid has no occupied cells".into()));
    }
    if occupied == grid.nx * grid.ny {
        return Err(Error::Degenerate("grid has no free cells".into()));
    }
    let (nvx, nvy) = (grid.nx + 1, grid.ny + 1);
    let classes = classify_vertices(grid);
    let res = grid.resolution;

    let not_inside: Vec<bool> = classes.iter().map(|&c| c != VertexClass::Inside).collect();
    let to_surface = edt_2d(&not_inside, nvx, nvy)?;

    let values = match convention {
        SignConvention::InsideNegativeOutsideZero => classes
            .iter()
            .zip(&to_surface)
            .map(|(&c, &d)| if c == VertexClass::Inside { -d * res } else { 0.0 })
            .collect(),
        SignConvention::InsideNegativeOutsidePositive => {
            let touching: Vec<bool> = classes.iter().map(|&c| c != VertexClass::Outside).collect();
            let to_obstacle = edt_2d(&touching, nvx, nvy)?;
            classes
                .iter()
                .zip(to_surface.iter().zip(&to_obstacle))
                .map(|(&c, (&din, &dout))| match c {
                    VertexClass::Inside => -din * res,
                    VertexClass::Boundary => 0.0,
                    VertexClass::Outside => dout * res,
                })
                .collect()
        }
    };
    ScalarField2D::new(grid.origin, res, grid.nx, grid.ny, values)
}
