//! Heightfield terrain: generation, bilinear elevation queries, robot-centric scans and
//! the plain-text interchange format.

mod generate;
mod io;

pub use generate::{generate, Family, TerrainSpec, APRON_LENGTH, GAP_DEPTH};
pub use io::{read_heightfield, write_heightfield};

use crate::error::{Error, Result};

/// Slack allowed on bounds checks so that queries exactly on the field edge survive
/// floating-point round-off.
const BOUNDS_EPS: f64 = 1e-9;

/// Regular-grid elevation map.
///
/// Elevation samples sit on grid nodes: node `(ix, iy)` is at world
/// `origin + (ix, iy) * resolution`. The surface between four neighbouring nodes is the
/// bilinear patch through them. Storage is row-major with `y` as the row index.
#[derive(Debug, Clone, PartialEq)]
pub struct Heightfield {
    resolution: f64,
    nx: usize,
    ny: usize,
    origin: [f64; 2],
    elevation: Vec<f64>,
    extremes: (f64, f64),
}

impl Heightfield {
    pub fn new(resolution: f64, nx: usize, ny: usize, origin: [f64; 2], elevation: Vec<f64>) -> Result<Self> {
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(Error::Spec(format!("resolution must be positive, got {resolution}")));
        }
        if nx < 2 || ny < 2 {
            return Err(Error::Spec(format!("heightfield needs at least 2x2 nodes, got {nx}x{ny}")));
        }
        if elevation.len() != nx * ny {
            return Err(Error::Shape(format!(
                "elevation has {} values, expected {}x{}",
                elevation.len(),
                nx,
                ny
            )));
        }
        if !origin.iter().all(|v| v.is_finite()) {
            return Err(Error::Spec("origin must be finite".into()));
        }
        if let Some(bad) = elevation.iter().find(|h| !h.is_finite()) {
            return Err(Error::Spec(format!("non-finite elevation {bad}")));
        }
        let extremes = elevation
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &h| (lo.min(h), hi.max(h)));
        Ok(Self { resolution, nx, ny, origin, elevation, extremes })
    }

    /// A flat field at height zero covering `[x0, x0 + (nx-1)·res] × [y0, y0 + (ny-1)·res]`.
    pub fn flat(resolution: f64, nx: usize, ny: usize, origin: [f64; 2]) -> Result<Self> {
        Self::new(resolution, nx, ny, origin, vec![0.0; nx * ny])
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn origin(&self) -> [f64; 2] {
        self.origin
    }

    pub fn elevation(&self) -> &[f64] {
        &self.elevation
    }

    #[inline]
    pub fn node(&self, ix: usize, iy: usize) -> f64 {
        self.elevation[iy * self.nx + ix]
    }

    /// World position of node `(ix, iy)`.
    #[inline]
    pub fn node_position(&self, ix: usize, iy: usize) -> [f64; 2] {
        [
            self.origin[0] + ix as f64 * self.resolution,
            self.origin[1] + iy as f64 * self.resolution,
        ]
    }

    /// Axis-aligned world bounds `([x_min, y_min], [x_max, y_max])`.
    pub fn bounds(&self) -> ([f64; 2], [f64; 2]) {
        let hi = self.node_position(self.nx - 1, self.ny - 1);
        (self.origin, hi)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (lo, hi) = self.bounds();
        x >= lo[0] - BOUNDS_EPS && x <= hi[0] + BOUNDS_EPS && y >= lo[1] - BOUNDS_EPS && y <= hi[1] + BOUNDS_EPS
    }

    pub fn min_max_elevation(&self) -> (f64, f64) {
        self.extremes
    }

    /// Bilinear elevation at world `(x, y)`. Exact at grid nodes.
    pub fn sample_height(&self, x: f64, y: f64) -> Result<f64> {
        if !self.contains(x, y) {
            let (lo, hi) = self.bounds();
            return Err(Error::Range(format!(
                "({x}, {y}) outside heightfield [{}, {}]x[{}, {}]",
                lo[0], hi[0], lo[1], hi[1]
            )));
        }
        Ok(self.sample_clamped(x, y))
    }

    /// Bilinear elevation with the query clamped into bounds. Callers must have checked
    /// containment when clamping would be wrong.
    pub(crate) fn sample_clamped(&self, x: f64, y: f64) -> f64 {
        let u = ((x - self.origin[0]) / self.resolution).clamp(0.0, (self.nx - 1) as f64);
        let v = ((y - self.origin[1]) / self.resolution).clamp(0.0, (self.ny - 1) as f64);
        let ix = (u.floor() as usize).min(self.nx - 2);
        let iy = (v.floor() as usize).min(self.ny - 2);
        let fu = u - ix as f64;
        let fv = v - iy as f64;
        let h00 = self.node(ix, iy);
        let h10 = self.node(ix + 1, iy);
        let h01 = self.node(ix, iy + 1);
        let h11 = self.node(ix + 1, iy + 1);
        (1.0 - fv) * ((1.0 - fu) * h00 + fu * h10) + fv * ((1.0 - fu) * h01 + fu * h11)
    }

    /// Elevation samples on a yaw-aligned `rows × cols` grid centred on the base,
    /// relative to `base_z`. Rows run along the body forward axis, columns along the
    /// body lateral axis.
    pub fn height_scan(&self, base: Pose2, base_z: f64, rows: usize, cols: usize, spacing: f64) -> Result<HeightScan> {
        if rows == 0 || cols == 0 || !(spacing > 0.0) {
            return Err(Error::Spec(format!("invalid scan grid {rows}x{cols} @ {spacing}")));
        }
        let (s, c) = base.yaw.sin_cos();
        let r0 = (rows as f64 - 1.0) / 2.0;
        let c0 = (cols as f64 - 1.0) / 2.0;
        let mut values = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for k in 0..cols {
                let fx = (r as f64 - r0) * spacing;
                let fy = (k as f64 - c0) * spacing;
                let wx = base.x + c * fx - s * fy;
                let wy = base.y + s * fx + c * fy;
                values.push(self.sample_height(wx, wy)? - base_z);
            }
        }
        Ok(HeightScan { rows, cols, values })
    }
}

/// Planar pose: position and heading.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        Self { x, y, yaw }
    }
}

/// Robot-centric height samples, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightScan {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl HeightScan {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }
}
