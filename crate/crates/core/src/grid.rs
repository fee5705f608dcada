//! Spatial partition of the service area and the walking-cost model.
//!
//! The service area is a rows × cols grid of rectangular cells indexed in
//! row-major order. Distances are computed on a local equirectangular
//! projection anchored at the grid origin; at city scale the great-circle
//! correction is negligible.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::scalar::Real;

/// Mean Earth radius in meters, used by the local projection.
const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Errors from grid construction.
#[derive(Debug, thiserror::Error)]
pub enum GridError {
    #[error("grid must have at least one cell (rows={rows}, cols={cols})")]
    EmptyGrid { rows: usize, cols: usize },
    #[error("cell dimensions must be positive (width={width}, height={height})")]
    BadCellSize { width: f64, height: f64 },
}

/// Rectangular partition of the service area into `rows × cols` regions.
///
/// Region indices run `0..n` in row-major order: index `r * cols + c` is the
/// cell in row `r` (south to north) and column `c` (west to east). The
/// origin is the longitude/latitude of the south-west corner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionGrid {
    rows: usize,
    cols: usize,
    cell_width_m: f64,
    cell_height_m: f64,
    origin_lng: f64,
    origin_lat: f64,
}

impl RegionGrid {
    pub fn new(
        rows: usize,
        cols: usize,
        cell_width_m: f64,
        cell_height_m: f64,
        origin_lng: f64,
        origin_lat: f64,
    ) -> Result<Self, GridError> {
        if rows == 0 || cols == 0 {
            return Err(GridError::EmptyGrid { rows, cols });
        }
        if cell_width_m <= 0.0 || cell_height_m <= 0.0 {
            return Err(GridError::BadCellSize {
                width: cell_width_m,
                height: cell_height_m,
            });
        }
        Ok(Self {
            rows,
            cols,
            cell_width_m,
            cell_height_m,
            origin_lng,
            origin_lat,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Number of regions.
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        false // construction guarantees at least one cell
    }

    pub fn cell_width_m(&self) -> f64 {
        self.cell_width_m
    }

    pub fn cell_height_m(&self) -> f64 {
        self.cell_height_m
    }

    /// Projects a longitude/latitude pair onto local flat coordinates in
    /// meters, relative to the grid origin.
    pub fn project(&self, lng: f64, lat: f64) -> (f64, f64) {
        let x = (lng - self.origin_lng).to_radians()
            * self.origin_lat.to_radians().cos()
            * EARTH_RADIUS_M;
        let y = (lat - self.origin_lat).to_radians() * EARTH_RADIUS_M;
        (x, y)
    }

    /// Inverse of [`project`](Self::project).
    pub fn unproject(&self, x_m: f64, y_m: f64) -> (f64, f64) {
        let lng = self.origin_lng
            + (x_m / (EARTH_RADIUS_M * self.origin_lat.to_radians().cos())).to_degrees();
        let lat = self.origin_lat + (y_m / EARTH_RADIUS_M).to_degrees();
        (lng, lat)
    }

    /// Straight-line distance in meters between two points, on the local
    /// projection.
    pub fn distance_m(&self, a: (f64, f64), b: (f64, f64)) -> f64 {
        let (ax, ay) = self.project(a.0, a.1);
        let (bx, by) = self.project(b.0, b.1);
        ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt()
    }

    /// Row-major region index containing the point, or `None` when the point
    /// falls outside the grid bounding box. Points on the northern/eastern
    /// outer edge are out of area; interior cell boundaries belong to the
    /// cell north/east of the line.
    pub fn region_of(&self, lng: f64, lat: f64) -> Option<usize> {
        let (x, y) = self.project(lng, lat);
        if x < 0.0 || y < 0.0 {
            return None;
        }
        let col = (x / self.cell_width_m).floor() as usize;
        let row = (y / self.cell_height_m).floor() as usize;
        if row >= self.rows || col >= self.cols {
            return None;
        }
        Some(row * self.cols + col)
    }

    /// (row, col) of a region index.
    pub fn cell_of(&self, region: usize) -> (usize, usize) {
        assert!(region < self.len(), "region index {region} out of range");
        (region / self.cols, region % self.cols)
    }

    /// Longitude/latitude of the center of a region.
    pub fn cell_center(&self, region: usize) -> (f64, f64) {
        let (row, col) = self.cell_of(region);
        let x = (col as f64 + 0.5) * self.cell_width_m;
        let y = (row as f64 + 0.5) * self.cell_height_m;
        self.unproject(x, y)
    }

    /// The 8-adjacent (Moore) neighbors of a region that lie inside the
    /// grid, in row-major order. Never contains the region itself.
    pub fn neighbors(&self, region: usize) -> Vec<usize> {
        let (row, col) = self.cell_of(region);
        let mut out = Vec::with_capacity(8);
        for dr in -1i64..=1 {
            for dc in -1i64..=1 {
                if dr == 0 && dc == 0 {
                    continue;
                }
                let r = row as i64 + dr;
                let c = col as i64 + dc;
                if r >= 0 && c >= 0 && (r as usize) < self.rows && (c as usize) < self.cols {
                    out.push(r as usize * self.cols + c as usize);
                }
            }
        }
        out
    }

    /// Whether regions `a` and `b` are Moore-adjacent.
    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        let (ar, ac) = self.cell_of(a);
        let (br, bc) = self.cell_of(b);
        let dr = ar.abs_diff(br);
        let dc = ac.abs_diff(bc);
        dr <= 1 && dc <= 1 && (dr, dc) != (0, 0)
    }

    /// Manhattan distance in whole cells between two regions.
    pub fn manhattan_cells(&self, a: usize, b: usize) -> usize {
        let (ar, ac) = self.cell_of(a);
        let (br, bc) = self.cell_of(b);
        ar.abs_diff(br) + ac.abs_diff(bc)
    }

    /// Longest feasible walk in meters: from one corner of a cell to the far
    /// corner of a diagonal Moore neighbor, i.e. two cell diagonals.
    pub fn max_walk_distance_m(&self) -> f64 {
        2.0 * (self.cell_width_m.powi(2) + self.cell_height_m.powi(2)).sqrt()
    }

    /// Walking-cost coefficient calibrated so that costs span `[0, cost_cap]`
    /// over feasible walks: `alpha = cost_cap / d_max²`.
    pub fn calibrated_alpha(&self, cost_cap: f64) -> f64 {
        cost_cap / self.max_walk_distance_m().powi(2)
    }

    /// Uniform point inside a region, as longitude/latitude.
    pub fn sample_point_in<R: Rng>(&self, region: usize, rng: &mut R) -> (f64, f64) {
        let (row, col) = self.cell_of(region);
        let x = (col as f64 + rng.gen::<f64>()) * self.cell_width_m;
        let y = (row as f64 + rng.gen::<f64>()) * self.cell_height_m;
        self.unproject(x, y)
    }
}

/// Quadratic walking cost `alpha · x²` for a walk of `x` meters.
///
/// Same-region pickups cost nothing and are handled by never charging local
/// takes; non-adjacent regions are never offered, so the prohibitive branch
/// of the cost model needs no explicit infinity.
pub fn walking_cost<F: Real>(x: F, alpha: F) -> F {
    alpha * x * x
}
