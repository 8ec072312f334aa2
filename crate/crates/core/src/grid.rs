//! Normalised pixel-centre coordinates shared by the HR and LR rasters.
//!
//! Pixel `(i, j)` of an `H×W` raster sits at
//! `[−1 + (2i+1)/H, −1 + (2j+1)/W]`, so both rasters cover the same square
//! `[−1, 1]²` and a coordinate can be looked up in either.

use crate::error::{Error, Result};

/// Centre coordinate of pixel `i` on an axis of `n` pixels.
#[inline]
pub fn center(i: usize, n: usize) -> f64 {
    -1.0 + (2 * i + 1) as f64 / n as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoordGrid {
    height: usize,
    width: usize,
    coords: Vec<[f64; 2]>,
}

impl CoordGrid {
    pub fn new(height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidArgument(format!("grid extents must be positive, got {height}x{width}")));
        }
        let mut coords = Vec::with_capacity(height * width);
        for i in 0..height {
            for j in 0..width {
                coords.push([center(i, height), center(j, width)]);
            }
        }
        Ok(CoordGrid { height, width, coords })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn coord(&self, i: usize, j: usize) -> [f64; 2] {
        self.coords[i * self.width + j]
    }

    /// Row-major coordinates, `height × width` entries.
    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }
}

/// Shorthand for [`CoordGrid::new`].
pub fn normalized_grid(height: usize, width: usize) -> Result<CoordGrid> {
    CoordGrid::new(height, width)
}

/// The four LR neighbours of one query coordinate.
///
/// Neighbour order is `(r0,c0), (r0,c1), (r1,c0), (r1,c1)` where `r0 ≤ r1`
/// and `c0 ≤ c1` bracket the query. Corner indices are clamped into the
/// raster independently, so border queries repeat pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborQuery {
    pub query: [f64; 2],
    pub neighbors: [(usize, usize); 4],
    /// Index into `neighbors` of the nearest LR centre.
    pub nearest_slot: usize,
    pub nearest: (usize, usize),
    /// `C_q − C_i` for each neighbour.
    pub rel: [[f64; 2]; 4],
}

/// Lower/upper bracketing index on one axis, clamped to `0..n`.
fn bracket(coord: f64, n: usize) -> (usize, usize) {
    // continuous index: centre of pixel i maps to exactly i
    let u = (coord + 1.0) * n as f64 / 2.0 - 0.5;
    let lo = u.floor();
    let clamp = |v: f64| v.max(0.0).min((n - 1) as f64) as usize;
    (clamp(lo), clamp(lo + 1.0))
}

pub fn neighbor_query(query: [f64; 2], lr_height: usize, lr_width: usize) -> NeighborQuery {
    let (r0, r1) = bracket(query[0], lr_height);
    let (c0, c1) = bracket(query[1], lr_width);
    let neighbors = [(r0, c0), (r0, c1), (r1, c0), (r1, c1)];
    let rel = neighbors.map(|(r, c)| [query[0] - center(r, lr_height), query[1] - center(c, lr_width)]);

    // neighbours are listed in lexicographic order, so the first strict
    // minimum already implements the smallest-row-then-column tie-break
    let mut nearest_slot = 0;
    let mut best = f64::INFINITY;
    for (slot, d) in rel.iter().enumerate() {
        let dist = d[0] * d[0] + d[1] * d[1];
        if dist < best {
            best = dist;
            nearest_slot = slot;
        }
    }
    NeighborQuery { query, neighbors, nearest_slot, nearest: neighbors[nearest_slot], rel }
}

/// Neighbour queries for every pixel of `hr`, row-major.
pub fn all_queries(hr: &CoordGrid, lr_height: usize, lr_width: usize) -> Vec<NeighborQuery> {
    hr.coords().iter().map(|&q| neighbor_query(q, lr_height, lr_width)).collect()
}
