//! Binary rasters shared by every stage: 2D masks and 3D occupancy grids.

use ndarray::{Array2, Array3, Axis as NdAxis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Square binary raster indexed `[i, j]`. For the XY view `i` is x and `j` is y.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    cells: Array2<bool>,
}

impl Mask {
    pub fn empty(n: usize) -> Self {
        Self {
            cells: Array2::from_elem((n, n), false),
        }
    }

    pub fn full(n: usize) -> Self {
        Self {
            cells: Array2::from_elem((n, n), true),
        }
    }

    pub fn from_array(cells: Array2<bool>) -> Result<Self> {
        let (r, c) = cells.dim();
        if r != c {
            return Err(Error::DimensionMismatch(format!(
                "mask must be square, got {r}x{c}"
            )));
        }
        Ok(Self { cells })
    }

    pub fn from_fn(n: usize, f: impl FnMut((usize, usize)) -> bool) -> Self {
        Self {
            cells: Array2::from_shape_fn((n, n), f),
        }
    }

    pub fn n(&self) -> usize {
        self.cells.nrows()
    }

    pub fn cells(&self) -> &Array2<bool> {
        &self.cells
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.cells[(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: bool) {
        self.cells[(i, j)] = v;
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&v| v).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.cells.iter().any(|&v| v)
    }

    pub fn to_f64(&self) -> Array2<f64> {
        self.cells.mapv(|v| if v { 1.0 } else { 0.0 })
    }

    /// Cell-wise logical AND count.
    pub fn intersection_count(&self, other: &Mask) -> usize {
        self.cells
            .iter()
            .zip(other.cells.iter())
            .filter(|(&a, &b)| a && b)
            .count()
    }

    /// True when every set cell of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.cells
            .iter()
            .zip(other.cells.iter())
            .all(|(&a, &b)| !a || b)
    }

    /// Point reflection `(i, j) -> (n-1-i, n-1-j)` through the grid center.
    pub fn point_reflect(&self) -> Mask {
        let n = self.n();
        Mask::from_fn(n, |(i, j)| self.cells[(n - 1 - i, n - 1 - j)])
    }

    pub fn transpose(&self) -> Mask {
        Mask {
            cells: self.cells.t().to_owned(),
        }
    }

    /// Cyclic translation: output `(i, j)` takes input `(i - di, j - dj)`.
    pub fn roll(&self, di: isize, dj: isize) -> Mask {
        let n = self.n() as isize;
        Mask::from_fn(self.n(), |(i, j)| {
            let si = (i as isize - di).rem_euclid(n) as usize;
            let sj = (j as isize - dj).rem_euclid(n) as usize;
            self.cells[(si, sj)]
        })
    }

    /// Inclusive bounding box `(i_min, i_max, j_min, j_max)`, `None` if empty.
    pub fn bounding_box(&self) -> Option<(usize, usize, usize, usize)> {
        let mut bb: Option<(usize, usize, usize, usize)> = None;
        for ((i, j), &v) in self.cells.indexed_iter() {
            if v {
                bb = Some(match bb {
                    None => (i, i, j, j),
                    Some((a, b, c, d)) => (a.min(i), b.max(i), c.min(j), d.max(j)),
                });
            }
        }
        bb
    }

    /// Mean `(i, j)` of the set cells.
    pub fn centroid(&self) -> Option<(f64, f64)> {
        let mut sum = (0.0, 0.0);
        let mut count = 0usize;
        for ((i, j), &v) in self.cells.indexed_iter() {
            if v {
                sum.0 += i as f64;
                sum.1 += j as f64;
                count += 1;
            }
        }
        (count > 0).then(|| (sum.0 / count as f64, sum.1 / count as f64))
    }

    /// Translate (cyclically) so the centroid lands on cell `(n/2, n/2)`.
    pub fn centered(&self) -> Mask {
        match self.centroid() {
            None => self.clone(),
            Some((ci, cj)) => {
                let half = (self.n() / 2) as f64;
                self.roll((half - ci).round() as isize, (half - cj).round() as isize)
            }
        }
    }

    /// Translate so the bounding box is centered: `lo + hi` becomes `n` or
    /// `n - 1` on both axes. Two silhouettes of one volume share the extent of
    /// their common axis, so this centering agrees between them.
    pub fn bbox_centered(&self) -> Mask {
        match self.bounding_box() {
            None => self.clone(),
            Some((i0, i1, j0, j1)) => {
                let n = self.n() as isize;
                let di = (n - (i0 + i1) as isize).div_euclid(2);
                let dj = (n - (j0 + j1) as isize).div_euclid(2);
                self.roll(di, dj)
            }
        }
    }

    /// Point reflection through the mask's own bounding-box center, which
    /// leaves the bounding box in place.
    pub fn reflect_in_place(&self) -> Mask {
        match self.bounding_box() {
            None => self.clone(),
            Some((i0, i1, j0, j1)) => {
                let n = self.n();
                Mask::from_fn(n, |(i, j)| {
                    let (si, sj) = (
                        (i0 + i1) as isize - i as isize,
                        (j0 + j1) as isize - j as isize,
                    );
                    (0..n as isize).contains(&si)
                        && (0..n as isize).contains(&sj)
                        && self.cells[(si as usize, sj as usize)]
                })
            }
        }
    }

    /// True when no set cell touches the outermost ring.
    pub fn has_margin(&self) -> bool {
        match self.bounding_box() {
            None => true,
            Some((i0, i1, j0, j1)) => i0 > 0 && j0 > 0 && i1 + 1 < self.n() && j1 + 1 < self.n(),
        }
    }

    /// Copy into the center of a larger `n x n` frame (offset `(n - self.n()) / 2`).
    pub fn embed(&self, n: usize) -> Result<Mask> {
        let m = self.n();
        if n < m {
            return Err(Error::invalid(format!(
                "cannot embed {m} grid into {n} grid"
            )));
        }
        let off = (n - m) / 2;
        let mut out = Mask::empty(n);
        for ((i, j), &v) in self.cells.indexed_iter() {
            if v {
                out.cells[(i + off, j + off)] = true;
            }
        }
        Ok(out)
    }
}

/// One of the three orthogonal viewing planes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ViewAxis {
    /// Looking along z; mask indexed `(x, y)`.
    Xy,
    /// Looking along x; mask indexed `(y, z)`.
    Yz,
    /// Looking along y; mask indexed `(z, x)`.
    Zx,
}

impl ViewAxis {
    pub const ALL: [ViewAxis; 3] = [ViewAxis::Xy, ViewAxis::Yz, ViewAxis::Zx];

    pub fn name(self) -> &'static str {
        match self {
            ViewAxis::Xy => "xy",
            ViewAxis::Yz => "yz",
            ViewAxis::Zx => "zx",
        }
    }
}

impl std::str::FromStr for ViewAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "xy" => Ok(ViewAxis::Xy),
            "yz" => Ok(ViewAxis::Yz),
            "zx" => Ok(ViewAxis::Zx),
            other => Err(Error::invalid(format!("unknown view axis '{other}'"))),
        }
    }
}

/// Cubic occupancy grid indexed `[x, y, z]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoxelGrid {
    cells: Array3<bool>,
}

/// Volumetric particle model; same representation as a reconstructed grid.
pub type VoxelModel = VoxelGrid;

impl VoxelGrid {
    pub fn empty(n: usize) -> Self {
        Self {
            cells: Array3::from_elem((n, n, n), false),
        }
    }

    pub fn from_fn(n: usize, f: impl FnMut((usize, usize, usize)) -> bool) -> Self {
        Self {
            cells: Array3::from_shape_fn((n, n, n), f),
        }
    }

    pub fn from_array(cells: Array3<bool>) -> Result<Self> {
        let (a, b, c) = cells.dim();
        if a != b || b != c {
            return Err(Error::DimensionMismatch(format!(
                "voxel grid must be cubic, got {a}x{b}x{c}"
            )));
        }
        Ok(Self { cells })
    }

    pub fn n(&self) -> usize {
        self.cells.len_of(NdAxis(0))
    }

    pub fn cells(&self) -> &Array3<bool> {
        &self.cells
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.cells[(x, y, z)]
    }

    pub fn set(&mut self, x: usize, y: usize, z: usize, v: bool) {
        self.cells[(x, y, z)] = v;
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&v| v).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.cells.iter().any(|&v| v)
    }

    pub fn is_subset_of(&self, other: &VoxelGrid) -> bool {
        self.cells
            .iter()
            .zip(other.cells.iter())
            .all(|(&a, &b)| !a || b)
    }

    /// Logical-OR projection along the axis normal to `axis`.
    pub fn project(&self, axis: ViewAxis) -> Mask {
        let n = self.n();
        let mut out = Mask::empty(n);
        for ((x, y, z), &v) in self.cells.indexed_iter() {
            if v {
                match axis {
                    ViewAxis::Xy => out.set(x, y, true),
                    ViewAxis::Yz => out.set(y, z, true),
                    ViewAxis::Zx => out.set(z, x, true),
                }
            }
        }
        out
    }

    pub fn has_margin(&self) -> bool {
        let n = self.n();
        self.cells
            .indexed_iter()
            .filter(|(_, &v)| v)
            .all(|((x, y, z), _)| [x, y, z].iter().all(|&c| c > 0 && c + 1 < n))
    }
}
