//! Programmable pseudo-particles.
//!
//! Every family is a union of rectangles ("bars") in the particle's local
//! plane. Bars are built on a unit skeleton, then scaled so the skeleton's
//! largest endpoint-to-endpoint distance equals `feret_um`; the bar width is
//! `width_frac * feret_um`. The shape is centered on the bounding-box center
//! of its rectangle corners before rotation.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{Mask, ViewAxis, VoxelModel};
use crate::seed;

/// Size range of the programmed particles, micrometers.
pub const FERET_MIN_UM: f64 = 370.0;
pub const FERET_MAX_UM: f64 = 1500.0;

pub const WIDTH_FRAC_RANGE: (f64, f64) = (0.1, 0.25);
pub const ARM_RATIO_RANGE: (f64, f64) = (0.6, 1.0);
pub const BRANCH_FRAC_RANGE: (f64, f64) = (0.2, 0.4);

/// Branchlets sit at this fraction of a dendrite arm.
const BRANCH_ATTACH: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Stick,
    Cross,
    Dendrite,
    L,
    T,
    Y,
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::Stick,
        Family::Cross,
        Family::Dendrite,
        Family::L,
        Family::T,
        Family::Y,
    ];

    pub fn is_centrosymmetric(self) -> bool {
        matches!(self, Family::Stick | Family::Cross | Family::Dendrite)
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Stick => "stick",
            Family::Cross => "cross",
            Family::Dendrite => "dendrite",
            Family::L => "l",
            Family::T => "t",
            Family::Y => "y",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::invalid(format!("unknown particle family '{s}'")))
    }
}

/// Family-specific dimensionless ratios; unused ratios are stored as 1.0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeParams {
    pub width_frac: f64,
    pub arm_ratio: f64,
    pub branch_frac: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeSpec {
    pub family: Family,
    pub feret_um: f64,
    pub params: ShapeParams,
    pub seed: u64,
}

impl ShapeSpec {
    /// Validated constructor. `feret_um` is checked against the supported range;
    /// use [`ShapeSpec::new_unchecked_size`] for test geometries outside it.
    pub fn new(family: Family, feret_um: f64, params: ShapeParams, seed: u64) -> Result<Self> {
        if !(FERET_MIN_UM..=FERET_MAX_UM).contains(&feret_um) {
            return Err(Error::invalid(format!(
                "feret_um {feret_um} outside [{FERET_MIN_UM}, {FERET_MAX_UM}]"
            )));
        }
        Self::new_unchecked_size(family, feret_um, params, seed)
    }

    pub fn new_unchecked_size(
        family: Family,
        feret_um: f64,
        params: ShapeParams,
        seed: u64,
    ) -> Result<Self> {
        let p = params;
        let ok = |v: f64| v > 0.0 && v <= 1.0;
        if !(feret_um > 0.0 && feret_um.is_finite()) {
            return Err(Error::invalid(format!(
                "feret_um must be positive, got {feret_um}"
            )));
        }
        if !(ok(p.width_frac) && ok(p.arm_ratio) && ok(p.branch_frac)) || p.width_frac > 0.5 {
            return Err(Error::invalid(format!("shape params out of range: {p:?}")));
        }
        Ok(Self {
            family,
            feret_um,
            params,
            seed,
        })
    }

    /// Rectangles of the shape in the local plane, micrometers, centered.
    pub fn bars(&self) -> Vec<Bar> {
        let skeleton = skeleton(self.family, &self.params);
        let diameter = skeleton_diameter(&skeleton);
        let scale = self.feret_um / diameter;
        let half_width = 0.5 * self.params.width_frac * self.feret_um;

        let mut bars: Vec<Bar> = skeleton
            .iter()
            .map(|seg| {
                let a = [seg.a[0] * scale, seg.a[1] * scale];
                let b = [seg.b[0] * scale, seg.b[1] * scale];
                let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
                let len = (dx * dx + dy * dy).sqrt();
                let dir = [dx / len, dy / len];
                // Extending the start by half a width fills square corners.
                let ext = if seg.extend_start { half_width } else { 0.0 };
                let half_len = 0.5 * (len + ext);
                let mid = 0.5 * (len - ext);
                Bar {
                    center: [a[0] + dir[0] * mid, a[1] + dir[1] * mid],
                    dir,
                    half_len,
                    half_width,
                }
            })
            .collect();

        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for c in bars.iter().flat_map(Bar::corners) {
            for k in 0..2 {
                lo[k] = lo[k].min(c[k]);
                hi[k] = hi[k].max(c[k]);
            }
        }
        let shift = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])];
        for bar in &mut bars {
            bar.center[0] -= shift[0];
            bar.center[1] -= shift[1];
        }
        bars
    }

    /// Slab thickness of the volumetric model.
    pub fn thickness_um(&self) -> f64 {
        self.params.width_frac * self.feret_um
    }
}

/// Oriented rectangle in the local plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bar {
    pub center: [f64; 2],
    pub dir: [f64; 2],
    pub half_len: f64,
    pub half_width: f64,
}

impl Bar {
    fn perp(&self) -> [f64; 2] {
        [-self.dir[1], self.dir[0]]
    }

    pub fn corners(&self) -> [[f64; 2]; 4] {
        let (u, v) = (self.dir, self.perp());
        let mut out = [[0.0; 2]; 4];
        for (k, (su, sv)) in [(1.0, 1.0), (1.0, -1.0), (-1.0, -1.0), (-1.0, 1.0)]
            .into_iter()
            .enumerate()
        {
            out[k] = [
                self.center[0] + su * self.half_len * u[0] + sv * self.half_width * v[0],
                self.center[1] + su * self.half_len * u[1] + sv * self.half_width * v[1],
            ];
        }
        out
    }
}

struct Segment {
    a: [f64; 2],
    b: [f64; 2],
    extend_start: bool,
}

fn seg(a: [f64; 2], b: [f64; 2]) -> Segment {
    Segment {
        a,
        b,
        extend_start: false,
    }
}

fn polar(r: f64, theta: f64) -> [f64; 2] {
    [r * theta.cos(), r * theta.sin()]
}

fn skeleton(family: Family, p: &ShapeParams) -> Vec<Segment> {
    match family {
        Family::Stick => vec![seg([-0.5, 0.0], [0.5, 0.0])],
        Family::Cross => vec![seg([-0.5, 0.0], [0.5, 0.0]), seg([0.0, -0.5], [0.0, 0.5])],
        Family::Dendrite => {
            let mut out = Vec::with_capacity(18);
            let arm = 0.5;
            for k in 0..6 {
                let theta = k as f64 * PI / 3.0;
                out.push(seg([0.0, 0.0], polar(arm, theta)));
                let base = polar(arm * BRANCH_ATTACH, theta);
                for side in [1.0, -1.0] {
                    let tip = polar(arm * p.branch_frac, theta + side * PI / 3.0);
                    out.push(seg(base, [base[0] + tip[0], base[1] + tip[1]]));
                }
            }
            out
        }
        Family::L => vec![
            Segment {
                a: [0.0, 0.0],
                b: [1.0, 0.0],
                extend_start: true,
            },
            seg([0.0, 0.0], [0.0, p.arm_ratio]),
        ],
        Family::T => vec![
            seg([-0.5, 0.0], [0.5, 0.0]),
            seg([0.0, 0.0], [0.0, -p.arm_ratio]),
        ],
        Family::Y => {
            let up = PI / 2.0;
            vec![
                seg([0.0, 0.0], polar(0.5 * p.arm_ratio, up + PI)),
                seg([0.0, 0.0], polar(0.5, up + PI / 3.0)),
                seg([0.0, 0.0], polar(0.5, up - PI / 3.0)),
            ]
        }
    }
}

fn skeleton_diameter(segments: &[Segment]) -> f64 {
    let pts: Vec<[f64; 2]> = segments.iter().flat_map(|s| [s.a, s.b]).collect();
    let mut best = 0.0f64;
    for (i, p) in pts.iter().enumerate() {
        for q in &pts[i + 1..] {
            best = best.max(((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt());
        }
    }
    best
}

/// Draw a shape of `family` with size uniform in `size_range_um`.
pub fn sample_shape(family: Family, size_range_um: (f64, f64), seed: u64) -> Result<ShapeSpec> {
    let (lo, hi) = size_range_um;
    if !(lo.is_finite() && hi.is_finite()) || lo < 1.0 || hi > 1e5 || lo > hi {
        return Err(Error::invalid(format!(
            "size range [{lo}, {hi}] must satisfy 1 <= min <= max <= 1e5"
        )));
    }
    let mut rng = seed::rng(seed);
    let feret_um = if lo == hi { lo } else { rng.gen_range(lo..hi) };
    let width_frac = rng.gen_range(WIDTH_FRAC_RANGE.0..=WIDTH_FRAC_RANGE.1);
    let arm: f64 = rng.gen_range(ARM_RATIO_RANGE.0..=ARM_RATIO_RANGE.1);
    let branch: f64 = rng.gen_range(BRANCH_FRAC_RANGE.0..=BRANCH_FRAC_RANGE.1);
    let params = ShapeParams {
        width_frac,
        arm_ratio: if matches!(family, Family::L | Family::T | Family::Y) {
            arm
        } else {
            1.0
        },
        branch_frac: if family == Family::Dendrite {
            branch
        } else {
            1.0
        },
    };
    ShapeSpec::new_unchecked_size(family, feret_um, params, seed)
}

/// Rotation of the particle frame into the lab frame, as a unit quaternion
/// `[w, x, y, z]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub quaternion: [f64; 4],
}

impl Pose {
    pub const IDENTITY: Pose = Pose {
        quaternion: [1.0, 0.0, 0.0, 0.0],
    };

    pub fn from_quaternion(q: [f64; 4]) -> Result<Self> {
        let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::invalid("quaternion must be nonzero"));
        }
        Ok(Self {
            quaternion: q.map(|v| v / norm),
        })
    }

    pub fn from_axis_angle(axis: [f64; 3], angle: f64) -> Self {
        let norm = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        let (s, c) = (0.5 * angle).sin_cos();
        Pose {
            quaternion: [
                c,
                s * axis[0] / norm,
                s * axis[1] / norm,
                s * axis[2] / norm,
            ],
        }
    }

    /// Rotation about the lab z axis.
    pub fn rot_z(angle: f64) -> Self {
        Self::from_axis_angle([0.0, 0.0, 1.0], angle)
    }

    /// `self` applied after `first`.
    pub fn compose(&self, first: &Pose) -> Pose {
        let [a1, b1, c1, d1] = self.quaternion;
        let [a2, b2, c2, d2] = first.quaternion;
        Pose {
            quaternion: [
                a1 * a2 - b1 * b2 - c1 * c2 - d1 * d2,
                a1 * b2 + b1 * a2 + c1 * d2 - d1 * c2,
                a1 * c2 - b1 * d2 + c1 * a2 + d1 * b2,
                a1 * d2 + b1 * c2 - c1 * b2 + d1 * a2,
            ],
        }
    }

    pub fn norm(&self) -> f64 {
        self.quaternion.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Row-major rotation matrix.
    pub fn matrix(&self) -> [[f64; 3]; 3] {
        let [w, x, y, z] = self.quaternion;
        [
            [
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
            ],
            [
                2.0 * (x * y + w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - w * x),
            ],
            [
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                1.0 - 2.0 * (x * x + y * y),
            ],
        ]
    }

    pub fn rotate(&self, v: [f64; 3]) -> [f64; 3] {
        let m = self.matrix();
        [
            m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
            m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
        ]
    }

    /// Ratio of projected area (along lab z) to true area for a planar particle.
    pub fn projected_area_factor(&self) -> f64 {
        self.rotate([0.0, 0.0, 1.0])[2].abs()
    }
}

/// Uniform rotation: normalized 4D Gaussian.
pub fn sample_pose(seed: u64) -> Pose {
    let mut rng = seed::rng(seed);
    loop {
        let q: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return Pose {
                quaternion: q.map(|v| v / norm),
            };
        }
    }
}

/// Minimum projected-area fraction accepted by [`sample_visible_pose`].
pub const MIN_PROJECTED_AREA_FRAC: f64 = 0.01;

/// Draws poses from `seed, seed+1, ...` until the projected area is at least
/// 1% of the face-on area and the rasterized mask is nonempty. Returns the
/// pose and the seed that produced it.
pub fn sample_visible_pose(spec: &ShapeSpec, grid: &GridSpec, seed: u64) -> Result<(Pose, u64)> {
    for k in 0..1000u64 {
        let s = seed.wrapping_add(k);
        let pose = sample_pose(s);
        if pose.projected_area_factor() < MIN_PROJECTED_AREA_FRAC {
            continue;
        }
        if !rasterize_projection(spec, &pose, grid)?.is_empty() {
            return Ok((pose, s));
        }
    }
    Err(Error::invalid("no visible pose found in 1000 draws"))
}

/// Upper bound on the distance from a shape's center to any bar corner, as a
/// fraction of `feret_um`, over all families and parameter ranges. The T
/// family with full-length stem and widest bars comes closest (0.703).
pub const MAX_RADIUS_FRAC: f64 = 0.71;

/// Square object grid, cell centers at `(i + 0.5 - n/2) * cell_um`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n: usize,
    pub cell_um: f64,
}

impl GridSpec {
    pub fn new(n: usize, cell_um: f64) -> Result<Self> {
        if !n.is_power_of_two() || n < 4 {
            return Err(Error::invalid(format!(
                "grid side {n} must be a power of two >= 4"
            )));
        }
        if !(cell_um > 0.0 && cell_um.is_finite()) {
            return Err(Error::invalid(format!(
                "cell size {cell_um} must be positive"
            )));
        }
        Ok(Self { n, cell_um })
    }

    /// Grid whose physical side is twice `max_feret_um`.
    pub fn for_max_size(n: usize, max_feret_um: f64) -> Result<Self> {
        Self::new(n, 2.0 * max_feret_um / n as f64)
    }

    /// Grid on which a particle of `max_feret_um` spans `span_cells` cells.
    pub fn for_span(n: usize, max_feret_um: f64, span_cells: f64) -> Result<Self> {
        if !(span_cells > 0.0 && span_cells <= n as f64) {
            return Err(Error::invalid(format!(
                "span of {span_cells} cells does not fit a {n} grid"
            )));
        }
        Self::new(n, max_feret_um / span_cells)
    }

    /// Largest span for which every shape up to `max_feret_um` fits at any
    /// pose, one free cell kept on each side.
    pub fn fitted(n: usize, max_feret_um: f64) -> Result<Self> {
        Self::for_span(
            n,
            max_feret_um,
            ((0.5 * n as f64 - 1.0) / MAX_RADIUS_FRAC).floor(),
        )
    }

    pub fn extent_um(&self) -> f64 {
        self.n as f64 * self.cell_um
    }

    fn center_um(&self, i: usize) -> f64 {
        (i as f64 + 0.5 - 0.5 * self.n as f64) * self.cell_um
    }

    /// Continuous cell coordinate of a physical position.
    fn to_cell(&self, x_um: f64) -> f64 {
        x_um / self.cell_um + 0.5 * self.n as f64
    }

    /// Overflow (in cells) of a set of physical points against the 1-cell margin.
    fn overflow(&self, coords: impl Iterator<Item = f64>) -> Result<()> {
        let n = self.n as f64;
        let worst = coords
            .map(|x| {
                let c = self.to_cell(x);
                (1.0 - c).max(c - (n - 1.0))
            })
            .fold(f64::NEG_INFINITY, f64::max);
        if worst > 0.0 {
            return Err(Error::OutOfBounds {
                overflow_cells: worst.ceil() as usize,
                grid_n: self.n,
            });
        }
        Ok(())
    }

    /// Inclusive cell index range whose centers may lie in `[lo, hi]` um.
    fn cell_range(&self, lo: f64, hi: f64) -> std::ops::RangeInclusive<usize> {
        let a = (self.to_cell(lo) - 0.5).floor().max(0.0) as usize;
        let b = ((self.to_cell(hi) - 0.5).ceil() as usize).min(self.n - 1);
        a..=b
    }
}

/// Orthographic projection along lab z of the posed planar shape, filled,
/// rasterized by cell-center inclusion.
pub fn rasterize_projection(spec: &ShapeSpec, pose: &Pose, grid: &GridSpec) -> Result<Mask> {
    let m = pose.matrix();
    let project = |p: [f64; 2]| -> [f64; 2] {
        [
            m[0][0] * p[0] + m[0][1] * p[1],
            m[1][0] * p[0] + m[1][1] * p[1],
        ]
    };
    let bars = spec.bars();
    let mut quads = Vec::with_capacity(bars.len());
    for bar in &bars {
        let c = project(bar.center);
        let u = project([bar.dir[0] * bar.half_len, bar.dir[1] * bar.half_len]);
        let perp = bar.perp();
        let v = project([perp[0] * bar.half_width, perp[1] * bar.half_width]);
        quads.push((c, u, v));
    }
    grid.overflow(quads.iter().flat_map(|&(c, u, v)| {
        [
            c[0] + u[0] + v[0],
            c[0] + u[0] - v[0],
            c[0] - u[0] + v[0],
            c[0] - u[0] - v[0],
            c[1] + u[1] + v[1],
            c[1] + u[1] - v[1],
            c[1] - u[1] + v[1],
            c[1] - u[1] - v[1],
        ]
    }))?;

    let mut mask = Mask::empty(grid.n);
    for &(c, u, v) in &quads {
        let det = u[0] * v[1] - u[1] * v[0];
        if det.abs() < 1e-12 * (u[0].hypot(u[1]) * v[0].hypot(v[1])).max(1e-300) {
            // Edge-on rectangle: zero projected area.
            continue;
        }
        let ex = u[0].abs() + v[0].abs();
        let ey = u[1].abs() + v[1].abs();
        for i in grid.cell_range(c[0] - ex, c[0] + ex) {
            let px = grid.center_um(i) - c[0];
            for j in grid.cell_range(c[1] - ey, c[1] + ey) {
                let py = grid.center_um(j) - c[1];
                let s = (px * v[1] - py * v[0]) / det;
                let t = (u[0] * py - u[1] * px) / det;
                if s.abs() <= 1.0 && t.abs() <= 1.0 {
                    mask.set(i, j, true);
                }
            }
        }
    }
    Ok(mask)
}

/// Volumetric particle: each bar becomes a box of thickness `width_frac *
/// feret_um` normal to the particle plane, posed and voxelized by
/// voxel-center inclusion on an `n^3` grid with the spacing of `grid`.
pub fn build_volume(spec: &ShapeSpec, pose: &Pose, grid: &GridSpec) -> Result<VoxelModel> {
    let m = pose.matrix();
    let rot = |p: [f64; 3]| -> [f64; 3] {
        [
            m[0][0] * p[0] + m[0][1] * p[1] + m[0][2] * p[2],
            m[1][0] * p[0] + m[1][1] * p[1] + m[1][2] * p[2],
            m[2][0] * p[0] + m[2][1] * p[1] + m[2][2] * p[2],
        ]
    };
    let half_thick = 0.5 * spec.thickness_um();
    let boxes: Vec<_> = spec
        .bars()
        .iter()
        .map(|bar| {
            let perp = bar.perp();
            let axes = [
                (rot([bar.dir[0], bar.dir[1], 0.0]), bar.half_len),
                (rot([perp[0], perp[1], 0.0]), bar.half_width),
                (rot([0.0, 0.0, 1.0]), half_thick),
            ];
            (rot([bar.center[0], bar.center[1], 0.0]), axes)
        })
        .collect();

    let extents: Vec<[f64; 3]> = boxes
        .iter()
        .map(|(_, axes)| {
            std::array::from_fn(|k| axes.iter().map(|(a, h)| a[k].abs() * h).sum::<f64>())
        })
        .collect();
    grid.overflow(
        boxes
            .iter()
            .zip(&extents)
            .flat_map(|((c, _), e)| (0..3).flat_map(move |k| [c[k] - e[k], c[k] + e[k]])),
    )?;

    let mut vol = VoxelModel::empty(grid.n);
    for ((c, axes), e) in boxes.iter().zip(&extents) {
        let xr = grid.cell_range(c[0] - e[0], c[0] + e[0]);
        let yr = grid.cell_range(c[1] - e[1], c[1] + e[1]);
        let zr = grid.cell_range(c[2] - e[2], c[2] + e[2]);
        for x in xr {
            let px = grid.center_um(x) - c[0];
            for y in yr.clone() {
                let py = grid.center_um(y) - c[1];
                for z in zr.clone() {
                    let pz = grid.center_um(z) - c[2];
                    let inside = axes
                        .iter()
                        .all(|(a, h)| (a[0] * px + a[1] * py + a[2] * pz).abs() <= *h);
                    if inside {
                        vol.set(x, y, z, true);
                    }
                }
            }
        }
    }
    Ok(vol)
}

/// Logical-OR projection of a volume onto one of the three view planes.
pub fn silhouette(volume: &VoxelModel, axis: ViewAxis) -> Mask {
    volume.project(axis)
}
