//! Three-view recombination (visual hull) and its exports.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::metrics::iou;
use crate::raster::{Mask, ViewAxis, VoxelGrid};

/// Voxel `(x, y, z)` is occupied iff `m_xy(x, y)`, `m_yz(y, z)` and
/// `m_zx(z, x)` all are.
pub fn visual_hull(m_xy: &Mask, m_yz: &Mask, m_zx: &Mask) -> Result<VoxelGrid> {
    let n = m_xy.n();
    if m_yz.n() != n || m_zx.n() != n {
        return Err(Error::invalid(format!(
            "view sizes differ: xy {n}, yz {}, zx {}",
            m_yz.n(),
            m_zx.n()
        )));
    }
    Ok(VoxelGrid::from_fn(n, |(x, y, z)| {
        m_xy.get(x, y) && m_yz.get(y, z) && m_zx.get(z, x)
    }))
}

pub fn reproject(grid: &VoxelGrid, axis: ViewAxis) -> Mask {
    grid.project(axis)
}

/// Outcome of [`recombine`].
#[derive(Debug, Clone)]
pub struct Recombination {
    pub grid: VoxelGrid,
    /// Whether each view (xy, yz, zx) was point-reflected.
    pub reflected: [bool; 3],
    /// Sum over views of IoU(reprojection, input view).
    pub consistency: f64,
    /// The centered, oriented views the hull was built from.
    pub views: [Mask; 3],
}

fn view_score(reprojected: &Mask, input: &Mask) -> f64 {
    iou(reprojected, input).unwrap_or(0.0)
}

/// Recombines three reconstructed views that carry no absolute position and
/// an unknown point reflection each. Every view is moved so its bounding box
/// is centered on the grid; then all 8 reflection combinations are tried and the
/// one whose hull reprojects most consistently wins (lowest index on ties,
/// bit k of the index reflects view k).
pub fn recombine(m_xy: &Mask, m_yz: &Mask, m_zx: &Mask) -> Result<Recombination> {
    let centered = [
        m_xy.bbox_centered(),
        m_yz.bbox_centered(),
        m_zx.bbox_centered(),
    ];
    let reflected_views: Vec<Mask> = centered.iter().map(Mask::reflect_in_place).collect();

    let mut best: Option<Recombination> = None;
    for combo in 0..8u8 {
        let flags = [combo & 1 != 0, combo & 2 != 0, combo & 4 != 0];
        let views: [Mask; 3] = std::array::from_fn(|k| {
            if flags[k] {
                reflected_views[k].clone()
            } else {
                centered[k].clone()
            }
        });
        let grid = visual_hull(&views[0], &views[1], &views[2])?;
        let consistency: f64 = ViewAxis::ALL
            .iter()
            .zip(&views)
            .map(|(&axis, v)| view_score(&reproject(&grid, axis), v))
            .sum();
        if best.as_ref().map_or(true, |b| consistency > b.consistency) {
            best = Some(Recombination {
                grid,
                reflected: flags,
                consistency,
                views,
            });
        }
    }
    Ok(best.expect("eight combinations"))
}

/// Run-length text: one line `z y x_start x_end` (inclusive) per run of
/// occupied voxels along x, ordered by z, then y, then x.
pub fn to_run_length(grid: &VoxelGrid) -> String {
    let n = grid.n();
    let mut out = String::new();
    writeln!(out, "# n {n}").expect("write to string");
    for z in 0..n {
        for y in 0..n {
            let mut x = 0;
            while x < n {
                if grid.get(x, y, z) {
                    let start = x;
                    while x + 1 < n && grid.get(x + 1, y, z) {
                        x += 1;
                    }
                    writeln!(out, "{z} {y} {start} {x}").expect("write to string");
                }
                x += 1;
            }
        }
    }
    out
}

pub fn from_run_length(text: &str) -> Result<VoxelGrid> {
    let mut lines = text.lines();
    let n: usize = lines
        .next()
        .and_then(|l| l.strip_prefix("# n "))
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| Error::invalid("run-length text must start with '# n <side>'"))?;
    let mut grid = VoxelGrid::empty(n);
    for (k, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v: Vec<usize> = line
            .split_whitespace()
            .map(|t| t.parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::invalid(format!("bad run on line {}", k + 2)))?;
        match v[..] {
            [z, y, x0, x1] if z < n && y < n && x0 <= x1 && x1 < n => {
                for x in x0..=x1 {
                    grid.set(x, y, z, true);
                }
            }
            _ => return Err(Error::invalid(format!("bad run on line {}", k + 2))),
        }
    }
    Ok(grid)
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct VoxelExportMeta {
    pub n: usize,
    pub occupied: usize,
    pub axis_order: String,
    pub slice_axis: String,
    pub slice_pattern: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reflected: Option<[bool; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub consistency: Option<f64>,
}

/// Writes `slices/z{k:04}.png` (8-bit, indexed `[x, y]`), `voxels.rle` and
/// `voxels.json` into `dir`.
pub fn export_voxels(
    grid: &VoxelGrid,
    dir: &Path,
    recombination: Option<&Recombination>,
) -> Result<VoxelExportMeta> {
    let slices = dir.join("slices");
    std::fs::create_dir_all(&slices).map_err(|e| Error::io(&slices, e))?;
    let n = grid.n();
    for z in 0..n {
        let slice = Mask::from_fn(n, |(x, y)| grid.get(x, y, z));
        io::write_mask_png(&slices.join(format!("z{z:04}.png")), &slice)?;
    }
    let rle = dir.join("voxels.rle");
    std::fs::write(&rle, to_run_length(grid)).map_err(|e| Error::io(&rle, e))?;
    let meta = VoxelExportMeta {
        n,
        occupied: grid.count(),
        axis_order: "x,y,z".into(),
        slice_axis: "z".into(),
        slice_pattern: "slices/z{z:04}.png".into(),
        reflected: recombination.map(|r| r.reflected),
        consistency: recombination.map(|r| r.consistency),
    };
    let path = dir.join("voxels.json");
    let text = serde_json::to_string_pretty(&meta)?;
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(meta)
}
