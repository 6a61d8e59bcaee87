//! Reconstruction quality metrics and comparison artifacts.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::{to_complex, Fft2};
use crate::raster::Mask;

fn same_dims<A, B>(a: &Array2<A>, b: &Array2<B>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(format!(
            "{:?} vs {:?}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}

/// Mean of squared differences.
pub fn mse(a: &Array2<f64>, b: &Array2<f64>) -> Result<f64> {
    same_dims(a, b)?;
    if a.is_empty() {
        return Err(Error::UndefinedMetric("mse of empty images".into()));
    }
    let sum: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y).powi(2)).sum();
    Ok(sum / a.len() as f64)
}

pub fn iou(a: &Mask, b: &Mask) -> Result<f64> {
    same_dims(a.cells(), b.cells())?;
    let inter = a.intersection_count(b);
    let union = a.count() + b.count() - inter;
    if union == 0 {
        return Err(Error::UndefinedMetric("iou of two empty masks".into()));
    }
    Ok(inter as f64 / union as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Identity,
    Reflected,
}

/// `recon ~= roll(orient(truth), shift)`; reflection is
/// [`Mask::point_reflect`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transform {
    pub orientation: Orientation,
    pub shift: (usize, usize),
}

impl Transform {
    pub fn apply(&self, truth: &Mask) -> Mask {
        let oriented = match self.orientation {
            Orientation::Identity => truth.clone(),
            Orientation::Reflected => truth.point_reflect(),
        };
        oriented.roll(self.shift.0 as isize, self.shift.1 as isize)
    }
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let o = match self.orientation {
            Orientation::Identity => "identity",
            Orientation::Reflected => "reflected",
        };
        write!(f, "{o}:{}:{}", self.shift.0, self.shift.1)
    }
}

impl FromStr for Transform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("malformed transform '{s}'"));
        let mut parts = s.split(':');
        let orientation = match parts.next() {
            Some("identity") => Orientation::Identity,
            Some("reflected") => Orientation::Reflected,
            _ => return Err(bad()),
        };
        let a = parts.next().and_then(|v| v.parse().ok()).ok_or_else(bad)?;
        let b = parts.next().and_then(|v| v.parse().ok()).ok_or_else(bad)?;
        if parts.next().is_some() {
            return Err(bad());
        }
        Ok(Transform {
            orientation,
            shift: (a, b),
        })
    }
}

/// Largest IoU over {identity, point reflection} x all cyclic shifts of
/// `truth`, found with FFT cross-correlation. Ties keep the identity
/// orientation and then the lexicographically smallest shift.
pub fn best_aligned_iou(recon: &Mask, truth: &Mask) -> Result<(f64, Transform)> {
    same_dims(recon.cells(), truth.cells())?;
    let n = recon.n();
    let (rc, tc) = (recon.count(), truth.count());
    if rc + tc == 0 {
        return Err(Error::UndefinedMetric("iou of two empty masks".into()));
    }

    let mut fft = Fft2::new(n);
    let mut r_hat = to_complex(&recon.to_f64());
    fft.forward(&mut r_hat);

    let mut best: Option<(usize, Transform)> = None;
    for orientation in [Orientation::Identity, Orientation::Reflected] {
        let oriented = match orientation {
            Orientation::Identity => truth.clone(),
            Orientation::Reflected => truth.point_reflect(),
        };
        let mut corr = to_complex(&oriented.to_f64());
        fft.forward(&mut corr);
        // C(s) = sum_x recon(x) t(x - s) = IDFT(R conj(T)).
        corr.zip_mut_with(&r_hat, |t, r| *t = *r * t.conj());
        fft.inverse(&mut corr);
        for ((i, j), c) in corr.indexed_iter() {
            let inter = c.re.round().max(0.0) as usize;
            if best.map_or(true, |(b, _)| inter > b) {
                best = Some((
                    inter,
                    Transform {
                        orientation,
                        shift: (i, j),
                    },
                ));
            }
        }
    }
    let (inter, transform) = best.expect("nonempty grid");
    // IoU increases with the intersection at fixed counts; recount exactly.
    let aligned = transform.apply(truth);
    let exact = recon.intersection_count(&aligned);
    debug_assert_eq!(exact, inter);
    Ok((exact as f64 / (rc + tc - exact) as f64, transform))
}

/// `truth - recon` after scaling each to a maximum of 1. Values in `[-1, 1]`.
pub fn difference_image(truth: &Array2<f64>, recon: &Array2<f64>) -> Result<Array2<f64>> {
    same_dims(truth, recon)?;
    let norm = |a: &Array2<f64>| {
        let m = a.iter().copied().fold(0.0, f64::max);
        if m > 0.0 {
            a.mapv(|v| (v / m).clamp(0.0, 1.0))
        } else {
            a.mapv(|_| 0.0)
        }
    };
    Ok(norm(truth) - norm(recon))
}

pub fn mask_difference(truth: &Mask, recon: &Mask) -> Result<Array2<f64>> {
    difference_image(&truth.to_f64(), &recon.to_f64())
}

/// 8-bit rendering: -1 -> 0 (black), 0 -> 128 (gray), +1 -> 255 (white).
pub fn render_difference(diff: &Array2<f64>) -> Array2<u8> {
    diff.mapv(|v| {
        let v = v.clamp(-1.0, 1.0);
        let out = if v <= 0.0 {
            128.0 + 128.0 * v
        } else {
            128.0 + 127.0 * v
        };
        out.round() as u8
    })
}

/// Reconstruction method named in evaluation reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "ER")]
    Er,
    #[serde(rename = "CNN")]
    Cnn,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Er => "ER",
            Method::Cnn => "CNN",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "ER" => Ok(Method::Er),
            "CNN" => Ok(Method::Cnn),
            _ => Err(Error::invalid(format!("unknown method '{s}'"))),
        }
    }
}

/// One row of the per-sample evaluation CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub id: u64,
    pub family: String,
    pub method: Method,
    pub iou: f64,
    pub aligned_iou: f64,
    pub mse: f64,
    pub transform: String,
}

/// Scores one prediction against its ground truth. `prediction` may be a
/// probability image; it is binarized at 0.5 for the IoU columns.
pub fn evaluate(
    id: u64,
    family: &str,
    method: Method,
    truth: &Mask,
    prediction: &Array2<f64>,
) -> Result<EvalRow> {
    same_dims(truth.cells(), prediction)?;
    let max = prediction.iter().copied().fold(0.0, f64::max);
    let scaled = if max > 0.0 {
        prediction / max
    } else {
        prediction.clone()
    };
    let binary = Mask::from_array(scaled.mapv(|v| v >= 0.5))?;
    let plain = iou(&binary, truth)?;
    let (aligned, transform) = best_aligned_iou(&binary, truth)?;
    Ok(EvalRow {
        id,
        family: family.to_string(),
        method,
        iou: plain,
        aligned_iou: aligned,
        mse: mse(&truth.to_f64(), &scaled)?,
        transform: transform.to_string(),
    })
}

pub fn write_eval_csv<W: Write>(writer: W, rows: &[EvalRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn read_eval_csv<R: std::io::Read>(reader: R) -> Result<Vec<EvalRow>> {
    csv::Reader::from_reader(reader)
        .deserialize()
        .map(|r| r.map_err(csv_err))
        .collect()
}

fn csv_err(e: csv::Error) -> Error {
    Error::invalid(format!("csv: {e}"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub family: String,
    pub method: Method,
    pub count: usize,
    pub aligned_iou_mean: f64,
    pub aligned_iou_median: f64,
    pub aligned_iou_std: f64,
    pub mse_mean: f64,
    pub mse_median: f64,
    pub mse_std: f64,
}

fn stats(mut v: Vec<f64>) -> (f64, f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    let median = if v.len() % 2 == 0 {
        0.5 * (v[mid - 1] + v[mid])
    } else {
        v[mid]
    };
    (mean, median, std)
}

/// Per-(family, method) aggregates, sorted by family then method.
pub fn summarize(rows: &[EvalRow]) -> Vec<SummaryRow> {
    let mut groups: std::collections::BTreeMap<(String, Method), Vec<&EvalRow>> =
        Default::default();
    for r in rows {
        groups
            .entry((r.family.clone(), r.method))
            .or_default()
            .push(r);
    }
    groups
        .into_iter()
        .map(|((family, method), rs)| {
            let (im, imed, istd) = stats(rs.iter().map(|r| r.aligned_iou).collect());
            let (mm, mmed, mstd) = stats(rs.iter().map(|r| r.mse).collect());
            SummaryRow {
                family,
                method,
                count: rs.len(),
                aligned_iou_mean: im,
                aligned_iou_median: imed,
                aligned_iou_std: istd,
                mse_mean: mm,
                mse_median: mmed,
                mse_std: mstd,
            }
        })
        .collect()
}

pub fn write_summary_csv<W: Write>(writer: W, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}
