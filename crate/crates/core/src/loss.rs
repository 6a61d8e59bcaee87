//! Per-epoch training loss logs (`epoch,train_mse,test_mse,lr`) and their
//! boxcar smoothing.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_WINDOW: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub epoch: usize,
    pub train_mse: f64,
    pub test_mse: f64,
    pub lr: f64,
}

pub fn read_loss_csv(path: &Path) -> Result<Vec<LossRow>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let rows = csv::Reader::from_reader(file)
        .deserialize()
        .collect::<std::result::Result<Vec<LossRow>, _>>()
        .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
    if rows.is_empty() {
        return Err(Error::invalid(format!("{} has no epochs", path.display())));
    }
    for r in &rows {
        if !(r.train_mse.is_finite() && r.test_mse.is_finite() && r.lr.is_finite()) {
            return Err(Error::invalid(format!(
                "epoch {} has non-finite values",
                r.epoch
            )));
        }
    }
    Ok(rows)
}

/// Moving average with a rectangular kernel of odd width `window`. Near the
/// ends the window shrinks symmetrically, so linear trends pass unchanged.
pub fn smooth_curve(values: &[f64], window: usize) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::invalid("cannot smooth an empty series"));
    }
    if window % 2 == 0 || window > values.len() {
        return Err(Error::invalid(format!(
            "window {window} must be odd and at most the series length {}",
            values.len()
        )));
    }
    let n = values.len();
    Ok((0..n)
        .map(|i| {
            let h = (window / 2).min(i).min(n - 1 - i);
            values[i - h..=i + h].iter().sum::<f64>() / (2 * h + 1) as f64
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SmoothedRow {
    pub epoch: usize,
    pub train_mse: f64,
    pub test_mse: f64,
    pub lr: f64,
    pub train_mse_smoothed: f64,
    pub test_mse_smoothed: f64,
}

pub fn smooth_log(rows: &[LossRow], window: usize) -> Result<Vec<SmoothedRow>> {
    let train = smooth_curve(
        &rows.iter().map(|r| r.train_mse).collect::<Vec<_>>(),
        window,
    )?;
    let test = smooth_curve(&rows.iter().map(|r| r.test_mse).collect::<Vec<_>>(), window)?;
    Ok(rows
        .iter()
        .zip(train.into_iter().zip(test))
        .map(|(r, (a, b))| SmoothedRow {
            epoch: r.epoch,
            train_mse: r.train_mse,
            test_mse: r.test_mse,
            lr: r.lr,
            train_mse_smoothed: a,
            test_mse_smoothed: b,
        })
        .collect())
}

pub fn write_smoothed_csv<W: Write>(writer: W, rows: &[SmoothedRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)
            .map_err(|e| Error::invalid(format!("csv: {e}")))?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Log-scale SVG plot of raw (thin) and smoothed (thick) train and test
/// curves, with the learning rate on its own log axis.
pub fn loss_svg(rows: &[SmoothedRow]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const PAD: f64 = 50.0;
    let x_of = |k: usize| {
        PAD + if rows.len() > 1 {
            k as f64 / (rows.len() - 1) as f64
        } else {
            0.5
        } * (W - 2.0 * PAD)
    };
    let log_range = |vals: &mut dyn Iterator<Item = f64>| {
        let (lo, hi) = vals
            .filter(|v| *v > 0.0)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
                (a.min(v.log10()), b.max(v.log10()))
            });
        if lo.is_finite() {
            (lo, if hi > lo { hi } else { lo + 1.0 })
        } else {
            (0.0, 1.0)
        }
    };
    let mse_range = log_range(&mut rows.iter().flat_map(|r| [r.train_mse, r.test_mse]));
    let lr_range = log_range(&mut rows.iter().map(|r| r.lr));
    let y_of = |v: f64, (lo, hi): (f64, f64)| {
        let t = if v > 0.0 {
            (v.log10() - lo) / (hi - lo)
        } else {
            0.0
        };
        H - PAD - t * (H - 2.0 * PAD)
    };
    let line = |pick: &dyn Fn(&SmoothedRow) -> f64, range, color: &str, width: f64| {
        let pts: Vec<String> = rows
            .iter()
            .enumerate()
            .map(|(k, r)| format!("{:.1},{:.1}", x_of(k), y_of(pick(r), range)))
            .collect();
        format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"{width}\" points=\"{}\"/>\n",
            pts.join(" ")
        )
    };
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <rect x=\"{PAD}\" y=\"{PAD}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#888\"/>\n",
        W - 2.0 * PAD,
        H - 2.0 * PAD
    );
    svg += &line(&|r| r.train_mse, mse_range, "#1f77b4", 0.7);
    svg += &line(&|r| r.test_mse, mse_range, "#d62728", 0.7);
    svg += &line(&|r| r.train_mse_smoothed, mse_range, "#1f77b4", 2.0);
    svg += &line(&|r| r.test_mse_smoothed, mse_range, "#d62728", 2.0);
    svg += &line(&|r| r.lr, lr_range, "black", 1.0);
    svg += &format!(
        "<text x=\"{PAD}\" y=\"{}\" font-size=\"12\">train (blue) and test (red) MSE, log scale \
         10^{:.1} to 10^{:.1}; learning rate (black) 10^{:.1} to 10^{:.1}; epochs {} to {}</text>\n</svg>\n",
        PAD - 15.0,
        mse_range.0,
        mse_range.1,
        lr_range.0,
        lr_range.1,
        rows.first().map_or(0, |r| r.epoch),
        rows.last().map_or(0, |r| r.epoch),
    );
    svg
}
