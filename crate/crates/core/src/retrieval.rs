//! Error-reduction phase retrieval from an autocorrelation map.

use ndarray::{Array2, Zip};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::{fftshift, ifftshift, to_complex, Fft2};
use crate::optics::{autocorrelation_map, AcMap, SpeckleImage};
use crate::raster::Mask;
use crate::seed;

/// Stop when E_F moved less than this over [`STALL_WINDOW`] iterations.
pub const STALL_TOLERANCE: f64 = 1e-8;
pub const STALL_WINDOW: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BinarizeMethod {
    /// Threshold at half the maximum.
    Fixed,
    Otsu,
}

impl std::str::FromStr for BinarizeMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fixed" => Ok(Self::Fixed),
            "otsu" => Ok(Self::Otsu),
            other => Err(Error::invalid(format!("unknown binarize method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ERConfig {
    pub iterations: usize,
    /// Fraction of the cleaned AC peak used to delimit its support.
    pub support_threshold_rel: f64,
    pub init_seed: u64,
    pub binarize_method: BinarizeMethod,
    /// Independent random starts; the one ending with the lowest E_F is kept.
    pub restarts: usize,
}

impl Default for ERConfig {
    fn default() -> Self {
        Self {
            iterations: 500,
            support_threshold_rel: 0.04,
            init_seed: 0,
            binarize_method: BinarizeMethod::Fixed,
            restarts: 1,
        }
    }
}

impl ERConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::invalid("iterations must be at least 1"));
        }
        if !(self.support_threshold_rel > 0.0 && self.support_threshold_rel < 1.0) {
            return Err(Error::invalid(format!(
                "support_threshold_rel must lie in (0, 1), got {}",
                self.support_threshold_rel
            )));
        }
        if self.restarts == 0 {
            return Err(Error::invalid("restarts must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ERResult {
    pub reconstruction: Array2<f64>,
    /// E_F(k) = ‖|G_k| − M‖ / ‖M‖ for each iteration performed.
    pub error_trace: Vec<f64>,
    pub support: Mask,
    /// Init seed of the kept start.
    pub seed_used: u64,
}

impl ERResult {
    pub fn final_error(&self) -> f64 {
        self.error_trace.last().copied().unwrap_or(f64::INFINITY)
    }
}

/// Fourier modulus recovered from an autocorrelation map.
#[derive(Debug, Clone, PartialEq)]
pub struct ModulusMap {
    pub values: Array2<f64>,
    /// Frequencies where the spectrum of the AC went negative and was clamped to 0.
    pub clamped: usize,
}

/// Magnitude of `ac` with the zero-lag spike replaced by the largest of its
/// eight neighbours.
pub fn clean_autocorrelation(ac: &AcMap) -> Array2<f64> {
    let mut a = ac.magnitude();
    let n = a.nrows();
    let c = n / 2;
    let mut neighbour_max = 0.0f64;
    for di in -1isize..=1 {
        for dj in -1isize..=1 {
            if di == 0 && dj == 0 {
                continue;
            }
            let i = (c as isize + di).rem_euclid(n as isize) as usize;
            let j = (c as isize + dj).rem_euclid(n as isize) as usize;
            neighbour_max = neighbour_max.max(a[(i, j)]);
        }
    }
    a[(c, c)] = neighbour_max;
    a
}

/// Thresholds the cleaned map, halves the bounding box of what survives and
/// returns that box (plus one cell of margin per side) centered on `n/2`.
pub fn estimate_support(ac_clean: &Array2<f64>, threshold_rel: f64) -> Result<Mask> {
    let n = ac_clean.nrows();
    let peak = ac_clean.iter().cloned().fold(0.0f64, f64::max);
    if peak <= 0.0 {
        return Err(Error::EmptySupport);
    }
    let level = threshold_rel * peak;
    let above = Mask::from_fn(n, |(i, j)| ac_clean[(i, j)] >= level);
    let (i0, i1, j0, j1) = above.bounding_box().ok_or(Error::EmptySupport)?;
    let half = |lo: usize, hi: usize| ((hi - lo + 1) + 1) / 2 + 2;
    let (h, w) = (half(i0, i1).min(n), half(j0, j1).min(n));
    let (r0, c0) = (n / 2 - h / 2, n / 2 - w / 2);
    Ok(Mask::from_fn(n, |(i, j)| {
        (r0..r0 + h).contains(&i) && (c0..c0 + w).contains(&j)
    }))
}

/// M = sqrt(max(Re DFT(ac), 0)) with `ac` centered at `n/2`.
pub fn fourier_modulus(ac_clean: &Array2<f64>) -> ModulusMap {
    let n = ac_clean.nrows();
    let mut spec = to_complex(&ifftshift(ac_clean));
    Fft2::new(n).forward(&mut spec);
    let mut clamped = 0;
    let values = spec.mapv(|z| {
        if z.re < 0.0 {
            clamped += 1;
            0.0
        } else {
            z.re.sqrt()
        }
    });
    ModulusMap { values, clamped }
}

fn run_once(
    fft: &mut Fft2,
    modulus: &Array2<f64>,
    support: &Mask,
    cfg: &ERConfig,
    seed: u64,
) -> ERResult {
    let norm = modulus.iter().map(|m| m * m).sum::<f64>().sqrt();
    let norm = if norm > 0.0 { norm } else { 1.0 };
    let mut rng = seed::rng(seed);
    let mut g: Array2<f64> = Array2::from_shape_fn(modulus.dim(), |(i, j)| {
        let v: f64 = rng.gen();
        if support.get(i, j) {
            v
        } else {
            0.0
        }
    });
    let mut work = Array2::<Complex64>::zeros(modulus.dim());
    let mut trace = Vec::with_capacity(cfg.iterations);
    for k in 0..cfg.iterations {
        Zip::from(&mut work)
            .and(&g)
            .for_each(|w, &v| *w = Complex64::new(v, 0.0));
        fft.forward(&mut work);
        let mut resid = 0.0;
        Zip::from(&mut work).and(modulus).for_each(|w, &m| {
            let mag = w.norm();
            resid += (mag - m) * (mag - m);
            *w = if m == 0.0 {
                Complex64::new(0.0, 0.0)
            } else if mag > 0.0 {
                *w * (m / mag)
            } else {
                Complex64::new(m, 0.0)
            };
        });
        trace.push(resid.sqrt() / norm);
        fft.inverse(&mut work);
        Zip::from(&mut g)
            .and(&work)
            .and(support.cells())
            .for_each(|v, w, &inside| *v = if inside && w.re > 0.0 { w.re } else { 0.0 });
        if k >= STALL_WINDOW && (trace[k] - trace[k - STALL_WINDOW]).abs() < STALL_TOLERANCE {
            break;
        }
    }
    ERResult {
        reconstruction: g,
        error_trace: trace,
        support: support.clone(),
        seed_used: seed,
    }
}

/// Fienup error reduction: alternate the Fourier-modulus projection with
/// support and nonnegativity in the object domain. With several restarts the
/// start ending at the lowest E_F is returned.
pub fn error_reduction(modulus: &Array2<f64>, support: &Mask, cfg: &ERConfig) -> Result<ERResult> {
    Ok(error_reduction_runs(modulus, support, cfg)?
        .into_iter()
        .reduce(|best, r| {
            if r.final_error() < best.final_error() {
                r
            } else {
                best
            }
        })
        .expect("at least one start"))
}

/// Every start of [`error_reduction`], seeds `init_seed, init_seed + 1, ...`.
pub fn error_reduction_runs(
    modulus: &Array2<f64>,
    support: &Mask,
    cfg: &ERConfig,
) -> Result<Vec<ERResult>> {
    cfg.validate()?;
    let n = support.n();
    if modulus.dim() != (n, n) {
        return Err(Error::DimensionMismatch(format!(
            "modulus is {:?}, support is {n}x{n}",
            modulus.dim()
        )));
    }
    if support.is_empty() {
        return Err(Error::invalid("support is empty"));
    }
    let mut fft = Fft2::new(n);
    Ok((0..cfg.restarts as u64)
        .map(|r| {
            run_once(
                &mut fft,
                modulus,
                support,
                cfg,
                cfg.init_seed.wrapping_add(r),
            )
        })
        .collect())
}

/// Otsu threshold over the nonzero values: the largest value of the lower
/// class at the split maximizing between-class variance.
fn otsu_threshold(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let total: f64 = values.iter().sum();
    let n = values.len() as f64;
    let mut best = (f64::NEG_INFINITY, values[0]);
    let mut sum0 = 0.0;
    for k in 0..values.len() - 1 {
        sum0 += values[k];
        if values[k + 1] == values[k] {
            continue;
        }
        let w0 = (k + 1) as f64;
        let w1 = n - w0;
        let m0 = sum0 / w0;
        let m1 = (total - sum0) / w1;
        let between = w0 * w1 * (m0 - m1) * (m0 - m1);
        if between > best.0 {
            best = (between, values[k]);
        }
    }
    if best.0 == f64::NEG_INFINITY {
        // A single distinct nonzero level: keep all of it.
        0.0
    } else {
        best.1
    }
}

pub fn binarize(recon: &Array2<f64>, method: BinarizeMethod) -> Result<Mask> {
    let (rows, cols) = recon.dim();
    if rows != cols {
        return Err(Error::DimensionMismatch(format!(
            "reconstruction is {rows}x{cols}"
        )));
    }
    let max = recon.iter().cloned().fold(0.0f64, f64::max);
    if max <= 0.0 {
        return Err(Error::EmptyMask("reconstruction is zero everywhere".into()));
    }
    let cells = match method {
        BinarizeMethod::Fixed => recon.mapv(|v| v >= 0.5 * max),
        BinarizeMethod::Otsu => {
            let mut nz: Vec<f64> = recon.iter().cloned().filter(|&v| v > 0.0).collect();
            let t = otsu_threshold(&mut nz);
            recon.mapv(|v| v > t)
        }
    };
    Mask::from_array(cells)
}

/// Circular moving average with an odd `window`.
pub fn box_smooth(a: &Array2<f64>, window: usize) -> Array2<f64> {
    if window <= 1 {
        return a.clone();
    }
    let r = (window / 2) as isize;
    let pass = |src: &Array2<f64>, along_rows: bool| {
        let (rows, cols) = src.dim();
        Array2::from_shape_fn((rows, cols), |(i, j)| {
            let mut s = 0.0;
            for d in -r..=r {
                s += if along_rows {
                    src[((i as isize + d).rem_euclid(rows as isize) as usize, j)]
                } else {
                    src[(i, (j as isize + d).rem_euclid(cols as isize) as usize)]
                };
            }
            s / (2 * r + 1) as f64
        })
    };
    pass(&pass(a, true), false)
}

/// Circular Gaussian blur, kernel truncated at 4σ.
pub fn gaussian_smooth(a: &Array2<f64>, sigma: f64) -> Array2<f64> {
    if sigma <= 0.0 {
        return a.clone();
    }
    let r = (4.0 * sigma).ceil() as isize;
    let mut kernel: Vec<f64> = (-r..=r)
        .map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let ks: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= ks);
    let pass = |src: &Array2<f64>, along_rows: bool| {
        let (rows, cols) = src.dim();
        Array2::from_shape_fn((rows, cols), |(i, j)| {
            kernel
                .iter()
                .zip(-r..=r)
                .map(|(k, d)| {
                    k * if along_rows {
                        src[((i as isize + d).rem_euclid(rows as isize) as usize, j)]
                    } else {
                        src[(i, (j as isize + d).rem_euclid(cols as isize) as usize)]
                    }
                })
                .sum::<f64>()
        })
    };
    pass(&pass(a, true), false)
}

/// Settings for the end-to-end speckle → mask reconstruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub er: ERConfig,
    /// Side of the central AC window ER runs on; `None` keeps the full map.
    pub object_n: Option<usize>,
    /// Replace the zero-lag spike (speckle input). An exact shape
    /// autocorrelation has no spike and must be used as is.
    pub remove_spike: bool,
    /// Moving-average window applied to the cleaned AC (1 disables it).
    pub ac_smoothing: usize,
    /// Gaussian σ in cells applied to the ER output before binarization.
    pub post_smoothing: f64,
}

/// Tuned for single speckle images: light smoothing of the autocorrelation
/// and of the reconstruction, Otsu binarization.
impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            er: ERConfig {
                binarize_method: BinarizeMethod::Otsu,
                ..ERConfig::default()
            },
            object_n: None,
            remove_spike: true,
            ac_smoothing: 3,
            post_smoothing: 1.0,
        }
    }
}

impl PipelineConfig {
    /// For exact shape autocorrelations: no spike removal, no smoothing, a
    /// lower support threshold (the faint far tails of the autocorrelation of
    /// a sparse shape are real) and a few restarts against stagnation.
    pub fn exact() -> Self {
        Self {
            er: ERConfig {
                support_threshold_rel: 0.01,
                binarize_method: BinarizeMethod::Otsu,
                restarts: 4,
                ..ERConfig::default()
            },
            remove_spike: false,
            ac_smoothing: 1,
            post_smoothing: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.er.validate()?;
        if self.ac_smoothing % 2 == 0 {
            return Err(Error::invalid(format!(
                "ac_smoothing window must be odd, got {}",
                self.ac_smoothing
            )));
        }
        if !(self.post_smoothing >= 0.0) {
            return Err(Error::invalid("post_smoothing must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    /// The kept start.
    pub er: ERResult,
    /// E_F traces of every start, kept one included.
    pub start_traces: Vec<Vec<f64>>,
    pub mask: Mask,
    pub modulus_clamped: usize,
}

pub fn reconstruct_from_ac(ac: &AcMap, cfg: &PipelineConfig) -> Result<Reconstruction> {
    cfg.validate()?;
    let ac = match cfg.object_n {
        Some(m) if m < ac.n() => ac.crop(m)?,
        _ => ac.clone(),
    };
    let mut clean = if cfg.remove_spike {
        clean_autocorrelation(&ac)
    } else {
        ac.magnitude()
    };
    // A flat speckle image (one emitter) leaves nothing but the spike: the
    // object is a point, which the raw map describes.
    if cfg.remove_spike && clean.iter().all(|&v| v == 0.0) {
        clean = ac.magnitude();
    }
    let clean = box_smooth(&clean, cfg.ac_smoothing);
    let support = estimate_support(&clean, cfg.er.support_threshold_rel)?;
    let modulus = fourier_modulus(&clean);
    let runs = error_reduction_runs(&modulus.values, &support, &cfg.er)?;
    let start_traces = runs.iter().map(|r| r.error_trace.clone()).collect();
    let er = runs
        .into_iter()
        .reduce(|best, r| {
            if r.final_error() < best.final_error() {
                r
            } else {
                best
            }
        })
        .expect("at least one start");
    let smoothed = gaussian_smooth(&er.reconstruction, cfg.post_smoothing);
    let mask = binarize(&smoothed, cfg.er.binarize_method)?;
    Ok(Reconstruction {
        er,
        start_traces,
        mask,
        modulus_clamped: modulus.clamped,
    })
}

pub fn reconstruct_speckle(img: &SpeckleImage, cfg: &PipelineConfig) -> Result<Reconstruction> {
    reconstruct_from_ac(&autocorrelation_map(img)?, cfg)
}

/// Exact autocorrelation of a mask, centered at `n/2`.
pub fn mask_autocorrelation(mask: &Mask) -> AcMap {
    let n = mask.n();
    let mut fft = Fft2::new(n);
    let mut spec = to_complex(&mask.to_f64());
    fft.forward(&mut spec);
    spec.mapv_inplace(|z| Complex64::new(z.norm_sqr(), 0.0));
    fft.inverse(&mut spec);
    AcMap::from_complex(fftshift(&spec)).expect("mask side is even")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::best_aligned_iou;

    fn rect(n: usize, h: usize, w: usize) -> Mask {
        let (r0, c0) = (n / 2 - h / 2, n / 2 - w / 2);
        Mask::from_fn(n, |(i, j)| {
            (r0..r0 + h).contains(&i) && (c0..c0 + w).contains(&j)
        })
    }

    fn brute_ac(mask: &Mask) -> Array2<f64> {
        let n = mask.n() as isize;
        Array2::from_shape_fn((n as usize, n as usize), |(a, b)| {
            let (ta, tb) = (a as isize - n / 2, b as isize - n / 2);
            let mut s = 0.0;
            for i in 0..n {
                for j in 0..n {
                    let (k, l) = ((i + ta).rem_euclid(n), (j + tb).rem_euclid(n));
                    if mask.get(i as usize, j as usize) && mask.get(k as usize, l as usize) {
                        s += 1.0;
                    }
                }
            }
            s
        })
    }

    #[test]
    fn mask_ac_matches_brute_force() {
        let mut m = Mask::empty(16);
        for (i, j) in [(3, 4), (3, 5), (9, 2), (12, 12)] {
            m.set(i, j, true);
        }
        let ac = mask_autocorrelation(&m);
        let brute = brute_ac(&m);
        for (a, b) in ac.magnitude().iter().zip(brute.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn single_emitter_reconstructs_a_point() {
        let mut spike = Array2::<Complex64>::zeros((16, 16));
        spike[(8, 8)] = Complex64::new(1.0, 0.0);
        let cfg = PipelineConfig::default();
        let rec = reconstruct_from_ac(&AcMap::from_complex(spike).unwrap(), &cfg).unwrap();
        // No larger than the smoothing window.
        assert!((1..=cfg.ac_smoothing * cfg.ac_smoothing).contains(&rec.mask.count()));
    }

    #[test]
    fn single_delta_cleans_to_zero() {
        let mut m = Mask::empty(16);
        m.set(7, 7, true);
        let clean = clean_autocorrelation(&mask_autocorrelation(&m));
        assert!(clean.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn two_point_side_lobes_survive() {
        let mut m = Mask::empty(16);
        m.set(8, 5, true);
        m.set(8, 9, true);
        let clean = clean_autocorrelation(&mask_autocorrelation(&m));
        assert!(clean[(8, 8)].abs() < 1e-12);
        assert!((clean[(8, 12)] - 1.0).abs() < 1e-12);
        assert!((clean[(8, 4)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spike_replaced_by_neighbour_max() {
        let mut values = Array2::from_elem((8, 8), Complex64::new(1.0, 0.0));
        values[(4, 4)] = Complex64::new(500.0, 0.0);
        values[(3, 5)] = Complex64::new(40.0, 0.0);
        let clean = clean_autocorrelation(&AcMap::from_complex(values).unwrap());
        assert_eq!(clean[(4, 4)], 40.0);
    }

    #[test]
    fn rectangle_support_matches_extent() {
        let (h, w) = (20, 8);
        let s = rect(64, h, w);
        let clean = clean_autocorrelation(&mask_autocorrelation(&s));
        let sup = estimate_support(&clean, 0.04).unwrap();
        let (i0, i1, j0, j1) = sup.bounding_box().unwrap();
        assert!(((i1 - i0 + 1) as isize - h as isize).abs() <= 2);
        assert!(((j1 - j0 + 1) as isize - w as isize).abs() <= 2);
        assert!(s.is_subset_of(&sup));
    }

    #[test]
    fn support_threshold_one_is_tiny() {
        // The exact AC has a single peak cell; it halves to one cell plus margins.
        let ac = mask_autocorrelation(&rect(64, 20, 8)).magnitude();
        let sup = estimate_support(&ac, 1.0 - 1e-12).unwrap();
        assert!(sup.count() <= 9);
    }

    #[test]
    fn support_invariant_under_reflection() {
        let clean = clean_autocorrelation(&mask_autocorrelation(&rect(64, 13, 6)));
        let n = clean.nrows();
        let refl = Array2::from_shape_fn((n, n), |(i, j)| clean[((n - i) % n, (n - j) % n)]);
        assert_eq!(
            estimate_support(&clean, 0.04).unwrap(),
            estimate_support(&refl, 0.04).unwrap()
        );
    }

    #[test]
    fn zero_map_has_no_support() {
        assert!(matches!(
            estimate_support(&Array2::zeros((8, 8)), 0.04),
            Err(Error::EmptySupport)
        ));
    }

    #[test]
    fn modulus_of_exact_ac_is_dft_magnitude() {
        let s = rect(32, 7, 3).roll(2, -5);
        let ac = mask_autocorrelation(&s).magnitude();
        let m = fourier_modulus(&ac);
        let mut spec = to_complex(&s.to_f64());
        Fft2::new(32).forward(&mut spec);
        let peak = spec.iter().map(|z| z.norm()).fold(0.0, f64::max);
        for (a, z) in m.values.iter().zip(spec.iter()) {
            assert!((a - z.norm()).abs() <= 1e-6 * peak);
        }
        assert!(fourier_modulus(&Array2::zeros((8, 8)))
            .values
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn noise_free_modulus_not_clamped() {
        let s = rect(32, 9, 4);
        let ac = mask_autocorrelation(&s).magnitude();
        // Tiny negative rounding residue is possible; it must stay negligible.
        let m = fourier_modulus(&ac);
        let mut spec = to_complex(&s.to_f64());
        Fft2::new(32).forward(&mut spec);
        let real_zeros = spec.iter().filter(|z| z.norm() < 1e-6).count();
        assert!(m.clamped <= real_zeros);
    }

    #[test]
    fn er_recovers_rectangle_with_exact_support() {
        let s = rect(64, 20, 8);
        let modulus = fourier_modulus(&mask_autocorrelation(&s).magnitude());
        let res = error_reduction(&modulus.values, &s, &ERConfig::default()).unwrap();
        let mask = binarize(&res.reconstruction, BinarizeMethod::Fixed).unwrap();
        let (score, _) = best_aligned_iou(&mask, &s).unwrap();
        assert!(score >= 0.95, "{score}");
        assert!(res.error_trace.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn er_is_deterministic_and_respects_support() {
        let s = rect(32, 6, 10);
        let sup =
            estimate_support(&clean_autocorrelation(&mask_autocorrelation(&s)), 0.04).unwrap();
        let modulus = fourier_modulus(&mask_autocorrelation(&s).magnitude()).values;
        let cfg = ERConfig {
            iterations: 60,
            restarts: 2,
            ..ERConfig::default()
        };
        let a = error_reduction(&modulus, &sup, &cfg).unwrap();
        let b = error_reduction(&modulus, &sup, &cfg).unwrap();
        assert_eq!(a, b);
        for ((i, j), v) in a.reconstruction.indexed_iter() {
            assert!(*v >= 0.0);
            if !sup.get(i, j) {
                assert_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn er_rejects_bad_input() {
        let m = Array2::zeros((8, 8));
        assert!(error_reduction(&m, &Mask::empty(8), &ERConfig::default()).is_err());
        assert!(error_reduction(&m, &Mask::full(16), &ERConfig::default()).is_err());
        let cfg = ERConfig {
            iterations: 0,
            ..ERConfig::default()
        };
        assert!(error_reduction(&m, &Mask::full(8), &cfg).is_err());
    }

    #[test]
    fn fixed_binarization_basics() {
        let s = rect(16, 4, 5);
        assert_eq!(binarize(&s.to_f64(), BinarizeMethod::Fixed).unwrap(), s);
        let c = Array2::from_elem((8, 8), 0.3);
        assert_eq!(binarize(&c, BinarizeMethod::Fixed).unwrap(), Mask::full(8));
        assert!(binarize(&Array2::zeros((8, 8)), BinarizeMethod::Otsu).is_err());
    }

    #[test]
    fn otsu_matches_sweep_oracle() {
        let a = Array2::from_shape_fn((16, 16), |(i, j)| {
            if i < 5 {
                0.0
            } else if (i + j) % 3 == 0 {
                0.9
            } else {
                0.1
            }
        });
        let m = binarize(&a, BinarizeMethod::Otsu).unwrap();
        for ((i, j), v) in a.indexed_iter() {
            assert_eq!(m.get(i, j), *v == 0.9);
        }
    }

    #[test]
    fn smoothing_preserves_mass() {
        let s = rect(16, 3, 3).to_f64();
        assert!((box_smooth(&s, 5).sum() - 9.0).abs() < 1e-9);
        assert!((gaussian_smooth(&s, 1.0).sum() - 9.0).abs() < 1e-9);
    }
}
