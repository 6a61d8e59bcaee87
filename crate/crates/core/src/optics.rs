//! Rough-particle speckle forward model.
//!
//! A particle is an ensemble of point emitters (asperities) with random phase
//! scattered over its filled contour. The out-of-focus interferogram is the
//! squared modulus of the DFT of the emitter field, so its inverse DFT is the
//! circular autocorrelation of that field.

use std::f64::consts::TAU;

use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::{fftshift, to_complex, Fft2};
use crate::raster::Mask;
use crate::seed;

pub const DEFAULT_DENSITY: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Asperity {
    /// Object-grid cell, first index.
    pub u: usize,
    /// Object-grid cell, second index.
    pub v: usize,
    /// Radians in `[0, 2 pi)`.
    pub phase: f64,
    pub amplitude: f64,
}

impl Asperity {
    pub fn field(&self) -> Complex64 {
        Complex64::from_polar(self.amplitude, self.phase)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsperitySet {
    pub object_n: usize,
    pub items: Vec<Asperity>,
}

impl AsperitySet {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Side of the smallest square holding every emitter.
    pub fn support_side(&self) -> usize {
        let (mut u0, mut u1, mut v0, mut v1) = (usize::MAX, 0, usize::MAX, 0);
        for a in &self.items {
            u0 = u0.min(a.u);
            u1 = u1.max(a.u);
            v0 = v0.min(a.v);
            v1 = v1.max(a.v);
        }
        if self.items.is_empty() {
            0
        } else {
            (u1 - u0 + 1).max(v1 - v0 + 1)
        }
    }

    /// Point reflection through the object-grid center with conjugated
    /// phases. Produces the same speckle intensity as `self`.
    pub fn twin(&self) -> AsperitySet {
        let n = self.object_n;
        AsperitySet {
            object_n: n,
            items: self
                .items
                .iter()
                .map(|a| Asperity {
                    u: n - 1 - a.u,
                    v: n - 1 - a.v,
                    phase: (TAU - a.phase) % TAU,
                    amplitude: a.amplitude,
                })
                .collect(),
        }
    }
}

/// Imaging geometry. Only `image_n` and `object_n` affect the synthesis; the
/// sensor fields describe the reference camera and are carried as metadata.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpticsConfig {
    pub image_n: usize,
    pub object_n: usize,
    pub sensor_px: [u32; 2],
    pub pixel_pitch_um: f64,
    pub objective_focal_mm: f64,
}

impl OpticsConfig {
    pub fn new(image_n: usize, object_n: usize) -> Result<Self> {
        if !image_n.is_power_of_two() {
            return Err(Error::invalid(format!(
                "image_n {image_n} must be a power of two"
            )));
        }
        if object_n == 0 || object_n > image_n {
            return Err(Error::invalid(format!(
                "object_n {object_n} must be in 1..={image_n}"
            )));
        }
        Ok(Self {
            image_n,
            object_n,
            sensor_px: [1545, 1164],
            pixel_pitch_um: 6.45,
            objective_focal_mm: 80.0,
        })
    }

    fn offset(&self) -> usize {
        (self.image_n - self.object_n) / 2
    }
}

impl Default for OpticsConfig {
    fn default() -> Self {
        Self::new(256, 128).expect("valid defaults")
    }
}

/// Nonnegative interferogram intensity, `image_n x image_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeckleImage {
    data: Array2<f64>,
}

impl SpeckleImage {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        let (r, c) = data.dim();
        if r != c {
            return Err(Error::DimensionMismatch(format!(
                "speckle image must be square, got {r}x{c}"
            )));
        }
        if data.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid(
                "speckle image values must be finite and nonnegative",
            ));
        }
        Ok(Self { data })
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_data(self) -> Array2<f64> {
        self.data
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.data.mean().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct NoiseConfig {
    /// Gaussian standard deviation as a fraction of the image mean.
    pub gaussian_sigma_rel: f64,
    /// Photon count assigned to the image maximum; 0 disables shot noise.
    pub shot_scale: f64,
    /// 0 (off), 8 or 16.
    pub quantize_bits: u8,
    pub seed: u64,
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gaussian_sigma_rel >= 0.0 && self.gaussian_sigma_rel.is_finite()) {
            return Err(Error::invalid("gaussian_sigma_rel must be >= 0"));
        }
        if !(self.shot_scale >= 0.0 && self.shot_scale.is_finite()) {
            return Err(Error::invalid("shot_scale must be >= 0"));
        }
        if !matches!(self.quantize_bits, 0 | 8 | 16) {
            return Err(Error::invalid(format!(
                "quantize_bits must be 0, 8 or 16, got {}",
                self.quantize_bits
            )));
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        self.gaussian_sigma_rel == 0.0 && self.shot_scale == 0.0 && self.quantize_bits == 0
    }
}

/// Selects each mask cell independently with probability `density` and gives
/// it a uniform phase. An empty draw is retried with `seed + 1`, `seed + 2`...
pub fn sample_asperities(mask: &Mask, density: f64, seed: u64) -> Result<AsperitySet> {
    if mask.is_empty() {
        return Err(Error::invalid("cannot place asperities on an empty mask"));
    }
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::invalid(format!(
            "density {density} must be in (0, 1]"
        )));
    }
    let mut attempt = seed;
    loop {
        let mut rng = seed::rng(attempt);
        let mut items = Vec::new();
        for ((u, v), &on) in mask.cells().indexed_iter() {
            if !on {
                continue;
            }
            // Always consume the selection draw so density=1 is deterministic
            // in the same way as other densities.
            let keep = rng.gen::<f64>() < density;
            if keep {
                items.push(Asperity {
                    u,
                    v,
                    phase: rng.gen_range(0.0..TAU),
                    amplitude: 1.0,
                });
            }
        }
        if !items.is_empty() {
            return Ok(AsperitySet {
                object_n: mask.n(),
                items,
            });
        }
        attempt = attempt.wrapping_add(1);
    }
}

/// Complex emitter field embedded at the center of the image frame.
pub fn emitter_field(asp: &AsperitySet, optics: &OpticsConfig) -> Result<Array2<Complex64>> {
    if asp.object_n != optics.object_n {
        return Err(Error::DimensionMismatch(format!(
            "asperities on a {} grid, optics expects {}",
            asp.object_n, optics.object_n
        )));
    }
    let n = optics.image_n;
    let side = asp.support_side();
    if 2 * side > n {
        return Err(Error::invalid(format!(
            "object support side {side} aliases in a {n} frame; image_n must be at least {}",
            (2 * side).next_power_of_two()
        )));
    }
    let off = optics.offset();
    let mut g = Array2::<Complex64>::zeros((n, n));
    for a in &asp.items {
        g[(a.u + off, a.v + off)] += a.field();
    }
    Ok(g)
}

/// `I = |DFT(g)|^2` with a plain forward DFT.
pub fn synthesize_speckle(asp: &AsperitySet, optics: &OpticsConfig) -> Result<SpeckleImage> {
    let mut fft = Fft2::new(optics.image_n);
    synthesize_speckle_with(&mut fft, asp, optics)
}

/// As [`synthesize_speckle`], reusing a caller-owned plan.
pub fn synthesize_speckle_with(
    fft: &mut Fft2,
    asp: &AsperitySet,
    optics: &OpticsConfig,
) -> Result<SpeckleImage> {
    let mut g = emitter_field(asp, optics)?;
    fft.forward(&mut g);
    Ok(SpeckleImage {
        data: g.mapv(|c| c.norm_sqr()),
    })
}

/// Shot noise, then additive Gaussian noise (clamped at 0), then midtread
/// quantization against the noisy image maximum.
pub fn add_noise(img: &SpeckleImage, noise: &NoiseConfig) -> Result<SpeckleImage> {
    noise.validate()?;
    if noise.is_identity() {
        return Ok(img.clone());
    }
    let mut rng = seed::rng(noise.seed);
    let mut data = img.data.clone();

    if noise.shot_scale > 0.0 {
        let max = img.max();
        if max > 0.0 {
            let gain = noise.shot_scale / max;
            data.mapv_inplace(|v| {
                let mean = v * gain;
                if mean > 0.0 {
                    let counts: f64 = Poisson::new(mean).expect("positive mean").sample(&mut rng);
                    counts / gain
                } else {
                    0.0
                }
            });
        }
    }

    if noise.gaussian_sigma_rel > 0.0 {
        let sigma = noise.gaussian_sigma_rel * img.mean();
        if sigma > 0.0 {
            let normal = Normal::new(0.0, sigma).expect("finite sigma");
            data.mapv_inplace(|v| (v + normal.sample(&mut rng)).max(0.0));
        }
    }

    if noise.quantize_bits > 0 {
        let levels = ((1u32 << noise.quantize_bits) - 1) as f64;
        let max = data.iter().copied().fold(0.0, f64::max);
        if max > 0.0 {
            let step = max / levels;
            data.mapv_inplace(|v| (v / step).round() * step);
        }
    }
    Ok(SpeckleImage { data })
}

/// Inverse DFT of an intensity image, zero lag at `(n/2, n/2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AcMap {
    values: Array2<Complex64>,
}

impl AcMap {
    pub fn from_complex(values: Array2<Complex64>) -> Result<Self> {
        let (r, c) = values.dim();
        if r != c || r % 2 != 0 {
            return Err(Error::DimensionMismatch(format!(
                "autocorrelation map must be square with even side, got {r}x{c}"
            )));
        }
        Ok(Self { values })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &Array2<Complex64> {
        &self.values
    }

    pub fn magnitude(&self) -> Array2<f64> {
        self.values.mapv(|c| c.norm())
    }

    pub fn center(&self) -> Complex64 {
        let c = self.n() / 2;
        self.values[(c, c)]
    }

    /// Central `m x m` window; exact when the map's support fits inside it.
    pub fn crop(&self, m: usize) -> Result<AcMap> {
        let n = self.n();
        if m > n || m % 2 != 0 || m == 0 {
            return Err(Error::invalid(format!("cannot crop {n} map to {m}")));
        }
        let off = n / 2 - m / 2;
        AcMap::from_complex(Array2::from_shape_fn((m, m), |(i, j)| {
            self.values[(i + off, j + off)]
        }))
    }
}

pub fn autocorrelation_map(img: &SpeckleImage) -> Result<AcMap> {
    let n = img.n();
    if n % 2 != 0 {
        return Err(Error::invalid(format!("image side {n} must be even")));
    }
    let mut data = to_complex(&img.data);
    let mut fft = Fft2::new(n);
    fft.inverse(&mut data);
    AcMap::from_complex(fftshift(&data))
}
