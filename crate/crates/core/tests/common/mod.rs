#![allow(dead_code)]

use ipi_core::optics::{Asperity, AsperitySet};
use ipi_core::raster::Mask;
use ipi_core::seed::rng;
use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;

/// Circular autocorrelation of the emitter field summed pair by pair, zero
/// lag at `(n/2, n/2)` of an `n x n` frame with the object centered.
pub fn pairwise_autocorrelation(asp: &AsperitySet, n: usize) -> Array2<Complex64> {
    let off = (n - asp.object_n) / 2;
    let mut out = Array2::<Complex64>::zeros((n, n));
    for a in &asp.items {
        for b in &asp.items {
            let di = (a.u + off + n - (b.u + off)) % n;
            let dj = (a.v + off + n - (b.v + off)) % n;
            out[((di + n / 2) % n, (dj + n / 2) % n)] += a.field() * b.field().conj();
        }
    }
    out
}

/// `count` distinct emitters with uniform phases on an `object_n` grid.
pub fn random_asperities(object_n: usize, count: usize, seed: u64) -> AsperitySet {
    let mut r = rng(seed);
    let mut taken = vec![false; object_n * object_n];
    let mut items = Vec::with_capacity(count);
    while items.len() < count {
        let k = r.gen_range(0..object_n * object_n);
        if !taken[k] {
            taken[k] = true;
            items.push(Asperity {
                u: k / object_n,
                v: k % object_n,
                phase: r.gen_range(0.0..std::f64::consts::TAU),
                amplitude: 1.0,
            });
        }
    }
    AsperitySet { object_n, items }
}

/// Random mask with each cell set with probability `p`.
pub fn random_mask(n: usize, p: f64, seed: u64) -> Mask {
    let mut r = rng(seed);
    Mask::from_fn(n, |_| r.gen_bool(p))
}

/// Largest IoU over both orientations and every cyclic shift, by direct
/// enumeration.
pub fn exhaustive_aligned_iou(recon: &Mask, truth: &Mask) -> f64 {
    let n = recon.n();
    let mut best = 0.0f64;
    for t in [truth.clone(), truth.point_reflect()] {
        for di in 0..n {
            for dj in 0..n {
                let moved = t.roll(di as isize, dj as isize);
                let inter = recon.intersection_count(&moved);
                let union = recon.count() + moved.count() - inter;
                if union > 0 {
                    best = best.max(inter as f64 / union as f64);
                }
            }
        }
    }
    best
}

pub fn max_abs_diff(a: &Array2<Complex64>, b: &Array2<Complex64>) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}
