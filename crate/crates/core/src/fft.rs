//! Square 2D discrete Fourier transforms on `ndarray` grids.
//!
//! Forward transform is the plain DFT `G(k) = sum_x g(x) exp(-2 pi i k.x / n)`.
//! `inverse` applies the `1/n^2` normalization so that `inverse(forward(g)) == g`.

use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Cached forward/inverse plans plus scratch for one grid side.
///
/// Not `Sync`; give each worker its own instance.
pub struct Fft2 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
    transposed: Vec<Complex64>,
}

impl Fft2 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        Self {
            n,
            forward,
            inverse,
            scratch: vec![Complex64::default(); scratch_len],
            transposed: vec![Complex64::default(); n * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn forward(&mut self, data: &mut Array2<Complex64>) {
        let plan = Arc::clone(&self.forward);
        self.process(data, plan.as_ref());
    }

    /// Inverse DFT without the `1/n^2` factor.
    pub fn inverse_unnormalized(&mut self, data: &mut Array2<Complex64>) {
        let plan = Arc::clone(&self.inverse);
        self.process(data, plan.as_ref());
    }

    pub fn inverse(&mut self, data: &mut Array2<Complex64>) {
        self.inverse_unnormalized(data);
        let scale = 1.0 / (self.n * self.n) as f64;
        data.mapv_inplace(|c| c * scale);
    }

    fn process(&mut self, data: &mut Array2<Complex64>, plan: &dyn Fft<f64>) {
        let n = self.n;
        assert_eq!(data.dim(), (n, n), "grid side does not match the plan");
        if !data.is_standard_layout() {
            *data = data.as_standard_layout().into_owned();
        }
        let buf = data.as_slice_mut().expect("standard layout");
        plan.process_with_scratch(buf, &mut self.scratch);
        transpose(buf, &mut self.transposed, n);
        plan.process_with_scratch(&mut self.transposed, &mut self.scratch);
        transpose(&self.transposed, buf, n);
    }
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], n: usize) {
    const BLOCK: usize = 16;
    for bi in (0..n).step_by(BLOCK) {
        for bj in (0..n).step_by(BLOCK) {
            for i in bi..(bi + BLOCK).min(n) {
                for j in bj..(bj + BLOCK).min(n) {
                    dst[j * n + i] = src[i * n + j];
                }
            }
        }
    }
}

/// Cyclic shift moving index 0 to index n/2 along both axes. For even `n`
/// this is its own inverse.
pub fn fftshift<T: Clone>(a: &Array2<T>) -> Array2<T> {
    let (rows, cols) = a.dim();
    let (hr, hc) = (rows / 2, cols / 2);
    Array2::from_shape_fn((rows, cols), |(i, j)| {
        a[((i + rows - hr) % rows, (j + cols - hc) % cols)].clone()
    })
}

pub fn ifftshift<T: Clone>(a: &Array2<T>) -> Array2<T> {
    let (rows, cols) = a.dim();
    let (hr, hc) = (rows - rows / 2, cols - cols / 2);
    Array2::from_shape_fn((rows, cols), |(i, j)| {
        a[((i + rows - hr) % rows, (j + cols - hc) % cols)].clone()
    })
}

pub fn to_complex(a: &Array2<f64>) -> Array2<Complex64> {
    a.mapv(|v| Complex64::new(v, 0.0))
}
