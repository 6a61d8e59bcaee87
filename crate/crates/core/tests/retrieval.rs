use ipi_core::fft::{to_complex, Fft2};
use ipi_core::metrics::{best_aligned_iou, Orientation};
use ipi_core::optics::AcMap;
use ipi_core::raster::Mask;
use ipi_core::retrieval::{
    binarize, error_reduction, error_reduction_runs, estimate_support, fourier_modulus,
    mask_autocorrelation, BinarizeMethod, ERConfig,
};
use ipi_core::shapes::{rasterize_projection, sample_shape, Family, GridSpec, Pose, FERET_MAX_UM};
use ndarray::Array2;
use proptest::prelude::*;

fn family() -> impl Strategy<Value = Family> {
    prop::sample::select(Family::ALL.to_vec())
}

/// Identity-pose shape on a 32 grid, embedded in a 64 frame.
fn shape(f: Family, seed: u64) -> Mask {
    let grid = GridSpec::for_span(32, FERET_MAX_UM, 24.0).unwrap();
    let spec = sample_shape(f, (600.0, FERET_MAX_UM), seed).unwrap();
    rasterize_projection(&spec, &Pose::IDENTITY, &grid)
        .unwrap()
        .embed(64)
        .unwrap()
}

fn inputs(mask: &Mask) -> (Array2<f64>, Mask) {
    let ac: AcMap = mask_autocorrelation(mask);
    let mag = ac.magnitude();
    (
        fourier_modulus(&mag).values,
        estimate_support(&mag, 0.01).unwrap(),
    )
}

fn misfit(out: &Array2<f64>, modulus: &Array2<f64>) -> f64 {
    let mut spec = to_complex(out);
    Fft2::new(out.nrows()).forward(&mut spec);
    spec.iter()
        .zip(modulus)
        .map(|(g, m)| (g.norm() - m).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn cfg(seed: u64, iterations: usize) -> ERConfig {
    ERConfig {
        iterations,
        init_seed: seed,
        ..ERConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10))]

    #[test]
    fn every_start_is_monotone_and_inside_support(f in family(), seed in any::<u64>(), init in 0u64..1000) {
        let (modulus, support) = inputs(&shape(f, seed));
        let runs = error_reduction_runs(&modulus, &support, &ERConfig { restarts: 2, ..cfg(init, 150) }).unwrap();
        for run in &runs {
            for w in run.error_trace.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-12, "{} -> {}", w[0], w[1]);
            }
            for ((i, j), &v) in run.reconstruction.indexed_iter() {
                prop_assert!(v >= 0.0);
                if !support.get(i, j) {
                    prop_assert_eq!(v, 0.0);
                }
            }
        }
    }

    #[test]
    fn fixed_inputs_give_identical_results(f in family(), seed in any::<u64>(), init in any::<u64>()) {
        let (modulus, support) = inputs(&shape(f, seed));
        let a = error_reduction(&modulus, &support, &cfg(init, 60)).unwrap();
        let b = error_reduction(&modulus, &support, &cfg(init, 60)).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn support_is_reflection_invariant(f in family(), seed in any::<u64>(), thr in 0.005..0.5f64) {
        let m = shape(f, seed);
        let a = estimate_support(&mask_autocorrelation(&m).magnitude(), thr).unwrap();
        let b = estimate_support(&mask_autocorrelation(&m.point_reflect()).magnitude(), thr).unwrap();
        prop_assert_eq!(a, b);
    }
}

/// Starts that reach the exact solution land on the shape or on its point
/// reflection, and both fit the modulus equally well.
#[test]
fn converged_starts_fit_equally_in_either_orientation() {
    let mut orientations = Vec::new();
    for seed in 0..6 {
        let truth = shape(Family::L, seed);
        let (modulus, support) = inputs(&truth);
        let scale = modulus.iter().map(|m| m * m).sum::<f64>().sqrt();
        let mut fits = Vec::new();
        for init in 0..4 {
            let r = error_reduction(&modulus, &support, &cfg(init, 500)).unwrap();
            let e = misfit(&r.reconstruction, &modulus);
            if e < 1e-6 * scale {
                let mask = binarize(&r.reconstruction, BinarizeMethod::Otsu).unwrap();
                let (iou, t) = best_aligned_iou(&mask, &truth).unwrap();
                assert_eq!(iou, 1.0);
                orientations.push(t.orientation);
                fits.push(e);
            }
        }
        if let (Some(lo), Some(hi)) = (
            fits.iter().cloned().reduce(f64::min),
            fits.iter().cloned().reduce(f64::max),
        ) {
            assert!(hi <= 2.0 * lo, "shape {seed}: {fits:?}");
        }
    }
    assert!(orientations.contains(&Orientation::Identity));
    assert!(orientations.contains(&Orientation::Reflected));
}
