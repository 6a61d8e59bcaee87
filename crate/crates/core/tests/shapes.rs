use ipi_core::raster::ViewAxis;
use ipi_core::seed::{derive, Stream};
use ipi_core::shapes::{
    build_volume, rasterize_projection, sample_pose, sample_shape, silhouette, Family, GridSpec,
    Pose, FERET_MAX_UM, FERET_MIN_UM, MAX_RADIUS_FRAC,
};
use proptest::prelude::*;

fn family() -> impl Strategy<Value = Family> {
    prop::sample::select(Family::ALL.to_vec())
}

fn grid() -> GridSpec {
    GridSpec::fitted(128, FERET_MAX_UM).unwrap()
}

#[test]
fn feret_mean_matches_uniform() {
    let n = 10_000;
    let mean = (0..n)
        .map(|i| {
            sample_shape(
                Family::Stick,
                (FERET_MIN_UM, FERET_MAX_UM),
                derive(7, i, Stream::Shape),
            )
            .unwrap()
            .feret_um
        })
        .sum::<f64>()
        / n as f64;
    let sigma = (FERET_MAX_UM - FERET_MIN_UM) / 12f64.sqrt() / (n as f64).sqrt();
    assert!(
        (mean - 935.0).abs() < 3.0 * sigma,
        "mean {mean}, sigma {sigma}"
    );
}

#[test]
fn pose_is_isotropic_and_unit() {
    let n = 10_000;
    let mut sum = [0.0; 3];
    for i in 0..n {
        let p = sample_pose(derive(7, i, Stream::Pose));
        assert!((p.norm() - 1.0).abs() < 1e-9);
        let z = p.rotate([0.0, 0.0, 1.0]);
        for k in 0..3 {
            sum[k] += z[k];
        }
    }
    let norm = sum
        .iter()
        .map(|v| (v / n as f64).powi(2))
        .sum::<f64>()
        .sqrt();
    assert!(norm < 0.05, "mean rotated z has norm {norm}");
}

#[test]
fn size_and_orientation_uncorrelated() {
    let n = 10_000u64;
    let pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let f = sample_shape(
                Family::Cross,
                (FERET_MIN_UM, FERET_MAX_UM),
                derive(3, i, Stream::Shape),
            )
            .unwrap()
            .feret_um;
            (
                f,
                sample_pose(derive(3, i, Stream::Pose)).projected_area_factor(),
            )
        })
        .collect();
    let m = n as f64;
    let (mx, my) = pairs
        .iter()
        .fold((0.0, 0.0), |a, p| (a.0 + p.0 / m, a.1 + p.1 / m));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in &pairs {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    let r = sxy / (sxx * syy).sqrt();
    assert!(r.abs() < 0.05, "r = {r}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn in_plane_rotation_keeps_area(f in family(), seed in any::<u64>(), theta in 0.0..std::f64::consts::TAU) {
        let spec = sample_shape(f, (900.0, FERET_MAX_UM), seed).unwrap();
        let pose = sample_pose(seed ^ 0x5555);
        prop_assume!(pose.projected_area_factor() > 0.5);
        let a = rasterize_projection(&spec, &pose, &grid()).unwrap().count() as f64;
        let b = rasterize_projection(&spec, &pose.compose(&Pose::rot_z(theta)), &grid()).unwrap().count() as f64;
        prop_assert!((a - b).abs() <= 0.03 * a, "{a} vs {b}");
    }

    #[test]
    fn corners_stay_within_radius_bound(f in family(), seed in any::<u64>()) {
        let spec = sample_shape(f, (FERET_MIN_UM, FERET_MAX_UM), seed).unwrap();
        for c in spec.bars().iter().flat_map(|b| b.corners()) {
            prop_assert!(c[0].hypot(c[1]) <= MAX_RADIUS_FRAC * spec.feret_um);
        }
    }

    #[test]
    fn fitted_grid_holds_every_pose(f in family(), seed in any::<u64>(), n in prop::sample::select(vec![32usize, 64, 128])) {
        let g = GridSpec::fitted(n, FERET_MAX_UM).unwrap();
        let spec = sample_shape(f, (FERET_MAX_UM - 1.0, FERET_MAX_UM), seed).unwrap();
        let mask = rasterize_projection(&spec, &sample_pose(seed), &g).unwrap();
        prop_assert!(mask.has_margin());
    }

    #[test]
    fn operations_are_deterministic(f in family(), seed in any::<u64>()) {
        let a = sample_shape(f, (FERET_MIN_UM, FERET_MAX_UM), seed).unwrap();
        let b = sample_shape(f, (FERET_MIN_UM, FERET_MAX_UM), seed).unwrap();
        prop_assert_eq!(&a, &b);
        let p = sample_pose(seed);
        prop_assert_eq!(p, sample_pose(seed));
        prop_assert_eq!(
            rasterize_projection(&a, &p, &grid()).unwrap(),
            rasterize_projection(&b, &p, &grid()).unwrap()
        );
    }

    #[test]
    fn centrosymmetric_masks_match_reflection(
        f in prop::sample::select(vec![Family::Stick, Family::Cross, Family::Dendrite]),
        seed in any::<u64>(),
    ) {
        let spec = sample_shape(f, (FERET_MIN_UM, FERET_MAX_UM), seed).unwrap();
        let m = rasterize_projection(&spec, &Pose::IDENTITY, &grid()).unwrap().bbox_centered();
        let r = m.reflect_in_place();
        // Only a one-cell boundary ring may differ.
        let n = m.n();
        let mut ring = 0;
        for i in 0..n {
            for j in 0..n {
                if m.get(i, j) != r.get(i, j) {
                    let near = |mask: &ipi_core::raster::Mask| {
                        (i.saturating_sub(1)..=(i + 1).min(n - 1)).any(|a| {
                            (j.saturating_sub(1)..=(j + 1).min(n - 1)).any(|b| mask.get(a, b))
                        })
                    };
                    prop_assert!(near(&m) && near(&r));
                    ring += 1;
                }
            }
        }
        prop_assert!(ring as f64 <= 0.2 * m.count() as f64);
    }

    #[test]
    fn volume_silhouette_matches_projection(f in family(), seed in any::<u64>()) {
        let g = GridSpec::for_span(64, FERET_MAX_UM, 50.0).unwrap();
        let spec = sample_shape(f, (FERET_MIN_UM, FERET_MAX_UM), seed).unwrap();
        let flat = rasterize_projection(&spec, &Pose::IDENTITY, &g).unwrap();
        let sil = silhouette(&build_volume(&spec, &Pose::IDENTITY, &g).unwrap(), ViewAxis::Xy);
        let diff = flat.count().abs_diff(flat.intersection_count(&sil)) + sil.count().abs_diff(flat.intersection_count(&sil));
        let perimeter_bound = 4 * g.n * 4;
        prop_assert!(diff <= perimeter_bound, "{diff} differing cells");
        // Every differing cell lies on the boundary of one of the masks.
        for i in 1..g.n - 1 {
            for j in 1..g.n - 1 {
                if flat.get(i, j) != sil.get(i, j) {
                    let interior = |m: &ipi_core::raster::Mask| {
                        m.get(i - 1, j) && m.get(i + 1, j) && m.get(i, j - 1) && m.get(i, j + 1)
                    };
                    let exterior = |m: &ipi_core::raster::Mask| {
                        !m.get(i - 1, j) && !m.get(i + 1, j) && !m.get(i, j - 1) && !m.get(i, j + 1)
                    };
                    prop_assert!(!(interior(&flat) && interior(&sil)) && !(exterior(&flat) && exterior(&sil)));
                }
            }
        }
    }
}
