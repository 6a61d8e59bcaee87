//! Sweeps error-reduction settings over synthetic samples and prints the mean
//! best-aligned IoU per family.
//!
//! ```text
//! SWEEP="speckle,3,1.0,otsu,1;exact,1,0,otsu,4" [THR=0.04] \
//!     cargo run --release -p ipi-core --example er_sweep -- [samples]
//! ```
//!
//! Each `;`-separated variant is `mode,ac_smoothing,post_smoothing,binarize,restarts`
//! where mode is `speckle` (autocorrelation of a synthetic speckle image) or
//! `exact` (autocorrelation of the true mask). THR overrides the support
//! threshold of both modes.

use ipi_core::fft::Fft2;
use ipi_core::metrics::best_aligned_iou;
use ipi_core::optics::{
    autocorrelation_map, sample_asperities, synthesize_speckle_with, AcMap, OpticsConfig,
};
use ipi_core::raster::Mask;
use ipi_core::retrieval::{
    mask_autocorrelation, reconstruct_from_ac, BinarizeMethod, ERConfig, PipelineConfig,
};
use ipi_core::seed::{derive, Stream};
use ipi_core::shapes::{
    rasterize_projection, sample_shape, sample_visible_pose, Family, GridSpec, FERET_MAX_UM,
    FERET_MIN_UM,
};

struct Variant {
    exact: bool,
    ac_smoothing: usize,
    post_smoothing: f64,
    binarize: BinarizeMethod,
    restarts: usize,
}

fn parse_variant(text: &str) -> Variant {
    let f: Vec<&str> = text.split(',').map(str::trim).collect();
    assert_eq!(f.len(), 5, "variant '{text}' needs five fields");
    Variant {
        exact: f[0] == "exact",
        ac_smoothing: f[1].parse().expect("ac_smoothing"),
        post_smoothing: f[2].parse().expect("post_smoothing"),
        binarize: f[3].parse().expect("binarize method"),
        restarts: f[4].parse().expect("restarts"),
    }
}

fn main() {
    let samples: u64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(6);
    let threshold: Option<f64> = std::env::var("THR").ok().map(|v| v.parse().expect("THR"));
    let variants: Vec<Variant> = std::env::var("SWEEP")
        .unwrap_or_else(|_| "exact,1,0,otsu,4;speckle,3,1.0,otsu,1".into())
        .split(';')
        .map(parse_variant)
        .collect();

    let grid = GridSpec::fitted(64, FERET_MAX_UM).unwrap();
    let optics = OpticsConfig::new(128, 64).unwrap();
    let mut fft = Fft2::new(128);
    let mut data: Vec<(Family, Mask, AcMap, AcMap)> = Vec::new();
    for family in Family::ALL {
        for s in 0..samples {
            let spec = sample_shape(
                family,
                (FERET_MIN_UM, FERET_MAX_UM),
                derive(1, s, Stream::Shape),
            )
            .unwrap();
            let (pose, _) = sample_visible_pose(&spec, &grid, derive(1, s, Stream::Pose)).unwrap();
            let mask = rasterize_projection(&spec, &pose, &grid).unwrap();
            let asp = sample_asperities(&mask, 0.5, derive(1, s, Stream::Asperity)).unwrap();
            let img = synthesize_speckle_with(&mut fft, &asp, &optics).unwrap();
            let big = mask.embed(128).unwrap();
            data.push((
                family,
                big.clone(),
                mask_autocorrelation(&big),
                autocorrelation_map(&img).unwrap(),
            ));
        }
    }

    for v in variants {
        let t = std::time::Instant::now();
        let base = if v.exact {
            PipelineConfig::exact()
        } else {
            PipelineConfig::default()
        };
        let cfg = PipelineConfig {
            er: ERConfig {
                restarts: v.restarts,
                binarize_method: v.binarize,
                support_threshold_rel: threshold.unwrap_or(base.er.support_threshold_rel),
                ..base.er
            },
            ac_smoothing: v.ac_smoothing,
            post_smoothing: v.post_smoothing,
            ..base
        };
        let mode = if v.exact { "exact" } else { "speckle" };
        let mut line = format!(
            "{mode} thr={} k={} post={} {:?} R={}:",
            cfg.er.support_threshold_rel, v.ac_smoothing, v.post_smoothing, v.binarize, v.restarts
        );
        for family in Family::ALL {
            let scores: Vec<f64> = data
                .iter()
                .filter(|d| d.0 == family)
                .map(|(_, truth, exact, speckle)| {
                    let mask = reconstruct_from_ac(if v.exact { exact } else { speckle }, &cfg)
                        .unwrap()
                        .mask;
                    best_aligned_iou(&mask, truth).unwrap().0
                })
                .collect();
            line += &format!(
                " {}={:.3}",
                family.name(),
                scores.iter().sum::<f64>() / scores.len() as f64
            );
        }
        println!("{line} ({:.1}s)", t.elapsed().as_secs_f64());
    }
}
