use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use log::{info, warn};
use ndarray::Array2;
use serde::Serialize;

use ipi_core::dataset::{self, DatasetConfig, DatasetManifest, Split};
use ipi_core::io;
use ipi_core::metrics::{self, difference_image, render_difference, EvalRow, Method};
use ipi_core::optics::{
    add_noise, autocorrelation_map, sample_asperities, synthesize_speckle, NoiseConfig,
    OpticsConfig, SpeckleImage,
};
use ipi_core::raster::{Mask, ViewAxis};
use ipi_core::retrieval::{reconstruct_speckle, BinarizeMethod, ERConfig, PipelineConfig};
use ipi_core::shapes::{
    rasterize_projection, sample_shape, sample_visible_pose, Family, GridSpec, ShapeSpec,
    FERET_MAX_UM, FERET_MIN_UM,
};
use ipi_core::tomo;

/// A problem with how the command was invoked (exit code 2).
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

pub fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.downcast_ref::<Usage>().is_some() {
            return 2;
        }
        if let Some(core) = cause.downcast_ref::<ipi_core::Error>() {
            if matches!(
                core,
                ipi_core::Error::InvalidArgument(_) | ipi_core::Error::DimensionMismatch(_)
            ) {
                return 2;
            }
        }
    }
    1
}

fn require_file(path: &Path) -> Result<()> {
    if !path.is_file() {
        return Err(usage(format!("no such file: {}", path.display())));
    }
    Ok(())
}

fn require_dir(path: &Path) -> Result<()> {
    if !path.is_dir() {
        return Err(usage(format!("no such directory: {}", path.display())));
    }
    Ok(())
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).with_context(|| format!("cannot create {}", path.display()))
}

fn parse_pair(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s
        .split_once(',')
        .or_else(|| s.split_once(':'))
        .ok_or_else(|| format!("expected MIN,MAX, got '{s}'"))?;
    let a = a.trim().parse().map_err(|_| format!("bad number '{a}'"))?;
    let b = b.trim().parse().map_err(|_| format!("bad number '{b}'"))?;
    Ok((a, b))
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

#[derive(Args, Debug)]
pub struct NoiseArgs {
    /// Additive Gaussian noise, standard deviation relative to the image mean.
    #[arg(long, default_value_t = 0.0)]
    noise_gaussian: f64,
    /// Photon count at the image maximum for Poisson shot noise (0 disables).
    #[arg(long, default_value_t = 0.0)]
    noise_shot: f64,
    /// Quantize to 8 or 16 bits (0 disables).
    #[arg(long, default_value_t = 0)]
    noise_bits: u8,
}

impl NoiseArgs {
    fn config(&self, seed: u64) -> NoiseConfig {
        NoiseConfig {
            gaussian_sigma_rel: self.noise_gaussian,
            shot_scale: self.noise_shot,
            quantize_bits: self.noise_bits,
            seed,
        }
    }
}

#[derive(Args, Debug)]
pub struct GeometryArgs {
    /// Side of the object grid in cells.
    #[arg(long, default_value_t = 128)]
    object_n: usize,
    /// Side of the speckle image in pixels.
    #[arg(long, default_value_t = 256)]
    image_n: usize,
    /// Cells spanned by a particle of the largest size in the range
    /// [default: the largest span that fits every pose].
    #[arg(long)]
    span_cells: Option<f64>,
}

impl GeometryArgs {
    fn build(&self, max_feret_um: f64) -> Result<(GridSpec, OpticsConfig)> {
        let grid = match self.span_cells {
            Some(span) => GridSpec::for_span(self.object_n, max_feret_um, span)?,
            None => GridSpec::fitted(self.object_n, max_feret_um)?,
        };
        let optics = OpticsConfig::new(self.image_n, self.object_n)?;
        Ok((grid, optics))
    }
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
pub struct DatasetArgs {
    /// Number of pairs to generate.
    #[arg(long, default_value_t = dataset::DEFAULT_COUNT)]
    count: usize,
    /// Comma-separated families, cycled by sample id.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "stick,cross,dendrite,l,t,y"
    )]
    families: Vec<Family>,
    /// Feret diameter range in micrometers, MIN,MAX.
    #[arg(long, value_parser = parse_pair, default_value = "370,1500")]
    size_range: (f64, f64),
    /// Fraction of in-contour cells that become asperities.
    #[arg(long, default_value_t = ipi_core::optics::DEFAULT_DENSITY)]
    density: f64,
    #[command(flatten)]
    noise: NoiseArgs,
    /// Master seed; every sample seed derives from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fraction of samples assigned to the training split.
    #[arg(long, default_value_t = dataset::DEFAULT_SPLIT_RATIO)]
    split_ratio: f64,
    #[command(flatten)]
    geometry: GeometryArgs,
    /// Worker threads (output bytes do not depend on this).
    #[arg(long, default_value_t = default_workers())]
    workers: usize,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

pub fn dataset(a: DatasetArgs) -> Result<()> {
    if a.count == 0 {
        return Err(usage("--count must be at least 1"));
    }
    let (grid, optics) = a.geometry.build(a.size_range.1)?;
    let config = DatasetConfig {
        count: a.count,
        families: a.families,
        size_range_um: a.size_range,
        density: a.density,
        noise: a.noise.config(0),
        master_seed: a.seed,
        split_ratio: a.split_ratio,
        grid,
        optics,
        workers: a.workers,
    };
    config.validate()?;
    create_dir(&a.out)?;
    let start = std::time::Instant::now();
    let manifest = dataset::generate_dataset(&config, &a.out)?;
    info!(
        "wrote {} pairs ({} train, {} test) to {} in {:.1}s",
        manifest.records.len(),
        manifest.ids(Split::Train).len(),
        manifest.ids(Split::Test).len(),
        a.out.display(),
        start.elapsed().as_secs_f64()
    );
    Ok(())
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
pub struct ReconstructArgs {
    /// Speckle PNG(s) to reconstruct (repeatable).
    #[arg(long, conflicts_with = "dataset")]
    input: Vec<PathBuf>,
    /// Dataset directory to read speckle images from (with --id or --split).
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Comma-separated dataset ids.
    #[arg(long, value_delimiter = ',', requires = "dataset")]
    id: Vec<u64>,
    /// Reconstruct every sample of a dataset split.
    #[arg(long, value_enum, requires = "dataset")]
    split: Option<SplitArg>,
    /// Error-reduction iterations per start.
    #[arg(long, default_value_t = ERConfig::default().iterations)]
    iterations: usize,
    /// Fraction of the cleaned autocorrelation peak bounding the support.
    #[arg(long, default_value_t = ERConfig::default().support_threshold_rel)]
    support_threshold: f64,
    /// Seed of the first random start.
    #[arg(long, default_value_t = 0)]
    init_seed: u64,
    /// Binarization: fixed (half maximum) or otsu.
    #[arg(long, default_value = "otsu")]
    binarize: BinarizeMethod,
    /// Random starts; the lowest final Fourier error wins.
    #[arg(long, default_value_t = PipelineConfig::default().er.restarts)]
    restarts: usize,
    /// Odd moving-average window applied to the autocorrelation (1 = off).
    #[arg(long, default_value_t = PipelineConfig::default().ac_smoothing)]
    ac_smoothing: usize,
    /// Gaussian sigma (cells) applied to the reconstruction before binarizing.
    #[arg(long, default_value_t = PipelineConfig::default().post_smoothing)]
    post_smoothing: f64,
    /// Run on the central WINDOW x WINDOW part of the autocorrelation.
    #[arg(long)]
    window: Option<usize>,
    /// Keep the zero-lag spike (for inputs that are not speckle).
    #[arg(long)]
    keep_spike: bool,
    /// Output directory for `<name>.png` masks and `<name>_trace.csv` traces.
    #[arg(long)]
    out: PathBuf,
}

fn write_trace(path: &Path, trace: &[f64]) -> Result<()> {
    let mut text = String::from("iteration,e_f\n");
    for (k, e) in trace.iter().enumerate() {
        text.push_str(&format!("{},{e:e}\n", k + 1));
    }
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

pub fn reconstruct_er(a: ReconstructArgs) -> Result<()> {
    let cfg = PipelineConfig {
        er: ERConfig {
            iterations: a.iterations,
            support_threshold_rel: a.support_threshold,
            init_seed: a.init_seed,
            binarize_method: a.binarize,
            restarts: a.restarts,
        },
        object_n: a.window,
        remove_spike: !a.keep_spike,
        ac_smoothing: a.ac_smoothing,
        post_smoothing: a.post_smoothing,
    };
    cfg.validate()?;

    let mut jobs: Vec<(String, Box<dyn Fn() -> Result<SpeckleImage>>)> = Vec::new();
    if let Some(dir) = &a.dataset {
        require_dir(dir)?;
        let manifest = std::rc::Rc::new(
            DatasetManifest::read(dir).with_context(|| format!("reading {}", dir.display()))?,
        );
        let mut ids = a.id.clone();
        if let Some(split) = a.split {
            let s = match split {
                SplitArg::Train => Split::Train,
                SplitArg::Test => Split::Test,
            };
            ids.extend(manifest.ids(s));
        }
        if ids.is_empty() {
            return Err(usage("--dataset needs --id or --split"));
        }
        for id in ids {
            if manifest.record(id).is_none() {
                return Err(usage(format!("id {id} is not in the dataset")));
            }
            let (dir, m) = (dir.clone(), manifest.clone());
            jobs.push((
                format!("{id:06}"),
                Box::new(move || Ok(dataset::read_pair(&dir, &m, id)?.0)),
            ));
        }
    } else {
        if a.input.is_empty() {
            return Err(usage("give --input or --dataset"));
        }
        for p in &a.input {
            require_file(p)?;
            let stem = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "recon".into());
            let p = p.clone();
            jobs.push((
                stem,
                Box::new(move || Ok(SpeckleImage::new(io::read_gray_png(&p)?)?)),
            ));
        }
    }

    create_dir(&a.out)?;
    for (name, load) in jobs {
        let img = load()?;
        let r =
            reconstruct_speckle(&img, &cfg).with_context(|| format!("reconstructing {name}"))?;
        io::write_mask_png(&a.out.join(format!("{name}.png")), &r.mask)?;
        write_trace(&a.out.join(format!("{name}_trace.csv")), &r.er.error_trace)?;
        if r.modulus_clamped > 0 {
            info!(
                "{name}: clamped {} negative spectral values",
                r.modulus_clamped
            );
        }
        println!(
            "{name}\titerations={}\te_f={:.6e}\tseed={}\tpixels={}",
            r.er.error_trace.len(),
            r.er.final_error(),
            r.er.seed_used,
            r.mask.count()
        );
    }
    Ok(())
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
pub struct TomoArgs {
    /// Mask of the (x, y) view, indexed [x, y].
    #[arg(long)]
    xy: PathBuf,
    /// Mask of the (y, z) view, indexed [y, z].
    #[arg(long)]
    yz: PathBuf,
    /// Mask of the (z, x) view, indexed [z, x].
    #[arg(long)]
    zx: PathBuf,
    /// Grid side; smaller masks are centered in it. Defaults to the mask side.
    #[arg(long)]
    n: Option<usize>,
    /// Use the masks as given, skipping centering and the reflection search.
    #[arg(long)]
    registered: bool,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

pub fn tomo(a: TomoArgs) -> Result<()> {
    let mut views = Vec::new();
    for p in [&a.xy, &a.yz, &a.zx] {
        require_file(p)?;
        views.push(io::read_mask_png(p)?);
    }
    if let Some(n) = a.n {
        for v in &mut views {
            if v.n() > n {
                return Err(usage(format!("mask side {} exceeds --n {n}", v.n())));
            }
            *v = v.embed(n)?;
        }
    }
    let sides: Vec<usize> = views.iter().map(Mask::n).collect();
    if sides.iter().any(|&s| s != sides[0]) {
        return Err(usage(format!(
            "mask sides differ: xy {}, yz {}, zx {}",
            sides[0], sides[1], sides[2]
        )));
    }
    for (v, axis) in views.iter().zip(ViewAxis::ALL) {
        if v.is_empty() {
            warn!("{} mask is empty; the hull will be empty", axis.name());
        }
    }

    create_dir(&a.out)?;
    let (grid, recombination, used) = if a.registered {
        let g = tomo::visual_hull(&views[0], &views[1], &views[2])?;
        (
            g,
            None,
            [views[0].clone(), views[1].clone(), views[2].clone()],
        )
    } else {
        let r = tomo::recombine(&views[0], &views[1], &views[2])?;
        info!(
            "reflections xy={} yz={} zx={}, consistency {:.4}",
            r.reflected[0], r.reflected[1], r.reflected[2], r.consistency
        );
        (r.grid.clone(), Some(r.clone()), r.views.clone())
    };
    if grid.is_empty() {
        warn!("visual hull is empty");
    }
    let meta = tomo::export_voxels(&grid, &a.out, recombination.as_ref())?;
    for (axis, view) in ViewAxis::ALL.into_iter().zip(&used) {
        let re = tomo::reproject(&grid, axis);
        io::write_mask_png(&a.out.join(format!("reproj_{}.png", axis.name())), &re)?;
        io::write_mask_png(&a.out.join(format!("view_{}.png", axis.name())), view)?;
        let agree = if view.is_empty() && re.is_empty() {
            1.0
        } else {
            metrics::iou(&re, view)?
        };
        println!("{}\treprojection_iou={agree:.6}", axis.name());
    }
    println!("voxels\t{}", meta.occupied);
    Ok(())
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
pub struct EvalArgs {
    /// Dataset directory with the ground-truth masks.
    #[arg(long)]
    dataset: PathBuf,
    /// Prediction directory of `{id:06}.png` masks, optionally `METHOD=DIR`
    /// (repeatable; METHOD is ER or CNN).
    #[arg(long, required = true)]
    predictions: Vec<String>,
    /// Method of prediction directories given without a `METHOD=` prefix.
    #[arg(long, default_value = "CNN")]
    method: Method,
    /// Output directory for eval.csv, summary.csv and diff/ images.
    #[arg(long)]
    out: PathBuf,
}

fn prediction_files(dir: &Path) -> Result<BTreeMap<u64, PathBuf>> {
    require_dir(dir)?;
    let mut files = BTreeMap::new();
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("png") {
            continue;
        }
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        if stem.len() == 6 && stem.bytes().all(|b| b.is_ascii_digit()) {
            files.insert(stem.parse().expect("digits"), path);
        }
    }
    Ok(files)
}

pub fn eval(a: EvalArgs) -> Result<()> {
    require_dir(&a.dataset)?;
    let manifest = DatasetManifest::read(&a.dataset)
        .with_context(|| format!("reading {}", a.dataset.display()))?;
    let mut sources = Vec::new();
    for spec in &a.predictions {
        let (method, dir) = match spec.split_once('=') {
            Some((m, d)) => (m.parse::<Method>()?, PathBuf::from(d)),
            None => (a.method, PathBuf::from(spec)),
        };
        let files = prediction_files(&dir)?;
        if files.is_empty() {
            return Err(usage(format!(
                "no {{id:06}}.png predictions in {}",
                dir.display()
            )));
        }
        sources.push((method, files));
    }

    let mut rows: Vec<EvalRow> = Vec::new();
    for (method, files) in &sources {
        let diff_dir = a.out.join("diff").join(method.to_string().to_lowercase());
        create_dir(&diff_dir)?;
        for (&id, path) in files {
            let record = manifest.record(id).ok_or_else(|| {
                usage(format!(
                    "prediction {} has no dataset record",
                    path.display()
                ))
            })?;
            let (_, truth) = dataset::read_pair(&a.dataset, &manifest, id)?;
            let pred = io::read_gray_png(path)?;
            let row = metrics::evaluate(id, record.family.name(), *method, &truth, &pred)
                .with_context(|| format!("scoring {}", path.display()))?;
            // Compare in the prediction's frame, after undoing the ambiguity.
            let transform: metrics::Transform = row.transform.parse()?;
            let aligned = transform.apply(&truth);
            let diff = difference_image(&aligned.to_f64(), &pred)?;
            io::write_gray8_png(
                &diff_dir.join(format!("{id:06}.png")),
                &render_difference(&diff),
            )?;
            rows.push(row);
        }
    }
    rows.sort_by(|x, y| {
        x.id.cmp(&y.id)
            .then(x.method.to_string().cmp(&y.method.to_string()))
    });

    create_dir(&a.out)?;
    let csv_path = a.out.join("eval.csv");
    let f =
        fs::File::create(&csv_path).with_context(|| format!("creating {}", csv_path.display()))?;
    metrics::write_eval_csv(f, &rows)?;
    let summary = metrics::summarize(&rows);
    let sum_path = a.out.join("summary.csv");
    let f =
        fs::File::create(&sum_path).with_context(|| format!("creating {}", sum_path.display()))?;
    metrics::write_summary_csv(f, &summary)?;
    for s in &summary {
        println!(
            "{}\t{}\tn={}\taligned_iou mean={:.4} median={:.4}",
            s.family, s.method, s.count, s.aligned_iou_mean, s.aligned_iou_median
        );
    }
    Ok(())
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
pub struct SpeckleArgs {
    /// Particle family.
    #[arg(long, default_value = "stick")]
    family: Family,
    /// Feret diameter in micrometers; drawn from the default size range if omitted.
    #[arg(long)]
    feret: Option<f64>,
    /// Seed for shape, pose, asperities and noise.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = ipi_core::optics::DEFAULT_DENSITY)]
    density: f64,
    #[command(flatten)]
    noise: NoiseArgs,
    #[command(flatten)]
    geometry: GeometryArgs,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct SpeckleInfo {
    spec: ShapeSpec,
    quaternion: [f64; 4],
    asperity_count: usize,
    png_scale: f64,
    mask_cells: usize,
}

pub fn speckle(a: SpeckleArgs) -> Result<()> {
    let seeds = dataset::SampleSeeds::derive(a.seed, 0);
    let range = match a.feret {
        Some(f) => (f, f),
        None => (FERET_MIN_UM, FERET_MAX_UM),
    };
    let (grid, optics) = a.geometry.build(range.1.max(FERET_MAX_UM))?;
    let spec = sample_shape(a.family, range, seeds.shape)?;
    let (pose, _) = sample_visible_pose(&spec, &grid, seeds.pose)?;
    let mask = rasterize_projection(&spec, &pose, &grid)?;
    let asp = sample_asperities(&mask, a.density, seeds.asperity)?;
    let img = add_noise(
        &synthesize_speckle(&asp, &optics)?,
        &a.noise.config(seeds.noise),
    )?;

    create_dir(&a.out)?;
    let png_scale = io::write_speckle_png(&a.out.join("speckle.png"), &img)?;
    io::write_mask_png(&a.out.join("mask.png"), &mask.embed(optics.image_n)?)?;
    let ac = autocorrelation_map(&img)?.magnitude();
    let logac = ac.mapv(f64::ln_1p);
    let top = logac
        .iter()
        .copied()
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let ac8: Array2<u8> = logac.mapv(|v| (255.0 * v / top).round() as u8);
    io::write_gray8_png(&a.out.join("autocorrelation.png"), &ac8)?;
    let info = SpeckleInfo {
        spec,
        quaternion: pose.quaternion,
        asperity_count: asp.len(),
        png_scale,
        mask_cells: mask.count(),
    };
    fs::write(
        a.out.join("info.json"),
        serde_json::to_string_pretty(&info)? + "\n",
    )?;
    println!("asperities\t{}", asp.len());
    Ok(())
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
pub struct LossArgs {
    /// Per-epoch log with columns epoch,train_mse,test_mse,lr.
    #[arg(long)]
    input: PathBuf,
    /// Boxcar width in epochs (odd).
    #[arg(long, default_value_t = ipi_core::loss::DEFAULT_WINDOW)]
    window: usize,
    /// Output directory for loss_smoothed.csv and loss.svg.
    #[arg(long)]
    out: PathBuf,
}

pub fn loss(a: LossArgs) -> Result<()> {
    use ipi_core::loss;

    require_file(&a.input)?;
    let rows = loss::read_loss_csv(&a.input)?;
    let smoothed = loss::smooth_log(&rows, a.window)?;
    create_dir(&a.out)?;
    let csv_path = a.out.join("loss_smoothed.csv");
    let file =
        fs::File::create(&csv_path).with_context(|| format!("creating {}", csv_path.display()))?;
    loss::write_smoothed_csv(file, &smoothed)?;
    fs::write(a.out.join("loss.svg"), loss::loss_svg(&smoothed))?;
    let last = smoothed.last().expect("nonempty log");
    println!(
        "epochs\t{}\ttrain_mse_smoothed={:.6e}\ttest_mse_smoothed={:.6e}",
        smoothed.len(),
        last.train_mse_smoothed,
        last.test_mse_smoothed
    );
    Ok(())
}
