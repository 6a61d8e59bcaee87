//! Synthetic (speckle, mask) pair generation with a provenance manifest.
//!
//! Layout of a dataset directory:
//!
//! ```text
//! manifest.header.json   configuration shared by all samples
//! manifest.jsonl         one SampleRecord per line, ordered by id
//! speckle/{id:06}.png    16-bit speckle, multiply by `png_scale` to descale
//! mask/{id:06}.png       8-bit {0, 255} mask in the speckle frame
//! ```

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::Fft2;
use crate::io;
use crate::optics::{
    add_noise, sample_asperities, synthesize_speckle_with, NoiseConfig, OpticsConfig, SpeckleImage,
    DEFAULT_DENSITY,
};
use crate::raster::Mask;
use crate::seed::{self, Stream};
use crate::shapes::{
    rasterize_projection, sample_shape, sample_visible_pose, Family, GridSpec, ShapeParams,
    FERET_MAX_UM, FERET_MIN_UM,
};

pub const MANIFEST_VERSION: u32 = 1;
pub const DEFAULT_COUNT: usize = 2000;
pub const DEFAULT_SPLIT_RATIO: f64 = 0.9;

pub const HEADER_FILE: &str = "manifest.header.json";
pub const RECORDS_FILE: &str = "manifest.jsonl";
/// Present in the output directory after a generation run aborted.
pub const PARTIAL_MARKER: &str = "PARTIAL";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSeeds {
    pub shape: u64,
    pub pose: u64,
    pub asperity: u64,
    pub noise: u64,
}

impl SampleSeeds {
    pub fn derive(master: u64, id: u64) -> Self {
        Self {
            shape: seed::derive(master, id, Stream::Shape),
            pose: seed::derive(master, id, Stream::Pose),
            asperity: seed::derive(master, id, Stream::Asperity),
            noise: seed::derive(master, id, Stream::Noise),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: u64,
    pub family: Family,
    pub feret_um: f64,
    pub params: ShapeParams,
    pub quaternion: [f64; 4],
    /// Seed that produced the accepted pose (pose draws are retried upward
    /// from `seeds.pose` until the particle is visible).
    pub pose_seed_used: u64,
    pub asperity_count: usize,
    pub density: f64,
    pub seeds: SampleSeeds,
    pub noise: NoiseConfig,
    pub png_scale: f64,
    pub split: Split,
    pub speckle_sha256: String,
    pub mask_sha256: String,
}

/// Generation settings; everything except `workers` is recorded in the header.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub count: usize,
    pub families: Vec<Family>,
    pub size_range_um: (f64, f64),
    pub density: f64,
    /// Per-sample noise seeds are derived; the seed field here is ignored.
    pub noise: NoiseConfig,
    pub master_seed: u64,
    pub split_ratio: f64,
    pub grid: GridSpec,
    pub optics: OpticsConfig,
    pub workers: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            count: DEFAULT_COUNT,
            families: Family::ALL.to_vec(),
            size_range_um: (FERET_MIN_UM, FERET_MAX_UM),
            density: DEFAULT_DENSITY,
            noise: NoiseConfig::default(),
            master_seed: 0,
            split_ratio: DEFAULT_SPLIT_RATIO,
            grid: GridSpec::fitted(128, FERET_MAX_UM).expect("valid grid"),
            optics: OpticsConfig::default(),
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub version: u32,
    pub count: usize,
    pub families: Vec<Family>,
    pub size_range_um: (f64, f64),
    pub density: f64,
    pub noise: NoiseConfig,
    pub master_seed: u64,
    pub split_ratio: f64,
    pub split_seed: u64,
    pub grid: GridSpec,
    pub optics: OpticsConfig,
    /// Side of the stored mask PNGs (the speckle frame).
    pub mask_n: usize,
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::invalid("count must be at least 1"));
        }
        if self.families.is_empty() {
            return Err(Error::invalid("at least one family is required"));
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return Err(Error::invalid(format!(
                "density {} must be in (0, 1]",
                self.density
            )));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(Error::invalid(format!(
                "split ratio {} must be in (0, 1)",
                self.split_ratio
            )));
        }
        if self.grid.n != self.optics.object_n {
            return Err(Error::invalid(format!(
                "grid side {} differs from optics object_n {}",
                self.grid.n, self.optics.object_n
            )));
        }
        if self.workers == 0 {
            return Err(Error::invalid("workers must be at least 1"));
        }
        self.noise.validate()?;
        // Surfaces range errors before any file is written.
        sample_shape(self.families[0], self.size_range_um, 0)?;
        Ok(())
    }

    pub fn header(&self) -> ManifestHeader {
        ManifestHeader {
            version: MANIFEST_VERSION,
            count: self.count,
            families: self.families.clone(),
            size_range_um: self.size_range_um,
            density: self.density,
            noise: NoiseConfig {
                seed: 0,
                ..self.noise
            },
            master_seed: self.master_seed,
            split_ratio: self.split_ratio,
            split_seed: seed::derive(self.master_seed, 0, Stream::Split),
            grid: self.grid,
            optics: self.optics,
            mask_n: self.optics.image_n,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub header: ManifestHeader,
    pub records: Vec<SampleRecord>,
}

/// A synthesized pair, encoded.
#[derive(Debug, Clone)]
pub struct EncodedPair {
    pub record: SampleRecord,
    pub speckle_png: Vec<u8>,
    pub mask_png: Vec<u8>,
}

pub fn speckle_path(dir: &Path, id: u64) -> PathBuf {
    dir.join("speckle").join(format!("{id:06}.png"))
}

pub fn mask_path(dir: &Path, id: u64) -> PathBuf {
    dir.join("mask").join(format!("{id:06}.png"))
}

pub fn family_for(header: &ManifestHeader, id: u64) -> Family {
    header.families[(id % header.families.len() as u64) as usize]
}

/// Synthesizes one pair from explicit seeds. The split is left as `Train`.
pub fn synthesize_pair(
    header: &ManifestHeader,
    fft: &mut Fft2,
    id: u64,
    family: Family,
    seeds: SampleSeeds,
) -> Result<EncodedPair> {
    let spec = sample_shape(family, header.size_range_um, seeds.shape)?;
    let (pose, pose_seed_used) = sample_visible_pose(&spec, &header.grid, seeds.pose)?;
    let mask = rasterize_projection(&spec, &pose, &header.grid)?;
    let asperities = sample_asperities(&mask, header.density, seeds.asperity)?;
    let clean = synthesize_speckle_with(fft, &asperities, &header.optics)?;
    let noise = NoiseConfig {
        seed: seeds.noise,
        ..header.noise
    };
    let speckle = add_noise(&clean, &noise)?;
    let (speckle_png, png_scale) = io::speckle_png_bytes(&speckle)?;
    let mask_png = io::mask_png_bytes(&mask.embed(header.mask_n)?)?;
    let record = SampleRecord {
        id,
        family,
        feret_um: spec.feret_um,
        params: spec.params,
        quaternion: pose.quaternion,
        pose_seed_used,
        asperity_count: asperities.len(),
        density: header.density,
        seeds,
        noise,
        png_scale,
        split: Split::Train,
        speckle_sha256: io::sha256_hex(&speckle_png),
        mask_sha256: io::sha256_hex(&mask_png),
    };
    Ok(EncodedPair {
        record,
        speckle_png,
        mask_png,
    })
}

/// Sample `id` of the dataset described by `header`.
pub fn synthesize_sample(header: &ManifestHeader, fft: &mut Fft2, id: u64) -> Result<EncodedPair> {
    let seeds = SampleSeeds::derive(header.master_seed, id);
    synthesize_pair(header, fft, id, family_for(header, id), seeds)
}

/// Rebuilds a pair from its record alone (plus the shared header).
pub fn regenerate_sample(header: &ManifestHeader, record: &SampleRecord) -> Result<EncodedPair> {
    let mut fft = Fft2::new(header.optics.image_n);
    let mut pair = synthesize_pair(header, &mut fft, record.id, record.family, record.seeds)?;
    pair.record.split = record.split;
    Ok(pair)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn write_pair(dir: &Path, pair: &EncodedPair) -> Result<()> {
    write_file(&speckle_path(dir, pair.record.id), &pair.speckle_png)?;
    write_file(&mask_path(dir, pair.record.id), &pair.mask_png)
}

/// Generates `config.count` pairs into `out_dir` using `config.workers`
/// threads. Output bytes do not depend on the worker count. The manifest is
/// written last; if anything fails a `PARTIAL` marker is left behind.
pub fn generate_dataset(config: &DatasetConfig, out_dir: &Path) -> Result<DatasetManifest> {
    config.validate()?;
    let header = config.header();
    for sub in ["speckle", "mask"] {
        let d = out_dir.join(sub);
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let marker = out_dir.join(PARTIAL_MARKER);
    let result = generate_into(&header, config.workers, out_dir);
    match result {
        Ok(manifest) => {
            if marker.exists() {
                std::fs::remove_file(&marker).map_err(|e| Error::io(&marker, e))?;
            }
            Ok(manifest)
        }
        Err(e) => {
            // Best effort: the original error matters more than the marker.
            let _ = std::fs::write(&marker, format!("generation aborted: {e}\n"));
            Err(e)
        }
    }
}

fn generate_into(
    header: &ManifestHeader,
    workers: usize,
    out_dir: &Path,
) -> Result<DatasetManifest> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
    let image_n = header.optics.image_n;
    let records: Vec<SampleRecord> = pool.install(|| {
        (0..header.count as u64)
            .into_par_iter()
            .map_init(
                || Fft2::new(image_n),
                |fft, id| {
                    let pair = synthesize_sample(header, fft, id)?;
                    write_pair(out_dir, &pair)?;
                    Ok(pair.record)
                },
            )
            .collect::<Result<Vec<_>>>()
    })?;
    let manifest = split_manifest(
        &DatasetManifest {
            header: header.clone(),
            records,
        },
        header.split_ratio,
        header.split_seed,
    )?;
    manifest.write(out_dir)?;
    Ok(manifest)
}

/// Per-family train quotas summing to `floor(ratio * count)`: each family
/// gets the floor of its share, leftovers go to the largest remainders (ties
/// to the family listed first in the header).
fn train_quotas(groups: &[(Family, Vec<u64>)], ratio: f64, total: usize) -> Vec<usize> {
    let target = (ratio * total as f64).floor() as usize;
    let exact: Vec<f64> = groups
        .iter()
        .map(|(_, ids)| ratio * ids.len() as f64)
        .collect();
    let mut quotas: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..groups.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.partial_cmp(&ra).expect("finite").then(a.cmp(&b))
    });
    let mut missing = target.saturating_sub(quotas.iter().sum());
    for &k in order.iter().cycle() {
        if missing == 0 {
            break;
        }
        if quotas[k] < groups[k].1.len() {
            quotas[k] += 1;
            missing -= 1;
        }
    }
    quotas
}

/// Reassigns train/test: ids are shuffled within each family with a seeded
/// generator and the first quota of each family goes to train. Exactly
/// `floor(ratio * count)` records end up in train.
pub fn split_manifest(
    manifest: &DatasetManifest,
    ratio: f64,
    seed: u64,
) -> Result<DatasetManifest> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::invalid(format!(
            "split ratio {ratio} must be in (0, 1)"
        )));
    }
    // Group in first-appearance order so the result is independent of how
    // families sort.
    let mut groups: Vec<(Family, Vec<u64>)> = Vec::new();
    for r in &manifest.records {
        match groups.iter_mut().find(|(f, _)| *f == r.family) {
            Some((_, ids)) => ids.push(r.id),
            None => groups.push((r.family, vec![r.id])),
        }
    }
    let quotas = train_quotas(&groups, ratio, manifest.records.len());
    let mut rng = seed::rng(seed);
    let mut split_of = BTreeMap::new();
    for ((_, ids), quota) in groups.iter_mut().zip(quotas) {
        ids.shuffle(&mut rng);
        for (k, id) in ids.iter().enumerate() {
            split_of.insert(*id, if k < quota { Split::Train } else { Split::Test });
        }
    }
    let mut out = manifest.clone();
    out.header.split_ratio = ratio;
    out.header.split_seed = seed;
    for r in &mut out.records {
        r.split = split_of[&r.id];
    }
    Ok(out)
}

impl DatasetManifest {
    pub fn record(&self, id: u64) -> Option<&SampleRecord> {
        self.records
            .binary_search_by_key(&id, |r| r.id)
            .ok()
            .map(|k| &self.records[k])
    }

    pub fn ids(&self, split: Split) -> Vec<u64> {
        self.records
            .iter()
            .filter(|r| r.split == split)
            .map(|r| r.id)
            .collect()
    }

    /// Writes header and records via temporary files renamed into place.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let mut header = serde_json::to_string_pretty(&self.header)?;
        header.push('\n');
        let mut lines = Vec::new();
        for r in &self.records {
            serde_json::to_writer(&mut lines, r)?;
            lines.push(b'\n');
        }
        for (name, bytes) in [(RECORDS_FILE, lines), (HEADER_FILE, header.into_bytes())] {
            let tmp = dir.join(format!("{name}.tmp"));
            let dst = dir.join(name);
            let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
            f.write_all(&bytes).map_err(|e| Error::io(&tmp, e))?;
            f.sync_all().map_err(|e| Error::io(&tmp, e))?;
            std::fs::rename(&tmp, &dst).map_err(|e| Error::io(&dst, e))?;
        }
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let hp = dir.join(HEADER_FILE);
        let text = std::fs::read_to_string(&hp).map_err(|e| Error::io(&hp, e))?;
        let header: ManifestHeader = serde_json::from_str(&text)?;
        if header.version != MANIFEST_VERSION {
            return Err(Error::invalid(format!(
                "manifest version {} is not supported (expected {MANIFEST_VERSION})",
                header.version
            )));
        }
        let rp = dir.join(RECORDS_FILE);
        let f = std::fs::File::open(&rp).map_err(|e| Error::io(&rp, e))?;
        let mut records = Vec::new();
        for line in BufReader::new(f).lines() {
            let line = line.map_err(|e| Error::io(&rp, e))?;
            if !line.trim().is_empty() {
                records.push(serde_json::from_str::<SampleRecord>(&line)?);
            }
        }
        records.sort_by_key(|r| r.id);
        Ok(Self { header, records })
    }
}

fn read_checked(path: &Path, id: u64, expected: &str) -> Result<Vec<u8>> {
    let bytes = std::fs::read(path).map_err(|e| Error::CorruptDataset {
        id,
        reason: format!("cannot read {}: {e}", path.display()),
    })?;
    let digest = io::sha256_hex(&bytes);
    if digest != expected {
        return Err(Error::CorruptDataset {
            id,
            reason: format!("checksum mismatch for {}", path.display()),
        });
    }
    Ok(bytes)
}

/// Loads and verifies a pair. The speckle is descaled by the recorded factor.
pub fn read_pair(dir: &Path, manifest: &DatasetManifest, id: u64) -> Result<(SpeckleImage, Mask)> {
    let record = manifest
        .record(id)
        .ok_or_else(|| Error::invalid(format!("id {id} is not in the manifest")))?;
    let sp = speckle_path(dir, id);
    let mp = mask_path(dir, id);
    read_checked(&sp, id, &record.speckle_sha256)?;
    read_checked(&mp, id, &record.mask_sha256)?;
    let speckle = io::read_speckle_png(&sp, record.png_scale)?;
    let mask = io::read_mask_png(&mp)?;
    Ok((speckle, mask))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(count: usize) -> DatasetConfig {
        let optics = OpticsConfig::new(64, 32).unwrap();
        DatasetConfig {
            count,
            grid: GridSpec::fitted(32, FERET_MAX_UM).unwrap(),
            optics,
            master_seed: 7,
            ..DatasetConfig::default()
        }
    }

    #[test]
    fn families_cycle_uniformly() {
        let dir = tempfile::tempdir().unwrap();
        let m = generate_dataset(&small_config(12), dir.path()).unwrap();
        for f in Family::ALL {
            assert_eq!(m.records.iter().filter(|r| r.family == f).count(), 2);
        }
        assert!(!dir.path().join(PARTIAL_MARKER).exists());
    }

    #[test]
    fn manifest_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let m = generate_dataset(&small_config(5), dir.path()).unwrap();
        assert_eq!(DatasetManifest::read(dir.path()).unwrap(), m);
    }

    #[test]
    fn pair_round_trip_and_tamper_detection() {
        let dir = tempfile::tempdir().unwrap();
        let m = generate_dataset(&small_config(3), dir.path()).unwrap();
        let header = &m.header;
        let pair = synthesize_sample(header, &mut Fft2::new(64), 1).unwrap();
        let (speckle, mask) = read_pair(dir.path(), &m, 1).unwrap();
        assert_eq!(mask.n(), 64);
        assert!(!mask.is_empty());
        let decoded = image::load_from_memory(&pair.speckle_png).unwrap();
        assert_eq!(decoded.width() as usize, speckle.n());
        assert!(read_pair(dir.path(), &m, 99).is_err());

        let p = mask_path(dir.path(), 1);
        let mut bytes = std::fs::read(&p).unwrap();
        let k = bytes.len() / 2;
        bytes[k] ^= 0x01;
        std::fs::write(&p, bytes).unwrap();
        assert!(matches!(
            read_pair(dir.path(), &m, 1),
            Err(Error::CorruptDataset { id: 1, .. })
        ));
    }

    #[test]
    fn zero_count_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            generate_dataset(&small_config(0), dir.path()),
            Err(Error::InvalidArgument(_))
        ));
    }

    fn fake_manifest(families: &[Family], count: usize) -> DatasetManifest {
        let header = DatasetConfig {
            families: families.to_vec(),
            count,
            ..DatasetConfig::default()
        }
        .header();
        let records = (0..count as u64)
            .map(|id| SampleRecord {
                id,
                family: family_for(&header, id),
                feret_um: 500.0,
                params: ShapeParams {
                    width_frac: 0.1,
                    arm_ratio: 1.0,
                    branch_frac: 1.0,
                },
                quaternion: [1.0, 0.0, 0.0, 0.0],
                pose_seed_used: 0,
                asperity_count: 1,
                density: 0.5,
                seeds: SampleSeeds::derive(0, id),
                noise: NoiseConfig::default(),
                png_scale: 1.0,
                split: Split::Train,
                speckle_sha256: String::new(),
                mask_sha256: String::new(),
            })
            .collect();
        DatasetManifest { header, records }
    }

    #[test]
    fn split_sizes_are_exact() {
        let m = fake_manifest(&Family::ALL, 18000);
        let s = split_manifest(&m, 0.9, 3).unwrap();
        assert_eq!(s.ids(Split::Train).len(), 16200);
        assert_eq!(s.ids(Split::Test).len(), 1800);

        let two = fake_manifest(&[Family::Stick], 2);
        let s = split_manifest(&two, 0.5, 0).unwrap();
        assert_eq!(s.ids(Split::Train).len(), 1);
        let two = fake_manifest(&[Family::Stick, Family::T], 2);
        let s = split_manifest(&two, 0.5, 0).unwrap();
        assert_eq!(s.ids(Split::Train).len(), 1);
    }

    #[test]
    fn split_is_seeded_and_stratified() {
        let m = fake_manifest(&Family::ALL, 1003);
        let a = split_manifest(&m, 0.9, 11).unwrap();
        assert_eq!(a, split_manifest(&m, 0.9, 11).unwrap());
        assert_ne!(
            a.ids(Split::Test),
            split_manifest(&m, 0.9, 12).unwrap().ids(Split::Test)
        );
        for split in [Split::Train, Split::Test] {
            let ids = a.ids(split);
            for f in Family::ALL {
                let global = m.records.iter().filter(|r| r.family == f).count() as f64 / 1003.0;
                let local = ids
                    .iter()
                    .filter(|&&id| family_for(&m.header, id) == f)
                    .count() as f64
                    / ids.len() as f64;
                assert!((global - local).abs() <= 0.02, "{f:?} {split:?}");
            }
        }
        assert!(split_manifest(&m, 1.0, 0).is_err());
    }
}
