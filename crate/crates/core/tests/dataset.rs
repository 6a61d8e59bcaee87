use std::collections::BTreeMap;
use std::path::Path;

use ipi_core::dataset::{
    generate_dataset, mask_path, regenerate_sample, speckle_path, DatasetConfig, DatasetManifest,
    Split,
};
use ipi_core::optics::NoiseConfig;
use ipi_core::shapes::Family;

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let key = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(key, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn small(workers: usize) -> DatasetConfig {
    DatasetConfig {
        count: 12,
        master_seed: 1,
        workers,
        noise: NoiseConfig {
            gaussian_sigma_rel: 0.05,
            shot_scale: 1000.0,
            quantize_bits: 16,
            seed: 0,
        },
        ..DatasetConfig::default()
    }
}

#[test]
fn bytes_do_not_depend_on_workers_and_regenerate() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    generate_dataset(&small(1), a.path()).unwrap();
    generate_dataset(&small(3), b.path()).unwrap();
    let ta = tree(a.path());
    assert_eq!(ta.len(), 2 + 2 * 12);
    assert_eq!(ta, tree(b.path()));

    let manifest = DatasetManifest::read(a.path()).unwrap();
    let mut per_family = BTreeMap::<&str, usize>::new();
    for rec in &manifest.records {
        *per_family.entry(rec.family.name()).or_default() += 1;
        let pair = regenerate_sample(&manifest.header, rec).unwrap();
        assert_eq!(&pair.record, rec);
        assert_eq!(
            pair.speckle_png,
            std::fs::read(speckle_path(a.path(), rec.id)).unwrap()
        );
        assert_eq!(
            pair.mask_png,
            std::fs::read(mask_path(a.path(), rec.id)).unwrap()
        );
    }
    assert_eq!(per_family.len(), Family::ALL.len());
    assert!(per_family.values().all(|&c| c == 2));
    assert_eq!(manifest.ids(Split::Train).len(), 10);
    assert_eq!(manifest.ids(Split::Test).len(), 2);
}
