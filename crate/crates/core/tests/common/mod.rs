#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;

use hint_core::region::{build_region_dataset, ExtractionConfig, RegionDataset};
use hint_core::shapley::{EvaluationPool, ShapleyConfig};
use hint_core::synth::{generate, SynthConfig, SynthData};

/// Synthetic data plus its extracted regions.
pub struct Fixture {
    pub data: SynthData,
    pub regions: RegionDataset,
}

pub fn fixture(cfg: &SynthConfig) -> Fixture {
    let data = generate(cfg).unwrap();
    let regions =
        build_region_dataset(&data.dataset(), &data.hierarchy, &ExtractionConfig::default()).unwrap();
    Fixture { data, regions }
}

/// Six channels, one concept: planted {0, 1}, channel 2 copies channel 0,
/// channel 5 is constant, channels 3 and 4 are noise.
pub fn six_neuron_config(seed: u64) -> SynthConfig {
    let mut cfg = SynthConfig::planted(6, 1, 2, seed);
    cfg.height = 6;
    cfg.width = 6;
    cfg.samples_per_concept = 8;
    cfg.duplicate_channels = vec![(2, 0)];
    cfg.constant_channels = vec![(5, 1.0)];
    cfg
}

pub fn shapley_config(m: usize, seed: u64) -> ShapleyConfig {
    ShapleyConfig {
        mc_iterations: m,
        master_seed: seed,
        evaluation_pool: EvaluationPool::All,
        ..ShapleyConfig::default()
    }
}

/// Every file under `dir` except `skip`, keyed by relative path.
pub fn snapshot(dir: &Path, skip: &[&str]) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
                continue;
            }
            let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
            if !skip.contains(&rel.as_str()) {
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}
