//! Synthetic feature/saliency archives with planted ground truth.
//!
//! Every sample belongs to one planted concept. Its feature map is Gaussian
//! noise plus `signal_strength` on the concept's planted channels inside a
//! rectangular mask at a random position; its saliency map carries
//! `signal_strength` on the same channels inside the mask and
//! `noise_sigma / 10`-scale noise elsewhere.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::{Concept, ConceptHierarchy};
use crate::tensor_store::{
    write_tensor, Dataset, Manifest, Mask, Sample, SampleManifest, SaliencyMethod, Volume,
};
use crate::seed::SeedKey;

/// Root concept of generated hierarchies.
pub const ROOT_CONCEPT: &str = "whole";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedConcept {
    pub id: String,
    pub neurons: Vec<usize>,
    /// `(rows, cols)` of the planted rectangle on the feature grid.
    pub mask_size: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub concepts: Vec<PlantedConcept>,
    pub samples_per_concept: usize,
    pub signal_strength: f32,
    pub noise_sigma: f32,
    pub seed: u64,
    /// Image pixels per feature cell along each axis.
    pub pixels_per_cell: usize,
    /// Channels held at a constant value in every sample.
    #[serde(default)]
    pub constant_channels: Vec<(usize, f32)>,
    /// `(copy, source)`: channel `copy` duplicates channel `source`.
    #[serde(default)]
    pub duplicate_channels: Vec<(usize, usize)>,
    pub layer: String,
}

impl SynthConfig {
    /// `concepts` leaf concepts with `k` disjoint planted neurons each.
    pub fn planted(channels: usize, concepts: usize, k: usize, seed: u64) -> Self {
        SynthConfig {
            channels,
            height: 8,
            width: 8,
            concepts: (0..concepts)
                .map(|c| PlantedConcept {
                    id: format!("concept_{c}"),
                    neurons: (c * k..(c + 1) * k).collect(),
                    mask_size: (3, 3),
                })
                .collect(),
            samples_per_concept: 10,
            signal_strength: 5.0,
            noise_sigma: 1.0,
            seed,
            pixels_per_cell: 8,
            constant_channels: Vec::new(),
            duplicate_channels: Vec::new(),
            layer: "synthetic".into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if self.channels == 0 || self.height == 0 || self.width == 0 {
            return err("layer dimensions must be positive".into());
        }
        if self.pixels_per_cell == 0 {
            return err("pixels_per_cell must be positive".into());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return err(format!("noise_sigma {} invalid", self.noise_sigma));
        }
        if !self.signal_strength.is_finite() {
            return err("signal_strength must be finite".into());
        }
        let mut ids = std::collections::BTreeSet::new();
        for c in &self.concepts {
            if c.id == ROOT_CONCEPT || !ids.insert(&c.id) {
                return err(format!("duplicate or reserved concept id '{}'", c.id));
            }
            if let Some(&n) = c.neurons.iter().find(|&&n| n >= self.channels) {
                return err(format!("planted neuron {n} >= {} channels", self.channels));
            }
            let (mh, mw) = c.mask_size;
            if mh == 0 || mw == 0 || mh > self.height || mw > self.width {
                return err(format!("mask {:?} does not fit the grid", c.mask_size));
            }
        }
        for &(ch, v) in &self.constant_channels {
            if ch >= self.channels || !v.is_finite() {
                return err(format!("bad constant channel ({ch}, {v})"));
            }
        }
        for &(copy, src) in &self.duplicate_channels {
            if copy >= self.channels || src >= self.channels || copy == src {
                return err(format!("bad duplicate channel pair ({copy}, {src})"));
            }
        }
        Ok(())
    }

    pub fn image_size(&self) -> (usize, usize) {
        (
            self.height * self.pixels_per_cell,
            self.width * self.pixels_per_cell,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleTruth {
    pub sample_id: String,
    /// `[x0, y0, x1, y1]` in image pixels, half-open.
    pub mask_box: [usize; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub planted: BTreeMap<String, Vec<usize>>,
    pub samples: Vec<SampleTruth>,
}

/// One generated sample plus its planted mask on the feature grid.
#[derive(Debug, Clone)]
pub struct SynthSample {
    pub sample: Sample,
    /// `(row0, col0, rows, cols)` on the feature grid.
    pub cells: (usize, usize, usize, usize),
}

impl SynthSample {
    pub fn in_mask(&self, i: usize, j: usize) -> bool {
        let (i0, j0, mh, mw) = self.cells;
        (i0..i0 + mh).contains(&i) && (j0..j0 + mw).contains(&j)
    }

    /// Ground-truth mask at image resolution.
    pub fn image_mask(&self, pixels_per_cell: usize) -> Mask {
        let (h, w) = self.sample.manifest.image_size;
        Mask::from_fn(h, w, |y, x| self.in_mask(y / pixels_per_cell, x / pixels_per_cell))
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub config: SynthConfig,
    pub samples: Vec<SynthSample>,
    pub ground_truth: GroundTruth,
    pub hierarchy: ConceptHierarchy,
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthData> {
    cfg.validate()?;
    let mut rng = SeedKey::new(cfg.seed).with_str("synth").rng();
    let noise = Normal::new(0.0f32, cfg.noise_sigma).map_err(|e| Error::Config(e.to_string()))?;
    let sal_noise =
        Normal::new(0.0f32, cfg.noise_sigma / 10.0).map_err(|e| Error::Config(e.to_string()))?;
    let (d, h, w) = (cfg.channels, cfg.height, cfg.width);
    let ppc = cfg.pixels_per_cell;

    let mut samples = Vec::new();
    let mut truths = Vec::new();
    for concept in &cfg.concepts {
        let (mh, mw) = concept.mask_size;
        for k in 0..cfg.samples_per_concept {
            let i0 = rng.random_range(0..=h - mh);
            let j0 = rng.random_range(0..=w - mw);
            let mut z = Volume::zeros(d, h, w);
            let mut s = Volume::zeros(d, h, w);
            for v in z.data_mut() {
                *v = noise.sample(&mut rng);
            }
            for v in s.data_mut() {
                *v = sal_noise.sample(&mut rng);
            }
            for &c in &concept.neurons {
                for i in i0..i0 + mh {
                    for j in j0..j0 + mw {
                        z.set(c, i, j, z.at(c, i, j) + cfg.signal_strength);
                        s.set(c, i, j, cfg.signal_strength);
                    }
                }
            }
            for &(c, value) in &cfg.constant_channels {
                for i in 0..h {
                    for j in 0..w {
                        z.set(c, i, j, value);
                        s.set(c, i, j, 0.0);
                    }
                }
            }
            for &(copy, src) in &cfg.duplicate_channels {
                for i in 0..h {
                    for j in 0..w {
                        z.set(copy, i, j, z.at(src, i, j));
                        s.set(copy, i, j, s.at(src, i, j));
                    }
                }
            }

            let sample_id = format!("{}_{k:04}", concept.id);
            let mask_box = [j0 * ppc, i0 * ppc, (j0 + mw) * ppc, (i0 + mh) * ppc];
            truths.push(SampleTruth {
                sample_id: sample_id.clone(),
                mask_box,
            });
            let manifest = SampleManifest {
                sample_id: sample_id.clone(),
                label: concept.id.clone(),
                layer: cfg.layer.clone(),
                saliency_method: SaliencyMethod::Synthetic,
                image_size: cfg.image_size(),
                feature_file: PathBuf::from(format!("tensors/{sample_id}.feat.tens")),
                saliency_file: PathBuf::from(format!("tensors/{sample_id}.sal.tens")),
                groundtruth_box: Some(mask_box),
                groundtruth_mask_file: Some(PathBuf::from(format!(
                    "tensors/{sample_id}.mask.tens"
                ))),
            };
            samples.push(SynthSample {
                sample: Sample {
                    manifest,
                    features: z,
                    saliency: s,
                },
                cells: (i0, j0, mh, mw),
            });
        }
    }
    samples.sort_by(|a, b| a.sample.manifest.sample_id.cmp(&b.sample.manifest.sample_id));
    truths.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));

    let planted = cfg
        .concepts
        .iter()
        .map(|c| {
            let mut n = c.neurons.clone();
            n.sort_unstable();
            (c.id.clone(), n)
        })
        .collect();

    Ok(SynthData {
        config: cfg.clone(),
        samples,
        ground_truth: GroundTruth {
            planted,
            samples: truths,
        },
        hierarchy: synth_hierarchy(cfg)?,
    })
}

/// Flat hierarchy: every planted concept is a child of [`ROOT_CONCEPT`] and
/// its own classification label.
pub fn synth_hierarchy(cfg: &SynthConfig) -> Result<ConceptHierarchy> {
    let mut concepts = vec![Concept {
        id: ROOT_CONCEPT.into(),
        name: ROOT_CONCEPT.into(),
        parents: Vec::new(),
    }];
    let mut labels = BTreeMap::new();
    for c in &cfg.concepts {
        concepts.push(Concept {
            id: c.id.clone(),
            name: c.id.clone(),
            parents: vec![ROOT_CONCEPT.into()],
        });
        labels.insert(c.id.clone(), c.id.clone());
    }
    ConceptHierarchy::from_parts(concepts, labels)
}

impl SynthData {
    /// In-memory dataset equivalent to what [`SynthData::write_to`] produces.
    pub fn dataset(&self) -> Dataset {
        Dataset {
            root: PathBuf::new(),
            layer_shape: [self.config.channels, self.config.height, self.config.width],
            samples: self.samples.iter().map(|s| s.sample.clone()).collect(),
        }
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            layer_shape: [self.config.channels, self.config.height, self.config.width],
            samples: self
                .samples
                .iter()
                .map(|s| s.sample.manifest.clone())
                .collect(),
        }
    }

    /// Writes `manifest.json`, `hierarchy.json`, `ground_truth.json` and
    /// `tensors/`. Returns the manifest path.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        let tensors = dir.join("tensors");
        std::fs::create_dir_all(&tensors).map_err(|e| Error::io(&tensors, e))?;
        for s in &self.samples {
            let m = &s.sample.manifest;
            write_tensor(&s.sample.features.to_record(), dir.join(&m.feature_file))?;
            write_tensor(&s.sample.saliency.to_record(), dir.join(&m.saliency_file))?;
            if let Some(mask) = &m.groundtruth_mask_file {
                write_tensor(
                    &s.image_mask(self.config.pixels_per_cell).to_record(),
                    dir.join(mask),
                )?;
            }
        }
        let write_json = |name: &str, text: String| -> Result<()> {
            let p = dir.join(name);
            std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
        };
        write_json("hierarchy.json", self.hierarchy.to_json())?;
        write_json(
            "ground_truth.json",
            serde_json::to_string_pretty(&self.ground_truth)?,
        )?;
        let manifest_path = dir.join("manifest.json");
        self.manifest().write(&manifest_path)?;
        Ok(manifest_path)
    }
}
