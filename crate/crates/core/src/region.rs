//! Saliency-guided extraction of concept-responsible and background regions.
//!
//! For every sample the saliency map is restricted to the neuron subset,
//! reduced along the channel axis, min-max normalized, and thresholded. Cells
//! at or above the threshold are responsible for every concept of the sample's
//! label; all other cells go to the shared background pool.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::ConceptHierarchy;
use crate::tensor_store::{read_tensor, write_tensor, Dataset, FeatureMap, SaliencyMap, TensorRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    /// Euclidean norm.
    #[default]
    Norm,
    /// Euclidean norm of the positive part.
    FilterNorm,
    Max,
    AbsMax,
    AbsSum,
}

impl Aggregation {
    pub const ALL: [Aggregation; 5] = [
        Aggregation::Norm,
        Aggregation::FilterNorm,
        Aggregation::Max,
        Aggregation::AbsMax,
        Aggregation::AbsSum,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Aggregation::Norm => "norm",
            Aggregation::FilterNorm => "filter-norm",
            Aggregation::Max => "max",
            Aggregation::AbsMax => "abs-max",
            Aggregation::AbsSum => "abs-sum",
        }
    }

    /// Reduces one channel vector to a scalar.
    pub fn reduce(self, values: impl Iterator<Item = f64>) -> f64 {
        match self {
            Aggregation::Norm => values.map(|v| v * v).sum::<f64>().sqrt(),
            Aggregation::FilterNorm => values.map(|v| v.max(0.0).powi(2)).sum::<f64>().sqrt(),
            Aggregation::Max => values.fold(f64::NEG_INFINITY, f64::max),
            Aggregation::AbsMax => values.fold(0.0, |m, v| m.max(v.abs())),
            Aggregation::AbsSum => values.map(f64::abs).sum(),
        }
    }
}

impl fmt::Display for Aggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Aggregation::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown aggregation '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionConfig {
    pub aggregation: Aggregation,
    pub threshold: f64,
    /// Sorted channel indices; `None` means every channel.
    pub neuron_subset: Option<Vec<usize>>,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        ExtractionConfig {
            aggregation: Aggregation::Norm,
            threshold: 0.5,
            neuron_subset: None,
        }
    }
}

impl ExtractionConfig {
    /// Validates against a layer with `channels` channels and returns the
    /// resolved neuron set.
    pub fn neurons(&self, channels: usize) -> Result<Vec<usize>> {
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(Error::Config(format!(
                "threshold {} outside (0, 1]",
                self.threshold
            )));
        }
        match &self.neuron_subset {
            None => Ok((0..channels).collect()),
            Some(subset) => {
                if subset.is_empty() {
                    return Err(Error::EmptyNeuronSet);
                }
                let mut sorted = subset.clone();
                sorted.sort_unstable();
                sorted.dedup();
                if sorted.len() != subset.len() {
                    return Err(Error::Config("neuron subset has duplicates".into()));
                }
                if let Some(&bad) = sorted.iter().find(|&&n| n >= channels) {
                    return Err(Error::Config(format!(
                        "neuron {bad} out of range for {channels} channels"
                    )));
                }
                Ok(sorted)
            }
        }
    }
}

/// Row-major `height × width` grid of reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl Grid {
    pub fn from_vec(height: usize, width: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), height * width, "grid size");
        Grid {
            height,
            width,
            values,
        }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.width + j]
    }
}

/// Saliency grid normalized into `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedSaliency(Grid);

impl AggregatedSaliency {
    pub fn grid(&self) -> &Grid {
        &self.0
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.0.at(i, j)
    }
}

/// Channel-wise reduction of the saliency map restricted to `neurons`.
pub fn aggregate(s: &SaliencyMap, neurons: &[usize], method: Aggregation) -> Result<Grid> {
    if neurons.is_empty() {
        return Err(Error::EmptyNeuronSet);
    }
    if let Some(&bad) = neurons.iter().find(|&&n| n >= s.channels()) {
        return Err(Error::DimensionMismatch {
            expected: s.channels(),
            got: bad + 1,
        });
    }
    let (h, w) = (s.height(), s.width());
    let mut values = Vec::with_capacity(h * w);
    for i in 0..h {
        for j in 0..w {
            values.push(method.reduce(neurons.iter().map(|&c| f64::from(s.at(c, i, j)))));
        }
    }
    Ok(Grid::from_vec(h, w, values))
}

/// Per-sample min-max normalization. A constant grid maps to all zeros.
pub fn normalize(grid: &Grid) -> AggregatedSaliency {
    let (lo, hi) = grid
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let range = hi - lo;
    let values = if range > 0.0 {
        grid.values
            .iter()
            .map(|&v| ((v - lo) / range).clamp(0.0, 1.0))
            .collect()
    } else {
        vec![0.0; grid.values.len()]
    };
    AggregatedSaliency(Grid::from_vec(grid.height, grid.width, values))
}

/// Responsible and background cell coordinates of one sample.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Partition {
    pub responsible: Vec<(usize, usize)>,
    pub background: Vec<(usize, usize)>,
}

/// Splits positions by `ŝ ≥ t` (inclusive).
pub fn split(saliency: &AggregatedSaliency, threshold: f64) -> Partition {
    let g = saliency.grid();
    let mut out = Partition::default();
    for i in 0..g.height {
        for j in 0..g.width {
            if g.at(i, j) >= threshold {
                out.responsible.push((i, j));
            } else {
                out.background.push((i, j));
            }
        }
    }
    out
}

/// Full per-sample extraction: restrict, aggregate, normalize, split.
pub fn partition_sample(
    z: &FeatureMap,
    s: &SaliencyMap,
    neurons: &[usize],
    cfg: &ExtractionConfig,
) -> Result<Partition> {
    if z.shape() != s.shape() {
        return Err(Error::ShapeMismatch(format!(
            "feature shape {:?} differs from saliency shape {:?}",
            z.shape(),
            s.shape()
        )));
    }
    let grid = aggregate(s, neurons, cfg.aggregation)?;
    Ok(split(&normalize(&grid), cfg.threshold))
}

/// Origin of an activation row.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Provenance {
    pub sample_id: String,
    pub i: usize,
    pub j: usize,
}

/// One spatial activation `z[D, i, j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialActivation {
    pub values: Vec<f32>,
    pub provenance: Provenance,
}

/// Responsible regions per concept plus the shared background pool.
///
/// Activations are stored once as rows of a dense `n × |D|` matrix; concept
/// and background lists index into it, so an activation responsible for a
/// leaf and all its ancestors is held a single time.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionDataset {
    neurons: Vec<usize>,
    values: Vec<f32>,
    provenance: Vec<Provenance>,
    responsible: BTreeMap<String, Vec<usize>>,
    background: Vec<usize>,
}

impl RegionDataset {
    pub fn empty(neurons: Vec<usize>) -> Self {
        RegionDataset {
            neurons,
            values: Vec::new(),
            provenance: Vec::new(),
            responsible: BTreeMap::new(),
            background: Vec::new(),
        }
    }

    /// Builds a dataset directly from rows; used by tests and the spill reader.
    pub fn from_rows(
        neurons: Vec<usize>,
        rows: Vec<SpatialActivation>,
        responsible: BTreeMap<String, Vec<usize>>,
        background: Vec<usize>,
    ) -> Result<Self> {
        let dim = neurons.len();
        let mut values = Vec::with_capacity(rows.len() * dim);
        let mut provenance = Vec::with_capacity(rows.len());
        for r in rows {
            if r.values.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: r.values.len(),
                });
            }
            values.extend_from_slice(&r.values);
            provenance.push(r.provenance);
        }
        let n = provenance.len();
        let mut seen = vec![false; n];
        for &idx in responsible.values().flatten().chain(&background) {
            if idx >= n {
                return Err(Error::ShapeMismatch(format!("row index {idx} out of {n}")));
            }
            seen[idx] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::ShapeMismatch("row not referenced by any region".into()));
        }
        Ok(RegionDataset {
            neurons,
            values,
            provenance,
            responsible,
            background,
        })
    }

    pub fn neurons(&self) -> &[usize] {
        &self.neurons
    }

    pub fn dim(&self) -> usize {
        self.neurons.len()
    }

    /// Number of distinct activation rows.
    pub fn len(&self) -> usize {
        self.provenance.len()
    }

    pub fn is_empty(&self) -> bool {
        self.provenance.is_empty()
    }

    #[inline]
    pub fn row(&self, idx: usize) -> &[f32] {
        let d = self.dim();
        &self.values[idx * d..(idx + 1) * d]
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f32] {
        &mut self.values
    }

    pub fn provenance(&self, idx: usize) -> &Provenance {
        &self.provenance[idx]
    }

    /// Concepts with a responsible list, in ascending id order.
    pub fn concepts(&self) -> impl Iterator<Item = &str> {
        self.responsible.keys().map(String::as_str)
    }

    /// Row indices of `r_e`; empty when the concept has no responsible rows.
    pub fn responsible(&self, concept: &str) -> &[usize] {
        self.responsible
            .get(concept)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn background(&self) -> &[usize] {
        &self.background
    }

    pub fn activation(&self, idx: usize) -> SpatialActivation {
        SpatialActivation {
            values: self.row(idx).to_vec(),
            provenance: self.provenance[idx].clone(),
        }
    }

    pub fn responsible_activations(&self, concept: &str) -> Vec<SpatialActivation> {
        self.responsible(concept)
            .iter()
            .map(|&i| self.activation(i))
            .collect()
    }

    pub fn background_activations(&self) -> Vec<SpatialActivation> {
        self.background.iter().map(|&i| self.activation(i)).collect()
    }

    /// Rows of `r_E ∪ r_b*`, i.e. every stored row, ascending.
    pub fn pool(&self) -> Vec<usize> {
        (0..self.len()).collect()
    }

    /// Positive rows for `concept` and the deduplicated negatives
    /// `(r_{E∖e} ∪ r_b*) ∖ r_e`.
    pub fn training_split(&self, concept: &str) -> (Vec<usize>, Vec<usize>) {
        let pos = self.responsible(concept).to_vec();
        let mut is_pos = vec![false; self.len()];
        for &i in &pos {
            is_pos[i] = true;
        }
        let neg = (0..self.len()).filter(|&i| !is_pos[i]).collect();
        (pos, neg)
    }

    /// Keeps only the columns of `subset` (channel ids, must be in this dataset).
    pub fn restrict(&self, subset: &[usize]) -> Result<RegionDataset> {
        if subset.is_empty() {
            return Err(Error::EmptyNeuronSet);
        }
        let mut cols = Vec::with_capacity(subset.len());
        for n in subset {
            let k = self
                .neurons
                .binary_search(n)
                .map_err(|_| Error::Config(format!("neuron {n} not in the region dataset")))?;
            cols.push(k);
        }
        let mut values = Vec::with_capacity(self.len() * cols.len());
        for r in 0..self.len() {
            let row = self.row(r);
            values.extend(cols.iter().map(|&k| row[k]));
        }
        Ok(RegionDataset {
            neurons: subset.to_vec(),
            values,
            provenance: self.provenance.clone(),
            responsible: self.responsible.clone(),
            background: self.background.clone(),
        })
    }

    /// Writes the spill directory: one `[n_e, |D|]` tensor per concept plus
    /// the background, and `index.json` mapping rows to provenance.
    pub fn write_spilled(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut index = SpillIndex {
            neurons: self.neurons.clone(),
            concepts: BTreeMap::new(),
            background: SpillEntry::default(),
        };
        let write_part = |rows: &[usize], file: String| -> Result<SpillEntry> {
            let provenance: Vec<_> = rows
                .iter()
                .map(|&r| {
                    let p = &self.provenance[r];
                    (p.sample_id.clone(), p.i, p.j)
                })
                .collect();
            if rows.is_empty() {
                return Ok(SpillEntry {
                    file: None,
                    rows: provenance,
                });
            }
            let mut data = Vec::with_capacity(rows.len() * self.dim());
            for &r in rows {
                data.extend_from_slice(self.row(r));
            }
            let t = TensorRecord::new(vec![rows.len(), self.dim()], data)?;
            write_tensor(&t, dir.join(&file))?;
            Ok(SpillEntry {
                file: Some(file),
                rows: provenance,
            })
        };
        for (k, (concept, rows)) in self.responsible.iter().enumerate() {
            let entry = write_part(rows, format!("concept_{k:05}.tens"))?;
            index.concepts.insert(concept.clone(), entry);
        }
        index.background = write_part(&self.background, "background.tens".into())?;
        let path = dir.join("index.json");
        std::fs::write(&path, serde_json::to_string_pretty(&index)?)
            .map_err(|e| Error::io(&path, e))
    }

    pub fn read_spilled(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join("index.json");
        let text = std::fs::read_to_string(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(path.clone()),
            _ => Error::io(&path, e),
        })?;
        let index: SpillIndex = serde_json::from_str(&text)?;
        let dim = index.neurons.len();
        let mut rows: Vec<SpatialActivation> = Vec::new();
        let mut by_prov: HashMap<Provenance, usize> = HashMap::new();
        let mut load_part = |entry: &SpillEntry| -> Result<Vec<usize>> {
            let data = match &entry.file {
                Some(f) => {
                    let t = read_tensor(dir.join(f))?;
                    if t.shape() != [entry.rows.len(), dim] {
                        return Err(Error::ShapeMismatch(format!(
                            "{f}: shape {:?}, index expects [{}, {dim}]",
                            t.shape(),
                            entry.rows.len()
                        )));
                    }
                    t.into_data()
                }
                None if entry.rows.is_empty() => Vec::new(),
                None => return Err(Error::MissingFile(dir.join("<unnamed>"))),
            };
            let mut idx = Vec::with_capacity(entry.rows.len());
            for (k, (sample_id, i, j)) in entry.rows.iter().enumerate() {
                let prov = Provenance {
                    sample_id: sample_id.clone(),
                    i: *i,
                    j: *j,
                };
                let next = rows.len();
                let id = *by_prov.entry(prov.clone()).or_insert_with(|| {
                    rows.push(SpatialActivation {
                        values: data[k * dim..(k + 1) * dim].to_vec(),
                        provenance: prov,
                    });
                    next
                });
                idx.push(id);
            }
            Ok(idx)
        };
        let mut responsible = BTreeMap::new();
        for (concept, entry) in &index.concepts {
            responsible.insert(concept.clone(), load_part(entry)?);
        }
        let background = load_part(&index.background)?;
        RegionDataset::from_rows(index.neurons, rows, responsible, background)
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct SpillEntry {
    file: Option<String>,
    rows: Vec<(String, usize, usize)>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SpillIndex {
    neurons: Vec<usize>,
    concepts: BTreeMap<String, SpillEntry>,
    background: SpillEntry,
}

/// Per-sample extraction result before merging.
struct SampleRegions {
    sample_id: String,
    concepts: BTreeSet<String>,
    partition: Partition,
}

/// Builds `r_e` for every concept and the shared `r_b*` from a loaded dataset.
///
/// Samples are extracted in parallel and merged in ascending `sample_id`
/// order, so the result does not depend on scheduling.
pub fn build_region_dataset(
    dataset: &Dataset,
    hierarchy: &ConceptHierarchy,
    cfg: &ExtractionConfig,
) -> Result<RegionDataset> {
    let neurons = cfg.neurons(dataset.layer_shape[0])?;
    let per_sample: Vec<SampleRegions> = dataset
        .samples
        .par_iter()
        .map(|s| {
            let id = &s.manifest.sample_id;
            let concepts = hierarchy
                .concepts_for_label(&s.manifest.label)
                .map_err(|e| e.in_sample(id))?;
            let partition = partition_sample(&s.features, &s.saliency, &neurons, cfg)
                .map_err(|e| e.in_sample(id))?;
            Ok(SampleRegions {
                sample_id: id.clone(),
                concepts,
                partition,
            })
        })
        .collect::<Result<_>>()?;

    let mut out = RegionDataset::empty(neurons);
    let features: HashMap<&str, &FeatureMap> = dataset
        .samples
        .iter()
        .map(|s| (s.manifest.sample_id.as_str(), &s.features))
        .collect();
    for sr in per_sample {
        let z = features[sr.sample_id.as_str()];
        let push_row = |ds: &mut RegionDataset, (i, j): (usize, usize)| -> usize {
            for &c in &ds.neurons {
                ds.values.push(z.at(c, i, j));
            }
            ds.provenance.push(Provenance {
                sample_id: sr.sample_id.clone(),
                i,
                j,
            });
            ds.provenance.len() - 1
        };
        let mut responsible_rows = Vec::with_capacity(sr.partition.responsible.len());
        for &pos in &sr.partition.responsible {
            responsible_rows.push(push_row(&mut out, pos));
        }
        for &pos in &sr.partition.background {
            let row = push_row(&mut out, pos);
            out.background.push(row);
        }
        if !responsible_rows.is_empty() {
            for concept in &sr.concepts {
                out.responsible
                    .entry(concept.clone())
                    .or_default()
                    .extend_from_slice(&responsible_rows);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sal(channels: usize, h: usize, w: usize, data: Vec<f32>) -> SaliencyMap {
        SaliencyMap::new(channels, h, w, data).unwrap()
    }

    fn reduce(m: Aggregation, v: &[f64]) -> f64 {
        m.reduce(v.iter().copied())
    }

    #[test]
    fn aggregation_definitions() {
        assert_eq!(reduce(Aggregation::Norm, &[3.0, 4.0]), 5.0);
        assert_eq!(reduce(Aggregation::FilterNorm, &[-3.0, 4.0]), 4.0);
        assert_eq!(reduce(Aggregation::Max, &[-1.0, 2.0]), 2.0);
        assert_eq!(reduce(Aggregation::AbsSum, &[-1.0, 2.0]), 3.0);
        assert_eq!(reduce(Aggregation::AbsMax, &[0.0, 0.0]), 0.0);
        assert_eq!(reduce(Aggregation::AbsMax, &[-7.0, 2.0]), 7.0);
        assert_eq!(reduce(Aggregation::Max, &[-7.0, -2.0]), -2.0);
    }

    #[test]
    fn aggregate_runs_along_channels() {
        // 2 channels, 1×2 grid: cell (0,0) = [3,4], cell (0,1) = [0,-2]
        let s = sal(2, 1, 2, vec![3.0, 0.0, 4.0, -2.0]);
        let g = aggregate(&s, &[0, 1], Aggregation::Norm).unwrap();
        assert_eq!(g.values, vec![5.0, 2.0]);
        let g = aggregate(&s, &[1], Aggregation::Max).unwrap();
        assert_eq!(g.values, vec![4.0, -2.0]);
        assert!(matches!(
            aggregate(&s, &[], Aggregation::Norm),
            Err(Error::EmptyNeuronSet)
        ));
    }

    #[test]
    fn normalize_examples() {
        let g = Grid::from_vec(1, 3, vec![0.0, 5.0, 10.0]);
        assert_eq!(normalize(&g).grid().values, vec![0.0, 0.5, 1.0]);
        let g = Grid::from_vec(1, 3, vec![2.0, 2.0, 2.0]);
        assert_eq!(normalize(&g).grid().values, vec![0.0, 0.0, 0.0]);
        let scaled = Grid::from_vec(1, 3, vec![0.0, 35.0, 70.0]);
        assert_eq!(normalize(&scaled), normalize(&Grid::from_vec(1, 3, vec![0.0, 5.0, 10.0])));
    }

    #[test]
    fn split_is_inclusive() {
        let s = AggregatedSaliency(Grid::from_vec(1, 2, vec![0.6, 0.4]));
        let p = split(&s, 0.5);
        assert_eq!(p.responsible, vec![(0, 0)]);
        assert_eq!(p.background, vec![(0, 1)]);

        let s = AggregatedSaliency(Grid::from_vec(1, 2, vec![0.5, 0.4999]));
        assert_eq!(split(&s, 0.5).responsible, vec![(0, 0)]);

        let s = AggregatedSaliency(Grid::from_vec(2, 1, vec![0.1, 0.2]));
        let p = split(&s, 0.5);
        assert!(p.responsible.is_empty());
        assert_eq!(p.background.len(), 2);
    }

    #[test]
    fn config_validation() {
        let mut cfg = ExtractionConfig::default();
        assert_eq!(cfg.neurons(3).unwrap(), vec![0, 1, 2]);
        cfg.neuron_subset = Some(vec![2, 0]);
        assert_eq!(cfg.neurons(3).unwrap(), vec![0, 2]);
        cfg.neuron_subset = Some(vec![3]);
        assert!(cfg.neurons(3).is_err());
        cfg.neuron_subset = Some(vec![1, 1]);
        assert!(cfg.neurons(3).is_err());
        cfg.neuron_subset = Some(vec![]);
        assert!(matches!(cfg.neurons(3), Err(Error::EmptyNeuronSet)));
        cfg.neuron_subset = None;
        cfg.threshold = 0.0;
        assert!(cfg.neurons(3).is_err());
        cfg.threshold = 1.0;
        assert!(cfg.neurons(3).is_ok());
    }

    #[test]
    fn aggregation_parses() {
        for a in Aggregation::ALL {
            assert_eq!(a.as_str().parse::<Aggregation>().unwrap(), a);
        }
        assert!("l2".parse::<Aggregation>().is_err());
    }

    #[test]
    fn restricting_neurons_happens_before_normalization() {
        // Channel 1 dominates cell (0,1); restricted to channel 0 the order flips.
        let s = sal(2, 1, 2, vec![1.0, 0.0, 0.0, 9.0]);
        let z = s.clone();
        let cfg = ExtractionConfig::default();
        let all = partition_sample(&z, &s, &[0, 1], &cfg).unwrap();
        assert_eq!(all.responsible, vec![(0, 1)]);
        let only0 = partition_sample(&z, &s, &[0], &cfg).unwrap();
        assert_eq!(only0.responsible, vec![(0, 0)]);
    }
}
