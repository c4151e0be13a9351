//! Tensor archive format and sample manifests.
//!
//! File layout, little-endian throughout:
//!
//! | offset | size        | field                         |
//! |--------|-------------|-------------------------------|
//! | 0      | 8           | ASCII `HINTTENS`              |
//! | 8      | 4           | `u32` version, currently 1    |
//! | 12     | 4           | `u32` ndim (2 or 3)           |
//! | 16     | 8 × ndim    | `u64` dimension sizes         |
//! | …      | 4 × product | `f32` payload, row-major      |

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"HINTTENS";
pub const VERSION: u32 = 1;
const HEADER_FIXED: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct TensorRecord {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl TensorRecord {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        validate_shape(&shape)?;
        let expected = shape.iter().product::<usize>();
        if data.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteData(pos));
        }
        Ok(TensorRecord { shape, data })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Bitwise equality, distinguishing `0.0` from `-0.0`.
    pub fn bit_eq(&self, other: &TensorRecord) -> bool {
        self.shape == other.shape
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

fn validate_shape(shape: &[usize]) -> Result<()> {
    if !(2..=3).contains(&shape.len()) {
        return Err(Error::ShapeMismatch(format!(
            "tensor must have 2 or 3 dimensions, got {}",
            shape.len()
        )));
    }
    if shape.contains(&0) {
        return Err(Error::ShapeMismatch(format!(
            "zero-sized dimension in {shape:?}"
        )));
    }
    Ok(())
}

pub fn encode_tensor(t: &TensorRecord) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_FIXED + 8 * t.shape.len() + 4 * t.data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
    for &d in &t.shape {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in &t.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_tensor(bytes: &[u8]) -> Result<TensorRecord> {
    if bytes.len() < MAGIC.len() || &bytes[..8] != MAGIC {
        return Err(Error::BadMagic);
    }
    if bytes.len() < HEADER_FIXED {
        return Err(Error::ShapeMismatch("truncated header".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let ndim = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    if !(2..=3).contains(&ndim) {
        return Err(Error::ShapeMismatch(format!(
            "tensor must have 2 or 3 dimensions, got {ndim}"
        )));
    }
    let dims_end = HEADER_FIXED + 8 * ndim;
    if bytes.len() < dims_end {
        return Err(Error::ShapeMismatch("truncated header".into()));
    }
    let mut shape = Vec::with_capacity(ndim);
    for chunk in bytes[HEADER_FIXED..dims_end].chunks_exact(8) {
        let d = u64::from_le_bytes(chunk.try_into().unwrap());
        let d = usize::try_from(d)
            .map_err(|_| Error::ShapeMismatch(format!("dimension {d} too large")))?;
        shape.push(d);
    }
    validate_shape(&shape)?;
    let count = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::ShapeMismatch(format!("shape {shape:?} overflows")))?;
    let payload = &bytes[dims_end..];
    if count.checked_mul(4) != Some(payload.len()) {
        return Err(Error::ShapeMismatch(format!(
            "shape {shape:?} needs {} payload bytes, found {}",
            count.saturating_mul(4),
            payload.len()
        )));
    }
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteData(pos));
    }
    Ok(TensorRecord { shape, data })
}

pub fn write_tensor(t: &TensorRecord, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_tensor(t)).map_err(|e| Error::io(path, e))
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<TensorRecord> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    decode_tensor(&bytes)
}

/// A `channels × height × width` activation or saliency volume.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

pub type FeatureMap = Volume;
pub type SaliencyMap = Volume;

impl Volume {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        TensorRecord::new(vec![channels, height, width], data).and_then(Self::try_from)
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Volume {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.channels, self.height, self.width]
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn at(&self, c: usize, i: usize, j: usize) -> f32 {
        self.data[(c * self.height + i) * self.width + j]
    }

    #[inline]
    pub fn set(&mut self, c: usize, i: usize, j: usize, v: f32) {
        self.data[(c * self.height + i) * self.width + j] = v;
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn to_record(&self) -> TensorRecord {
        TensorRecord {
            shape: self.shape().to_vec(),
            data: self.data.clone(),
        }
    }
}

impl TryFrom<TensorRecord> for Volume {
    type Error = Error;

    fn try_from(t: TensorRecord) -> Result<Self> {
        match *t.shape() {
            [c, h, w] => Ok(Volume {
                channels: c,
                height: h,
                width: w,
                data: t.data,
            }),
            _ => Err(Error::ShapeMismatch(format!(
                "expected a 3-D volume, got shape {:?}",
                t.shape
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SaliencyMethod {
    Vanilla,
    GradTimesInput,
    GuidedBackprop,
    IntegratedGradient,
    SmoothGrad,
    /// Planted saliency from the synthetic generator.
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleManifest {
    pub sample_id: String,
    pub label: String,
    pub layer: String,
    pub saliency_method: SaliencyMethod,
    /// `(height, width)` in pixels.
    pub image_size: (usize, usize),
    pub feature_file: PathBuf,
    pub saliency_file: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groundtruth_box: Option<[usize; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groundtruth_mask_file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub layer_shape: [usize; 3],
    pub samples: Vec<SampleManifest>,
}

impl Manifest {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Manifest(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone)]
pub struct Sample {
    pub manifest: SampleManifest,
    pub features: FeatureMap,
    pub saliency: SaliencyMap,
}

/// Samples loaded from a manifest, sorted by `sample_id`.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub layer_shape: [usize; 3],
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Loads the optional ground-truth mask of a sample as an `(h, w)` boolean grid.
    pub fn groundtruth_mask(&self, sample: &SampleManifest) -> Result<Option<Mask>> {
        let Some(rel) = &sample.groundtruth_mask_file else {
            return Ok(None);
        };
        let t = read_tensor(self.root.join(rel)).map_err(|e| e.in_sample(&sample.sample_id))?;
        let (h, w) = sample.image_size;
        if t.shape() != [h, w] {
            return Err(Error::ShapeMismatch(format!(
                "mask shape {:?} differs from image size {:?}",
                t.shape(),
                (h, w)
            ))
            .in_sample(&sample.sample_id));
        }
        Ok(Some(Mask::from_fn(h, w, |i, j| t.data()[i * w + j] >= 0.5)))
    }
}

/// Binary mask on a `height × width` grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub height: usize,
    pub width: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(height: usize, width: usize) -> Self {
        Mask {
            height,
            width,
            bits: vec![false; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(height * width);
        for i in 0..height {
            for j in 0..width {
                bits.push(f(i, j));
            }
        }
        Mask {
            height,
            width,
            bits,
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.width + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: bool) {
        self.bits[i * self.width + j] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn to_record(&self) -> TensorRecord {
        TensorRecord {
            shape: vec![self.height, self.width],
            data: self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }
}

/// Reads a manifest and every tensor it references.
pub fn load_dataset(manifest_path: impl AsRef<Path>) -> Result<Dataset> {
    let manifest_path = manifest_path.as_ref();
    let manifest = Manifest::read(manifest_path)?;
    let root = manifest_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let [d, h, w] = manifest.layer_shape;
    if d == 0 || h == 0 || w == 0 {
        return Err(Error::Manifest(format!(
            "layer_shape {:?} has a zero dimension",
            manifest.layer_shape
        )));
    }

    let mut ids = BTreeSet::new();
    for s in &manifest.samples {
        if !ids.insert(s.sample_id.as_str()) {
            return Err(Error::Manifest(format!(
                "duplicate sample_id '{}'",
                s.sample_id
            )));
        }
        if let Some([x0, y0, x1, y1]) = s.groundtruth_box {
            let (ih, iw) = s.image_size;
            if !(x0 < x1 && y0 < y1 && x1 <= iw && y1 <= ih) {
                return Err(Error::Manifest(format!(
                    "sample '{}': groundtruth_box {:?} outside image {:?}",
                    s.sample_id, [x0, y0, x1, y1], s.image_size
                )));
            }
        }
    }

    let mut samples: Vec<Sample> = manifest
        .samples
        .into_par_iter()
        .map(|m| load_sample(&root, m, manifest.layer_shape))
        .collect::<Result<_>>()?;
    samples.sort_by(|a, b| a.manifest.sample_id.cmp(&b.manifest.sample_id));

    Ok(Dataset {
        root,
        layer_shape: manifest.layer_shape,
        samples,
    })
}

fn load_sample(root: &Path, m: SampleManifest, layer_shape: [usize; 3]) -> Result<Sample> {
    let id = m.sample_id.clone();
    let load = |rel: &Path| -> Result<Volume> {
        read_tensor(root.join(rel)).and_then(Volume::try_from)
    };
    let features = load(&m.feature_file).map_err(|e| e.in_sample(&id))?;
    let saliency = load(&m.saliency_file).map_err(|e| e.in_sample(&id))?;
    if features.shape() != saliency.shape() {
        return Err(Error::ShapeMismatch(format!(
            "feature shape {:?} differs from saliency shape {:?}",
            features.shape(),
            saliency.shape()
        ))
        .in_sample(&id));
    }
    if features.shape() != layer_shape {
        return Err(Error::ShapeMismatch(format!(
            "feature shape {:?} differs from layer_shape {:?}",
            features.shape(),
            layer_shape
        ))
        .in_sample(&id));
    }
    Ok(Sample {
        manifest: m,
        features,
        saliency,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_layout() {
        let t = TensorRecord::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let bytes = encode_tensor(&t);
        assert_eq!(bytes.len(), 8 + 4 + 4 + 2 * 8 + 16);
        assert_eq!(&bytes[..8], b"HINTTENS");
        assert_eq!(&bytes[8..12], &[1, 0, 0, 0]);
        assert_eq!(&bytes[12..16], &[2, 0, 0, 0]);
        assert_eq!(&bytes[16..24], &2u64.to_le_bytes());
        assert_eq!(&bytes[32..36], &1.0f32.to_le_bytes());
        assert_eq!(decode_tensor(&bytes).unwrap(), t);
    }

    #[test]
    fn single_zero_payload() {
        let t = TensorRecord::new(vec![1, 1, 1], vec![0.0]).unwrap();
        let bytes = encode_tensor(&t);
        assert_eq!(&bytes[bytes.len() - 4..], &[0, 0, 0, 0]);
    }

    #[test]
    fn corrupt_inputs() {
        let t = TensorRecord::new(vec![2, 3], vec![0.5; 6]).unwrap();
        let good = encode_tensor(&t);

        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(decode_tensor(&bad), Err(Error::BadMagic)));
        assert!(matches!(decode_tensor(b"HINT"), Err(Error::BadMagic)));

        let mut bad = good.clone();
        bad[8] = 2;
        assert!(matches!(decode_tensor(&bad), Err(Error::UnsupportedVersion(2))));

        let truncated = &good[..good.len() - 3];
        assert!(matches!(decode_tensor(truncated), Err(Error::ShapeMismatch(_))));

        let mut extra = good.clone();
        extra.extend_from_slice(&[0; 4]);
        assert!(matches!(decode_tensor(&extra), Err(Error::ShapeMismatch(_))));

        let mut bad = good.clone();
        bad[12] = 4;
        assert!(matches!(decode_tensor(&bad), Err(Error::ShapeMismatch(_))));

        let mut nan = good;
        let n = nan.len();
        nan[n - 4..].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(decode_tensor(&nan), Err(Error::NonFiniteData(5))));
    }

    #[test]
    fn record_invariants() {
        assert!(TensorRecord::new(vec![4], vec![0.0; 4]).is_err());
        assert!(TensorRecord::new(vec![2, 0], vec![]).is_err());
        assert!(TensorRecord::new(vec![2, 2], vec![0.0; 3]).is_err());
        assert!(matches!(
            TensorRecord::new(vec![1, 2], vec![0.0, f32::INFINITY]),
            Err(Error::NonFiniteData(1))
        ));
    }

    #[test]
    fn volume_indexing_is_row_major() {
        let v = Volume::new(2, 2, 3, (0..12).map(|x| x as f32).collect()).unwrap();
        assert_eq!(v.at(0, 0, 2), 2.0);
        assert_eq!(v.at(0, 1, 0), 3.0);
        assert_eq!(v.at(1, 0, 0), 6.0);
    }
}
