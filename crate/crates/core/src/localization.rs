//! Weakly supervised localization with concept classifiers.
//!
//! A classifier is applied at every spatial position of a feature map to give
//! a confidence map, which is upsampled to image resolution, binarized, and
//! reduced to the tight box of its largest 4-connected component.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::classifier::{sigmoid, ConceptClassifier};
use crate::error::{Error, Result};
use crate::region::Grid;
use crate::tensor_store::{FeatureMap, Mask};

/// Default binarization threshold for upsampled confidence maps.
pub const DEFAULT_MASK_THRESHOLD: f64 = 0.5;

/// Localization counts an image as a hit when IoU is strictly above this.
pub const IOU_HIT_THRESHOLD: f64 = 0.5;

/// Per-position classifier confidences on the feature grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceMap(Grid);

impl TryFrom<Grid> for ConfidenceMap {
    type Error = Error;

    fn try_from(grid: Grid) -> Result<Self> {
        match grid.values.iter().position(|v| !(0.0..=1.0).contains(v)) {
            Some(k) => Err(Error::Config(format!(
                "confidence {} at cell {k} outside [0, 1]",
                grid.values[k]
            ))),
            None => Ok(ConfidenceMap(grid)),
        }
    }
}

impl ConfidenceMap {
    pub fn grid(&self) -> &Grid {
        &self.0
    }

    pub fn mean_where(&self, pred: impl Fn(usize, usize) -> bool) -> Option<f64> {
        let g = &self.0;
        let (mut sum, mut n) = (0.0, 0usize);
        for i in 0..g.height {
            for j in 0..g.width {
                if pred(i, j) {
                    sum += g.at(i, j);
                    n += 1;
                }
            }
        }
        (n > 0).then(|| sum / n as f64)
    }
}

/// Half-open pixel box `[x0, x1) × [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "[usize; 4]", try_from = "[usize; 4]")]
pub struct BoundingBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl BoundingBox {
    pub fn new(x0: usize, y0: usize, x1: usize, y1: usize) -> Result<Self> {
        if x0 < x1 && y0 < y1 {
            Ok(BoundingBox { x0, y0, x1, y1 })
        } else {
            Err(Error::Config(format!(
                "degenerate box [{x0}, {y0}, {x1}, {y1}]"
            )))
        }
    }

    pub fn area(&self) -> usize {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        (self.x0..self.x1).contains(&x) && (self.y0..self.y1).contains(&y)
    }
}

impl From<BoundingBox> for [usize; 4] {
    fn from(b: BoundingBox) -> Self {
        [b.x0, b.y0, b.x1, b.y1]
    }
}

impl TryFrom<[usize; 4]> for BoundingBox {
    type Error = Error;

    fn try_from([x0, y0, x1, y1]: [usize; 4]) -> Result<Self> {
        BoundingBox::new(x0, y0, x1, y1)
    }
}

/// Applies `c` at every position of `z`.
pub fn concept_heatmap(c: &ConceptClassifier, z: &FeatureMap) -> Result<ConfidenceMap> {
    if let Some(&bad) = c.neuron_set.iter().find(|&&n| n >= z.channels()) {
        return Err(Error::DimensionMismatch {
            expected: z.channels(),
            got: bad + 1,
        });
    }
    if c.neuron_set.len() != c.weights.len() {
        return Err(Error::DimensionMismatch {
            expected: c.neuron_set.len(),
            got: c.weights.len(),
        });
    }
    let (h, w) = (z.height(), z.width());
    let mut values = Vec::with_capacity(h * w);
    for i in 0..h {
        for j in 0..w {
            let logit = c
                .neuron_set
                .iter()
                .zip(&c.weights)
                .fold(c.bias, |acc, (&n, wt)| acc + wt * f64::from(z.at(n, i, j)));
            values.push(sigmoid(logit));
        }
    }
    Ok(ConfidenceMap(Grid::from_vec(h, w, values)))
}

/// Corner-aligned bilinear resampling.
///
/// Output pixel `(y, x)` samples the source at
/// `(y · (H − 1) / (out_h − 1), x · (W − 1) / (out_w − 1))`, or at 0 along an
/// axis whose output length is 1, so the four corners of input and output
/// coincide. The value is the usual bilinear blend of the four surrounding
/// cells, clamped at the last row/column.
pub fn upsample_bilinear(src: &Grid, out_h: usize, out_w: usize) -> Grid {
    let coord = |k: usize, n_out: usize, n_in: usize| -> (usize, usize, f64) {
        if n_out <= 1 || n_in <= 1 {
            return (0, 0, 0.0);
        }
        let s = k as f64 * (n_in - 1) as f64 / (n_out - 1) as f64;
        let lo = (s.floor() as usize).min(n_in - 1);
        let hi = (lo + 1).min(n_in - 1);
        (lo, hi, s - lo as f64)
    };
    let xs: Vec<_> = (0..out_w).map(|x| coord(x, out_w, src.width)).collect();
    let mut values = Vec::with_capacity(out_h * out_w);
    for y in 0..out_h {
        let (y0, y1, fy) = coord(y, out_h, src.height);
        for &(x0, x1, fx) in &xs {
            let top = (1.0 - fx) * src.at(y0, x0) + fx * src.at(y0, x1);
            let bottom = (1.0 - fx) * src.at(y1, x0) + fx * src.at(y1, x1);
            values.push((1.0 - fy) * top + fy * bottom);
        }
    }
    Grid::from_vec(out_h, out_w, values)
}

/// Labels 4-connected foreground components; returns the pixels of the
/// largest one (earliest in raster order on ties).
pub fn largest_component(mask: &Mask) -> Vec<(usize, usize)> {
    let (h, w) = (mask.height, mask.width);
    let mut seen = vec![false; h * w];
    let mut best: Vec<(usize, usize)> = Vec::new();
    let mut queue = VecDeque::new();
    for i in 0..h {
        for j in 0..w {
            if !mask.get(i, j) || seen[i * w + j] {
                continue;
            }
            let mut comp = Vec::new();
            seen[i * w + j] = true;
            queue.push_back((i, j));
            while let Some((y, x)) = queue.pop_front() {
                comp.push((y, x));
                let mut visit = |ny: usize, nx: usize| {
                    if mask.get(ny, nx) && !seen[ny * w + nx] {
                        seen[ny * w + nx] = true;
                        queue.push_back((ny, nx));
                    }
                };
                if y > 0 {
                    visit(y - 1, x);
                }
                if y + 1 < h {
                    visit(y + 1, x);
                }
                if x > 0 {
                    visit(y, x - 1);
                }
                if x + 1 < w {
                    visit(y, x + 1);
                }
            }
            if comp.len() > best.len() {
                best = comp;
            }
        }
    }
    best
}

/// Upsamples to `image_size = (height, width)`, binarizes at
/// `value ≥ mask_threshold`, and boxes the largest component.
///
/// Returns the full binarized mask together with the box.
pub fn heatmap_to_box(
    map: &ConfidenceMap,
    image_size: (usize, usize),
    mask_threshold: f64,
) -> Result<(Mask, BoundingBox)> {
    let (h, w) = image_size;
    let up = upsample_bilinear(map.grid(), h, w);
    let mask = Mask::from_fn(h, w, |i, j| up.at(i, j) >= mask_threshold);
    let comp = largest_component(&mask);
    if comp.is_empty() {
        return Err(Error::NoForeground);
    }
    let (mut y0, mut x0, mut y1, mut x1) = (usize::MAX, usize::MAX, 0, 0);
    for &(y, x) in &comp {
        y0 = y0.min(y);
        x0 = x0.min(x);
        y1 = y1.max(y + 1);
        x1 = x1.max(x + 1);
    }
    Ok((mask, BoundingBox { x0, y0, x1, y1 }))
}

pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let ix = a.x1.min(b.x1).saturating_sub(a.x0.max(b.x0));
    let iy = a.y1.min(b.y1).saturating_sub(a.y0.max(b.y0));
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    inter as f64 / union as f64
}

fn check_same_size(a: &Mask, b: &Mask) -> Result<()> {
    if (a.height, a.width) != (b.height, b.width) {
        return Err(Error::ShapeMismatch(format!(
            "mask sizes differ: {}x{} vs {}x{}",
            a.height, a.width, b.height, b.width
        )));
    }
    Ok(())
}

fn overlap(a: &Mask, b: &Mask) -> (usize, usize) {
    a.bits()
        .iter()
        .zip(b.bits())
        .fold((0, 0), |(inter, union), (&x, &y)| {
            (inter + usize::from(x && y), union + usize::from(x || y))
        })
}

/// `|pred ∩ gt| / |gt|`.
pub fn pointing_game(pred: &Mask, gt: &Mask) -> Result<f64> {
    check_same_size(pred, gt)?;
    let area = gt.count();
    if area == 0 {
        return Err(Error::EmptyGroundTruth);
    }
    Ok(overlap(pred, gt).0 as f64 / area as f64)
}

/// `|pred ∩ gt| / |pred ∪ gt|`.
pub fn mask_iou(pred: &Mask, gt: &Mask) -> Result<f64> {
    check_same_size(pred, gt)?;
    let (inter, union) = overlap(pred, gt);
    if union == 0 {
        return Err(Error::BothEmpty);
    }
    Ok(inter as f64 / union as f64)
}

/// Fraction of images whose predicted box has IoU above 0.5 with the ground
/// truth. A missing prediction is a miss; an empty list scores 0.
pub fn localization_accuracy(results: &[(Option<BoundingBox>, BoundingBox)]) -> f64 {
    if results.is_empty() {
        return 0.0;
    }
    let hits = results
        .iter()
        .filter(|(pred, gt)| pred.is_some_and(|p| iou(&p, gt) > IOU_HIT_THRESHOLD))
        .count();
    hits as f64 / results.len() as f64
}

/// Ground truth of one image.
#[derive(Debug, Clone)]
pub struct ImageTruth {
    pub sample_id: String,
    pub image_size: (usize, usize),
    pub gt_box: BoundingBox,
    pub gt_mask: Option<Mask>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageResult {
    pub sample_id: String,
    pub pred_box: Option<BoundingBox>,
    pub gt_box: BoundingBox,
    pub iou: f64,
    pub pointing: Option<f64>,
    pub mask_iou: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub localization_accuracy: f64,
    pub mean_iou: f64,
    pub mean_pointing: Option<f64>,
    pub mean_mask_iou: Option<f64>,
    pub images: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationReport {
    pub concept: String,
    pub selection: String,
    pub neurons: Vec<usize>,
    pub mask_threshold: f64,
    pub images: Vec<ImageResult>,
    pub aggregate: Aggregate,
}

/// Localizes one image with classifier `c`.
pub fn evaluate_image(
    c: &ConceptClassifier,
    z: &FeatureMap,
    truth: &ImageTruth,
    mask_threshold: f64,
) -> Result<ImageResult> {
    let heat = concept_heatmap(c, z)?;
    let (pred_mask, pred_box) = match heatmap_to_box(&heat, truth.image_size, mask_threshold) {
        Ok((m, b)) => (Some(m), Some(b)),
        Err(Error::NoForeground) => (None, None),
        Err(e) => return Err(e),
    };
    let iou_value = pred_box.map_or(0.0, |b| iou(&b, &truth.gt_box));
    let (pointing, miou) = match &truth.gt_mask {
        Some(gt) => {
            let pred = pred_mask.unwrap_or_else(|| Mask::new(gt.height, gt.width));
            (Some(pointing_game(&pred, gt)?), mask_iou(&pred, gt).ok())
        }
        None => (None, None),
    };
    Ok(ImageResult {
        sample_id: truth.sample_id.clone(),
        pred_box,
        gt_box: truth.gt_box,
        iou: iou_value,
        pointing,
        mask_iou: miou,
    })
}

pub fn aggregate(images: &[ImageResult]) -> Aggregate {
    let pairs: Vec<_> = images.iter().map(|r| (r.pred_box, r.gt_box)).collect();
    let mean = |vals: Vec<f64>| -> Option<f64> {
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    };
    Aggregate {
        localization_accuracy: localization_accuracy(&pairs),
        mean_iou: mean(images.iter().map(|r| r.iou).collect()).unwrap_or(0.0),
        mean_pointing: mean(images.iter().filter_map(|r| r.pointing).collect()),
        mean_mask_iou: mean(images.iter().filter_map(|r| r.mask_iou).collect()),
        images: images.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(h: usize, w: usize, f: impl Fn(usize, usize) -> f64) -> ConfidenceMap {
        let mut v = Vec::new();
        for i in 0..h {
            for j in 0..w {
                v.push(f(i, j));
            }
        }
        ConfidenceMap(Grid::from_vec(h, w, v))
    }

    fn bx(x0: usize, y0: usize, x1: usize, y1: usize) -> BoundingBox {
        BoundingBox::new(x0, y0, x1, y1).unwrap()
    }

    #[test]
    fn iou_examples() {
        let a = bx(0, 0, 10, 10);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &bx(10, 0, 20, 10)), 0.0);
        assert!((iou(&a, &bx(5, 0, 15, 10)) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn mask_metrics() {
        let gt = Mask::from_fn(4, 4, |i, _| i < 2);
        assert_eq!(pointing_game(&gt, &gt).unwrap(), 1.0);
        assert_eq!(mask_iou(&gt, &gt).unwrap(), 1.0);
        let other = Mask::from_fn(4, 4, |i, _| i >= 2);
        assert_eq!(pointing_game(&other, &gt).unwrap(), 0.0);
        assert_eq!(mask_iou(&other, &gt).unwrap(), 0.0);
        let half = Mask::from_fn(4, 4, |i, _| i == 0);
        assert_eq!(pointing_game(&half, &gt).unwrap(), 0.5);
        let double = Mask::from_fn(4, 4, |_, _| true);
        let quarter = Mask::from_fn(4, 4, |i, j| i < 2 && j < 4 && (i * 4 + j) < 8);
        assert_eq!(mask_iou(&double, &quarter).unwrap(), 0.5);
        let empty = Mask::new(4, 4);
        assert!(matches!(pointing_game(&gt, &empty), Err(Error::EmptyGroundTruth)));
        assert!(matches!(mask_iou(&empty, &empty), Err(Error::BothEmpty)));
        assert!(matches!(mask_iou(&gt, &Mask::new(3, 4)), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn accuracy_counts_misses() {
        let g = bx(0, 0, 4, 4);
        assert_eq!(localization_accuracy(&[(Some(g), g), (Some(g), g)]), 1.0);
        let far = bx(10, 10, 12, 12);
        let results = [(Some(g), g), (Some(g), g), (Some(g), g), (None, g)];
        assert_eq!(localization_accuracy(&results), 0.75);
        assert_eq!(localization_accuracy(&[(Some(far), g)]), 0.0);
    }

    #[test]
    fn iou_of_exactly_half_is_a_miss() {
        // 10×10 gt, prediction 10×5 inside it: 50 / 100.
        let gt = bx(0, 0, 10, 10);
        let pred = bx(0, 0, 10, 5);
        assert_eq!(iou(&pred, &gt), 0.5);
        assert_eq!(localization_accuracy(&[(Some(pred), gt)]), 0.0);
    }

    #[test]
    fn upsample_corners_align() {
        let src = Grid::from_vec(2, 2, vec![0.0, 1.0, 2.0, 3.0]);
        let up = upsample_bilinear(&src, 3, 3);
        assert_eq!(up.values, vec![0.0, 0.5, 1.0, 1.0, 1.5, 2.0, 2.0, 2.5, 3.0]);
        let same = upsample_bilinear(&src, 2, 2);
        assert_eq!(same, src);
        let one = upsample_bilinear(&Grid::from_vec(1, 1, vec![0.7]), 4, 5);
        assert!(one.values.iter().all(|&v| v == 0.7));
    }

    #[test]
    fn blob_gets_tight_box() {
        // Image equals grid size, so upsampling is the identity.
        let m = grid(10, 12, |i, j| if (2..5).contains(&i) && (3..9).contains(&j) { 1.0 } else { 0.0 });
        let (mask, b) = heatmap_to_box(&m, (10, 12), 0.5).unwrap();
        assert_eq!(b, bx(3, 2, 9, 5));
        assert_eq!(mask.count(), 18);
    }

    #[test]
    fn largest_component_wins() {
        // 30-pixel block and a 5-pixel strip.
        let m = grid(12, 12, |i, j| {
            let big = (1..7).contains(&i) && (1..6).contains(&j);
            let small = i == 10 && (2..7).contains(&j);
            if big || small { 1.0 } else { 0.0 }
        });
        let (_, b) = heatmap_to_box(&m, (12, 12), 0.5).unwrap();
        assert_eq!(b, bx(1, 1, 6, 7));
    }

    #[test]
    fn all_zero_has_no_foreground() {
        let m = grid(4, 4, |_, _| 0.0);
        assert!(matches!(heatmap_to_box(&m, (16, 16), 0.5), Err(Error::NoForeground)));
    }

    #[test]
    fn heatmap_of_zero_weights() {
        let c = ConceptClassifier {
            concept_id: "x".into(),
            neuron_set: vec![1],
            weights: vec![0.0],
            bias: 0.0,
        };
        let z = FeatureMap::new(2, 2, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]).unwrap();
        let h = concept_heatmap(&c, &z).unwrap();
        assert!(h.grid().values.iter().all(|&v| v == 0.5));

        let wide = ConceptClassifier {
            neuron_set: vec![2],
            ..c
        };
        assert!(matches!(concept_heatmap(&wide, &z), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn constant_features_give_constant_map() {
        let c = ConceptClassifier {
            concept_id: "x".into(),
            neuron_set: vec![0, 1],
            weights: vec![0.3, -1.2],
            bias: 0.1,
        };
        let z = FeatureMap::new(2, 3, 3, vec![0.7; 18]).unwrap();
        let h = concept_heatmap(&c, &z).unwrap();
        let first = h.grid().values[0];
        assert!(h.grid().values.iter().all(|&v| v == first));
    }
}
