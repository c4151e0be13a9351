//! Per-concept logistic classifiers `L_e(r) = σ(αᵀr + b)`.
//!
//! Training is full-batch gradient descent on the L2-regularized mean
//! cross-entropy. Columns are standardized internally and the fitted
//! weights are mapped back to raw activation space, so `predict` works on
//! raw activations. A zero-variance column always receives a zero weight.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::region::{Provenance, RegionDataset};
use crate::seed::{fnv1a, splitmix64, SeedKey};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub l2_penalty: f64,
    pub convergence_tol: f64,
    pub class_balance: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            max_epochs: 500,
            l2_penalty: 1e-4,
            convergence_tol: 1e-7,
            class_balance: true,
            seed: 0,
        }
    }
}

/// Maximum negatives kept per positive when `class_balance` is set.
pub const MAX_NEGATIVE_RATIO: usize = 5;

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.convergence_tol.is_nan() || self.convergence_tol <= 0.0 {
            return Err(Error::Config(format!(
                "convergence_tol must be positive, got {}",
                self.convergence_tol
            )));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be at least 1".into()));
        }
        if self.l2_penalty.is_nan() || self.l2_penalty < 0.0 {
            return Err(Error::Config(format!(
                "l2_penalty must be nonnegative, got {}",
                self.l2_penalty
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConceptClassifier {
    pub concept_id: String,
    pub neuron_set: Vec<usize>,
    pub weights: Vec<f64>,
    pub bias: f64,
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
#[inline]
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

impl ConceptClassifier {
    pub fn logit(&self, r: &[f32]) -> Result<f64> {
        if r.len() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.len(),
                got: r.len(),
            });
        }
        Ok(self.logit_unchecked(r))
    }

    #[inline]
    pub(crate) fn logit_unchecked(&self, r: &[f32]) -> f64 {
        self.weights
            .iter()
            .zip(r)
            .fold(self.bias, |acc, (w, &x)| acc + w * f64::from(x))
    }

    /// Confidence that `r` belongs to the concept.
    pub fn predict(&self, r: &[f32]) -> Result<f64> {
        self.logit(r).map(sigmoid)
    }

    pub fn to_json(&self) -> String {
        fn num(out: &mut String, v: f64) {
            write!(out, "{v:.16e}").unwrap();
        }
        let mut out = String::from("{\"concept_id\":");
        out.push_str(&serde_json::to_string(&self.concept_id).unwrap());
        out.push_str(",\"neuron_set\":");
        out.push_str(&serde_json::to_string(&self.neuron_set).unwrap());
        out.push_str(",\"bias\":");
        num(&mut out, self.bias);
        out.push_str(",\"weights\":[");
        for (k, &w) in self.weights.iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            num(&mut out, w);
        }
        out.push_str("]}");
        out
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Raw {
            concept_id: String,
            neuron_set: Vec<usize>,
            bias: f64,
            weights: Vec<f64>,
        }
        let raw: Raw = serde_json::from_str(text)?;
        if raw.neuron_set.len() != raw.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: raw.neuron_set.len(),
                got: raw.weights.len(),
            });
        }
        Ok(ConceptClassifier {
            concept_id: raw.concept_id,
            neuron_set: raw.neuron_set,
            weights: raw.weights,
            bias: raw.bias,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Mean binary cross-entropy plus `l2/2 · ‖w‖²`, with its gradient.
///
/// `x` is row-major `n × d`; labels are 0 or 1. Returns
/// `(loss, ∂loss/∂w, ∂loss/∂b)`.
pub fn loss_and_gradient(
    weights: &[f64],
    bias: f64,
    x: &[f64],
    y: &[f64],
    l2: f64,
) -> (f64, Vec<f64>, f64) {
    let d = weights.len();
    let n = y.len();
    debug_assert_eq!(x.len(), n * d);
    let mut loss = 0.0;
    let mut grad = vec![0.0; d];
    let mut grad_b = 0.0;
    for (row, &label) in x.chunks_exact(d).zip(y) {
        let z = row.iter().zip(weights).fold(bias, |acc, (a, w)| acc + a * w);
        loss += softplus(z) - label * z;
        let err = sigmoid(z) - label;
        for (g, a) in grad.iter_mut().zip(row) {
            *g += err * a;
        }
        grad_b += err;
    }
    let inv = 1.0 / n as f64;
    loss *= inv;
    grad_b *= inv;
    let mut sq = 0.0;
    for (g, w) in grad.iter_mut().zip(weights) {
        *g = *g * inv + l2 * w;
        sq += w * w;
    }
    loss += 0.5 * l2 * sq;
    (loss, grad, grad_b)
}

/// Whether a provenance falls in the 20% held-out evaluation split.
pub fn is_held_out(p: &Provenance) -> bool {
    let h = splitmix64(fnv1a(p.sample_id.as_bytes()) ^ splitmix64(p.i as u64) ^ splitmix64((p.j as u64) << 32 | 0x5a5a));
    h.is_multiple_of(5)
}

/// Row indices used to fit one concept classifier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingSet {
    pub positives: Vec<usize>,
    pub negatives: Vec<usize>,
}

/// Selects the training rows for `concept`: the 80% split of positives and
/// negatives, with negatives downsampled to at most
/// [`MAX_NEGATIVE_RATIO`]× positives when class balancing is on.
///
/// A class whose rows all land in the held-out split is trained on in full.
pub fn training_rows(regions: &RegionDataset, concept: &str, cfg: &TrainConfig) -> Result<TrainingSet> {
    let (pos, neg) = regions.training_split(concept);
    if pos.is_empty() {
        return Err(Error::EmptyPositives(concept.to_string()));
    }
    if neg.is_empty() {
        return Err(Error::EmptyNegatives(concept.to_string()));
    }
    let keep_train = |rows: Vec<usize>| {
        let train: Vec<usize> = rows
            .iter()
            .copied()
            .filter(|&r| !is_held_out(regions.provenance(r)))
            .collect();
        if train.is_empty() {
            rows
        } else {
            train
        }
    };
    let positives = keep_train(pos);
    let mut negatives = keep_train(neg);
    let cap = positives.len().saturating_mul(MAX_NEGATIVE_RATIO);
    if cfg.class_balance && negatives.len() > cap {
        let mut rng = SeedKey::new(cfg.seed).with_str("balance").with_str(concept).rng();
        let mut picked: Vec<usize> = index::sample(&mut rng, negatives.len(), cap)
            .into_iter()
            .map(|k| negatives[k])
            .collect();
        picked.sort_unstable();
        negatives = picked;
    }
    Ok(TrainingSet {
        positives,
        negatives,
    })
}

/// Held-out positives and negatives for `concept`.
pub fn evaluation_rows(regions: &RegionDataset, concept: &str) -> (Vec<usize>, Vec<usize>) {
    let (pos, neg) = regions.training_split(concept);
    let held = |rows: Vec<usize>| -> Vec<usize> {
        rows.into_iter()
            .filter(|&r| is_held_out(regions.provenance(r)))
            .collect()
    };
    (held(pos), held(neg))
}

/// Trains `L_e` on `regions` for concept `concept`.
pub fn train(regions: &RegionDataset, concept: &str, cfg: &TrainConfig) -> Result<ConceptClassifier> {
    cfg.validate()?;
    let set = training_rows(regions, concept, cfg)?;
    fit(regions, &set, concept, cfg)
}

/// Fits a classifier on explicit rows of `regions`.
pub fn fit(
    regions: &RegionDataset,
    set: &TrainingSet,
    concept: &str,
    cfg: &TrainConfig,
) -> Result<ConceptClassifier> {
    if set.positives.is_empty() {
        return Err(Error::EmptyPositives(concept.to_string()));
    }
    if set.negatives.is_empty() {
        return Err(Error::EmptyNegatives(concept.to_string()));
    }
    let d = regions.dim();
    let mut x = Vec::with_capacity((set.positives.len() + set.negatives.len()) * d);
    for &r in set.positives.iter().chain(&set.negatives) {
        x.extend(regions.row(r).iter().map(|&v| f64::from(v)));
    }
    fit_dense(
        &x,
        set.positives.len(),
        set.negatives.len(),
        regions.neurons(),
        concept,
        cfg,
    )
}

/// Fits on a dense row-major matrix whose first `n_pos` rows are positives
/// and the next `n_neg` rows negatives.
pub fn fit_dense(
    raw: &[f64],
    n_pos: usize,
    n_neg: usize,
    neurons: &[usize],
    concept: &str,
    cfg: &TrainConfig,
) -> Result<ConceptClassifier> {
    if n_pos == 0 {
        return Err(Error::EmptyPositives(concept.to_string()));
    }
    if n_neg == 0 {
        return Err(Error::EmptyNegatives(concept.to_string()));
    }
    let d = neurons.len();
    let n = n_pos + n_neg;
    if raw.len() != n * d {
        return Err(Error::DimensionMismatch {
            expected: n * d,
            got: raw.len(),
        });
    }
    let y: Vec<f64> = std::iter::repeat_n(1.0, n_pos)
        .chain(std::iter::repeat_n(0.0, n_neg))
        .collect();

    let mut mean = vec![0.0; d];
    for row in raw.chunks_exact(d) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut scale = vec![0.0; d];
    for row in raw.chunks_exact(d) {
        for ((s, v), m) in scale.iter_mut().zip(row).zip(&mean) {
            *s += (v - m).powi(2);
        }
    }
    for s in scale.iter_mut() {
        let sd = (*s / n as f64).sqrt();
        *s = if sd > 1e-12 { sd } else { 0.0 };
    }

    let mut x = Vec::with_capacity(n * d);
    for row in raw.chunks_exact(d) {
        for ((v, m), s) in row.iter().zip(&mean).zip(&scale) {
            x.push(if *s > 0.0 { (v - m) / s } else { 0.0 });
        }
    }

    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut prev = f64::INFINITY;
    for epoch in 0..cfg.max_epochs {
        let (loss, gw, gb) = loss_and_gradient(&w, b, &x, &y, cfg.l2_penalty);
        if !loss.is_finite() {
            return Err(Error::Diverged {
                concept: concept.to_string(),
                epoch,
            });
        }
        if prev - loss < cfg.convergence_tol {
            break;
        }
        prev = loss;
        for (wi, g) in w.iter_mut().zip(&gw) {
            *wi -= cfg.learning_rate * g;
        }
        b -= cfg.learning_rate * gb;
    }

    let mut bias = b;
    let weights: Vec<f64> = w
        .iter()
        .zip(&mean)
        .zip(&scale)
        .map(|((wi, m), s)| {
            if *s > 0.0 {
                bias -= wi * m / s;
                wi / s
            } else {
                0.0
            }
        })
        .collect();
    if !bias.is_finite() || weights.iter().any(|v| !v.is_finite()) {
        return Err(Error::Diverged {
            concept: concept.to_string(),
            epoch: cfg.max_epochs,
        });
    }
    Ok(ConceptClassifier {
        concept_id: concept.to_string(),
        neuron_set: neurons.to_vec(),
        weights,
        bias,
    })
}

/// Binary confusion counts at the 0.5 decision threshold.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    /// F1 of the positive class; 0 when there are no true positives.
    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if self.tp == 0 {
            0.0
        } else {
            2.0 * self.tp as f64 / denom as f64
        }
    }
}

pub const DECISION_THRESHOLD: f64 = 0.5;

pub fn confusion(
    c: &ConceptClassifier,
    regions: &RegionDataset,
    positives: &[usize],
    negatives: &[usize],
) -> Result<Confusion> {
    if c.weights.len() != regions.dim() {
        return Err(Error::DimensionMismatch {
            expected: c.weights.len(),
            got: regions.dim(),
        });
    }
    let mut out = Confusion::default();
    for &r in positives {
        if sigmoid(c.logit_unchecked(regions.row(r))) >= DECISION_THRESHOLD {
            out.tp += 1;
        } else {
            out.fn_ += 1;
        }
    }
    for &r in negatives {
        if sigmoid(c.logit_unchecked(regions.row(r))) >= DECISION_THRESHOLD {
            out.fp += 1;
        } else {
            out.tn += 1;
        }
    }
    Ok(out)
}

/// Held-out F1 of `c` on concept `concept`.
pub fn evaluate_f1(c: &ConceptClassifier, regions: &RegionDataset, concept: &str) -> Result<f64> {
    let (pos, neg) = evaluation_rows(regions, concept);
    if pos.is_empty() && neg.is_empty() {
        return Err(Error::EmptyEvaluationSet(concept.to_string()));
    }
    confusion(c, regions, &pos, &neg).map(|m| m.f1())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn predict_examples() {
        let c = ConceptClassifier {
            concept_id: "x".into(),
            neuron_set: vec![0, 1],
            weights: vec![0.0, 0.0],
            bias: 0.0,
        };
        assert_eq!(c.predict(&[3.0, -8.0]).unwrap(), 0.5);
        assert!(matches!(
            c.predict(&[1.0]),
            Err(Error::DimensionMismatch { expected: 2, got: 1 })
        ));

        let c = ConceptClassifier {
            concept_id: "x".into(),
            neuron_set: vec![0],
            weights: vec![1.0],
            bias: 0.0,
        };
        let p = c.predict(&[3f32.ln()]).unwrap();
        assert!((p - 0.75).abs() < 1e-7, "{p}");
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(1000.0), 1.0);
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert!((softplus(-1000.0)).abs() < 1e-300);
        assert_eq!(softplus(1000.0), 1000.0);
    }

    #[test]
    fn f1_conventions() {
        let all_negative = Confusion {
            tp: 0,
            fp: 0,
            fn_: 4,
            tn: 9,
        };
        assert_eq!(all_negative.f1(), 0.0);
        let perfect = Confusion {
            tp: 3,
            fp: 0,
            fn_: 0,
            tn: 1,
        };
        assert_eq!(perfect.f1(), 1.0);
    }

    #[test]
    fn json_keeps_float64() {
        let c = ConceptClassifier {
            concept_id: "mam\"mal".into(),
            neuron_set: vec![3, 7],
            weights: vec![0.1 + 0.2, -1e-300],
            bias: std::f64::consts::PI,
        };
        let text = c.to_json();
        assert!(text.contains("3.1415926535897931e0"), "{text}");
        assert_eq!(ConceptClassifier::from_json(&text).unwrap(), c);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            convergence_tol: 0.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
