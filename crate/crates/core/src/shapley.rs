//! Monte-Carlo Shapley contribution scores of neurons to concepts.
//!
//! The value of a coalition `K ⊆ D` for concept `e` is the prediction vector,
//! over the evaluation pool, of `L_e` re-trained on data where every neuron
//! outside `K` has its column permuted across rows. Each neuron owns one
//! fixed permutation per concept, so the `⟨S ∪ d⟩` and `⟨S⟩` retrains of an
//! iteration share the randomization of every neuron they both randomize and
//! the game is a deterministic function of `K`.
//!
//! The score of neuron `d` is
//!
//! ```text
//! φ = Σ_r | Σ_i ( L^{⟨S_i ∪ d⟩}(r) − L^{⟨S_i⟩}(r) ) | / (M · |pool|)
//! ```
//!
//! with `S_i` the predecessors of `d` in a uniformly random ordering of `D`.
//! The signed variant drops the absolute value.

use std::collections::HashMap;
use std::sync::Arc;

use rand::seq::{index, SliceRandom};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{fit_dense, training_rows, sigmoid, TrainConfig, TrainingSet};
use crate::error::{Error, Result};
use crate::hierarchy::ConceptHierarchy;
use crate::region::RegionDataset;
use crate::seed::SeedKey;

/// Largest neuron count accepted by [`exact_shapley`].
pub const EXACT_MAX_NEURONS: usize = 12;

/// Memoized coalition values per cell are capped at this many `f64`s.
const CACHE_BUDGET: usize = 1 << 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvaluationPool {
    All,
    SubsampleK(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapleyConfig {
    pub mc_iterations: usize,
    pub master_seed: u64,
    pub retrain: TrainConfig,
    pub evaluation_pool: EvaluationPool,
}

/// `max_epochs` used by retrains inside the estimator.
pub const DEFAULT_RETRAIN_EPOCHS: usize = 100;

impl Default for ShapleyConfig {
    fn default() -> Self {
        ShapleyConfig {
            mc_iterations: 2000,
            master_seed: 0,
            retrain: TrainConfig {
                max_epochs: DEFAULT_RETRAIN_EPOCHS,
                ..TrainConfig::default()
            },
            evaluation_pool: EvaluationPool::SubsampleK(4096),
        }
    }
}

impl ShapleyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mc_iterations == 0 {
            return Err(Error::Config("mc_iterations must be at least 1".into()));
        }
        if let EvaluationPool::SubsampleK(0) = self.evaluation_pool {
            return Err(Error::Config("evaluation pool subsample must be positive".into()));
        }
        self.retrain.validate()
    }
}

/// Score of one neuron for one concept: the absolute-aggregated value and
/// the signed accumulator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapleyValue {
    pub score: f64,
    pub signed: f64,
}

/// Seeded permutation of `0..n` owned by one neuron.
pub fn neuron_permutation(seed: u64, neuron: usize, n: usize) -> Vec<u32> {
    let mut perm: Vec<u32> = (0..n as u32).collect();
    let mut rng = SeedKey::new(seed).with(neuron as u64).rng();
    perm.shuffle(&mut rng);
    perm
}

/// Returns a copy of `regions` in which every neuron not in `keep` has its
/// column permuted across all rows; row `r` takes the value of row `π_j(r)`.
pub fn randomize_coalition(regions: &RegionDataset, keep: &[usize], seed: u64) -> RegionDataset {
    let mut out = regions.clone();
    let n = regions.len();
    let d = regions.dim();
    for (col, &neuron) in regions.neurons().iter().enumerate() {
        if keep.contains(&neuron) {
            continue;
        }
        let perm = neuron_permutation(seed, neuron, n);
        let src = regions.values();
        let dst = out.values_mut();
        for (r, &p) in perm.iter().enumerate() {
            dst[r * d + col] = src[p as usize * d + col];
        }
    }
    out
}

/// Seed of the column permutations for concept `concept`.
pub fn randomization_seed(master_seed: u64, concept: &str) -> u64 {
    SeedKey::new(master_seed)
        .with_str("randomize")
        .with_str(concept)
        .finish()
}

/// Rows of the evaluation pool for `concept`.
pub fn evaluation_pool(regions: &RegionDataset, concept: &str, cfg: &ShapleyConfig) -> Vec<usize> {
    let n = regions.len();
    match cfg.evaluation_pool {
        EvaluationPool::SubsampleK(k) if k < n => {
            let mut rng = SeedKey::new(cfg.master_seed)
                .with_str("pool")
                .with_str(concept)
                .rng();
            let mut rows = index::sample(&mut rng, n, k).into_vec();
            rows.sort_unstable();
            rows
        }
        _ => regions.pool(),
    }
}

/// Coalition key as a bitset over neuron positions.
type Coalition = Vec<u64>;

fn coalition(members: impl IntoIterator<Item = usize>, d: usize) -> Coalition {
    let mut bits = vec![0u64; d.div_ceil(64).max(1)];
    for m in members {
        bits[m / 64] |= 1 << (m % 64);
    }
    bits
}

#[inline]
fn has(c: &Coalition, pos: usize) -> bool {
    c[pos / 64] >> (pos % 64) & 1 == 1
}

/// The coalition game of one concept.
pub struct CoalitionGame<'a> {
    regions: &'a RegionDataset,
    concept: String,
    training: TrainingSet,
    /// `sources[col][t]`: row whose value training row `t` takes when `col`
    /// is randomized.
    sources: Vec<Vec<u32>>,
    pool: Vec<usize>,
    retrain: TrainConfig,
}

impl<'a> CoalitionGame<'a> {
    pub fn new(regions: &'a RegionDataset, concept: &str, cfg: &ShapleyConfig) -> Result<Self> {
        cfg.validate()?;
        let training = training_rows(regions, concept, &cfg.retrain)?;
        let seed = randomization_seed(cfg.master_seed, concept);
        let n = regions.len();
        let rows: Vec<usize> = training
            .positives
            .iter()
            .chain(&training.negatives)
            .copied()
            .collect();
        let sources = regions
            .neurons()
            .iter()
            .map(|&neuron| {
                let perm = neuron_permutation(seed, neuron, n);
                rows.iter().map(|&r| perm[r]).collect()
            })
            .collect();
        Ok(CoalitionGame {
            regions,
            concept: concept.to_string(),
            training,
            sources,
            pool: evaluation_pool(regions, concept, cfg),
            retrain: cfg.retrain.clone(),
        })
    }

    pub fn pool(&self) -> &[usize] {
        &self.pool
    }

    pub fn dim(&self) -> usize {
        self.regions.dim()
    }

    /// Predictions over the pool of the classifier re-trained with only the
    /// neuron positions in `keep` left intact.
    fn value(&self, keep: &Coalition) -> Result<Vec<f64>> {
        let d = self.dim();
        let rows = self.training.positives.iter().chain(&self.training.negatives);
        let mut x = Vec::with_capacity(self.sources.first().map_or(0, Vec::len) * d);
        for (t, &r) in rows.enumerate() {
            for col in 0..d {
                let src = if has(keep, col) {
                    r
                } else {
                    self.sources[col][t] as usize
                };
                x.push(f64::from(self.regions.row(src)[col]));
            }
        }
        let clf = fit_dense(
            &x,
            self.training.positives.len(),
            self.training.negatives.len(),
            self.regions.neurons(),
            &self.concept,
            &self.retrain,
        )?;
        Ok(self
            .pool
            .iter()
            .map(|&r| sigmoid(clf.logit_unchecked(self.regions.row(r))))
            .collect())
    }

    /// Value of the coalition given as neuron positions.
    pub fn value_of(&self, positions: &[usize]) -> Result<Vec<f64>> {
        self.value(&coalition(positions.iter().copied(), self.dim()))
    }
}

/// Per-task memo of coalition values.
struct ValueCache<'g, 'a> {
    game: &'g CoalitionGame<'a>,
    map: HashMap<Coalition, Arc<Vec<f64>>>,
    capacity: usize,
}

impl<'g, 'a> ValueCache<'g, 'a> {
    fn new(game: &'g CoalitionGame<'a>) -> Self {
        ValueCache {
            game,
            map: HashMap::new(),
            capacity: CACHE_BUDGET / game.pool.len().max(1),
        }
    }

    fn get(&mut self, key: Coalition) -> Result<Arc<Vec<f64>>> {
        if let Some(v) = self.map.get(&key) {
            return Ok(Arc::clone(v));
        }
        let v = Arc::new(self.game.value(&key)?);
        if self.map.len() < self.capacity {
            self.map.insert(key, Arc::clone(&v));
        }
        Ok(v)
    }
}

fn finish(acc: &[f64], normalizer: f64) -> ShapleyValue {
    ShapleyValue {
        score: acc.iter().map(|a| a.abs()).sum::<f64>() / normalizer,
        signed: acc.iter().sum::<f64>() / normalizer,
    }
}

/// Monte-Carlo estimate for the neuron at position `pos` of `game`.
pub fn shapley_in_game(game: &CoalitionGame<'_>, pos: usize, cfg: &ShapleyConfig) -> Result<ShapleyValue> {
    let d = game.dim();
    let neuron = game.regions.neurons()[pos];
    let mut cache = ValueCache::new(game);
    let mut acc = vec![0.0; game.pool.len()];
    let mut order: Vec<usize> = (0..d).collect();
    for i in 0..cfg.mc_iterations {
        let mut rng = SeedKey::new(cfg.master_seed)
            .with_str("coalition")
            .with(neuron as u64)
            .with_str(&game.concept)
            .with(i as u64)
            .rng();
        order.iter_mut().enumerate().for_each(|(k, o)| *o = k);
        order.shuffle(&mut rng);
        let cut = order.iter().position(|&p| p == pos).expect("pos in order");
        let without = coalition(order[..cut].iter().copied(), d);
        let mut with = without.clone();
        with[pos / 64] |= 1 << (pos % 64);
        let a = cache.get(with)?;
        let b = cache.get(without)?;
        for ((s, x), y) in acc.iter_mut().zip(a.iter()).zip(b.iter()) {
            *s += x - y;
        }
    }
    Ok(finish(&acc, (cfg.mc_iterations * game.pool.len()) as f64))
}

fn position_of(regions: &RegionDataset, neuron: usize) -> Result<usize> {
    regions
        .neurons()
        .binary_search(&neuron)
        .map_err(|_| Error::Config(format!("neuron {neuron} not in the region dataset")))
}

/// Monte-Carlo Shapley score of `neuron` (channel id) for `concept`.
pub fn shapley_score(
    neuron: usize,
    concept: &str,
    regions: &RegionDataset,
    cfg: &ShapleyConfig,
) -> Result<ShapleyValue> {
    let pos = position_of(regions, neuron)?;
    let game = CoalitionGame::new(regions, concept, cfg)?;
    shapley_in_game(&game, pos, cfg)
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Exact Shapley values of every neuron by enumerating all coalitions.
pub fn exact_shapley_all(
    concept: &str,
    regions: &RegionDataset,
    cfg: &ShapleyConfig,
) -> Result<Vec<ShapleyValue>> {
    let d = regions.dim();
    if d > EXACT_MAX_NEURONS {
        return Err(Error::TooManyNeurons {
            max: EXACT_MAX_NEURONS,
            got: d,
        });
    }
    let game = CoalitionGame::new(regions, concept, cfg)?;
    let values: Vec<Vec<f64>> = (0..1usize << d)
        .map(|mask| game.value(&vec![mask as u64]))
        .collect::<Result<_>>()?;
    let weight: Vec<f64> = (0..d)
        .map(|s| factorial(s) * factorial(d - s - 1) / factorial(d))
        .collect();
    let pool = game.pool.len();
    Ok((0..d)
        .map(|pos| {
            let bit = 1usize << pos;
            let mut acc = vec![0.0; pool];
            for mask in (0..1usize << d).filter(|m| m & bit == 0) {
                let w = weight[mask.count_ones() as usize];
                for ((s, x), y) in acc.iter_mut().zip(&values[mask | bit]).zip(&values[mask]) {
                    *s += w * (x - y);
                }
            }
            finish(&acc, pool as f64)
        })
        .collect())
}

/// Exact Shapley value of `neuron` for `concept`; the enumeration oracle of
/// [`shapley_score`].
pub fn exact_shapley(
    neuron: usize,
    concept: &str,
    regions: &RegionDataset,
    cfg: &ShapleyConfig,
) -> Result<ShapleyValue> {
    let pos = position_of(regions, neuron)?;
    exact_shapley_all(concept, regions, cfg).map(|v| v[pos])
}

/// Efficiency diagnostic on the signed exact values:
/// `Σ_d signed_d − mean_r (v(D)(r) − v(∅)(r))`. Zero up to rounding.
pub fn signed_efficiency_gap(
    concept: &str,
    regions: &RegionDataset,
    cfg: &ShapleyConfig,
) -> Result<f64> {
    let values = exact_shapley_all(concept, regions, cfg)?;
    let game = CoalitionGame::new(regions, concept, cfg)?;
    let d = regions.dim();
    let full = game.value_of(&(0..d).collect::<Vec<_>>())?;
    let none = game.value_of(&[])?;
    let expected =
        full.iter().zip(&none).map(|(a, b)| a - b).sum::<f64>() / game.pool.len() as f64;
    Ok(values.iter().map(|v| v.signed).sum::<f64>() - expected)
}

/// The `|D| × |E|` score matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    #[serde(rename = "neurons")]
    pub neuron_ids: Vec<usize>,
    #[serde(rename = "concepts")]
    pub concept_ids: Vec<String>,
    /// `scores[d][e]`.
    pub scores: Vec<Vec<f64>>,
    pub signed_scores: Vec<Vec<f64>>,
    pub config: ShapleyConfig,
}

impl ScoreMatrix {
    pub fn concept_index(&self, concept: &str) -> Result<usize> {
        self.concept_ids
            .iter()
            .position(|c| c == concept)
            .ok_or_else(|| Error::UnknownConcept(concept.to_string()))
    }

    /// `(neuron, φ)` pairs of one concept column in neuron order.
    pub fn column(&self, concept: &str) -> Result<Vec<(usize, f64)>> {
        let k = self.concept_index(concept)?;
        Ok(self
            .neuron_ids
            .iter()
            .zip(&self.scores)
            .map(|(&n, row)| (n, row[k]))
            .collect())
    }

    pub fn get(&self, neuron: usize, concept: &str) -> Result<f64> {
        let k = self.concept_index(concept)?;
        let d = self
            .neuron_ids
            .iter()
            .position(|&n| n == neuron)
            .ok_or_else(|| Error::Config(format!("neuron {neuron} not in score matrix")))?;
        Ok(self.scores[d][k])
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("score matrix serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: ScoreMatrix = serde_json::from_str(text)?;
        let (d, e) = (m.neuron_ids.len(), m.concept_ids.len());
        let ok = |rows: &Vec<Vec<f64>>| rows.len() == d && rows.iter().all(|r| r.len() == e);
        if !ok(&m.scores) || !ok(&m.signed_scores) {
            return Err(Error::ShapeMismatch(format!(
                "score matrix rows do not match {d} neurons × {e} concepts"
            )));
        }
        Ok(m)
    }
}

/// Scores every `(neuron, concept)` cell. Cells run in parallel on the
/// current rayon pool; the result is identical for any worker count.
pub fn score_matrix(
    regions: &RegionDataset,
    hierarchy: &ConceptHierarchy,
    concepts: &[String],
    cfg: &ShapleyConfig,
) -> Result<ScoreMatrix> {
    cfg.validate()?;
    for c in concepts {
        hierarchy.concept(c)?;
        if regions.responsible(c).is_empty() {
            return Err(Error::EmptyPositives(c.clone()));
        }
    }
    let games: Vec<CoalitionGame<'_>> = concepts
        .iter()
        .map(|c| CoalitionGame::new(regions, c, cfg).map_err(|e| e.in_concept(c)))
        .collect::<Result<_>>()?;
    let d = regions.dim();
    let cells: Vec<(usize, usize)> = (0..d)
        .flat_map(|pos| (0..concepts.len()).map(move |k| (pos, k)))
        .collect();
    let values: Vec<ShapleyValue> = cells
        .par_iter()
        .map(|&(pos, k)| {
            shapley_in_game(&games[k], pos, cfg).map_err(|e| e.in_concept(&concepts[k]))
        })
        .collect::<Result<_>>()?;

    let mut scores = vec![vec![0.0; concepts.len()]; d];
    let mut signed = vec![vec![0.0; concepts.len()]; d];
    for (&(pos, k), v) in cells.iter().zip(&values) {
        scores[pos][k] = v.score;
        signed[pos][k] = v.signed;
    }
    Ok(ScoreMatrix {
        neuron_ids: regions.neurons().to_vec(),
        concept_ids: concepts.to_vec(),
        scores,
        signed_scores: signed,
        config: cfg.clone(),
    })
}
