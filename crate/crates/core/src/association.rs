//! Neuron-concept associations derived from a score matrix.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::classifier::ConceptClassifier;
use crate::error::{Error, Result};
use crate::hierarchy::ConceptHierarchy;
use crate::seed::{fnv1a, SeedKey};
use crate::shapley::ScoreMatrix;

/// Ranks `(neuron, score)` pairs: descending score, ascending neuron id.
fn rank(mut pairs: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    pairs.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    pairs
}

/// The `n` highest-scoring neurons of `concept`.
pub fn top_neurons(m: &ScoreMatrix, concept: &str, n: usize) -> Result<Vec<(usize, f64)>> {
    let mut ranked = rank(m.column(concept)?);
    ranked.truncate(n);
    Ok(ranked)
}

/// Neurons in the top-`n` of at least two concepts, ascending by neuron id.
pub fn multimodal_neurons(m: &ScoreMatrix, n: usize) -> Vec<(usize, Vec<String>)> {
    let mut hits: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for concept in &m.concept_ids {
        let top = top_neurons(m, concept, n).expect("concept from the matrix");
        for (neuron, _) in top {
            hits.entry(neuron).or_default().push(concept.clone());
        }
    }
    hits.into_iter().filter(|(_, c)| c.len() >= 2).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Selection {
    Shap,
    ClfCoef,
    Random(u64),
}

impl fmt::Display for Selection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Selection::Shap => f.write_str("shap"),
            Selection::ClfCoef => f.write_str("clf-coef"),
            Selection::Random(_) => f.write_str("random"),
        }
    }
}

impl FromStr for Selection {
    type Err = Error;

    /// Parses `shap`, `clf-coef` or `random`; the random seed defaults to 0.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shap" => Ok(Selection::Shap),
            "clf-coef" | "clf_coef" => Ok(Selection::ClfCoef),
            "random" => Ok(Selection::Random(0)),
            _ => Err(Error::Config(format!("unknown selection strategy '{s}'"))),
        }
    }
}

/// Picks `count` neurons for `concept`, returned in ascending id order.
///
/// `Shap` needs the score matrix, `ClfCoef` a full-neuron classifier of the
/// concept; `Random` samples uniformly from whichever neuron set is given.
pub fn select_neurons(
    strategy: Selection,
    concept: &str,
    count: usize,
    scores: Option<&ScoreMatrix>,
    classifier: Option<&ConceptClassifier>,
) -> Result<Vec<usize>> {
    let universe: &[usize] = match (scores, classifier) {
        (Some(m), _) => &m.neuron_ids,
        (None, Some(c)) => &c.neuron_set,
        (None, None) => return Err(Error::Config("no score matrix or classifier given".into())),
    };
    if count == 0 || count > universe.len() {
        return Err(Error::Config(format!(
            "cannot select {count} of {} neurons",
            universe.len()
        )));
    }
    let mut picked: Vec<usize> = match strategy {
        Selection::Shap => {
            let m = scores.ok_or_else(|| Error::Config("shap selection needs a score matrix".into()))?;
            top_neurons(m, concept, count)?
                .into_iter()
                .map(|(n, _)| n)
                .collect()
        }
        Selection::ClfCoef => {
            let c = classifier
                .ok_or_else(|| Error::Config("clf-coef selection needs a classifier".into()))?;
            if c.concept_id != concept {
                return Err(Error::UnknownConcept(concept.to_string()));
            }
            let pairs = c
                .neuron_set
                .iter()
                .zip(&c.weights)
                .map(|(&n, w)| (n, w.abs()))
                .collect();
            let mut ranked = rank(pairs);
            ranked.truncate(count);
            ranked.into_iter().map(|(n, _)| n).collect()
        }
        Selection::Random(seed) => {
            if let Some(m) = scores {
                m.concept_index(concept)?;
            }
            let mut rng = SeedKey::new(seed).with_str("select").with_str(concept).rng();
            index::sample(&mut rng, universe.len(), count)
                .into_iter()
                .map(|k| universe[k])
                .collect()
        }
    };
    picked.sort_unstable();
    Ok(picked)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SankeyNode {
    pub id: String,
    pub kind: String,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SankeyLink {
    pub neuron: usize,
    pub concept: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SankeyMeta {
    pub layer: String,
    #[serde(rename = "N")]
    pub top_n: usize,
    pub config_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SankeyDocument {
    pub nodes: Vec<SankeyNode>,
    pub hierarchy_edges: Vec<(String, String)>,
    pub links: Vec<SankeyLink>,
    pub meta: SankeyMeta,
}

pub fn neuron_node_id(neuron: usize) -> String {
    format!("neuron:{neuron}")
}

/// Hex FNV-1a digest of the score matrix configuration.
pub fn config_digest(m: &ScoreMatrix) -> String {
    let text = serde_json::to_string(&m.config).expect("config serializes");
    format!("{:016x}", fnv1a(text.as_bytes()))
}

/// Sankey document: concept nodes with the hierarchy edges among them, neuron
/// nodes, and one link per entry of each concept's top-`n`.
pub fn export_sankey(
    m: &ScoreMatrix,
    h: &ConceptHierarchy,
    n: usize,
    layer: &str,
) -> SankeyDocument {
    let concepts: BTreeSet<&str> = m.concept_ids.iter().map(String::as_str).collect();
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    for c in &m.concept_ids {
        let (name, parents) = match h.concept(c) {
            Ok(concept) => (concept.name.clone(), concept.parents.clone()),
            Err(_) => (c.clone(), Vec::new()),
        };
        nodes.push(SankeyNode {
            id: c.clone(),
            kind: "concept".into(),
            name,
        });
        for p in parents {
            if concepts.contains(p.as_str()) {
                edges.push((c.clone(), p));
            }
        }
    }
    let mut links = Vec::new();
    let mut neurons = BTreeSet::new();
    for c in &m.concept_ids {
        for (neuron, score) in top_neurons(m, c, n).expect("concept from the matrix") {
            neurons.insert(neuron);
            links.push(SankeyLink {
                neuron,
                concept: c.clone(),
                score,
            });
        }
    }
    nodes.extend(neurons.into_iter().map(|d| SankeyNode {
        id: neuron_node_id(d),
        kind: "neuron".into(),
        name: d.to_string(),
    }));
    SankeyDocument {
        nodes,
        hierarchy_edges: edges,
        links,
        meta: SankeyMeta {
            layer: layer.to_string(),
            top_n: n,
            config_digest: config_digest(m),
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedNeuron {
    pub neuron: usize,
    pub score: f64,
    pub signed_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptEntry {
    pub concept: String,
    pub top_neurons: Vec<RankedNeuron>,
    /// F1 on the held-out split; `None` when the split has no rows.
    pub heldout_f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuronProfile {
    pub neuron: usize,
    /// Concepts whose top-N contains this neuron, in matrix order.
    pub concepts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationReport {
    pub layer: String,
    pub top_n: usize,
    pub config_digest: String,
    pub concepts: Vec<ConceptEntry>,
    pub neuron_profiles: Vec<NeuronProfile>,
    pub multimodal: Vec<NeuronProfile>,
}

pub fn association_report(
    m: &ScoreMatrix,
    n: usize,
    layer: &str,
    f1: &BTreeMap<String, Option<f64>>,
) -> AssociationReport {
    let mut profiles: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    let concepts = m
        .concept_ids
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let top = top_neurons(m, c, n).expect("concept from the matrix");
            let top_neurons = top
                .into_iter()
                .map(|(neuron, score)| {
                    profiles.entry(neuron).or_default().push(c.clone());
                    let d = m.neuron_ids.iter().position(|&x| x == neuron).unwrap();
                    RankedNeuron {
                        neuron,
                        score,
                        signed_score: m.signed_scores[d][k],
                    }
                })
                .collect();
            ConceptEntry {
                concept: c.clone(),
                top_neurons,
                heldout_f1: f1.get(c).copied().flatten(),
            }
        })
        .collect();
    let neuron_profiles: Vec<NeuronProfile> = profiles
        .into_iter()
        .map(|(neuron, concepts)| NeuronProfile { neuron, concepts })
        .collect();
    let multimodal = neuron_profiles
        .iter()
        .filter(|p| p.concepts.len() >= 2)
        .cloned()
        .collect();
    AssociationReport {
        layer: layer.to_string(),
        top_n: n,
        config_digest: config_digest(m),
        concepts,
        neuron_profiles,
        multimodal,
    }
}
