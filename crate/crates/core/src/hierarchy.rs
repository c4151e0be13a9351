//! Concept hierarchy: a DAG of concepts with classification labels mapped onto
//! leaf concepts.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Concept {
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub parents: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct HierarchyFile {
    concepts: Vec<Concept>,
    #[serde(default)]
    labels: BTreeMap<String, String>,
}

/// Validated, immutable concept hierarchy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConceptHierarchy {
    concepts: BTreeMap<String, Concept>,
    label_map: BTreeMap<String, String>,
    roots: Vec<String>,
}

impl ConceptHierarchy {
    /// Parses and validates hierarchy JSON.
    pub fn load(source: &str) -> Result<Self> {
        let file: HierarchyFile =
            serde_json::from_str(source).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_parts(file.concepts, file.labels)
    }

    pub fn load_file(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
            _ => Error::io(path, e),
        })?;
        Self::load(&text)
    }

    pub fn from_parts(
        concepts: Vec<Concept>,
        labels: BTreeMap<String, String>,
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        for mut c in concepts {
            if c.id.is_empty() {
                return Err(Error::Parse("concept with empty id".into()));
            }
            // Duplicate parent entries carry no meaning.
            let mut seen = BTreeSet::new();
            c.parents.retain(|p| seen.insert(p.clone()));
            if c.parents.contains(&c.id) {
                return Err(Error::Cycle(c.id));
            }
            if let Some(prev) = map.insert(c.id.clone(), c) {
                return Err(Error::Parse(format!("duplicate concept id '{}'", prev.id)));
            }
        }
        for c in map.values() {
            for p in &c.parents {
                if !map.contains_key(p) {
                    return Err(Error::DanglingRef {
                        context: format!("parent of '{}'", c.id),
                        target: p.clone(),
                    });
                }
            }
        }
        for (label, target) in &labels {
            if !map.contains_key(target) {
                return Err(Error::DanglingRef {
                    context: format!("label '{label}'"),
                    target: target.clone(),
                });
            }
        }
        check_acyclic(&map)?;
        let roots = map
            .values()
            .filter(|c| c.parents.is_empty())
            .map(|c| c.id.clone())
            .collect();
        Ok(ConceptHierarchy {
            concepts: map,
            label_map: labels,
            roots,
        })
    }

    pub fn to_json(&self) -> String {
        let file = HierarchyFile {
            concepts: self.concepts.values().cloned().collect(),
            labels: self.label_map.clone(),
        };
        serde_json::to_string_pretty(&file).expect("hierarchy serializes")
    }

    pub fn concept(&self, id: &str) -> Result<&Concept> {
        self.concepts
            .get(id)
            .ok_or_else(|| Error::UnknownConcept(id.to_string()))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.concepts.contains_key(id)
    }

    /// Concepts in ascending id order.
    pub fn concepts(&self) -> impl Iterator<Item = &Concept> {
        self.concepts.values()
    }

    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }

    pub fn roots(&self) -> &[String] {
        &self.roots
    }

    pub fn label_map(&self) -> &BTreeMap<String, String> {
        &self.label_map
    }

    pub fn leaf_for_label(&self, label: &str) -> Result<&str> {
        self.label_map
            .get(label)
            .map(String::as_str)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    /// Strict ancestors of `id`, nearest first. Each ancestor is emitted only
    /// after every one of its descendants inside the ancestor set; ties go to
    /// the smaller id.
    pub fn ancestors(&self, id: &str) -> Result<Vec<String>> {
        self.concept(id)?;

        let mut set: BTreeSet<&str> = BTreeSet::new();
        let mut stack = vec![id];
        while let Some(cur) = stack.pop() {
            for p in &self.concepts[cur].parents {
                if set.insert(p.as_str()) {
                    stack.push(p.as_str());
                }
            }
        }

        // Kahn's algorithm over {id} ∪ ancestors with child -> parent edges.
        let mut pending: HashMap<&str, usize> = set.iter().map(|&a| (a, 0)).collect();
        for &node in set.iter().chain(std::iter::once(&id)) {
            for p in &self.concepts[node].parents {
                *pending.get_mut(p.as_str()).expect("parent is an ancestor") += 1;
            }
        }
        let mut ready: BTreeSet<&str> = BTreeSet::from([id]);
        let mut order = Vec::with_capacity(set.len());
        while let Some(node) = ready.pop_first() {
            if node != id {
                order.push(node.to_string());
            }
            for p in &self.concepts[node].parents {
                let n = pending.get_mut(p.as_str()).expect("parent is an ancestor");
                *n -= 1;
                if *n == 0 {
                    ready.insert(p.as_str());
                }
            }
        }
        debug_assert_eq!(order.len(), set.len());
        Ok(order)
    }

    /// The leaf concept of `label` together with all of its ancestors.
    pub fn concepts_for_label(&self, label: &str) -> Result<BTreeSet<String>> {
        let leaf = self.leaf_for_label(label)?;
        let mut out: BTreeSet<String> = self.ancestors(leaf)?.into_iter().collect();
        out.insert(leaf.to_string());
        Ok(out)
    }
}

fn check_acyclic(map: &BTreeMap<String, Concept>) -> Result<()> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Open,
        Done,
    }
    let mut marks: HashMap<&str, Mark> = HashMap::with_capacity(map.len());
    for start in map.keys() {
        if marks.contains_key(start.as_str()) {
            continue;
        }
        // Iterative DFS: (node, next parent index).
        let mut stack: Vec<(&str, usize)> = vec![(start.as_str(), 0)];
        marks.insert(start.as_str(), Mark::Open);
        while let Some(top) = stack.last_mut() {
            let node = top.0;
            let parents = &map[node].parents;
            if top.1 < parents.len() {
                let p = parents[top.1].as_str();
                top.1 += 1;
                match marks.get(p) {
                    Some(Mark::Open) => return Err(Error::Cycle(p.to_string())),
                    Some(Mark::Done) => {}
                    None => {
                        marks.insert(p, Mark::Open);
                        stack.push((p, 0));
                    }
                }
            } else {
                marks.insert(node, Mark::Done);
                stack.pop();
            }
        }
    }
    Ok(())
}
