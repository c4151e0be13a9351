//! End-to-end orchestration: load, extract regions, train classifiers, score
//! neurons, and write reports.
//!
//! Every artifact except `run_info.json` (which carries a timestamp) is a
//! pure function of the run configuration and input files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::association::{association_report, export_sankey, select_neurons, AssociationReport, Selection};
use crate::classifier::{evaluate_f1, train, ConceptClassifier, TrainConfig};
use crate::error::{Error, Result};
use crate::hierarchy::ConceptHierarchy;
use crate::localization::{aggregate, evaluate_image, BoundingBox, ImageTruth, LocalizationReport, DEFAULT_MASK_THRESHOLD};
use crate::region::{build_region_dataset, ExtractionConfig, RegionDataset};
use crate::shapley::{score_matrix, ScoreMatrix, ShapleyConfig};
use crate::tensor_store::{load_dataset, Dataset};

pub const SCORE_MATRIX_FILE: &str = "score_matrix.json";
pub const SANKEY_FILE: &str = "sankey.json";
pub const REPORT_FILE: &str = "association_report.json";
pub const F1_FILE: &str = "f1.json";
pub const CLASSIFIER_DIR: &str = "classifiers";
pub const REGIONS_DIR: &str = "regions";
pub const RUN_INFO_FILE: &str = "run_info.json";
pub const LOCALIZATION_FILE: &str = "localization.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub manifest: PathBuf,
    pub hierarchy: PathBuf,
    pub extraction: ExtractionConfig,
    pub train: TrainConfig,
    pub shapley: ShapleyConfig,
    pub top_n: usize,
    pub out_dir: PathBuf,
    /// Worker threads; 0 uses rayon's default.
    pub workers: usize,
    /// Region datasets with more rows than this are written to disk.
    pub spill_rows: usize,
    /// Concepts to score; `None` scores every concept with responsible rows.
    pub concepts: Option<Vec<String>>,
}

impl RunConfig {
    pub fn new(manifest: impl Into<PathBuf>, hierarchy: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        RunConfig {
            manifest: manifest.into(),
            hierarchy: hierarchy.into(),
            extraction: ExtractionConfig::default(),
            train: TrainConfig::default(),
            shapley: ShapleyConfig::default(),
            top_n: 10,
            out_dir: out_dir.into(),
            workers: 0,
            spill_rows: 1_000_000,
            concepts: None,
        }
    }

    /// Routes one seed into every random stream.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.train.seed = seed;
        self.shapley.master_seed = seed;
        self.shapley.retrain.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.top_n == 0 {
            return Err(Error::Config("top-n must be positive".into()));
        }
        self.train.validate()?;
        self.shapley.validate()
    }
}

/// Runs `f` on a pool of `workers` threads (0 = rayon default).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Loaded inputs and extracted regions.
pub struct Prepared {
    pub hierarchy: ConceptHierarchy,
    pub dataset: Dataset,
    pub regions: RegionDataset,
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let hierarchy = ConceptHierarchy::load_file(&cfg.hierarchy)?;
    let dataset = load_dataset(&cfg.manifest)?;
    let regions = build_region_dataset(&dataset, &hierarchy, &cfg.extraction)?;
    info!(
        "{} samples, {} activation rows, {} background",
        dataset.len(),
        regions.len(),
        regions.background().len()
    );
    Ok(Prepared {
        hierarchy,
        dataset,
        regions,
    })
}

/// Concepts to train and score: the configured list, or every concept with
/// responsible rows and at least one negative row.
pub fn target_concepts(cfg: &RunConfig, p: &Prepared) -> Result<Vec<String>> {
    match &cfg.concepts {
        Some(list) => {
            for c in list {
                p.hierarchy.concept(c)?;
            }
            Ok(list.clone())
        }
        None => Ok(p
            .regions
            .concepts()
            .filter(|c| {
                let (pos, neg) = p.regions.training_split(c);
                !pos.is_empty() && !neg.is_empty()
            })
            .map(str::to_string)
            .collect()),
    }
}

pub struct TrainedConcept {
    pub classifier: ConceptClassifier,
    pub heldout_f1: Option<f64>,
}

pub fn train_all(
    regions: &RegionDataset,
    concepts: &[String],
    cfg: &TrainConfig,
) -> Result<Vec<TrainedConcept>> {
    concepts
        .par_iter()
        .map(|c| {
            let classifier = train(regions, c, cfg).map_err(|e| e.in_concept(c))?;
            let heldout_f1 = match evaluate_f1(&classifier, regions, c) {
                Ok(f) => Some(f),
                Err(Error::EmptyEvaluationSet(_)) => None,
                Err(e) => return Err(e.in_concept(c)),
            };
            Ok(TrainedConcept {
                classifier,
                heldout_f1,
            })
        })
        .collect()
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &serde_json::to_string_pretty(value)?)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    Ok(serde_json::from_str(&text)?)
}

/// File name for a concept's classifier; ids may contain any character.
pub fn classifier_file(index: usize, concept: &str) -> String {
    let safe: String = concept
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("{index:04}_{safe}.json")
}

pub fn write_classifiers(out_dir: &Path, trained: &[TrainedConcept]) -> Result<()> {
    let dir = out_dir.join(CLASSIFIER_DIR);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    for (k, t) in trained.iter().enumerate() {
        t.classifier
            .save(dir.join(classifier_file(k, &t.classifier.concept_id)))?;
    }
    let f1: BTreeMap<&str, Option<f64>> = trained
        .iter()
        .map(|t| (t.classifier.concept_id.as_str(), t.heldout_f1))
        .collect();
    write_json(&out_dir.join(F1_FILE), &F1Report { split: "heldout-20%".into(), f1: f1.into_iter().map(|(k, v)| (k.to_string(), v)).collect() })
}

/// Held-out F1 per concept as written to `f1.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Report {
    pub split: String,
    pub f1: BTreeMap<String, Option<f64>>,
}

pub fn write_score_matrix(out_dir: &Path, m: &ScoreMatrix) -> Result<()> {
    write_text(&out_dir.join(SCORE_MATRIX_FILE), &m.to_json())
}

pub fn read_score_matrix(path: &Path) -> Result<ScoreMatrix> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    ScoreMatrix::from_json(&text)
}

pub fn write_reports(
    out_dir: &Path,
    m: &ScoreMatrix,
    h: &ConceptHierarchy,
    top_n: usize,
    layer: &str,
    f1: &BTreeMap<String, Option<f64>>,
) -> Result<AssociationReport> {
    write_json(&out_dir.join(SANKEY_FILE), &export_sankey(m, h, top_n, layer))?;
    let report = association_report(m, top_n, layer, f1);
    write_json(&out_dir.join(REPORT_FILE), &report)?;
    Ok(report)
}

fn write_run_info(cfg: &RunConfig, command: &str) -> Result<()> {
    #[derive(Serialize)]
    struct RunInfo<'a> {
        command: &'a str,
        timestamp: u64,
        config: &'a RunConfig,
    }
    let timestamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    write_json(
        &cfg.out_dir.join(RUN_INFO_FILE),
        &RunInfo {
            command,
            timestamp,
            config: cfg,
        },
    )
}

pub fn layer_name(dataset: &Dataset) -> String {
    dataset
        .samples
        .first()
        .map(|s| s.manifest.layer.clone())
        .unwrap_or_default()
}

#[derive(Debug)]
pub struct PipelineOutput {
    pub matrix: ScoreMatrix,
    pub report: AssociationReport,
    pub classifiers: Vec<ConceptClassifier>,
}

/// Runs the whole pipeline and writes every artifact under `cfg.out_dir`.
pub fn run_pipeline(cfg: &RunConfig) -> Result<PipelineOutput> {
    cfg.validate()?;
    with_workers(cfg.workers, || run_pipeline_inner(cfg))?
}

fn run_pipeline_inner(cfg: &RunConfig) -> Result<PipelineOutput> {
    let p = prepare(cfg)?;
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
    if p.regions.len() > cfg.spill_rows {
        p.regions.write_spilled(cfg.out_dir.join(REGIONS_DIR))?;
    }
    let concepts = target_concepts(cfg, &p)?;
    info!("training {} concept classifiers", concepts.len());
    let trained = train_all(&p.regions, &concepts, &cfg.train)?;
    write_classifiers(&cfg.out_dir, &trained)?;

    info!(
        "scoring {} neurons x {} concepts, M = {}",
        p.regions.dim(),
        concepts.len(),
        cfg.shapley.mc_iterations
    );
    let matrix = score_matrix(&p.regions, &p.hierarchy, &concepts, &cfg.shapley)?;
    write_score_matrix(&cfg.out_dir, &matrix)?;

    let f1: BTreeMap<String, Option<f64>> = trained
        .iter()
        .map(|t| (t.classifier.concept_id.clone(), t.heldout_f1))
        .collect();
    let report = write_reports(
        &cfg.out_dir,
        &matrix,
        &p.hierarchy,
        cfg.top_n,
        &layer_name(&p.dataset),
        &f1,
    )?;
    write_run_info(cfg, "pipeline")?;
    Ok(PipelineOutput {
        matrix,
        report,
        classifiers: trained.into_iter().map(|t| t.classifier).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizeConfig {
    pub run: RunConfig,
    /// Concept to localize; defaults to the hierarchy's single root.
    pub concept: Option<String>,
    pub selection: Selection,
    pub count: usize,
    pub mask_threshold: f64,
    /// Precomputed score matrix for `Shap`; computed for the concept when absent.
    pub scores: Option<PathBuf>,
}

impl LocalizeConfig {
    pub fn new(run: RunConfig, selection: Selection, count: usize) -> Self {
        LocalizeConfig {
            run,
            concept: None,
            selection,
            count,
            mask_threshold: DEFAULT_MASK_THRESHOLD,
            scores: None,
        }
    }
}

fn default_concept(h: &ConceptHierarchy) -> Result<String> {
    match h.roots() {
        [root] => Ok(root.clone()),
        roots => Err(Error::Config(format!(
            "hierarchy has {} roots; pick a concept explicitly",
            roots.len()
        ))),
    }
}

/// Selects neurons, retrains the concept classifier on them, and localizes
/// every sample that has a ground-truth box.
pub fn run_localization(cfg: &LocalizeConfig) -> Result<LocalizationReport> {
    cfg.run.validate()?;
    with_workers(cfg.run.workers, || run_localization_inner(cfg))?
}

fn run_localization_inner(cfg: &LocalizeConfig) -> Result<LocalizationReport> {
    let run = &cfg.run;
    let p = prepare(run)?;
    let concept = match &cfg.concept {
        Some(c) => {
            p.hierarchy.concept(c)?;
            c.clone()
        }
        None => default_concept(&p.hierarchy)?,
    };

    let (scores, classifier) = match cfg.selection {
        Selection::Shap => {
            let m = match &cfg.scores {
                Some(path) => read_score_matrix(path)?,
                None => score_matrix(&p.regions, &p.hierarchy, std::slice::from_ref(&concept), &run.shapley)?,
            };
            (Some(m), None)
        }
        Selection::ClfCoef => (
            None,
            Some(train(&p.regions, &concept, &run.train).map_err(|e| e.in_concept(&concept))?),
        ),
        Selection::Random(_) => {
            let all = ScoreMatrix {
                neuron_ids: p.regions.neurons().to_vec(),
                concept_ids: vec![concept.clone()],
                scores: vec![vec![0.0]; p.regions.dim()],
                signed_scores: vec![vec![0.0]; p.regions.dim()],
                config: run.shapley.clone(),
            };
            (Some(all), None)
        }
    };
    let neurons = select_neurons(cfg.selection, &concept, cfg.count, scores.as_ref(), classifier.as_ref())
        .map_err(|e| e.in_concept(&concept))?;
    let subset = p.regions.restrict(&neurons)?;
    let clf = train(&subset, &concept, &run.train).map_err(|e| e.in_concept(&concept))?;

    // Only images whose label carries the concept have a box for it.
    let mut samples = Vec::new();
    for s in &p.dataset.samples {
        let m = &s.manifest;
        let concepts = p
            .hierarchy
            .concepts_for_label(&m.label)
            .map_err(|e| e.in_sample(&m.sample_id))?;
        if m.groundtruth_box.is_some() && concepts.contains(&concept) {
            samples.push(s);
        }
    }
    let images = samples
        .par_iter()
        .map(|s| {
            let m = &s.manifest;
            let [x0, y0, x1, y1] = m.groundtruth_box.expect("filtered");
            let truth = ImageTruth {
                sample_id: m.sample_id.clone(),
                image_size: m.image_size,
                gt_box: BoundingBox::new(x0, y0, x1, y1).map_err(|e| e.in_sample(&m.sample_id))?,
                gt_mask: p.dataset.groundtruth_mask(m)?,
            };
            evaluate_image(&clf, &s.features, &truth, cfg.mask_threshold)
                .map_err(|e| e.in_sample(&m.sample_id))
        })
        .collect::<Result<Vec<_>>>()?;

    let report = LocalizationReport {
        concept,
        selection: cfg.selection.to_string(),
        neurons,
        mask_threshold: cfg.mask_threshold,
        aggregate: aggregate(&images),
        images,
    };
    write_json(&run.out_dir.join(LOCALIZATION_FILE), &report)?;
    Ok(report)
}
