//! `hint`: command-line driver for the neuron-concept attribution engine.

mod config;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use hint_core::association::Selection;
use hint_core::classifier::{evaluate_f1, train, ConceptClassifier};
use hint_core::localization::{concept_heatmap, upsample_bilinear};
use hint_core::pipeline::{
    prepare, read_json, read_score_matrix, run_localization, run_pipeline, target_concepts,
    train_all, with_workers, write_classifiers, write_json, write_reports, write_score_matrix,
    F1Report, LocalizeConfig, RunConfig, F1_FILE, REGIONS_DIR, SCORE_MATRIX_FILE,
};
use hint_core::shapley::score_matrix;
use hint_core::synth::{generate, PlantedConcept, SynthConfig};
use hint_core::tensor_store::write_tensor;
use hint_core::{Error, Result};

use config::CommonArgs;

#[derive(Parser)]
#[command(name = "hint", version, about = "Neuron-concept attribution via saliency-guided Shapley scores")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic archive with planted neuron-concept ground truth.
    Synth(SynthArgs),
    /// Extract responsible and background regions and write them to disk.
    Regions(CommonArgs),
    /// Train one classifier per concept and report held-out F1.
    Train(CommonArgs),
    /// Compute the neuron x concept Shapley score matrix.
    Shapley(CommonArgs),
    /// Build the Sankey export and association report from a score matrix.
    Report(ReportArgs),
    /// Localize a concept with a selected neuron subset.
    Localize(LocalizeArgs),
    /// Run regions, train, shapley and report in one go.
    Pipeline(CommonArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory for the archive.
    #[arg(long)]
    out: PathBuf,
    /// JSON synth configuration; flags below are ignored when given.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 16)]
    channels: usize,
    #[arg(long, default_value_t = 2)]
    concepts: usize,
    /// Planted neurons per concept.
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 10)]
    samples: usize,
    #[arg(long, default_value_t = 8)]
    height: usize,
    #[arg(long, default_value_t = 8)]
    width: usize,
    #[arg(long, default_value_t = 5.0)]
    signal: f32,
    #[arg(long, default_value_t = 1.0)]
    noise: f32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Constant channel as `CHANNEL:VALUE`; repeatable.
    #[arg(long, value_parser = parse_constant)]
    constant: Vec<(usize, f32)>,
    /// Duplicated channel as `COPY:SOURCE`; repeatable.
    #[arg(long, value_parser = parse_duplicate)]
    duplicate: Vec<(usize, usize)>,
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Score matrix to report on; defaults to `<out>/score_matrix.json`.
    #[arg(long)]
    scores: Option<PathBuf>,
    /// Layer name recorded in the export.
    #[arg(long)]
    layer: Option<String>,
}

#[derive(Args)]
struct LocalizeArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Neuron selection strategy: shap, clf-coef, or random.
    #[arg(long)]
    select: Option<String>,
    /// Number of neurons to select.
    #[arg(long)]
    count: Option<usize>,
    /// Concept to localize; defaults to the hierarchy root.
    #[arg(long)]
    concept: Option<String>,
    #[arg(long)]
    mask_threshold: Option<f64>,
    /// Precomputed score matrix for `--select shap`.
    #[arg(long)]
    scores: Option<PathBuf>,
    /// Also write upsampled per-image heatmaps as 2-D tensors.
    #[arg(long)]
    heatmaps: bool,
}

fn parse_pair<A: std::str::FromStr, B: std::str::FromStr>(s: &str) -> std::result::Result<(A, B), String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("expected A:B, got '{s}'"))?;
    Ok((
        a.parse().map_err(|_| format!("bad value '{a}'"))?,
        b.parse().map_err(|_| format!("bad value '{b}'"))?,
    ))
}

fn parse_constant(s: &str) -> std::result::Result<(usize, f32), String> {
    parse_pair(s)
}

fn parse_duplicate(s: &str) -> std::result::Result<(usize, usize), String> {
    parse_pair(s)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("HINT_LOG", "warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Synth(a) => synth(a),
        Command::Regions(a) => regions(&a.resolve()?),
        Command::Train(a) => train_cmd(&a.resolve()?),
        Command::Shapley(a) => shapley(&a.resolve()?),
        Command::Report(a) => report(a),
        Command::Localize(a) => localize(a),
        Command::Pipeline(a) => {
            let cfg = a.resolve()?;
            let out = run_pipeline(&cfg)?;
            println!(
                "scored {} neurons x {} concepts -> {}",
                out.matrix.neuron_ids.len(),
                out.matrix.concept_ids.len(),
                cfg.out_dir.display()
            );
            Ok(())
        }
    }
}

fn synth(a: SynthArgs) -> Result<()> {
    let cfg = match &a.config {
        Some(path) => read_json::<SynthConfig>(path)?,
        None => {
            let mut cfg = SynthConfig::planted(a.channels, a.concepts, a.k, a.seed);
            cfg.height = a.height;
            cfg.width = a.width;
            cfg.samples_per_concept = a.samples;
            cfg.signal_strength = a.signal;
            cfg.noise_sigma = a.noise;
            cfg.constant_channels = a.constant;
            cfg.duplicate_channels = a.duplicate;
            let (mh, mw) = (3.min(a.height), 3.min(a.width));
            for c in &mut cfg.concepts {
                *c = PlantedConcept {
                    mask_size: (mh, mw),
                    ..c.clone()
                };
            }
            cfg
        }
    };
    let data = generate(&cfg)?;
    let manifest = data.write_to(&a.out)?;
    println!("{} samples -> {}", data.samples.len(), manifest.display());
    Ok(())
}

fn regions(cfg: &RunConfig) -> Result<()> {
    with_workers(cfg.workers, || {
        let p = prepare(cfg)?;
        let dir = cfg.out_dir.join(REGIONS_DIR);
        p.regions.write_spilled(&dir)?;
        let summary: BTreeMap<String, usize> = p
            .regions
            .concepts()
            .map(|c| (c.to_string(), p.regions.responsible(c).len()))
            .chain([("<background>".to_string(), p.regions.background().len())])
            .collect();
        write_json(&cfg.out_dir.join("regions_summary.json"), &summary)?;
        println!("{} activation rows -> {}", p.regions.len(), dir.display());
        Ok(())
    })?
}

fn train_cmd(cfg: &RunConfig) -> Result<()> {
    with_workers(cfg.workers, || {
        let p = prepare(cfg)?;
        let regions = &p.regions;
        let concepts = target_concepts(cfg, &p)?;
        let trained = train_all(regions, &concepts, &cfg.train)?;
        write_classifiers(&cfg.out_dir, &trained)?;
        for t in &trained {
            match t.heldout_f1 {
                Some(f) => println!("{}\tF1 {f:.4}", t.classifier.concept_id),
                None => println!("{}\tF1 n/a", t.classifier.concept_id),
            }
        }
        Ok(())
    })?
}

fn shapley(cfg: &RunConfig) -> Result<()> {
    with_workers(cfg.workers, || {
        let p = prepare(cfg)?;
        let regions = &p.regions;
        let concepts = target_concepts(cfg, &p)?;
        let m = score_matrix(regions, &p.hierarchy, &concepts, &cfg.shapley)?;
        write_score_matrix(&cfg.out_dir, &m)?;
        println!(
            "{} x {} score matrix -> {}",
            m.neuron_ids.len(),
            m.concept_ids.len(),
            cfg.out_dir.join(SCORE_MATRIX_FILE).display()
        );
        Ok(())
    })?
}

fn report(a: ReportArgs) -> Result<()> {
    let cfg = a.common.resolve()?;
    let scores = a
        .scores
        .unwrap_or_else(|| cfg.out_dir.join(SCORE_MATRIX_FILE));
    let m = read_score_matrix(&scores)?;
    let h = hint_core::hierarchy::ConceptHierarchy::load_file(&cfg.hierarchy)?;
    let layer = match a.layer {
        Some(l) => l,
        None if cfg.manifest.exists() => hint_core::tensor_store::Manifest::read(&cfg.manifest)?
            .samples
            .first()
            .map(|s| s.layer.clone())
            .unwrap_or_default(),
        None => String::new(),
    };
    let f1_path = cfg.out_dir.join(F1_FILE);
    let f1 = if f1_path.exists() {
        read_json::<F1Report>(&f1_path)?.f1
    } else {
        BTreeMap::new()
    };
    let r = write_reports(&cfg.out_dir, &m, &h, cfg.top_n, &layer, &f1)?;
    println!("{} concepts reported -> {}", r.concepts.len(), cfg.out_dir.display());
    Ok(())
}

fn localize(a: LocalizeArgs) -> Result<()> {
    let file = a.common.file_config()?;
    let run = a.common.resolve_with(&file)?;
    let selection: Selection = a
        .select
        .or(file.select.clone())
        .unwrap_or_else(|| "shap".into())
        .parse()?;
    let selection = match selection {
        Selection::Random(_) => Selection::Random(run.shapley.master_seed),
        s => s,
    };
    let count = a.count.or(file.count).unwrap_or(20);
    let mut cfg = LocalizeConfig::new(run, selection, count);
    cfg.concept = a.concept.or(file.concept.clone());
    if let Some(t) = a.mask_threshold.or(file.mask_threshold) {
        cfg.mask_threshold = t;
    }
    cfg.scores = a.scores.or_else(|| {
        let default = cfg.run.out_dir.join(SCORE_MATRIX_FILE);
        (selection == Selection::Shap && default.exists()).then_some(default)
    });
    let report = run_localization(&cfg)?;
    if a.heatmaps {
        write_heatmaps(&cfg, &report.neurons, &report.concept)?;
    }
    println!(
        "{} via {} ({} neurons): localization accuracy {:.4} over {} images",
        report.concept,
        report.selection,
        report.neurons.len(),
        report.aggregate.localization_accuracy,
        report.images.len()
    );
    Ok(())
}

/// Writes each sample's upsampled confidence map under `<out>/heatmaps/`.
fn write_heatmaps(cfg: &LocalizeConfig, neurons: &[usize], concept: &str) -> Result<()> {
    let p = prepare(&cfg.run)?;
    let subset = p.regions.restrict(neurons)?;
    let clf: ConceptClassifier = train(&subset, concept, &cfg.run.train)?;
    if let Ok(f1) = evaluate_f1(&clf, &subset, concept) {
        info!("{concept}: held-out F1 on selected neurons {f1:.4}");
    }
    let dir = cfg.run.out_dir.join("heatmaps");
    std::fs::create_dir_all(&dir).map_err(|e| Error::Io { path: dir.clone(), source: e })?;
    for s in &p.dataset.samples {
        let (h, w) = s.manifest.image_size;
        let map = concept_heatmap(&clf, &s.features).map_err(|e| sample_err(e, &s.manifest.sample_id))?;
        let up = upsample_bilinear(map.grid(), h, w);
        let record = hint_core::tensor_store::TensorRecord::new(
            vec![h, w],
            up.values.iter().map(|&v| v as f32).collect(),
        )?;
        write_tensor(&record, heatmap_path(&dir, &s.manifest.sample_id))?;
    }
    Ok(())
}

fn heatmap_path(dir: &Path, sample_id: &str) -> PathBuf {
    let safe: String = sample_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect();
    dir.join(format!("{safe}.heat.tens"))
}

fn sample_err(e: Error, sample: &str) -> Error {
    Error::Sample {
        sample: sample.to_string(),
        source: Box::new(e),
    }
}
