//! Shared run flags and the optional JSON config file.
//!
//! Each setting resolves as flag, then config file, then built-in default.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::Deserialize;

use hint_core::pipeline::{read_json, RunConfig};
use hint_core::region::Aggregation;
use hint_core::shapley::EvaluationPool;
use hint_core::{Error, Result};

#[derive(Args, Debug, Default)]
pub struct CommonArgs {
    /// Manifest of the feature/saliency archive.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Concept hierarchy JSON.
    #[arg(long)]
    pub hierarchy: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON config file with any of the long flag names as keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Saliency threshold t in (0, 1] [default: 0.5]
    #[arg(long)]
    pub threshold: Option<f64>,
    /// norm, filter-norm, max, abs-max, or abs-sum [default: norm]
    #[arg(long)]
    pub aggregation: Option<String>,
    /// File listing the neuron subset (JSON array or whitespace/comma separated).
    #[arg(long)]
    pub neurons: Option<PathBuf>,
    /// [default: 10]
    #[arg(long)]
    pub top_n: Option<usize>,
    /// Monte-Carlo iterations per score [default: 2000]
    #[arg(long)]
    pub mc_iters: Option<usize>,
    /// Seed for every random stream [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; 0 picks the core count [default: 0]
    #[arg(long)]
    pub workers: Option<usize>,
    /// Comma-separated concepts to score [default: all with responsible regions]
    #[arg(long, value_delimiter = ',')]
    pub concepts: Option<Vec<String>>,
    /// Evaluation pool: `all` or a subsample size [default: 4096]
    #[arg(long)]
    pub pool: Option<String>,
    /// Retrain epochs inside the Shapley estimator [default: 100]
    #[arg(long)]
    pub retrain_epochs: Option<usize>,
}

/// Config file contents; keys mirror the long flags.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct FileConfig {
    pub manifest: Option<PathBuf>,
    pub hierarchy: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub threshold: Option<f64>,
    pub aggregation: Option<String>,
    pub neurons: Option<PathBuf>,
    pub top_n: Option<usize>,
    pub mc_iters: Option<usize>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub concepts: Option<Vec<String>>,
    pub pool: Option<String>,
    pub retrain_epochs: Option<usize>,
    pub select: Option<String>,
    pub count: Option<usize>,
    pub concept: Option<String>,
    pub mask_threshold: Option<f64>,
}

impl CommonArgs {
    pub fn file_config(&self) -> Result<FileConfig> {
        match &self.config {
            Some(path) => read_json(path),
            None => Ok(FileConfig::default()),
        }
    }

    pub fn resolve(&self) -> Result<RunConfig> {
        self.resolve_with(&self.file_config()?)
    }

    pub fn resolve_with(&self, file: &FileConfig) -> Result<RunConfig> {
        fn pick<T: Clone>(flag: &Option<T>, file: &Option<T>) -> Option<T> {
            flag.clone().or_else(|| file.clone())
        }
        let required = |v: Option<PathBuf>, name: &str| {
            v.ok_or_else(|| Error::Config(format!("--{name} is required")))
        };
        let manifest = required(pick(&self.manifest, &file.manifest), "manifest")?;
        let hierarchy = required(pick(&self.hierarchy, &file.hierarchy), "hierarchy")?;
        let out = required(pick(&self.out, &file.out), "out")?;

        let mut cfg = RunConfig::new(manifest, hierarchy, out)
            .with_seed(pick(&self.seed, &file.seed).unwrap_or(0));
        if let Some(t) = pick(&self.threshold, &file.threshold) {
            cfg.extraction.threshold = t;
        }
        if let Some(a) = pick(&self.aggregation, &file.aggregation) {
            cfg.extraction.aggregation = a.parse::<Aggregation>()?;
        }
        if let Some(path) = pick(&self.neurons, &file.neurons) {
            cfg.extraction.neuron_subset = Some(read_neuron_file(&path)?);
        }
        if let Some(n) = pick(&self.top_n, &file.top_n) {
            cfg.top_n = n;
        }
        if let Some(m) = pick(&self.mc_iters, &file.mc_iters) {
            cfg.shapley.mc_iterations = m;
        }
        if let Some(w) = pick(&self.workers, &file.workers) {
            cfg.workers = w;
        }
        cfg.concepts = pick(&self.concepts, &file.concepts);
        if let Some(p) = pick(&self.pool, &file.pool) {
            cfg.shapley.evaluation_pool = parse_pool(&p)?;
        }
        if let Some(e) = pick(&self.retrain_epochs, &file.retrain_epochs) {
            cfg.shapley.retrain.max_epochs = e;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_pool(s: &str) -> Result<EvaluationPool> {
    if s == "all" {
        return Ok(EvaluationPool::All);
    }
    s.parse()
        .map(EvaluationPool::SubsampleK)
        .map_err(|_| Error::Config(format!("pool must be 'all' or a row count, got '{s}'")))
}

/// Reads a neuron list written either as a JSON array or as plain integers
/// separated by whitespace or commas.
pub fn read_neuron_file(path: &Path) -> Result<Vec<usize>> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::Io {
            path: path.to_path_buf(),
            source: e,
        },
    })?;
    text.trim()
        .trim_start_matches('[')
        .trim_end_matches(']')
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse()
                .map_err(|_| Error::Config(format!("{}: bad neuron index '{t}'", path.display())))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flag_beats_file_beats_default() {
        let args = CommonArgs {
            manifest: Some("m.json".into()),
            hierarchy: Some("h.json".into()),
            out: Some("out".into()),
            top_n: Some(3),
            ..CommonArgs::default()
        };
        let file = FileConfig {
            top_n: Some(7),
            mc_iters: Some(50),
            ..FileConfig::default()
        };
        let cfg = args.resolve_with(&file).unwrap();
        assert_eq!(cfg.top_n, 3);
        assert_eq!(cfg.shapley.mc_iterations, 50);
        assert_eq!(cfg.extraction.threshold, 0.5);
    }

    #[test]
    fn seed_reaches_every_stream() {
        let args = CommonArgs {
            manifest: Some("m".into()),
            hierarchy: Some("h".into()),
            out: Some("o".into()),
            seed: Some(42),
            ..CommonArgs::default()
        };
        let cfg = args.resolve().unwrap();
        assert_eq!(cfg.train.seed, 42);
        assert_eq!(cfg.shapley.master_seed, 42);
        assert_eq!(cfg.shapley.retrain.seed, 42);
    }

    #[test]
    fn neuron_file_formats() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.json");
        std::fs::write(&a, "[3, 1, 2]").unwrap();
        assert_eq!(read_neuron_file(&a).unwrap(), vec![3, 1, 2]);
        let b = dir.path().join("b.txt");
        std::fs::write(&b, "4\n5 6\n").unwrap();
        assert_eq!(read_neuron_file(&b).unwrap(), vec![4, 5, 6]);
    }

    #[test]
    fn pool_parsing() {
        assert_eq!(parse_pool("all").unwrap(), EvaluationPool::All);
        assert_eq!(parse_pool("128").unwrap(), EvaluationPool::SubsampleK(128));
        assert!(parse_pool("lots").is_err());
    }
}
