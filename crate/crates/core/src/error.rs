use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed hierarchy: {0}")]
    Parse(String),

    #[error("hierarchy contains a cycle through concept '{0}'")]
    Cycle(String),

    #[error("dangling reference: {context} refers to unknown concept '{target}'")]
    DanglingRef { context: String, target: String },

    #[error("unknown concept '{0}'")]
    UnknownConcept(String),

    #[error("unknown label '{0}'")]
    UnknownLabel(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad magic: not a tensor file")]
    BadMagic,

    #[error("unsupported tensor file version {0}")]
    UnsupportedVersion(u32),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value in tensor payload at offset {0}")]
    NonFiniteData(usize),

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("neuron set is empty")]
    EmptyNeuronSet,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("concept '{0}' has no positive activations")]
    EmptyPositives(String),

    #[error("concept '{0}' has no negative activations")]
    EmptyNegatives(String),

    #[error("training diverged for concept '{concept}' at epoch {epoch}")]
    Diverged { concept: String, epoch: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty evaluation set for concept '{0}'")]
    EmptyEvaluationSet(String),

    #[error("exact Shapley enumeration supports at most {max} neurons, got {got}")]
    TooManyNeurons { max: usize, got: usize },

    #[error("no foreground above the mask threshold")]
    NoForeground,

    #[error("ground-truth mask is empty")]
    EmptyGroundTruth,

    #[error("both masks are empty")]
    BothEmpty,

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("sample '{sample}': {source}")]
    Sample {
        sample: String,
        #[source]
        source: Box<Error>,
    },

    #[error("concept '{concept}': {source}")]
    Concept {
        concept: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_sample(self, sample: &str) -> Self {
        Error::Sample {
            sample: sample.to_string(),
            source: Box::new(self),
        }
    }

    pub(crate) fn in_concept(self, concept: &str) -> Self {
        Error::Concept {
            concept: concept.to_string(),
            source: Box::new(self),
        }
    }

    /// Strips `Sample`/`Concept` context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Sample { source, .. } | Error::Concept { source, .. } => source.root(),
            other => other,
        }
    }
}
