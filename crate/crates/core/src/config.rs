//! Pipeline configuration, read from TOML.
//!
//! ```toml
//! corpus = "stories.jsonl"
//! work_dir = "out"
//! unit_coefficient = 0.01
//!
//! [filters]
//! min_nodes = 10
//! min_density = 0.1
//! min_words = 3000
//! max_words = 15000
//!
//! [lexicons]
//! nicknames = "my_nicknames.txt"
//!
//! [annotator]
//! command = "annotator"
//!
//! [generation]
//! model = "gpt-4o"
//! ```
//!
//! Every key is optional. Command-line flags override file values.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::DEFAULT_UNIT_COEFFICIENT;
use crate::lexicon::LexiconPaths;
use crate::network::{FilterThresholds, DEFAULT_MIN_DENSITY, DEFAULT_MIN_NODES};
use crate::storygen::{ConfigError as GenerationConfigError, GenerationConfig};

pub const DEFAULT_MIN_WORDS: usize = 3000;
pub const DEFAULT_MAX_WORDS: usize = 15000;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
    #[error("{0}")]
    Invalid(String),
    #[error("generation: {0}")]
    Generation(#[from] GenerationConfigError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub min_nodes: usize,
    pub min_density: f64,
    pub min_words: usize,
    pub max_words: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            min_nodes: DEFAULT_MIN_NODES,
            min_density: DEFAULT_MIN_DENSITY,
            min_words: DEFAULT_MIN_WORDS,
            max_words: DEFAULT_MAX_WORDS,
        }
    }
}

impl FilterConfig {
    pub fn thresholds(&self) -> FilterThresholds {
        FilterThresholds {
            min_nodes: self.min_nodes,
            min_density: self.min_density,
        }
    }
}

/// How the model-backed annotator is invoked:
/// `command --in PREPARED --out ANNOTATIONS --ner-model ID --sentiment-model ID`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnotatorConfig {
    pub command: String,
    pub ner_model: String,
    pub sentiment_model: String,
}

impl Default for AnnotatorConfig {
    fn default() -> Self {
        Self {
            command: "annotator".into(),
            ner_model: "dslim/bert-base-NER".into(),
            sentiment_model: "siebert/sentiment-roberta-large-english".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Input corpus for the ingest stage.
    pub corpus: Option<PathBuf>,
    /// Overrides the writer label of every ingested record.
    pub writer: Option<String>,
    /// Directory holding every stage artifact.
    pub work_dir: PathBuf,
    /// Writer order for the report; lexicographic when absent.
    pub writers: Option<Vec<String>>,
    /// Use the rule-based annotator instead of the sidecar.
    pub fallback: bool,
    pub unit_coefficient: f64,
    /// Reserved for randomized tie-breaking; no stage currently draws from it.
    pub seed: u64,
    pub filters: FilterConfig,
    pub lexicons: LexiconPaths,
    pub annotator: AnnotatorConfig,
    pub generation: GenerationConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            corpus: None,
            writer: None,
            work_dir: PathBuf::from("charnet-out"),
            writers: None,
            fallback: false,
            unit_coefficient: DEFAULT_UNIT_COEFFICIENT,
            seed: 0,
            filters: FilterConfig::default(),
            lexicons: LexiconPaths::default(),
            annotator: AnnotatorConfig::default(),
            generation: GenerationConfig::default(),
        }
    }
}

/// Artifact locations inside the work directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifacts {
    pub prepared: PathBuf,
    pub annotations: PathBuf,
    pub graphs: PathBuf,
    pub exclusions: PathBuf,
    pub metrics: PathBuf,
    pub report_dir: PathBuf,
}

impl Artifacts {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            prepared: dir.join("prepared.jsonl"),
            annotations: dir.join("annotations.jsonl"),
            graphs: dir.join("graphs.jsonl"),
            exclusions: dir.join("exclusions.csv"),
            metrics: dir.join("metrics.csv"),
            report_dir: dir.join("report"),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let config: Self = toml::from_str(text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text, path)
    }

    pub fn artifacts(&self) -> Artifacts {
        Artifacts::in_dir(&self.work_dir)
    }

    /// Checks the pipeline constants. Generation settings are checked only by
    /// the generate command.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let f = &self.filters;
        if f.min_nodes == 0 {
            return Err(ConfigError::Invalid("filters.min_nodes must be positive".into()));
        }
        if !(f.min_density.is_finite() && f.min_density > 0.0) {
            return Err(ConfigError::Invalid(format!(
                "filters.min_density must be positive, got {}",
                f.min_density
            )));
        }
        if f.min_words == 0 || f.min_words > f.max_words {
            return Err(ConfigError::Invalid(format!(
                "filters need 0 < min_words <= max_words, got {} and {}",
                f.min_words, f.max_words
            )));
        }
        if !(self.unit_coefficient > 0.0 && self.unit_coefficient < 1.0) {
            return Err(ConfigError::Invalid(format!(
                "unit_coefficient must lie in (0, 1), got {}",
                self.unit_coefficient
            )));
        }
        Ok(())
    }
}
