//! Stage functions behind the `charnet` binary.
//!
//! Each stage reads its declared inputs and writes one artifact. Outputs are
//! written to a temporary sibling and renamed into place, so a failing stage
//! never clobbers the artifact of an earlier run.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::Command;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::annotation::{fallback_annotate, ingest_annotations, write_annotations, AnnotationIndex, NarrativeUnit};
use crate::config::PipelineConfig;
use crate::corpus::{ingest, length_filter, read_prepared, segment_sentences, write_prepared, PreparedDocument};
use crate::lexicon::Lexicons;
use crate::metrics::{network_metrics, read_metrics_csv, write_metrics_csv, MetricsRecord};
use crate::network::{exclusion_filter, extract_network, read_graphs, write_graph, FilterThresholds};
use crate::stats::{compare_corpora, write_report, ComparisonReport};
use crate::storygen::{
    generate_stories, story_id, transcript_jsonl, ChatProvider, Clock, GenerationConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Generate,
    Ingest,
    Annotate,
    Extract,
    Metrics,
    Report,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Generate => "generate",
            Stage::Ingest => "ingest",
            Stage::Annotate => "annotate",
            Stage::Extract => "extract",
            Stage::Metrics => "metrics",
            Stage::Report => "report",
        })
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("{stage} stage failed: {message}")]
pub struct StageError {
    pub stage: Stage,
    /// The earlier stage whose artifact is missing, if that is the cause.
    pub requires: Option<Stage>,
    pub message: String,
}

impl StageError {
    fn new(stage: Stage, message: impl fmt::Display) -> Self {
        Self {
            stage,
            requires: None,
            message: message.to_string(),
        }
    }

    fn missing(stage: Stage, requires: Stage, message: impl fmt::Display) -> Self {
        Self {
            stage,
            requires: Some(requires),
            message: format!("{message} (produced by the {requires} stage)"),
        }
    }
}

fn at(stage: Stage) -> impl Fn(&dyn fmt::Display) -> StageError {
    move |e| StageError::new(stage, e)
}

fn temp_sibling(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".partial");
    path.with_file_name(name)
}

/// Writes `bytes` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let tmp = temp_sibling(path);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

fn require_input(stage: Stage, producer: Stage, path: &Path) -> Result<(), StageError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(StageError::missing(stage, producer, format!("missing input {}", path.display())))
    }
}

pub fn load_lexicons(config: &PipelineConfig, stage: Stage) -> Result<Lexicons, StageError> {
    Lexicons::load(&config.lexicons).map_err(|e| StageError::new(stage, e))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GenerateSummary {
    pub generated: usize,
    pub failed: usize,
    pub corpus: PathBuf,
}

/// Generates `n` stories into `out/corpus.jsonl`, with one transcript per
/// story under `out/transcripts/`. Failed stories keep their partial
/// transcript and are left out of the corpus.
pub fn generate_stage(
    config: &GenerationConfig,
    provider: &dyn ChatProvider,
    clock: &Clock,
    n: usize,
    out: &Path,
) -> Result<GenerateSummary, StageError> {
    let err = at(Stage::Generate);
    config.validate().map_err(|e| err(&e))?;
    let results = generate_stories(config, provider, clock, n);
    let transcripts = out.join("transcripts");
    let mut corpus = Vec::new();
    let mut failed = 0;
    for (i, result) in results.into_iter().enumerate() {
        let id = story_id(&config.model, i);
        let transcript = match result {
            Ok(story) => {
                let record = serde_json::json!({
                    "story_id": id,
                    "writer": config.model,
                    "text": story.text,
                });
                writeln!(corpus, "{record}").map_err(|e| err(&e))?;
                story.transcript
            }
            Err(e) => {
                log::error!("story {id}: {e}");
                failed += 1;
                e.transcript
            }
        };
        write_atomic(
            &transcripts.join(format!("{id}.jsonl")),
            transcript_jsonl(&transcript).as_bytes(),
        )
        .map_err(|e| err(&e))?;
    }
    let path = out.join("corpus.jsonl");
    write_atomic(&path, &corpus).map_err(|e| err(&e))?;
    Ok(GenerateSummary {
        generated: n - failed,
        failed,
        corpus: path,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IngestSummary {
    pub read: usize,
    pub skipped: usize,
    pub out_of_range: usize,
    pub kept: usize,
}

/// Reads a corpus, applies the word-count filter and writes sentence-split
/// documents with their unit boundaries.
pub fn ingest_stage(
    input: &Path,
    writer: Option<&str>,
    config: &PipelineConfig,
    out: &Path,
) -> Result<IngestSummary, StageError> {
    let err = at(Stage::Ingest);
    let ingested = ingest(input, writer).map_err(|e| err(&e))?;
    let read = ingested.stories.len() + ingested.skipped.len();
    let before = ingested.stories.len();
    let f = &config.filters;
    let stories = length_filter(ingested.stories, f.min_words, f.max_words);
    let out_of_range = before - stories.len();
    if out_of_range > 0 {
        log::info!(
            "{out_of_range} stories outside {}..={} words were dropped",
            f.min_words,
            f.max_words
        );
    }
    let docs: Vec<PreparedDocument> = stories.par_iter().map(segment_sentences).collect();
    let mut buf = Vec::new();
    write_prepared(&mut buf, &docs, config.unit_coefficient).map_err(|e| err(&e))?;
    write_atomic(out, &buf).map_err(|e| err(&e))?;
    Ok(IngestSummary {
        read,
        skipped: ingested.skipped.len(),
        out_of_range,
        kept: docs.len(),
    })
}

fn read_docs(stage: Stage, prepared: &Path) -> Result<Vec<PreparedDocument>, StageError> {
    require_input(stage, Stage::Ingest, prepared)?;
    read_prepared(prepared).map_err(|e| StageError::new(stage, e))
}

fn fallback_records(docs: &[PreparedDocument], lexicons: &Lexicons, coefficient: f64) -> Vec<Vec<NarrativeUnit>> {
    docs.par_iter()
        .map(|d| fallback_annotate(d, lexicons, coefficient))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct AnnotateSummary {
    pub documents: usize,
    pub units: usize,
}

/// Annotates a prepared corpus, with the rule-based fallback when `fallback`
/// is set and otherwise by running the configured sidecar. Sidecar output is
/// validated against the prepared documents before it replaces `out`.
pub fn annotate_stage(
    prepared: &Path,
    out: &Path,
    config: &PipelineConfig,
    fallback: bool,
) -> Result<AnnotateSummary, StageError> {
    let err = at(Stage::Annotate);
    let docs = read_docs(Stage::Annotate, prepared)?;
    if fallback {
        let lexicons = load_lexicons(config, Stage::Annotate)?;
        let annotated = fallback_records(&docs, &lexicons, config.unit_coefficient);
        let mut buf = Vec::new();
        for (doc, units) in docs.iter().zip(&annotated) {
            write_annotations(&mut buf, &doc.story_id, units).map_err(|e| err(&e))?;
        }
        write_atomic(out, &buf).map_err(|e| err(&e))?;
        return Ok(AnnotateSummary {
            documents: docs.len(),
            units: annotated.iter().map(Vec::len).sum(),
        });
    }

    let a = &config.annotator;
    let tmp = temp_sibling(out);
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| err(&e))?;
    }
    let status = Command::new(&a.command)
        .arg("--in")
        .arg(prepared)
        .arg("--out")
        .arg(&tmp)
        .args(["--ner-model", &a.ner_model, "--sentiment-model", &a.sentiment_model])
        .status()
        .map_err(|e| err(&format!("cannot run annotator {:?}: {e} (pass --fallback to annotate without it)", a.command)))?;
    if !status.success() {
        let _ = fs::remove_file(&tmp);
        return Err(err(&format!("annotator exited with {status}")));
    }
    let index = AnnotationIndex::read(&tmp).map_err(|e| err(&e))?;
    let mut units = 0;
    for doc in &docs {
        units += ingest_annotations(doc, index.records(&doc.story_id), config.unit_coefficient)
            .map_err(|e| err(&e))?
            .len();
    }
    fs::rename(&tmp, out).map_err(|e| err(&e))?;
    Ok(AnnotateSummary {
        documents: docs.len(),
        units,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExclusionRow {
    pub story_id: String,
    pub writer: String,
    pub node_count: Option<usize>,
    pub density: Option<f64>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtractSummary {
    pub documents: usize,
    pub retained: usize,
    pub excluded: Vec<ExclusionRow>,
}

/// Builds one network per document and keeps those passing the exclusion
/// filter. Without `annotations` the fallback annotator must be requested
/// explicitly. A document whose annotations do not fit is excluded with the
/// reason recorded.
pub fn extract_stage(
    prepared: &Path,
    annotations: Option<&Path>,
    fallback: bool,
    config: &PipelineConfig,
    out_graphs: &Path,
    out_exclusions: Option<&Path>,
) -> Result<ExtractSummary, StageError> {
    let err = at(Stage::Extract);
    let lexicons = load_lexicons(config, Stage::Extract)?;
    let docs = read_docs(Stage::Extract, prepared)?;
    let coefficient = config.unit_coefficient;
    let annotated: Vec<Result<Vec<NarrativeUnit>, String>> = match annotations {
        Some(path) => {
            require_input(Stage::Extract, Stage::Annotate, path)?;
            let index = AnnotationIndex::read(path).map_err(|e| err(&e))?;
            docs.par_iter()
                .map(|d| {
                    ingest_annotations(d, index.records(&d.story_id), coefficient).map_err(|e| {
                        log::error!("{e}");
                        format!("annotation error: {e}")
                    })
                })
                .collect()
        }
        None if fallback => fallback_records(&docs, &lexicons, coefficient)
            .into_iter()
            .map(Ok)
            .collect(),
        None => {
            return Err(StageError::missing(
                Stage::Extract,
                Stage::Annotate,
                "no annotations given and --fallback not set",
            ))
        }
    };

    let thresholds: FilterThresholds = config.filters.thresholds();
    let outcomes: Vec<Result<_, ExclusionRow>> = docs
        .par_iter()
        .zip(annotated)
        .map(|(doc, units)| {
            let exclusion = |node_count, density, reason| ExclusionRow {
                story_id: doc.story_id.clone(),
                writer: doc.writer.clone(),
                node_count,
                density,
                reason,
            };
            let units = units.map_err(|r| exclusion(None, None, r))?;
            let net = extract_network(&doc.story_id, &doc.writer, &units, &lexicons.names);
            let verdict = exclusion_filter(&net, &thresholds);
            match verdict.reason {
                None => Ok(net),
                Some(r) => Err(exclusion(Some(verdict.node_count), verdict.density, r)),
            }
        })
        .collect();

    let mut graphs = Vec::new();
    let mut excluded = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok(net) => write_graph(&mut graphs, &net).map_err(|e| err(&e))?,
            Err(row) => excluded.push(row),
        }
    }
    write_atomic(out_graphs, &graphs).map_err(|e| err(&e))?;
    if let Some(path) = out_exclusions {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["story_id", "writer", "node_count", "density", "reason"])
            .map_err(|e| err(&e))?;
        for row in &excluded {
            w.write_record([
                row.story_id.clone(),
                row.writer.clone(),
                row.node_count.map(|n| n.to_string()).unwrap_or_default(),
                row.density.map(|d| d.to_string()).unwrap_or_default(),
                row.reason.clone(),
            ])
            .map_err(|e| err(&e))?;
        }
        let bytes = w.into_inner().map_err(|e| err(&e))?;
        write_atomic(path, &bytes).map_err(|e| err(&e))?;
    }
    Ok(ExtractSummary {
        documents: docs.len(),
        retained: docs.len() - excluded.len(),
        excluded,
    })
}

/// Writes three metric rows (original, positive, negative) per graph.
pub fn metrics_stage(graphs: &Path, out: &Path) -> Result<Vec<MetricsRecord>, StageError> {
    let err = at(Stage::Metrics);
    require_input(Stage::Metrics, Stage::Extract, graphs)?;
    let file = File::open(graphs).map_err(|e| err(&e))?;
    let nets = read_graphs(BufReader::new(file)).map_err(|e| err(&e))?;
    let records: Vec<MetricsRecord> = nets.par_iter().flat_map_iter(network_metrics).collect();
    let mut buf = Vec::new();
    write_metrics_csv(&mut buf, &records).map_err(|e| err(&e))?;
    write_atomic(out, &buf).map_err(|e| err(&e))?;
    Ok(records)
}

/// Writer comparison CSVs into `out_dir`.
pub fn report_stage(
    metrics: &Path,
    writers: Option<&[String]>,
    out_dir: &Path,
) -> Result<ComparisonReport, StageError> {
    let err = at(Stage::Report);
    require_input(Stage::Report, Stage::Metrics, metrics)?;
    let file = File::open(metrics).map_err(|e| err(&e))?;
    let records = read_metrics_csv(file).map_err(|e| err(&e))?;
    let report = compare_corpora(&records, writers).map_err(|e| err(&e))?;
    write_report(out_dir, &report).map_err(|e| err(&e))?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub ingest: IngestSummary,
    pub annotate: AnnotateSummary,
    pub extract: ExtractSummary,
    pub metric_rows: usize,
    pub writers: Vec<String>,
}

/// Ingest, annotate, extract, metrics and report in sequence, with every
/// artifact under `config.work_dir`.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunSummary, StageError> {
    config.validate().map_err(|e| StageError::new(Stage::Ingest, e))?;
    let corpus = config
        .corpus
        .as_deref()
        .ok_or_else(|| StageError::new(Stage::Ingest, "no input corpus configured"))?;
    let a = config.artifacts();
    let ingest = ingest_stage(corpus, config.writer.as_deref(), config, &a.prepared)?;
    let annotate = annotate_stage(&a.prepared, &a.annotations, config, config.fallback)?;
    let extract = extract_stage(
        &a.prepared,
        Some(&a.annotations),
        false,
        config,
        &a.graphs,
        Some(&a.exclusions),
    )?;
    let metric_rows = metrics_stage(&a.graphs, &a.metrics)?.len();
    let report = report_stage(&a.metrics, config.writers.as_deref(), &a.report_dir)?;
    Ok(RunSummary {
        ingest,
        annotate,
        extract,
        metric_rows,
        writers: report.writers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extract_without_annotations_names_annotate() {
        let dir = tempfile::tempdir().unwrap();
        let prepared = dir.path().join("prepared.jsonl");
        fs::write(&prepared, "").unwrap();
        let e = extract_stage(
            &prepared,
            None,
            false,
            &PipelineConfig::default(),
            &dir.path().join("g.jsonl"),
            None,
        )
        .unwrap_err();
        assert_eq!((e.stage, e.requires), (Stage::Extract, Some(Stage::Annotate)));
        assert!(e.to_string().contains("annotate stage"));
    }

    #[test]
    fn missing_inputs_name_their_producer() {
        let dir = tempfile::tempdir().unwrap();
        let nowhere = dir.path().join("none");
        let e = metrics_stage(&nowhere, &dir.path().join("m.csv")).unwrap_err();
        assert_eq!(e.requires, Some(Stage::Extract));
        let e = report_stage(&nowhere, None, dir.path()).unwrap_err();
        assert_eq!(e.requires, Some(Stage::Metrics));
        let e = annotate_stage(&nowhere, &dir.path().join("a"), &PipelineConfig::default(), true).unwrap_err();
        assert_eq!(e.requires, Some(Stage::Ingest));
    }

    #[test]
    fn failed_stage_keeps_previous_artifact() {
        let dir = tempfile::tempdir().unwrap();
        let graphs = dir.path().join("graphs.jsonl");
        fs::write(&graphs, "not a graph\n").unwrap();
        let metrics = dir.path().join("metrics.csv");
        fs::write(&metrics, "old").unwrap();
        assert!(metrics_stage(&graphs, &metrics).is_err());
        assert_eq!(fs::read_to_string(&metrics).unwrap(), "old");
    }

    #[test]
    fn missing_sidecar_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let prepared = dir.path().join("prepared.jsonl");
        fs::write(&prepared, "").unwrap();
        let mut config = PipelineConfig::default();
        config.annotator.command = dir.path().join("no-such-annotator").display().to_string();
        let out = dir.path().join("ann.jsonl");
        let e = annotate_stage(&prepared, &out, &config, false).unwrap_err();
        assert_eq!(e.stage, Stage::Annotate);
        assert!(!out.exists());
    }
}
