//! Narrative units and their annotations.
//!
//! A narrative unit is a run of consecutive sentences whose length is a fixed
//! fraction of the story's sentence count. Each unit carries one scalar
//! sentiment logit (positive-class minus negative-class logit) and the
//! character mentions found in it.
//!
//! Annotation files are line-delimited JSON, one record per unit:
//!
//! ```text
//! {"story_id":"s1","unit_index":0,"sentence_start":0,"sentence_end":3,"logit":1.25,
//!  "mentions":[{"surface":"Alice","sentence_index":0,"char_start":0,"char_end":5}]}
//! ```
//!
//! Offsets count Unicode scalar values within the sentence string. Records of
//! one document are contiguous and ordered by `unit_index`.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{is_heading, PreparedDocument};
use crate::lexicon::Lexicons;
use crate::names::TitleTable;

pub const DEFAULT_UNIT_COEFFICIENT: f64 = 0.01;

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("annotation line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("story {story_id}: records are not contiguous (line {line})")]
    NotContiguous { story_id: String, line: usize },
    #[error("story {story_id}: missing unit {unit_index}")]
    MissingUnit { story_id: String, unit_index: usize },
    #[error("story {story_id}: unexpected record for unit {unit_index}")]
    UnexpectedUnit { story_id: String, unit_index: usize },
    #[error(
        "story {story_id}: unit {unit_index} spans [{found_start}, {found_end}) but expected [{expected_start}, {expected_end})"
    )]
    BoundaryMismatch {
        story_id: String,
        unit_index: usize,
        expected_start: usize,
        expected_end: usize,
        found_start: usize,
        found_end: usize,
    },
    #[error("story {story_id}: unit {unit_index}: bad mention {surface:?}: {reason}")]
    MalformedMention {
        story_id: String,
        unit_index: usize,
        surface: String,
        reason: String,
    },
    #[error("story {story_id}: unit {unit_index}: logit is not finite")]
    NonFiniteLogit { story_id: String, unit_index: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MentionSpan {
    pub surface: String,
    pub sentence_index: usize,
    pub char_start: usize,
    pub char_end: usize,
}

/// Unit boundaries before annotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UnitSpan {
    pub unit_index: usize,
    pub sentence_start: usize,
    pub sentence_end: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NarrativeUnit {
    pub unit_index: usize,
    pub sentence_start: usize,
    pub sentence_end: usize,
    pub logit: f64,
    pub mentions: Vec<MentionSpan>,
}

/// `max(1, floor(coefficient * n))` sentences.
pub fn unit_length(sentence_count: usize, coefficient: f64) -> usize {
    ((sentence_count as f64 * coefficient).floor() as usize).max(1)
}

/// Consecutive windows of `unit_length` sentences; the last one holds the remainder.
pub fn segment_units(doc: &PreparedDocument, coefficient: f64) -> Vec<UnitSpan> {
    let n = doc.sentence_count();
    let len = unit_length(n, coefficient);
    (0..n)
        .step_by(len)
        .enumerate()
        .map(|(unit_index, start)| UnitSpan {
            unit_index,
            sentence_start: start,
            sentence_end: (start + len).min(n),
        })
        .collect()
}

/// One line of an annotation file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub story_id: String,
    pub unit_index: usize,
    pub sentence_start: usize,
    pub sentence_end: usize,
    pub logit: f64,
    pub mentions: Vec<MentionSpan>,
    /// Set by the sidecar when the unit text was cut to fit the model context.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub truncated: bool,
}

impl AnnotationRecord {
    pub fn from_unit(story_id: &str, unit: &NarrativeUnit) -> Self {
        Self {
            story_id: story_id.to_string(),
            unit_index: unit.unit_index,
            sentence_start: unit.sentence_start,
            sentence_end: unit.sentence_end,
            logit: unit.logit,
            mentions: unit.mentions.clone(),
            truncated: false,
        }
    }
}

/// Annotation records grouped per story, in file order.
#[derive(Debug, Default)]
pub struct AnnotationIndex {
    by_story: HashMap<String, Vec<AnnotationRecord>>,
}

impl AnnotationIndex {
    pub fn read(path: &Path) -> Result<Self, AnnotationError> {
        let file = File::open(path).map_err(|source| AnnotationError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_reader(BufReader::new(file))
    }

    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self, AnnotationError> {
        let mut index = Self::default();
        let mut finished: HashSet<String> = HashSet::new();
        let mut current: Option<String> = None;
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: AnnotationRecord =
                serde_json::from_str(&line).map_err(|e| AnnotationError::Malformed {
                    line: idx + 1,
                    reason: e.to_string(),
                })?;
            if current.as_deref() != Some(record.story_id.as_str()) {
                if let Some(prev) = current.take() {
                    finished.insert(prev);
                }
                if finished.contains(&record.story_id) {
                    return Err(AnnotationError::NotContiguous {
                        story_id: record.story_id,
                        line: idx + 1,
                    });
                }
                current = Some(record.story_id.clone());
            }
            index
                .by_story
                .entry(record.story_id.clone())
                .or_default()
                .push(record);
        }
        Ok(index)
    }

    pub fn records(&self, story_id: &str) -> &[AnnotationRecord] {
        self.by_story.get(story_id).map_or(&[], Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.by_story.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_story.is_empty()
    }
}

/// Checks a document's records against its own unit segmentation and
/// returns the fully annotated units.
pub fn ingest_annotations(
    doc: &PreparedDocument,
    records: &[AnnotationRecord],
    coefficient: f64,
) -> Result<Vec<NarrativeUnit>, AnnotationError> {
    let spans = segment_units(doc, coefficient);
    let story_id = || doc.story_id.clone();
    if records.len() > spans.len() {
        return Err(AnnotationError::UnexpectedUnit {
            story_id: story_id(),
            unit_index: records[spans.len()].unit_index,
        });
    }
    let mut units = Vec::with_capacity(spans.len());
    for (i, span) in spans.iter().enumerate() {
        let Some(record) = records.get(i) else {
            return Err(AnnotationError::MissingUnit {
                story_id: story_id(),
                unit_index: i,
            });
        };
        if record.unit_index != span.unit_index {
            return Err(if record.unit_index > span.unit_index {
                AnnotationError::MissingUnit {
                    story_id: story_id(),
                    unit_index: span.unit_index,
                }
            } else {
                AnnotationError::UnexpectedUnit {
                    story_id: story_id(),
                    unit_index: record.unit_index,
                }
            });
        }
        if (record.sentence_start, record.sentence_end) != (span.sentence_start, span.sentence_end) {
            return Err(AnnotationError::BoundaryMismatch {
                story_id: story_id(),
                unit_index: span.unit_index,
                expected_start: span.sentence_start,
                expected_end: span.sentence_end,
                found_start: record.sentence_start,
                found_end: record.sentence_end,
            });
        }
        if !record.logit.is_finite() {
            return Err(AnnotationError::NonFiniteLogit {
                story_id: story_id(),
                unit_index: span.unit_index,
            });
        }
        if record.truncated {
            log::warn!(
                "{}: unit {} was truncated by the annotator",
                doc.story_id,
                span.unit_index
            );
        }
        for mention in &record.mentions {
            check_mention(doc, span, mention).map_err(|reason| {
                AnnotationError::MalformedMention {
                    story_id: story_id(),
                    unit_index: span.unit_index,
                    surface: mention.surface.clone(),
                    reason,
                }
            })?;
        }
        units.push(NarrativeUnit {
            unit_index: span.unit_index,
            sentence_start: span.sentence_start,
            sentence_end: span.sentence_end,
            logit: record.logit,
            mentions: record.mentions.clone(),
        });
    }
    Ok(units)
}

fn check_mention(doc: &PreparedDocument, span: &UnitSpan, m: &MentionSpan) -> Result<(), String> {
    if !(span.sentence_start..span.sentence_end).contains(&m.sentence_index) {
        return Err(format!("sentence {} outside the unit", m.sentence_index));
    }
    let sentence = &doc.sentences[m.sentence_index];
    let len = sentence.chars().count();
    if m.char_start >= m.char_end || m.char_end > len {
        return Err(format!(
            "offsets [{}, {}) invalid for a sentence of {len} characters",
            m.char_start, m.char_end
        ));
    }
    let slice: String = sentence
        .chars()
        .skip(m.char_start)
        .take(m.char_end - m.char_start)
        .collect();
    if slice != m.surface {
        return Err(format!("offsets select {slice:?}"));
    }
    Ok(())
}

pub fn write_annotations<W: Write>(
    mut out: W,
    story_id: &str,
    units: &[NarrativeUnit],
) -> Result<(), AnnotationError> {
    for unit in units {
        serde_json::to_writer(&mut out, &AnnotationRecord::from_unit(story_id, unit))
            .map_err(io::Error::from)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Rule-based stand-in for the model-backed annotator.
///
/// Mentions are maximal runs of capitalized, non-stopword tokens, optionally
/// led by a title. Heading sentences contribute no mentions. The logit is the count of positive-lexicon words minus the
/// count of negative-lexicon words in the unit.
pub fn fallback_annotate(
    doc: &PreparedDocument,
    lexicons: &Lexicons,
    coefficient: f64,
) -> Vec<NarrativeUnit> {
    segment_units(doc, coefficient)
        .into_iter()
        .map(|span| {
            let mut logit = 0i32;
            let mut mentions = Vec::new();
            for s in span.sentence_start..span.sentence_end {
                let tokens = tokenize(&doc.sentences[s]);
                logit += tokens
                    .iter()
                    .map(|t| lexicons.sentiment.polarity(&t.core))
                    .sum::<i32>();
                if !is_heading(&doc.sentences[s]) {
                    mentions.extend(find_mentions(&doc.sentences[s], s, &tokens, lexicons));
                }
            }
            NarrativeUnit {
                unit_index: span.unit_index,
                sentence_start: span.sentence_start,
                sentence_end: span.sentence_end,
                logit: f64::from(logit),
                mentions,
            }
        })
        .collect()
}

#[derive(Debug)]
struct Token {
    /// Word with surrounding punctuation and any possessive removed.
    core: String,
    /// Character offsets of `core` in the sentence.
    start: usize,
    end: usize,
    /// Punctuation after the core (a comma, a full stop, ...) breaks a name run.
    breaks_after: bool,
    /// Core followed by a period, e.g. `Dr.`.
    dotted: bool,
}

fn tokenize(sentence: &str) -> Vec<Token> {
    let chars: Vec<char> = sentence.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_whitespace() {
            i += 1;
            continue;
        }
        let tok_start = i;
        while i < chars.len() && !chars[i].is_whitespace() {
            i += 1;
        }
        let tok_end = i;
        let mut start = tok_start;
        while start < tok_end && !chars[start].is_alphanumeric() {
            start += 1;
        }
        let mut end = tok_end;
        while end > start && !chars[end - 1].is_alphanumeric() {
            end -= 1;
        }
        if start == end {
            continue;
        }
        let mut core_end = end;
        if core_end - start > 2
            && matches!(chars[core_end - 2], '\'' | '\u{2019}')
            && matches!(chars[core_end - 1], 's' | 'S')
        {
            core_end -= 2;
        }
        tokens.push(Token {
            core: chars[start..core_end].iter().collect(),
            start,
            end: core_end,
            breaks_after: core_end < tok_end,
            dotted: end < tok_end && chars[end] == '.',
        });
    }
    tokens
}

fn is_name_token(token: &Token, lexicons: &Lexicons) -> bool {
    let mut chars = token.core.chars();
    chars.next().is_some_and(char::is_uppercase)
        && token.core.chars().any(char::is_alphabetic)
        && !lexicons.stopwords.contains(&token.core.to_lowercase())
}

fn find_mentions(
    sentence: &str,
    sentence_index: usize,
    tokens: &[Token],
    lexicons: &Lexicons,
) -> Vec<MentionSpan> {
    let titles: &TitleTable = &lexicons.names.titles;
    let mut out = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        if !is_name_token(&tokens[i], lexicons) {
            i += 1;
            continue;
        }
        let leading_title = titles.is_title(&tokens[i].core)
            && (tokens[i].dotted || !tokens[i].breaks_after);
        let mut j = i;
        let mut open = leading_title || !tokens[i].breaks_after;
        while open && j + 1 < tokens.len() && is_name_token(&tokens[j + 1], lexicons) {
            j += 1;
            open = !tokens[j].breaks_after;
        }
        if j > i || !leading_title {
            let (char_start, char_end) = (tokens[i].start, tokens[j].end);
            out.push(MentionSpan {
                surface: sentence
                    .chars()
                    .skip(char_start)
                    .take(char_end - char_start)
                    .collect(),
                sentence_index,
                char_start,
                char_end,
            });
        }
        i = j + 1;
    }
    out
}
