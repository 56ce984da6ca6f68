//! Story ingestion, length filtering and sentence segmentation.
//!
//! Corpus files hold one JSON object per line with `story_id`, `writer` and
//! `text`. Prepared corpora are written the same way with a `sentences` array
//! in place of the text, plus the narrative unit boundaries so that an
//! external annotator never has to re-segment.

use std::collections::HashSet;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::segment_units;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawStory {
    pub story_id: String,
    pub writer: String,
    pub text: String,
    pub word_count: usize,
}

impl RawStory {
    pub fn new(story_id: impl Into<String>, writer: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        Self {
            story_id: story_id.into(),
            writer: writer.into(),
            word_count: word_count(&text),
            text,
        }
    }
}

/// Whitespace-token count.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// A record that was dropped during ingestion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedRecord {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Default)]
pub struct Ingested {
    pub stories: Vec<RawStory>,
    pub skipped: Vec<SkippedRecord>,
}

#[derive(Deserialize)]
struct CorpusRecord {
    story_id: Option<String>,
    writer: Option<String>,
    text: Option<String>,
}

pub fn ingest(path: &Path, writer: Option<&str>) -> Result<Ingested, CorpusError> {
    let file = File::open(path).map_err(|source| CorpusError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    ingest_reader(BufReader::new(file), writer)
}

/// Parses a line-delimited corpus. Bad records are skipped and reported with
/// their 1-based line number; only I/O failures abort.
pub fn ingest_reader<R: BufRead>(reader: R, writer: Option<&str>) -> Result<Ingested, CorpusError> {
    let mut out = Ingested::default();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_record(&line, writer) {
            Ok(story) if !seen.insert(story.story_id.clone()) => {
                out.skipped.push(skip(line_no, format!("duplicate story_id {:?}", story.story_id)));
            }
            Ok(story) => out.stories.push(story),
            Err(reason) => out.skipped.push(skip(line_no, reason)),
        }
    }
    Ok(out)
}

fn skip(line: usize, reason: String) -> SkippedRecord {
    log::warn!("corpus line {line} skipped: {reason}");
    SkippedRecord { line, reason }
}

fn parse_record(line: &str, writer: Option<&str>) -> Result<RawStory, String> {
    let record: CorpusRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let story_id = record.story_id.ok_or("missing story_id")?;
    let writer = writer
        .map(str::to_string)
        .or(record.writer)
        .ok_or("missing writer")?;
    let text = record.text.ok_or("missing text")?;
    if text.trim().is_empty() {
        return Err("empty text".into());
    }
    Ok(RawStory::new(story_id, writer, text))
}

/// Keeps stories with `min <= word_count <= max`, in input order.
pub fn length_filter(stories: Vec<RawStory>, min: usize, max: usize) -> Vec<RawStory> {
    debug_assert!(min <= max);
    stories
        .into_iter()
        .filter(|s| (min..=max).contains(&s.word_count))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreparedDocument {
    pub story_id: String,
    pub writer: String,
    pub sentences: Vec<String>,
}

impl PreparedDocument {
    pub fn sentence_count(&self) -> usize {
        self.sentences.len()
    }
}

const ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "prof", "st", "capt", "col", "sgt", "rev", "jr", "sr",
];

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

fn is_closer(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '\u{201d}' | '\u{2019}' | '*')
}

fn is_opener(c: char) -> bool {
    matches!(c, '"' | '\'' | '(' | '[' | '\u{201c}' | '\u{2018}' | '*')
}

/// Splits a story into sentences.
///
/// A sentence ends at a run of `.`, `!` or `?` (plus closing quotes or
/// brackets) followed by whitespace and an uppercase letter, possibly behind
/// an opening quote, or by the end of the text. A period after an honorific
/// never ends a sentence. Blank lines also end a sentence, and a markdown
/// heading line is a sentence of its own. Whitespace inside a sentence is
/// collapsed to single spaces.
pub fn segment_sentences(story: &RawStory) -> PreparedDocument {
    let text = story.text.as_str();
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut sentences = Vec::new();
    let mut start = 0usize;
    let mut i = 0usize;
    while i < chars.len() {
        let (_, c) = chars[i];
        if c == '\n' && (blank_line_follows(&chars, i) || heading_edge(text, chars[i].0)) {
            push_sentence(&mut sentences, &text[start..chars[i].0]);
            start = chars[i].0;
            i += 1;
            continue;
        }
        if !is_terminator(c) {
            i += 1;
            continue;
        }
        let mut end = i + 1;
        while end < chars.len() && (is_terminator(chars[end].1) || is_closer(chars[end].1)) {
            end += 1;
        }
        let boundary = if c == '.' && end == i + 1 && follows_abbreviation(text, chars[i].0) {
            false
        } else if end == chars.len() {
            true
        } else {
            starts_new_sentence(&chars[end..])
        };
        if boundary {
            let byte_end = chars.get(end).map_or(text.len(), |&(b, _)| b);
            push_sentence(&mut sentences, &text[start..byte_end]);
            start = byte_end;
        }
        i = end;
    }
    push_sentence(&mut sentences, &text[start..]);
    if sentences.is_empty() {
        push_sentence(&mut sentences, text);
    }
    PreparedDocument {
        story_id: story.story_id.clone(),
        writer: story.writer.clone(),
        sentences,
    }
}

/// A line that is wholly bold (`**Title**`) or starts with `#`.
pub fn is_heading(line: &str) -> bool {
    let t = line.trim();
    t.starts_with('#') || (t.len() > 4 && t.starts_with("**") && t.ends_with("**"))
}

/// Whether the line ending or starting at the newline at `byte` is a heading.
fn heading_edge(text: &str, byte: usize) -> bool {
    let before = text[..byte].rsplit('\n').next().unwrap_or("");
    let after = text[byte + 1..].split('\n').next().unwrap_or("");
    is_heading(before) || is_heading(after)
}

fn blank_line_follows(chars: &[(usize, char)], i: usize) -> bool {
    chars[i + 1..]
        .iter()
        .map(|&(_, c)| c)
        .take_while(|c| c.is_whitespace())
        .any(|c| c == '\n')
}

fn starts_new_sentence(rest: &[(usize, char)]) -> bool {
    let mut iter = rest.iter().map(|&(_, c)| c).peekable();
    if !iter.peek().is_some_and(|c| c.is_whitespace()) {
        return false;
    }
    while iter.peek().is_some_and(|c| c.is_whitespace()) {
        iter.next();
    }
    while iter.peek().is_some_and(|&c| is_opener(c)) {
        iter.next();
    }
    iter.next().is_some_and(char::is_uppercase)
}

fn follows_abbreviation(text: &str, period: usize) -> bool {
    let word = text[..period]
        .rsplit(char::is_whitespace)
        .next()
        .unwrap_or("")
        .trim_start_matches(|c: char| !c.is_alphanumeric());
    ABBREVIATIONS.contains(&word.to_lowercase().as_str())
}

fn push_sentence(out: &mut Vec<String>, raw: &str) {
    let collapsed = raw.split_whitespace().collect::<Vec<_>>().join(" ");
    if !collapsed.is_empty() {
        out.push(collapsed);
    }
}

#[derive(Serialize, Deserialize)]
struct PreparedRecord {
    story_id: String,
    writer: String,
    sentences: Vec<String>,
    #[serde(default)]
    units: Vec<[usize; 2]>,
}

/// Writes one prepared record per document, including `[start, end)` unit
/// boundaries for the given unit-length coefficient.
pub fn write_prepared<W: Write>(
    mut out: W,
    docs: &[PreparedDocument],
    unit_coefficient: f64,
) -> Result<(), CorpusError> {
    for doc in docs {
        let record = PreparedRecord {
            story_id: doc.story_id.clone(),
            writer: doc.writer.clone(),
            sentences: doc.sentences.clone(),
            units: segment_units(doc, unit_coefficient)
                .iter()
                .map(|u| [u.sentence_start, u.sentence_end])
                .collect(),
        };
        serde_json::to_writer(&mut out, &record).map_err(io::Error::from)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_prepared(path: &Path) -> Result<Vec<PreparedDocument>, CorpusError> {
    let file = File::open(path).map_err(|source| CorpusError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let mut docs = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: PreparedRecord =
            serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
                line: idx + 1,
                reason: e.to_string(),
            })?;
        if record.sentences.is_empty() {
            return Err(CorpusError::Malformed {
                line: idx + 1,
                reason: "document has no sentences".into(),
            });
        }
        docs.push(PreparedDocument {
            story_id: record.story_id,
            writer: record.writer,
            sentences: record.sentences,
        });
    }
    Ok(docs)
}
