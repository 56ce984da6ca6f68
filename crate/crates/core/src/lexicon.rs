//! Plain-text lexicons shipped with the crate or loaded from disk.
//!
//! Every lexicon file uses the same line format: a canonical entry followed by
//! optional comma-separated variants. Blank lines and lines starting with `#`
//! are ignored.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::names::{Gender, NameLexicons, TitleTable};

const MALE_NAMES: &str = include_str!("../data/male_names.txt");
const FEMALE_NAMES: &str = include_str!("../data/female_names.txt");
const NICKNAMES: &str = include_str!("../data/nicknames.txt");
const TITLES: &str = include_str!("../data/titles.txt");
const POSITIVE_WORDS: &str = include_str!("../data/positive_words.txt");
const NEGATIVE_WORDS: &str = include_str!("../data/negative_words.txt");
const STOPWORDS: &str = include_str!("../data/stopwords.txt");

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("cannot read lexicon {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("lexicon {path} has no entries")]
    Empty { path: PathBuf },
}

/// One parsed lexicon line: the canonical entry and its variants.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexiconLine {
    pub canonical: String,
    pub variants: Vec<String>,
}

pub fn parse_lines(text: &str) -> Vec<LexiconLine> {
    text.lines()
        .map(str::trim)
        .filter(|line| !line.is_empty() && !line.starts_with('#'))
        .filter_map(|line| {
            let mut parts = line.split(',').map(str::trim).filter(|p| !p.is_empty());
            let canonical = parts.next()?.to_string();
            Some(LexiconLine {
                canonical,
                variants: parts.map(str::to_string).collect(),
            })
        })
        .collect()
}

/// Signed word lexicon used by the fallback annotator.
#[derive(Debug, Clone, Default)]
pub struct SentimentLexicon {
    positive: HashSet<String>,
    negative: HashSet<String>,
}

impl SentimentLexicon {
    pub fn new<I, J, S, T>(positive: I, negative: J) -> Self
    where
        I: IntoIterator<Item = S>,
        J: IntoIterator<Item = T>,
        S: AsRef<str>,
        T: AsRef<str>,
    {
        Self {
            positive: positive.into_iter().map(|w| w.as_ref().to_lowercase()).collect(),
            negative: negative.into_iter().map(|w| w.as_ref().to_lowercase()).collect(),
        }
    }

    /// +1 for a positive word, -1 for a negative one, 0 otherwise.
    pub fn polarity(&self, word: &str) -> i32 {
        let word = word.to_lowercase();
        i32::from(self.positive.contains(&word)) - i32::from(self.negative.contains(&word))
    }
}

/// Overrides for the bundled lexicons. `None` keeps the bundled file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LexiconPaths {
    pub male_names: Option<PathBuf>,
    pub female_names: Option<PathBuf>,
    pub nicknames: Option<PathBuf>,
    pub titles: Option<PathBuf>,
    pub positive_words: Option<PathBuf>,
    pub negative_words: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
}

/// All read-only word lists used by the pipeline.
#[derive(Debug, Clone)]
pub struct Lexicons {
    pub names: NameLexicons,
    pub sentiment: SentimentLexicon,
    pub stopwords: HashSet<String>,
}

impl Lexicons {
    pub fn bundled() -> Self {
        Self::from_texts(&LexiconTexts::bundled())
    }

    pub fn load(paths: &LexiconPaths) -> Result<Self, LexiconError> {
        let bundled = LexiconTexts::bundled();
        let texts = LexiconTexts {
            male_names: read_or(paths.male_names.as_deref(), bundled.male_names)?,
            female_names: read_or(paths.female_names.as_deref(), bundled.female_names)?,
            nicknames: read_or(paths.nicknames.as_deref(), bundled.nicknames)?,
            titles: read_or(paths.titles.as_deref(), bundled.titles)?,
            positive_words: read_or(paths.positive_words.as_deref(), bundled.positive_words)?,
            negative_words: read_or(paths.negative_words.as_deref(), bundled.negative_words)?,
            stopwords: read_or(paths.stopwords.as_deref(), bundled.stopwords)?,
        };
        Ok(Self::from_texts(&texts))
    }

    fn from_texts(texts: &LexiconTexts<'_>) -> Self {
        let flatten = |text: &str| -> HashSet<String> {
            parse_lines(text)
                .into_iter()
                .flat_map(|line| std::iter::once(line.canonical).chain(line.variants))
                .map(|w| w.to_lowercase())
                .collect()
        };
        let nicknames: HashMap<String, Vec<String>> = parse_lines(&texts.nicknames)
            .into_iter()
            .map(|line| (line.canonical.to_lowercase(), line.variants))
            .collect();
        let titles = TitleTable::from_lines(&parse_lines(&texts.titles), default_title_gender);
        let words = |text: &str| -> Vec<String> {
            parse_lines(text).into_iter().map(|line| line.canonical).collect()
        };
        Self {
            names: NameLexicons {
                male: flatten(&texts.male_names),
                female: flatten(&texts.female_names),
                nicknames,
                titles,
            },
            sentiment: SentimentLexicon::new(
                words(&texts.positive_words),
                words(&texts.negative_words),
            ),
            stopwords: flatten(&texts.stopwords),
        }
    }
}

impl Default for Lexicons {
    fn default() -> Self {
        Self::bundled()
    }
}

/// Gender carried by a canonical title, if any.
pub fn default_title_gender(canonical: &str) -> Gender {
    match canonical.trim_end_matches('.').to_lowercase().as_str() {
        "mr" | "sir" | "lord" => Gender::Male,
        "mrs" | "ms" | "miss" | "lady" => Gender::Female,
        _ => Gender::Unknown,
    }
}

struct LexiconTexts<'a> {
    male_names: std::borrow::Cow<'a, str>,
    female_names: std::borrow::Cow<'a, str>,
    nicknames: std::borrow::Cow<'a, str>,
    titles: std::borrow::Cow<'a, str>,
    positive_words: std::borrow::Cow<'a, str>,
    negative_words: std::borrow::Cow<'a, str>,
    stopwords: std::borrow::Cow<'a, str>,
}

impl LexiconTexts<'static> {
    fn bundled() -> Self {
        Self {
            male_names: MALE_NAMES.into(),
            female_names: FEMALE_NAMES.into(),
            nicknames: NICKNAMES.into(),
            titles: TITLES.into(),
            positive_words: POSITIVE_WORDS.into(),
            negative_words: NEGATIVE_WORDS.into(),
            stopwords: STOPWORDS.into(),
        }
    }
}

fn read_or<'a>(
    path: Option<&Path>,
    fallback: std::borrow::Cow<'a, str>,
) -> Result<std::borrow::Cow<'a, str>, LexiconError> {
    let Some(path) = path else {
        return Ok(fallback);
    };
    let text = fs::read_to_string(path).map_err(|source| LexiconError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    if parse_lines(&text).is_empty() {
        return Err(LexiconError::Empty {
            path: path.to_path_buf(),
        });
    }
    Ok(text.into())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_blanks_and_variants() {
        let lines = parse_lines("# header\n\nThomas, Tom ,Tommy\nAlice\n");
        assert_eq!(
            lines,
            vec![
                LexiconLine {
                    canonical: "Thomas".into(),
                    variants: vec!["Tom".into(), "Tommy".into()],
                },
                LexiconLine {
                    canonical: "Alice".into(),
                    variants: vec![],
                },
            ]
        );
    }

    #[test]
    fn bundled_lexicons_cover_fixture_names() {
        let lex = Lexicons::bundled();
        assert!(lex.names.male.contains("tomas"));
        assert!(lex.names.female.contains("elara"));
        assert_eq!(
            lex.names.nicknames.get("tomas").unwrap(),
            &vec!["Tom".to_string(), "Tommy".to_string()]
        );
        assert_eq!(lex.sentiment.polarity("Thanked"), 1);
        assert_eq!(lex.sentiment.polarity("betrayed"), -1);
        assert_eq!(lex.sentiment.polarity("ship"), 0);
        assert!(lex.stopwords.contains("the"));
    }

    #[test]
    fn override_file_replaces_bundled_list() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("male.txt");
        fs::write(&path, "Zed\n").unwrap();
        let lex = Lexicons::load(&LexiconPaths {
            male_names: Some(path),
            ..Default::default()
        })
        .unwrap();
        assert!(lex.names.male.contains("zed"));
        assert!(!lex.names.male.contains("tomas"));
    }

    #[test]
    fn empty_override_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.txt");
        fs::write(&path, "# nothing\n").unwrap();
        let err = Lexicons::load(&LexiconPaths {
            nicknames: Some(path),
            ..Default::default()
        })
        .unwrap_err();
        assert!(matches!(err, LexiconError::Empty { .. }));
    }
}
