//! Character name parsing, gender inference and referent generation.

use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexicon::LexiconLine;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NameError {
    #[error("name {0:?} has no tokens besides a title")]
    Empty(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Male,
    Female,
    Unknown,
}

impl Gender {
    pub fn conflicts_with(self, other: Gender) -> bool {
        matches!(
            (self, other),
            (Gender::Male, Gender::Female) | (Gender::Female, Gender::Male)
        )
    }

    /// The more specific of two non-conflicting genders.
    pub fn merge(self, other: Gender) -> Gender {
        if self == Gender::Unknown {
            other
        } else {
            self
        }
    }
}

#[derive(Debug, Clone)]
struct TitleEntry {
    canonical: String,
    gender: Gender,
}

/// Honorifics recognised at the start of a name.
#[derive(Debug, Clone, Default)]
pub struct TitleTable {
    by_key: HashMap<String, usize>,
    entries: Vec<TitleEntry>,
}

impl TitleTable {
    pub fn from_lines(lines: &[LexiconLine], gender_of: impl Fn(&str) -> Gender) -> Self {
        let mut table = TitleTable::default();
        for line in lines {
            let idx = table.entries.len();
            table.entries.push(TitleEntry {
                canonical: line.canonical.clone(),
                gender: gender_of(&line.canonical),
            });
            for form in std::iter::once(&line.canonical).chain(&line.variants) {
                table.by_key.entry(title_key(form)).or_insert(idx);
            }
        }
        table
    }

    /// Canonical form of a title token, e.g. `"mr"` and `"Mr."` both give `"Mr."`.
    pub fn canonical(&self, token: &str) -> Option<&str> {
        self.by_key
            .get(&title_key(token))
            .map(|&i| self.entries[i].canonical.as_str())
    }

    pub fn is_title(&self, token: &str) -> bool {
        self.by_key.contains_key(&title_key(token))
    }

    pub fn gender(&self, canonical: &str) -> Gender {
        self.by_key
            .get(&title_key(canonical))
            .map_or(Gender::Unknown, |&i| self.entries[i].gender)
    }
}

fn title_key(token: &str) -> String {
    token.trim_end_matches('.').to_lowercase()
}

/// Name lists used for gender inference and nickname expansion.
#[derive(Debug, Clone, Default)]
pub struct NameLexicons {
    /// Lowercased male first names.
    pub male: HashSet<String>,
    /// Lowercased female first names.
    pub female: HashSet<String>,
    /// Lowercased canonical first name to its nicknames.
    pub nicknames: HashMap<String, Vec<String>>,
    pub titles: TitleTable,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParsedName {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub middle: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suffix: Option<String>,
    pub raw: String,
}

impl ParsedName {
    /// Space-joined name parts in reading order.
    pub fn render(&self) -> String {
        [&self.title, &self.first, &self.middle, &self.last, &self.suffix]
            .into_iter()
            .flatten()
            .map(String::as_str)
            .collect::<Vec<_>>()
            .join(" ")
    }
}

const SUFFIXES: &[&str] = &["jr", "sr", "ii", "iii", "iv", "v"];
const PARTICLES: &[&str] = &[
    "van", "von", "de", "la", "le", "du", "der", "den", "di", "da", "del", "della", "ter", "ten",
];

/// Case-, period- and whitespace-insensitive key for comparing name surfaces.
pub fn normalize_surface(surface: &str) -> String {
    surface
        .split_whitespace()
        .map(|tok| {
            tok.chars()
                .filter(|&c| c != '.')
                .map(|c| if c == '\u{2019}' { '\'' } else { c })
                .flat_map(char::to_lowercase)
                .collect::<String>()
        })
        .filter(|tok| !tok.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn parse_name(surface: &str, titles: &TitleTable) -> Result<ParsedName, NameError> {
    let mut tokens: Vec<&str> = surface.split_whitespace().collect();
    let title = tokens
        .first()
        .and_then(|tok| titles.canonical(tok))
        .map(str::to_string);
    if title.is_some() {
        tokens.remove(0);
    }
    let suffix = match tokens.last() {
        Some(tok) if tokens.len() > 1 && SUFFIXES.contains(&title_key(tok).as_str()) => {
            let s = tok.to_string();
            tokens.pop();
            Some(s)
        }
        _ => None,
    };

    let mut parsed = ParsedName {
        title,
        first: None,
        middle: None,
        last: None,
        suffix,
        raw: surface.to_string(),
    };
    match tokens.as_slice() {
        [] => return Err(NameError::Empty(surface.to_string())),
        [only] if parsed.title.is_some() => parsed.last = Some(only.to_string()),
        [only] => parsed.first = Some(only.to_string()),
        [first, rest @ ..] => {
            parsed.first = Some(first.to_string());
            // particles directly before the final token belong to the surname
            let mut last_start = rest.len() - 1;
            while last_start > 0 && PARTICLES.contains(&rest[last_start - 1].to_lowercase().as_str())
            {
                last_start -= 1;
            }
            parsed.last = Some(rest[last_start..].join(" "));
            if last_start > 0 {
                parsed.middle = Some(rest[..last_start].join(" "));
            }
        }
    }
    Ok(parsed)
}

/// A gendered title wins; otherwise the first name must appear in exactly one list.
pub fn infer_gender(parsed: &ParsedName, names: &NameLexicons) -> Gender {
    if let Some(title) = &parsed.title {
        let g = names.titles.gender(title);
        if g != Gender::Unknown {
            return g;
        }
    }
    let Some(first) = &parsed.first else {
        return Gender::Unknown;
    };
    let key = first.to_lowercase();
    match (names.male.contains(&key), names.female.contains(&key)) {
        (true, false) => Gender::Male,
        (false, true) => Gender::Female,
        _ => Gender::Unknown,
    }
}

/// Alias candidates: first-name nicknames plus combinations of name parts.
///
/// The raw surface itself is never included. Middle names only appear inside
/// longer combinations.
pub fn referents(parsed: &ParsedName, names: &NameLexicons) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    if let Some(first) = &parsed.first {
        if let Some(nicks) = names.nicknames.get(&first.to_lowercase()) {
            out.extend(nicks.iter().cloned());
        }
    }

    let t = parsed.title.as_deref();
    let f = parsed.first.as_deref();
    let m = parsed.middle.as_deref();
    let l = parsed.last.as_deref();
    let combos: [&[Option<&str>]; 7] = [
        &[f],
        &[l],
        &[f, l],
        &[t, l],
        &[t, f, l],
        &[f, m, l],
        &[t, f, m, l],
    ];
    for parts in combos {
        if let Some(joined) = join_all(parts) {
            out.insert(joined);
        }
    }

    let raw = normalize_surface(&parsed.raw);
    out.retain(|r| normalize_surface(r) != raw);
    out
}

fn join_all(parts: &[Option<&str>]) -> Option<String> {
    let parts: Option<Vec<&str>> = parts.iter().copied().collect();
    Some(parts?.join(" "))
}

/// A character vertex: a canonical surface plus everything known about it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacterIdentity {
    pub canonical: String,
    pub parsed: ParsedName,
    pub gender: Gender,
    /// Alias candidates; never contains `canonical`.
    pub referents: BTreeSet<String>,
    pub mention_count: usize,
    /// Observed surfaces merged into this identity, `canonical` included.
    pub surfaces: BTreeSet<String>,
}

impl CharacterIdentity {
    pub fn from_surface(
        surface: &str,
        mention_count: usize,
        names: &NameLexicons,
    ) -> Result<Self, NameError> {
        let parsed = parse_name(surface, &names.titles)?;
        Ok(Self {
            canonical: surface.to_string(),
            gender: infer_gender(&parsed, names),
            referents: referents(&parsed, names),
            mention_count,
            surfaces: BTreeSet::from([surface.to_string()]),
            parsed,
        })
    }

    pub fn title(&self) -> Option<&str> {
        self.parsed.title.as_deref()
    }
}
