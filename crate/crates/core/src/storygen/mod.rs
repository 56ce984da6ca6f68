//! Chapter-by-chapter story generation with chat-completion models.
//!
//! A story is produced in a single growing chat session: a plot with one line
//! per chapter, then a character list, then each chapter in turn with the
//! character list and that chapter's plot line inserted into the prompt.

pub mod http;
pub mod provider;

use std::fmt::Write as _;
use std::path::PathBuf;
use std::sync::{Arc, OnceLock};

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use provider::{
    ChatProvider, ChatRequest, Message, MockProvider, MockScript, ProviderError, RateLimited, RateLimiter,
    Retrying, RetryPolicy, Role, SamplingParams,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    /// OpenAI chat-completions shape.
    Openai,
    Gemini,
    /// Canned responses from `mock_script`; never touches the network.
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub model: String,
    pub provider: ProviderKind,
    pub endpoint: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: Option<String>,
    pub mock_script: Option<PathBuf>,
    pub temperature: f64,
    pub top_p: f64,
    pub top_k: Option<u32>,
    /// Whether the OpenAI-shaped adapter forwards `top_k`. The official API
    /// rejects it, many compatible servers accept it.
    pub send_top_k: bool,
    pub chapters: usize,
    pub characters: usize,
    pub words_per_chapter: usize,
    pub max_attempts: u32,
    pub requests_per_minute: f64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            model: "gpt-4o".into(),
            provider: ProviderKind::Openai,
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            api_key_env: Some("OPENAI_API_KEY".into()),
            mock_script: None,
            temperature: 1.0,
            top_p: 0.95,
            top_k: Some(40),
            send_top_k: false,
            chapters: 10,
            characters: 19,
            words_per_chapter: 800,
            max_attempts: 5,
            requests_per_minute: 60.0,
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ConfigError {
    #[error("chapters must be at least 1")]
    Chapters,
    #[error("temperature must be a finite value >= 0, got {0}")]
    Temperature(f64),
    #[error("top_p must lie in (0, 1], got {0}")]
    TopP(f64),
    #[error("{0} must be at least 1")]
    Positive(&'static str),
    #[error("provider \"mock\" needs mock_script")]
    MissingMockScript,
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.chapters < 1 {
            return Err(ConfigError::Chapters);
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(ConfigError::Temperature(self.temperature));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(ConfigError::TopP(self.top_p));
        }
        if self.characters < 1 {
            return Err(ConfigError::Positive("characters"));
        }
        if self.words_per_chapter < 1 {
            return Err(ConfigError::Positive("words_per_chapter"));
        }
        if self.max_attempts < 1 {
            return Err(ConfigError::Positive("max_attempts"));
        }
        if self.provider == ProviderKind::Mock && self.mock_script.is_none() {
            return Err(ConfigError::MissingMockScript);
        }
        Ok(())
    }

    pub fn sampling(&self) -> SamplingParams {
        SamplingParams {
            temperature: self.temperature,
            top_p: self.top_p,
            top_k: self.top_k,
        }
    }
}

/// Adapter for `config.provider`, wrapped in retry and, for hosted APIs, a
/// rate limiter.
pub fn build_provider(config: &GenerationConfig) -> Result<Box<dyn ChatProvider>, ProviderError> {
    let inner: Box<dyn ChatProvider> = match config.provider {
        ProviderKind::Openai => Box::new(http::OpenAiCompatible::new(
            &config.endpoint,
            config.api_key_env.as_deref(),
            config.send_top_k,
        )?),
        ProviderKind::Gemini => Box::new(http::Gemini::new(
            &config.endpoint,
            config.api_key_env.as_deref().unwrap_or("GEMINI_API_KEY"),
        )?),
        ProviderKind::Mock => {
            let path = config
                .mock_script
                .as_deref()
                .ok_or_else(|| ProviderError::Malformed("mock provider needs mock_script".into()))?;
            Box::new(MockProvider::from_file(path)?)
        }
    };
    let policy = RetryPolicy {
        max_attempts: config.max_attempts,
        ..RetryPolicy::default()
    };
    if config.provider == ProviderKind::Mock {
        // nothing remote to protect
        return Ok(Box::new(Retrying::new(inner, policy)));
    }
    let limiter = RateLimiter::new(1, config.requests_per_minute / 60.0);
    Ok(Box::new(Retrying::new(RateLimited::new(inner, limiter), policy)))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompts {
    pub system: String,
    pub plot: String,
    pub characters: String,
    pub first_chapter: String,
    words_per_chapter: usize,
}

impl Prompts {
    /// Prompt for chapter `index` (1-based). Chapters after the first carry
    /// the character list and the chapter's plot line.
    pub fn chapter(&self, index: usize, characters: &str, plot_line: &str) -> String {
        if index <= 1 {
            return self.first_chapter.clone();
        }
        format!(
            "### Instruction ###\nUse {} words to write the next chapter.\n### Characters ###\n{}\n### Plot ###\n{}\n### Story ###",
            self.words_per_chapter, characters, plot_line
        )
    }
}

pub fn build_prompts(config: &GenerationConfig) -> Prompts {
    let (n, c, w) = (config.chapters, config.characters, config.words_per_chapter);
    Prompts {
        system: format!(
            "### Instruction ###\nYou are a professional novelist. You will write a science fiction story of {n} chapters with {c} characters."
        ),
        plot: format!(
            "Write the title in the first line. Next, use 1 sentence to write the plot for each of the {n} chapters. The Chapter number and description should start in the same line (i.e. Chapter 1: [description]). Start with Chapter 1:\n### Plot ###"
        ),
        characters: format!(
            "### Instruction ###\nNext, use 1 sentences to write each of {c} characters and chapters where they appear.\n### Characters ###"
        ),
        first_chapter: format!("### Instruction ###\nUse {w} words to write the first chapter.\n### Story ###"),
        words_per_chapter: w,
    }
}

fn plot_line_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?m)^[ \t*#_>-]*Chapter[ \t]+(\d+)[ \t]*:[ \t*_]*(.*?)[ \t*_]*\r?$").unwrap())
}

/// Extracts `Chapter k: description` lines for k = 1..=chapters. Returns
/// `None` if any chapter is missing. Markdown emphasis around the line is
/// dropped; later duplicates of a chapter number are ignored.
pub fn parse_plot(text: &str, chapters: usize) -> Option<Vec<String>> {
    let mut lines: Vec<Option<String>> = vec![None; chapters];
    for cap in plot_line_regex().captures_iter(text) {
        let Ok(k) = cap[1].parse::<usize>() else { continue };
        if (1..=chapters).contains(&k) && lines[k - 1].is_none() && !cap[2].is_empty() {
            lines[k - 1] = Some(format!("Chapter {k}: {}", &cap[2]));
        }
    }
    lines.into_iter().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    System,
    PlotPrompt,
    Plot,
    CharacterPrompt,
    Characters,
    ChapterPrompt,
    Chapter,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub kind: SegmentKind,
    pub message: Message,
}

/// Append-only chat log of one story.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Session {
    segments: Vec<Segment>,
}

impl Session {
    pub fn push(&mut self, kind: SegmentKind, role: Role, content: impl Into<String>) {
        self.segments.push(Segment {
            kind,
            message: Message::new(role, content),
        });
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn messages(&self) -> Vec<Message> {
        self.segments.iter().map(|s| s.message.clone()).collect()
    }

    pub fn chapters(&self) -> impl Iterator<Item = &str> {
        self.segments
            .iter()
            .filter(|s| s.kind == SegmentKind::Chapter)
            .map(|s| s.message.content.as_str())
    }

    /// Chapter responses in order, separated by blank lines.
    pub fn story_text(&self) -> String {
        self.chapters().collect::<Vec<_>>().join("\n\n")
    }
}

/// One transcript line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub role: Role,
    pub content: String,
    pub timestamp: String,
    pub model: String,
    pub params: SamplingParams,
    /// A response that was rejected and re-requested.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub discarded: bool,
}

pub type Clock = Arc<dyn Fn() -> String + Send + Sync>;

pub fn system_clock() -> Clock {
    Arc::new(|| chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true))
}

pub fn transcript_jsonl(records: &[TranscriptRecord]) -> String {
    let mut out = String::new();
    for r in records {
        // serializing plain data cannot fail
        let _ = writeln!(out, "{}", serde_json::to_string(r).unwrap());
    }
    out
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GenerationFailure {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("plot response has no \"Chapter k:\" line for every chapter, even after a reprompt")]
    UnparseablePlot,
}

/// A failed generation, with everything exchanged up to the failure.
#[derive(Debug, Clone, Error, PartialEq)]
#[error("{failure}")]
pub struct GenerationError {
    pub failure: GenerationFailure,
    pub transcript: Vec<TranscriptRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedStory {
    pub text: String,
    pub plot: Vec<String>,
    pub characters: String,
    pub session: Session,
    pub transcript: Vec<TranscriptRecord>,
}

struct Run<'a> {
    config: &'a GenerationConfig,
    provider: &'a dyn ChatProvider,
    clock: &'a Clock,
    session: Session,
    transcript: Vec<TranscriptRecord>,
}

impl Run<'_> {
    fn log(&mut self, role: Role, content: &str, discarded: bool) {
        self.transcript.push(TranscriptRecord {
            role,
            content: content.to_string(),
            timestamp: (self.clock)(),
            model: self.config.model.clone(),
            params: self.config.sampling(),
            discarded,
        });
    }

    fn push(&mut self, kind: SegmentKind, role: Role, content: String) {
        self.log(role, &content, false);
        self.session.push(kind, role, content);
    }

    fn ask(&mut self) -> Result<String, GenerationFailure> {
        let request = ChatRequest {
            model: self.config.model.clone(),
            messages: self.session.messages(),
            params: self.config.sampling(),
        };
        Ok(self.provider.complete(&request)?)
    }

    fn fail(self, failure: GenerationFailure) -> GenerationError {
        GenerationError {
            failure,
            transcript: self.transcript,
        }
    }
}

/// Runs the full plot, characters, chapters sequence. On success the provider
/// is called exactly `2 + chapters` times (one more if the plot needed a
/// reprompt).
pub fn generate_story(
    config: &GenerationConfig,
    provider: &dyn ChatProvider,
    clock: &Clock,
) -> Result<GeneratedStory, GenerationError> {
    let mut run = Run {
        config,
        provider,
        clock,
        session: Session::default(),
        transcript: Vec::new(),
    };
    if let Err(e) = config.validate() {
        return Err(run.fail(e.into()));
    }
    let prompts = build_prompts(config);
    run.push(SegmentKind::System, Role::System, prompts.system.clone());
    run.push(SegmentKind::PlotPrompt, Role::User, prompts.plot.clone());

    let mut plot = None;
    for attempt in 0..2 {
        let text = match run.ask() {
            Ok(t) => t,
            Err(e) => return Err(run.fail(e)),
        };
        if let Some(lines) = parse_plot(&text, config.chapters) {
            run.push(SegmentKind::Plot, Role::Assistant, text);
            plot = Some(lines);
            break;
        }
        log::warn!("plot response lacks chapter lines (attempt {})", attempt + 1);
        run.log(Role::Assistant, &text, true);
    }
    let Some(plot) = plot else {
        return Err(run.fail(GenerationFailure::UnparseablePlot));
    };

    run.push(SegmentKind::CharacterPrompt, Role::User, prompts.characters.clone());
    let characters = match run.ask() {
        Ok(t) => t,
        Err(e) => return Err(run.fail(e)),
    };
    run.push(SegmentKind::Characters, Role::Assistant, characters.clone());

    for (i, plot_line) in plot.iter().enumerate() {
        run.push(
            SegmentKind::ChapterPrompt,
            Role::User,
            prompts.chapter(i + 1, &characters, plot_line),
        );
        let chapter = match run.ask() {
            Ok(t) => t,
            Err(e) => return Err(run.fail(e)),
        };
        run.push(SegmentKind::Chapter, Role::Assistant, chapter);
    }

    Ok(GeneratedStory {
        text: run.session.story_text(),
        plot,
        characters,
        session: run.session,
        transcript: run.transcript,
    })
}

/// Generates `n` stories concurrently. Results keep index order.
pub fn generate_stories(
    config: &GenerationConfig,
    provider: &dyn ChatProvider,
    clock: &Clock,
    n: usize,
) -> Vec<Result<GeneratedStory, GenerationError>> {
    (0..n)
        .into_par_iter()
        .map(|_| generate_story(config, provider, clock))
        .collect()
}

/// Story id for the `index`-th generated story of `model`.
pub fn story_id(model: &str, index: usize) -> String {
    let clean: String = model
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect();
    format!("{clean}-{:04}", index + 1)
}

pub const GENRES: [&str; 10] = [
    "science fiction",
    "fantasy",
    "mystery",
    "thriller",
    "horror",
    "romance",
    "adventure",
    "historical fiction",
    "drama",
    "comedy",
];

pub const UNKNOWN_GENRE: &str = "unknown";

pub fn genre_prompt(text: &str) -> String {
    format!(
        "### Instruction ###\nClassify the genre of the story below. Answer with exactly one of: {}.\n### Story ###\n{}",
        GENRES.join(", "),
        text
    )
}

/// The label occurring earliest in the reply, or `unknown`.
pub fn parse_genre(reply: &str) -> &'static str {
    let lower = reply.to_lowercase();
    GENRES
        .iter()
        .filter_map(|g| lower.find(g).map(|pos| (pos, std::cmp::Reverse(g.len()), *g)))
        .min()
        .map_or(UNKNOWN_GENRE, |(_, _, g)| g)
}

pub fn classify_genre(
    text: &str,
    config: &GenerationConfig,
    provider: &dyn ChatProvider,
) -> Result<&'static str, ProviderError> {
    let request = ChatRequest {
        model: config.model.clone(),
        messages: vec![Message::new(Role::User, genre_prompt(text))],
        params: config.sampling(),
    };
    Ok(parse_genre(&provider.complete(&request)?))
}

/// Labels in input order.
pub fn classify_genres(
    texts: &[String],
    config: &GenerationConfig,
    provider: &dyn ChatProvider,
) -> Result<Vec<&'static str>, ProviderError> {
    texts
        .par_iter()
        .map(|t| classify_genre(t, config, provider))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::provider::{MockFailure, MockRule};
    use super::*;

    fn fixed_clock() -> Clock {
        Arc::new(|| "2025-01-01T00:00:00.000Z".to_string())
    }

    fn plot_text(n: usize) -> String {
        let mut s = String::from("**The Test Title**\n");
        for k in 1..=n {
            s.push_str(&format!("Chapter {k}: Event number {k} happens.\n"));
        }
        s
    }

    fn mock(n: usize) -> MockProvider {
        MockProvider::new(script(n))
    }

    fn script(n: usize) -> MockScript {
        MockScript {
            rules: vec![
                MockRule {
                    contains: Some("### Plot ###\n".into()),
                    response: "chapter {turn}".into(),
                },
                MockRule {
                    contains: Some("Start with Chapter 1".into()),
                    response: plot_text(n),
                },
                MockRule {
                    contains: Some("### Characters ###".into()),
                    response: "Ada: a pilot (1-3).".into(),
                },
                MockRule {
                    contains: None,
                    response: "chapter {turn}".into(),
                },
            ],
            failures: vec![],
        }
    }

    #[test]
    fn prompt_substitution() {
        let p = build_prompts(&GenerationConfig::default());
        assert!(p.system.contains("10 chapters with 19 characters"));
        assert!(p.first_chapter.contains("Use 800 words to write the first chapter."));
        let p = build_prompts(&GenerationConfig {
            chapters: 3,
            ..Default::default()
        });
        assert!(p.system.contains("story of 3 chapters"));
        assert!(p.plot.contains("each of the 3 chapters"));
        assert_eq!(p.chapter(1, "x", "y"), p.first_chapter);
        assert_eq!(
            p.chapter(2, "CHARS", "Chapter 2: b"),
            "### Instruction ###\nUse 800 words to write the next chapter.\n### Characters ###\nCHARS\n### Plot ###\nChapter 2: b\n### Story ###"
        );
    }

    #[test]
    fn plot_parsing() {
        let lines = parse_plot(&plot_text(10), 10).unwrap();
        assert_eq!(lines.len(), 10);
        assert_eq!(lines[9], "Chapter 10: Event number 10 happens.");
        let md = "Title\n\n**Chapter 1: Start**\n- Chapter 2:  Middle\n### Chapter 3: End\n";
        assert_eq!(
            parse_plot(md, 3).unwrap(),
            vec!["Chapter 1: Start", "Chapter 2: Middle", "Chapter 3: End"]
        );
        assert_eq!(parse_plot("Chapter 1: a\nChapter 3: c", 3), None);
        assert_eq!(parse_plot("no chapters here", 1), None);
    }

    #[test]
    fn story_is_chapter_concatenation() {
        let config = GenerationConfig {
            chapters: 3,
            ..Default::default()
        };
        let m = mock(3);
        let story = generate_story(&config, &m, &fixed_clock()).unwrap();
        assert_eq!(m.call_count(), 5);
        // plot and characters are assistant turns 1 and 2
        assert_eq!(story.text, "chapter 3\n\nchapter 4\n\nchapter 5");
        assert_eq!(story.session.len(), 5 + 2 * 3);
        assert_eq!(story.transcript.len(), story.session.len());
    }

    #[test]
    fn plot_reprompt_then_abort() {
        let config = GenerationConfig {
            chapters: 2,
            ..Default::default()
        };
        let bad = MockProvider::new(MockScript {
            rules: vec![MockRule {
                contains: None,
                response: "no plot".into(),
            }],
            failures: vec![],
        });
        let err = generate_story(&config, &bad, &fixed_clock()).unwrap_err();
        assert_eq!(err.failure, GenerationFailure::UnparseablePlot);
        assert_eq!(bad.call_count(), 2);
        assert_eq!(err.transcript.iter().filter(|r| r.discarded).count(), 2);
    }

    #[test]
    fn transport_failure_keeps_partial_transcript() {
        let config = GenerationConfig {
            chapters: 2,
            ..Default::default()
        };
        let m = MockProvider::new(MockScript {
            failures: vec![MockFailure { call: 2, status: 500 }],
            ..script(2)
        });
        let err = generate_story(&config, &m, &fixed_clock()).unwrap_err();
        assert!(matches!(err.failure, GenerationFailure::Provider(_)));
        // system, plot prompt, plot, character prompt, characters, chapter 1 prompt
        assert_eq!(err.transcript.len(), 6);
    }

    #[test]
    fn invalid_config_is_rejected() {
        let config = GenerationConfig {
            top_p: 0.0,
            ..Default::default()
        };
        let err = generate_story(&config, &mock(1), &fixed_clock()).unwrap_err();
        assert_eq!(err.failure, GenerationFailure::Config(ConfigError::TopP(0.0)));
        assert!(GenerationConfig {
            chapters: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn genre_labels() {
        assert_eq!(parse_genre("Science Fiction."), "science fiction");
        assert_eq!(parse_genre("I think this is a fantasy with mystery"), "fantasy");
        assert_eq!(parse_genre("hard to say"), UNKNOWN_GENRE);
        let m = MockProvider::new(MockScript {
            rules: vec![
                MockRule {
                    contains: Some("dragons".into()),
                    response: "fantasy".into(),
                },
                MockRule {
                    contains: None,
                    response: "science fiction".into(),
                },
            ],
            failures: vec![],
        });
        let texts = vec!["ships".to_string(), "dragons".to_string(), "robots".to_string()];
        let labels = classify_genres(&texts, &GenerationConfig::default(), &m).unwrap();
        assert_eq!(labels, vec!["science fiction", "fantasy", "science fiction"]);
    }

    #[test]
    fn story_ids_are_filesystem_safe() {
        assert_eq!(story_id("gpt-4o", 0), "gpt-4o-0001");
        assert_eq!(story_id("models/gemini 1.5", 11), "models_gemini_1.5-0012");
    }
}
