//! Signed character networks from narrative text.
//!
//! The pipeline runs in stages, each usable on its own:
//!
//! * [`corpus`] ingests stories, filters them by length and splits sentences.
//! * [`annotation`] cuts documents into narrative units and attaches a
//!   sentiment logit plus character mentions to each unit, either read from a
//!   model-backed sidecar's annotation file or produced by a rule-based
//!   fallback.
//! * [`names`] parses character names, guesses gender and builds alias lists.
//! * [`network`] resolves and contracts characters, then builds the signed
//!   co-occurrence network of a story.
//! * [`metrics`] computes density, average edge weight, average clustering and
//!   assortativity over the modified weighted average neighbor degree.
//! * [`stats`] compares writer populations with W1 distances and Welch tests.
//! * [`storygen`] drives chat-completion models through chapter-by-chapter
//!   story generation.
//! * [`pipeline`] wires the stages together for the `charnet` binary.

pub mod annotation;
pub mod config;
pub mod corpus;
pub mod lexicon;
pub mod metrics;
pub mod names;
pub mod network;
pub mod pipeline;
pub mod stats;
pub mod storygen;

pub use annotation::{MentionSpan, NarrativeUnit, UnitSpan};
pub use corpus::{PreparedDocument, RawStory};
pub use lexicon::Lexicons;
pub use metrics::{MetricsRecord, Scope};
pub use names::{CharacterIdentity, Gender, ParsedName};
pub use network::{Sign, SignedEdge, SignedNetwork};
