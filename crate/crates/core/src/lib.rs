//! Core library for generating and reading personalized branching social
//! narratives.
//!
//! The crate is organized around five areas:
//!
//! - [`story`]: the story document format, its path graph, and the structural
//!   validator every generated story must pass.
//! - [`readability`]: grade-level and vocabulary measurements used by the
//!   text refiner.
//! - [`pipeline`]: the staged generation pipeline over pluggable providers,
//!   including a deterministic mock provider suite.
//! - [`session`] and [`stats`]: shared-reading sessions, reward resolution,
//!   and engagement aggregation.
//! - [`insights`]: offline reports over exported event logs and corpus
//!   validation.

pub mod digest;
pub mod fixtures;
pub mod insights;
pub mod pipeline;
pub mod profile;
pub mod readability;
pub mod session;
pub mod stats;
pub mod story;

pub use digest::ImageRef;
pub use profile::{ChildProfile, EntityKind, ProfileEntity, RewardSticker, StickerKind, StickerRef};
pub use readability::{CefrLevel, Lexicon, ReadabilityReport, SectionAssessment};
pub use story::{
    EmotionCue, PathGraph, PathKind, Section, SectionId, SectionKind, Story, TargetBehavior,
    TopicType, ValidationReport, Violation,
};
