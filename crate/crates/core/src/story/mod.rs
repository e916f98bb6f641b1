//! Story document model.
//!
//! A story is a directed acyclic graph of sections. Reading starts at the
//! Cover, passes an Introduction, and reaches a single Challenge where the
//! child picks one of two or three Decisions. One branch is desirable
//! (Decision, Consequence). The others are undesirable and always run the
//! repair chain (Decision, Consequence, Repair, Response, RepairedConsequence).
//! Every branch converges on the same Ending.

mod document;
mod edit;
mod paths;
pub mod sentences;
mod validate;

use std::collections::HashMap;
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::digest::{sha256_hex, ImageRef};
use crate::pipeline::artifacts::IllustrationPlan;
use crate::profile::{ChildProfile, StickerRef};

pub use document::{DocumentError, StoryDocument, FORMAT_VERSION};
pub use edit::{edit_section_text, EditError};
pub use paths::{enumerate_paths, path_kind, PathError};
pub use sentences::count_sentences;
pub use validate::{validate_structure, validate_with, ValidationConfig, ValidationReport, Violation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopicType {
    Relationship,
    SocialRules,
    HealthyHabits,
}

impl TopicType {
    pub const ALL: [TopicType; 3] =
        [TopicType::Relationship, TopicType::SocialRules, TopicType::HealthyHabits];

    /// Number of undesirable branches a story of this topic carries.
    pub fn undesirable_paths(self) -> usize {
        match self {
            TopicType::Relationship => 2,
            TopicType::SocialRules | TopicType::HealthyHabits => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TopicType::Relationship => "relationship",
            TopicType::SocialRules => "social_rules",
            TopicType::HealthyHabits => "healthy_habits",
        }
    }

    pub fn parse(raw: &str) -> Option<Self> {
        let norm: String = raw
            .trim()
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match norm.as_str() {
            "relationship" => Some(TopicType::Relationship),
            "socialrules" => Some(TopicType::SocialRules),
            "healthyhabits" => Some(TopicType::HealthyHabits),
            _ => None,
        }
    }
}

impl fmt::Display for TopicType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SectionKind {
    Cover,
    Introduction,
    Challenge,
    Decision,
    Consequence,
    Repair,
    Response,
    RepairedConsequence,
    Ending,
}

impl SectionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SectionKind::Cover => "cover",
            SectionKind::Introduction => "introduction",
            SectionKind::Challenge => "challenge",
            SectionKind::Decision => "decision",
            SectionKind::Consequence => "consequence",
            SectionKind::Repair => "repair",
            SectionKind::Response => "response",
            SectionKind::RepairedConsequence => "repaired_consequence",
            SectionKind::Ending => "ending",
        }
    }

    /// Sections whose text must pair an emotion with an observable response.
    pub fn needs_emotion_cue(self) -> bool {
        matches!(self, SectionKind::Consequence | SectionKind::RepairedConsequence)
    }
}

impl fmt::Display for SectionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SectionId(pub String);

impl SectionId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SectionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for SectionId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

/// A character's emotion paired with the response it produces, e.g.
/// happy / smiles.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmotionCue {
    pub character: String,
    pub emotion: String,
    pub observable_response: String,
}

impl EmotionCue {
    pub fn new(
        character: impl Into<String>,
        emotion: impl Into<String>,
        response: impl Into<String>,
    ) -> Self {
        Self {
            character: character.into(),
            emotion: emotion.into(),
            observable_response: response.into(),
        }
    }

    pub fn is_complete(&self) -> bool {
        !self.emotion.trim().is_empty() && !self.observable_response.trim().is_empty()
    }
}

/// One page of the story.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Section {
    pub id: SectionId,
    pub kind: SectionKind,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub translation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub illustration: Option<ImageRef>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub emotion_cues: Vec<EmotionCue>,
    /// Character who delivers the section, used for Repair feedback.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speaker: Option<String>,
    #[serde(default)]
    pub next: Vec<SectionId>,
}

impl Section {
    pub fn new(id: impl Into<String>, kind: SectionKind, text: impl Into<String>) -> Self {
        Self {
            id: SectionId::new(id),
            kind,
            text: text.into(),
            translation: None,
            illustration: None,
            emotion_cues: Vec::new(),
            speaker: None,
            next: Vec::new(),
        }
    }

    pub fn then(mut self, next: impl Into<String>) -> Self {
        self.next.push(SectionId::new(next));
        self
    }

    pub fn cue(mut self, cue: EmotionCue) -> Self {
        self.emotion_cues.push(cue);
        self
    }

    pub fn spoken_by(mut self, speaker: impl Into<String>) -> Self {
        self.speaker = Some(speaker.into());
        self
    }

    pub fn text_digest(&self) -> String {
        sha256_hex(self.text.as_bytes())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathKind {
    Desirable,
    Undesirable,
}

/// Section graph plus the declared branch segments.
///
/// `desirable_path` and each entry of `undesirable_paths` list the branch
/// from its Decision through to the Ending.
#[derive(Debug, Clone, PartialEq)]
pub struct PathGraph {
    pub sections: Vec<Section>,
    pub root: SectionId,
    pub challenge: SectionId,
    pub ending: SectionId,
    pub desirable_path: Vec<SectionId>,
    pub undesirable_paths: Vec<Vec<SectionId>>,
}

impl PathGraph {
    pub fn section(&self, id: &SectionId) -> Option<&Section> {
        self.sections.iter().find(|s| &s.id == id)
    }

    pub fn section_mut(&mut self, id: &SectionId) -> Option<&mut Section> {
        self.sections.iter_mut().find(|s| &s.id == id)
    }

    pub fn index(&self) -> HashMap<&SectionId, &Section> {
        self.sections.iter().map(|s| (&s.id, s)).collect()
    }

    /// Sections that list `id` as a successor, in document order.
    pub fn predecessors(&self, id: &SectionId) -> Vec<&SectionId> {
        self.sections.iter().filter(|s| s.next.contains(id)).map(|s| &s.id).collect()
    }

    /// Challenge options in stored order.
    pub fn options(&self) -> &[SectionId] {
        self.section(&self.challenge).map(|s| s.next.as_slice()).unwrap_or(&[])
    }

    /// Position of the desirable Decision among the Challenge options.
    pub fn desirable_option(&self) -> Option<usize> {
        let first = self.desirable_path.first()?;
        self.options().iter().position(|o| o == first)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetBehavior {
    pub text: String,
    pub classified_type: TopicType,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Language {
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub translation: Option<String>,
}

impl Default for Language {
    fn default() -> Self {
        Self { source: "en".into(), translation: None }
    }
}

/// How a selected interest shows up in the story, e.g. Firefighter as a
/// fire truck toy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterestUse {
    pub interest: String,
    pub depicted_as: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SectionEdit {
    pub section: SectionId,
    pub previous_text: String,
    pub new_text: String,
    pub at: DateTime<Utc>,
}

/// A complete story. Serializes as the versioned story document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "StoryDocument", try_from = "StoryDocument")]
pub struct Story {
    pub id: String,
    pub version: u32,
    pub title: String,
    pub topic_type: TopicType,
    pub target_behavior: TargetBehavior,
    pub interests: Vec<InterestUse>,
    pub profile_snapshot: ChildProfile,
    pub graph: PathGraph,
    pub reward_sticker: StickerRef,
    pub language: Language,
    pub created_at: DateTime<Utc>,
    pub edit_log: Vec<SectionEdit>,
    pub preprocessing: Option<IllustrationPlan>,
}

impl Story {
    pub fn to_document_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("story serializes")
    }

    pub fn from_document_str(raw: &str) -> Result<Self, DocumentError> {
        document::parse(raw)
    }

    pub fn child_name(&self) -> &str {
        &self.profile_snapshot.child.name
    }

    /// Every name a section may reference: the child, snapshot entities, and
    /// interest depictions.
    pub fn known_entity(&self, name: &str) -> bool {
        self.profile_snapshot.knows(name)
            || self.interests.iter().any(|i| i.depicted_as.eq_ignore_ascii_case(name))
    }

    /// Names exempt from vocabulary flagging.
    pub fn exemptions(&self) -> Vec<String> {
        let mut names = self.profile_snapshot.all_names();
        names.extend(self.interests.iter().map(|i| i.depicted_as.clone()));
        names
    }

    pub fn full_text(&self) -> String {
        std::iter::once(self.title.as_str())
            .chain(self.graph.sections.iter().map(|s| s.text.as_str()))
            .collect::<Vec<_>>()
            .join("\n")
    }
}
