//! The versioned story document.
//!
//! ```text
//! {
//!   "format_version": 1,
//!   "story":            { id, version, title, topic_type, target_behavior, ... },
//!   "sections":         [ { id, kind, text, emotion_cues, speaker, next, ... } ],
//!   "paths":            { root, challenge, ending, desirable, undesirable },
//!   "profile_snapshot": { id, child, interests, persons, places },
//!   "edit_log":         [ { section, previous_text, new_text, at } ],
//!   "preprocessing":    { ... }            // optional illustration cache
//! }
//! ```
//!
//! Images are referenced by [`ImageRef`](crate::ImageRef), never embedded.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{InterestUse, Language, PathGraph, Section, SectionEdit, SectionId, Story, TargetBehavior, TopicType};
use crate::pipeline::artifacts::IllustrationPlan;
use crate::profile::{ChildProfile, StickerRef};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DocumentError {
    #[error("unsupported-version: document format {found}, expected {FORMAT_VERSION}")]
    UnsupportedVersion { found: u32 },
    #[error("malformed story document: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoryHeader {
    pub id: String,
    #[serde(default = "first_version")]
    pub version: u32,
    pub title: String,
    pub topic_type: TopicType,
    pub target_behavior: TargetBehavior,
    #[serde(default)]
    pub interests: Vec<InterestUse>,
    pub reward_sticker: StickerRef,
    #[serde(default)]
    pub language: Language,
    pub created_at: DateTime<Utc>,
}

fn first_version() -> u32 {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsDocument {
    pub root: SectionId,
    pub challenge: SectionId,
    pub ending: SectionId,
    pub desirable: Vec<SectionId>,
    #[serde(default)]
    pub undesirable: Vec<Vec<SectionId>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoryDocument {
    pub format_version: u32,
    pub story: StoryHeader,
    pub sections: Vec<Section>,
    pub paths: PathsDocument,
    pub profile_snapshot: ChildProfile,
    #[serde(default)]
    pub edit_log: Vec<SectionEdit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preprocessing: Option<IllustrationPlan>,
}

impl From<Story> for StoryDocument {
    fn from(s: Story) -> Self {
        StoryDocument {
            format_version: FORMAT_VERSION,
            story: StoryHeader {
                id: s.id,
                version: s.version,
                title: s.title,
                topic_type: s.topic_type,
                target_behavior: s.target_behavior,
                interests: s.interests,
                reward_sticker: s.reward_sticker,
                language: s.language,
                created_at: s.created_at,
            },
            sections: s.graph.sections,
            paths: PathsDocument {
                root: s.graph.root,
                challenge: s.graph.challenge,
                ending: s.graph.ending,
                desirable: s.graph.desirable_path,
                undesirable: s.graph.undesirable_paths,
            },
            profile_snapshot: s.profile_snapshot,
            edit_log: s.edit_log,
            preprocessing: s.preprocessing,
        }
    }
}

impl TryFrom<StoryDocument> for Story {
    type Error = DocumentError;

    fn try_from(d: StoryDocument) -> Result<Self, Self::Error> {
        if d.format_version != FORMAT_VERSION {
            return Err(DocumentError::UnsupportedVersion { found: d.format_version });
        }
        Ok(Story {
            id: d.story.id,
            version: d.story.version,
            title: d.story.title,
            topic_type: d.story.topic_type,
            target_behavior: d.story.target_behavior,
            interests: d.story.interests,
            profile_snapshot: d.profile_snapshot,
            graph: PathGraph {
                sections: d.sections,
                root: d.paths.root,
                challenge: d.paths.challenge,
                ending: d.paths.ending,
                desirable_path: d.paths.desirable,
                undesirable_paths: d.paths.undesirable,
            },
            reward_sticker: d.story.reward_sticker,
            language: d.story.language,
            created_at: d.story.created_at,
            edit_log: d.edit_log,
            preprocessing: d.preprocessing,
        })
    }
}

pub(super) fn parse(raw: &str) -> Result<Story, DocumentError> {
    // Check the version first so old documents get a precise error instead
    // of a field mismatch.
    let value: serde_json::Value =
        serde_json::from_str(raw).map_err(|e| DocumentError::Malformed(e.to_string()))?;
    match value.get("format_version").and_then(|v| v.as_u64()) {
        Some(v) if v == u64::from(FORMAT_VERSION) => {}
        Some(v) => return Err(DocumentError::UnsupportedVersion { found: v as u32 }),
        None => return Err(DocumentError::Malformed("missing format_version".into())),
    }
    let doc: StoryDocument =
        serde_json::from_value(value).map_err(|e| DocumentError::Malformed(e.to_string()))?;
    Story::try_from(doc)
}
