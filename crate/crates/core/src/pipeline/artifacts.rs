//! Illustration preprocessing artifacts and the per-story cache that lets a
//! single page be re-imaged without rerunning the whole pipeline.

use serde::{Deserialize, Serialize};

use crate::digest::ImageRef;
use crate::story::SectionId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RosterKind {
    Person,
    Object,
    Place,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RosterEntry {
    pub name: String,
    pub kind: RosterKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneDescription {
    pub section_id: SectionId,
    pub description: String,
    pub required_entities: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Removal {
    pub entity: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityAssignment {
    pub section_id: SectionId,
    pub entities: Vec<String>,
    /// Entities added by the continuity rule rather than the matcher.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub carried: Vec<String>,
    /// Entities the matcher explicitly dropped from a continuing scene.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub removed: Vec<Removal>,
}

impl EntityAssignment {
    pub fn contains(&self, name: &str) -> bool {
        self.entities.iter().any(|e| e.eq_ignore_ascii_case(name))
    }

    pub fn justified_removal(&self, name: &str) -> bool {
        self.removed
            .iter()
            .any(|r| r.entity.eq_ignore_ascii_case(name) && !r.reason.trim().is_empty())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityDescription {
    pub name: String,
    pub kind: RosterKind,
    pub appearance: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub photo: Option<ImageRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outfit_context: Option<String>,
}

impl EntityDescription {
    /// Entities without a photo need appearance text.
    pub fn is_well_formed(&self) -> bool {
        self.photo.is_some() || !self.appearance.trim().is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionPlan {
    pub section_id: SectionId,
    /// Digest of the section text the plan was built from.
    pub text_digest: String,
    #[serde(default)]
    pub stale: bool,
    pub scene: SceneDescription,
    pub assignment: EntityAssignment,
}

/// Cached preprocessing for every illustrated section.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IllustrationPlan {
    pub roster: Vec<RosterEntry>,
    pub sections: Vec<SectionPlan>,
    pub entities: Vec<EntityDescription>,
}

impl IllustrationPlan {
    pub fn section(&self, id: &SectionId) -> Option<&SectionPlan> {
        self.sections.iter().find(|p| &p.section_id == id)
    }

    pub fn section_mut(&mut self, id: &SectionId) -> Option<&mut SectionPlan> {
        self.sections.iter_mut().find(|p| &p.section_id == id)
    }

    pub fn entity(&self, name: &str) -> Option<&EntityDescription> {
        self.entities.iter().find(|e| e.name.eq_ignore_ascii_case(name))
    }

    pub fn roster_kind(&self, name: &str) -> Option<RosterKind> {
        roster_kind(&self.roster, name)
    }

    pub fn mark_stale(&mut self, id: &SectionId) {
        if let Some(p) = self.section_mut(id) {
            p.stale = true;
        }
    }
}

pub fn roster_kind(roster: &[RosterEntry], name: &str) -> Option<RosterKind> {
    roster.iter().find(|r| r.name.eq_ignore_ascii_case(name)).map(|r| r.kind)
}
