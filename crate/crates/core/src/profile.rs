//! Child profile: the personalization source for generated stories.

use serde::{Deserialize, Serialize};

use crate::digest::ImageRef;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    Interest,
    Person,
    Place,
}

impl EntityKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EntityKind::Interest => "interest",
            EntityKind::Person => "person",
            EntityKind::Place => "place",
        }
    }
}

/// A registered interest, person, or place.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileEntity {
    pub id: String,
    pub kind: EntityKind,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub photo: Option<ImageRef>,
    /// Relationship to the child for persons ("friend", "mother", "teacher").
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relation: Option<String>,
}

impl ProfileEntity {
    pub fn new(kind: EntityKind, name: impl Into<String>) -> Self {
        let name = name.into();
        Self {
            id: format!("{}-{}", kind.as_str(), slug(&name)),
            kind,
            name,
            description: None,
            photo: None,
            relation: None,
        }
    }

    pub fn with_photo(mut self, photo: ImageRef) -> Self {
        self.photo = Some(photo);
        self
    }

    pub fn with_description(mut self, description: impl Into<String>) -> Self {
        self.description = Some(description.into());
        self
    }

    pub fn with_relation(mut self, relation: impl Into<String>) -> Self {
        self.relation = Some(relation.into());
        self
    }

    pub fn is_caregiver(&self) -> bool {
        self.relation.as_deref().is_some_and(is_caregiver_relation)
    }

    pub fn is_authority(&self) -> bool {
        self.relation.as_deref().is_some_and(|r| {
            let r = r.to_ascii_lowercase();
            AUTHORITY_RELATIONS.iter().any(|a| r.contains(a))
        })
    }
}

const CAREGIVER_RELATIONS: &[&str] = &[
    "mother", "mom", "mum", "father", "dad", "parent", "grandmother", "grandma", "grandfather",
    "grandpa", "caregiver", "aunt", "uncle", "nanny",
];

const AUTHORITY_RELATIONS: &[&str] = &[
    "teacher", "coach", "librarian", "pastor", "principal", "officer", "guard", "staff",
];

pub fn is_caregiver_relation(relation: &str) -> bool {
    let r = relation.to_ascii_lowercase();
    CAREGIVER_RELATIONS.iter().any(|c| r.split_whitespace().any(|w| w == *c))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Child {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub photo: Option<ImageRef>,
}

/// The child plus every registered entity. Stories embed a snapshot of the
/// subset they use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChildProfile {
    pub id: String,
    pub child: Child,
    #[serde(default)]
    pub interests: Vec<ProfileEntity>,
    #[serde(default)]
    pub persons: Vec<ProfileEntity>,
    #[serde(default)]
    pub places: Vec<ProfileEntity>,
}

impl ChildProfile {
    pub fn new(id: impl Into<String>, child_name: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            child: Child { name: child_name.into(), photo: None },
            interests: Vec::new(),
            persons: Vec::new(),
            places: Vec::new(),
        }
    }

    pub fn entities(&self) -> impl Iterator<Item = &ProfileEntity> {
        self.interests.iter().chain(&self.persons).chain(&self.places)
    }

    pub fn entities_mut(&mut self, kind: EntityKind) -> &mut Vec<ProfileEntity> {
        match kind {
            EntityKind::Interest => &mut self.interests,
            EntityKind::Person => &mut self.persons,
            EntityKind::Place => &mut self.places,
        }
    }

    pub fn entities_of(&self, kind: EntityKind) -> &[ProfileEntity] {
        match kind {
            EntityKind::Interest => &self.interests,
            EntityKind::Person => &self.persons,
            EntityKind::Place => &self.places,
        }
    }

    /// Case-insensitive lookup across all kinds.
    pub fn find(&self, name: &str) -> Option<&ProfileEntity> {
        self.entities().find(|e| e.name.eq_ignore_ascii_case(name))
    }

    /// True when `name` is the child or any registered entity.
    pub fn knows(&self, name: &str) -> bool {
        self.child.name.eq_ignore_ascii_case(name) || self.find(name).is_some()
    }

    /// Child name plus every entity name; the readability exemption set.
    pub fn all_names(&self) -> Vec<String> {
        std::iter::once(self.child.name.clone())
            .chain(self.entities().map(|e| e.name.clone()))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StickerKind {
    Custom,
    Star,
}

/// A reward sticker. Every account has exactly one built-in star sticker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardSticker {
    pub id: String,
    pub label: String,
    pub image: ImageRef,
    pub kind: StickerKind,
}

pub const STAR_STICKER_ID: &str = "star";

impl RewardSticker {
    pub fn star() -> Self {
        Self {
            id: STAR_STICKER_ID.to_string(),
            label: "Star".to_string(),
            image: ImageRef::for_bytes(b"builtin-star-sticker"),
            kind: StickerKind::Star,
        }
    }

    pub fn to_ref(&self) -> StickerRef {
        StickerRef { id: self.id.clone(), label: self.label.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StickerRef {
    pub id: String,
    pub label: String,
}

pub fn slug(name: &str) -> String {
    let mut out = String::with_capacity(name.len());
    let mut dash = false;
    for c in name.chars() {
        if c.is_alphanumeric() {
            out.extend(c.to_lowercase());
            dash = false;
        } else if !dash && !out.is_empty() {
            out.push('-');
            dash = true;
        }
    }
    while out.ends_with('-') {
        out.pop();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn caregiver_detection() {
        let mom = ProfileEntity::new(EntityKind::Person, "Mom").with_relation("mother");
        let mia = ProfileEntity::new(EntityKind::Person, "Mia").with_relation("friend");
        assert!(mom.is_caregiver());
        assert!(!mia.is_caregiver());
        assert!(ProfileEntity::new(EntityKind::Person, "Ms. Lee").with_relation("teacher").is_authority());
    }

    #[test]
    fn slugs() {
        assert_eq!(slug("Alex's bedroom"), "alex-s-bedroom");
        assert_eq!(slug("  Fire truck! "), "fire-truck");
    }

    #[test]
    fn lookup_is_case_insensitive() {
        let mut p = ChildProfile::new("p1", "Alex");
        p.interests.push(ProfileEntity::new(EntityKind::Interest, "Firefighter"));
        assert!(p.knows("firefighter"));
        assert!(p.knows("ALEX"));
        assert!(!p.knows("Ben"));
    }
}
