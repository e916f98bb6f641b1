//! Versioned prompt templates.
//!
//! Each template starts with a `# template: <name> v<N>` header line and uses
//! `{{slot}}` placeholders. Rendering fails if a slot is left unfilled or a
//! value is supplied for a slot the template does not declare.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::story::TopicType;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("template {0} is missing its header line")]
    MissingHeader(String),
    #[error("template {template}: slot {{{{{slot}}}}} has no value")]
    Unfilled { template: String, slot: String },
    #[error("template {template}: no slot named {slot}")]
    UnknownSlot { template: String, slot: String },
}

#[derive(Debug, Clone)]
pub struct Template {
    pub name: String,
    pub version: u32,
    body: String,
    slots: BTreeSet<String>,
}

impl Template {
    pub fn parse(raw: &str) -> Result<Self, PromptError> {
        let (header, body) = raw.split_once('\n').unwrap_or((raw, ""));
        let spec = header
            .strip_prefix("# template:")
            .map(str::trim)
            .ok_or_else(|| PromptError::MissingHeader(header.to_string()))?;
        let (name, version) = spec
            .rsplit_once(" v")
            .and_then(|(n, v)| Some((n.trim().to_string(), v.trim().parse().ok()?)))
            .ok_or_else(|| PromptError::MissingHeader(header.to_string()))?;
        let mut slots = BTreeSet::new();
        let mut rest = body;
        while let Some(start) = rest.find("{{") {
            let after = &rest[start + 2..];
            let Some(end) = after.find("}}") else { break };
            slots.insert(after[..end].trim().to_string());
            rest = &after[end + 2..];
        }
        Ok(Self { name, version, body: body.to_string(), slots })
    }

    pub fn id(&self) -> String {
        format!("{}@v{}", self.name, self.version)
    }

    pub fn slots(&self) -> impl Iterator<Item = &str> {
        self.slots.iter().map(String::as_str)
    }

    pub fn render(&self, values: &BTreeMap<&str, String>) -> Result<String, PromptError> {
        for key in values.keys() {
            if !self.slots.contains(*key) {
                return Err(PromptError::UnknownSlot { template: self.id(), slot: key.to_string() });
            }
        }
        let mut out = self.body.clone();
        for slot in &self.slots {
            let value = values
                .get(slot.as_str())
                .ok_or_else(|| PromptError::Unfilled { template: self.id(), slot: slot.clone() })?;
            out = out.replace(&format!("{{{{{slot}}}}}"), value);
        }
        Ok(out.trim_end().to_string() + "\n")
    }
}

/// The full template set used by the pipeline.
#[derive(Debug, Clone)]
pub struct PromptSet {
    pub classify: Template,
    pub generate_relationship: Template,
    pub generate_social_rules: Template,
    pub generate_healthy_habits: Template,
    pub validate_content: Template,
    pub refine: Template,
    pub translate: Template,
    pub scene_descriptions: Template,
    pub match_entities: Template,
    pub describe_entities: Template,
    pub illustrate: Template,
}

macro_rules! bundled {
    ($file:literal) => {
        Template::parse(include_str!(concat!("../../assets/prompts/", $file))).expect($file)
    };
}

impl PromptSet {
    pub fn bundled() -> Self {
        Self {
            classify: bundled!("classify.txt"),
            generate_relationship: bundled!("generate-relationship.txt"),
            generate_social_rules: bundled!("generate-social-rules.txt"),
            generate_healthy_habits: bundled!("generate-healthy-habits.txt"),
            validate_content: bundled!("validate-content.txt"),
            refine: bundled!("refine.txt"),
            translate: bundled!("translate.txt"),
            scene_descriptions: bundled!("scene-descriptions.txt"),
            match_entities: bundled!("match-entities.txt"),
            describe_entities: bundled!("describe-entities.txt"),
            illustrate: bundled!("illustrate.txt"),
        }
    }

    pub fn generate_for(&self, topic: TopicType) -> &Template {
        match topic {
            TopicType::Relationship => &self.generate_relationship,
            TopicType::SocialRules => &self.generate_social_rules,
            TopicType::HealthyHabits => &self.generate_healthy_habits,
        }
    }
}

impl Default for PromptSet {
    fn default() -> Self {
        Self::bundled()
    }
}

/// Builds a slot map from `(name, value)` pairs.
pub fn slots<const N: usize>(pairs: [(&'static str, String); N]) -> BTreeMap<&'static str, String> {
    pairs.into_iter().collect()
}
