//! Provider abstraction for text, image, and embedding generation.

use std::fmt;
use std::sync::Arc;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::digest::{digest_json, ImageRef};

/// Pipeline stages, in dependency order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Classify,
    Generate,
    ValidateContent,
    Refine,
    Translate,
    SceneDescriptions,
    MatchEntities,
    DescribeEntities,
    Illustrate,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Classify => "classify",
            Stage::Generate => "generate",
            Stage::ValidateContent => "validate_content",
            Stage::Refine => "refine",
            Stage::Translate => "translate",
            Stage::SceneDescriptions => "scene_descriptions",
            Stage::MatchEntities => "match_entities",
            Stage::DescribeEntities => "describe_entities",
            Stage::Illustrate => "illustrate",
        }
    }

    /// Stages whose output this stage consumes.
    pub fn inputs(self) -> &'static [Stage] {
        match self {
            Stage::Classify => &[],
            Stage::Generate => &[Stage::Classify],
            Stage::ValidateContent => &[Stage::Generate],
            Stage::Refine => &[Stage::ValidateContent],
            Stage::Translate => &[Stage::Refine],
            Stage::SceneDescriptions => &[Stage::Refine],
            Stage::MatchEntities => &[Stage::SceneDescriptions],
            Stage::DescribeEntities => &[Stage::SceneDescriptions],
            Stage::Illustrate => &[Stage::MatchEntities, Stage::DescribeEntities],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum ProviderError {
    #[error("provider-unreachable: {0}")]
    Unreachable(String),
    #[error("provider rejected the request: {0}")]
    Rejected(String),
    #[error("no-fixture: no recorded response for digest {0}")]
    NoFixture(String),
}

/// A structured text completion request.
///
/// `payload` carries the same inputs the prompt was rendered from, so mocks
/// can answer without parsing prose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextRequest {
    pub stage: Stage,
    pub template: String,
    pub prompt: String,
    pub payload: Value,
}

impl TextRequest {
    /// Stable key for fixture replay.
    pub fn digest(&self) -> String {
        digest_json(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRequest {
    pub section_id: String,
    pub prompt: String,
    pub reference_photos: Vec<ImageRef>,
}

impl ImageRequest {
    pub fn digest(&self) -> String {
        digest_json(self)
    }
}

#[async_trait]
pub trait TextProvider: Send + Sync {
    async fn complete(&self, request: &TextRequest) -> Result<String, ProviderError>;
}

#[async_trait]
pub trait ImageProvider: Send + Sync {
    async fn generate(&self, request: &ImageRequest) -> Result<ImageRef, ProviderError>;
}

#[async_trait]
pub trait EmbeddingProvider: Send + Sync {
    async fn embed(&self, text: &str) -> Result<Vec<f64>, ProviderError>;
}

#[derive(Clone)]
pub struct ProviderSuite {
    pub text: Arc<dyn TextProvider>,
    pub image: Arc<dyn ImageProvider>,
    pub embedding: Arc<dyn EmbeddingProvider>,
}

impl fmt::Debug for ProviderSuite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ProviderSuite")
    }
}
