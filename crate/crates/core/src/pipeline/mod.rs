//! Story generation pipeline.
//!
//! Stages run in dependency order: classify, generate, validate content,
//! refine, translate (optional), then scene descriptions, entity matching,
//! entity descriptions, and illustration. Providers are pluggable; the mock
//! suite makes whole runs deterministic.

pub mod artifacts;
pub mod fewshot;
pub mod job;
pub mod live;
pub mod mock;
pub mod prompts;
pub mod provider;
mod run;
pub mod stages;

use chrono::{DateTime, Utc};
use thiserror::Error;

use crate::readability::AssessmentConfig;
use crate::story::ValidationConfig;

pub use artifacts::{EntityAssignment, EntityDescription, IllustrationPlan, RosterEntry, RosterKind, SceneDescription};
pub use fewshot::{FewShotBank, FewShotSample};
pub use job::{
    check_stage_log, DirStore, GenerationJob, GenerationRequest, JobStatus, MemoryStore, PipelineStore, StageRecord,
    StoreError, Verdict,
};
pub use prompts::{PromptSet, Template};
pub use provider::{
    EmbeddingProvider, ImageProvider, ImageRequest, ProviderError, ProviderSuite, Stage, TextProvider, TextRequest,
};
pub use run::{check_request, Pipeline};
pub use stages::{ContentVerdict, Regenerated, StageContext, StageLog};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOptions {
    pub max_attempts: u32,
    pub image_concurrency: usize,
    pub translate: bool,
    pub target_language: String,
    pub few_shot_k: usize,
    pub assessment: AssessmentConfig,
    pub validation: ValidationConfig,
    pub seed: u64,
    /// Creation timestamp for stories; the wall clock when unset.
    pub now: Option<DateTime<Utc>>,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            image_concurrency: 4,
            translate: false,
            target_language: "ko".into(),
            few_shot_k: 22,
            assessment: AssessmentConfig::default(),
            validation: ValidationConfig::default(),
            seed: 0,
            now: None,
        }
    }
}

impl PipelineOptions {
    pub fn timestamp(&self) -> DateTime<Utc> {
        self.now.unwrap_or_else(Utc::now)
    }
}

/// A stage that could not produce an acceptable artifact.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("stage {stage} failed: {reason}")]
pub struct StageFailure {
    pub stage: Stage,
    pub reason: String,
}

impl StageFailure {
    pub fn new(stage: Stage, reason: impl Into<String>) -> Self {
        Self { stage, reason: reason.into() }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("precondition: {0}")]
    Precondition(String),
    #[error("no-such-section: {0}")]
    NoSuchSection(String),
    #[error("story has no illustration preprocessing")]
    NotIllustrated,
    #[error("no such job: {0}")]
    NoSuchJob(String),
    #[error(transparent)]
    Stage(#[from] StageFailure),
    #[error(transparent)]
    Store(#[from] StoreError),
}
