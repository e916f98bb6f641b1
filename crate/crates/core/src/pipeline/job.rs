//! Generation jobs, their audit log, and persistence.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::artifacts::{EntityAssignment, EntityDescription, RosterEntry, SceneDescription};
use super::provider::Stage;
use crate::digest::ImageRef;
use crate::profile::{ChildProfile, StickerRef};
use crate::story::{SectionId, Story, TopicType};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub profile: ChildProfile,
    pub interests: Vec<String>,
    pub target_behavior: String,
    pub reward_sticker: StickerRef,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", content = "reason", rename_all = "snake_case")]
pub enum Verdict {
    Accepted,
    Rejected(String),
    Warning(String),
    Failed(String),
}

impl Verdict {
    pub fn is_accepted(&self) -> bool {
        matches!(self, Verdict::Accepted | Verdict::Warning(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    /// Run number; increments each time a job is resumed.
    pub run: u32,
    pub stage: Stage,
    /// Section the record is about, for per-section stages.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<String>,
    pub attempt: u32,
    pub input_digest: String,
    pub output: Value,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum JobStatus {
    Pending,
    Running,
    Failed { stage: Stage, reason: String },
    Complete { story_id: String },
}

/// Intermediate outputs, kept so a job can resume after a restart.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct JobArtifacts {
    pub topic: Option<TopicType>,
    pub draft: Option<Story>,
    #[serde(default)]
    pub content_validated: bool,
    pub refined: Option<Story>,
    pub translated: Option<Story>,
    pub scenes: Option<Vec<SceneDescription>>,
    pub roster: Option<Vec<RosterEntry>>,
    pub assignments: Option<Vec<EntityAssignment>>,
    pub entity_descriptions: Option<Vec<EntityDescription>>,
    pub illustrations: Option<BTreeMap<SectionId, ImageRef>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationJob {
    pub id: String,
    pub request: GenerationRequest,
    pub status: JobStatus,
    #[serde(default)]
    pub runs: u32,
    pub stage_log: Vec<StageRecord>,
    #[serde(default)]
    pub artifacts: JobArtifacts,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl GenerationJob {
    pub fn new(id: impl Into<String>, request: GenerationRequest) -> Self {
        Self {
            id: id.into(),
            request,
            status: JobStatus::Pending,
            runs: 0,
            stage_log: Vec::new(),
            artifacts: JobArtifacts::default(),
            warnings: Vec::new(),
        }
    }

    pub fn story_id(&self) -> Option<&str> {
        match &self.status {
            JobStatus::Complete { story_id } => Some(story_id),
            _ => None,
        }
    }

    pub fn stages(&self) -> Vec<Stage> {
        let mut out: Vec<Stage> = Vec::new();
        for r in &self.stage_log {
            if out.last() != Some(&r.stage) {
                out.push(r.stage);
            }
        }
        out
    }
}

/// Stages that make no provider call when there is nothing to do: a story
/// already at reading level, translation switched off, an empty roster.
const SKIPPABLE: [Stage; 3] = [Stage::Refine, Stage::Translate, Stage::DescribeEntities];

/// Checks the audit log against the stage graph: no stage may be recorded
/// before a stage it depends on, and no (run, stage, subject) may exceed
/// `max_attempts`. A skippable input that never appears is satisfied by its
/// own inputs. Returns human-readable problems.
pub fn check_stage_log(log: &[StageRecord], max_attempts: u32, translated: bool) -> Vec<String> {
    let mut problems = Vec::new();
    let mut first_seen: HashMap<Stage, usize> = HashMap::new();
    for (i, r) in log.iter().enumerate() {
        first_seen.entry(r.stage).or_insert(i);
    }
    fn satisfied(input: Stage, before: usize, first_seen: &HashMap<Stage, usize>) -> bool {
        match first_seen.get(&input) {
            Some(&j) => j < before,
            None if SKIPPABLE.contains(&input) => input.inputs().iter().all(|s| satisfied(*s, before, first_seen)),
            None => false,
        }
    }
    for (i, r) in log.iter().enumerate() {
        for input in r.stage.inputs() {
            if !satisfied(*input, i, &first_seen) {
                problems.push(format!("record {i}: {} logged before its input {input}", r.stage));
            }
        }
    }
    if translated && !first_seen.contains_key(&Stage::Translate) {
        problems.push("translation requested but never logged".to_string());
    }
    let mut attempts: HashMap<(u32, Stage, Option<&str>), u32> = HashMap::new();
    for r in log {
        let n = attempts.entry((r.run, r.stage, r.subject.as_deref())).or_default();
        *n = (*n).max(r.attempt);
        if *n > max_attempts {
            problems.push(format!("{} {:?}: attempt {} exceeds {max_attempts}", r.stage, r.subject, r.attempt));
        }
    }
    problems
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("storage io: {0}")]
    Io(#[from] std::io::Error),
    #[error("storage encoding: {0}")]
    Encoding(#[from] serde_json::Error),
    #[error("storage: {0}")]
    Backend(String),
}

/// Persistence for jobs and finished stories.
pub trait PipelineStore: Send + Sync {
    fn load_job(&self, id: &str) -> Result<Option<GenerationJob>, StoreError>;
    fn save_job(&self, job: &GenerationJob) -> Result<(), StoreError>;
    fn save_story(&self, story: &Story) -> Result<(), StoreError>;
    fn load_story(&self, id: &str) -> Result<Option<Story>, StoreError>;
}

#[derive(Debug, Default)]
pub struct MemoryStore {
    jobs: Mutex<HashMap<String, GenerationJob>>,
    stories: Mutex<HashMap<String, Story>>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn story_count(&self) -> usize {
        self.stories.lock().unwrap().len()
    }
}

impl PipelineStore for MemoryStore {
    fn load_job(&self, id: &str) -> Result<Option<GenerationJob>, StoreError> {
        Ok(self.jobs.lock().unwrap().get(id).cloned())
    }

    fn save_job(&self, job: &GenerationJob) -> Result<(), StoreError> {
        self.jobs.lock().unwrap().insert(job.id.clone(), job.clone());
        Ok(())
    }

    fn save_story(&self, story: &Story) -> Result<(), StoreError> {
        self.stories.lock().unwrap().insert(story.id.clone(), story.clone());
        Ok(())
    }

    fn load_story(&self, id: &str) -> Result<Option<Story>, StoreError> {
        Ok(self.stories.lock().unwrap().get(id).cloned())
    }
}

/// One JSON file per job under `jobs/`, one story document per story under
/// `stories/`. Writes go through a temp file and rename.
#[derive(Debug, Clone)]
pub struct DirStore {
    root: PathBuf,
}

impl DirStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        std::fs::create_dir_all(root.join("jobs"))?;
        std::fs::create_dir_all(root.join("stories"))?;
        Ok(Self { root })
    }

    fn job_path(&self, id: &str) -> PathBuf {
        self.root.join("jobs").join(format!("{}.json", sanitize(id)))
    }

    fn story_path(&self, id: &str) -> PathBuf {
        self.root.join("stories").join(format!("{}.json", sanitize(id)))
    }
}

fn sanitize(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(tmp, path)
}

impl PipelineStore for DirStore {
    fn load_job(&self, id: &str) -> Result<Option<GenerationJob>, StoreError> {
        match std::fs::read(self.job_path(id)) {
            Ok(bytes) => Ok(Some(serde_json::from_slice(&bytes)?)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    fn save_job(&self, job: &GenerationJob) -> Result<(), StoreError> {
        write_atomic(&self.job_path(&job.id), &serde_json::to_vec_pretty(job)?)?;
        Ok(())
    }

    fn save_story(&self, story: &Story) -> Result<(), StoreError> {
        write_atomic(&self.story_path(&story.id), story.to_document_string().as_bytes())?;
        Ok(())
    }

    fn load_story(&self, id: &str) -> Result<Option<Story>, StoreError> {
        match std::fs::read_to_string(self.story_path(id)) {
            Ok(raw) => Story::from_document_str(&raw)
                .map(Some)
                .map_err(|e| StoreError::Backend(e.to_string())),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }
}
