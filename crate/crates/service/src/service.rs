//! Service operations. HTTP handlers are thin wrappers over these.

use std::sync::Arc;
use std::time::Duration;

use chrono::{DateTime, Utc};
use forge_core::insights::{AccountExport, EventExport, StoryMeta, EXPORT_FORMAT_VERSION};
use forge_core::pipeline::live::{LiveClient, LiveConfig};
use forge_core::pipeline::mock::{MockSuite, MockTextProvider};
use forge_core::pipeline::{
    check_request, GenerationJob, GenerationRequest, JobStatus, Pipeline, PipelineOptions, ProviderSuite,
};
use forge_core::profile::{ChildProfile, EntityKind, ProfileEntity, RewardSticker, StickerKind, STAR_STICKER_ID};
use forge_core::session::{Device, ReadingEvent, ReadingSession, RewardOutcome, SessionError};
use forge_core::stats::{engagement_stats, EngagementStats, TimeRange};
use forge_core::story::edit_section_text;
use forge_core::{ImageRef, SectionId, Story};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tokio::sync::{broadcast, Semaphore};

use crate::config::{ProviderMode, ServiceConfig};
use crate::error::{ServiceError, ServiceResult};
use crate::store::{q, AccountStore, Db};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntityInput {
    #[serde(default)]
    pub id: Option<String>,
    pub kind: EntityKind,
    pub name: String,
    #[serde(default)]
    pub description: Option<String>,
    #[serde(default)]
    pub photo: Option<ImageRef>,
    #[serde(default)]
    pub relation: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StickerInput {
    #[serde(default)]
    pub id: Option<String>,
    pub label: String,
    pub image: ImageRef,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateStory {
    pub interests: Vec<String>,
    pub target_behavior: String,
    pub reward_sticker_id: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartSession {
    pub story_id: String,
    #[serde(default)]
    pub version: Option<u32>,
    pub device: Device,
    /// Client clock; readers may queue events offline.
    #[serde(default)]
    pub started_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Regeneration {
    pub story: Story,
    pub image: ImageRef,
    pub reused_cache: bool,
}

/// One accepted event on a session, as broadcast on the realtime channel.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionUpdate {
    #[serde(skip)]
    pub account: String,
    pub session_id: String,
    pub event: ReadingEvent,
}

#[derive(Clone)]
pub struct Service {
    db: Arc<Db>,
    pipeline: Arc<Pipeline>,
    workers: Arc<Semaphore>,
    updates: broadcast::Sender<SessionUpdate>,
}

fn providers_for(config: &ServiceConfig) -> ServiceResult<ProviderSuite> {
    match config.providers.mode {
        ProviderMode::Mock => {
            let mut text = MockTextProvider::new();
            if let Some(dir) = &config.providers.fixture_dir {
                text = text.with_fixture_dir(dir);
            }
            Ok(MockSuite::with_text(text).providers())
        }
        ProviderMode::Live => {
            let live = LiveConfig::from_env().map_err(|e| ServiceError::bad_request(e.to_string()))?;
            Ok(LiveClient::new(live).map_err(|e| ServiceError::internal(e.to_string()))?.suite())
        }
    }
}

pub fn pipeline_options(config: &ServiceConfig) -> PipelineOptions {
    PipelineOptions {
        max_attempts: config.limits.max_attempts,
        image_concurrency: config.limits.image_concurrency,
        translate: config.pipeline.translate,
        target_language: config.pipeline.target_language.clone(),
        seed: config.pipeline.seed,
        ..PipelineOptions::default()
    }
}

fn new_id(prefix: &str) -> String {
    format!("{prefix}-{}", uuid::Uuid::new_v4().simple())
}

fn owned<T>(row: Option<(String, T)>, account: &str, what: &str) -> ServiceResult<T> {
    match row {
        Some((owner, v)) if owner == account => Ok(v),
        _ => Err(ServiceError::not_found(what.to_string())),
    }
}

impl Service {
    pub fn open(config: &ServiceConfig) -> ServiceResult<Self> {
        let db = if config.storage.path.as_os_str() == ":memory:" {
            Db::open_in_memory()?
        } else {
            Db::open(&config.storage.path)?
        };
        let pipeline = Pipeline::new(providers_for(config)?, pipeline_options(config));
        Ok(Self::with_parts(db, pipeline, config.limits.workers))
    }

    pub fn with_parts(db: Db, pipeline: Pipeline, workers: usize) -> Self {
        Self {
            db: Arc::new(db),
            pipeline: Arc::new(pipeline),
            workers: Arc::new(Semaphore::new(workers.max(1))),
            updates: broadcast::channel(256).0,
        }
    }

    pub fn subscribe(&self) -> broadcast::Receiver<SessionUpdate> {
        self.updates.subscribe()
    }

    /// Requeues jobs left pending or running by a previous process.
    pub fn resume_unfinished(&self) -> ServiceResult<usize> {
        let jobs = self.db.tx(|tx| q::unfinished_jobs(tx, None))?;
        let n = jobs.len();
        for (account, job) in jobs {
            self.spawn_job(account, job.id);
        }
        Ok(n)
    }

    fn spawn_job(&self, account: String, job_id: String) {
        let this = self.clone();
        tokio::spawn(async move {
            let Ok(_permit) = this.workers.clone().acquire_owned().await else { return };
            let store = AccountStore { db: this.db.clone(), account };
            match this.pipeline.resume(&store, &job_id).await {
                Ok(job) => tracing::info!(job = %job.id, status = ?job.status, "job finished"),
                Err(e) => tracing::error!(job = %job_id, error = %e, "job aborted"),
            }
        });
    }

    // Profiles

    pub fn profile(&self, account: &str) -> ServiceResult<ChildProfile> {
        self.db.tx(|tx| q::ensure_account(tx, account))
    }

    fn check_photo(tx: &rusqlite::Transaction<'_>, account: &str, photo: &ImageRef) -> ServiceResult<()> {
        match q::photo(tx, account, photo)? {
            Some(_) => Ok(()),
            None => Err(ServiceError::bad_request(format!("photo {} was not uploaded", photo.as_str()))),
        }
    }

    pub fn set_child_name(&self, account: &str, name: &str) -> ServiceResult<ChildProfile> {
        if name.trim().is_empty() {
            return Err(ServiceError::bad_request("child name is empty"));
        }
        self.db.tx(|tx| {
            let mut p = q::ensure_account(tx, account)?;
            p.child.name = name.trim().to_string();
            q::save_profile(tx, account, &p)?;
            Ok(p)
        })
    }

    pub fn set_child_photo(&self, account: &str, photo: Option<ImageRef>) -> ServiceResult<ChildProfile> {
        let photo = photo.ok_or_else(|| ServiceError::bad_request("child photo is missing"))?;
        self.db.tx(|tx| {
            let mut p = q::ensure_account(tx, account)?;
            Self::check_photo(tx, account, &photo)?;
            p.child.photo = Some(photo);
            q::save_profile(tx, account, &p)?;
            Ok(p)
        })
    }

    pub fn put_photo(&self, account: &str, bytes: &[u8]) -> ServiceResult<ImageRef> {
        if bytes.is_empty() {
            return Err(ServiceError::bad_request("photo is empty"));
        }
        self.db.tx(|tx| {
            q::ensure_account(tx, account)?;
            q::put_photo(tx, account, bytes)
        })
    }

    pub fn photo(&self, account: &str, image: &ImageRef) -> ServiceResult<Vec<u8>> {
        self.db
            .tx(|tx| q::photo(tx, account, image))?
            .ok_or_else(|| ServiceError::not_found(format!("photo {}", image.as_str())))
    }

    /// Creates an entity, or updates the one named by `input.id`. Names are
    /// unique within a kind.
    pub fn upsert_entity(&self, account: &str, input: EntityInput) -> ServiceResult<ProfileEntity> {
        let name = input.name.trim().to_string();
        if name.is_empty() {
            return Err(ServiceError::bad_request("entity name is empty"));
        }
        self.db.tx(|tx| {
            let mut p = q::ensure_account(tx, account)?;
            if let Some(photo) = &input.photo {
                Self::check_photo(tx, account, photo)?;
            }
            let all_ids: Vec<String> = p.entities().map(|e| e.id.clone()).collect();
            let list = p.entities_mut(input.kind);
            let target = input.id.as_ref().and_then(|id| list.iter().position(|e| &e.id == id));
            if list.iter().enumerate().any(|(i, e)| Some(i) != target && e.name.eq_ignore_ascii_case(&name)) {
                return Err(ServiceError::conflict(format!("{} {name:?} already exists", input.kind.as_str())));
            }
            let mut entity = ProfileEntity::new(input.kind, &name);
            entity.description = input.description.clone();
            entity.photo = input.photo.clone();
            entity.relation = input.relation.clone();
            match target {
                Some(i) => {
                    entity.id = list[i].id.clone();
                    list[i] = entity.clone();
                }
                None => {
                    if let Some(id) = &input.id {
                        entity.id = id.clone();
                    }
                    let base = entity.id.clone();
                    let mut n = 2;
                    while all_ids.contains(&entity.id) {
                        entity.id = format!("{base}-{n}");
                        n += 1;
                    }
                    list.push(entity.clone());
                }
            }
            q::save_profile(tx, account, &p)?;
            Ok(entity)
        })
    }

    /// Deletes an entity unless a pending or running job uses it.
    pub fn delete_entity(&self, account: &str, entity_id: &str) -> ServiceResult<()> {
        self.db.tx(|tx| {
            let mut p = q::ensure_account(tx, account)?;
            let kind = p
                .entities()
                .find(|e| e.id == entity_id)
                .map(|e| e.kind)
                .ok_or_else(|| ServiceError::not_found(format!("entity {entity_id}")))?;
            let busy = q::unfinished_jobs(tx, Some(account))?
                .into_iter()
                .any(|(_, job)| job.request.profile.entities().any(|e| e.id == entity_id));
            if busy {
                return Err(ServiceError::new("in-use", format!("entity {entity_id} is used by a running job")));
            }
            p.entities_mut(kind).retain(|e| e.id != entity_id);
            q::save_profile(tx, account, &p)
        })
    }

    pub fn stickers(&self, account: &str) -> ServiceResult<Vec<RewardSticker>> {
        self.db.tx(|tx| {
            q::ensure_account(tx, account)?;
            q::stickers(tx, account)
        })
    }

    pub fn upsert_sticker(&self, account: &str, input: StickerInput) -> ServiceResult<RewardSticker> {
        if input.label.trim().is_empty() {
            return Err(ServiceError::bad_request("sticker label is empty"));
        }
        let id = input.id.clone().unwrap_or_else(|| format!("sticker-{}", forge_core::profile::slug(&input.label)));
        if id == STAR_STICKER_ID {
            return Err(ServiceError::bad_request("the star sticker is built in"));
        }
        self.db.tx(|tx| {
            q::ensure_account(tx, account)?;
            Self::check_photo(tx, account, &input.image)?;
            let sticker =
                RewardSticker { id: id.clone(), label: input.label.trim().to_string(), image: input.image.clone(), kind: StickerKind::Custom };
            q::upsert_sticker(tx, account, &sticker)?;
            Ok(sticker)
        })
    }

    // Stories and jobs

    /// Validates the request, stores a pending job, and queues it.
    pub fn create_story(&self, account: &str, input: CreateStory) -> ServiceResult<GenerationJob> {
        let job = self.db.tx(|tx| {
            let profile = q::ensure_account(tx, account)?;
            let sticker = q::stickers(tx, account)?
                .into_iter()
                .find(|s| s.id == input.reward_sticker_id)
                .ok_or_else(|| ServiceError::bad_request(format!("unknown sticker {}", input.reward_sticker_id)))?;
            if profile.child.photo.is_none() {
                return Err(ServiceError::new("profile-incomplete", "the child's photo is missing"));
            }
            let request = GenerationRequest {
                profile,
                interests: input.interests.clone(),
                target_behavior: input.target_behavior.clone(),
                reward_sticker: sticker.to_ref(),
            };
            check_request(&request)?;
            let job = GenerationJob::new(new_id("job"), request);
            q::insert_job(tx, account, &job, Utc::now())?;
            Ok(job)
        })?;
        self.spawn_job(account.to_string(), job.id.clone());
        Ok(job)
    }

    pub fn job(&self, account: &str, id: &str) -> ServiceResult<GenerationJob> {
        owned(self.db.tx(|tx| q::job(tx, id))?, account, &format!("job {id}"))
    }

    /// Polls until the job leaves pending/running.
    pub async fn wait_for_job(&self, account: &str, id: &str, timeout: Duration) -> ServiceResult<GenerationJob> {
        let deadline = tokio::time::Instant::now() + timeout;
        loop {
            let job = self.job(account, id)?;
            if matches!(job.status, JobStatus::Complete { .. } | JobStatus::Failed { .. }) {
                return Ok(job);
            }
            if tokio::time::Instant::now() >= deadline {
                return Err(ServiceError::internal(format!("job {id} still {:?}", job.status)));
            }
            tokio::time::sleep(Duration::from_millis(10)).await;
        }
    }

    pub fn story(&self, account: &str, id: &str, version: Option<u32>) -> ServiceResult<Story> {
        owned(self.db.tx(|tx| q::story(tx, id, version))?, account, &format!("story {id}"))
    }

    pub fn stories(&self, account: &str) -> ServiceResult<Vec<Story>> {
        self.db.tx(|tx| q::latest_stories(tx, account))
    }

    /// Applies a section patch. Only `text` may change.
    pub fn edit_section(&self, account: &str, id: &str, section: &str, patch: &Value) -> ServiceResult<Story> {
        let obj = patch.as_object().ok_or_else(|| ServiceError::bad_request("patch must be an object"))?;
        if let Some(k) = obj.keys().find(|k| k.as_str() != "text") {
            return Err(ServiceError::new("structure-immutable", format!("field {k:?} cannot be edited")));
        }
        let text = obj
            .get("text")
            .and_then(Value::as_str)
            .ok_or_else(|| ServiceError::bad_request("patch needs a text string"))?;
        self.db.tx(|tx| {
            let story = owned(q::story(tx, id, None)?, account, &format!("story {id}"))?;
            match edit_section_text(&story, &SectionId::new(section), text, Utc::now())? {
                None => Ok(story),
                Some(next) => {
                    q::insert_story(tx, account, &next)?;
                    Ok(next)
                }
            }
        })
    }

    /// Re-images one section and stores the result as a new version. No
    /// transaction is held while the providers run.
    pub async fn regenerate_image(&self, account: &str, id: &str, section: &str) -> ServiceResult<Regeneration> {
        let story = self.story(account, id, None)?;
        let (out, _log) = self.pipeline.regenerate_image(&story, &SectionId::new(section)).await?;
        let mut next = out.story;
        next.version = story.version + 1;
        self.db.tx(|tx| q::insert_story(tx, account, &next))?;
        Ok(Regeneration { story: next, image: out.image, reused_cache: out.reused_cache })
    }

    // Reading sessions

    pub fn start_session(&self, account: &str, input: StartSession) -> ServiceResult<ReadingSession> {
        let at = input.started_at.unwrap_or_else(Utc::now);
        self.db.tx(|tx| {
            let story = owned(q::story(tx, &input.story_id, input.version)?, account, &format!("story {}", input.story_id))?;
            let session = ReadingSession::start(new_id("session"), &story, input.device, at);
            q::insert_session(tx, account, &session)?;
            Ok(session)
        })
    }

    pub fn session(&self, account: &str, id: &str) -> ServiceResult<ReadingSession> {
        owned(self.db.tx(|tx| q::session(tx, id))?, account, &format!("session {id}"))
    }

    /// Loads a session and its story version, applies `f`, and saves the
    /// session when `f` succeeds or the session expired. Runs inside one
    /// transaction, so events on a session are applied one at a time.
    fn with_session<T>(
        &self,
        account: &str,
        id: &str,
        f: impl FnOnce(&mut ReadingSession, &Story) -> Result<T, SessionError>,
    ) -> ServiceResult<(T, Vec<ReadingEvent>)> {
        let out = self.db.tx(|tx| {
            let mut session = owned(q::session(tx, id)?, account, &format!("session {id}"))?;
            let (_, story) = q::story(tx, &session.story_id, Some(session.story_version))?
                .ok_or_else(|| ServiceError::not_found(format!("story {}", session.story_id)))?;
            let before = session.events.len();
            let result = f(&mut session, &story);
            if result.is_ok() || matches!(result, Err(SessionError::Expired)) {
                q::save_session(tx, &session)?;
            }
            Ok(result.map(|v| (v, session.events[before..].to_vec())))
        })?;
        let (value, added) = out?;
        for event in &added {
            let _ = self.updates.send(SessionUpdate {
                account: account.to_string(),
                session_id: id.to_string(),
                event: event.clone(),
            });
        }
        Ok((value, added))
    }

    pub fn record_event(&self, account: &str, id: &str, event: ReadingEvent) -> ServiceResult<ReadingSession> {
        let (session, _) = self.with_session(account, id, |s, story| {
            s.record_event(story, event)?;
            Ok(s.clone())
        })?;
        Ok(session)
    }

    pub fn complete_session(&self, account: &str, id: &str, at: Option<DateTime<Utc>>) -> ServiceResult<RewardOutcome> {
        let at = at.unwrap_or_else(Utc::now);
        let (outcome, _) = self.with_session(account, id, |s, story| s.complete(story, at))?;
        Ok(outcome)
    }

    // Stats and export

    pub fn stats(&self, account: &str, range: TimeRange) -> ServiceResult<EngagementStats> {
        let (stories, sessions) = self.db.tx(|tx| Ok((q::latest_stories(tx, account)?, q::sessions(tx, account)?)))?;
        Ok(engagement_stats(stories.iter().map(|s| s.created_at), &sessions, range))
    }

    fn account_export(tx: &rusqlite::Transaction<'_>, account: &str) -> ServiceResult<AccountExport> {
        let mut stories: Vec<StoryMeta> = q::latest_stories(tx, account)?.iter().map(StoryMeta::of).collect();
        stories.reverse();
        Ok(AccountExport { account_id: account.to_string(), stories, sessions: q::sessions(tx, account)? })
    }

    pub fn export(&self, account: &str) -> ServiceResult<EventExport> {
        self.db.tx(|tx| {
            q::ensure_account(tx, account)?;
            Ok(EventExport { format_version: EXPORT_FORMAT_VERSION, accounts: vec![Self::account_export(tx, account)?] })
        })
    }

    /// Every account; used by the operator export command.
    pub fn export_all(&self) -> ServiceResult<EventExport> {
        self.db.tx(|tx| {
            let accounts = q::accounts(tx)?
                .iter()
                .map(|a| Self::account_export(tx, a))
                .collect::<ServiceResult<Vec<_>>>()?;
            Ok(EventExport { format_version: EXPORT_FORMAT_VERSION, accounts })
        })
    }
}
