//! SQLite persistence. Stories are stored as document blobs with indexed
//! metadata; every story version is its own row and is never rewritten.

use std::path::Path;
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Utc};
use forge_core::pipeline::{GenerationJob, JobStatus, PipelineStore, StoreError};
use forge_core::profile::{ChildProfile, RewardSticker};
use forge_core::session::ReadingSession;
use forge_core::{ImageRef, Story};
use rusqlite::{params, Connection, OptionalExtension, Transaction};

use crate::error::{ServiceError, ServiceResult};

const SCHEMA: &str = "
CREATE TABLE IF NOT EXISTS accounts (
    id TEXT PRIMARY KEY,
    profile TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS stickers (
    account_id TEXT NOT NULL,
    id TEXT NOT NULL,
    doc TEXT NOT NULL,
    PRIMARY KEY (account_id, id)
);
CREATE TABLE IF NOT EXISTS photos (
    account_id TEXT NOT NULL,
    image TEXT NOT NULL,
    bytes BLOB NOT NULL,
    PRIMARY KEY (account_id, image)
);
CREATE TABLE IF NOT EXISTS jobs (
    id TEXT PRIMARY KEY,
    account_id TEXT NOT NULL,
    state TEXT NOT NULL,
    doc TEXT NOT NULL,
    created_at TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS stories (
    id TEXT NOT NULL,
    version INTEGER NOT NULL,
    account_id TEXT NOT NULL,
    title TEXT NOT NULL,
    topic TEXT NOT NULL,
    behavior TEXT NOT NULL,
    created_at TEXT NOT NULL,
    doc TEXT NOT NULL,
    PRIMARY KEY (id, version)
);
CREATE INDEX IF NOT EXISTS stories_by_account ON stories (account_id, created_at);
CREATE TABLE IF NOT EXISTS sessions (
    id TEXT PRIMARY KEY,
    account_id TEXT NOT NULL,
    story_id TEXT NOT NULL,
    started_at TEXT NOT NULL,
    doc TEXT NOT NULL
);
CREATE INDEX IF NOT EXISTS sessions_by_account ON sessions (account_id, started_at);
";

pub struct Db {
    conn: Mutex<Connection>,
}

fn state_of(status: &JobStatus) -> &'static str {
    match status {
        JobStatus::Pending => "pending",
        JobStatus::Running => "running",
        JobStatus::Failed { .. } => "failed",
        JobStatus::Complete { .. } => "complete",
    }
}

fn ts(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(chrono::SecondsFormat::Micros, true)
}

impl Db {
    pub fn open(path: &Path) -> ServiceResult<Self> {
        Self::init(Connection::open(path)?)
    }

    pub fn open_in_memory() -> ServiceResult<Self> {
        Self::init(Connection::open_in_memory()?)
    }

    fn init(conn: Connection) -> ServiceResult<Self> {
        conn.execute_batch("PRAGMA journal_mode = WAL; PRAGMA foreign_keys = ON;")?;
        conn.execute_batch(SCHEMA)?;
        Ok(Self { conn: Mutex::new(conn) })
    }

    /// Runs `f` in one transaction; it commits only if `f` succeeds.
    pub fn tx<T>(&self, f: impl FnOnce(&Transaction<'_>) -> ServiceResult<T>) -> ServiceResult<T> {
        let mut conn = self.conn.lock().map_err(|_| ServiceError::internal("storage lock poisoned"))?;
        let tx = conn.transaction()?;
        let out = f(&tx)?;
        tx.commit()?;
        Ok(out)
    }
}

/// Queries usable inside a transaction.
pub mod q {
    use super::*;

    /// Loads the account's profile, creating the account with an empty
    /// profile and its star sticker on first use.
    pub fn ensure_account(tx: &Transaction<'_>, account: &str) -> ServiceResult<ChildProfile> {
        if let Some(p) = tx
            .query_row("SELECT profile FROM accounts WHERE id = ?1", [account], |r| r.get::<_, String>(0))
            .optional()?
        {
            return Ok(serde_json::from_str(&p)?);
        }
        let profile = ChildProfile::new(account, "");
        tx.execute("INSERT INTO accounts (id, profile) VALUES (?1, ?2)", params![account, serde_json::to_string(&profile)?])?;
        upsert_sticker(tx, account, &RewardSticker::star())?;
        Ok(profile)
    }

    pub fn save_profile(tx: &Transaction<'_>, account: &str, profile: &ChildProfile) -> ServiceResult<()> {
        tx.execute("UPDATE accounts SET profile = ?2 WHERE id = ?1", params![account, serde_json::to_string(profile)?])?;
        Ok(())
    }

    pub fn accounts(tx: &Transaction<'_>) -> ServiceResult<Vec<String>> {
        let mut st = tx.prepare("SELECT id FROM accounts ORDER BY id")?;
        let rows = st.query_map([], |r| r.get(0))?.collect::<Result<Vec<String>, _>>()?;
        Ok(rows)
    }

    pub fn upsert_sticker(tx: &Transaction<'_>, account: &str, sticker: &RewardSticker) -> ServiceResult<()> {
        tx.execute(
            "INSERT INTO stickers (account_id, id, doc) VALUES (?1, ?2, ?3)
             ON CONFLICT (account_id, id) DO UPDATE SET doc = excluded.doc",
            params![account, sticker.id, serde_json::to_string(sticker)?],
        )?;
        Ok(())
    }

    pub fn stickers(tx: &Transaction<'_>, account: &str) -> ServiceResult<Vec<RewardSticker>> {
        let mut st = tx.prepare("SELECT doc FROM stickers WHERE account_id = ?1 ORDER BY id")?;
        let docs = st.query_map([account], |r| r.get::<_, String>(0))?.collect::<Result<Vec<_>, _>>()?;
        docs.iter().map(|d| serde_json::from_str(d).map_err(ServiceError::from)).collect()
    }

    pub fn put_photo(tx: &Transaction<'_>, account: &str, bytes: &[u8]) -> ServiceResult<ImageRef> {
        let image = ImageRef::for_bytes(bytes);
        tx.execute(
            "INSERT OR IGNORE INTO photos (account_id, image, bytes) VALUES (?1, ?2, ?3)",
            params![account, image.as_str(), bytes],
        )?;
        Ok(image)
    }

    pub fn photo(tx: &Transaction<'_>, account: &str, image: &ImageRef) -> ServiceResult<Option<Vec<u8>>> {
        Ok(tx
            .query_row(
                "SELECT bytes FROM photos WHERE account_id = ?1 AND image = ?2",
                params![account, image.as_str()],
                |r| r.get(0),
            )
            .optional()?)
    }

    pub fn insert_job(tx: &Transaction<'_>, account: &str, job: &GenerationJob, at: DateTime<Utc>) -> ServiceResult<()> {
        tx.execute(
            "INSERT INTO jobs (id, account_id, state, doc, created_at) VALUES (?1, ?2, ?3, ?4, ?5)",
            params![job.id, account, state_of(&job.status), serde_json::to_string(job)?, ts(at)],
        )?;
        Ok(())
    }

    pub fn save_job(tx: &Transaction<'_>, job: &GenerationJob) -> ServiceResult<()> {
        let n = tx.execute(
            "UPDATE jobs SET state = ?2, doc = ?3 WHERE id = ?1",
            params![job.id, state_of(&job.status), serde_json::to_string(job)?],
        )?;
        if n == 0 {
            return Err(ServiceError::not_found(format!("job {}", job.id)));
        }
        Ok(())
    }

    pub fn job(tx: &Transaction<'_>, id: &str) -> ServiceResult<Option<(String, GenerationJob)>> {
        let row = tx
            .query_row("SELECT account_id, doc FROM jobs WHERE id = ?1", [id], |r| {
                Ok((r.get::<_, String>(0)?, r.get::<_, String>(1)?))
            })
            .optional()?;
        row.map(|(a, d)| Ok((a, serde_json::from_str(&d)?))).transpose()
    }

    /// Pending or running jobs, oldest first, with their accounts.
    pub fn unfinished_jobs(tx: &Transaction<'_>, account: Option<&str>) -> ServiceResult<Vec<(String, GenerationJob)>> {
        let mut st = tx.prepare(
            "SELECT account_id, doc FROM jobs WHERE state IN ('pending', 'running')
             AND (?1 IS NULL OR account_id = ?1) ORDER BY created_at, id",
        )?;
        let rows = st
            .query_map([account], |r| Ok((r.get::<_, String>(0)?, r.get::<_, String>(1)?)))?
            .collect::<Result<Vec<_>, _>>()?;
        rows.into_iter().map(|(a, d)| Ok((a, serde_json::from_str(&d)?))).collect()
    }

    /// Inserts a story version. Versions are append-only: an existing
    /// (id, version) is left untouched and reported as a conflict unless
    /// the stored document is identical.
    pub fn insert_story(tx: &Transaction<'_>, account: &str, story: &Story) -> ServiceResult<()> {
        let doc = story.to_document_string();
        let existing: Option<String> = tx
            .query_row(
                "SELECT doc FROM stories WHERE id = ?1 AND version = ?2",
                params![story.id, story.version],
                |r| r.get(0),
            )
            .optional()?;
        match existing {
            Some(d) if d == doc => Ok(()),
            Some(_) => Err(ServiceError::conflict(format!("story {} version {} already exists", story.id, story.version))),
            None => {
                tx.execute(
                    "INSERT INTO stories (id, version, account_id, title, topic, behavior, created_at, doc)
                     VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8)",
                    params![
                        story.id,
                        story.version,
                        account,
                        story.title,
                        story.topic_type.as_str(),
                        story.target_behavior.text,
                        ts(story.created_at),
                        doc
                    ],
                )?;
                Ok(())
            }
        }
    }

    /// A story version, or the latest when `version` is `None`.
    pub fn story(tx: &Transaction<'_>, id: &str, version: Option<u32>) -> ServiceResult<Option<(String, Story)>> {
        let row = tx
            .query_row(
                "SELECT account_id, doc FROM stories WHERE id = ?1 AND (?2 IS NULL OR version = ?2)
                 ORDER BY version DESC LIMIT 1",
                params![id, version],
                |r| Ok((r.get::<_, String>(0)?, r.get::<_, String>(1)?)),
            )
            .optional()?;
        row.map(|(a, d)| {
            let story = Story::from_document_str(&d).map_err(|e| ServiceError::new("storage", e.to_string()))?;
            Ok((a, story))
        })
        .transpose()
    }

    /// Latest version of each story, newest first.
    pub fn latest_stories(tx: &Transaction<'_>, account: &str) -> ServiceResult<Vec<Story>> {
        let mut st = tx.prepare(
            "SELECT s.doc FROM stories s
             JOIN (SELECT id, MAX(version) AS v FROM stories WHERE account_id = ?1 GROUP BY id) m
               ON s.id = m.id AND s.version = m.v
             ORDER BY s.created_at DESC, s.id DESC",
        )?;
        let docs = st.query_map([account], |r| r.get::<_, String>(0))?.collect::<Result<Vec<_>, _>>()?;
        docs.iter()
            .map(|d| Story::from_document_str(d).map_err(|e| ServiceError::new("storage", e.to_string())))
            .collect()
    }

    pub fn insert_session(tx: &Transaction<'_>, account: &str, s: &ReadingSession) -> ServiceResult<()> {
        tx.execute(
            "INSERT INTO sessions (id, account_id, story_id, started_at, doc) VALUES (?1, ?2, ?3, ?4, ?5)",
            params![s.id, account, s.story_id, ts(s.started_at), serde_json::to_string(s)?],
        )?;
        Ok(())
    }

    pub fn save_session(tx: &Transaction<'_>, s: &ReadingSession) -> ServiceResult<()> {
        tx.execute("UPDATE sessions SET doc = ?2 WHERE id = ?1", params![s.id, serde_json::to_string(s)?])?;
        Ok(())
    }

    pub fn session(tx: &Transaction<'_>, id: &str) -> ServiceResult<Option<(String, ReadingSession)>> {
        let row = tx
            .query_row("SELECT account_id, doc FROM sessions WHERE id = ?1", [id], |r| {
                Ok((r.get::<_, String>(0)?, r.get::<_, String>(1)?))
            })
            .optional()?;
        row.map(|(a, d)| Ok((a, serde_json::from_str(&d)?))).transpose()
    }

    pub fn sessions(tx: &Transaction<'_>, account: &str) -> ServiceResult<Vec<ReadingSession>> {
        let mut st = tx.prepare("SELECT doc FROM sessions WHERE account_id = ?1 ORDER BY started_at, id")?;
        let docs = st.query_map([account], |r| r.get::<_, String>(0))?.collect::<Result<Vec<_>, _>>()?;
        docs.iter().map(|d| serde_json::from_str(d).map_err(ServiceError::from)).collect()
    }
}

/// The pipeline's view of the database, scoped to one account.
pub struct AccountStore {
    pub db: Arc<Db>,
    pub account: String,
}

fn backend(e: ServiceError) -> StoreError {
    StoreError::Backend(e.to_string())
}

impl PipelineStore for AccountStore {
    fn load_job(&self, id: &str) -> Result<Option<GenerationJob>, StoreError> {
        self.db.tx(|tx| q::job(tx, id)).map(|j| j.map(|(_, job)| job)).map_err(backend)
    }

    fn save_job(&self, job: &GenerationJob) -> Result<(), StoreError> {
        self.db.tx(|tx| q::save_job(tx, job)).map_err(backend)
    }

    fn save_story(&self, story: &Story) -> Result<(), StoreError> {
        self.db.tx(|tx| q::insert_story(tx, &self.account, story)).map_err(backend)
    }

    fn load_story(&self, id: &str) -> Result<Option<Story>, StoreError> {
        self.db.tx(|tx| q::story(tx, id, None)).map(|s| s.map(|(_, st)| st)).map_err(backend)
    }
}
