//! Shared reading sessions: navigation through a story, shuffled option
//! presentation, and reward resolution on completion.

use chrono::{DateTime, Duration, Utc};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::sha256_hex;
use crate::profile::{RewardSticker, StickerRef};
use crate::story::{enumerate_paths, path_kind, PathKind, SectionId, SectionKind, Story};

/// Sessions with no activity for this long expire without a reward.
pub const IDLE_LIMIT_MINUTES: i64 = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Device {
    Reader,
    Creator,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReadingEvent {
    PageView {
        section_id: SectionId,
        t: DateTime<Utc>,
    },
    /// `option_index` is the position in the session's presented order.
    Choice {
        option_index: usize,
        section_id: SectionId,
        t: DateTime<Utc>,
    },
    Completed {
        path_kind: PathKind,
        t: DateTime<Utc>,
    },
    RewardIssued {
        sticker_id: String,
        t: DateTime<Utc>,
    },
}

impl ReadingEvent {
    pub fn t(&self) -> DateTime<Utc> {
        match self {
            ReadingEvent::PageView { t, .. }
            | ReadingEvent::Choice { t, .. }
            | ReadingEvent::Completed { t, .. }
            | ReadingEvent::RewardIssued { t, .. } => *t,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Active,
    Completed,
    Expired,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SessionError {
    #[error("invalid-transition: {0}")]
    InvalidTransition(String),
    #[error("session is {0:?}")]
    Closed(SessionStatus),
    #[error("session expired after {IDLE_LIMIT_MINUTES} idle minutes")]
    Expired,
    #[error("session belongs to story {expected}, not {found}")]
    WrongStory { expected: String, found: String },
}

impl SessionError {
    pub fn code(&self) -> &'static str {
        match self {
            SessionError::InvalidTransition(_) => "invalid-transition",
            SessionError::Closed(_) => "session-closed",
            SessionError::Expired => "session-expired",
            SessionError::WrongStory { .. } => "bad-request",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewardOutcome {
    pub path_kind: PathKind,
    pub sticker: StickerRef,
    pub path: Vec<SectionId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadingSession {
    pub id: String,
    pub story_id: String,
    pub story_version: u32,
    pub started_at: DateTime<Utc>,
    pub device: Device,
    pub seed: u64,
    /// Challenge options in the order shown to the child.
    pub presented_options: Vec<SectionId>,
    pub events: Vec<ReadingEvent>,
    pub status: SessionStatus,
    /// Sections from the root to the current page.
    pub trail: Vec<SectionId>,
}

/// Seed derived from a session id, so a session's shuffle is reproducible.
pub fn seed_for(session_id: &str) -> u64 {
    u64::from_str_radix(&sha256_hex(session_id.as_bytes())[..16], 16).expect("hex digest")
}

pub fn shuffled_options(story: &Story, seed: u64) -> Vec<SectionId> {
    let mut options = story.graph.options().to_vec();
    options.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    options
}

impl ReadingSession {
    /// Opens a session on the story's Cover.
    pub fn start(id: impl Into<String>, story: &Story, device: Device, at: DateTime<Utc>) -> Self {
        let id = id.into();
        let seed = seed_for(&id);
        let root = story.graph.root.clone();
        Self {
            presented_options: shuffled_options(story, seed),
            id,
            story_id: story.id.clone(),
            story_version: story.version,
            started_at: at,
            device,
            seed,
            events: vec![ReadingEvent::PageView { section_id: root.clone(), t: at }],
            status: SessionStatus::Active,
            trail: vec![root],
        }
    }

    pub fn current(&self) -> &SectionId {
        self.trail.last().expect("trail starts at the root")
    }

    pub fn last_activity(&self) -> DateTime<Utc> {
        self.events.last().map(ReadingEvent::t).unwrap_or(self.started_at)
    }

    /// Reading time: last event minus start.
    pub fn duration(&self) -> Duration {
        self.last_activity() - self.started_at
    }

    pub fn completed_path_kind(&self) -> Option<PathKind> {
        self.events.iter().find_map(|e| match e {
            ReadingEvent::Completed { path_kind, .. } => Some(*path_kind),
            _ => None,
        })
    }

    /// Marks the session expired if it has been idle too long at `now`.
    pub fn expire_if_idle(&mut self, now: DateTime<Utc>) -> bool {
        if self.status == SessionStatus::Active && now - self.last_activity() > Duration::minutes(IDLE_LIMIT_MINUTES) {
            self.status = SessionStatus::Expired;
            return true;
        }
        false
    }

    fn check_open(&mut self, story: &Story, t: DateTime<Utc>) -> Result<(), SessionError> {
        if story.id != self.story_id {
            return Err(SessionError::WrongStory { expected: self.story_id.clone(), found: story.id.clone() });
        }
        if self.expire_if_idle(t) {
            return Err(SessionError::Expired);
        }
        match self.status {
            SessionStatus::Active => {}
            SessionStatus::Expired => return Err(SessionError::Expired),
            other => return Err(SessionError::Closed(other)),
        }
        if t < self.last_activity() {
            return Err(SessionError::InvalidTransition("event is older than the previous event".into()));
        }
        Ok(())
    }

    /// Applies a reader event. Rejected events leave the session unchanged.
    ///
    /// A page view moves to a successor of the current page, or back to a
    /// page already on the trail. Leaving the Challenge requires a choice.
    pub fn record_event(&mut self, story: &Story, event: ReadingEvent) -> Result<(), SessionError> {
        self.check_open(story, event.t())?;
        let invalid = |m: String| Err(SessionError::InvalidTransition(m));
        let current = self.current().clone();
        let section = story.graph.section(&current).expect("trail holds story sections");
        match &event {
            ReadingEvent::PageView { section_id, .. } => {
                if let Some(pos) = self.trail.iter().position(|s| s == section_id) {
                    self.trail.truncate(pos + 1);
                } else if section.kind == SectionKind::Challenge {
                    return invalid(format!("{section_id} must be reached by choosing an option"));
                } else if section.next.contains(section_id) {
                    self.trail.push(section_id.clone());
                } else {
                    return invalid(format!("{section_id} does not follow {current}"));
                }
            }
            ReadingEvent::Choice { option_index, section_id, .. } => {
                if section.kind != SectionKind::Challenge {
                    return invalid(format!("no choice to make on {current}"));
                }
                match self.presented_options.get(*option_index) {
                    Some(opt) if opt == section_id => self.trail.push(section_id.clone()),
                    Some(opt) => return invalid(format!("option {option_index} is {opt}, not {section_id}")),
                    None => {
                        return invalid(format!(
                            "option {option_index} does not exist; the challenge has {}",
                            self.presented_options.len()
                        ))
                    }
                }
            }
            ReadingEvent::Completed { .. } | ReadingEvent::RewardIssued { .. } => {
                return invalid("completion and rewards are issued by the server".into());
            }
        }
        self.events.push(event);
        Ok(())
    }

    /// Closes the session on the Ending and resolves the reward: the story's
    /// sticker for the desirable path, the star otherwise.
    pub fn complete(&mut self, story: &Story, at: DateTime<Utc>) -> Result<RewardOutcome, SessionError> {
        self.check_open(story, at)?;
        let paths = enumerate_paths(story).map_err(|e| SessionError::InvalidTransition(e.to_string()))?;
        if !paths.contains(&self.trail) {
            return Err(SessionError::InvalidTransition(format!(
                "reading stopped at {} before the ending",
                self.current()
            )));
        }
        let kind = path_kind(&story.graph, &self.trail)
            .ok_or_else(|| SessionError::InvalidTransition("path matches no branch".into()))?;
        let sticker = match kind {
            PathKind::Desirable => story.reward_sticker.clone(),
            PathKind::Undesirable => RewardSticker::star().to_ref(),
        };
        self.events.push(ReadingEvent::Completed { path_kind: kind, t: at });
        self.events.push(ReadingEvent::RewardIssued { sticker_id: sticker.id.clone(), t: at });
        self.status = SessionStatus::Completed;
        Ok(RewardOutcome { path_kind: kind, sticker, path: self.trail.clone() })
    }
}

/// Replays a session's reader events through a fresh session and returns
/// the trail at completion, or `None` if the log never completed or does
/// not replay.
pub fn replay(story: &Story, session: &ReadingSession) -> Option<Vec<SectionId>> {
    let mut fresh = ReadingSession::start(session.id.clone(), story, session.device, session.started_at);
    for e in session.events.iter().skip(1) {
        match e {
            ReadingEvent::Completed { t, .. } => return fresh.complete(story, *t).ok().map(|o| o.path),
            ReadingEvent::RewardIssued { .. } => {}
            other => fresh.record_event(story, other.clone()).ok()?,
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn at(min: i64) -> DateTime<Utc> {
        fixtures::epoch() + Duration::minutes(min)
    }

    fn view(id: &str, min: i64) -> ReadingEvent {
        ReadingEvent::PageView { section_id: id.into(), t: at(min) }
    }

    fn choose(s: &ReadingSession, id: &str, min: i64) -> ReadingEvent {
        let idx = s.presented_options.iter().position(|o| o.as_str() == id).unwrap();
        ReadingEvent::Choice { option_index: idx, section_id: id.into(), t: at(min) }
    }

    fn read_to_challenge(story: &Story, s: &mut ReadingSession) {
        s.record_event(story, view("intro", 1)).unwrap();
        s.record_event(story, view("challenge", 2)).unwrap();
    }

    #[test]
    fn desirable_completion_gives_story_sticker() {
        let story = fixtures::fire_truck_story();
        let mut s = ReadingSession::start("s1", &story, Device::Reader, at(0));
        read_to_challenge(&story, &mut s);
        let c = choose(&s, "d-decision", 3);
        s.record_event(&story, c).unwrap();
        s.record_event(&story, view("d-consequence", 4)).unwrap();
        s.record_event(&story, view("ending", 5)).unwrap();
        let out = s.complete(&story, at(6)).unwrap();
        assert_eq!(out.path_kind, PathKind::Desirable);
        assert_eq!(out.sticker, story.reward_sticker);
        assert_eq!(replay(&story, &s), Some(out.path));
    }

    #[test]
    fn undesirable_completion_gives_star() {
        let story = fixtures::library_story();
        let mut s = ReadingSession::start("s2", &story, Device::Reader, at(0));
        read_to_challenge(&story, &mut s);
        let c = choose(&s, "u1-decision", 3);
        s.record_event(&story, c).unwrap();
        for (i, id) in ["u1-consequence", "u1-repair", "u1-response", "u1-repaired", "ending"].iter().enumerate() {
            s.record_event(&story, view(id, 4 + i as i64)).unwrap();
        }
        let out = s.complete(&story, at(10)).unwrap();
        assert_eq!(out.sticker.id, crate::profile::STAR_STICKER_ID);
    }

    #[test]
    fn rejects_bad_choices_and_skips() {
        let story = fixtures::fire_truck_story();
        let mut s = ReadingSession::start("s3", &story, Device::Reader, at(0));
        assert_eq!(s.record_event(&story, view("ending", 1)).unwrap_err().code(), "invalid-transition");
        read_to_challenge(&story, &mut s);
        let bad = ReadingEvent::Choice { option_index: 5, section_id: "d-decision".into(), t: at(3) };
        assert_eq!(s.record_event(&story, bad).unwrap_err().code(), "invalid-transition");
        assert!(s.record_event(&story, view("d-decision", 3)).is_err());
        assert!(s.complete(&story, at(4)).is_err());
        assert_eq!(s.status, SessionStatus::Active);
    }

    #[test]
    fn back_navigation_truncates_trail() {
        let story = fixtures::fire_truck_story();
        let mut s = ReadingSession::start("s4", &story, Device::Reader, at(0));
        read_to_challenge(&story, &mut s);
        let c = choose(&s, "u1-decision", 3);
        s.record_event(&story, c).unwrap();
        s.record_event(&story, view("challenge", 4)).unwrap();
        assert_eq!(s.current().as_str(), "challenge");
        let c = choose(&s, "d-decision", 5);
        s.record_event(&story, c).unwrap();
        s.record_event(&story, view("d-consequence", 6)).unwrap();
        s.record_event(&story, view("ending", 7)).unwrap();
        assert_eq!(s.complete(&story, at(8)).unwrap().path_kind, PathKind::Desirable);
    }

    #[test]
    fn idle_sessions_expire() {
        let story = fixtures::fire_truck_story();
        let mut s = ReadingSession::start("s5", &story, Device::Reader, at(0));
        s.record_event(&story, view("intro", 1)).unwrap();
        assert_eq!(s.record_event(&story, view("challenge", 62)).unwrap_err(), SessionError::Expired);
        assert_eq!(s.status, SessionStatus::Expired);
    }

    #[test]
    fn shuffle_is_per_session_and_stable() {
        let story = fixtures::fire_truck_story();
        let a = ReadingSession::start("same", &story, Device::Reader, at(0));
        let b = ReadingSession::start("same", &story, Device::Reader, at(0));
        assert_eq!(a.presented_options, b.presented_options);
        let mut sorted = a.presented_options.clone();
        sorted.sort();
        let mut original = story.graph.options().to_vec();
        original.sort();
        assert_eq!(sorted, original);
        let orders: std::collections::HashSet<Vec<SectionId>> =
            (0..20).map(|i| shuffled_options(&story, seed_for(&format!("s{i}")))).collect();
        assert!(orders.len() > 1);
    }
}
