//! Random reader walks checked against a small model of the navigation rules.

use chrono::{DateTime, Duration, Utc};
use forge_core::fixtures;
use forge_core::session::{replay, Device, ReadingEvent, ReadingSession, SessionError, SessionStatus};
use forge_core::story::enumerate_paths;
use forge_core::{PathKind, RewardSticker, SectionId, SectionKind, Story, TopicType};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// What the reader is allowed to do next, written from the rules alone.
struct Model {
    trail: Vec<SectionId>,
    last: DateTime<Utc>,
}

impl Model {
    fn accepts(&self, story: &Story, presented: &[SectionId], e: &ReadingEvent) -> bool {
        if e.t() < self.last {
            return false;
        }
        let current = story.graph.section(self.trail.last().unwrap()).unwrap();
        match e {
            ReadingEvent::PageView { section_id, .. } => {
                self.trail.contains(section_id)
                    || (current.kind != SectionKind::Challenge && current.next.contains(section_id))
            }
            ReadingEvent::Choice { option_index, section_id, .. } => {
                current.kind == SectionKind::Challenge && presented.get(*option_index) == Some(section_id)
            }
            _ => false,
        }
    }

    fn apply(&mut self, e: &ReadingEvent) {
        self.last = e.t();
        let target = match e {
            ReadingEvent::PageView { section_id, .. } | ReadingEvent::Choice { section_id, .. } => section_id.clone(),
            _ => unreachable!(),
        };
        match self.trail.iter().position(|s| *s == target) {
            Some(p) => self.trail.truncate(p + 1),
            None => self.trail.push(target),
        }
    }
}

fn random_event(rng: &mut ChaCha8Rng, story: &Story, session: &ReadingSession, t: DateTime<Utc>) -> ReadingEvent {
    let ids: Vec<SectionId> = story.graph.sections.iter().map(|s| s.id.clone()).collect();
    let current = story.graph.section(session.current()).unwrap();
    let n_opts = session.presented_options.len();
    match rng.random_range(0..100) {
        // Mostly move forward so sequences reach the ending.
        0..=54 => {
            if current.kind == SectionKind::Challenge {
                let i = rng.random_range(0..n_opts);
                ReadingEvent::Choice { option_index: i, section_id: session.presented_options[i].clone(), t }
            } else if let Some(next) = current.next.first() {
                ReadingEvent::PageView { section_id: next.clone(), t }
            } else {
                ReadingEvent::PageView { section_id: ids[rng.random_range(0..ids.len())].clone(), t }
            }
        }
        55..=64 => {
            let back = &session.trail[rng.random_range(0..session.trail.len())];
            ReadingEvent::PageView { section_id: back.clone(), t }
        }
        65..=79 => ReadingEvent::PageView { section_id: ids[rng.random_range(0..ids.len())].clone(), t },
        80..=87 => {
            let i = rng.random_range(0..n_opts + 2);
            let s = ids[rng.random_range(0..ids.len())].clone();
            ReadingEvent::Choice { option_index: i, section_id: s, t }
        }
        88..=91 => ReadingEvent::Completed { path_kind: PathKind::Desirable, t },
        92..=94 => ReadingEvent::RewardIssued { sticker_id: "star".into(), t },
        _ => ReadingEvent::PageView { section_id: session.current().clone(), t: t - Duration::minutes(30) },
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct WalkTally {
    pub completed: usize,
    pub desirable: usize,
    pub undesirable: usize,
    pub rejected: usize,
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok { Ok(()) } else { Err(msg()) }
}

/// Walks case `case` and checks every step against the model.
pub fn walk(case: u64, tally: &mut WalkTally) -> Result<(), String> {
    let stories: Vec<Story> = TopicType::ALL.iter().map(|t| fixtures::story_for(*t)).collect();
    let story = &stories[(case % 3) as usize];
    let mut rng = ChaCha8Rng::seed_from_u64(case);
    let start = fixtures::epoch() + Duration::hours(case as i64);
    let mut session = ReadingSession::start(format!("session-{case}"), story, Device::Reader, start);
    let mut model = Model { trail: vec![story.graph.root.clone()], last: start };
    let mut t = start;
    for _ in 0..40 {
        t += Duration::minutes(1);
        let e = random_event(&mut rng, story, &session, t);
        let expected = model.accepts(story, &session.presented_options, &e);
        let before = session.clone();
        let got = session.record_event(story, e.clone());
        check(got.is_ok() == expected, || format!("case {case}: {e:?} at {:?}: {got:?}", before.trail))?;
        if expected {
            model.apply(&e);
        } else {
            tally.rejected += 1;
            check(matches!(got, Err(SessionError::InvalidTransition(_))), || format!("case {case}: {got:?}"))?;
            check(session == before, || format!("case {case}: rejected {e:?} changed the session"))?;
        }
        check(session.trail == model.trail, || format!("case {case}: trail {:?} vs {:?}", session.trail, model.trail))?;
        if *session.current() == story.graph.ending && rng.random_bool(0.5) {
            break;
        }
    }

    t += Duration::minutes(1);
    let at_ending = *session.current() == story.graph.ending;
    let result = session.complete(story, t);
    if !at_ending {
        check(matches!(result, Err(SessionError::InvalidTransition(_))), || format!("case {case}: {result:?}"))?;
        return check(session.status == SessionStatus::Active, || format!("case {case}: status {:?}", session.status));
    }
    let outcome = result.map_err(|e| format!("case {case}: {e}"))?;
    tally.completed += 1;
    let paths = enumerate_paths(story).map_err(|e| e.to_string())?;
    let matching = paths.iter().filter(|p| **p == outcome.path).count();
    check(matching == 1, || format!("case {case}: path matches {matching} enumerated paths"))?;
    if outcome.path.contains(&story.graph.desirable_path[0]) {
        tally.desirable += 1;
        check(outcome.path_kind == PathKind::Desirable, || format!("case {case}: {:?}", outcome.path_kind))?;
        check(outcome.sticker == story.reward_sticker, || format!("case {case}: sticker {:?}", outcome.sticker))?;
    } else {
        tally.undesirable += 1;
        check(outcome.path_kind == PathKind::Undesirable, || format!("case {case}: {:?}", outcome.path_kind))?;
        let star = RewardSticker::star().to_ref();
        check(outcome.sticker == star, || format!("case {case}: sticker {:?}", outcome.sticker))?;
    }
    check(replay(story, &session).as_ref() == Some(&outcome.path), || format!("case {case}: replay differs"))?;
    check(session.completed_path_kind() == Some(outcome.path_kind), || format!("case {case}: completed kind"))?;

    let late = ReadingEvent::PageView { section_id: story.graph.root.clone(), t: t + Duration::minutes(1) };
    let after = session.record_event(story, late);
    check(matches!(after, Err(SessionError::Closed(SessionStatus::Completed))), || format!("case {case}: {after:?}"))?;
    check(session.complete(story, t + Duration::minutes(2)).is_err(), || format!("case {case}: completed twice"))
}
