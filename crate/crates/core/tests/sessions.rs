mod common;

use chrono::{DateTime, Duration, TimeZone, Utc};
use common::walk::{walk, WalkTally};
use forge_core::fixtures;
use forge_core::session::{Device, ReadingEvent, ReadingSession, SessionError, SessionStatus};
use forge_core::stats::{engagement_stats, session_minutes, TimeRange};
use forge_core::SectionId;
use proptest::prelude::*;

#[test]
fn fifty_random_sequences_follow_the_rules() {
    let mut tally = WalkTally::default();
    for case in 0..50 {
        if let Err(e) = walk(case, &mut tally) {
            panic!("{e}");
        }
    }
    assert!(tally.completed >= 20, "{tally:?}");
    assert!(tally.desirable > 0 && tally.undesirable > 0, "{tally:?}");
    assert!(tally.rejected > 50, "{tally:?}");
}

#[test]
fn option_order_depends_only_on_the_session_id() {
    let story = fixtures::fire_truck_story();
    let orders: std::collections::BTreeSet<Vec<SectionId>> = (0..40)
        .map(|i| ReadingSession::start(format!("s-{i}"), &story, Device::Reader, fixtures::epoch()).presented_options)
        .collect();
    assert!(orders.len() > 1, "shuffle never changes the order");
    let a = ReadingSession::start("same", &story, Device::Reader, fixtures::epoch());
    let b = ReadingSession::start("same", &story, Device::Creator, fixtures::epoch() + Duration::days(3));
    assert_eq!(a.presented_options, b.presented_options);
    for o in &orders {
        let mut sorted = o.clone();
        sorted.sort();
        let mut expected = story.graph.options().to_vec();
        expected.sort();
        assert_eq!(sorted, expected);
    }
}

#[test]
fn idle_sessions_cannot_continue() {
    let story = fixtures::library_story();
    let start = fixtures::epoch();
    let mut s = ReadingSession::start("idle", &story, Device::Reader, start);
    let late = ReadingEvent::PageView { section_id: "intro".into(), t: start + Duration::minutes(61) };
    assert!(matches!(s.record_event(&story, late), Err(SessionError::Expired)));
    assert_eq!(s.status, SessionStatus::Expired);
}

fn short_session(id: &str, start: DateTime<Utc>, minutes: i64, device: Device) -> ReadingSession {
    let story = fixtures::library_story();
    let mut s = ReadingSession::start(id, &story, device, start);
    s.record_event(&story, ReadingEvent::PageView { section_id: "intro".into(), t: start + Duration::minutes(minutes) })
        .unwrap();
    s
}

proptest! {
    #[test]
    fn disjoint_ranges_are_additive(
        starts in prop::collection::vec((0i64..14 * 24 * 60, 1i64..50, any::<bool>()), 0..30),
        created in prop::collection::vec(0i64..14 * 24 * 60, 0..30),
        cut in 0i64..14 * 24 * 60,
    ) {
        let base = Utc.with_ymd_and_hms(2025, 3, 1, 0, 0, 0).unwrap();
        let sessions: Vec<_> = starts
            .iter()
            .enumerate()
            .map(|(i, (m, len, creator))| {
                let device = if *creator { Device::Creator } else { Device::Reader };
                short_session(&format!("s{i}"), base + Duration::minutes(*m), *len, device)
            })
            .collect();
        let created: Vec<_> = created.iter().map(|m| base + Duration::minutes(*m)).collect();
        let mid = base + Duration::minutes(cut);
        let whole = engagement_stats(created.clone(), &sessions, TimeRange::all());
        let parts = engagement_stats(created.clone(), &sessions, TimeRange { from: None, to: Some(mid) })
            + engagement_stats(created.clone(), &sessions, TimeRange { from: Some(mid), to: None });
        prop_assert_eq!(&whole.stories_created_per_day, &parts.stories_created_per_day);
        prop_assert_eq!(&whole.sessions_completed_per_day, &parts.sessions_completed_per_day);
        for h in 0..24 {
            prop_assert!((whole.reading_minutes_by_hour[h] - parts.reading_minutes_by_hour[h]).abs() < 1e-9);
        }
        let total: f64 = sessions.iter().map(session_minutes).sum();
        prop_assert!((whole.total_reading_minutes() - total).abs() < 1e-9);
        prop_assert_eq!(whole.total_stories(), created.len() as u64);
    }

    #[test]
    fn sessions_at_half_past_nine_fill_one_bucket(days in prop::collection::vec(0i64..30, 1..20), len in 1i64..59) {
        let base = Utc.with_ymd_and_hms(2025, 3, 1, 21, 30, 0).unwrap();
        let sessions: Vec<_> = days
            .iter()
            .enumerate()
            .map(|(i, d)| short_session(&format!("s{i}"), base + Duration::days(*d), len, Device::Reader))
            .collect();
        let stats = engagement_stats([], &sessions, TimeRange::all());
        for (h, m) in stats.reading_minutes_by_hour.iter().enumerate() {
            if h == 21 {
                prop_assert_eq!(*m, (len * days.len() as i64) as f64);
            } else {
                prop_assert_eq!(*m, 0.0);
            }
        }
    }
}
