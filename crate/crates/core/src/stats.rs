//! Engagement aggregation over stories and reading sessions.
//!
//! All day and hour buckets are UTC. A session's reading time is attributed
//! to the hour it started in.

use std::collections::BTreeMap;
use std::ops::Add;

use chrono::{DateTime, NaiveDate, Timelike, Utc};
use serde::{Deserialize, Serialize};

use crate::session::{Device, ReadingSession, SessionStatus};

/// Half-open `[from, to)` interval. `None` bounds are unbounded.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeRange {
    pub from: Option<DateTime<Utc>>,
    pub to: Option<DateTime<Utc>>,
}

impl TimeRange {
    pub fn all() -> Self {
        Self::default()
    }

    pub fn between(from: DateTime<Utc>, to: DateTime<Utc>) -> Self {
        Self { from: Some(from), to: Some(to) }
    }

    pub fn contains(&self, t: DateTime<Utc>) -> bool {
        self.from.is_none_or(|f| t >= f) && self.to.is_none_or(|e| t < e)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DeviceUsage {
    pub sessions: u64,
    pub minutes: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngagementStats {
    pub stories_created_per_day: BTreeMap<NaiveDate, u64>,
    pub sessions_completed_per_day: BTreeMap<NaiveDate, u64>,
    /// Index is the UTC hour of day.
    pub reading_minutes_by_hour: [f64; 24],
    pub device_breakdown: BTreeMap<Device, DeviceUsage>,
}

impl Default for EngagementStats {
    fn default() -> Self {
        Self {
            stories_created_per_day: BTreeMap::new(),
            sessions_completed_per_day: BTreeMap::new(),
            reading_minutes_by_hour: [0.0; 24],
            device_breakdown: BTreeMap::new(),
        }
    }
}

impl EngagementStats {
    pub fn total_reading_minutes(&self) -> f64 {
        self.reading_minutes_by_hour.iter().sum()
    }

    pub fn total_stories(&self) -> u64 {
        self.stories_created_per_day.values().sum()
    }
}

fn merge_counts<K: Ord + Clone>(a: &mut BTreeMap<K, u64>, b: &BTreeMap<K, u64>) {
    for (k, v) in b {
        *a.entry(k.clone()).or_default() += v;
    }
}

impl Add for EngagementStats {
    type Output = EngagementStats;

    fn add(mut self, rhs: EngagementStats) -> EngagementStats {
        merge_counts(&mut self.stories_created_per_day, &rhs.stories_created_per_day);
        merge_counts(&mut self.sessions_completed_per_day, &rhs.sessions_completed_per_day);
        for (a, b) in self.reading_minutes_by_hour.iter_mut().zip(rhs.reading_minutes_by_hour) {
            *a += b;
        }
        for (k, v) in rhs.device_breakdown {
            let e = self.device_breakdown.entry(k).or_default();
            e.sessions += v.sessions;
            e.minutes += v.minutes;
        }
        self
    }
}

pub fn session_minutes(session: &ReadingSession) -> f64 {
    session.duration().num_milliseconds().max(0) as f64 / 60_000.0
}

/// Aggregates engagement within `range`. Stories are selected by creation
/// time and sessions by start time, so disjoint ranges add up.
pub fn engagement_stats(
    story_created: impl IntoIterator<Item = DateTime<Utc>>,
    sessions: &[ReadingSession],
    range: TimeRange,
) -> EngagementStats {
    let mut out = EngagementStats::default();
    for t in story_created.into_iter().filter(|t| range.contains(*t)) {
        *out.stories_created_per_day.entry(t.date_naive()).or_default() += 1;
    }
    for s in sessions.iter().filter(|s| range.contains(s.started_at)) {
        let minutes = session_minutes(s);
        out.reading_minutes_by_hour[s.started_at.hour() as usize] += minutes;
        let usage = out.device_breakdown.entry(s.device).or_default();
        usage.sessions += 1;
        usage.minutes += minutes;
        if s.status == SessionStatus::Completed {
            *out.sessions_completed_per_day.entry(s.last_activity().date_naive()).or_default() += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::session::ReadingEvent;
    use chrono::{Duration, TimeZone};

    fn session(id: &str, start: DateTime<Utc>, minutes: i64) -> ReadingSession {
        let story = fixtures::fire_truck_story();
        let mut s = ReadingSession::start(id, &story, Device::Reader, start);
        s.record_event(&story, ReadingEvent::PageView { section_id: "intro".into(), t: start + Duration::minutes(minutes) })
            .unwrap();
        s
    }

    #[test]
    fn minutes_go_to_start_hour() {
        let start = Utc.with_ymd_and_hms(2025, 3, 1, 21, 50, 0).unwrap();
        let stats = engagement_stats([], &[session("a", start, 30)], TimeRange::all());
        assert_eq!(stats.reading_minutes_by_hour[21], 30.0);
        assert_eq!(stats.reading_minutes_by_hour[22], 0.0);
        assert_eq!(stats.device_breakdown[&Device::Reader].sessions, 1);
    }

    #[test]
    fn disjoint_ranges_add_up() {
        let base = Utc.with_ymd_and_hms(2025, 3, 1, 0, 0, 0).unwrap();
        let sessions: Vec<_> = (0..10).map(|i| session(&format!("s{i}"), base + Duration::hours(i * 7), 5 + i)).collect();
        let created: Vec<_> = (0..10).map(|i| base + Duration::hours(i * 5)).collect();
        let mid = base + Duration::hours(33);
        let whole = engagement_stats(created.clone(), &sessions, TimeRange::all());
        let parts = engagement_stats(created.clone(), &sessions, TimeRange { from: None, to: Some(mid) })
            + engagement_stats(created, &sessions, TimeRange { from: Some(mid), to: None });
        assert_eq!(whole, parts);
    }
}
