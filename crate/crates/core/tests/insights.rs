use forge_core::fixtures::{self, Mutation};
use forge_core::insights::{report, validate_corpus, CategoryMap, EventExport, ExportError, ReportKind};
use forge_core::stats::{engagement_stats, TimeRange};
use forge_core::TopicType;

/// Minutes per account: 21:05 for 10+i, plus 12 at 21:45 for even i.
fn hand_hour_21() -> f64 {
    let first: i64 = (0..16).map(|i| 10 + i).sum();
    assert_eq!(first, 280);
    let second = 8 * 12;
    (first + second) as f64
}

#[test]
fn export_reproduces_the_account_mean() {
    let e = fixtures::engagement_export();
    assert_eq!(e.accounts.len(), 16);
    assert_eq!(e.story_count(), 218);
    let mean = e.mean_stories_per_account();
    assert!((mean - 13.63).abs() <= 0.01, "{mean}");
    assert_eq!(mean, 218.0 / 16.0);
    let heat = report(&e, ReportKind::CreationHeatmap, None);
    assert!(heat.notes[0].contains("mean 13.63"), "{}", heat.notes[0]);
    assert_eq!(heat.series["total_stories"], 218);
}

#[test]
fn reading_by_hour_matches_the_hand_sum() {
    let e = fixtures::engagement_export();
    let r = report(&e, ReportKind::ReadingByHour, None);
    let minutes: Vec<f64> = r.series["minutes_by_hour"].as_array().unwrap().iter().map(|m| m.as_f64().unwrap()).collect();
    assert_eq!(minutes[21], hand_hour_21());
    assert_eq!(minutes[21], 376.0);
    assert_eq!(minutes[20], 16.0 * 15.0);
    assert_eq!(minutes[8], 16.0 * 7.0);
    let peak = (0..24).max_by(|a, b| minutes[*a].total_cmp(&minutes[*b])).unwrap();
    assert_eq!(peak, 21);
    for h in (0..24).filter(|h| ![8, 20, 21].contains(h)) {
        assert_eq!(minutes[h], 0.0, "hour {h}");
    }
    assert_eq!(r.rows[21], vec!["21".to_string(), "376.00".to_string()]);
}

#[test]
fn completed_sessions_per_day() {
    let e = fixtures::engagement_export();
    let sessions: Vec<_> = e.accounts.iter().flat_map(|a| a.sessions.clone()).collect();
    let stats = engagement_stats([], &sessions, TimeRange::all());
    let day0 = fixtures::epoch().date_naive();
    let per_day = |d: i64| stats.sessions_completed_per_day.get(&(day0 + chrono::Duration::days(d))).copied().unwrap_or(0);
    assert_eq!((per_day(0), per_day(1), per_day(2), per_day(3)), (16, 16, 0, 8));
}

#[test]
fn export_json_round_trips() {
    let e = fixtures::engagement_export();
    let raw = e.to_json_string();
    let back = EventExport::parse(&raw).unwrap();
    assert_eq!(back, e);
    assert_eq!(back.to_json_string(), raw);
}

#[test]
fn bad_exports_are_rejected() {
    let e = fixtures::engagement_export();
    let mut v: serde_json::Value = serde_json::from_str(&e.to_json_string()).unwrap();
    v["format_version"] = 7.into();
    assert!(matches!(EventExport::parse(&v.to_string()), Err(ExportError::UnsupportedVersion(Some(7)))));

    let mut dangling = e.clone();
    dangling.accounts[3].sessions[0].story_id = "story-missing".into();
    let err = EventExport::parse(&dangling.to_json_string()).unwrap_err();
    assert_eq!(err.code(), "bad-request");
    assert!(err.to_string().contains("story-missing"));

    assert_eq!(EventExport::parse("{not json").unwrap_err().code(), "bad-request");
}

#[test]
fn behavior_categories_cover_every_story() {
    let e = fixtures::engagement_export();
    let map = CategoryMap::parse("sharing\ttaking turns\nsharing\tsharing\nmanners\tquiet voice\nmanners\twaiting\n").unwrap();
    let r = report(&e, ReportKind::BehaviorCategories, Some(&map));
    let total: u64 = r.rows.iter().map(|row| row[1].parse::<u64>().unwrap()).sum();
    assert_eq!(total, 218);
    let cats: Vec<&str> = r.rows.iter().map(|row| row[0].as_str()).collect();
    assert!(cats.contains(&"sharing") && cats.contains(&"manners") && cats.contains(&"uncategorized"), "{cats:?}");
}

#[test]
fn corpus_with_one_cycle_has_one_bad_file() {
    let dir = tempfile::tempdir().unwrap();
    let valid: Vec<_> = fixtures::mutation_corpus(40, 3).into_iter().filter(|(_, ok)| *ok).take(10).collect();
    assert_eq!(valid.len(), 10);
    for (i, (story, _)) in valid.iter().enumerate() {
        std::fs::write(dir.path().join(format!("story-{i:02}.json")), story.to_document_string()).unwrap();
    }
    std::fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
    let clean = validate_corpus(dir.path()).unwrap();
    assert_eq!(clean.files.len(), 10);
    assert!(clean.is_clean(), "{}", clean.render());

    let cyclic = fixtures::mutate(&fixtures::story_for(TopicType::Relationship), Mutation::Cycle);
    std::fs::write(dir.path().join("story-99.json"), cyclic.to_document_string()).unwrap();
    let summary = validate_corpus(dir.path()).unwrap();
    let bad: Vec<_> = summary.files.iter().filter(|f| !f.violations.is_empty()).collect();
    assert_eq!(bad.len(), 1);
    assert!(bad[0].path.ends_with("story-99.json"));
    assert!(bad[0].violations.contains(&"cycle".to_string()), "{:?}", bad[0].violations);

    std::fs::write(dir.path().join("story-98.json"), "{ broken").unwrap();
    let summary = validate_corpus(dir.path()).unwrap();
    assert_eq!(summary.by_rule().get("unreadable"), Some(&1));
    assert!(summary.render().ends_with(&format!("12 files, {} violations\n", summary.violation_count())));
}
