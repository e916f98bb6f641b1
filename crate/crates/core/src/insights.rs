//! Offline reports over exported event logs, and corpus validation.
//!
//! Everything here is a pure function of its inputs: no clock, no network.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::session::ReadingSession;
use crate::stats::{engagement_stats, TimeRange};
use crate::story::{validate_structure, Story, TopicType};

pub const EXPORT_FORMAT_VERSION: u32 = 1;

pub const UNCATEGORIZED: &str = "uncategorized";

/// Story fields carried in an export; the documents themselves stay behind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoryMeta {
    pub id: String,
    pub version: u32,
    pub title: String,
    pub topic_type: TopicType,
    pub target_behavior: String,
    pub created_at: DateTime<Utc>,
}

impl StoryMeta {
    pub fn of(story: &Story) -> Self {
        Self {
            id: story.id.clone(),
            version: story.version,
            title: story.title.clone(),
            topic_type: story.topic_type,
            target_behavior: story.target_behavior.text.clone(),
            created_at: story.created_at,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccountExport {
    pub account_id: String,
    pub stories: Vec<StoryMeta>,
    pub sessions: Vec<ReadingSession>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventExport {
    pub format_version: u32,
    pub accounts: Vec<AccountExport>,
}

impl Default for EventExport {
    fn default() -> Self {
        Self { format_version: EXPORT_FORMAT_VERSION, accounts: Vec::new() }
    }
}

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("unsupported-version: {0:?}")]
    UnsupportedVersion(Option<u64>),
    #[error("malformed export: {0}")]
    Malformed(String),
    #[error("account {account}: session {session} refers to unknown story {story}")]
    DanglingSession { account: String, session: String, story: String },
}

impl ExportError {
    pub fn code(&self) -> &'static str {
        match self {
            ExportError::UnsupportedVersion(_) => "unsupported-version",
            ExportError::Malformed(_) | ExportError::DanglingSession { .. } => "bad-request",
        }
    }
}

impl EventExport {
    pub fn parse(raw: &str) -> Result<Self, ExportError> {
        let value: Value = serde_json::from_str(raw).map_err(|e| ExportError::Malformed(e.to_string()))?;
        let version = value.get("format_version").and_then(Value::as_u64);
        if version != Some(EXPORT_FORMAT_VERSION as u64) {
            return Err(ExportError::UnsupportedVersion(version));
        }
        let export: EventExport = serde_json::from_value(value).map_err(|e| ExportError::Malformed(e.to_string()))?;
        export.check_integrity()?;
        Ok(export)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("export serializes")
    }

    pub fn check_integrity(&self) -> Result<(), ExportError> {
        for a in &self.accounts {
            let ids: BTreeSet<&str> = a.stories.iter().map(|s| s.id.as_str()).collect();
            if let Some(s) = a.sessions.iter().find(|s| !ids.contains(s.story_id.as_str())) {
                return Err(ExportError::DanglingSession {
                    account: a.account_id.clone(),
                    session: s.id.clone(),
                    story: s.story_id.clone(),
                });
            }
        }
        Ok(())
    }

    pub fn story_count(&self) -> usize {
        self.accounts.iter().map(|a| a.stories.len()).sum()
    }

    pub fn mean_stories_per_account(&self) -> f64 {
        if self.accounts.is_empty() {
            return 0.0;
        }
        self.story_count() as f64 / self.accounts.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportKind {
    CreationHeatmap,
    ReadingByHour,
    BehaviorCategories,
}

impl ReportKind {
    pub fn parse(raw: &str) -> Option<Self> {
        match raw {
            "creation-heatmap" => Some(Self::CreationHeatmap),
            "reading-by-hour" => Some(Self::ReadingByHour),
            "behavior-categories" => Some(Self::BehaviorCategories),
            _ => None,
        }
    }
}

/// A tabular report plus the same data as a plot-ready series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub kind: ReportKind,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub notes: Vec<String>,
    pub series: Value,
}

impl Report {
    pub fn render_table(&self) -> String {
        let mut widths: Vec<usize> = self.columns.iter().map(String::len).collect();
        for row in &self.rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.len());
            }
        }
        let line = |cells: &[String]| {
            cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect::<Vec<_>>().join("  ").trim_end().to_string()
        };
        let mut out = String::new();
        writeln!(out, "{}", line(&self.columns)).unwrap();
        writeln!(out, "{}", widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  ")).unwrap();
        for row in &self.rows {
            writeln!(out, "{}", line(row)).unwrap();
        }
        for n in &self.notes {
            writeln!(out, "{n}").unwrap();
        }
        out
    }
}

/// Keyword-to-category mapping, one `category<TAB>keyword` pair per line.
/// Lines starting with `#` are comments. The first matching line wins.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CategoryMap {
    rules: Vec<(String, String)>,
}

impl CategoryMap {
    pub fn parse(raw: &str) -> Result<Self, String> {
        let mut rules = Vec::new();
        for (n, line) in raw.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (cat, kw) = line.split_once('\t').ok_or_else(|| format!("line {}: expected category<TAB>keyword", n + 1))?;
            let (cat, kw) = (cat.trim(), kw.trim());
            if cat.is_empty() || kw.is_empty() {
                return Err(format!("line {}: empty category or keyword", n + 1));
            }
            rules.push((cat.to_string(), kw.to_lowercase()));
        }
        Ok(Self { rules })
    }

    pub fn categorize(&self, behavior: &str) -> &str {
        let b = behavior.to_lowercase();
        self.rules.iter().find(|(_, kw)| b.contains(kw.as_str())).map_or(UNCATEGORIZED, |(c, _)| c.as_str())
    }

    pub fn categories(&self) -> Vec<&str> {
        let mut seen = Vec::new();
        for (c, _) in &self.rules {
            if !seen.contains(&c.as_str()) {
                seen.push(c.as_str());
            }
        }
        seen
    }
}

pub fn report(export: &EventExport, kind: ReportKind, categories: Option<&CategoryMap>) -> Report {
    match kind {
        ReportKind::CreationHeatmap => creation_heatmap(export),
        ReportKind::ReadingByHour => reading_by_hour(export),
        ReportKind::BehaviorCategories => behavior_categories(export, categories.unwrap_or(&CategoryMap::default())),
    }
}

fn creation_heatmap(export: &EventExport) -> Report {
    let mut cells: BTreeMap<(&str, NaiveDate), u64> = BTreeMap::new();
    for a in &export.accounts {
        for s in &a.stories {
            *cells.entry((a.account_id.as_str(), s.created_at.date_naive())).or_default() += 1;
        }
    }
    let rows = cells.iter().map(|((a, d), n)| vec![a.to_string(), d.to_string(), n.to_string()]).collect();
    let series: Vec<Value> =
        cells.iter().map(|((a, d), n)| json!({ "account_id": a, "date": d.to_string(), "stories": n })).collect();
    let mean = export.mean_stories_per_account();
    Report {
        kind: ReportKind::CreationHeatmap,
        columns: ["account", "date", "stories"].map(String::from).to_vec(),
        rows,
        notes: vec![format!(
            "{} stories over {} accounts, mean {:.2} per account",
            export.story_count(),
            export.accounts.len(),
            (mean * 100.0).round() / 100.0
        )],
        series: json!({
            "cells": series,
            "total_stories": export.story_count(),
            "accounts": export.accounts.len(),
            "mean_stories_per_account": mean,
        }),
    }
}

fn reading_by_hour(export: &EventExport) -> Report {
    let sessions: Vec<ReadingSession> = export.accounts.iter().flat_map(|a| a.sessions.iter().cloned()).collect();
    let stats = engagement_stats([], &sessions, TimeRange::all());
    let minutes = stats.reading_minutes_by_hour;
    let rows = minutes.iter().enumerate().map(|(h, m)| vec![format!("{h:02}"), format!("{m:.2}")]).collect();
    let devices: BTreeMap<String, Value> = stats
        .device_breakdown
        .iter()
        .map(|(d, u)| (format!("{d:?}").to_lowercase(), json!({ "sessions": u.sessions, "minutes": u.minutes })))
        .collect();
    Report {
        kind: ReportKind::ReadingByHour,
        columns: ["hour", "minutes"].map(String::from).to_vec(),
        rows,
        notes: vec![format!("{} sessions, {:.2} minutes in total", sessions.len(), stats.total_reading_minutes())],
        series: json!({ "minutes_by_hour": minutes.to_vec(), "devices": devices }),
    }
}

fn behavior_categories(export: &EventExport, map: &CategoryMap) -> Report {
    let mut counts: BTreeMap<&str, u64> = map.categories().into_iter().map(|c| (c, 0)).collect();
    for s in export.accounts.iter().flat_map(|a| &a.stories) {
        *counts.entry(map.categorize(&s.target_behavior)).or_default() += 1;
    }
    if counts.get(UNCATEGORIZED) == Some(&0) {
        counts.remove(UNCATEGORIZED);
    }
    Report {
        kind: ReportKind::BehaviorCategories,
        columns: ["category", "stories"].map(String::from).to_vec(),
        rows: counts.iter().map(|(c, n)| vec![c.to_string(), n.to_string()]).collect(),
        notes: Vec::new(),
        series: json!({ "categories": counts }),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileResult {
    pub path: PathBuf,
    pub violations: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CorpusSummary {
    pub files: Vec<FileResult>,
}

impl CorpusSummary {
    pub fn violation_count(&self) -> usize {
        self.files.iter().map(|f| f.violations.len()).sum()
    }

    pub fn is_clean(&self) -> bool {
        self.violation_count() == 0
    }

    pub fn by_rule(&self) -> BTreeMap<&str, usize> {
        let mut out = BTreeMap::new();
        for v in self.files.iter().flat_map(|f| &f.violations) {
            *out.entry(v.as_str()).or_default() += 1;
        }
        out
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for f in &self.files {
            let status = if f.violations.is_empty() { "ok".to_string() } else { f.violations.join(", ") };
            writeln!(out, "{}: {status}", f.path.display()).unwrap();
        }
        writeln!(out, "{} files, {} violations", self.files.len(), self.violation_count()).unwrap();
        out
    }
}

/// Validates every `.json` file directly under `dir`, in name order.
/// Files that cannot be read or parsed count as one "unreadable" violation.
pub fn validate_corpus(dir: &Path) -> std::io::Result<CorpusSummary> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let files = paths
        .into_iter()
        .map(|path| {
            let violations = match std::fs::read_to_string(&path).ok().and_then(|raw| Story::from_document_str(&raw).ok()) {
                Some(story) => validate_structure(&story).rules().into_iter().map(String::from).collect(),
                None => vec!["unreadable".to_string()],
            };
            FileResult { path, violations }
        })
        .collect();
    Ok(CorpusSummary { files })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn version_mismatch_is_rejected() {
        let err = EventExport::parse(r#"{"format_version": 2, "accounts": []}"#).unwrap_err();
        assert_eq!(err.code(), "unsupported-version");
        let err = EventExport::parse(r#"{"accounts": []}"#).unwrap_err();
        assert_eq!(err.code(), "unsupported-version");
    }

    #[test]
    fn empty_export_gives_empty_tables() {
        let e = EventExport::default();
        assert!(report(&e, ReportKind::CreationHeatmap, None).rows.is_empty());
        assert!(report(&e, ReportKind::BehaviorCategories, None).rows.is_empty());
        let hours = report(&e, ReportKind::ReadingByHour, None);
        assert!(hours.series["minutes_by_hour"].as_array().unwrap().iter().all(|m| m.as_f64() == Some(0.0)));
    }

    #[test]
    fn categories_first_match_wins() {
        let map = CategoryMap::parse("# c\tk\nsharing\tturns\nsharing\tshare\nmanners\tquiet\n").unwrap();
        assert_eq!(map.categorize("Taking TURNS at play"), "sharing");
        assert_eq!(map.categorize("Quiet voice"), "manners");
        assert_eq!(map.categorize("Brushing teeth"), UNCATEGORIZED);
        assert!(CategoryMap::parse("no tab here").is_err());
    }

    #[test]
    fn dangling_session_is_rejected() {
        let mut e = fixtures::engagement_export();
        e.accounts[0].stories.clear();
        assert!(matches!(EventExport::parse(&e.to_json_string()), Err(ExportError::DanglingSession { .. })));
    }

    #[test]
    fn heatmap_cells_sum_to_story_count() {
        let e = fixtures::engagement_export();
        let r = report(&e, ReportKind::CreationHeatmap, None);
        let sum: u64 = r.rows.iter().map(|row| row[2].parse::<u64>().unwrap()).sum();
        assert_eq!(sum as usize, e.story_count());
    }
}
