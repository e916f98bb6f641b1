//! Parent edits to section text. Structure never changes through an edit.

use chrono::{DateTime, Utc};
use thiserror::Error;

use super::{SectionEdit, SectionId, SectionKind, Story};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EditError {
    #[error("not-found: section {0}")]
    NoSuchSection(SectionId),
    #[error("bad-request: section text is empty")]
    EmptyText,
}

/// Replaces one section's text. Returns `None` when the text is unchanged;
/// otherwise a new version with the edit logged and the section's cached
/// illustration preprocessing marked stale. Editing the Cover retitles the
/// story.
pub fn edit_section_text(
    story: &Story,
    section_id: &SectionId,
    new_text: &str,
    at: DateTime<Utc>,
) -> Result<Option<Story>, EditError> {
    let section = story.graph.section(section_id).ok_or_else(|| EditError::NoSuchSection(section_id.clone()))?;
    if new_text.trim().is_empty() {
        return Err(EditError::EmptyText);
    }
    if section.text == new_text {
        return Ok(None);
    }
    let mut out = story.clone();
    out.version += 1;
    out.edit_log.push(SectionEdit {
        section: section_id.clone(),
        previous_text: section.text.clone(),
        new_text: new_text.to_string(),
        at,
    });
    let s = out.graph.section_mut(section_id).expect("section exists");
    s.text = new_text.to_string();
    if s.kind == SectionKind::Cover {
        out.title = new_text.to_string();
    }
    if let Some(plan) = out.preprocessing.as_mut() {
        plan.mark_stale(section_id);
    }
    Ok(Some(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn edit_logs_and_bumps_version() {
        let story = fixtures::fire_truck_story();
        let id = SectionId::from("d-decision");
        let out = edit_section_text(&story, &id, "Alex says, \"You go first.\"", fixtures::epoch()).unwrap().unwrap();
        assert_eq!(out.version, story.version + 1);
        assert_eq!(out.edit_log.len(), 1);
        assert_eq!(out.graph.section(&id).unwrap().next, story.graph.section(&id).unwrap().next);
        let same = out.graph.section(&id).unwrap().text.clone();
        assert!(edit_section_text(&out, &id, &same, fixtures::epoch()).unwrap().is_none());
    }

    #[test]
    fn unknown_section_is_not_found() {
        let story = fixtures::fire_truck_story();
        assert!(edit_section_text(&story, &"nope".into(), "x", fixtures::epoch()).is_err());
    }
}
