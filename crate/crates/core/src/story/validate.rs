//! Structural validation.
//!
//! Malformed graphs (dangling ids, cycles, orphans) come back as violations;
//! the validator never fails.

use std::collections::{HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::paths::enumerate_graph;
use super::sentences::count_sentences;
use super::{SectionId, SectionKind, Story};

const DESIRABLE_SHAPE: &[SectionKind] =
    &[SectionKind::Decision, SectionKind::Consequence, SectionKind::Ending];

const REPAIR_SHAPE: &[SectionKind] = &[
    SectionKind::Decision,
    SectionKind::Consequence,
    SectionKind::Repair,
    SectionKind::Response,
    SectionKind::RepairedConsequence,
    SectionKind::Ending,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationConfig {
    /// Sentences allowed along one root-to-Ending path, Cover excluded.
    pub path_sentence_cap: usize,
    /// Per-section sentence count above which a warning is raised.
    pub section_sentence_soft_cap: usize,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self { path_sentence_cap: 12, section_sentence_soft_cap: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub rule: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub section: Option<SectionId>,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    #[serde(default)]
    pub warnings: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, rule: &str) -> bool {
        self.violations.iter().any(|v| v.rule == rule)
    }

    pub fn rules(&self) -> Vec<&str> {
        self.violations.iter().map(|v| v.rule.as_str()).collect()
    }

    fn violation(&mut self, rule: &str, section: Option<&SectionId>, message: impl Into<String>) {
        self.violations.push(Violation {
            rule: rule.to_string(),
            section: section.cloned(),
            message: message.into(),
        });
    }

    fn warning(&mut self, rule: &str, section: Option<&SectionId>, message: impl Into<String>) {
        self.warnings.push(Violation {
            rule: rule.to_string(),
            section: section.cloned(),
            message: message.into(),
        });
    }
}

pub fn validate_structure(story: &Story) -> ValidationReport {
    validate_with(story, &ValidationConfig::default())
}

pub fn validate_with(story: &Story, config: &ValidationConfig) -> ValidationReport {
    let mut report = ValidationReport::default();
    let graph = &story.graph;

    let mut seen = HashSet::new();
    for s in &graph.sections {
        if !seen.insert(&s.id) {
            report.violation("duplicate-id", Some(&s.id), format!("section id {} is used twice", s.id));
        }
    }
    let index = graph.index();

    for kind in [SectionKind::Cover, SectionKind::Introduction, SectionKind::Challenge, SectionKind::Ending] {
        let n = graph.sections.iter().filter(|s| s.kind == kind).count();
        if n != 1 {
            report.violation("kind-cardinality", None, format!("expected exactly one {kind} section, found {n}"));
        }
    }

    let mut anchors_ok = true;
    for (role, id, kind) in [
        ("root", &graph.root, SectionKind::Cover),
        ("challenge", &graph.challenge, SectionKind::Challenge),
        ("ending", &graph.ending, SectionKind::Ending),
    ] {
        match index.get(id) {
            None => {
                anchors_ok = false;
                report.violation("dangling-reference", Some(id), format!("{role} points at unknown section {id}"));
            }
            Some(s) if s.kind != kind => {
                report.violation(
                    "anchor-kind-mismatch",
                    Some(id),
                    format!("{role} section {id} is a {}, expected {kind}", s.kind),
                );
            }
            Some(_) => {}
        }
    }

    let mut links_ok = true;
    for s in &graph.sections {
        for n in &s.next {
            if !index.contains_key(n) {
                links_ok = false;
                report.violation("dangling-reference", Some(&s.id), format!("{} links to unknown section {n}", s.id));
            }
        }
        match s.kind {
            SectionKind::Challenge => {
                if !(2..=3).contains(&s.next.len()) {
                    report.violation(
                        "challenge-fanout",
                        Some(&s.id),
                        format!("challenge offers {} options, expected 2 or 3", s.next.len()),
                    );
                }
            }
            SectionKind::Ending if !s.next.is_empty() => {
                report.violation("ending-has-successor", Some(&s.id), "the ending must be terminal");
            }
            _ if s.next.len() > 1 => {
                report.violation(
                    "illegal-fanout",
                    Some(&s.id),
                    format!("{} section {} has {} successors; only the challenge may branch", s.kind, s.id, s.next.len()),
                );
            }
            _ => {}
        }
        if s.kind == SectionKind::Cover {
            if story.title.trim().is_empty() && s.text.trim().is_empty() {
                report.violation("missing-title", Some(&s.id), "the cover carries no title");
            }
        } else if s.text.trim().is_empty() {
            report.violation("empty-text", Some(&s.id), format!("{} section {} has no text", s.kind, s.id));
        }
        if s.kind.needs_emotion_cue() && !s.emotion_cues.iter().any(|c| c.is_complete()) {
            report.violation(
                "missing-emotion-cue",
                Some(&s.id),
                format!("{} section {} must pair an emotion with an observable response", s.kind, s.id),
            );
        }
        for cue in &s.emotion_cues {
            if !cue.is_complete() {
                report.violation(
                    "incomplete-emotion-cue",
                    Some(&s.id),
                    format!("cue for {} lacks an emotion or a response", cue.character),
                );
            }
            if !story.known_entity(&cue.character) {
                report.violation(
                    "unknown-entity",
                    Some(&s.id),
                    format!("{} is not in the profile snapshot", cue.character),
                );
            }
        }
        if let Some(speaker) = &s.speaker {
            if !story.known_entity(speaker) {
                report.violation("unknown-entity", Some(&s.id), format!("speaker {speaker} is not in the profile snapshot"));
            }
        }
        let n = count_sentences(&s.text);
        if s.kind != SectionKind::Cover && n > config.section_sentence_soft_cap {
            report.warning(
                "section-sentence-soft-cap",
                Some(&s.id),
                format!("{n} sentences, soft cap is {}", config.section_sentence_soft_cap),
            );
        }
    }

    let Some(intro) = graph.sections.iter().find(|s| s.kind == SectionKind::Introduction) else {
        return report;
    };
    if !mentions(&intro.text, story.child_name()) {
        report.violation(
            "protagonist-missing",
            Some(&intro.id),
            format!("the introduction does not feature {}", story.child_name()),
        );
    }

    if !anchors_ok || !links_ok {
        return report;
    }
    if let Some(cycle) = find_cycle(story) {
        report.violation(
            "cycle",
            Some(&cycle[0]),
            format!("sections {} form a cycle", cycle.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(" -> ")),
        );
        return report;
    }

    let reachable = reachable_from(story, &graph.root);
    for s in &graph.sections {
        if !reachable.contains(&s.id) {
            report.violation("unreachable-section", Some(&s.id), format!("section {} cannot be reached from the cover", s.id));
        }
    }

    let paths = match enumerate_graph(graph) {
        Ok(p) => p,
        Err(e) => {
            report.violation(e.rule(), Some(&graph.challenge), e.to_string());
            return report;
        }
    };

    check_branches(story, &paths, &mut report);

    for path in &paths {
        let end = path.last().expect("paths are non-empty");
        if end != &graph.ending {
            report.violation("dead-end", Some(end), format!("path ends at {end} instead of the shared ending"));
        }
        let sentences: usize = path
            .iter()
            .filter_map(|id| index.get(id))
            .filter(|s| s.kind != SectionKind::Cover)
            .map(|s| count_sentences(&s.text))
            .sum();
        if sentences > config.path_sentence_cap {
            report.violation(
                "path-sentence-cap",
                Some(end),
                format!(
                    "path through {} has {sentences} sentences, cap is {}",
                    path.get(3).map(|s| s.as_str()).unwrap_or("?"),
                    config.path_sentence_cap
                ),
            );
        }
    }
    report
}

fn check_branches(story: &Story, paths: &[Vec<SectionId>], report: &mut ValidationReport) {
    let graph = &story.graph;
    let index = graph.index();
    let prefix = [SectionKind::Cover, SectionKind::Introduction, SectionKind::Challenge];

    let mut segments: HashMap<&SectionId, &[SectionId]> = HashMap::new();
    for path in paths {
        let kinds: Vec<_> = path.iter().take(3).map(|id| index[id].kind).collect();
        if kinds != prefix || path.get(2) != Some(&graph.challenge) {
            report.violation(
                "prefix-shape",
                path.first(),
                "every path must open with cover, introduction, challenge",
            );
            continue;
        }
        if let Some(decision) = path.get(3) {
            segments.insert(decision, &path[3..]);
        }
    }

    if graph.desirable_path.is_empty() {
        report.violation("desirable-count", Some(&graph.challenge), "no desirable path declared");
    }
    let expected = story.topic_type.undesirable_paths();
    if graph.undesirable_paths.len() != expected {
        report.violation(
            "path-count-mismatch",
            Some(&graph.challenge),
            format!(
                "{} stories carry {expected} undesirable path(s), found {}",
                story.topic_type,
                graph.undesirable_paths.len()
            ),
        );
    }

    let declared: Vec<(&[SectionId], bool)> = std::iter::once((graph.desirable_path.as_slice(), true))
        .filter(|(p, _)| !p.is_empty())
        .chain(graph.undesirable_paths.iter().map(|p| (p.as_slice(), false)))
        .collect();
    for (path, desirable) in &declared {
        let Some(first) = path.first() else {
            report.violation("path-declaration-mismatch", None, "empty path declaration");
            continue;
        };
        match segments.get(first) {
            Some(segment) if segment == path => {}
            Some(_) => report.violation(
                "path-declaration-mismatch",
                Some(first),
                format!("declared path from {first} does not follow the section links"),
            ),
            None => report.violation(
                "path-declaration-mismatch",
                Some(first),
                format!("declared path starts at {first}, which is not a challenge option"),
            ),
        }
        let kinds: Vec<_> = path.iter().filter_map(|id| index.get(id)).map(|s| s.kind).collect();
        if *desirable {
            if kinds != DESIRABLE_SHAPE {
                report.violation(
                    "desirable-path-shape",
                    Some(first),
                    "the desirable path must be decision, consequence, ending",
                );
            }
        } else if kinds != REPAIR_SHAPE {
            report.violation(
                "missing-repair-chain",
                Some(first),
                format!(
                    "undesirable path from {first} must run decision, consequence, repair, response, repaired consequence, ending (found {})",
                    kinds.iter().map(|k| k.as_str()).collect::<Vec<_>>().join(", ")
                ),
            );
        }
    }

    for option in graph.options() {
        if !declared.iter().any(|(p, _)| p.first() == Some(option)) {
            report.violation("undeclared-branch", Some(option), format!("challenge option {option} is not a declared path"));
        }
    }
}

fn reachable_from(story: &Story, root: &SectionId) -> HashSet<SectionId> {
    let index = story.graph.index();
    let mut seen = HashSet::new();
    let mut queue = VecDeque::from([root.clone()]);
    while let Some(id) = queue.pop_front() {
        if !seen.insert(id.clone()) {
            continue;
        }
        if let Some(s) = index.get(&id) {
            queue.extend(s.next.iter().cloned());
        }
    }
    seen
}

/// Any cycle in the whole graph, reachable or not.
fn find_cycle(story: &Story) -> Option<Vec<SectionId>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Open,
        Done,
    }
    let index = story.graph.index();
    let mut marks: HashMap<&SectionId, Mark> = HashMap::new();

    fn visit<'a>(
        id: &'a SectionId,
        index: &HashMap<&'a SectionId, &'a super::Section>,
        marks: &mut HashMap<&'a SectionId, Mark>,
        stack: &mut Vec<&'a SectionId>,
    ) -> Option<Vec<SectionId>> {
        match marks.get(id) {
            Some(Mark::Done) => return None,
            Some(Mark::Open) => {
                let pos = stack.iter().position(|s| *s == id).unwrap_or(0);
                return Some(stack[pos..].iter().map(|s| (*s).clone()).collect());
            }
            None => {}
        }
        marks.insert(id, Mark::Open);
        stack.push(id);
        for n in &index.get(id)?.next {
            if let Some(c) = visit(n, index, marks, stack) {
                return Some(c);
            }
        }
        stack.pop();
        marks.insert(id, Mark::Done);
        None
    }

    for s in &story.graph.sections {
        let mut stack = Vec::new();
        if let Some(c) = visit(&s.id, &index, &mut marks, &mut stack) {
            return Some(c);
        }
    }
    None
}

fn mentions(text: &str, name: &str) -> bool {
    !name.is_empty() && text.to_lowercase().contains(&name.to_lowercase())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::story::{EmotionCue, Section, TopicType};

    #[test]
    fn relationship_fixture_is_valid() {
        let report = validate_structure(&fixtures::fire_truck_story());
        assert!(report.is_valid(), "{:?}", report.violations);
        assert!(report.warnings.is_empty());
    }

    #[test]
    fn every_topic_fixture_is_valid() {
        for topic in TopicType::ALL {
            let story = fixtures::story_for(topic);
            let report = validate_structure(&story);
            assert!(report.is_valid(), "{topic}: {:?}", report.violations);
        }
    }

    #[test]
    fn missing_repair_is_flagged() {
        let story = fixtures::mutate(&fixtures::fire_truck_story(), fixtures::Mutation::DropRepair);
        let report = validate_structure(&story);
        assert!(report.has("missing-repair-chain"), "{:?}", report.rules());
    }

    #[test]
    fn healthy_habits_with_two_undesirable_paths() {
        let mut story = fixtures::fire_truck_story();
        story.topic_type = TopicType::HealthyHabits;
        story.target_behavior.classified_type = TopicType::HealthyHabits;
        let report = validate_structure(&story);
        assert!(report.has("path-count-mismatch"));
    }

    #[test]
    fn cycle_is_reported_not_panicked() {
        let story = fixtures::mutate(&fixtures::fire_truck_story(), fixtures::Mutation::Cycle);
        assert!(validate_structure(&story).has("cycle"));
    }

    #[test]
    fn orphan_is_unreachable() {
        let story = fixtures::mutate(&fixtures::fire_truck_story(), fixtures::Mutation::Orphan);
        assert!(validate_structure(&story).has("unreachable-section"));
    }

    #[test]
    fn extra_path_trips_fanout_and_count() {
        let story = fixtures::mutate(&fixtures::fire_truck_story(), fixtures::Mutation::ExtraPath);
        let report = validate_structure(&story);
        assert!(report.has("challenge-fanout"));
        assert!(report.has("path-count-mismatch"));
    }

    #[test]
    fn consequence_without_cue() {
        let mut story = fixtures::fire_truck_story();
        story.graph.section_mut(&"d-consequence".into()).unwrap().emotion_cues.clear();
        assert!(validate_structure(&story).has("missing-emotion-cue"));

        let mut story = fixtures::fire_truck_story();
        story.graph.section_mut(&"d-consequence".into()).unwrap().emotion_cues =
            vec![EmotionCue::new("Max", "happy", " ")];
        let report = validate_structure(&story);
        assert!(report.has("incomplete-emotion-cue"));
    }

    #[test]
    fn unknown_entity_in_cue() {
        let mut story = fixtures::fire_truck_story();
        story.graph.section_mut(&"d-consequence".into()).unwrap().emotion_cues[0].character = "Zed".into();
        assert!(validate_structure(&story).has("unknown-entity"));
    }

    #[test]
    fn sentence_cap_and_soft_cap() {
        let mut story = fixtures::fire_truck_story();
        story.graph.section_mut(&"u1-response".into()).unwrap().text =
            "Alex says sorry. Alex hugs Max. Alex gives Max the truck. Max nods.".into();
        let report = validate_structure(&story);
        assert!(report.has("path-sentence-cap"));
        assert!(report.warnings.iter().any(|w| w.rule == "section-sentence-soft-cap"));

        let relaxed = validate_with(&story, &ValidationConfig { path_sentence_cap: 20, ..Default::default() });
        assert!(relaxed.is_valid());
    }

    #[test]
    fn dangling_and_duplicate_ids() {
        let mut story = fixtures::fire_truck_story();
        story.graph.sections.push(Section::new("intro", SectionKind::Decision, "Copy."));
        story.graph.section_mut(&"u2-repair".into()).unwrap().next = vec!["nowhere".into()];
        let report = validate_structure(&story);
        assert!(report.has("duplicate-id"));
        assert!(report.has("dangling-reference"));
    }

    #[test]
    fn protagonist_must_appear() {
        let mut story = fixtures::fire_truck_story();
        story.graph.section_mut(&"intro".into()).unwrap().text = "Max is at the playground.".into();
        assert!(validate_structure(&story).has("protagonist-missing"));
    }
}
