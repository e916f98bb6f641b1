use std::collections::{BTreeSet, HashMap};

use thiserror::Error;

use super::{PathGraph, PathKind, SectionId, Story};

const MAX_PATHS: usize = 4096;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PathError {
    #[error("cycle through sections {0:?}")]
    Cycle(BTreeSet<SectionId>),
    #[error("no-branch: challenge {0} has no successors")]
    NoBranch(SectionId),
    #[error("dangling reference from {from} to unknown section {to}")]
    Dangling { from: SectionId, to: SectionId },
    #[error("unknown {role} section {id}")]
    UnknownAnchor { role: &'static str, id: SectionId },
    #[error("more than {MAX_PATHS} paths")]
    TooManyPaths,
}

impl PathError {
    pub fn rule(&self) -> &'static str {
        match self {
            PathError::Cycle(_) => "cycle",
            PathError::NoBranch(_) => "no-branch",
            PathError::Dangling { .. } => "dangling-reference",
            PathError::UnknownAnchor { .. } => "dangling-reference",
            PathError::TooManyPaths => "path-explosion",
        }
    }
}

/// Every maximal sequence from the root, desirable branch first, then the
/// remaining branches in Challenge option order.
pub fn enumerate_paths(story: &Story) -> Result<Vec<Vec<SectionId>>, PathError> {
    enumerate_graph(&story.graph)
}

pub(crate) fn enumerate_graph(graph: &PathGraph) -> Result<Vec<Vec<SectionId>>, PathError> {
    let index = graph.index();
    for (role, id) in [("root", &graph.root), ("challenge", &graph.challenge)] {
        if !index.contains_key(id) {
            return Err(PathError::UnknownAnchor { role, id: id.clone() });
        }
    }
    if index[&graph.challenge].next.is_empty() {
        return Err(PathError::NoBranch(graph.challenge.clone()));
    }

    let mut out = Vec::new();
    let mut stack = vec![graph.root.clone()];
    walk(&index, &mut stack, &mut out)?;

    if let Some(desirable) = graph.desirable_path.first() {
        // Stable: non-desirable paths keep traversal order.
        out.sort_by_key(|p| !p.contains(desirable));
    }
    Ok(out)
}

fn walk(
    index: &HashMap<&SectionId, &super::Section>,
    stack: &mut Vec<SectionId>,
    out: &mut Vec<Vec<SectionId>>,
) -> Result<(), PathError> {
    let here = stack.last().expect("non-empty stack").clone();
    let section = index[&here];
    if section.next.is_empty() {
        if out.len() >= MAX_PATHS {
            return Err(PathError::TooManyPaths);
        }
        out.push(stack.clone());
        return Ok(());
    }
    for next in &section.next {
        if !index.contains_key(next) {
            return Err(PathError::Dangling { from: here.clone(), to: next.clone() });
        }
        if let Some(pos) = stack.iter().position(|s| s == next) {
            return Err(PathError::Cycle(stack[pos..].iter().cloned().collect()));
        }
        stack.push(next.clone());
        walk(index, stack, out)?;
        stack.pop();
    }
    Ok(())
}

/// Kind of an enumerated path, decided by which Decision it passes through.
pub fn path_kind(graph: &PathGraph, path: &[SectionId]) -> Option<PathKind> {
    let challenge_at = path.iter().position(|s| s == &graph.challenge)?;
    let decision = path.get(challenge_at + 1)?;
    if graph.desirable_path.first() == Some(decision) {
        Some(PathKind::Desirable)
    } else if graph.undesirable_paths.iter().any(|p| p.first() == Some(decision)) {
        Some(PathKind::Undesirable)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn ids(path: &[SectionId]) -> Vec<&str> {
        path.iter().map(|s| s.as_str()).collect()
    }

    #[test]
    fn two_option_story_has_two_paths() {
        let story = fixtures::two_option_story();
        let paths = enumerate_paths(&story).unwrap();
        assert_eq!(paths.len(), 2);
        assert_eq!(
            ids(&paths[0]),
            ["cover", "intro", "challenge", "d-decision", "d-consequence", "ending"]
        );
        assert_eq!(
            ids(&paths[1]),
            [
                "cover",
                "intro",
                "challenge",
                "u1-decision",
                "u1-consequence",
                "u1-repair",
                "u1-response",
                "u1-repaired",
                "ending"
            ]
        );
    }

    #[test]
    fn desirable_listed_first_even_when_not_first_option() {
        let mut story = fixtures::fire_truck_story();
        let challenge = story.graph.challenge.clone();
        story.graph.section_mut(&challenge).unwrap().next.rotate_right(1);
        let paths = enumerate_paths(&story).unwrap();
        assert_eq!(path_kind(&story.graph, &paths[0]), Some(PathKind::Desirable));
        // Remaining options keep their stored order.
        assert_eq!(paths[1][3].as_str(), "u2-decision");
        assert_eq!(paths[2][3].as_str(), "u1-decision");
    }

    #[test]
    fn no_branch_is_an_error() {
        let mut story = fixtures::fire_truck_story();
        let challenge = story.graph.challenge.clone();
        story.graph.section_mut(&challenge).unwrap().next.clear();
        assert_eq!(enumerate_paths(&story), Err(PathError::NoBranch(challenge)));
    }

    #[test]
    fn cycle_reports_offending_ids() {
        let mut story = fixtures::fire_truck_story();
        story.graph.section_mut(&"u1-response".into()).unwrap().next = vec!["u1-repair".into()];
        match enumerate_paths(&story) {
            Err(PathError::Cycle(set)) => {
                let got: Vec<_> = set.iter().map(|s| s.as_str()).collect();
                assert_eq!(got, ["u1-repair", "u1-response"]);
            }
            other => panic!("expected cycle, got {other:?}"),
        }
    }

    #[test]
    fn dangling_reference() {
        let mut story = fixtures::fire_truck_story();
        story.graph.section_mut(&"intro".into()).unwrap().next = vec!["ghost".into()];
        assert!(matches!(enumerate_paths(&story), Err(PathError::Dangling { .. })));
    }
}
