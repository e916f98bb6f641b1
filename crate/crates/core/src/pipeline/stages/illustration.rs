//! Illustration stages: scene descriptions, entity matching with scene
//! continuity, entity descriptions, and concurrent image generation.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use futures::future::join_all;
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::Semaphore;

use super::{exchange, Exchange, Outcome, StageContext, StageLog};
use crate::digest::ImageRef;
use crate::pipeline::artifacts::{
    roster_kind, EntityAssignment, EntityDescription, IllustrationPlan, Removal, RosterEntry, RosterKind,
    SceneDescription, SectionPlan,
};
use crate::pipeline::job::Verdict;
use crate::pipeline::prompts::{slots, Template};
use crate::pipeline::provider::{ImageRequest, Stage};
use crate::pipeline::{PipelineError, StageFailure};
use crate::story::{PathGraph, SectionId, Story};

fn story_text(story: &Story) -> String {
    story.graph.sections.iter().map(|s| format!("[{}] {}", s.id, s.text)).collect::<Vec<_>>().join("\n")
}

fn sections_json(story: &Story) -> Vec<Value> {
    story.graph.sections.iter().map(|s| json!({ "id": s.id, "kind": s.kind, "text": s.text })).collect()
}

/// Sections ordered so that every predecessor comes first; ties keep
/// document order.
pub(crate) fn topo_order(graph: &PathGraph) -> Vec<SectionId> {
    let mut indegree: HashMap<&SectionId, usize> = graph.sections.iter().map(|s| (&s.id, 0)).collect();
    for s in &graph.sections {
        for n in &s.next {
            if let Some(d) = indegree.get_mut(n) {
                *d += 1;
            }
        }
    }
    let mut done: BTreeSet<&SectionId> = BTreeSet::new();
    let mut out = Vec::with_capacity(graph.sections.len());
    while out.len() < graph.sections.len() {
        let Some(s) = graph.sections.iter().find(|s| !done.contains(&s.id) && indegree[&s.id] == 0) else {
            // Cycles never pass validation; fall back to document order.
            out.extend(graph.sections.iter().filter(|s| !done.contains(&s.id)).map(|s| s.id.clone()));
            break;
        };
        done.insert(&s.id);
        out.push(s.id.clone());
        for n in &s.next {
            if let Some(d) = indegree.get_mut(n) {
                *d = d.saturating_sub(1);
            }
        }
    }
    out
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneAnswer {
    scenes: Vec<SceneDescription>,
    roster: Vec<RosterEntry>,
}

/// Describes the scene of every section (or only `only`) and lists the
/// entities the illustrations need.
pub async fn generate_scene_descriptions(
    ctx: &StageContext<'_>,
    log: &mut StageLog,
    story: &Story,
    only: Option<&SectionId>,
) -> Result<(Vec<SceneDescription>, Vec<RosterEntry>), StageFailure> {
    let snap = &story.profile_snapshot;
    let persons: Vec<String> = std::iter::once(snap.child.name.clone())
        .chain(snap.persons.iter().map(|p| p.name.clone()))
        .collect();
    let places: Vec<String> = snap.places.iter().map(|p| p.name.clone()).collect();
    let interests: Vec<String> = story.interests.iter().map(|i| i.depicted_as.clone()).collect();
    let scope = match only {
        Some(id) => format!("Only describe section {id}; the other pages are already illustrated.\n"),
        None => String::new(),
    };
    let ex = Exchange {
        stage: Stage::SceneDescriptions,
        subject: only.map(|s| s.to_string()),
        template: &ctx.prompts.scene_descriptions,
        slots: slots([
            ("persons", persons.join(", ")),
            ("places", places.join(", ")),
            ("interests", interests.join(", ")),
            ("scope", scope),
            ("story", story_text(story)),
        ]),
        payload: json!({
            "title": story.title,
            "child": snap.child.name,
            "persons": persons,
            "places": snap.places.iter().map(|p| json!({"name": p.name, "description": p.description})).collect::<Vec<_>>(),
            "interests": story.interests,
            "sections": sections_json(story),
            "only_section": only,
        }),
        max_invalid: 2,
        feedback: None,
    };
    let expected: Vec<&SectionId> = match only {
        Some(id) => vec![id],
        None => story.graph.sections.iter().map(|s| &s.id).collect(),
    };
    let convert = |a: SceneAnswer| {
        let mut names = BTreeSet::new();
        for r in &a.roster {
            if !names.insert(r.name.to_lowercase()) {
                return Err(format!("roster lists {} twice", r.name));
            }
        }
        let got: Vec<&SectionId> = a.scenes.iter().map(|s| &s.section_id).collect();
        let mut want = expected.clone();
        let mut have = got.clone();
        want.sort();
        have.sort();
        if want != have {
            return Err("scenes must cover each requested section exactly once".to_string());
        }
        for scene in &a.scenes {
            if let Some(e) = scene.required_entities.iter().find(|e| roster_kind(&a.roster, e).is_none()) {
                return Err(format!("scene {} names {e}, which is not in the roster", scene.section_id));
            }
        }
        let order: HashMap<&SectionId, usize> = expected.iter().enumerate().map(|(i, s)| (*s, i)).collect();
        let mut scenes = a.scenes;
        scenes.sort_by_key(|s| order[&s.section_id]);
        Ok((scenes, a.roster))
    };
    match exchange(ctx, log, ex, convert).await? {
        Outcome::Valid(v) => Ok(v),
        Outcome::Invalid(reason) => Err(StageFailure::new(Stage::SceneDescriptions, reason)),
    }
}

fn canonical(roster: &[RosterEntry], name: &str) -> Option<String> {
    roster.iter().find(|r| r.name.eq_ignore_ascii_case(name.trim())).map(|r| r.name.clone())
}

fn place_in(assignment: &EntityAssignment, roster: &[RosterEntry]) -> Option<String> {
    assignment.entities.iter().find(|e| roster_kind(roster, e) == Some(RosterKind::Place)).cloned()
}

/// Carries predecessor entities into a continuing scene. A predecessor is
/// in the same scene unless both sections name a place and the places
/// differ. Entities the matcher removed with a reason are not carried.
pub fn apply_continuity(
    mut raw: EntityAssignment,
    predecessors: &[&EntityAssignment],
    roster: &[RosterEntry],
) -> EntityAssignment {
    let own_place = place_in(&raw, roster);
    for p in predecessors {
        let same_scene = match (&own_place, place_in(p, roster)) {
            (Some(a), Some(b)) => a.eq_ignore_ascii_case(&b),
            _ => true,
        };
        if !same_scene {
            continue;
        }
        for e in &p.entities {
            if !raw.contains(e) && !raw.justified_removal(e) {
                raw.entities.push(e.clone());
                raw.carried.push(e.clone());
            }
        }
    }
    raw
}

/// The place of every section: its own place entity, otherwise its first
/// predecessor's.
pub fn scene_places(
    graph: &PathGraph,
    assignments: &[EntityAssignment],
    roster: &[RosterEntry],
) -> BTreeMap<SectionId, Option<String>> {
    let by_id: HashMap<&SectionId, &EntityAssignment> = assignments.iter().map(|a| (&a.section_id, a)).collect();
    let mut out: BTreeMap<SectionId, Option<String>> = BTreeMap::new();
    for id in topo_order(graph) {
        let own = by_id.get(&id).and_then(|a| place_in(a, roster));
        let place = own.or_else(|| graph.predecessors(&id).first().and_then(|p| out.get(*p).cloned().flatten()));
        out.insert(id, place);
    }
    out
}

/// Edges `(from, to, entity)` where `to` continues the scene of `from` but
/// silently drops one of its entities.
pub fn continuity_violations(
    graph: &PathGraph,
    assignments: &[EntityAssignment],
    roster: &[RosterEntry],
) -> Vec<(SectionId, SectionId, String)> {
    let places = scene_places(graph, assignments, roster);
    let by_id: HashMap<&SectionId, &EntityAssignment> = assignments.iter().map(|a| (&a.section_id, a)).collect();
    let mut out = Vec::new();
    for s in &graph.sections {
        let Some(from) = by_id.get(&s.id) else { continue };
        for n in &s.next {
            let Some(to) = by_id.get(n) else { continue };
            let same = match (&places[&s.id], &places[n]) {
                (Some(a), Some(b)) => a.eq_ignore_ascii_case(b),
                (None, None) => true,
                _ => false,
            };
            if !same {
                continue;
            }
            for e in &from.entities {
                if !to.contains(e) && !to.justified_removal(e) {
                    out.push((s.id.clone(), n.clone(), e.clone()));
                }
            }
        }
    }
    out
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MatchAnswer {
    entities: Vec<String>,
    #[serde(default)]
    removed: Vec<Removal>,
}

pub(crate) async fn match_section(
    ctx: &StageContext<'_>,
    log: &mut StageLog,
    story: &Story,
    scene: &SceneDescription,
    roster: &[RosterEntry],
    predecessors: &[&EntityAssignment],
) -> Result<EntityAssignment, StageFailure> {
    let previous: Vec<Value> =
        predecessors.iter().map(|p| json!({ "section_id": p.section_id, "entities": p.entities })).collect();
    let roster_text = roster.iter().map(|r| format!("{} ({:?})", r.name, r.kind).to_lowercase()).collect::<Vec<_>>();
    let previous_text = predecessors
        .iter()
        .map(|p| format!("{}: {}", p.section_id, p.entities.join(", ")))
        .collect::<Vec<_>>()
        .join("; ");
    let ex = Exchange {
        stage: Stage::MatchEntities,
        subject: Some(scene.section_id.to_string()),
        template: &ctx.prompts.match_entities,
        slots: slots([
            ("section_id", scene.section_id.to_string()),
            ("roster", roster_text.join(", ")),
            ("previous", if previous_text.is_empty() { "none".into() } else { previous_text }),
            ("description", scene.description.clone()),
            ("story", story_text(story)),
        ]),
        payload: json!({
            "section_id": scene.section_id,
            "description": scene.description,
            "required_entities": scene.required_entities,
            "roster": roster,
            "previous": previous,
        }),
        max_invalid: 2,
        feedback: None,
    };
    let convert = |a: MatchAnswer| {
        let mut entities: Vec<String> = Vec::new();
        for name in a.entities.iter().chain(&scene.required_entities) {
            if let Some(c) = canonical(roster, name) {
                if !entities.contains(&c) {
                    entities.push(c);
                }
            }
        }
        Ok(EntityAssignment { section_id: scene.section_id.clone(), entities, carried: Vec::new(), removed: a.removed })
    };
    match exchange(ctx, log, ex, convert).await? {
        Outcome::Valid(raw) => Ok(apply_continuity(raw, predecessors, roster)),
        Outcome::Invalid(reason) => Err(StageFailure::new(Stage::MatchEntities, reason)),
    }
}

/// Assigns entities to every section in reading order, so each section sees
/// its predecessors' final assignments.
pub async fn match_entities(
    ctx: &StageContext<'_>,
    log: &mut StageLog,
    story: &Story,
    scenes: &[SceneDescription],
    roster: &[RosterEntry],
) -> Result<Vec<EntityAssignment>, StageFailure> {
    let by_id: HashMap<&SectionId, &SceneDescription> = scenes.iter().map(|s| (&s.section_id, s)).collect();
    let mut done: HashMap<SectionId, EntityAssignment> = HashMap::new();
    for id in topo_order(&story.graph) {
        let Some(scene) = by_id.get(&id) else { continue };
        let preds: Vec<&EntityAssignment> =
            story.graph.predecessors(&id).into_iter().filter_map(|p| done.get(p)).collect();
        let assignment = match_section(ctx, log, story, scene, roster, &preds).await?;
        done.insert(id, assignment);
    }
    Ok(story.graph.sections.iter().filter_map(|s| done.remove(&s.id)).collect())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Described {
    name: String,
    #[serde(default)]
    appearance: String,
    #[serde(default)]
    outfit_context: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DescribeAnswer {
    entities: Vec<Described>,
}

/// One description per roster entry. Profile photos are attached; entities
/// without one get generated appearance text.
pub async fn describe_entities(
    ctx: &StageContext<'_>,
    log: &mut StageLog,
    story: &Story,
    roster: &[RosterEntry],
) -> Result<Vec<EntityDescription>, StageFailure> {
    if roster.is_empty() {
        return Ok(Vec::new());
    }
    let snap = &story.profile_snapshot;
    let photo_of = |name: &str| {
        if snap.child.name.eq_ignore_ascii_case(name) {
            snap.child.photo.clone()
        } else {
            snap.find(name).and_then(|e| e.photo.clone())
        }
    };
    let entities: Vec<Value> = roster
        .iter()
        .map(|r| {
            let profile = snap.find(&r.name);
            json!({
                "name": r.name,
                "kind": r.kind,
                "in_profile": snap.knows(&r.name),
                "has_photo": photo_of(&r.name).is_some(),
                "description": profile.and_then(|e| e.description.clone()),
                "relation": profile.and_then(|e| e.relation.clone()),
            })
        })
        .collect();
    let listing = roster
        .iter()
        .map(|r| {
            let photo = if photo_of(&r.name).is_some() { ", has photo" } else { "" };
            format!("- {} ({:?}{photo})", r.name, r.kind).to_lowercase()
        })
        .collect::<Vec<_>>()
        .join("\n");
    let ex = Exchange {
        stage: Stage::DescribeEntities,
        subject: None,
        template: &ctx.prompts.describe_entities,
        slots: slots([("entities", listing), ("story", story_text(story))]),
        payload: json!({ "entities": entities, "sections": sections_json(story) }),
        max_invalid: 2,
        feedback: None,
    };
    let convert = |a: DescribeAnswer| {
        let mut out = Vec::with_capacity(roster.len());
        for r in roster {
            let matches: Vec<&Described> = a.entities.iter().filter(|d| d.name.eq_ignore_ascii_case(&r.name)).collect();
            let [d] = matches.as_slice() else {
                return Err(format!("{} must be described exactly once", r.name));
            };
            let photo = photo_of(&r.name);
            let mut appearance = d.appearance.trim().to_string();
            if appearance.is_empty() && photo.is_none() {
                appearance = snap.find(&r.name).and_then(|e| e.description.clone()).unwrap_or_default();
                if appearance.is_empty() {
                    return Err(format!("{} has no photo and needs an appearance", r.name));
                }
            }
            let outfit_context = match r.kind {
                RosterKind::Person => d.outfit_context.clone().filter(|o| !o.trim().is_empty()),
                _ => None,
            };
            out.push(EntityDescription { name: r.name.clone(), kind: r.kind, appearance, photo, outfit_context });
        }
        if a.entities.len() != roster.len() {
            return Err("described entities must match the roster".to_string());
        }
        Ok(out)
    };
    match exchange(ctx, log, ex, convert).await? {
        Outcome::Valid(v) => Ok(v),
        Outcome::Invalid(reason) => Err(StageFailure::new(Stage::DescribeEntities, reason)),
    }
}

/// Assembles the image prompt for one section. Entities appear in
/// assignment order; reference photos follow the same order without
/// repeats.
pub fn illustration_request(
    template: &Template,
    scene: &SceneDescription,
    assignment: &EntityAssignment,
    descriptions: &[EntityDescription],
) -> ImageRequest {
    let mut references: Vec<ImageRef> = Vec::new();
    let mut lines = Vec::new();
    for name in &assignment.entities {
        let Some(d) = descriptions.iter().find(|d| d.name.eq_ignore_ascii_case(name)) else {
            lines.push(format!("- {name}"));
            continue;
        };
        let kind = format!("{:?}", d.kind).to_lowercase();
        let mut line = format!("- {} ({kind})", d.name);
        if !d.appearance.is_empty() {
            line.push_str(": ");
            line.push_str(d.appearance.trim_end());
            if !line.ends_with(['.', '!', '?']) {
                line.push('.');
            }
        }
        if let Some(o) = &d.outfit_context {
            line.push_str(&format!(" Outfit: {o}."));
        }
        if let Some(p) = &d.photo {
            if !references.contains(p) {
                references.push(p.clone());
            }
            let n = references.iter().position(|r| r == p).unwrap() + 1;
            line.push_str(&format!(" Looks like reference photo {n}."));
        }
        lines.push(line);
    }
    let refs = if references.is_empty() {
        "none".to_string()
    } else {
        references.iter().enumerate().map(|(i, r)| format!("{}. {r}", i + 1)).collect::<Vec<_>>().join(", ")
    };
    let prompt = template
        .render(&slots([
            ("scene", scene.description.clone()),
            ("entities", if lines.is_empty() { "none".into() } else { lines.join("\n") }),
            ("references", refs),
        ]))
        .expect("illustrate template slots are fixed");
    ImageRequest { section_id: scene.section_id.to_string(), prompt, reference_photos: references }
}

struct ImageAttempt {
    attempt: u32,
    digest: String,
    result: Result<ImageRef, String>,
}

async fn image_with_retries(ctx: &StageContext<'_>, request: ImageRequest, first_attempt: u32) -> Vec<ImageAttempt> {
    let digest = request.digest();
    let mut out = Vec::new();
    for attempt in first_attempt..=ctx.options.max_attempts {
        let result = ctx.providers.image.generate(&request).await.map_err(|e| e.to_string());
        let ok = result.is_ok();
        out.push(ImageAttempt { attempt, digest: digest.clone(), result });
        if ok {
            break;
        }
    }
    out
}

fn settle(log: &mut StageLog, section: &SectionId, attempts: Vec<ImageAttempt>) -> ImageRef {
    let mut final_ref = None;
    let mut last = 0;
    for a in attempts {
        last = a.attempt;
        match a.result {
            Ok(r) => {
                log.record(Stage::Illustrate, Some(section.as_str()), a.attempt, a.digest, json!(r), Verdict::Accepted);
                final_ref = Some(r);
            }
            Err(e) => log.record(Stage::Illustrate, Some(section.as_str()), a.attempt, a.digest, Value::Null, Verdict::Rejected(e)),
        }
    }
    final_ref.unwrap_or_else(|| {
        let warning = format!("placeholder-image:{section}");
        log.record(Stage::Illustrate, Some(section.as_str()), last, String::new(), Value::Null, Verdict::Warning(warning.clone()));
        log.warn(warning);
        ImageRef::placeholder(section.as_str())
    })
}

/// Images one section, retrying and falling back to a placeholder.
pub async fn generate_illustration(
    ctx: &StageContext<'_>,
    log: &mut StageLog,
    scene: &SceneDescription,
    assignment: &EntityAssignment,
    descriptions: &[EntityDescription],
) -> ImageRef {
    let request = illustration_request(&ctx.prompts.illustrate, scene, assignment, descriptions);
    let first = log.attempts(Stage::Illustrate, Some(scene.section_id.as_str())) + 1;
    let attempts = image_with_retries(ctx, request, first).await;
    settle(log, &scene.section_id, attempts)
}

/// Images every planned section concurrently, at most
/// `image_concurrency` requests in flight.
pub async fn generate_illustrations(
    ctx: &StageContext<'_>,
    log: &mut StageLog,
    plan: &IllustrationPlan,
) -> BTreeMap<SectionId, ImageRef> {
    let limit = Arc::new(Semaphore::new(ctx.options.image_concurrency.max(1)));
    let jobs = plan.sections.iter().map(|p| {
        let request = illustration_request(&ctx.prompts.illustrate, &p.scene, &p.assignment, &plan.entities);
        let first = log.attempts(Stage::Illustrate, Some(p.section_id.as_str())) + 1;
        let limit = Arc::clone(&limit);
        async move {
            let _permit = limit.acquire_owned().await.expect("semaphore is never closed");
            image_with_retries(ctx, request, first).await
        }
    });
    let results = join_all(jobs).await;
    plan.sections
        .iter()
        .zip(results)
        .map(|(p, attempts)| (p.section_id.clone(), settle(log, &p.section_id, attempts)))
        .collect()
}

#[derive(Debug, Clone)]
pub struct Regenerated {
    pub story: Story,
    pub image: ImageRef,
    /// True when the cached preprocessing was reused as is.
    pub reused_cache: bool,
}

/// Re-images one section. Cached preprocessing is reused unless the
/// section text changed since it was built; then scene, matching, and any
/// new entity descriptions are redone for that section alone.
pub async fn regenerate_illustration(
    ctx: &StageContext<'_>,
    log: &mut StageLog,
    story: &Story,
    section_id: &SectionId,
) -> Result<Regenerated, PipelineError> {
    let section = story.graph.section(section_id).ok_or_else(|| PipelineError::NoSuchSection(section_id.to_string()))?;
    let mut plan = story.preprocessing.clone().ok_or(PipelineError::NotIllustrated)?;
    let digest = section.text_digest();
    let fresh = plan.section(section_id).is_some_and(|p| !p.stale && p.text_digest == digest);

    if !fresh {
        let (scenes, roster) = generate_scene_descriptions(ctx, log, story, Some(section_id)).await?;
        let scene = scenes.into_iter().next().expect("scoped scene answer has one scene");
        for r in roster {
            if plan.roster_kind(&r.name).is_none() {
                plan.roster.push(r);
            }
        }
        let preds: Vec<&EntityAssignment> = story
            .graph
            .predecessors(section_id)
            .into_iter()
            .filter_map(|p| plan.section(p).map(|sp| &sp.assignment))
            .collect();
        let assignment = match_section(ctx, log, story, &scene, &plan.roster, &preds).await?;
        let missing: Vec<RosterEntry> = assignment
            .entities
            .iter()
            .filter(|e| plan.entity(e).is_none())
            .filter_map(|e| plan.roster.iter().find(|r| r.name.eq_ignore_ascii_case(e)).cloned())
            .collect();
        if !missing.is_empty() {
            plan.entities.extend(describe_entities(ctx, log, story, &missing).await?);
        }
        let entry = SectionPlan { section_id: section_id.clone(), text_digest: digest, stale: false, scene, assignment };
        match plan.section_mut(section_id) {
            Some(p) => *p = entry,
            None => plan.sections.push(entry),
        }
    }

    let sp = plan.section(section_id).expect("plan entry exists");
    let image = generate_illustration(ctx, log, &sp.scene, &sp.assignment, &plan.entities).await;
    let mut out = story.clone();
    if let Some(s) = out.graph.section_mut(section_id) {
        s.illustration = Some(image.clone());
    }
    out.preprocessing = Some(plan);
    Ok(Regenerated { story: out, image, reused_cache: fresh })
}
