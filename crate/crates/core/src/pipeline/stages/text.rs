//! Text stages: classify, generate, validate content, refine, translate.

use std::collections::BTreeSet;

use serde::Deserialize;
use serde_json::{json, Value};

use super::{exchange, Exchange, Outcome, StageContext, StageLog};
use crate::digest::digest_json;
use crate::pipeline::fewshot::FewShotBank;
use crate::pipeline::job::{GenerationRequest, Verdict};
use crate::pipeline::prompts::slots;
use crate::pipeline::provider::Stage;
use crate::pipeline::StageFailure;
use crate::profile::{ChildProfile, ProfileEntity};
use crate::readability::{assess_section, assess_title, SectionAssessment, SimplificationReason};
use crate::story::{
    validate_with, EmotionCue, InterestUse, Language, PathGraph, Section, SectionId, SectionKind, Story,
    TargetBehavior, TopicType,
};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TopicAnswer {
    topic_type: String,
}

pub async fn classify_topic(
    ctx: &StageContext<'_>,
    log: &mut StageLog,
    behavior: &str,
) -> Result<TopicType, StageFailure> {
    if behavior.trim().is_empty() {
        return Err(StageFailure::new(Stage::Classify, "empty target behavior"));
    }
    let ex = Exchange {
        stage: Stage::Classify,
        subject: None,
        template: &ctx.prompts.classify,
        slots: slots([("behavior", behavior.to_string())]),
        payload: json!({ "behavior": behavior }),
        max_invalid: 2,
        feedback: None,
    };
    let convert = |a: TopicAnswer| {
        TopicType::parse(&a.topic_type).ok_or_else(|| format!("unknown topic type {:?}", a.topic_type))
    };
    match exchange(ctx, log, ex, convert).await? {
        Outcome::Valid(t) => Ok(t),
        Outcome::Invalid(reason) => Err(StageFailure::new(Stage::Classify, reason)),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DraftSection {
    id: String,
    kind: SectionKind,
    text: String,
    #[serde(default)]
    emotion_cues: Vec<EmotionCue>,
    #[serde(default)]
    speaker: Option<String>,
    #[serde(default)]
    next: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Draft {
    title: String,
    #[serde(default)]
    persons: Vec<String>,
    #[serde(default)]
    places: Vec<String>,
    #[serde(default)]
    interest_depictions: Vec<InterestUse>,
    sections: Vec<DraftSection>,
    desirable: Vec<String>,
    undesirable: Vec<Vec<String>>,
}

fn entity_json(e: &ProfileEntity) -> Value {
    json!({ "name": e.name, "relation": e.relation, "description": e.description })
}

fn listing(entities: &[&ProfileEntity]) -> String {
    entities
        .iter()
        .map(|e| match &e.relation {
            Some(r) => format!("{} ({r})", e.name),
            None => e.name.clone(),
        })
        .collect::<Vec<_>>()
        .join(", ")
}

/// Word-bounded, case-insensitive containment.
pub(crate) fn mentions(text: &str, name: &str) -> bool {
    let hay = text.to_lowercase();
    let needle = name.to_lowercase();
    if needle.is_empty() {
        return false;
    }
    hay.match_indices(&needle).any(|(i, _)| {
        let before = hay[..i].chars().next_back();
        let after = hay[i + needle.len()..].chars().next();
        !before.is_some_and(char::is_alphanumeric) && !after.is_some_and(char::is_alphanumeric)
    })
}

fn selected_interests(request: &GenerationRequest) -> Vec<&ProfileEntity> {
    request.interests.iter().filter_map(|name| request.profile.interests.iter().find(|e| e.name.eq_ignore_ascii_case(name))).collect()
}

/// Generates a draft and checks it structurally. `feedback` carries the
/// content validator's rejection when this is a regeneration.
pub async fn generate_story_draft(
    ctx: &StageContext<'_>,
    log: &mut StageLog,
    topic: TopicType,
    request: &GenerationRequest,
    story_id: &str,
    feedback: Option<String>,
) -> Result<Story, StageFailure> {
    let interests = selected_interests(request);
    if interests.is_empty() {
        return Err(StageFailure::new(Stage::Generate, "no interest selected"));
    }
    let profile = &request.profile;
    let persons: Vec<&ProfileEntity> = profile.persons.iter().collect();
    let places: Vec<&ProfileEntity> = profile.places.iter().collect();
    let ex = Exchange {
        stage: Stage::Generate,
        subject: None,
        template: ctx.prompts.generate_for(topic),
        slots: slots([
            ("child", profile.child.name.clone()),
            ("behavior", request.target_behavior.clone()),
            ("interests", listing(&interests)),
            ("persons", listing(&persons)),
            ("places", listing(&places)),
        ]),
        payload: json!({
            "topic": topic,
            "child": profile.child.name,
            "behavior": request.target_behavior,
            "interests": interests.iter().map(|e| entity_json(e)).collect::<Vec<_>>(),
            "persons": persons.iter().map(|e| entity_json(e)).collect::<Vec<_>>(),
            "places": places.iter().map(|e| entity_json(e)).collect::<Vec<_>>(),
            "seed": ctx.options.seed,
        }),
        max_invalid: ctx.options.max_attempts,
        feedback,
    };
    let convert = |d: Draft| assemble_draft(ctx, d, topic, request, story_id);
    match exchange(ctx, log, ex, convert).await? {
        Outcome::Valid(story) => Ok(story),
        Outcome::Invalid(reason) => Err(StageFailure::new(Stage::Generate, reason)),
    }
}

fn assemble_draft(
    ctx: &StageContext<'_>,
    draft: Draft,
    topic: TopicType,
    request: &GenerationRequest,
    story_id: &str,
) -> Result<Story, String> {
    let profile = &request.profile;
    let find_kind = |list: &[ProfileEntity], name: &str| list.iter().any(|e| e.name.eq_ignore_ascii_case(name));
    for p in &draft.persons {
        if !find_kind(&profile.persons, p) {
            return Err(format!("person {p:?} is not in the profile"));
        }
    }
    for p in &draft.places {
        if !find_kind(&profile.places, p) {
            return Err(format!("place {p:?} is not in the profile"));
        }
    }

    let id_of = |kind: SectionKind| draft.sections.iter().find(|s| s.kind == kind).map(|s| SectionId::new(&s.id));
    let root = id_of(SectionKind::Cover).ok_or("draft has no cover section")?;
    let challenge = id_of(SectionKind::Challenge).ok_or("draft has no challenge section")?;
    let ending = id_of(SectionKind::Ending).ok_or("draft has no ending section")?;
    let all_text: String = std::iter::once(draft.title.as_str())
        .chain(draft.sections.iter().map(|s| s.text.as_str()))
        .collect::<Vec<_>>()
        .join("\n");

    let interests: Vec<InterestUse> = selected_interests(request)
        .into_iter()
        .map(|e| {
            draft
                .interest_depictions
                .iter()
                .find(|d| d.interest.eq_ignore_ascii_case(&e.name))
                .map(|d| InterestUse { interest: e.name.clone(), depicted_as: d.depicted_as.clone() })
                .unwrap_or_else(|| InterestUse { interest: e.name.clone(), depicted_as: e.name.clone() })
        })
        .collect();

    // Snapshot: declared entities, plus any profile entity the text names.
    let keep = |e: &ProfileEntity, declared: &[String]| {
        declared.iter().any(|d| d.eq_ignore_ascii_case(&e.name)) || mentions(&all_text, &e.name)
    };
    let snapshot = ChildProfile {
        id: profile.id.clone(),
        child: profile.child.clone(),
        interests: profile
            .interests
            .iter()
            .filter(|e| interests.iter().any(|i| i.interest == e.name))
            .cloned()
            .collect(),
        persons: profile.persons.iter().filter(|e| keep(e, &draft.persons)).cloned().collect(),
        places: profile.places.iter().filter(|e| keep(e, &draft.places)).cloned().collect(),
    };

    let sections: Vec<Section> = draft
        .sections
        .into_iter()
        .map(|s| {
            let text = if s.kind == SectionKind::Cover && s.text.trim().is_empty() { draft.title.clone() } else { s.text };
            Section {
                id: SectionId::new(s.id),
                kind: s.kind,
                text,
                translation: None,
                illustration: None,
                emotion_cues: s.emotion_cues,
                speaker: s.speaker.filter(|v| !v.trim().is_empty()),
                next: s.next.into_iter().map(SectionId::new).collect(),
            }
        })
        .collect();

    for s in sections.iter().filter(|s| s.kind == SectionKind::Repair) {
        let speaker = s.speaker.as_deref().ok_or_else(|| format!("repair section {} has no speaker", s.id))?;
        if speaker.eq_ignore_ascii_case(&profile.child.name) {
            return Err(format!("repair section {} must be spoken by someone other than the child", s.id));
        }
        if topic == TopicType::HealthyHabits && profile.persons.iter().any(ProfileEntity::is_caregiver) {
            let caregiver = profile.find(speaker).is_some_and(ProfileEntity::is_caregiver);
            if !caregiver {
                return Err(format!("repair section {} should be spoken by a parent or caregiver", s.id));
            }
        }
    }

    let story = Story {
        id: story_id.to_string(),
        version: 1,
        title: draft.title,
        topic_type: topic,
        target_behavior: TargetBehavior { text: request.target_behavior.clone(), classified_type: topic },
        interests,
        profile_snapshot: snapshot,
        graph: PathGraph {
            sections,
            root,
            challenge,
            ending,
            desirable_path: draft.desirable.into_iter().map(SectionId::new).collect(),
            undesirable_paths: draft
                .undesirable
                .into_iter()
                .map(|p| p.into_iter().map(SectionId::new).collect())
                .collect(),
        },
        reward_sticker: request.reward_sticker.clone(),
        language: Language::default(),
        created_at: ctx.options.timestamp(),
        edit_log: Vec::new(),
        preprocessing: None,
    };
    let report = validate_with(&story, &ctx.options.validation);
    if !report.is_valid() {
        let problems: Vec<String> = report.violations.iter().map(|v| format!("{}: {}", v.rule, v.message)).collect();
        return Err(format!("structure: {}", problems.join("; ")));
    }
    Ok(story)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ContentVerdict {
    Pass,
    /// `criterion` is `None` when the judgment could not be read.
    Fail { criterion: Option<u8>, rationale: String },
}

impl ContentVerdict {
    pub fn passed(&self) -> bool {
        matches!(self, ContentVerdict::Pass)
    }

    pub fn reason(&self) -> String {
        match self {
            ContentVerdict::Pass => String::new(),
            ContentVerdict::Fail { criterion: Some(c), rationale } => format!("criterion {c}: {rationale}"),
            ContentVerdict::Fail { criterion: None, rationale } => rationale.clone(),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Criterion {
    criterion: u8,
    pass: bool,
    #[serde(default)]
    rationale: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Judgment {
    criteria: Vec<Criterion>,
}

fn story_listing(story: &Story) -> String {
    story
        .graph
        .sections
        .iter()
        .map(|s| format!("[{} {}] {}", s.kind, s.id, s.text))
        .collect::<Vec<_>>()
        .join("\n")
}

fn story_payload(story: &Story) -> Value {
    json!({
        "title": story.title,
        "child": story.child_name(),
        "topic": story.topic_type,
        "interests": story.interests,
        "sections": story.graph.sections.iter().map(|s| json!({"id": s.id, "kind": s.kind, "text": s.text})).collect::<Vec<_>>(),
    })
}

/// Judges the three content criteria. Interest integration is checked in
/// code first and costs no provider call when it fails.
pub async fn validate_content(
    ctx: &StageContext<'_>,
    log: &mut StageLog,
    story: &Story,
) -> Result<ContentVerdict, StageFailure> {
    let text = story.full_text();
    if let Some(missing) =
        story.interests.iter().find(|i| !mentions(&text, &i.interest) && !mentions(&text, &i.depicted_as))
    {
        let verdict = ContentVerdict::Fail {
            criterion: Some(2),
            rationale: format!("the interest {} never appears in the story", missing.interest),
        };
        let attempt = log.attempts(Stage::ValidateContent, None) + 1;
        log.record(
            Stage::ValidateContent,
            None,
            attempt,
            digest_json(&story_payload(story)),
            json!({ "precheck": "interest-integration" }),
            Verdict::Rejected(verdict.reason()),
        );
        return Ok(verdict);
    }
    let interests = story.interests.iter().map(|i| format!("{} ({})", i.interest, i.depicted_as)).collect::<Vec<_>>();
    let ex = Exchange {
        stage: Stage::ValidateContent,
        subject: None,
        template: &ctx.prompts.validate_content,
        slots: slots([("interests", interests.join(", ")), ("story", story_listing(story))]),
        payload: story_payload(story),
        max_invalid: 1,
        feedback: None,
    };
    let convert = |j: Judgment| {
        let ids: BTreeSet<u8> = j.criteria.iter().map(|c| c.criterion).collect();
        if ids != BTreeSet::from([1, 2, 3]) || j.criteria.len() != 3 {
            return Err("judgment must cover criteria 1, 2 and 3 once each".to_string());
        }
        let mut sorted = j.criteria;
        sorted.sort_by_key(|c| c.criterion);
        Ok(sorted
            .into_iter()
            .find(|c| !c.pass)
            .map(|c| ContentVerdict::Fail { criterion: Some(c.criterion), rationale: c.rationale })
            .unwrap_or(ContentVerdict::Pass))
    };
    let verdict = match exchange(ctx, log, ex, convert).await? {
        Outcome::Valid(v) => v,
        Outcome::Invalid(_) => ContentVerdict::Fail { criterion: None, rationale: "unjudgeable".into() },
    };
    if let (ContentVerdict::Fail { .. }, Some(last)) = (&verdict, log.records.last_mut()) {
        if last.stage == Stage::ValidateContent && last.verdict.is_accepted() {
            last.verdict = Verdict::Rejected(verdict.reason());
        }
    }
    Ok(verdict)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RefinedText {
    text: String,
}

fn assess(ctx: &StageContext<'_>, kind: SectionKind, text: &str, exempt: &[String]) -> SectionAssessment {
    let config = &ctx.options.assessment;
    if kind == SectionKind::Cover {
        assess_title(text, ctx.lexicon, exempt, config)
    } else {
        assess_section(text, ctx.lexicon, exempt, config)
    }
}

fn reasons_of(a: &SectionAssessment) -> &[SimplificationReason] {
    match a {
        SectionAssessment::Pass { .. } => &[],
        SectionAssessment::NeedsSimplification { reasons } => reasons,
    }
}

/// Rewrites every section that fails the readability assessment. Only
/// `text` changes; a section that never passes keeps its original text and
/// adds an `unrefined-section:<id>` warning.
pub async fn refine_text(ctx: &StageContext<'_>, log: &mut StageLog, story: &Story) -> Result<Story, StageFailure> {
    let mut out = story.clone();
    let exempt = story.exemptions();
    for index in 0..out.graph.sections.len() {
        let section = &out.graph.sections[index];
        let (id, kind, original) = (section.id.clone(), section.kind, section.text.clone());
        let first = assess(ctx, kind, &original, &exempt);
        if first.passes() {
            continue;
        }
        let mut reasons = reasons_of(&first).to_vec();
        let mut accepted = None;
        let mut feedback: Option<String> = None;
        while log.attempts(Stage::Refine, Some(id.as_str())) < ctx.options.max_attempts {
            let flagged: Vec<String> = reasons
                .iter()
                .flat_map(|r| match r {
                    SimplificationReason::Vocabulary { words } => words.iter().map(|w| w.word.clone()).collect(),
                    _ => Vec::new(),
                })
                .collect();
            let ex = Exchange {
                stage: Stage::Refine,
                subject: Some(id.to_string()),
                template: &ctx.prompts.refine,
                slots: slots([
                    ("kind", kind.to_string()),
                    ("exempt", exempt.join(", ")),
                    ("reasons", reasons.iter().map(|r| format!("- {}", r.describe())).collect::<Vec<_>>().join("\n")),
                    ("text", original.clone()),
                ]),
                payload: json!({
                    "section_id": id,
                    "kind": kind,
                    "text": original,
                    "exempt": exempt,
                    "reasons": reasons.iter().map(|r| r.code()).collect::<Vec<_>>(),
                    "flagged": flagged,
                    "grade_cap": ctx.options.assessment.grade_cap,
                }),
                max_invalid: 1,
                feedback: feedback.clone(),
            };
            let convert = |r: RefinedText| {
                let text = r.text.trim().to_string();
                if text.is_empty() {
                    return Err("empty text".to_string());
                }
                let verdict = assess(ctx, kind, &text, &exempt);
                if verdict.passes() {
                    Ok(text)
                } else {
                    Err(format!(
                        "still needs simplification: {}",
                        reasons_of(&verdict).iter().map(|r| r.describe()).collect::<Vec<_>>().join("; ")
                    ))
                }
            };
            match exchange(ctx, log, ex, convert).await {
                Ok(Outcome::Valid(text)) => {
                    accepted = Some(text);
                    break;
                }
                Ok(Outcome::Invalid(reason)) => {
                    feedback = Some(reason);
                    if let Some(last) = log.records.last() {
                        if let Some(t) = last.output.get("text").and_then(Value::as_str) {
                            let again = assess(ctx, kind, t, &exempt);
                            if !again.passes() {
                                reasons = reasons_of(&again).to_vec();
                            }
                        }
                    }
                }
                Err(_) => break,
            }
        }
        match accepted {
            Some(text) => {
                if kind == SectionKind::Cover && out.title == original {
                    out.title = text.clone();
                }
                out.graph.sections[index].text = text;
            }
            None => {
                let attempt = log.attempts(Stage::Refine, Some(id.as_str()));
                let warning = format!("unrefined-section:{id}");
                log.record(
                    Stage::Refine,
                    Some(id.as_str()),
                    attempt,
                    String::new(),
                    Value::Null,
                    Verdict::Warning(warning.clone()),
                );
                log.warn(warning);
            }
        }
    }
    Ok(out)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TranslatedSection {
    id: String,
    text: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TranslatedStory {
    sections: Vec<TranslatedSection>,
}

#[derive(Debug, Clone)]
pub struct Translation {
    pub story: Story,
    /// Bank indices used as few-shot examples, most similar first.
    pub examples: Vec<usize>,
}

/// Translates every section. The `k` bank samples most similar to the whole
/// story are included as examples.
pub async fn translate_story(
    ctx: &StageContext<'_>,
    log: &mut StageLog,
    story: &Story,
    bank: &FewShotBank,
) -> Result<Translation, StageFailure> {
    let k = ctx.options.few_shot_k;
    if bank.len() < k {
        log.warn(format!("fewshot-bank-smaller-than-k: {} < {k}", bank.len()));
    }
    let text = story.graph.sections.iter().map(|s| s.text.as_str()).collect::<Vec<_>>().join("\n");
    let query = ctx
        .providers
        .embedding
        .embed(&text)
        .await
        .map_err(|e| StageFailure::new(Stage::Translate, e.to_string()))?;
    let examples = bank.top_k(&query, k);
    let pairs: Vec<Value> = examples
        .iter()
        .map(|&i| {
            let s = &bank.samples()[i];
            json!({ "source": s.source, "translation": s.translation })
        })
        .collect();
    let example_text = examples
        .iter()
        .map(|&i| {
            let s = &bank.samples()[i];
            format!("English: {}\nTranslation: {}", s.source, s.translation)
        })
        .collect::<Vec<_>>()
        .join("\n\n");
    let target = &ctx.options.target_language;
    let sections: Vec<Value> = story.graph.sections.iter().map(|s| json!({ "id": s.id, "text": s.text })).collect();
    let ex = Exchange {
        stage: Stage::Translate,
        subject: None,
        template: &ctx.prompts.translate,
        slots: slots([
            ("target_language", target.clone()),
            ("examples", if example_text.is_empty() { "(none)".to_string() } else { example_text }),
            ("sections", story_listing(story)),
        ]),
        payload: json!({ "target_language": target, "examples": pairs, "sections": sections }),
        max_invalid: 2,
        feedback: None,
    };
    let expected: BTreeSet<&str> = story.graph.sections.iter().map(|s| s.id.as_str()).collect();
    let convert = |t: TranslatedStory| {
        let got: BTreeSet<&str> = t.sections.iter().map(|s| s.id.as_str()).collect();
        if got != expected || t.sections.len() != expected.len() {
            return Err("translation must contain every section id exactly once".to_string());
        }
        if let Some(s) = t.sections.iter().find(|s| s.text.trim().is_empty()) {
            return Err(format!("section {} has an empty translation", s.id));
        }
        Ok(t.sections.into_iter().map(|s| (s.id, s.text)).collect::<Vec<_>>())
    };
    let translated = match exchange(ctx, log, ex, convert).await? {
        Outcome::Valid(v) => v,
        Outcome::Invalid(reason) => return Err(StageFailure::new(Stage::Translate, reason)),
    };
    let mut out = story.clone();
    for (id, text) in translated {
        if let Some(s) = out.graph.section_mut(&SectionId::new(id)) {
            s.translation = Some(text);
        }
    }
    out.language.translation = Some(target.clone());
    Ok(Translation { story: out, examples })
}
