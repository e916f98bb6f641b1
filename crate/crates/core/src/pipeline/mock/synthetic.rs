//! Payload-driven answers for every text stage.
//!
//! The first draft of every story deliberately uses one C1 word so the
//! refinement stage always has work to do.

use serde_json::{json, Value};

use crate::pipeline::provider::{Stage, TextRequest};
use crate::profile::is_caregiver_relation;
use crate::readability::fkgl;
use crate::story::TopicType;

fn s<'a>(v: &'a Value, key: &str) -> &'a str {
    v.get(key).and_then(Value::as_str).unwrap_or("")
}

fn arr<'a>(v: &'a Value, key: &str) -> &'a [Value] {
    v.get(key).and_then(Value::as_array).map(Vec::as_slice).unwrap_or(&[])
}

pub fn respond(request: &TextRequest) -> Value {
    let p = &request.payload;
    match request.stage {
        Stage::Classify => json!({ "topic_type": classify(s(p, "behavior")).as_str() }),
        Stage::Generate => generate(p),
        Stage::ValidateContent => judge(p),
        Stage::Refine => json!({ "text": refine(p) }),
        Stage::Translate => translate(p),
        Stage::SceneDescriptions => scenes(p),
        Stage::MatchEntities => json!({ "entities": p.get("required_entities").cloned().unwrap_or(json!([])), "removed": [] }),
        Stage::DescribeEntities => describe(p),
        Stage::Illustrate => json!({}),
    }
}

const HEALTH_WORDS: &[&str] = &[
    "wash", "hand", "brush", "teeth", "bed", "sleep", "eat", "meal", "bath", "toilet", "dress", "vegetable",
    "healthy", "nap", "shower",
];
const RULE_WORDS: &[&str] = &[
    "calm", "quiet", "church", "prayer", "line", "wait", "bell", "library", "seat", "rule", "sit", "class",
    "temple", "store", "bus",
];
const RELATION_WORDS: &[&str] =
    &["friend", "share", "turn", "ask", "permission", "play", "help", "sorry", "toy", "greet", "hello", "together"];

fn classify(behavior: &str) -> TopicType {
    let b = behavior.to_lowercase();
    let score = |words: &[&str]| words.iter().filter(|w| b.contains(*w)).count();
    let scored = [
        (score(RELATION_WORDS), TopicType::Relationship),
        (score(RULE_WORDS), TopicType::SocialRules),
        (score(HEALTH_WORDS), TopicType::HealthyHabits),
    ];
    scored.iter().filter(|(n, _)| *n > 0).max_by_key(|(n, _)| *n).map(|(_, t)| *t).unwrap_or(TopicType::Relationship)
}

/// How an interest appears as a drawable object.
pub fn depiction_for(interest: &str) -> String {
    match interest.to_lowercase().as_str() {
        "firefighter" | "firefighters" | "fire trucks" => "fire truck toy".into(),
        "whales" | "whale" => "whale book".into(),
        "swimming" => "swim bag".into(),
        "dinosaurs" | "dinosaur" => "dinosaur toy".into(),
        "trains" | "train" => "toy train".into(),
        "cars" | "car" => "toy car".into(),
        _ => interest.to_string(),
    }
}

/// Noun phrase for an object: proper names stand alone, others take "the".
fn the(obj: &str) -> String {
    if obj.chars().next().is_some_and(char::is_uppercase) {
        obj.to_string()
    } else {
        format!("the {obj}")
    }
}

struct Person {
    name: String,
    relation: String,
}

fn people(p: &Value) -> Vec<Person> {
    arr(p, "persons")
        .iter()
        .map(|e| Person { name: s(e, "name").to_string(), relation: s(e, "relation").to_lowercase() })
        .filter(|e| !e.name.is_empty())
        .collect()
}

fn pick<T>(items: &[T], seed: u64) -> Option<&T> {
    if items.is_empty() {
        None
    } else {
        items.get((seed % items.len() as u64) as usize)
    }
}

fn place_for(p: &Value, preferred: &[&str], seed: u64) -> String {
    let places: Vec<&str> = arr(p, "places").iter().map(|e| s(e, "name")).filter(|n| !n.is_empty()).collect();
    let matching: Vec<&str> =
        places.iter().copied().filter(|n| preferred.iter().any(|w| n.to_lowercase().contains(w))).collect();
    pick(&matching, seed).or_else(|| pick(&places, seed)).map(|n| n.to_string()).unwrap_or_else(|| "home".into())
}

fn cue(character: &str, emotion: &str, response: &str) -> Value {
    json!({ "character": character, "emotion": emotion, "observable_response": response })
}

fn section(id: &str, kind: &str, text: String, next: &[&str]) -> Value {
    json!({ "id": id, "kind": kind, "text": text, "emotion_cues": [], "speaker": null, "next": next })
}

fn with_cues(mut v: Value, cues: Vec<Value>) -> Value {
    v["emotion_cues"] = Value::Array(cues);
    v
}

fn spoken(mut v: Value, speaker: &str) -> Value {
    v["speaker"] = json!(speaker);
    v
}

struct Branch {
    decision: String,
    consequence: String,
    cues: Vec<Value>,
}

struct Repair {
    speaker: String,
    repair: String,
    response: String,
    repaired: String,
    cues: Vec<Value>,
}

struct Plan {
    title: String,
    persons: Vec<String>,
    place: String,
    introduction: String,
    challenge: String,
    desirable: Branch,
    undesirable: Vec<(Branch, Repair)>,
    ending: String,
}

fn generate(p: &Value) -> Value {
    let topic = serde_json::from_value::<TopicType>(p["topic"].clone()).unwrap_or(TopicType::Relationship);
    let seed = p.get("seed").and_then(Value::as_u64).unwrap_or(0);
    let first_draft = p.get("attempt").and_then(Value::as_u64) == Some(1) && s(p, "feedback").is_empty();
    let child = s(p, "child").to_string();
    let interest = arr(p, "interests").first().map(|i| s(i, "name").to_string()).unwrap_or_default();
    let obj = depiction_for(&interest);
    let people = people(p);
    let caregivers: Vec<&Person> = people.iter().filter(|e| is_caregiver_relation(&e.relation)).collect();
    let others: Vec<&Person> = people.iter().filter(|e| !is_caregiver_relation(&e.relation)).collect();
    let fallback = || people.first().map(|e| e.name.clone()).unwrap_or_else(|| child.clone());

    let mut plan = match topic {
        TopicType::Relationship => {
            let friends: Vec<&&Person> = others.iter().filter(|e| e.relation.contains("friend")).collect();
            let friend = pick(&friends, seed).map(|e| e.name.clone()).or_else(|| pick(&others, seed).map(|e| e.name.clone())).unwrap_or_else(fallback);
            let helper = people
                .iter()
                .find(|e| e.name != friend)
                .map(|e| e.name.clone())
                .unwrap_or_else(|| friend.clone());
            let place = place_for(p, &["playground", "park", "yard"], seed);
            let o = the(&obj);
            Plan {
                title: format!("{child} and {o}"),
                persons: vec![friend.clone(), helper.clone()],
                place: place.clone(),
                introduction: format!("{child} goes to the {place} with {friend}. {friend} has {o}."),
                challenge: format!("{child} wants to play with {o} too. What should {child} do?"),
                desirable: Branch {
                    decision: format!("{child} asks, \"Can I have a turn, please?\""),
                    consequence: format!("{friend} says yes and smiles. {child} feels happy and plays with {o}."),
                    cues: vec![cue(&friend, "happy", "smiles"), cue(&child, "happy", "plays")],
                },
                undesirable: vec![
                    (
                        Branch {
                            decision: format!("{child} takes {o} from {friend}."),
                            consequence: format!("{friend} feels sad and starts to cry."),
                            cues: vec![cue(&friend, "sad", "cries")],
                        },
                        Repair {
                            speaker: helper.clone(),
                            repair: format!("{helper} says, \"You can ask {friend} for a turn.\""),
                            response: format!("{child} gives {o} back. {child} asks {friend} for a turn."),
                            repaired: format!("{friend} feels better and smiles. {friend} gives {child} a turn."),
                            cues: vec![cue(&friend, "better", "smiles")],
                        },
                    ),
                    (
                        Branch {
                            decision: format!("{child} walks away to play alone."),
                            consequence: format!("{child} feels lonely and looks down."),
                            cues: vec![cue(&child, "lonely", "looks down")],
                        },
                        Repair {
                            speaker: friend.clone(),
                            repair: format!("{friend} says, \"Come and play with me!\""),
                            response: format!("{child} comes back and asks for a turn."),
                            repaired: format!("{child} feels happy and smiles at {friend}."),
                            cues: vec![cue(&child, "happy", "smiles")],
                        },
                    ),
                ],
                ending: format!("{child} and {friend} take turns with {o} at the {place}."),
            }
        }
        TopicType::SocialRules => {
            let authorities: Vec<&&Person> = others
                .iter()
                .filter(|e| ["teacher", "coach", "librarian", "pastor"].iter().any(|a| e.relation.contains(a)))
                .collect();
            let guide = pick(&authorities, seed)
                .map(|e| e.name.clone())
                .or_else(|| pick(&caregivers, seed).map(|e| e.name.clone()))
                .unwrap_or_else(fallback);
            let place = place_for(p, &["library", "church", "class", "temple", "museum"], seed);
            let o = the(&obj);
            Plan {
                title: format!("{child} at the {place}"),
                persons: vec![guide.clone()],
                place: place.clone(),
                introduction: format!("{child} goes to the {place} with {guide}. {child} brings {o}."),
                challenge: format!(
                    "Everyone is quiet at the {place}. {child} wants to talk about {o}. What should {child} do?"
                ),
                desirable: Branch {
                    decision: format!("{child} waits and talks in a soft voice."),
                    consequence: format!("{guide} feels proud and smiles."),
                    cues: vec![cue(&guide, "proud", "smiles")],
                },
                undesirable: vec![(
                    Branch {
                        decision: format!("{child} talks in a loud voice."),
                        consequence: format!("{guide} feels worried and frowns."),
                        cues: vec![cue(&guide, "worried", "frowns")],
                    },
                    Repair {
                        speaker: guide.clone(),
                        repair: format!("{guide} says, \"We use a quiet voice here.\""),
                        response: format!("{child} says sorry and talks in a soft voice."),
                        repaired: format!("{guide} feels glad and smiles."),
                        cues: vec![cue(&guide, "glad", "smiles")],
                    },
                )],
                ending: format!("{child} has a calm day at the {place} with {o}."),
            }
        }
        TopicType::HealthyHabits => {
            let carer = pick(&caregivers, seed).map(|e| e.name.clone()).unwrap_or_else(fallback);
            let place = place_for(p, &["kitchen", "bathroom", "home", "bedroom"], seed);
            let o = the(&obj);
            Plan {
                title: format!("A Healthy Day for {child}"),
                persons: vec![carer.clone()],
                place: place.clone(),
                introduction: format!("{child} is in the {place} with {carer}. {child} plays with {o}."),
                challenge: format!("{carer} says it is time to get ready. What should {child} do?"),
                desirable: Branch {
                    decision: format!("{child} puts {o} down and gets ready."),
                    consequence: format!("{carer} feels happy and smiles."),
                    cues: vec![cue(&carer, "happy", "smiles")],
                },
                undesirable: vec![(
                    Branch {
                        decision: format!("{child} keeps playing with {o}."),
                        consequence: format!("{carer} feels sad and sighs."),
                        cues: vec![cue(&carer, "sad", "sighs")],
                    },
                    Repair {
                        speaker: carer.clone(),
                        repair: format!("{carer} says, \"You can play again after.\""),
                        response: format!("{child} puts {o} down and gets ready."),
                        repaired: format!("{carer} feels proud and gives {child} a hug."),
                        cues: vec![cue(&carer, "proud", "hugs")],
                    },
                )],
                ending: format!("{child} feels good and plays with {o} again."),
            }
        }
    };
    if first_draft {
        plan.introduction = plan.introduction.replacen(" goes to ", " meticulously walks to ", 1).replacen(
            " is in ",
            " meticulously waits in ",
            1,
        );
    }
    draft_json(&plan, &interest, &obj, seed)
}

fn draft_json(plan: &Plan, interest: &str, obj: &str, seed: u64) -> Value {
    let mut options: Vec<String> = std::iter::once("d-decision".to_string())
        .chain((1..=plan.undesirable.len()).map(|i| format!("u{i}-decision")))
        .collect();
    let n = options.len();
    options.rotate_left((seed % n as u64) as usize);
    let option_refs: Vec<&str> = options.iter().map(String::as_str).collect();

    let mut sections = vec![
        section("cover", "cover", plan.title.clone(), &["intro"]),
        section("intro", "introduction", plan.introduction.clone(), &["challenge"]),
        section("challenge", "challenge", plan.challenge.clone(), &option_refs),
        section("d-decision", "decision", plan.desirable.decision.clone(), &["d-consequence"]),
        with_cues(
            section("d-consequence", "consequence", plan.desirable.consequence.clone(), &["ending"]),
            plan.desirable.cues.clone(),
        ),
    ];
    let mut undesirable = Vec::new();
    for (i, (branch, repair)) in plan.undesirable.iter().enumerate() {
        let id = |s: &str| format!("u{}-{s}", i + 1);
        sections.push(section(&id("decision"), "decision", branch.decision.clone(), &[&id("consequence")]));
        sections.push(with_cues(
            section(&id("consequence"), "consequence", branch.consequence.clone(), &[&id("repair")]),
            branch.cues.clone(),
        ));
        sections.push(spoken(section(&id("repair"), "repair", repair.repair.clone(), &[&id("response")]), &repair.speaker));
        sections.push(section(&id("response"), "response", repair.response.clone(), &[&id("repaired")]));
        sections.push(with_cues(
            section(&id("repaired"), "repaired_consequence", repair.repaired.clone(), &["ending"]),
            repair.cues.clone(),
        ));
        undesirable.push(
            ["decision", "consequence", "repair", "response", "repaired"]
                .iter()
                .map(|s| id(s))
                .chain(std::iter::once("ending".to_string()))
                .collect::<Vec<_>>(),
        );
    }
    sections.push(section("ending", "ending", plan.ending.clone(), &[]));
    let mut persons = plan.persons.clone();
    persons.dedup();
    json!({
        "title": plan.title,
        "persons": persons,
        "places": [plan.place],
        "interest_depictions": [{ "interest": interest, "depicted_as": obj }],
        "sections": sections,
        "desirable": ["d-decision", "d-consequence", "ending"],
        "undesirable": undesirable,
    })
}

const FANTASY: &[&str] = &["magic", "magical", "dragon", "fairy", "wizard", "spell", "unicorn", "flies to the moon"];

fn judge(p: &Value) -> Value {
    let text: String = arr(p, "sections").iter().map(|s| format!("{}\n", s["text"].as_str().unwrap_or(""))).collect();
    let lower = text.to_lowercase();
    let fantasy = FANTASY.iter().find(|w| lower.contains(*w));
    let interest_ok = arr(p, "interests").iter().all(|i| {
        lower.contains(&s(i, "interest").to_lowercase()) || lower.contains(&s(i, "depicted_as").to_lowercase())
    });
    let unsafe_elevator = lower.contains("elevator") && (lower.contains("fire") || lower.contains("emergency"));
    json!({ "criteria": [
        { "criterion": 1, "pass": fantasy.is_none(),
          "rationale": fantasy.map(|w| format!("the story includes an imaginary element: {w}")).unwrap_or_else(|| "the situation is everyday and realistic".into()) },
        { "criterion": 2, "pass": interest_ok,
          "rationale": if interest_ok { "the interest appears naturally" } else { "the interest is missing" } },
        { "criterion": 3, "pass": !unsafe_elevator,
          "rationale": if unsafe_elevator { "using an elevator during a fire emergency teaches an unsafe belief" } else { "nothing misleading" } },
    ]})
}

const SIMPLER: &[(&str, &str)] = &[
    ("meticulously", "carefully"),
    ("meticulous", "careful"),
    ("perseverance", "trying again"),
    ("exhausted", "very tired"),
    ("magnificent", "great"),
    ("anxious", "worried"),
    ("astonished", "surprised"),
    ("immediately", "right away"),
    ("reluctantly", "slowly"),
    ("enormous", "very big"),
    ("furious", "very angry"),
    ("delighted", "glad"),
];

pub fn simplify_word(word: &str) -> Option<&'static str> {
    SIMPLER.iter().find(|(hard, _)| hard.eq_ignore_ascii_case(word)).map(|(_, easy)| *easy)
}

fn refine(p: &Value) -> String {
    let mut text = s(p, "text").to_string();
    for word in arr(p, "flagged").iter().filter_map(Value::as_str) {
        text = replace_word(&text, word, simplify_word(word).unwrap_or(""));
    }
    text = text.split_whitespace().collect::<Vec<_>>().join(" ");
    if s(p, "kind") == "cover" {
        return text;
    }
    let cap = p.get("grade_cap").and_then(Value::as_f64).unwrap_or(5.0);
    let fits = |t: &str| fkgl(t).is_ok_and(|g| g <= cap);
    if !fits(&text) {
        text = split_clauses(&text);
    }
    if !fits(&text) || !s(p, "feedback").is_empty() {
        let name = arr(p, "exempt").first().and_then(Value::as_str).unwrap_or("We");
        text = format!("{name} is happy now.");
    }
    text
}

/// Breaks sentences at " and " and commas.
fn split_clauses(text: &str) -> String {
    let mut out = String::new();
    for token in text.split(' ') {
        if token == "and" && !out.is_empty() {
            if !out.ends_with(['.', '!', '?']) {
                out.push('.');
            }
            continue;
        }
        let starts = out.is_empty() || out.ends_with(['.', '!', '?']);
        if !out.is_empty() {
            out.push(' ');
        }
        let word = token.strip_suffix(',').map(|w| format!("{w}.")).unwrap_or_else(|| token.to_string());
        if starts {
            let mut chars = word.chars();
            if let Some(c) = chars.next() {
                out.extend(c.to_uppercase());
                out.push_str(chars.as_str());
            }
        } else {
            out.push_str(&word);
        }
    }
    out
}

fn replace_word(text: &str, word: &str, with: &str) -> String {
    let mut out = Vec::new();
    for token in text.split(' ') {
        let core: String = token.chars().filter(|c| c.is_alphabetic()).collect();
        if core.eq_ignore_ascii_case(word) {
            let replaced = token.replacen(core.as_str(), with, 1);
            if !replaced.trim().is_empty() {
                out.push(replaced);
            }
        } else {
            out.push(token.to_string());
        }
    }
    out.join(" ")
}

fn translate(p: &Value) -> Value {
    let lang = s(p, "target_language");
    let sections: Vec<Value> = arr(p, "sections")
        .iter()
        .map(|sec| json!({ "id": sec["id"], "text": format!("[{lang}] {}", s(sec, "text")) }))
        .collect();
    json!({ "sections": sections })
}

fn mentions(text: &str, name: &str) -> bool {
    crate::pipeline::stages::text_mentions(text, name)
}

fn scenes(p: &Value) -> Value {
    let child = s(p, "child").to_string();
    let persons: Vec<String> = arr(p, "persons").iter().filter_map(|v| v.as_str().map(str::to_string)).collect();
    let places: Vec<(String, String)> =
        arr(p, "places").iter().map(|e| (s(e, "name").to_string(), s(e, "description").to_string())).collect();
    let objects: Vec<String> = arr(p, "interests").iter().map(|i| s(i, "depicted_as").to_string()).collect();
    let sections = arr(p, "sections");
    let all: String = std::iter::once(s(p, "title"))
        .chain(sections.iter().map(|x| s(x, "text")))
        .collect::<Vec<_>>()
        .join("\n");

    let mut roster = Vec::new();
    for name in &persons {
        if name == &child || mentions(&all, name) {
            roster.push(json!({ "name": name, "kind": "person" }));
        }
    }
    for o in &objects {
        if mentions(&all, o) {
            roster.push(json!({ "name": o, "kind": "object" }));
        }
    }
    for (name, _) in &places {
        if mentions(&all, name) {
            roster.push(json!({ "name": name, "kind": "place" }));
        }
    }
    let rostered = |name: &str| roster.iter().any(|r| r["name"].as_str() == Some(name));

    let only = p.get("only_section").and_then(Value::as_str);
    let scenes: Vec<Value> = sections
        .iter()
        .filter(|x| only.is_none_or(|o| s(x, "id") == o))
        .map(|x| {
            let text = s(x, "text");
            let mut required: Vec<String> = Vec::new();
            if s(x, "kind") == "cover" {
                required.push(child.clone());
                required.extend(objects.iter().filter(|o| rostered(o)).cloned());
            }
            for name in persons.iter().chain(&objects).chain(places.iter().map(|(n, _)| n)) {
                if rostered(name) && mentions(text, name) && !required.contains(name) {
                    required.push(name.clone());
                }
            }
            let setting = places
                .iter()
                .find(|(n, _)| required.contains(n))
                .map(|(n, d)| if d.is_empty() { format!(" Setting: the {n}.") } else { format!(" Setting: {d}.") })
                .unwrap_or_default();
            json!({ "section_id": x["id"], "description": format!("{text}{setting}"), "required_entities": required })
        })
        .collect();
    json!({ "scenes": scenes, "roster": roster })
}

fn describe(p: &Value) -> Value {
    let all: String = arr(p, "sections").iter().map(|x| s(x, "text").to_lowercase()).collect::<Vec<_>>().join(" ");
    let swimming = ["swim", "pool", "beach"].iter().any(|w| all.contains(w));
    let entities: Vec<Value> = arr(p, "entities")
        .iter()
        .map(|e| {
            let name = s(e, "name");
            let kind = s(e, "kind");
            let has_photo = e.get("has_photo").and_then(Value::as_bool).unwrap_or(false);
            let profile = s(e, "description");
            let appearance = if !profile.is_empty() {
                profile.to_string()
            } else if has_photo {
                String::new()
            } else if name.to_lowercase().contains("fire truck") {
                "a bright red toy fire truck with black wheels, a silver ladder, and a white number 1 on the door".into()
            } else {
                match kind {
                    "person" => format!("{name}, a smiling person in a green shirt and blue pants"),
                    "place" => format!("a simple, tidy {name} with soft daylight"),
                    _ => format!("a {name} drawn with round shapes and bright colors"),
                }
            };
            let outfit = (kind == "person").then_some({
                if swimming {
                    "wearing a swimsuit and swim cap"
                } else {
                    "wearing everyday play clothes"
                }
            });
            json!({ "name": name, "appearance": appearance, "outfit_context": outfit })
        })
        .collect();
    json!({ "entities": entities })
}
