//! Hand-authored stories and profiles used by tests, benches, and the CLI
//! demo mode, plus labeled structural mutations of them.

use chrono::{DateTime, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::digest::ImageRef;
use crate::profile::{ChildProfile, EntityKind, ProfileEntity, StickerRef};
use crate::story::{
    EmotionCue, InterestUse, Language, PathGraph, Section, SectionId, SectionKind, Story,
    TargetBehavior, TopicType,
};

pub fn photo(name: &str) -> ImageRef {
    ImageRef::for_bytes(format!("photo:{name}"))
}

pub fn epoch() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2025, 3, 3, 9, 0, 0).unwrap()
}

/// The running example family: Alex, Alex's family and friends, and the
/// places Alex knows.
pub fn alex_profile() -> ChildProfile {
    let mut p = ChildProfile::new("family-alex", "Alex");
    p.child.photo = Some(photo("alex"));
    p.interests = vec![
        ProfileEntity::new(EntityKind::Interest, "Firefighter"),
        ProfileEntity::new(EntityKind::Interest, "Rexy")
            .with_photo(photo("rexy"))
            .with_description("a small green toy dinosaur"),
        ProfileEntity::new(EntityKind::Interest, "Whales"),
        ProfileEntity::new(EntityKind::Interest, "Swimming"),
    ];
    p.persons = vec![
        ProfileEntity::new(EntityKind::Person, "Dad").with_relation("father").with_photo(photo("dad")),
        ProfileEntity::new(EntityKind::Person, "Mom").with_relation("mother").with_photo(photo("mom")),
        ProfileEntity::new(EntityKind::Person, "Ben").with_relation("younger brother"),
        ProfileEntity::new(EntityKind::Person, "Mia").with_relation("friend"),
        ProfileEntity::new(EntityKind::Person, "Max").with_relation("friend").with_photo(photo("max")),
        ProfileEntity::new(EntityKind::Person, "Ms. Lee").with_relation("teacher"),
    ];
    p.places = vec![
        ProfileEntity::new(EntityKind::Place, "bedroom").with_description("Alex's room with a blue bed"),
        ProfileEntity::new(EntityKind::Place, "playground")
            .with_photo(photo("playground"))
            .with_description("a sunny playground with a red slide and a sandbox"),
        ProfileEntity::new(EntityKind::Place, "kitchen").with_description("a bright kitchen with a round table"),
        ProfileEntity::new(EntityKind::Place, "library").with_description("a quiet library with tall shelves"),
        ProfileEntity::new(EntityKind::Place, "pool").with_description("an indoor swimming pool"),
    ];
    p
}

/// Snapshot of `profile` keeping only the named entities.
pub fn snapshot(profile: &ChildProfile, names: &[&str]) -> ChildProfile {
    let keep = |e: &ProfileEntity| names.iter().any(|n| n.eq_ignore_ascii_case(&e.name));
    ChildProfile {
        id: profile.id.clone(),
        child: profile.child.clone(),
        interests: profile.interests.iter().filter(|e| keep(e)).cloned().collect(),
        persons: profile.persons.iter().filter(|e| keep(e)).cloned().collect(),
        places: profile.places.iter().filter(|e| keep(e)).cloned().collect(),
    }
}

pub struct Branch<'a> {
    pub decision: &'a str,
    pub consequence: &'a str,
    pub consequence_cues: Vec<EmotionCue>,
}

pub struct RepairChain<'a> {
    pub repair: &'a str,
    pub speaker: &'a str,
    pub response: &'a str,
    pub repaired: &'a str,
    pub repaired_cues: Vec<EmotionCue>,
}

pub struct Outline<'a> {
    pub id: &'a str,
    pub topic: TopicType,
    pub behavior: &'a str,
    pub title: &'a str,
    pub introduction: &'a str,
    pub challenge: &'a str,
    pub desirable: Branch<'a>,
    pub undesirable: Vec<(Branch<'a>, RepairChain<'a>)>,
    pub ending: &'a str,
    pub snapshot: ChildProfile,
    pub interests: Vec<InterestUse>,
    pub sticker: StickerRef,
}

/// Assembles the canonical section graph from an outline. Section ids follow
/// `d-*` for the desirable branch and `uN-*` for undesirable ones.
pub fn build(outline: Outline<'_>) -> Story {
    let mut sections = vec![
        Section::new("cover", SectionKind::Cover, outline.title).then("intro"),
        Section::new("intro", SectionKind::Introduction, outline.introduction).then("challenge"),
    ];
    let mut challenge = Section::new("challenge", SectionKind::Challenge, outline.challenge);
    challenge.next.push("d-decision".into());

    let mut d_cons = Section::new("d-consequence", SectionKind::Consequence, outline.desirable.consequence).then("ending");
    d_cons.emotion_cues = outline.desirable.consequence_cues;
    let mut branch_sections = vec![
        Section::new("d-decision", SectionKind::Decision, outline.desirable.decision).then("d-consequence"),
        d_cons,
    ];
    let desirable_path: Vec<SectionId> = ["d-decision", "d-consequence", "ending"].map(SectionId::from).to_vec();

    let mut undesirable_paths = Vec::new();
    for (i, (branch, chain)) in outline.undesirable.into_iter().enumerate() {
        let p = format!("u{}", i + 1);
        let id = |s: &str| format!("{p}-{s}");
        challenge.next.push(SectionId::new(id("decision")));
        let mut cons = Section::new(id("consequence"), SectionKind::Consequence, branch.consequence).then(id("repair"));
        cons.emotion_cues = branch.consequence_cues;
        let mut repaired = Section::new(id("repaired"), SectionKind::RepairedConsequence, chain.repaired).then("ending");
        repaired.emotion_cues = chain.repaired_cues;
        branch_sections.extend([
            Section::new(id("decision"), SectionKind::Decision, branch.decision).then(id("consequence")),
            cons,
            Section::new(id("repair"), SectionKind::Repair, chain.repair).then(id("response")).spoken_by(chain.speaker),
            Section::new(id("response"), SectionKind::Response, chain.response).then(id("repaired")),
            repaired,
        ]);
        undesirable_paths.push(
            ["decision", "consequence", "repair", "response", "repaired"]
                .iter()
                .map(|s| SectionId::new(id(s)))
                .chain(std::iter::once(SectionId::from("ending")))
                .collect(),
        );
    }
    sections.push(challenge);
    sections.extend(branch_sections);
    sections.push(Section::new("ending", SectionKind::Ending, outline.ending));

    Story {
        id: outline.id.to_string(),
        version: 1,
        title: outline.title.to_string(),
        topic_type: outline.topic,
        target_behavior: TargetBehavior { text: outline.behavior.to_string(), classified_type: outline.topic },
        interests: outline.interests,
        profile_snapshot: outline.snapshot,
        graph: PathGraph {
            sections,
            root: "cover".into(),
            challenge: "challenge".into(),
            ending: "ending".into(),
            desirable_path,
            undesirable_paths,
        },
        reward_sticker: outline.sticker,
        language: Language::default(),
        created_at: epoch(),
        edit_log: Vec::new(),
        preprocessing: None,
    }
}

fn cue(c: &str, e: &str, r: &str) -> EmotionCue {
    EmotionCue::new(c, e, r)
}

/// Relationship story: taking turns with the fire truck at the playground.
pub fn fire_truck_story() -> Story {
    build(Outline {
        id: "story-fire-truck",
        topic: TopicType::Relationship,
        behavior: "Taking turns during playtime",
        title: "Playing Together at the Playground",
        introduction: "Alex and Max are at the playground. They play firefighters with a fire truck toy.",
        challenge: "Alex and Max both want to drive the fire truck first. What should Alex do?",
        desirable: Branch {
            decision: "Alex says, \"Let's take turns driving the truck.\"",
            consequence: "Max is happy and smiles. They laugh and play together.",
            consequence_cues: vec![cue("Max", "happy", "smiles"), cue("Alex", "glad", "laughs")],
        },
        undesirable: vec![
            (
                Branch {
                    decision: "Alex grabs the truck and drives it first.",
                    consequence: "Max feels upset and walks away. Alex feels left out.",
                    consequence_cues: vec![cue("Max", "upset", "walks away"), cue("Alex", "left out", "looks down")],
                },
                RepairChain {
                    repair: "Max says, \"Taking turns is fair.\"",
                    speaker: "Max",
                    response: "Alex says sorry and gives Max a turn.",
                    repaired: "Max smiles again. Alex feels happy.",
                    repaired_cues: vec![cue("Max", "happy", "smiles"), cue("Alex", "happy", "grins")],
                },
            ),
            (
                Branch {
                    decision: "Alex walks away to play alone on the slide.",
                    consequence: "Max feels sad and sits by himself. Alex feels lonely.",
                    consequence_cues: vec![cue("Max", "sad", "sits alone"), cue("Alex", "lonely", "looks around")],
                },
                RepairChain {
                    repair: "Max asks, \"Do you want to play with me?\"",
                    speaker: "Max",
                    response: "Alex comes back and asks to share.",
                    repaired: "Max grins and hands Alex the hose. Alex feels glad.",
                    repaired_cues: vec![cue("Max", "glad", "grins"), cue("Alex", "glad", "smiles")],
                },
            ),
        ],
        ending: "Alex and Max take turns and play firefighters all day.",
        snapshot: snapshot(&alex_profile(), &["Firefighter", "Max", "playground"]),
        interests: vec![InterestUse { interest: "Firefighter".into(), depicted_as: "fire truck toy".into() }],
        sticker: StickerRef { id: "sticker-firefighter".into(), label: "Firefighter".into() },
    })
}

/// Social rules story: a quiet voice in the library.
pub fn library_story() -> Story {
    build(Outline {
        id: "story-library",
        topic: TopicType::SocialRules,
        behavior: "Using a quiet voice in the library",
        title: "A Quiet Day at the Library",
        introduction: "Alex goes to the library with Ms. Lee. Alex loves the whale books there.",
        challenge: "Alex finds a big whale book and wants to shout. What should Alex do?",
        desirable: Branch {
            decision: "Alex whispers, \"Look at this whale!\"",
            consequence: "Ms. Lee is pleased and smiles. Alex feels proud.",
            consequence_cues: vec![cue("Ms. Lee", "pleased", "smiles"), cue("Alex", "proud", "sits up tall")],
        },
        undesirable: vec![(
            Branch {
                decision: "Alex shouts, \"Look at this whale!\"",
                consequence: "Ms. Lee looks surprised and frowns. Alex feels shy.",
                consequence_cues: vec![cue("Ms. Lee", "surprised", "frowns"), cue("Alex", "shy", "hides her face")],
            },
            RepairChain {
                repair: "Ms. Lee says, \"Please use a quiet voice here.\"",
                speaker: "Ms. Lee",
                response: "Alex nods and whispers, \"Okay.\"",
                repaired: "Ms. Lee smiles at Alex. Alex feels calm and happy.",
                repaired_cues: vec![cue("Ms. Lee", "happy", "smiles"), cue("Alex", "calm", "breathes slowly")],
            },
        )],
        ending: "Alex reads the whale book quietly with Ms. Lee.",
        snapshot: snapshot(&alex_profile(), &["Whales", "Ms. Lee", "library"]),
        interests: vec![InterestUse { interest: "Whales".into(), depicted_as: "whale book".into() }],
        sticker: StickerRef { id: "sticker-whale".into(), label: "Whale".into() },
    })
}

/// Healthy habits story: washing hands before lunch, guided by Mom.
pub fn hand_washing_story() -> Story {
    build(Outline {
        id: "story-hand-washing",
        topic: TopicType::HealthyHabits,
        behavior: "Washing hands before meals",
        title: "Clean Hands Before Lunch",
        introduction: "Alex plays with Rexy in the kitchen. Mom says lunch is ready.",
        challenge: "Alex's hands are dirty from playing. What should Alex do?",
        desirable: Branch {
            decision: "Alex washes her hands with soap first.",
            consequence: "Mom is happy and gives Alex a hug. Alex feels proud.",
            consequence_cues: vec![cue("Mom", "happy", "hugs Alex"), cue("Alex", "proud", "smiles")],
        },
        undesirable: vec![(
            Branch {
                decision: "Alex sits down and eats with dirty hands.",
                consequence: "Mom looks worried and frowns. Alex feels unsure.",
                consequence_cues: vec![cue("Mom", "worried", "frowns"), cue("Alex", "unsure", "stops eating")],
            },
            RepairChain {
                repair: "Mom says, \"Let's wash our hands before we eat.\"",
                speaker: "Mom",
                response: "Alex goes to the sink and washes with soap.",
                repaired: "Mom smiles and claps. Alex feels fresh and happy.",
                repaired_cues: vec![cue("Mom", "happy", "claps"), cue("Alex", "happy", "grins")],
            },
        )],
        ending: "Alex and Rexy enjoy a yummy lunch with clean hands.",
        snapshot: snapshot(&alex_profile(), &["Rexy", "Mom", "kitchen"]),
        interests: vec![InterestUse { interest: "Rexy".into(), depicted_as: "Rexy".into() }],
        sticker: StickerRef { id: "sticker-rexy".into(), label: "Rexy".into() },
    })
}

/// A story with one desirable and one undesirable branch.
pub fn two_option_story() -> Story {
    library_story()
}

pub fn story_for(topic: TopicType) -> Story {
    match topic {
        TopicType::Relationship => fire_truck_story(),
        TopicType::SocialRules => library_story(),
        TopicType::HealthyHabits => hand_washing_story(),
    }
}

/// Structural faults injected into otherwise valid stories.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mutation {
    /// Drop the Repair section of the first undesirable branch.
    DropRepair,
    /// Add one more fully formed undesirable branch.
    ExtraPath,
    /// Point a Response back at its Repair.
    Cycle,
    /// Add a section nothing links to.
    Orphan,
}

impl Mutation {
    pub const ALL: [Mutation; 4] = [Mutation::DropRepair, Mutation::ExtraPath, Mutation::Cycle, Mutation::Orphan];

    /// Rule the validator must report for this mutation.
    pub fn expected_rule(self) -> &'static str {
        match self {
            Mutation::DropRepair => "missing-repair-chain",
            Mutation::ExtraPath => "path-count-mismatch",
            Mutation::Cycle => "cycle",
            Mutation::Orphan => "unreachable-section",
        }
    }
}

pub fn mutate(story: &Story, mutation: Mutation) -> Story {
    let mut s = story.clone();
    let g = &mut s.graph;
    match mutation {
        Mutation::DropRepair => {
            let path = &mut g.undesirable_paths[0];
            let repair = path.remove(2);
            let response = path[2].clone();
            g.sections.retain(|x| x.id != repair);
            let consequence = path[1].clone();
            g.section_mut(&consequence).unwrap().next = vec![response];
        }
        Mutation::ExtraPath => {
            let n = g.undesirable_paths.len() + 1;
            let template: Vec<Section> = g.undesirable_paths[0]
                .iter()
                .filter(|id| **id != g.ending)
                .map(|id| g.section(id).unwrap().clone())
                .collect();
            let rename = |id: &SectionId| -> SectionId {
                match id.as_str().split_once('-') {
                    Some((_, rest)) if id != &g.ending => SectionId::new(format!("u{n}-{rest}")),
                    _ => id.clone(),
                }
            };
            let copies: Vec<Section> = template
                .iter()
                .map(|sec| {
                    let mut c = sec.clone();
                    c.id = rename(&sec.id);
                    c.next = sec.next.iter().map(rename).collect();
                    c
                })
                .collect();
            let new_path: Vec<SectionId> = copies.iter().map(|c| c.id.clone()).chain([g.ending.clone()]).collect();
            let challenge = g.challenge.clone();
            g.section_mut(&challenge).unwrap().next.push(new_path[0].clone());
            let at = g.sections.len() - 1;
            g.sections.splice(at..at, copies);
            g.undesirable_paths.push(new_path);
        }
        Mutation::Cycle => {
            let path = g.undesirable_paths[0].clone();
            g.section_mut(&path[3]).unwrap().next = vec![path[2].clone()];
        }
        Mutation::Orphan => {
            let kind = SectionKind::Decision;
            g.sections.push(Section::new("stray", kind, "Alex waits.").then("ending"));
        }
    }
    s
}

/// Labeled corpus: valid fixtures and mutants, shuffled with `seed`.
/// Each entry is (story, true if it should validate).
pub fn mutation_corpus(size: usize, seed: u64) -> Vec<(Story, bool)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bases = [fire_truck_story(), library_story(), hand_washing_story()];
    (0..size)
        .map(|i| {
            let base = &bases[rng.random_range(0..bases.len())];
            let mut story = base.clone();
            story.id = format!("{}-{i:03}", base.id);
            if rng.random_bool(0.4) {
                (story, true)
            } else {
                let m = Mutation::ALL[rng.random_range(0..Mutation::ALL.len())];
                (mutate(&story, m), false)
            }
        })
        .collect()
}

/// Stories per account in [`engagement_export`]: 218 over 16 accounts.
pub const EXPORT_STORY_COUNTS: [usize; 16] = [26, 20, 18, 17, 16, 15, 14, 14, 13, 12, 11, 10, 10, 9, 7, 6];

const EXPORT_BEHAVIORS: [(&str, TopicType); 6] = [
    ("Taking turns during playtime", TopicType::Relationship),
    ("Using a quiet voice in the library", TopicType::SocialRules),
    ("Washing hands before meals", TopicType::HealthyHabits),
    ("Sharing toys with a sibling", TopicType::Relationship),
    ("Brushing teeth before bed", TopicType::HealthyHabits),
    ("Waiting in line at the store", TopicType::SocialRules),
];

/// A session that reads the desirable path, spreading `minutes` over the
/// page turns, and completes if `complete` is set.
pub fn timed_session(
    story: &Story,
    id: &str,
    device: crate::session::Device,
    start: DateTime<Utc>,
    minutes: i64,
    complete: bool,
) -> crate::session::ReadingSession {
    use crate::session::{ReadingEvent, ReadingSession};
    let mut s = ReadingSession::start(id, story, device, start);
    let step = |k: i64| start + chrono::Duration::seconds(minutes * 60 * k / 5);
    let view = |sid: &str, k: i64| ReadingEvent::PageView { section_id: sid.into(), t: step(k) };
    s.record_event(story, view("intro", 1)).expect("intro follows cover");
    s.record_event(story, view("challenge", 2)).expect("challenge follows intro");
    let option_index = s.presented_options.iter().position(|o| o.as_str() == "d-decision").expect("desirable option");
    s.record_event(story, ReadingEvent::Choice { option_index, section_id: "d-decision".into(), t: step(3) })
        .expect("valid choice");
    s.record_event(story, view("d-consequence", 4)).expect("consequence follows decision");
    s.record_event(story, view("ending", 5)).expect("ending follows consequence");
    if complete {
        s.complete(story, step(5)).expect("desirable path completes");
    }
    s
}

/// Deterministic export over 16 accounts. Account `i` has, on consecutive
/// days from the epoch date: a 21:05 session of `10 + i` minutes, a 20:40
/// session of 15 minutes, an 08:30 session of 7 minutes, and for even `i`
/// a 21:45 session of 12 minutes.
pub fn engagement_export() -> crate::insights::EventExport {
    use crate::insights::{AccountExport, EventExport, StoryMeta};
    use crate::session::Device;
    let day0 = epoch().date_naive();
    let at = |day: i64, h: u32, m: u32| {
        (day0 + chrono::Duration::days(day)).and_hms_opt(h, m, 0).expect("valid time").and_utc()
    };
    let accounts = EXPORT_STORY_COUNTS
        .iter()
        .enumerate()
        .map(|(i, &count)| {
            let account_id = format!("account-{i:02}");
            let stories: Vec<StoryMeta> = (0..count)
                .map(|j| {
                    let (behavior, topic) = EXPORT_BEHAVIORS[(i + j) % EXPORT_BEHAVIORS.len()];
                    StoryMeta {
                        id: format!("story-{i:02}-{j:02}"),
                        version: 1,
                        title: format!("Story {j} for account {i}"),
                        topic_type: topic,
                        target_behavior: behavior.to_string(),
                        created_at: at((j % 14) as i64, 19, (j % 60) as u32),
                    }
                })
                .collect();
            let mut story = fire_truck_story();
            story.id = stories[0].id.clone();
            let sid = |k: usize| format!("session-{i:02}-{k}");
            let device = if i % 4 == 3 { Device::Creator } else { Device::Reader };
            let mut sessions = vec![
                timed_session(&story, &sid(0), device, at(0, 21, 5), 10 + i as i64, true),
                timed_session(&story, &sid(1), Device::Reader, at(1, 20, 40), 15, true),
                timed_session(&story, &sid(2), Device::Reader, at(2, 8, 30), 7, false),
            ];
            if i % 2 == 0 {
                sessions.push(timed_session(&story, &sid(3), Device::Reader, at(3, 21, 45), 12, true));
            }
            AccountExport { account_id, stories, sessions }
        })
        .collect();
    EventExport { format_version: crate::insights::EXPORT_FORMAT_VERSION, accounts }
}
