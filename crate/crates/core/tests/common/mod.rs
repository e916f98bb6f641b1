#![allow(dead_code)]

pub mod walk;

use forge_core::fixtures;
use forge_core::pipeline::mock::hashed_embedding;
use forge_core::pipeline::FewShotBank;
use forge_core::pipeline::mock::MockSuite;
use forge_core::pipeline::{GenerationJob, GenerationRequest, JobStatus, MemoryStore, Pipeline, PipelineOptions, PipelineStore};
use forge_core::profile::StickerRef;
use forge_core::Story;

/// Hand-syllabified words. Every word in [`FKGL_TEXTS`] is listed here.
pub const SYLLABLE_ORACLE: [(&str, usize); 50] = [
    ("the", 1), ("a", 1), ("and", 1), ("is", 1), ("to", 1),
    ("with", 1), ("said", 1), ("was", 1), ("we", 1), ("play", 1),
    ("has", 1), ("big", 1), ("red", 1), ("park", 1), ("mom", 1),
    ("max", 1), ("toy", 1), ("cat", 1), ("dog", 1), ("truck", 1),
    ("fire", 1), ("friend", 1), ("whale", 1), ("cake", 1), ("smile", 1),
    ("you", 1), ("alex", 2), ("happy", 2), ("little", 2), ("table", 2),
    ("apple", 2), ("playground", 2), ("yellow", 2), ("playing", 2), ("teacher", 2),
    ("careful", 2), ("lovely", 2), ("sandbox", 2), ("mother", 2), ("window", 2),
    ("outside", 2), ("bottle", 2), ("puzzle", 2), ("sorry", 2), ("firefighter", 3),
    ("library", 3), ("banana", 3), ("elephant", 3), ("dinosaur", 3), ("together", 3),
];

/// (text, words, sentences), counted by hand.
pub const FKGL_TEXTS: [(&str, usize, usize); 20] = [
    ("Alex has a red truck.", 5, 1),
    ("Max and Alex play together. Mom is happy.", 8, 2),
    ("The little dog is playing outside with a yellow toy!", 10, 1),
    ("Alex said sorry. Max has a smile.", 7, 2),
    ("The firefighter has a big red truck and a little dog.", 11, 1),
    ("We play. We smile. We play together.", 7, 3),
    ("Is the teacher happy?", 4, 1),
    ("The elephant and the dinosaur play with a banana.", 9, 1),
    ("Mom was careful with the bottle. The cat was careful with the puzzle.", 13, 2),
    ("A whale! A big whale!", 5, 2),
    ("The library has a lovely window. Alex and Mom play with a puzzle. The teacher is happy.", 17, 3),
    ("Alex was playing with a fire truck and a toy dinosaur outside the library.", 14, 1),
    ("You play. Max is sorry.", 5, 2),
    ("The mother cat has a little yellow cake.", 8, 1),
    ("Max and Alex play together with a truck and the sandbox.", 11, 1),
    ("A friend is a friend. A toy is a toy. A cake is a cake.", 15, 3),
    ("The firefighter said the fire was big! The elephant was sorry. The dinosaur was happy.", 15, 3),
    ("Is the apple red? Is the banana yellow? Is the table little?", 12, 3),
    ("Mom said Alex was careful and lovely with the little dog and the yellow cat together outside.", 17, 1),
    ("The teacher said the library window was big and the playground was a lovely playground.", 15, 1),
];

/// Syllables of `text` by table lookup alone.
pub fn oracle_syllables(text: &str) -> usize {
    text.split_whitespace()
        .map(|tok| {
            let w: String = tok.chars().filter(|c| c.is_alphabetic()).collect::<String>().to_lowercase();
            SYLLABLE_ORACLE
                .iter()
                .find(|(word, _)| *word == w)
                .unwrap_or_else(|| panic!("{w} is not in the oracle list"))
                .1
        })
        .sum()
}

pub fn oracle_grade(words: usize, sentences: usize, syllables: usize) -> f64 {
    let (w, s, y) = (words as f64, sentences as f64, syllables as f64);
    0.39 * (w / s) + 11.8 * (y / w) - 15.59
}

pub const RELATIONSHIP_BEHAVIOR: &str = "asking a friend for permission to try their toy";
pub const SOCIAL_RULES_BEHAVIOR: &str = "keeping calm during prayer at church";
pub const HEALTHY_HABITS_BEHAVIOR: &str = "washing hands before meals";

pub fn request(behavior: &str) -> GenerationRequest {
    GenerationRequest {
        profile: fixtures::alex_profile(),
        interests: vec!["Firefighter".into()],
        target_behavior: behavior.into(),
        reward_sticker: StickerRef { id: "sticker-truck".into(), label: "Fire truck".into() },
    }
}

pub fn options() -> PipelineOptions {
    PipelineOptions { now: Some(fixtures::epoch()), ..Default::default() }
}

pub fn pipeline(mock: &MockSuite, options: PipelineOptions) -> Pipeline {
    Pipeline::new(mock.providers(), options)
}

/// Runs one job to completion on a fresh mock suite.
pub async fn generate(behavior: &str) -> (MockSuite, GenerationJob, Story) {
    let mock = MockSuite::new();
    let store = MemoryStore::new();
    let job = pipeline(&mock, options()).run(&store, "job-1", request(behavior)).await.expect("pipeline runs");
    let story = completed_story(&store, &job);
    (mock, job, story)
}

pub fn completed_story(store: &dyn PipelineStore, job: &GenerationJob) -> Story {
    let JobStatus::Complete { story_id } = &job.status else {
        panic!("job did not complete: {:?}", job.status);
    };
    store.load_story(story_id).expect("store readable").expect("story saved")
}

pub fn story_query(story: &Story) -> Vec<f64> {
    hashed_embedding(&story.graph.sections.iter().map(|s| s.text.as_str()).collect::<Vec<_>>().join("\n"))
}

/// Scores every sample and sorts; written without the bank's ranking code.
pub fn brute_force_top(bank: &FewShotBank, query: &[f64], k: usize) -> Vec<String> {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut all: Vec<(f64, usize)> = bank
        .samples()
        .iter()
        .enumerate()
        .map(|(i, s)| (dot(query, &s.embedding) / (dot(query, query).sqrt() * dot(&s.embedding, &s.embedding).sqrt()), i))
        .collect();
    for i in 0..all.len() {
        for j in 0..all.len() - 1 - i {
            let (a, b) = (all[j], all[j + 1]);
            if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
                all.swap(j, j + 1);
            }
        }
    }
    all.iter().take(k).map(|(_, i)| bank.samples()[*i].source.clone()).collect()
}
