//! Readability measurements: Flesch-Kincaid grade level and CEFR vocabulary
//! flags. This module only measures; rewriting is the pipeline's job.

mod lexicon;
mod syllables;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::story::count_sentences;

pub use lexicon::{CefrLevel, Lexicon, LexiconError};
pub use syllables::count_syllables;

/// Grade above which a section is simplified.
pub const DEFAULT_GRADE_CAP: f64 = 5.0;
/// Highest CEFR level allowed in story text.
pub const DEFAULT_THRESHOLD: CefrLevel = CefrLevel::B2;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReadabilityError {
    #[error("unscorable: text needs at least one word and one sentence")]
    Unscorable,
}

/// Number of whitespace tokens that contain a letter.
pub fn count_words(text: &str) -> usize {
    text.split_whitespace().filter(|t| t.chars().any(char::is_alphabetic)).count()
}

pub fn total_syllables(text: &str) -> usize {
    text.split_whitespace().map(count_syllables).sum()
}

/// Grade from raw counts.
pub fn grade_from_counts(words: usize, sentences: usize, syllables: usize) -> Option<f64> {
    if words == 0 || sentences == 0 {
        return None;
    }
    let words_per_sentence = words as f64 / sentences as f64;
    let syllables_per_word = syllables as f64 / words as f64;
    Some(0.39 * words_per_sentence + 11.8 * syllables_per_word - 15.59)
}

pub fn fkgl(text: &str) -> Result<f64, ReadabilityError> {
    grade_from_counts(count_words(text), count_sentences(text), total_syllables(text))
        .ok_or(ReadabilityError::Unscorable)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FlaggedWord {
    pub word: String,
    pub level: CefrLevel,
    /// Byte offset of the word within the scored text.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadabilityReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fkgl: Option<f64>,
    pub flagged_words: Vec<FlaggedWord>,
    pub syllable_count: usize,
    pub word_count: usize,
    pub sentence_count: usize,
}

pub fn report(text: &str, lexicon: &Lexicon, exemptions: &[String], threshold: CefrLevel) -> ReadabilityReport {
    let word_count = count_words(text);
    let sentence_count = count_sentences(text);
    let syllable_count = total_syllables(text);
    ReadabilityReport {
        fkgl: grade_from_counts(word_count, sentence_count, syllable_count),
        flagged_words: cefr_flags(text, lexicon, exemptions, threshold),
        syllable_count,
        word_count,
        sentence_count,
    }
}

/// Word tokens with their byte offsets. Possessive `'s` is dropped so
/// "Alex's" matches the exemption "Alex".
pub fn word_tokens(text: &str) -> Vec<(usize, String)> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    let is_word = |c: char| c.is_alphabetic() || c == '\'' || c == '\u{2019}';
    let push = |from: usize, to: usize, out: &mut Vec<(usize, String)>| {
        let raw = text[from..to].to_lowercase().replace('\u{2019}', "'");
        let trimmed = raw.trim_matches('\'');
        let word = trimmed.strip_suffix("'s").unwrap_or(trimmed);
        if !word.is_empty() {
            let lead = raw.len() - raw.trim_start_matches('\'').len();
            out.push((from + lead, word.to_string()));
        }
    };
    for (i, c) in text.char_indices() {
        match (is_word(c), start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                push(s, i, &mut out);
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        push(s, text.len(), &mut out);
    }
    out
}

fn exemption_set(exemptions: &[String]) -> HashSet<String> {
    exemptions
        .iter()
        .flat_map(|name| word_tokens(name).into_iter().map(|(_, w)| w))
        .collect()
}

/// Every known word above `threshold`. Exempt names and words missing from
/// the lexicon are never flagged.
pub fn cefr_flags(text: &str, lexicon: &Lexicon, exemptions: &[String], threshold: CefrLevel) -> Vec<FlaggedWord> {
    let exempt = exemption_set(exemptions);
    word_tokens(text)
        .into_iter()
        .filter(|(_, w)| !exempt.contains(w))
        .filter_map(|(offset, word)| match lexicon.level(&word) {
            Some(level) if level > threshold => Some(FlaggedWord { word, level, offset }),
            Some(_) => None,
            None => {
                tracing::debug!(%word, "word not in lexicon; not flagged");
                None
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssessmentConfig {
    pub grade_cap: f64,
    pub threshold: CefrLevel,
}

impl Default for AssessmentConfig {
    fn default() -> Self {
        Self { grade_cap: DEFAULT_GRADE_CAP, threshold: DEFAULT_THRESHOLD }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum SimplificationReason {
    Grade { fkgl: f64, cap: f64 },
    Vocabulary { words: Vec<FlaggedWord> },
    Unscorable,
}

impl SimplificationReason {
    pub fn code(&self) -> &'static str {
        match self {
            SimplificationReason::Grade { .. } => "grade",
            SimplificationReason::Vocabulary { .. } => "vocabulary",
            SimplificationReason::Unscorable => "unscorable",
        }
    }

    pub fn describe(&self) -> String {
        match self {
            SimplificationReason::Grade { fkgl, cap } => {
                format!("grade level {fkgl:.2} is above {cap:.1}; use shorter sentences and shorter words")
            }
            SimplificationReason::Vocabulary { words } => format!(
                "replace these words with easier ones: {}",
                words.iter().map(|w| format!("{} ({})", w.word, w.level)).collect::<Vec<_>>().join(", ")
            ),
            SimplificationReason::Unscorable => "text has no complete sentence".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum SectionAssessment {
    Pass { fkgl: Option<f64> },
    NeedsSimplification { reasons: Vec<SimplificationReason> },
}

impl SectionAssessment {
    pub fn passes(&self) -> bool {
        matches!(self, SectionAssessment::Pass { .. })
    }

    pub fn reason_codes(&self) -> Vec<&'static str> {
        match self {
            SectionAssessment::Pass { .. } => Vec::new(),
            SectionAssessment::NeedsSimplification { reasons } => reasons.iter().map(|r| r.code()).collect(),
        }
    }
}

/// Grade cap is strict: exactly `grade_cap` passes.
pub fn assess_section(text: &str, lexicon: &Lexicon, exemptions: &[String], config: &AssessmentConfig) -> SectionAssessment {
    let mut reasons = Vec::new();
    let grade = fkgl(text).ok();
    match grade {
        None => reasons.push(SimplificationReason::Unscorable),
        Some(g) if g > config.grade_cap => reasons.push(SimplificationReason::Grade { fkgl: g, cap: config.grade_cap }),
        Some(_) => {}
    }
    let words = cefr_flags(text, lexicon, exemptions, config.threshold);
    if !words.is_empty() {
        reasons.push(SimplificationReason::Vocabulary { words });
    }
    if reasons.is_empty() {
        SectionAssessment::Pass { fkgl: grade }
    } else {
        SectionAssessment::NeedsSimplification { reasons }
    }
}

/// Vocabulary-only assessment for titles, which carry no sentence.
pub fn assess_title(text: &str, lexicon: &Lexicon, exemptions: &[String], config: &AssessmentConfig) -> SectionAssessment {
    let words = cefr_flags(text, lexicon, exemptions, config.threshold);
    if words.is_empty() {
        SectionAssessment::Pass { fkgl: None }
    } else {
        SectionAssessment::NeedsSimplification { reasons: vec![SimplificationReason::Vocabulary { words }] }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lex() -> Lexicon {
        Lexicon::from_entries([
            ("meticulous", CefrLevel::C1),
            ("perseverance", CefrLevel::C2),
            ("cat", CefrLevel::A1),
            ("sat", CefrLevel::A1),
            ("rexy", CefrLevel::C2),
        ])
    }

    #[test]
    fn formula_constants() {
        // 10 words per sentence, 1.5 syllables per word.
        let g = grade_from_counts(20, 2, 30).unwrap();
        assert!((g - 6.01).abs() < 1e-9, "{g}");
    }

    #[test]
    fn engineered_text_hits_six_point_oh_one() {
        // Five one-syllable and five two-syllable words per sentence.
        let s = "cat dog sun hat pen happy yellow window table water.";
        let text = format!("{s} {s}");
        assert_eq!(count_words(&text), 20);
        assert_eq!(count_sentences(&text), 2);
        assert_eq!(total_syllables(&text), 30);
        assert!((fkgl(&text).unwrap() - 6.01).abs() < 1e-9);
    }

    #[test]
    fn empty_is_unscorable() {
        assert_eq!(fkgl(""), Err(ReadabilityError::Unscorable));
        assert_eq!(fkgl("no terminator here"), Err(ReadabilityError::Unscorable));
    }

    #[test]
    fn flags_above_threshold() {
        let flags = cefr_flags("The meticulous cat sat.", &lex(), &[], CefrLevel::B2);
        assert_eq!(flags, vec![FlaggedWord { word: "meticulous".into(), level: CefrLevel::C1, offset: 4 }]);
    }

    #[test]
    fn exemptions_and_unknowns() {
        let ex = vec!["Rexy".to_string()];
        assert!(cefr_flags("Rexy's tail wags.", &lex(), &ex, CefrLevel::B2).is_empty());
        assert_eq!(cefr_flags("Rexy naps.", &lex(), &[], CefrLevel::B2).len(), 1);
        assert!(cefr_flags("The cat sat.", &lex(), &[], CefrLevel::B2).is_empty());
        assert!(cefr_flags("Zorbulent blorps.", &lex(), &[], CefrLevel::B2).is_empty());
    }

    #[test]
    fn duplicates_report_each_offset() {
        let flags = cefr_flags("meticulous, meticulous", &lex(), &[], CefrLevel::B2);
        assert_eq!(flags.iter().map(|f| f.offset).collect::<Vec<_>>(), [0, 12]);
    }

    #[test]
    fn assessment_pass_and_reasons() {
        let cfg = AssessmentConfig::default();
        assert!(assess_section("The cat sat.", &lex(), &[], &cfg).passes());

        let hard = "Notwithstanding considerable organizational difficulties, administrators implemented comprehensive educational initiatives.";
        let a = assess_section(hard, &lex(), &[], &cfg);
        assert_eq!(a.reason_codes(), ["grade"]);

        let a = assess_section("The meticulous cat sat on the mat with the dog.", &lex(), &[], &cfg);
        assert_eq!(a.reason_codes(), ["vocabulary"]);

        assert_eq!(assess_section("", &lex(), &[], &cfg).reason_codes(), ["unscorable"]);
    }

    #[test]
    fn grade_cap_is_strict() {
        // 10 one-syllable words in one sentence scores 0.39*10 + 11.8 - 15.59 = 0.11.
        let cfg = AssessmentConfig { grade_cap: 0.11, ..Default::default() };
        let text = "a cat sat on the mat and the dog ran.";
        let g = fkgl(text).unwrap();
        assert!((g - 0.11).abs() < 1e-9);
        let cfg_below = AssessmentConfig { grade_cap: 0.10, ..cfg };
        assert!(!assess_section(text, &lex(), &[], &cfg_below).passes());
        let cfg_above = AssessmentConfig { grade_cap: 0.12, ..cfg };
        assert!(assess_section(text, &lex(), &[], &cfg_above).passes());
    }

    #[test]
    fn tokens_carry_offsets() {
        let toks = word_tokens("Hi, 'Max'! Alex's toy.");
        assert_eq!(
            toks,
            vec![(0, "hi".into()), (5, "max".into()), (11, "alex".into()), (18, "toy".into())]
        );
    }
}
