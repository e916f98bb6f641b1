//! CEFR vocabulary lexicon.
//!
//! File format: one `word<TAB>level` entry per line, `#` starts a comment,
//! blank lines are ignored. Levels are `A1`..`C2`; keys are lowercased.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const BUNDLED: &str = include_str!("../../assets/lexicon/cefr-en.tsv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CefrLevel {
    A1,
    A2,
    B1,
    B2,
    C1,
    C2,
}

impl CefrLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            CefrLevel::A1 => "A1",
            CefrLevel::A2 => "A2",
            CefrLevel::B1 => "B1",
            CefrLevel::B2 => "B2",
            CefrLevel::C1 => "C1",
            CefrLevel::C2 => "C2",
        }
    }
}

impl fmt::Display for CefrLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CefrLevel {
    type Err = LexiconError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A1" => Ok(CefrLevel::A1),
            "A2" => Ok(CefrLevel::A2),
            "B1" => Ok(CefrLevel::B1),
            "B2" => Ok(CefrLevel::B2),
            "C1" => Ok(CefrLevel::C1),
            "C2" => Ok(CefrLevel::C2),
            other => Err(LexiconError::BadLevel { line: 0, token: other.to_string() }),
        }
    }
}

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("line {line}: unknown CEFR level {token:?}")]
    BadLevel { line: usize, token: String },
    #[error("line {line}: expected `word<TAB>level`")]
    BadLine { line: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    entries: HashMap<String, CefrLevel>,
    source_tag: String,
}

impl Lexicon {
    /// The lexicon shipped with the crate.
    pub fn bundled() -> Self {
        Self::parse(BUNDLED, "bundled:cefr-en").expect("bundled lexicon is valid")
    }

    pub fn load(path: &Path) -> Result<Self, LexiconError> {
        let raw = std::fs::read_to_string(path)?;
        Self::parse(&raw, &path.display().to_string())
    }

    pub fn parse(raw: &str, source_tag: &str) -> Result<Self, LexiconError> {
        let mut entries = HashMap::new();
        let mut tag = source_tag.to_string();
        for (i, line) in raw.lines().enumerate() {
            let line_no = i + 1;
            if let Some(comment) = line.trim().strip_prefix('#') {
                if let Some(version) = comment.trim().strip_prefix("version:") {
                    tag = format!("{source_tag}@{}", version.trim());
                }
                continue;
            }
            let content = line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let mut cols = content.split('\t').map(str::trim).filter(|c| !c.is_empty());
            let (Some(word), Some(level), None) = (cols.next(), cols.next(), cols.next()) else {
                return Err(LexiconError::BadLine { line: line_no });
            };
            let level = level.parse::<CefrLevel>().map_err(|_| LexiconError::BadLevel {
                line: line_no,
                token: level.to_string(),
            })?;
            entries.insert(word.to_lowercase(), level);
        }
        Ok(Self { entries, source_tag: tag })
    }

    pub fn from_entries<'a>(entries: impl IntoIterator<Item = (&'a str, CefrLevel)>) -> Self {
        Self {
            entries: entries.into_iter().map(|(w, l)| (w.to_lowercase(), l)).collect(),
            source_tag: "inline".into(),
        }
    }

    pub fn level(&self, word: &str) -> Option<CefrLevel> {
        self.entries.get(&word.to_lowercase()).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn source_tag(&self) -> &str {
        &self.source_tag
    }
}
