//! Few-shot example bank for the translator.

use std::cmp::Ordering;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const BUNDLED: &str = include_str!("../../assets/fixtures/fewshot-bank.jsonl");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewShotSample {
    pub source: String,
    pub translation: String,
    pub embedding: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum BankError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("sample {index} has dimension {found}, bank dimension is {expected}")]
    Dimension { index: usize, found: usize, expected: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Fixed-size bank of reviewed translation pairs with precomputed English
/// embeddings of uniform dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct FewShotBank {
    samples: Vec<FewShotSample>,
}

impl FewShotBank {
    pub fn new(samples: Vec<FewShotSample>) -> Result<Self, BankError> {
        if let Some(first) = samples.first() {
            let expected = first.embedding.len();
            for (index, s) in samples.iter().enumerate() {
                if s.embedding.len() != expected {
                    return Err(BankError::Dimension { index, found: s.embedding.len(), expected });
                }
            }
        }
        Ok(Self { samples })
    }

    /// JSON Lines, one sample per line.
    pub fn parse_jsonl(raw: &str) -> Result<Self, BankError> {
        let samples = raw
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| BankError::Parse { line: i + 1, message: e.to_string() })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(samples)
    }

    pub fn load(path: &Path) -> Result<Self, BankError> {
        Self::parse_jsonl(&std::fs::read_to_string(path)?)
    }

    pub fn bundled() -> Self {
        Self::parse_jsonl(BUNDLED).expect("bundled bank is valid")
    }

    /// Random unit-length embeddings with placeholder texts, for tests and
    /// benchmarks.
    pub fn synthetic(size: usize, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples = (0..size)
            .map(|i| {
                let mut v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.iter_mut().for_each(|x| *x /= norm);
                FewShotSample {
                    source: format!("Sample section {i}."),
                    translation: format!("[ko] Sample section {i}."),
                    embedding: v,
                }
            })
            .collect();
        Self { samples }
    }

    pub fn samples(&self) -> &[FewShotSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dimension(&self) -> Option<usize> {
        self.samples.first().map(|s| s.embedding.len())
    }

    /// Indices of the `k` samples most similar to `query`, most similar
    /// first; equal scores keep bank order.
    pub fn top_k(&self, query: &[f64], k: usize) -> Vec<usize> {
        let mut scored: Vec<(usize, f64)> =
            self.samples.iter().enumerate().map(|(i, s)| (i, cosine(query, &s.embedding))).collect();
        scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0)));
        scored.into_iter().take(k).map(|(i, _)| i).collect()
    }
}

/// Cosine similarity; 0 when either vector has zero length or the
/// dimensions differ.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return 0.0;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}
