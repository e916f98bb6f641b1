//! Deterministic providers for tests, benchmarks, and offline runs.
//!
//! The text mock answers from, in order: queued per-stage responses, a
//! fixture directory of `<request digest>.json` files, and finally the
//! synthetic responder, which builds answers from the request payload.
//! Faults can be injected per stage.

mod synthetic;

use std::collections::{HashMap, HashSet, VecDeque};
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use async_trait::async_trait;

use super::provider::{
    EmbeddingProvider, ImageProvider, ImageRequest, ProviderError, ProviderSuite, Stage, TextProvider, TextRequest,
};
use crate::digest::{sha256_hex, ImageRef};
use crate::readability::word_tokens;

pub use synthetic::{depiction_for, respond, simplify_word};

pub const EMBEDDING_DIM: usize = 64;

#[derive(Debug, Default)]
struct TextState {
    queued: HashMap<Stage, VecDeque<String>>,
    outage: HashSet<Stage>,
    garbage: HashMap<Stage, u32>,
    calls: Vec<TextRequest>,
}

#[derive(Debug, Default)]
pub struct MockTextProvider {
    fixture_dir: Option<PathBuf>,
    /// Without a synthetic fallback, unmatched requests fail with
    /// `NoFixture`.
    strict: bool,
    /// Write synthetic answers back into the fixture directory.
    record: bool,
    state: Mutex<TextState>,
}

impl MockTextProvider {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_fixture_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.fixture_dir = Some(dir.into());
        self
    }

    pub fn strict(mut self) -> Self {
        self.strict = true;
        self
    }

    pub fn recording(mut self) -> Self {
        self.record = true;
        self
    }

    /// Queues a raw response for the next call to `stage`.
    pub fn queue(&self, stage: Stage, response: impl Into<String>) {
        self.state.lock().unwrap().queued.entry(stage).or_default().push_back(response.into());
    }

    /// Every call to `stage` fails as unreachable.
    pub fn outage(&self, stage: Stage) {
        self.state.lock().unwrap().outage.insert(stage);
    }

    /// The next `n` calls to `stage` return text that is not JSON.
    pub fn garbage(&self, stage: Stage, n: u32) {
        self.state.lock().unwrap().garbage.insert(stage, n);
    }

    pub fn calls(&self) -> Vec<TextRequest> {
        self.state.lock().unwrap().calls.clone()
    }

    pub fn calls_for(&self, stage: Stage) -> Vec<TextRequest> {
        self.calls().into_iter().filter(|c| c.stage == stage).collect()
    }

    pub fn reset_calls(&self) {
        self.state.lock().unwrap().calls.clear();
    }

    fn fixture_path(&self, digest: &str) -> Option<PathBuf> {
        self.fixture_dir.as_ref().map(|d| d.join(format!("{digest}.json")))
    }
}

#[async_trait]
impl TextProvider for MockTextProvider {
    async fn complete(&self, request: &TextRequest) -> Result<String, ProviderError> {
        {
            let mut st = self.state.lock().unwrap();
            st.calls.push(request.clone());
            if st.outage.contains(&request.stage) {
                return Err(ProviderError::Unreachable(format!("injected outage at {}", request.stage)));
            }
            if let Some(n) = st.garbage.get_mut(&request.stage) {
                if *n > 0 {
                    *n -= 1;
                    return Ok("Sure! Here is the story you asked for.".to_string());
                }
            }
            if let Some(r) = st.queued.get_mut(&request.stage).and_then(VecDeque::pop_front) {
                return Ok(r);
            }
        }
        let digest = request.digest();
        if let Some(path) = self.fixture_path(&digest) {
            if let Ok(raw) = std::fs::read_to_string(&path) {
                return Ok(raw);
            }
        }
        if self.strict {
            return Err(ProviderError::NoFixture(digest));
        }
        let answer = synthetic::respond(request).to_string();
        if self.record {
            if let Some(path) = self.fixture_path(&digest) {
                if let Some(parent) = path.parent() {
                    let _ = std::fs::create_dir_all(parent);
                }
                std::fs::write(&path, &answer).map_err(|e| ProviderError::Rejected(e.to_string()))?;
            }
        }
        Ok(answer)
    }
}

#[derive(Debug, Default)]
struct ImageState {
    calls: Vec<ImageRequest>,
    /// Remaining failures per section id; `u32::MAX` fails forever.
    failures: HashMap<String, u32>,
}

/// Content-addressed fake images with in-flight instrumentation.
#[derive(Debug)]
pub struct MockImageProvider {
    delay: Duration,
    in_flight: AtomicUsize,
    max_in_flight: AtomicUsize,
    state: Mutex<ImageState>,
}

impl Default for MockImageProvider {
    fn default() -> Self {
        Self::new(Duration::from_millis(5))
    }
}

impl MockImageProvider {
    pub fn new(delay: Duration) -> Self {
        Self {
            delay,
            in_flight: AtomicUsize::new(0),
            max_in_flight: AtomicUsize::new(0),
            state: Mutex::new(ImageState::default()),
        }
    }

    pub fn fail_section(&self, section: &str, times: u32) {
        self.state.lock().unwrap().failures.insert(section.to_string(), times);
    }

    pub fn calls(&self) -> Vec<ImageRequest> {
        self.state.lock().unwrap().calls.clone()
    }

    pub fn call_count(&self) -> usize {
        self.state.lock().unwrap().calls.len()
    }

    pub fn reset_calls(&self) {
        self.state.lock().unwrap().calls.clear();
        self.max_in_flight.store(0, Ordering::SeqCst);
    }

    /// Largest number of requests observed in flight at once.
    pub fn max_in_flight(&self) -> usize {
        self.max_in_flight.load(Ordering::SeqCst)
    }
}

struct InFlight<'a>(&'a AtomicUsize);

impl Drop for InFlight<'_> {
    fn drop(&mut self) {
        self.0.fetch_sub(1, Ordering::SeqCst);
    }
}

#[async_trait]
impl ImageProvider for MockImageProvider {
    async fn generate(&self, request: &ImageRequest) -> Result<ImageRef, ProviderError> {
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        let _guard = InFlight(&self.in_flight);
        self.max_in_flight.fetch_max(now, Ordering::SeqCst);
        let fail = {
            let mut st = self.state.lock().unwrap();
            st.calls.push(request.clone());
            match st.failures.get_mut(&request.section_id) {
                Some(n) if *n > 0 => {
                    if *n != u32::MAX {
                        *n -= 1;
                    }
                    true
                }
                _ => false,
            }
        };
        if !self.delay.is_zero() {
            tokio::time::sleep(self.delay).await;
        }
        if fail {
            return Err(ProviderError::Unreachable(format!("injected image failure for {}", request.section_id)));
        }
        Ok(ImageRef::for_bytes(request.digest()))
    }
}

/// Hashed bag-of-words embedding, unit length.
#[derive(Debug, Default)]
pub struct MockEmbeddingProvider {
    calls: AtomicUsize,
}

impl MockEmbeddingProvider {
    pub fn call_count(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

pub fn hashed_embedding(text: &str) -> Vec<f64> {
    let mut v = vec![0.0; EMBEDDING_DIM];
    for (_, word) in word_tokens(text) {
        let h = sha256_hex(word.as_bytes());
        let n = u64::from_str_radix(&h[..16], 16).expect("hex digest");
        let sign = if n & 1 == 0 { 1.0 } else { -1.0 };
        v[((n >> 1) % EMBEDDING_DIM as u64) as usize] += sign;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

#[async_trait]
impl EmbeddingProvider for MockEmbeddingProvider {
    async fn embed(&self, text: &str) -> Result<Vec<f64>, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(hashed_embedding(text))
    }
}

/// A mock suite with handles kept for inspection and fault injection.
#[derive(Debug, Clone)]
pub struct MockSuite {
    pub text: Arc<MockTextProvider>,
    pub image: Arc<MockImageProvider>,
    pub embedding: Arc<MockEmbeddingProvider>,
}

impl Default for MockSuite {
    fn default() -> Self {
        Self::with_text(MockTextProvider::new())
    }
}

impl MockSuite {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_text(text: MockTextProvider) -> Self {
        Self {
            text: Arc::new(text),
            image: Arc::new(MockImageProvider::default()),
            embedding: Arc::new(MockEmbeddingProvider::default()),
        }
    }

    pub fn with_image(mut self, image: MockImageProvider) -> Self {
        self.image = Arc::new(image);
        self
    }

    pub fn providers(&self) -> ProviderSuite {
        ProviderSuite { text: self.text.clone(), image: self.image.clone(), embedding: self.embedding.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn req(stage: Stage) -> TextRequest {
        TextRequest { stage, template: "t@v1".into(), prompt: "p".into(), payload: json!({"behavior": "washing hands"}) }
    }

    #[tokio::test]
    async fn queue_then_synthetic() {
        let m = MockTextProvider::new();
        m.queue(Stage::Classify, "{\"topic_type\": \"social_rules\"}");
        assert!(m.complete(&req(Stage::Classify)).await.unwrap().contains("social_rules"));
        assert!(m.complete(&req(Stage::Classify)).await.unwrap().contains("healthy_habits"));
        assert_eq!(m.calls().len(), 2);
    }

    #[tokio::test]
    async fn fixture_dir_replay_and_strict_mode() {
        let dir = tempfile::tempdir().unwrap();
        let r = req(Stage::Classify);
        std::fs::write(dir.path().join(format!("{}.json", r.digest())), "{\"topic_type\": \"relationship\"}").unwrap();
        let m = MockTextProvider::new().with_fixture_dir(dir.path()).strict();
        assert!(m.complete(&r).await.unwrap().contains("relationship"));
        assert!(matches!(m.complete(&req(Stage::Generate)).await, Err(ProviderError::NoFixture(_))));
    }

    #[tokio::test]
    async fn recording_writes_fixtures() {
        let dir = tempfile::tempdir().unwrap();
        let r = req(Stage::Classify);
        let m = MockTextProvider::new().with_fixture_dir(dir.path()).recording();
        let first = m.complete(&r).await.unwrap();
        let replay = MockTextProvider::new().with_fixture_dir(dir.path()).strict();
        assert_eq!(replay.complete(&r).await.unwrap(), first);
    }

    #[tokio::test]
    async fn faults() {
        let m = MockTextProvider::new();
        m.garbage(Stage::Classify, 1);
        assert!(serde_json::from_str::<serde_json::Value>(&m.complete(&req(Stage::Classify)).await.unwrap()).is_err());
        m.outage(Stage::Classify);
        assert!(matches!(m.complete(&req(Stage::Classify)).await, Err(ProviderError::Unreachable(_))));
    }

    #[test]
    fn embedding_is_unit_and_stable() {
        let a = hashed_embedding("Alex plays at the playground.");
        assert_eq!(a.len(), EMBEDDING_DIM);
        assert!((a.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-9);
        assert_eq!(a, hashed_embedding("Alex plays at the playground."));
        assert!(hashed_embedding("").iter().all(|x| *x == 0.0));
    }

    #[tokio::test]
    async fn image_refs_are_content_addressed() {
        let m = MockImageProvider::new(Duration::ZERO);
        let r = ImageRequest { section_id: "intro".into(), prompt: "x".into(), reference_photos: vec![] };
        let a = m.generate(&r).await.unwrap();
        assert_eq!(a, m.generate(&r).await.unwrap());
        m.fail_section("intro", 1);
        assert!(m.generate(&r).await.is_err());
        assert!(m.generate(&r).await.is_ok());
    }
}
