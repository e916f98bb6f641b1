//! Providers for an OpenAI-compatible HTTP API.
//!
//! Configuration comes from the environment:
//! `FORGE_API_KEY` (required), `FORGE_API_BASE` (default
//! `https://api.openai.com/v1`), `FORGE_TEXT_MODEL`, `FORGE_IMAGE_MODEL`,
//! `FORGE_EMBEDDING_MODEL`, and `FORGE_IMAGE_DIR` for generated images.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use base64::Engine;
use serde_json::{json, Value};

use super::job::write_atomic;
use super::provider::{
    EmbeddingProvider, ImageProvider, ImageRequest, ProviderError, ProviderSuite, TextProvider, TextRequest,
};
use crate::digest::ImageRef;

#[derive(Debug, Clone)]
pub struct LiveConfig {
    pub base_url: String,
    pub api_key: String,
    pub text_model: String,
    pub image_model: String,
    pub embedding_model: String,
    /// Where generated images are written, named by their digest.
    pub image_dir: PathBuf,
    pub timeout: Duration,
}

impl LiveConfig {
    pub fn from_env() -> Result<Self, ProviderError> {
        let var = |k: &str, d: &str| std::env::var(k).unwrap_or_else(|_| d.to_string());
        let api_key = std::env::var("FORGE_API_KEY")
            .map_err(|_| ProviderError::Rejected("FORGE_API_KEY is not set".into()))?;
        Ok(Self {
            base_url: var("FORGE_API_BASE", "https://api.openai.com/v1").trim_end_matches('/').to_string(),
            api_key,
            text_model: var("FORGE_TEXT_MODEL", "gpt-4o"),
            image_model: var("FORGE_IMAGE_MODEL", "gpt-image-1"),
            embedding_model: var("FORGE_EMBEDDING_MODEL", "text-embedding-3-small"),
            image_dir: PathBuf::from(var("FORGE_IMAGE_DIR", "images")),
            timeout: Duration::from_secs(180),
        })
    }
}

#[derive(Debug, Clone)]
pub struct LiveClient {
    config: LiveConfig,
    http: reqwest::Client,
}

impl LiveClient {
    pub fn new(config: LiveConfig) -> Result<Self, ProviderError> {
        let http = reqwest::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| ProviderError::Unreachable(e.to_string()))?;
        Ok(Self { config, http })
    }

    pub fn suite(self) -> ProviderSuite {
        let c = Arc::new(self);
        ProviderSuite { text: c.clone(), image: c.clone(), embedding: c }
    }

    async fn post(&self, path: &str, body: Value) -> Result<Value, ProviderError> {
        let response = self
            .http
            .post(format!("{}/{path}", self.config.base_url))
            .bearer_auth(&self.config.api_key)
            .json(&body)
            .send()
            .await
            .map_err(|e| ProviderError::Unreachable(e.to_string()))?;
        let status = response.status();
        let value: Value = response.json().await.map_err(|e| ProviderError::Unreachable(e.to_string()))?;
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(ProviderError::Unreachable(format!("{status}: {value}")));
        }
        if !status.is_success() {
            return Err(ProviderError::Rejected(format!("{status}: {value}")));
        }
        Ok(value)
    }
}

fn missing(what: &str) -> ProviderError {
    ProviderError::Rejected(format!("response has no {what}"))
}

#[async_trait]
impl TextProvider for LiveClient {
    async fn complete(&self, request: &TextRequest) -> Result<String, ProviderError> {
        let body = json!({
            "model": self.config.text_model,
            "messages": [{ "role": "user", "content": request.prompt }],
            "response_format": { "type": "json_object" },
        });
        let v = self.post("chat/completions", body).await?;
        v.pointer("/choices/0/message/content").and_then(Value::as_str).map(str::to_string).ok_or_else(|| missing("message content"))
    }
}

#[async_trait]
impl ImageProvider for LiveClient {
    /// Reference photos are named in the prompt; the generations endpoint
    /// takes no image inputs.
    async fn generate(&self, request: &ImageRequest) -> Result<ImageRef, ProviderError> {
        let body = json!({ "model": self.config.image_model, "prompt": request.prompt, "n": 1, "size": "1024x1024" });
        let v = self.post("images/generations", body).await?;
        let b64 = v.pointer("/data/0/b64_json").and_then(Value::as_str).ok_or_else(|| missing("image data"))?;
        let bytes = base64::engine::general_purpose::STANDARD
            .decode(b64)
            .map_err(|e| ProviderError::Rejected(e.to_string()))?;
        let image = ImageRef::for_bytes(&bytes);
        std::fs::create_dir_all(&self.config.image_dir).map_err(|e| ProviderError::Rejected(e.to_string()))?;
        let name = image.as_str().trim_start_matches("sha256:");
        write_atomic(&self.config.image_dir.join(format!("{name}.png")), &bytes)
            .map_err(|e| ProviderError::Rejected(e.to_string()))?;
        Ok(image)
    }
}

#[async_trait]
impl EmbeddingProvider for LiveClient {
    async fn embed(&self, text: &str) -> Result<Vec<f64>, ProviderError> {
        let body = json!({ "model": self.config.embedding_model, "input": text });
        let v = self.post("embeddings", body).await?;
        let arr = v.pointer("/data/0/embedding").and_then(Value::as_array).ok_or_else(|| missing("embedding"))?;
        arr.iter().map(|x| x.as_f64().ok_or_else(|| missing("numeric embedding"))).collect()
    }
}
