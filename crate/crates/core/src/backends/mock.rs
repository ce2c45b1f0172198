//! Deterministic fixture-backed transport.
//!
//! Fixtures are one human-editable JSON file. Lookup order per call: the
//! raw `responses` table keyed by `"<endpoint>:<request_hash>"`, then the
//! per-endpoint tables below.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::{
    error_from_wire, prompt_hash, request_hash, BackendError, CaptionRequest, ChatRequest, ChatRole,
    EmbedImageRequest, EmbedTextRequest, Endpoint, Transport, VqaRequest, WireError,
};
use crate::metrics::tokenize;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChatFallback {
    /// Reply with the last user message.
    Echo,
    /// Unmatched prompts are a configuration error.
    #[default]
    Error,
}

/// One scripted chat reply. A script matches when its `prompt_hash` equals
/// the hash of the last user message, or when that message contains
/// `contains`. Scripts are tried in file order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChatScript {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<WireError>,
}

impl ChatScript {
    pub fn reply_to(contains: impl Into<String>, reply: impl Into<String>) -> Self {
        Self { contains: Some(contains.into()), reply: Some(reply.into()), ..Self::default() }
    }

    fn matches(&self, prompt: &str, hash: &str) -> bool {
        self.prompt_hash.as_deref() == Some(hash)
            || self.contains.as_deref().is_some_and(|needle| prompt.contains(needle))
    }
}

/// Image embedding fixture: either a literal vector or a description whose
/// hashing embedding stands in for the image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ImageFixture {
    Vector(Vec<f64>),
    Description(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MockFixtures {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub responses: BTreeMap<String, Value>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub captions: BTreeMap<String, String>,
    /// image_id → question → answer.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub vqa: BTreeMap<String, BTreeMap<String, String>>,
    /// Answer for questions without an entry. Unset means the model abstains
    /// (empty answer) on known images and errors on unknown ones.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vqa_default: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub chat: Vec<ChatScript>,
    #[serde(default)]
    pub chat_fallback: ChatFallback,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub text_embeddings: BTreeMap<String, Vec<f64>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub image_embeddings: BTreeMap<String, ImageFixture>,
    /// When set, texts without a fixture vector get a hashing embedding of
    /// this dimension.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hashing_dim: Option<usize>,
}

impl MockFixtures {
    pub fn load(path: &std::path::Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::Config(format!("cannot read fixtures {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| BackendError::Config(format!("invalid fixtures {}: {e}", path.display())))
    }
}

const DEFAULT_HASHING_DIM: usize = 64;

/// Feature-hashed bag-of-words embedding: each token adds ±1 to one of `dim`
/// buckets chosen by its SHA-256 digest.
pub fn hashing_embedding(text: &str, dim: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim.max(1)];
    for token in tokenize(text) {
        let digest = Sha256::digest(token.as_bytes());
        let mut word = [0u8; 8];
        word.copy_from_slice(&digest[..8]);
        let h = u64::from_le_bytes(word);
        let idx = (h % v.len() as u64) as usize;
        v[idx] += if h >> 63 == 0 { 1.0 } else { -1.0 };
    }
    v
}

fn truncate_tokens(text: &str, max_tokens: u32) -> String {
    let words: Vec<&str> = text.split_whitespace().collect();
    if words.len() <= max_tokens as usize {
        text.to_string()
    } else {
        words[..max_tokens as usize].join(" ")
    }
}

#[derive(Debug, Clone)]
pub struct MockTransport {
    fixtures: MockFixtures,
}

impl MockTransport {
    pub fn new(fixtures: MockFixtures) -> Self {
        Self { fixtures }
    }

    pub fn fixtures(&self) -> &MockFixtures {
        &self.fixtures
    }

    fn model(&self) -> &str {
        self.fixtures.model.as_deref().unwrap_or("mock")
    }

    fn parse<T: serde::de::DeserializeOwned>(endpoint: Endpoint, request: &Value) -> Result<T, BackendError> {
        serde_json::from_value(request.clone())
            .map_err(|e| BackendError::Precondition(format!("invalid {endpoint} request: {e}")))
    }

    fn miss(endpoint: Endpoint, what: &str) -> BackendError {
        BackendError::Config(format!("mock {endpoint} has no fixture for {what}"))
    }

    fn answer(&self, endpoint: Endpoint, request: &Value) -> Result<Value, BackendError> {
        let model = self.model();
        match endpoint {
            Endpoint::Caption => {
                let req: CaptionRequest = Self::parse(endpoint, request)?;
                let caption = self.fixtures.captions.get(&req.image_id).ok_or_else(|| Self::miss(endpoint, &req.image_id))?;
                Ok(json!({"caption": caption, "model": model}))
            }
            Endpoint::Vqa => {
                let req: VqaRequest = Self::parse(endpoint, request)?;
                let answer = match self.fixtures.vqa.get(&req.image_id) {
                    Some(table) => table
                        .get(&req.question)
                        .cloned()
                        .unwrap_or_else(|| self.fixtures.vqa_default.clone().unwrap_or_default()),
                    None => self.fixtures.vqa_default.clone().ok_or_else(|| Self::miss(endpoint, &req.image_id))?,
                };
                Ok(json!({"answer": answer, "model": model}))
            }
            Endpoint::Chat => {
                let req: ChatRequest = Self::parse(endpoint, request)?;
                let prompt = req
                    .messages
                    .iter()
                    .rev()
                    .find(|m| m.role == ChatRole::User)
                    .map(|m| m.content.as_str())
                    .ok_or_else(|| BackendError::Precondition("chat request without a user message".into()))?;
                let hash = prompt_hash(prompt);
                let reply = match self.fixtures.chat.iter().find(|s| s.matches(prompt, &hash)) {
                    Some(script) => {
                        if let Some(err) = &script.error {
                            return Err(error_from_wire(endpoint, 400, err.clone()));
                        }
                        script.reply.clone().unwrap_or_default()
                    }
                    None => match self.fixtures.chat_fallback {
                        ChatFallback::Echo => prompt.to_string(),
                        ChatFallback::Error => return Err(Self::miss(endpoint, &format!("prompt {hash}"))),
                    },
                };
                Ok(json!({"text": truncate_tokens(&reply, req.max_tokens), "model": model}))
            }
            Endpoint::EmbedText => {
                let req: EmbedTextRequest = Self::parse(endpoint, request)?;
                let vectors = req
                    .texts
                    .iter()
                    .map(|t| match (self.fixtures.text_embeddings.get(t), self.fixtures.hashing_dim) {
                        (Some(v), _) => Ok(v.clone()),
                        (None, Some(dim)) => Ok(hashing_embedding(t, dim)),
                        (None, None) => Err(Self::miss(endpoint, &format!("text {t:?}"))),
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(json!({"vectors": vectors, "model": model}))
            }
            Endpoint::EmbedImage => {
                let req: EmbedImageRequest = Self::parse(endpoint, request)?;
                let vector = match self.fixtures.image_embeddings.get(&req.image_id) {
                    Some(ImageFixture::Vector(v)) => v.clone(),
                    Some(ImageFixture::Description(d)) => {
                        hashing_embedding(d, self.fixtures.hashing_dim.unwrap_or(DEFAULT_HASHING_DIM))
                    }
                    None => return Err(Self::miss(endpoint, &req.image_id)),
                };
                Ok(json!({"vector": vector, "model": model}))
            }
        }
    }
}

impl Transport for MockTransport {
    fn call(&self, endpoint: Endpoint, request: &Value) -> Result<Value, BackendError> {
        let key = format!("{}:{}", endpoint.as_str(), request_hash(endpoint, request));
        if let Some(stored) = self.fixtures.responses.get(&key) {
            if let Some(err) = stored.get("error") {
                let err: WireError = serde_json::from_value(err.clone())
                    .map_err(|e| BackendError::Config(format!("bad error fixture {key}: {e}")))?;
                return Err(error_from_wire(endpoint, 400, err));
            }
            return Ok(stored.clone());
        }
        self.answer(endpoint, request)
    }
}
