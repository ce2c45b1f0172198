//! Uniform client layer for the five model capabilities.
//!
//! Every capability is a JSON request/response pair sent to one of the
//! `/v1/*` endpoints. A [`Transport`] moves those JSON values (over HTTP, out
//! of a fixture file, or through the on-disk cache) and [`Backends`] wraps a
//! transport with typed methods and precondition checks.

mod cache;
mod canonical;
mod http;
mod mock;

use std::fmt;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use base64::Engine;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub use cache::{BackendCallRecord, CacheStore, CachedTransport};
pub use canonical::{canonical_json, prompt_hash, request_hash};
pub use http::{HttpConfig, HttpTransport, RetryPolicy};
pub use mock::{hashing_embedding, ChatFallback, ChatScript, ImageFixture, MockFixtures, MockTransport};

/// The four image groups of the evaluation dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Region {
    #[serde(alias = "west")]
    West,
    #[serde(alias = "South Asia", alias = "south_asia")]
    SouthAsia,
    #[serde(alias = "africa")]
    Africa,
    #[serde(alias = "East Asia", alias = "east_asia")]
    EastAsia,
}

impl Region {
    pub const ALL: [Region; 4] = [Region::West, Region::SouthAsia, Region::Africa, Region::EastAsia];

    pub fn label(self) -> &'static str {
        match self {
            Region::West => "West",
            Region::SouthAsia => "South Asia",
            Region::Africa => "Africa",
            Region::EastAsia => "East Asia",
        }
    }

    /// Identifier form used in file names, CSV cells and participant ids.
    pub fn key(self) -> &'static str {
        match self {
            Region::West => "West",
            Region::SouthAsia => "SouthAsia",
            Region::Africa => "Africa",
            Region::EastAsia => "EastAsia",
        }
    }

    pub fn parse(s: &str) -> Option<Region> {
        let folded: String = s.chars().filter(|c| c.is_alphanumeric()).collect::<String>().to_lowercase();
        match folded.as_str() {
            "west" => Some(Region::West),
            "southasia" => Some(Region::SouthAsia),
            "africa" => Some(Region::Africa),
            "eastasia" => Some(Region::EastAsia),
            _ => None,
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// A region-labelled image from a dataset manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRef {
    pub image_id: String,
    pub uri: String,
    pub region: Region,
}

impl ImageRef {
    pub fn new(image_id: impl Into<String>, uri: impl Into<String>, region: Region) -> Self {
        Self { image_id: image_id.into(), uri: uri.into(), region }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChatRole {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: ChatRole,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: ChatRole::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: ChatRole::User, content: content.into() }
    }
}

/// Sampling parameters for the chat endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChatParams {
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for ChatParams {
    fn default() -> Self {
        Self { temperature: 0.6, max_tokens: 100 }
    }
}

impl ChatParams {
    pub fn validate(&self) -> Result<(), BackendError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(BackendError::Precondition(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(BackendError::Precondition("max_tokens must be positive".into()));
        }
        Ok(())
    }
}

/// A dense embedding returned by one of the embed endpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(pub Vec<f64>);

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Cosine similarity; zero when either side has zero norm.
    pub fn cosine(&self, other: &EmbeddingVector) -> f64 {
        let (na, nb) = (self.norm(), other.norm());
        if na == 0.0 || nb == 0.0 {
            return 0.0;
        }
        let dot: f64 = self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum();
        dot / (na * nb)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Endpoint {
    Caption,
    Vqa,
    Chat,
    EmbedText,
    EmbedImage,
}

impl Endpoint {
    pub const ALL: [Endpoint; 5] =
        [Endpoint::Caption, Endpoint::Vqa, Endpoint::Chat, Endpoint::EmbedText, Endpoint::EmbedImage];

    pub fn as_str(self) -> &'static str {
        match self {
            Endpoint::Caption => "caption",
            Endpoint::Vqa => "vqa",
            Endpoint::Chat => "chat",
            Endpoint::EmbedText => "embed_text",
            Endpoint::EmbedImage => "embed_image",
        }
    }

    pub fn path(self) -> &'static str {
        match self {
            Endpoint::Caption => "/v1/caption",
            Endpoint::Vqa => "/v1/vqa",
            Endpoint::Chat => "/v1/chat",
            Endpoint::EmbedText => "/v1/embed_text",
            Endpoint::EmbedImage => "/v1/embed_image",
        }
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transport error on {endpoint}: {message}")]
    Transport { endpoint: Endpoint, message: String, retryable: bool },
    #[error("{endpoint} returned HTTP {status} ({code}): {message}")]
    Status { endpoint: Endpoint, status: u16, code: String, message: String },
    #[error("provider refused the {endpoint} request: {message}")]
    Refusal { endpoint: Endpoint, message: String },
    #[error("backend configuration error: {0}")]
    Config(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("malformed {endpoint} response: {message}")]
    Protocol { endpoint: Endpoint, message: String },
}

impl BackendError {
    /// Transport failures and 5xx responses are worth retrying; nothing else is.
    pub fn is_retryable(&self) -> bool {
        match self {
            BackendError::Transport { retryable, .. } => *retryable,
            BackendError::Status { status, .. } => *status >= 500,
            _ => false,
        }
    }

    fn protocol(endpoint: Endpoint, message: impl Into<String>) -> Self {
        BackendError::Protocol { endpoint, message: message.into() }
    }
}

/// Error body shared by every endpoint: `{"error": {"code", "message"}}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireError {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WireErrorBody {
    pub error: WireError,
}

pub(crate) fn error_from_wire(endpoint: Endpoint, status: u16, err: WireError) -> BackendError {
    match err.code.as_str() {
        "refusal" | "content_filter" => BackendError::Refusal { endpoint, message: err.message },
        _ => BackendError::Status { endpoint, status, code: err.code, message: err.message },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionRequest {
    pub image_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_uri: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_b64: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionResponse {
    pub caption: String,
    pub model: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VqaRequest {
    pub image_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_uri: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_b64: Option<String>,
    pub question: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VqaResponse {
    pub answer: String,
    pub model: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub model: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedTextRequest {
    pub texts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedTextResponse {
    pub vectors: Vec<Vec<f64>>,
    pub model: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedImageRequest {
    pub image_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_uri: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_b64: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedImageResponse {
    pub vector: Vec<f64>,
    pub model: String,
}

/// Moves one JSON request to an endpoint and returns its JSON response.
///
/// Implementations must be safe to share between pipeline workers.
pub trait Transport: Send + Sync {
    fn call(&self, endpoint: Endpoint, request: &Value) -> Result<Value, BackendError>;
}

impl<T: Transport + ?Sized> Transport for Arc<T> {
    fn call(&self, endpoint: Endpoint, request: &Value) -> Result<Value, BackendError> {
        (**self).call(endpoint, request)
    }
}

/// Counts invocations of the wrapped transport.
pub struct Counting<T> {
    inner: T,
    calls: AtomicUsize,
}

impl<T: Transport> Counting<T> {
    pub fn new(inner: T) -> Self {
        Self { inner, calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<T: Transport> Transport for Counting<T> {
    fn call(&self, endpoint: Endpoint, request: &Value) -> Result<Value, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.call(endpoint, request)
    }
}

/// How images travel in requests.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImagePayload {
    /// Send only the manifest uri; the server reads the image itself.
    #[default]
    Uri,
    /// Read the file locally and inline it as base64 next to the uri.
    Base64,
}

/// Typed client over a [`Transport`].
#[derive(Clone)]
pub struct Backends {
    transport: Arc<dyn Transport>,
    payload: ImagePayload,
}

impl Backends {
    pub fn new(transport: Arc<dyn Transport>) -> Self {
        Self { transport, payload: ImagePayload::Uri }
    }

    pub fn with_image_payload(mut self, payload: ImagePayload) -> Self {
        self.payload = payload;
        self
    }

    pub fn transport(&self) -> &Arc<dyn Transport> {
        &self.transport
    }

    fn image_fields(&self, image: &ImageRef) -> Result<(Option<String>, Option<String>), BackendError> {
        match self.payload {
            ImagePayload::Uri => Ok((Some(image.uri.clone()), None)),
            ImagePayload::Base64 => {
                let bytes = std::fs::read(Path::new(&image.uri)).map_err(|e| {
                    BackendError::Config(format!("cannot read image {} at {}: {e}", image.image_id, image.uri))
                })?;
                Ok((Some(image.uri.clone()), Some(base64::engine::general_purpose::STANDARD.encode(bytes))))
            }
        }
    }

    fn send<Req: Serialize, Resp: DeserializeOwned>(
        &self,
        endpoint: Endpoint,
        request: &Req,
    ) -> Result<Resp, BackendError> {
        let value = serde_json::to_value(request)
            .map_err(|e| BackendError::Precondition(format!("unserializable {endpoint} request: {e}")))?;
        let response = self.transport.call(endpoint, &value)?;
        serde_json::from_value(response).map_err(|e| BackendError::protocol(endpoint, e.to_string()))
    }

    pub fn caption(&self, image: &ImageRef) -> Result<String, BackendError> {
        let (image_uri, image_b64) = self.image_fields(image)?;
        let req = CaptionRequest { image_id: image.image_id.clone(), image_uri, image_b64 };
        let resp: CaptionResponse = self.send(Endpoint::Caption, &req)?;
        let caption = resp.caption.trim();
        if caption.is_empty() {
            return Err(BackendError::protocol(Endpoint::Caption, "empty caption"));
        }
        Ok(caption.to_string())
    }

    /// The answer may be empty when the model abstains.
    pub fn vqa(&self, image: &ImageRef, question: &str) -> Result<String, BackendError> {
        if question.trim().is_empty() {
            return Err(BackendError::Precondition("empty VQA question".into()));
        }
        let (image_uri, image_b64) = self.image_fields(image)?;
        let req = VqaRequest { image_id: image.image_id.clone(), image_uri, image_b64, question: question.to_string() };
        let resp: VqaResponse = self.send(Endpoint::Vqa, &req)?;
        Ok(resp.answer.trim().to_string())
    }

    pub fn chat(&self, messages: &[ChatMessage], params: ChatParams) -> Result<String, BackendError> {
        if messages.is_empty() {
            return Err(BackendError::Precondition("chat needs at least one message".into()));
        }
        if messages.iter().any(|m| m.content.is_empty()) {
            return Err(BackendError::Precondition("chat message with empty content".into()));
        }
        params.validate()?;
        let req = ChatRequest {
            messages: messages.to_vec(),
            temperature: params.temperature,
            max_tokens: params.max_tokens,
        };
        let resp: ChatResponse = self.send(Endpoint::Chat, &req)?;
        Ok(resp.text)
    }

    pub fn embed_text(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, BackendError> {
        if texts.is_empty() {
            return Err(BackendError::Precondition("embed_text needs at least one text".into()));
        }
        let req = EmbedTextRequest { texts: texts.to_vec() };
        let resp: EmbedTextResponse = self.send(Endpoint::EmbedText, &req)?;
        if resp.vectors.len() != texts.len() {
            return Err(BackendError::protocol(
                Endpoint::EmbedText,
                format!("{} vectors for {} texts", resp.vectors.len(), texts.len()),
            ));
        }
        let dim = resp.vectors[0].len();
        if dim == 0 || resp.vectors.iter().any(|v| v.len() != dim) {
            return Err(BackendError::protocol(Endpoint::EmbedText, "vectors of inconsistent or zero dimension"));
        }
        Ok(resp.vectors.into_iter().map(EmbeddingVector).collect())
    }

    pub fn embed_image(&self, image: &ImageRef) -> Result<EmbeddingVector, BackendError> {
        let (image_uri, image_b64) = self.image_fields(image)?;
        let req = EmbedImageRequest { image_id: image.image_id.clone(), image_uri, image_b64 };
        let resp: EmbedImageResponse = self.send(Endpoint::EmbedImage, &req)?;
        if resp.vector.is_empty() {
            return Err(BackendError::protocol(Endpoint::EmbedImage, "empty vector"));
        }
        Ok(EmbeddingVector(resp.vector))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn fixture_backends() -> Backends {
        let fixtures: MockFixtures = serde_json::from_value(json!({
            "captions": {"img1": "a house"},
            "vqa": {"img1": {"What is the architectural style of the buildings in this image?": "modern"}},
            "chat_fallback": "echo",
            "text_embeddings": {"a": [1.0, 0.0], "b": [0.0, 1.0]},
            "image_embeddings": {"img1": [0.5, 0.5]}
        }))
        .unwrap();
        Backends::new(Arc::new(MockTransport::new(fixtures)))
    }

    fn img1() -> ImageRef {
        ImageRef::new("img1", "images/img1.jpg", Region::Africa)
    }

    #[test]
    fn caption_fixture_identity() {
        assert_eq!(fixture_backends().caption(&img1()).unwrap(), "a house");
    }

    #[test]
    fn caption_unknown_image_is_config_error() {
        let err = fixture_backends().caption(&ImageRef::new("nope", "x", Region::West)).unwrap_err();
        assert!(matches!(err, BackendError::Config(_)), "{err}");
        assert!(!err.is_retryable());
    }

    #[test]
    fn vqa_is_deterministic() {
        let b = fixture_backends();
        let q = "What is the architectural style of the buildings in this image?";
        let first = b.vqa(&img1(), q).unwrap();
        assert_eq!(first, "modern");
        assert_eq!(b.vqa(&img1(), q).unwrap(), first);
        assert!(matches!(b.vqa(&img1(), "  "), Err(BackendError::Precondition(_))));
    }

    #[test]
    fn chat_echo_and_preconditions() {
        let b = fixture_backends();
        assert_eq!(b.chat(&[ChatMessage::user("X")], ChatParams::default()).unwrap(), "X");
        assert!(matches!(b.chat(&[], ChatParams::default()), Err(BackendError::Precondition(_))));
        let bad = ChatParams { temperature: 3.0, max_tokens: 10 };
        assert!(b.chat(&[ChatMessage::user("X")], bad).is_err());
    }

    #[test]
    fn embed_text_order_and_identity() {
        let b = fixture_backends();
        let v = b.embed_text(&["b".into(), "a".into(), "a".into()]).unwrap();
        assert_eq!(v[0].0, vec![0.0, 1.0]);
        assert_eq!(v[1], v[2]);
        assert!(matches!(b.embed_text(&[]), Err(BackendError::Precondition(_))));
    }

    #[test]
    fn embed_image_fixture_and_miss() {
        let b = fixture_backends();
        assert_eq!(b.embed_image(&img1()).unwrap().0, vec![0.5, 0.5]);
        assert_eq!(b.embed_image(&img1()).unwrap(), b.embed_image(&img1()).unwrap());
        assert!(matches!(
            b.embed_image(&ImageRef::new("zzz", "x", Region::West)),
            Err(BackendError::Config(_))
        ));
    }

    #[test]
    fn base64_payload_reads_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.bin");
        std::fs::write(&path, b"abc").unwrap();
        let b = fixture_backends().with_image_payload(ImagePayload::Base64);
        let image = ImageRef::new("img1", path.to_string_lossy(), Region::West);
        let (uri, b64) = b.image_fields(&image).unwrap();
        assert_eq!(b64.as_deref(), Some("YWJj"));
        assert!(uri.is_some());
        let missing = ImageRef::new("img1", "/nonexistent/file.jpg", Region::West);
        assert!(matches!(b.image_fields(&missing), Err(BackendError::Config(_))));
    }

    #[test]
    fn region_parsing_accepts_labels_and_keys() {
        assert_eq!(Region::parse("South Asia"), Some(Region::SouthAsia));
        assert_eq!(Region::parse("east_asia"), Some(Region::EastAsia));
        assert_eq!(Region::parse("mars"), None);
        let r: Region = serde_json::from_str("\"East Asia\"").unwrap();
        assert_eq!(r, Region::EastAsia);
    }

    #[test]
    fn cosine_handles_zero_vectors() {
        let z = EmbeddingVector(vec![0.0, 0.0]);
        let a = EmbeddingVector(vec![1.0, 0.0]);
        assert_eq!(z.cosine(&a), 0.0);
        assert!((a.cosine(&a) - 1.0).abs() < 1e-12);
    }
}
