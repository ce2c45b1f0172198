use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::backends::{
    BackendError, Backends, CacheStore, CachedTransport, ChatParams, Counting, Endpoint, HttpConfig, HttpTransport,
    ImagePayload, MockFixtures, MockTransport, RetryPolicy, Transport,
};
use crate::captioning::{AblationFlag, CaptionSettings};
use crate::metrics::{CultureLexicon, CLIP_SCORE_WEIGHT};
use crate::question_bank::{ClusterParams, QuestionBank};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// Mock fixture file.
    pub fixtures: Option<PathBuf>,
    pub base_url: Option<String>,
    /// Per-endpoint base URL overrides, keyed by endpoint name.
    pub endpoints: BTreeMap<Endpoint, String>,
    /// Name of the environment variable holding the bearer token.
    pub token_env: Option<String>,
    /// Per-endpoint token variables, e.g. `chat = "OPENAI_API_KEY"`.
    pub endpoint_token_env: BTreeMap<Endpoint, String>,
    /// Send chat in OpenAI chat-completions format with this model name.
    pub openai_chat_model: Option<String>,
    pub timeout_secs: u64,
    pub retry_attempts: u32,
    pub retry_base_ms: u64,
    pub image_payload: ImagePayload,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Mock,
            fixtures: None,
            base_url: None,
            endpoints: BTreeMap::new(),
            token_env: None,
            endpoint_token_env: BTreeMap::new(),
            openai_chat_model: None,
            timeout_secs: 120,
            retry_attempts: 3,
            retry_base_ms: 500,
            image_payload: ImagePayload::Uri,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    pub no_caption_prompt: bool,
    pub no_extraction: bool,
}

impl AblationConfig {
    pub fn flags(&self) -> std::collections::BTreeSet<AblationFlag> {
        let mut flags = std::collections::BTreeSet::new();
        if self.no_caption_prompt {
            flags.insert(AblationFlag::NoCaptionPrompt);
        }
        if self.no_extraction {
            flags.insert(AblationFlag::NoExtraction);
        }
        flags
    }
}

/// `cic.toml`. Relative paths resolve against the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Images processed concurrently.
    pub workers: usize,
    pub lexicon: Option<PathBuf>,
    pub bank: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    pub output_dir: PathBuf,
    /// Label of the culturally-aware captions in score tables.
    pub model_label: String,
    /// Label of the baseline captions in score tables.
    pub baseline_label: String,
    pub ascii_apostrophe: bool,
    pub clip_weight: f64,
    pub chat: ChatParams,
    pub extraction_chat: ChatParams,
    pub clustering: ClusterParams,
    pub ablation: AblationConfig,
    pub backend: BackendConfig,
    #[serde(skip)]
    base_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            workers: 4,
            lexicon: None,
            bank: None,
            cache_dir: None,
            output_dir: PathBuf::from("out"),
            model_label: "CIC".into(),
            baseline_label: "baseline".into(),
            ascii_apostrophe: false,
            clip_weight: CLIP_SCORE_WEIGHT,
            chat: ChatParams::default(),
            extraction_chat: ChatParams::default(),
            clustering: ClusterParams::default(),
            ablation: AblationConfig::default(),
            backend: BackendConfig::default(),
            base_dir: PathBuf::from("."),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Fatal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub message: String,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = match self.severity {
            Severity::Warning => "warning",
            Severity::Fatal => "fatal",
        };
        write!(f, "{tag}: {}", self.message)
    }
}

pub fn has_fatal(diagnostics: &[Diagnostic]) -> bool {
    diagnostics.iter().any(|d| d.severity == Severity::Fatal)
}

/// The transport stack built from a config: the typed client plus handles
/// on the call counter and the cache.
type CountedTransport = Arc<Counting<Arc<dyn Transport>>>;

pub struct BackendStack {
    pub backends: Backends,
    counter: Arc<Counting<Arc<dyn Transport>>>,
    cache: Option<Arc<CachedTransport<CountedTransport>>>,
}

impl BackendStack {
    /// Wraps `inner` with a call counter and, if `cache_dir` is set, a cache.
    pub fn new(inner: Arc<dyn Transport>, cache_dir: Option<&Path>, payload: ImagePayload) -> Self {
        let counter = Arc::new(Counting::new(inner));
        let (transport, cache): (Arc<dyn Transport>, _) = match cache_dir {
            Some(dir) => {
                let cached = Arc::new(CachedTransport::new(counter.clone(), CacheStore::new(dir)));
                (cached.clone(), Some(cached))
            }
            None => (counter.clone(), None),
        };
        Self { backends: Backends::new(transport).with_image_payload(payload), counter, cache }
    }

    /// Calls that reached the underlying backend.
    pub fn backend_calls(&self) -> usize {
        self.counter.calls()
    }

    pub fn cache_hits(&self) -> usize {
        self.cache.as_ref().map_or(0, |c| c.hits())
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self, PipelineError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| PipelineError::Io { path: path.display().to_string(), source })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml_str(&text, &base)
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn with_base_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.base_dir = dir.into();
        self
    }

    /// `path` joined onto the config directory unless absolute.
    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn output_path(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    pub fn caption_settings(&self) -> CaptionSettings {
        CaptionSettings {
            flags: self.ablation.flags(),
            chat: self.chat,
            extraction_chat: self.extraction_chat,
            ascii_apostrophe: self.ascii_apostrophe,
        }
    }

    pub fn load_lexicon(&self) -> Result<CultureLexicon, PipelineError> {
        let path = self.lexicon.as_ref().ok_or_else(|| PipelineError::Config("no lexicon configured".into()))?;
        Ok(CultureLexicon::load_jsonl(&self.resolve(path))?)
    }

    pub fn load_bank(&self) -> Result<QuestionBank, PipelineError> {
        let path = self.bank.as_ref().ok_or_else(|| PipelineError::Config("no question bank configured".into()))?;
        Ok(QuestionBank::load_jsonl(&self.resolve(path))?)
    }

    fn token(var: &str) -> Result<String, BackendError> {
        std::env::var(var).map_err(|_| BackendError::Config(format!("environment variable {var} is not set")))
    }

    /// The raw transport named by `[backend]`, without cache or counter.
    pub fn transport(&self) -> Result<Arc<dyn Transport>, PipelineError> {
        let b = &self.backend;
        match b.kind {
            BackendKind::Mock => {
                let path = b.fixtures.as_ref().ok_or_else(|| PipelineError::Config("mock backend needs `fixtures`".into()))?;
                let fixtures = MockFixtures::load(&self.resolve(path))?;
                Ok(Arc::new(MockTransport::new(fixtures)))
            }
            BackendKind::Http => {
                let base = b.base_url.clone().ok_or_else(|| PipelineError::Config("http backend needs `base_url`".into()))?;
                let mut http = HttpConfig::new(base);
                http.endpoint_urls = b.endpoints.clone();
                http.bearer_token = b.token_env.as_deref().map(Self::token).transpose()?;
                for (endpoint, var) in &b.endpoint_token_env {
                    http.endpoint_tokens.insert(*endpoint, Self::token(var)?);
                }
                http.timeout = Duration::from_secs(b.timeout_secs);
                http.retry = RetryPolicy { attempts: b.retry_attempts, base_delay: Duration::from_millis(b.retry_base_ms) };
                http.openai_chat_model = b.openai_chat_model.clone();
                Ok(Arc::new(HttpTransport::new(http)))
            }
        }
    }

    pub fn backend_stack(&self) -> Result<BackendStack, PipelineError> {
        let cache = self.cache_dir.as_ref().map(|d| self.resolve(d));
        Ok(BackendStack::new(self.transport()?, cache.as_deref(), self.backend.image_payload))
    }

    /// Checks the config without touching any backend. An empty list means
    /// the config is usable.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let mut fatal = |message: String| out.push(Diagnostic { severity: Severity::Fatal, message });
        if self.workers == 0 {
            fatal("workers must be at least 1".into());
        }
        if let Err(e) = self.chat.validate() {
            fatal(format!("chat: {e}"));
        }
        if let Err(e) = self.extraction_chat.validate() {
            fatal(format!("extraction_chat: {e}"));
        }
        if let Err(e) = self.clustering.validate() {
            fatal(format!("clustering: {e}"));
        }
        if self.clip_weight.is_nan() || self.clip_weight <= 0.0 {
            fatal(format!("clip_weight must be positive, got {}", self.clip_weight));
        }
        match &self.lexicon {
            None => fatal("lexicon path is not set".into()),
            Some(p) if !self.resolve(p).is_file() => fatal(format!("lexicon {} does not exist", self.resolve(p).display())),
            Some(_) => {
                if let Err(e) = self.load_lexicon() {
                    fatal(e.to_string());
                }
            }
        }
        match &self.bank {
            None => fatal("question bank path is not set".into()),
            Some(p) if !self.resolve(p).is_file() => fatal(format!("question bank {} does not exist", self.resolve(p).display())),
            Some(_) => match self.load_bank() {
                Ok(bank) => {
                    let missing = bank.missing_representatives();
                    if !missing.is_empty() {
                        let names: Vec<_> = missing.iter().map(|c| c.label()).collect();
                        fatal(format!("question bank has no selected question for {}", names.join(", ")));
                    }
                }
                Err(e) => fatal(e.to_string()),
            },
        }
        match self.backend.kind {
            BackendKind::Mock => match &self.backend.fixtures {
                None => fatal("mock backend needs `fixtures`".into()),
                Some(p) if !self.resolve(p).is_file() => fatal(format!("fixtures {} do not exist", self.resolve(p).display())),
                Some(_) => {}
            },
            BackendKind::Http => {
                if self.backend.base_url.is_none() {
                    fatal("http backend needs `base_url`".into());
                }
                let vars = self.backend.token_env.iter().chain(self.backend.endpoint_token_env.values());
                for var in vars {
                    if std::env::var(var).is_err() {
                        out.push(Diagnostic {
                            severity: Severity::Warning,
                            message: format!("environment variable {var} is not set"),
                        });
                    }
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_valid(dir: &Path) -> RunConfig {
        std::fs::write(dir.join("lexicon.jsonl"), include_str!("../../data/demo_lexicon.jsonl")).unwrap();
        std::fs::write(dir.join("bank.jsonl"), include_str!("../../data/reference_bank.jsonl")).unwrap();
        std::fs::write(dir.join("fixtures.json"), "{}").unwrap();
        let text = r#"
            seed = 7
            workers = 2
            lexicon = "lexicon.jsonl"
            bank = "bank.jsonl"
            cache_dir = "cache"

            [chat]
            temperature = 0.6
            max_tokens = 100

            [backend]
            kind = "mock"
            fixtures = "fixtures.json"
        "#;
        RunConfig::from_toml_str(text, dir).unwrap()
    }

    #[test]
    fn valid_config_has_no_diagnostics() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = write_valid(dir.path());
        assert_eq!(cfg.validate(), vec![]);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.clustering, ClusterParams::default());
        assert_eq!(cfg.resolve(Path::new("bank.jsonl")), dir.path().join("bank.jsonl"));
    }

    #[test]
    fn missing_bank_is_one_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = write_valid(dir.path());
        std::fs::remove_file(dir.path().join("bank.jsonl")).unwrap();
        let diags = cfg.validate();
        assert_eq!(diags.len(), 1, "{diags:?}");
        assert_eq!(diags[0].severity, Severity::Fatal);
        assert!(diags[0].message.contains("question bank"));
    }

    #[test]
    fn zero_workers_and_unknown_keys() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = write_valid(dir.path());
        cfg.workers = 0;
        assert!(has_fatal(&cfg.validate()));
        assert!(RunConfig::from_toml_str("nonsense = 1", dir.path()).is_err());
    }

    #[test]
    fn bank_without_religion_is_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = write_valid(dir.path());
        let text: String = include_str!("../../data/reference_bank.jsonl")
            .lines()
            .filter(|l| !l.contains("rel-01"))
            .map(|l| format!("{l}\n"))
            .collect();
        std::fs::write(dir.path().join("bank.jsonl"), text).unwrap();
        let diags = cfg.validate();
        assert!(diags.iter().any(|d| d.message.contains("Religion")), "{diags:?}");
    }
}
