//! Gateway for all vision-language-model and embedding calls.
//!
//! Every model interaction in the crate goes through [`ModelGateway`] /
//! [`Embedder`], so tests and offline runs can swap the live HTTP backend
//! for the deterministic [`FixtureBackend`].

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::time::Duration;

use serde::Deserialize;
use thiserror::Error;

/// Default embedding dimension when none is configured.
pub const DEFAULT_EMBEDDING_DIM: usize = 512;

/// Default wall-clock bound for one gateway call.
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

/// Environment variable naming the HTTP chat-completion endpoint.
pub const ENV_URL: &str = "MODELGW_URL";
/// Environment variable holding the bearer token for the HTTP backend.
pub const ENV_TOKEN: &str = "MODELGW_TOKEN";

/// The model roles used across the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Role {
    Extractor,
    Descriptor,
    Aligner,
    Discriminator,
    Generator,
    Planner,
    ConstraintExtractor,
    WaypointSelector,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Extractor => "extractor",
            Role::Descriptor => "descriptor",
            Role::Aligner => "aligner",
            Role::Discriminator => "discriminator",
            Role::Generator => "generator",
            Role::Planner => "planner",
            Role::ConstraintExtractor => "constraint_extractor",
            Role::WaypointSelector => "waypoint_selector",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Handle naming an image: a filesystem path when the image exists on disk,
/// otherwise a symbolic id. The fixture backend never dereferences handles.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ImageRef(String);

impl ImageRef {
    pub fn new(handle: impl Into<String>) -> Self {
        Self(handle.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn path(&self) -> &Path {
        Path::new(&self.0)
    }
}

impl fmt::Display for ImageRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// One model call: role, a scenario key identifying the call site, prompt
/// text parts, and attached images.
#[derive(Debug, Clone)]
pub struct ModelRequest {
    pub role: Role,
    pub scenario_key: String,
    pub text_parts: Vec<String>,
    pub image_refs: Vec<ImageRef>,
}

impl ModelRequest {
    pub fn new(role: Role, scenario_key: impl Into<String>) -> Self {
        let scenario_key = scenario_key.into();
        assert!(!scenario_key.is_empty(), "scenario key must be non-empty");
        Self {
            role,
            scenario_key,
            text_parts: Vec::new(),
            image_refs: Vec::new(),
        }
    }

    pub fn with_text(mut self, text: impl Into<String>) -> Self {
        self.text_parts.push(text.into());
        self
    }

    pub fn with_image(mut self, image: ImageRef) -> Self {
        self.image_refs.push(image);
        self
    }

    pub fn with_images(mut self, images: impl IntoIterator<Item = ImageRef>) -> Self {
        self.image_refs.extend(images);
        self
    }
}

#[derive(Debug, Clone)]
pub struct ModelResponse {
    pub text: String,
    pub backend_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingSource {
    Text,
    Image,
}

impl EmbeddingSource {
    pub fn as_str(self) -> &'static str {
        match self {
            EmbeddingSource::Text => "text",
            EmbeddingSource::Image => "image",
        }
    }
}

/// A unit-normalized feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f32>,
    source: EmbeddingSource,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f32>, source: EmbeddingSource) -> Result<Self, GatewayError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(GatewayError::MalformedResponse(
                "embedding contains non-finite values".into(),
            ));
        }
        Ok(Self { values, source })
    }

    /// Normalizes `values` to unit length before wrapping.
    pub fn unit_from(values: Vec<f64>, source: EmbeddingSource) -> Result<Self, GatewayError> {
        let norm: f64 = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() || norm <= 0.0 {
            return Err(GatewayError::MalformedResponse(
                "embedding has zero or non-finite norm".into(),
            ));
        }
        let values = values.iter().map(|v| (v / norm) as f32).collect();
        Self::new(values, source)
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn source(&self) -> EmbeddingSource {
        self.source
    }

    pub fn norm(&self) -> f64 {
        self.values
            .iter()
            .map(|&v| (v as f64) * (v as f64))
            .sum::<f64>()
            .sqrt()
    }

    /// Cosine similarity, accumulated in f64.
    pub fn cosine(&self, other: &EmbeddingVector) -> f64 {
        assert_eq!(self.dim(), other.dim(), "embedding dimension mismatch");
        let dot: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| a as f64 * b as f64)
            .sum();
        let na = self.norm();
        let nb = other.norm();
        if na == 0.0 || nb == 0.0 {
            return 0.0;
        }
        dot / (na * nb)
    }
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("no fixture entry for role {role} and scenario key {key:?}")]
    FixtureMiss { role: Role, key: String },
    #[error("malformed model response: {0}")]
    MalformedResponse(String),
    #[error("cannot read image {handle:?}: {source}")]
    ImageUnreadable {
        handle: String,
        source: std::io::Error,
    },
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Chat-completion seam. Implementations must be shareable across threads;
/// each call is independent and timeout-bounded.
pub trait ModelGateway: Send + Sync {
    fn complete(&self, request: &ModelRequest) -> Result<ModelResponse, GatewayError>;
}

/// Embedding seam for text and image content.
pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;
    fn embed_text(&self, text: &str) -> Result<EmbeddingVector, GatewayError>;
    fn embed_image(&self, image: &ImageRef) -> Result<EmbeddingVector, GatewayError>;
}

// ---------------------------------------------------------------------------
// Fixture backend
// ---------------------------------------------------------------------------

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// splitmix64-style generator used to expand a content hash into a vector.
struct SplitMix64(u64);

impl SplitMix64 {
    fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    /// Uniform in [-1, 1).
    fn next_unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 52) as f64 * 2.0 - 1.0
    }
}

/// Deterministic pseudo-embedding: seed a splitmix generator with a 64-bit
/// hash of the content bytes, draw `dim` components, normalize.
pub fn pseudo_embedding(content: &[u8], dim: usize, source: EmbeddingSource) -> EmbeddingVector {
    let mut gen = SplitMix64(fnv1a64(content));
    let values: Vec<f64> = (0..dim).map(|_| gen.next_unit()).collect();
    EmbeddingVector::unit_from(values, source).expect("pseudo embedding is finite")
}

/// Canned-response backend: a pure function of `(role, scenario_key)` for
/// completions and of the content bytes for embeddings.
#[derive(Debug, Clone)]
pub struct FixtureBackend {
    entries: BTreeMap<String, String>,
    dim: usize,
}

impl FixtureBackend {
    pub fn new(dim: usize) -> Self {
        Self {
            entries: BTreeMap::new(),
            dim,
        }
    }

    /// Key format used in fixture files.
    pub fn fixture_key(role: Role, scenario_key: &str) -> String {
        format!("{role}::{scenario_key}")
    }

    /// Loads a UTF-8 JSON map `{ "<role>::<scenario_key>": "<response>" }`.
    pub fn from_json_str(json: &str, dim: usize) -> Result<Self, GatewayError> {
        let entries: BTreeMap<String, String> = serde_json::from_str(json)
            .map_err(|e| GatewayError::MalformedResponse(format!("fixture file: {e}")))?;
        Ok(Self { entries, dim })
    }

    pub fn from_path(path: &Path, dim: usize) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            GatewayError::BackendUnavailable(format!("fixture file {}: {e}", path.display()))
        })?;
        Self::from_json_str(&text, dim)
    }

    pub fn with_entry(
        mut self,
        role: Role,
        scenario_key: &str,
        response: impl Into<String>,
    ) -> Self {
        self.entries
            .insert(Self::fixture_key(role, scenario_key), response.into());
        self
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl ModelGateway for FixtureBackend {
    fn complete(&self, request: &ModelRequest) -> Result<ModelResponse, GatewayError> {
        let key = Self::fixture_key(request.role, &request.scenario_key);
        let text = self
            .entries
            .get(&key)
            .ok_or_else(|| GatewayError::FixtureMiss {
                role: request.role,
                key: request.scenario_key.clone(),
            })?;
        if text.is_empty() {
            return Err(GatewayError::MalformedResponse(format!(
                "fixture entry {key:?} is empty"
            )));
        }
        Ok(ModelResponse {
            text: text.clone(),
            backend_id: "fixture".into(),
        })
    }
}

impl Embedder for FixtureBackend {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_text(&self, text: &str) -> Result<EmbeddingVector, GatewayError> {
        Ok(pseudo_embedding(
            text.as_bytes(),
            self.dim,
            EmbeddingSource::Text,
        ))
    }

    fn embed_image(&self, image: &ImageRef) -> Result<EmbeddingVector, GatewayError> {
        // Image identity is the handle itself; fixtures never read pixels.
        Ok(pseudo_embedding(
            image.as_str().as_bytes(),
            self.dim,
            EmbeddingSource::Image,
        ))
    }
}

// ---------------------------------------------------------------------------
// HTTP backend
// ---------------------------------------------------------------------------

/// Configuration for the JSON-over-HTTP chat-completion backend.
#[derive(Debug, Clone)]
pub struct HttpBackendConfig {
    /// Chat-completion endpoint URL.
    pub url: String,
    /// Optional bearer token.
    pub token: Option<String>,
    /// Model name sent with each request.
    pub model: String,
    /// Embeddings endpoint; embedding calls fail when unset.
    pub embeddings_url: Option<String>,
    pub embedding_dim: usize,
    pub timeout: Duration,
    /// Per-role endpoint overrides.
    pub role_urls: BTreeMap<Role, String>,
}

impl HttpBackendConfig {
    pub fn new(url: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            token: None,
            model: "default".into(),
            embeddings_url: None,
            embedding_dim: DEFAULT_EMBEDDING_DIM,
            timeout: DEFAULT_TIMEOUT,
            role_urls: BTreeMap::new(),
        }
    }

    /// Reads `MODELGW_URL` / `MODELGW_TOKEN` from the environment.
    pub fn from_env() -> Result<Self, GatewayError> {
        let url = std::env::var(ENV_URL)
            .map_err(|_| GatewayError::BackendUnavailable(format!("{ENV_URL} is not set")))?;
        let mut cfg = Self::new(url);
        cfg.token = std::env::var(ENV_TOKEN).ok();
        Ok(cfg)
    }
}

#[derive(Deserialize)]
struct ChatChoiceMessage {
    content: Option<String>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatChoiceMessage,
}

#[derive(Deserialize)]
struct ChatCompletion {
    choices: Vec<ChatChoice>,
    #[serde(default)]
    model: Option<String>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
}

#[derive(Deserialize)]
struct EmbeddingsReply {
    data: Vec<EmbeddingDatum>,
}

/// Live backend speaking the common JSON chat-completion wire format.
pub struct HttpBackend {
    cfg: HttpBackendConfig,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(cfg: HttpBackendConfig) -> Result<Self, GatewayError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(cfg.timeout)
            .build()
            .map_err(|e| GatewayError::BackendUnavailable(e.to_string()))?;
        Ok(Self { cfg, client })
    }

    pub fn from_env() -> Result<Self, GatewayError> {
        Self::new(HttpBackendConfig::from_env()?)
    }

    fn endpoint_for(&self, role: Role) -> &str {
        self.cfg.role_urls.get(&role).unwrap_or(&self.cfg.url)
    }

    fn image_part(&self, image: &ImageRef) -> Result<serde_json::Value, GatewayError> {
        let bytes = std::fs::read(image.path()).map_err(|e| GatewayError::ImageUnreadable {
            handle: image.as_str().to_string(),
            source: e,
        })?;
        let mime = match image.path().extension().and_then(|e| e.to_str()) {
            Some("jpg") | Some("jpeg") => "image/jpeg",
            _ => "image/png",
        };
        Ok(serde_json::json!({
            "type": "image_url",
            "image_url": { "url": format!("data:{mime};base64,{}", base64_encode(&bytes)) }
        }))
    }

    fn post_json(
        &self,
        url: &str,
        body: &serde_json::Value,
    ) -> Result<serde_json::Value, GatewayError> {
        let mut req = self.client.post(url).json(body);
        if let Some(token) = &self.cfg.token {
            req = req.bearer_auth(token);
        }
        let resp = req
            .send()
            .map_err(|e| GatewayError::BackendUnavailable(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(GatewayError::BackendUnavailable(format!(
                "HTTP {status} from {url}"
            )));
        }
        resp.json()
            .map_err(|e| GatewayError::MalformedResponse(e.to_string()))
    }
}

impl ModelGateway for HttpBackend {
    fn complete(&self, request: &ModelRequest) -> Result<ModelResponse, GatewayError> {
        let mut content = Vec::new();
        for text in &request.text_parts {
            content.push(serde_json::json!({ "type": "text", "text": text }));
        }
        for image in &request.image_refs {
            content.push(self.image_part(image)?);
        }
        let body = serde_json::json!({
            "model": self.cfg.model,
            "messages": [{ "role": "user", "content": content }],
        });
        let url = self.endpoint_for(request.role);
        let raw = self.post_json(url, &body)?;
        let parsed: ChatCompletion = serde_json::from_value(raw)
            .map_err(|e| GatewayError::MalformedResponse(e.to_string()))?;
        let text = parsed
            .choices
            .first()
            .and_then(|c| c.message.content.clone())
            .unwrap_or_default();
        if text.is_empty() {
            return Err(GatewayError::MalformedResponse(
                "completion has no message text".into(),
            ));
        }
        Ok(ModelResponse {
            text,
            backend_id: parsed.model.unwrap_or_else(|| "http".into()),
        })
    }
}

impl Embedder for HttpBackend {
    fn dim(&self) -> usize {
        self.cfg.embedding_dim
    }

    fn embed_text(&self, text: &str) -> Result<EmbeddingVector, GatewayError> {
        let url = self.cfg.embeddings_url.as_ref().ok_or_else(|| {
            GatewayError::BackendUnavailable("no embeddings endpoint configured".into())
        })?;
        let body = serde_json::json!({ "model": self.cfg.model, "input": text });
        let raw = self.post_json(url, &body)?;
        let parsed: EmbeddingsReply = serde_json::from_value(raw)
            .map_err(|e| GatewayError::MalformedResponse(e.to_string()))?;
        let values = parsed
            .data
            .into_iter()
            .next()
            .ok_or_else(|| GatewayError::MalformedResponse("empty embeddings reply".into()))?
            .embedding;
        if values.len() != self.cfg.embedding_dim {
            return Err(GatewayError::DimensionMismatch {
                expected: self.cfg.embedding_dim,
                got: values.len(),
            });
        }
        EmbeddingVector::unit_from(values, EmbeddingSource::Text)
    }

    fn embed_image(&self, image: &ImageRef) -> Result<EmbeddingVector, GatewayError> {
        let bytes = std::fs::read(image.path()).map_err(|e| GatewayError::ImageUnreadable {
            handle: image.as_str().to_string(),
            source: e,
        })?;
        let url = self.cfg.embeddings_url.as_ref().ok_or_else(|| {
            GatewayError::BackendUnavailable("no embeddings endpoint configured".into())
        })?;
        let body = serde_json::json!({
            "model": self.cfg.model,
            "input": format!("data:image/png;base64,{}", base64_encode(&bytes)),
        });
        let raw = self.post_json(url, &body)?;
        let parsed: EmbeddingsReply = serde_json::from_value(raw)
            .map_err(|e| GatewayError::MalformedResponse(e.to_string()))?;
        let values = parsed
            .data
            .into_iter()
            .next()
            .ok_or_else(|| GatewayError::MalformedResponse("empty embeddings reply".into()))?
            .embedding;
        if values.len() != self.cfg.embedding_dim {
            return Err(GatewayError::DimensionMismatch {
                expected: self.cfg.embedding_dim,
                got: values.len(),
            });
        }
        EmbeddingVector::unit_from(values, EmbeddingSource::Image)
    }
}

fn base64_encode(bytes: &[u8]) -> String {
    const TABLE: &[u8; 64] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    let mut out = String::with_capacity(bytes.len().div_ceil(3) * 4);
    for chunk in bytes.chunks(3) {
        let b = [
            chunk[0],
            *chunk.get(1).unwrap_or(&0),
            *chunk.get(2).unwrap_or(&0),
        ];
        let n = ((b[0] as u32) << 16) | ((b[1] as u32) << 8) | b[2] as u32;
        out.push(TABLE[(n >> 18) as usize & 63] as char);
        out.push(TABLE[(n >> 12) as usize & 63] as char);
        out.push(if chunk.len() > 1 {
            TABLE[(n >> 6) as usize & 63] as char
        } else {
            '='
        });
        out.push(if chunk.len() > 2 {
            TABLE[n as usize & 63] as char
        } else {
            '='
        });
    }
    out
}

// ---------------------------------------------------------------------------
// Prompt templates
// ---------------------------------------------------------------------------

/// Named prompt templates with `{placeholder}` substitution. Defaults are
/// compiled in; a directory of `<name>.txt` files can override any of them.
#[derive(Debug, Clone)]
pub struct PromptSet {
    templates: BTreeMap<String, String>,
}

pub const PROMPT_NAMES: &[&str] = &[
    "extractor_0",
    "extractor_1",
    "extractor_2",
    "consolidate",
    "descriptor",
    "aligner",
    "discriminator",
    "generator",
    "planner",
    "constraint_extractor",
    "waypoint_selector",
];

impl PromptSet {
    pub fn defaults() -> Self {
        let mut templates = BTreeMap::new();
        templates.insert(
            "extractor_0".into(),
            include_str!("../assets/prompts/extractor_0.txt").to_string(),
        );
        templates.insert(
            "extractor_1".into(),
            include_str!("../assets/prompts/extractor_1.txt").to_string(),
        );
        templates.insert(
            "extractor_2".into(),
            include_str!("../assets/prompts/extractor_2.txt").to_string(),
        );
        templates.insert(
            "consolidate".into(),
            include_str!("../assets/prompts/consolidate.txt").to_string(),
        );
        templates.insert(
            "descriptor".into(),
            include_str!("../assets/prompts/descriptor.txt").to_string(),
        );
        templates.insert(
            "aligner".into(),
            include_str!("../assets/prompts/aligner.txt").to_string(),
        );
        templates.insert(
            "discriminator".into(),
            include_str!("../assets/prompts/discriminator.txt").to_string(),
        );
        templates.insert(
            "generator".into(),
            include_str!("../assets/prompts/generator.txt").to_string(),
        );
        templates.insert(
            "planner".into(),
            include_str!("../assets/prompts/planner.txt").to_string(),
        );
        templates.insert(
            "constraint_extractor".into(),
            include_str!("../assets/prompts/constraint_extractor.txt").to_string(),
        );
        templates.insert(
            "waypoint_selector".into(),
            include_str!("../assets/prompts/waypoint_selector.txt").to_string(),
        );
        Self { templates }
    }

    /// Replaces templates from `<name>.txt` files found in `dir`.
    pub fn load_overrides(&mut self, dir: &Path) -> std::io::Result<()> {
        for name in PROMPT_NAMES {
            let path = dir.join(format!("{name}.txt"));
            if path.is_file() {
                self.templates
                    .insert((*name).to_string(), std::fs::read_to_string(&path)?);
            }
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> &str {
        self.templates
            .get(name)
            .unwrap_or_else(|| panic!("unknown prompt template {name:?}"))
    }

    /// Fills `{placeholder}` slots in the named template.
    pub fn render(&self, name: &str, fills: &[(&str, &str)]) -> String {
        let mut text = self.get(name).to_string();
        for (key, value) in fills {
            text = text.replace(&format!("{{{key}}}"), value);
        }
        text
    }

    /// How many extractor instruction templates ship by default.
    pub fn extractor_templates(&self) -> Vec<String> {
        ["extractor_0", "extractor_1", "extractor_2"]
            .iter()
            .map(|n| self.get(n).to_string())
            .collect()
    }
}

impl Default for PromptSet {
    fn default() -> Self {
        Self::defaults()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_returns_canned_text() {
        let backend =
            FixtureBackend::new(16).with_entry(Role::Aligner, "video_007/step2", "004-009");
        let req = ModelRequest::new(Role::Aligner, "video_007/step2");
        let resp = backend.complete(&req).unwrap();
        assert_eq!(resp.text, "004-009");
        assert_eq!(resp.backend_id, "fixture");
    }

    #[test]
    fn fixture_miss_names_role_and_key() {
        let backend = FixtureBackend::new(16);
        let req = ModelRequest::new(Role::Aligner, "missing/key");
        let err = backend.complete(&req).unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("aligner") && msg.contains("missing/key"),
            "{msg}"
        );
    }

    #[test]
    fn fixture_is_deterministic() {
        let backend = FixtureBackend::new(16).with_entry(Role::Planner, "k", "pick(object=cup)");
        let req = ModelRequest::new(Role::Planner, "k");
        let a = backend.complete(&req).unwrap();
        let b = backend.complete(&req).unwrap();
        assert_eq!(a.text, b.text);
    }

    #[test]
    fn fixture_file_round_trip() {
        let json = r#"{ "aligner::v/step0": "000-003", "planner::go": "pick(object=cup)" }"#;
        let backend = FixtureBackend::from_json_str(json, 8).unwrap();
        assert_eq!(backend.len(), 2);
        let resp = backend
            .complete(&ModelRequest::new(Role::Aligner, "v/step0"))
            .unwrap();
        assert_eq!(resp.text, "000-003");
    }

    #[test]
    fn pseudo_embedding_is_unit_and_deterministic() {
        let backend = FixtureBackend::new(512);
        let a = backend.embed_text("wipe the desk").unwrap();
        let b = backend.embed_text("wipe the desk").unwrap();
        assert_eq!(a.values(), b.values());
        assert_eq!(a.dim(), 512);
        assert!((a.norm() - 1.0).abs() < 1e-6);
        assert_eq!(a.source(), EmbeddingSource::Text);
    }

    #[test]
    fn distinct_strings_are_not_near_duplicates() {
        // Empirical separation check over 1,000 deterministic string pairs.
        let backend = FixtureBackend::new(512);
        let mut max_cos: f64 = -2.0;
        for i in 0..1000 {
            let a = backend.embed_text(&format!("string-a-{i}")).unwrap();
            let b = backend.embed_text(&format!("string-b-{i}")).unwrap();
            max_cos = max_cos.max(a.cosine(&b));
        }
        assert!(max_cos < 0.999, "max cosine {max_cos}");
    }

    #[test]
    fn image_embedding_uses_handle_identity() {
        let backend = FixtureBackend::new(64);
        let a = backend
            .embed_image(&ImageRef::new("frames/000.png"))
            .unwrap();
        let b = backend
            .embed_image(&ImageRef::new("frames/000.png"))
            .unwrap();
        let c = backend
            .embed_image(&ImageRef::new("frames/001.png"))
            .unwrap();
        assert_eq!(a.values(), b.values());
        assert!(a.cosine(&c) < 0.999);
        assert_eq!(a.source(), EmbeddingSource::Image);
    }

    #[test]
    fn prompt_render_fills_placeholders() {
        let prompts = PromptSet::defaults();
        let text = prompts.render(
            "aligner",
            &[
                ("first_label", "000"),
                ("last_label", "011"),
                ("description", "wipe the desk"),
            ],
        );
        assert!(text.contains("000") && text.contains("011"));
        assert!(text.contains("wipe the desk"));
        assert!(!text.contains('{'));
    }

    #[test]
    fn base64_matches_known_vectors() {
        assert_eq!(base64_encode(b""), "");
        assert_eq!(base64_encode(b"f"), "Zg==");
        assert_eq!(base64_encode(b"fo"), "Zm8=");
        assert_eq!(base64_encode(b"foo"), "Zm9v");
        assert_eq!(base64_encode(b"foobar"), "Zm9vYmFy");
    }
}
