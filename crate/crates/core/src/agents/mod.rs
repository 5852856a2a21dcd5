//! Perception and language agents.
//!
//! Six capabilities are reached through traits so the pipeline never knows
//! whether it talks to a model service over HTTP ([`http`]) or to the
//! seeded in-process stubs ([`stub`]). Both sides route their outputs
//! through the same contract checks in this module.

pub mod http;
pub mod stub;

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{FrameImage, SampledClip};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("embedding has {got} dimensions, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("agent returned an empty response")]
    EmptyResponse,
    #[error("invalid agent input: {0}")]
    InvalidInput(String),
    #[error("invalid agent configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, AgentError> {
        if values.is_empty() {
            return Err(AgentError::Protocol("embedding is empty".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(AgentError::Protocol("embedding has non-finite values".into()));
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self(self.0.iter().map(|v| v * factor).collect())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self(self.0.iter().map(|&v| f(v)).collect())
    }
}

/// One detected object. `bbox` is `(x_min, y_min, x_max, y_max)` in
/// normalized image coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub label: String,
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    pub score: f64,
}

impl Detection {
    pub fn new(label: impl Into<String>, bbox: [f64; 4], score: f64) -> Result<Self, AgentError> {
        let det = Self {
            label: label.into(),
            bbox,
            score,
        };
        det.validate()?;
        Ok(det)
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        let [x0, y0, x1, y1] = self.bbox;
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !(self.bbox.iter().all(|&v| unit(v)) && x0 < x1 && y0 < y1) {
            return Err(AgentError::Protocol(format!(
                "invalid box {:?} for {:?}",
                self.bbox, self.label
            )));
        }
        if !unit(self.score) {
            return Err(AgentError::Protocol(format!(
                "score {} out of [0,1]",
                self.score
            )));
        }
        Ok(())
    }

    pub fn center(&self) -> (f64, f64) {
        let [x0, y0, x1, y1] = self.bbox;
        ((x0 + x1) / 2.0, (y0 + y1) / 2.0)
    }

    pub fn area(&self) -> f64 {
        let [x0, y0, x1, y1] = self.bbox;
        (x1 - x0) * (y1 - y0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionLabel {
    pub label: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameCaption {
    pub frame_index: u64,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorParams {
    pub box_threshold: f64,
    pub text_threshold: f64,
    /// Allowed labels; an empty list accepts every label.
    pub categories: Vec<String>,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            box_threshold: 0.4,
            text_threshold: 0.25,
            categories: default_categories(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatParams {
    pub temperature: f64,
    pub repetition_penalty: f64,
    pub max_tokens: u32,
}

impl Default for ChatParams {
    fn default() -> Self {
        Self {
            temperature: 0.7,
            repetition_penalty: 1.0,
            max_tokens: 100,
        }
    }
}

/// Service URLs, one per capability.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Endpoints {
    pub embed_image: String,
    pub embed_text: String,
    pub detect: String,
    pub action: String,
    pub caption: String,
    pub chat: String,
}

impl Endpoints {
    pub fn with_base(base_url: &str) -> Self {
        let base = base_url.trim_end_matches('/');
        Self {
            embed_image: format!("{base}/v1/embed_image"),
            embed_text: format!("{base}/v1/embed_text"),
            detect: format!("{base}/v1/detect"),
            action: format!("{base}/v1/action"),
            caption: format!("{base}/v1/caption"),
            chat: format!("{base}/v1/chat"),
        }
    }
}

pub const DEFAULT_BASE_URL: &str = "http://127.0.0.1:8600";

#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub endpoints: Endpoints,
    pub timeout: Duration,
    pub retries: u32,
    /// Pause before retry `n` is `retry_backoff * n`.
    pub retry_backoff: Duration,
    pub bearer_token: Option<String>,
    pub image_embedding_dim: usize,
    pub text_embedding_dim: usize,
    pub detector: DetectorParams,
    pub chat: ChatParams,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            endpoints: Endpoints::with_base(DEFAULT_BASE_URL),
            timeout: Duration::from_secs(60),
            retries: 2,
            retry_backoff: Duration::from_millis(250),
            bearer_token: None,
            image_embedding_dim: 512,
            text_embedding_dim: 768,
            detector: DetectorParams::default(),
            chat: ChatParams::default(),
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(AgentError::Config(format!("{name} must be in [0,1], got {v}")))
            }
        };
        unit("box_threshold", self.detector.box_threshold)?;
        unit("text_threshold", self.detector.text_threshold)?;
        if self.image_embedding_dim == 0 || self.text_embedding_dim == 0 {
            return Err(AgentError::Config("embedding dimensions must be >= 1".into()));
        }
        if self.chat.max_tokens == 0 {
            return Err(AgentError::Config("max_tokens must be >= 1".into()));
        }
        if !(self.chat.temperature.is_finite() && self.chat.temperature >= 0.0) {
            return Err(AgentError::Config("temperature must be >= 0".into()));
        }
        Ok(())
    }
}

/// Object categories shipped with the engine, one label per line.
pub const DEFAULT_CATEGORIES: &str = include_str!("../../config/categories.txt");

pub fn default_categories() -> Vec<String> {
    parse_categories(DEFAULT_CATEGORIES)
}

pub fn parse_categories(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_owned)
        .collect()
}

pub trait ImageEmbedder: Send + Sync {
    fn embed_image(&self, frame: &FrameImage) -> Result<EmbeddingVector, AgentError>;
}

pub trait TextEmbedder: Send + Sync {
    fn embed_text(&self, text: &str) -> Result<EmbeddingVector, AgentError>;
}

pub trait ObjectDetector: Send + Sync {
    fn detect_objects(
        &self,
        frame: &FrameImage,
        params: &DetectorParams,
    ) -> Result<Vec<Detection>, AgentError>;
}

pub trait ActionRecognizer: Send + Sync {
    /// `frames` holds the pixels of every frame in `clip.frames`, in order.
    fn recognize_action(
        &self,
        clip: &SampledClip,
        frames: &[FrameImage],
    ) -> Result<ActionLabel, AgentError>;
}

pub trait Captioner: Send + Sync {
    fn caption_frame(&self, frame: &FrameImage, prompt: &str) -> Result<FrameCaption, AgentError>;
}

pub trait ChatModel: Send + Sync {
    fn complete(&self, prompt: &str, params: &ChatParams) -> Result<String, AgentError>;
}

/// The full set of agents used by a pipeline run.
#[derive(Clone)]
pub struct Agents {
    pub image_embedder: Arc<dyn ImageEmbedder>,
    pub text_embedder: Arc<dyn TextEmbedder>,
    pub detector: Arc<dyn ObjectDetector>,
    pub action: Arc<dyn ActionRecognizer>,
    pub captioner: Arc<dyn Captioner>,
    pub chat: Arc<dyn ChatModel>,
}

impl Agents {
    /// Seeded stubs with no scripted fixtures.
    pub fn stub(seed: u64, cfg: &AgentConfig) -> Self {
        stub::StubAgents::new(seed, cfg).into_agents()
    }

    /// HTTP clients for every capability, sharing one connection pool.
    pub fn http(cfg: &AgentConfig) -> Result<Self, AgentError> {
        let client = Arc::new(http::HttpAgents::new(cfg.clone())?);
        Ok(Self {
            image_embedder: client.clone(),
            text_embedder: client.clone(),
            detector: client.clone(),
            action: client.clone(),
            captioner: client.clone(),
            chat: client,
        })
    }
}

// Contract checks shared by live clients and stubs.

pub(crate) fn require_text(what: &str, text: &str) -> Result<(), AgentError> {
    if text.trim().is_empty() {
        return Err(AgentError::InvalidInput(format!("{what} is empty")));
    }
    Ok(())
}

pub(crate) fn check_embedding(
    values: Vec<f64>,
    expected: usize,
) -> Result<EmbeddingVector, AgentError> {
    if values.len() != expected {
        return Err(AgentError::Dimension {
            expected,
            got: values.len(),
        });
    }
    EmbeddingVector::new(values)
}

/// Validates every detection and keeps those at or above the box threshold
/// whose label is an allowed category.
pub(crate) fn accept_detections(
    detections: Vec<Detection>,
    params: &DetectorParams,
) -> Result<Vec<Detection>, AgentError> {
    for d in &detections {
        d.validate()?;
    }
    Ok(detections
        .into_iter()
        .filter(|d| d.score >= params.box_threshold)
        .filter(|d| params.categories.is_empty() || params.categories.contains(&d.label))
        .collect())
}

/// Rejects empty completions and truncates at `4 * max_tokens` characters.
pub(crate) fn accept_completion(text: String, params: &ChatParams) -> Result<String, AgentError> {
    let text = text.trim();
    if text.is_empty() {
        return Err(AgentError::EmptyResponse);
    }
    let limit = 4 * params.max_tokens as usize;
    Ok(match text.char_indices().nth(limit) {
        Some((cut, _)) => text[..cut].to_owned(),
        None => text.to_owned(),
    })
}
