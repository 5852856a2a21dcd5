//! JSON-over-HTTP clients for agent services.
//!
//! Each capability is one `POST` endpoint. Connection failures, timeouts,
//! `429` and `5xx` responses are retried up to `retries` times; any other
//! status or a body that does not match the schema fails immediately.

use std::thread;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use reqwest::blocking::Client;
use reqwest::header::CONTENT_TYPE;
use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{
    accept_completion, accept_detections, check_embedding, require_text, ActionLabel,
    ActionRecognizer, AgentConfig, AgentError, Captioner, ChatModel, ChatParams, Detection,
    DetectorParams, EmbeddingVector, FrameCaption, ImageEmbedder, ObjectDetector, TextEmbedder,
};
use crate::ingest::{FrameImage, SampledClip};

/// Request and response bodies of the agent wire protocol.
///
/// `frame_index` and `clip_index` are optional hints; services may ignore them.
pub mod wire {
    use serde::{Deserialize, Serialize};

    use crate::agents::Detection;

    #[derive(Debug, Clone, Serialize, Deserialize)]
    pub struct EmbedImageRequest {
        pub image_b64: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pub frame_index: Option<u64>,
    }

    #[derive(Debug, Clone, Serialize, Deserialize)]
    pub struct EmbedTextRequest {
        pub text: String,
    }

    #[derive(Debug, Clone, Serialize, Deserialize)]
    pub struct EmbeddingResponse {
        pub embedding: Vec<f64>,
    }

    #[derive(Debug, Clone, Serialize, Deserialize)]
    pub struct DetectRequest {
        pub image_b64: String,
        pub categories: Vec<String>,
        pub box_threshold: f64,
        pub text_threshold: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pub frame_index: Option<u64>,
    }

    #[derive(Debug, Clone, Serialize, Deserialize)]
    pub struct DetectResponse {
        pub detections: Vec<Detection>,
    }

    #[derive(Debug, Clone, Serialize, Deserialize)]
    pub struct ActionRequest {
        pub frames_b64: Vec<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pub clip_index: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pub frame_indices: Option<Vec<u64>>,
    }

    #[derive(Debug, Clone, Serialize, Deserialize)]
    pub struct ActionResponse {
        pub label: String,
        pub score: f64,
    }

    #[derive(Debug, Clone, Serialize, Deserialize)]
    pub struct CaptionRequest {
        pub image_b64: String,
        pub prompt: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pub frame_index: Option<u64>,
    }

    #[derive(Debug, Clone, Serialize, Deserialize)]
    pub struct TextResponse {
        pub text: String,
    }

    #[derive(Debug, Clone, Serialize, Deserialize)]
    pub struct ChatRequest {
        pub prompt: String,
        pub temperature: f64,
        pub repetition_penalty: f64,
        pub max_tokens: u32,
    }
}

/// One client serving all six capabilities.
#[derive(Debug, Clone)]
pub struct HttpAgents {
    client: Client,
    cfg: AgentConfig,
}

impl HttpAgents {
    pub fn new(cfg: AgentConfig) -> Result<Self, AgentError> {
        cfg.validate()?;
        let client = Client::builder()
            .timeout(cfg.timeout)
            .build()
            .map_err(|e| AgentError::Config(format!("cannot build HTTP client: {e}")))?;
        Ok(Self { client, cfg })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    fn post<B: Serialize, R: DeserializeOwned>(&self, url: &str, body: &B) -> Result<R, AgentError> {
        let payload = serde_json::to_vec(body)
            .map_err(|e| AgentError::Protocol(format!("cannot encode request: {e}")))?;
        let attempts = self.cfg.retries + 1;
        let mut last = String::new();
        for attempt in 1..=attempts {
            if attempt > 1 && !self.cfg.retry_backoff.is_zero() {
                thread::sleep(self.cfg.retry_backoff * (attempt - 1));
            }
            let mut request = self
                .client
                .post(url)
                .header(CONTENT_TYPE, "application/json")
                .body(payload.clone());
            if let Some(token) = &self.cfg.bearer_token {
                request = request.bearer_auth(token);
            }
            let response = match request.send() {
                Ok(r) => r,
                Err(e) => {
                    last = format!("{url}: {e}");
                    continue;
                }
            };
            let status = response.status();
            if status.is_server_error() || status.as_u16() == 429 {
                last = format!("{url}: HTTP {status}");
                continue;
            }
            let body = match response.bytes() {
                Ok(b) => b,
                Err(e) => {
                    last = format!("{url}: reading body: {e}");
                    continue;
                }
            };
            if !status.is_success() {
                return Err(AgentError::Protocol(format!(
                    "{url}: HTTP {status}: {}",
                    String::from_utf8_lossy(&body)
                )));
            }
            return serde_json::from_slice(&body)
                .map_err(|e| AgentError::Protocol(format!("{url}: unexpected response: {e}")));
        }
        Err(AgentError::Transport {
            attempts,
            message: last,
        })
    }
}

fn encode_png(frame: &FrameImage) -> Result<String, AgentError> {
    if frame.png.is_empty() {
        return Err(AgentError::InvalidInput("frame has no pixels".into()));
    }
    Ok(BASE64.encode(&frame.png))
}

impl ImageEmbedder for HttpAgents {
    fn embed_image(&self, frame: &FrameImage) -> Result<EmbeddingVector, AgentError> {
        let body = wire::EmbedImageRequest {
            image_b64: encode_png(frame)?,
            frame_index: Some(frame.frame.index),
        };
        let resp: wire::EmbeddingResponse = self.post(&self.cfg.endpoints.embed_image, &body)?;
        check_embedding(resp.embedding, self.cfg.image_embedding_dim)
    }
}

impl TextEmbedder for HttpAgents {
    fn embed_text(&self, text: &str) -> Result<EmbeddingVector, AgentError> {
        require_text("text", text)?;
        let body = wire::EmbedTextRequest { text: text.into() };
        let resp: wire::EmbeddingResponse = self.post(&self.cfg.endpoints.embed_text, &body)?;
        check_embedding(resp.embedding, self.cfg.text_embedding_dim)
    }
}

impl ObjectDetector for HttpAgents {
    fn detect_objects(
        &self,
        frame: &FrameImage,
        params: &DetectorParams,
    ) -> Result<Vec<Detection>, AgentError> {
        let body = wire::DetectRequest {
            image_b64: encode_png(frame)?,
            categories: params.categories.clone(),
            box_threshold: params.box_threshold,
            text_threshold: params.text_threshold,
            frame_index: Some(frame.frame.index),
        };
        let resp: wire::DetectResponse = self.post(&self.cfg.endpoints.detect, &body)?;
        accept_detections(resp.detections, params)
    }
}

impl ActionRecognizer for HttpAgents {
    fn recognize_action(
        &self,
        clip: &SampledClip,
        frames: &[FrameImage],
    ) -> Result<ActionLabel, AgentError> {
        if frames.is_empty() {
            return Err(AgentError::InvalidInput("clip has no frames".into()));
        }
        let body = wire::ActionRequest {
            frames_b64: frames.iter().map(encode_png).collect::<Result<_, _>>()?,
            clip_index: Some(clip.span.clip_index),
            frame_indices: Some(frames.iter().map(|f| f.frame.index).collect()),
        };
        let resp: wire::ActionResponse = self.post(&self.cfg.endpoints.action, &body)?;
        if resp.label.trim().is_empty() {
            return Err(AgentError::EmptyResponse);
        }
        if !(0.0..=1.0).contains(&resp.score) {
            return Err(AgentError::Protocol(format!(
                "action score {} out of [0,1]",
                resp.score
            )));
        }
        Ok(ActionLabel {
            label: resp.label,
            score: resp.score,
        })
    }
}

impl Captioner for HttpAgents {
    fn caption_frame(&self, frame: &FrameImage, prompt: &str) -> Result<FrameCaption, AgentError> {
        require_text("prompt", prompt)?;
        let body = wire::CaptionRequest {
            image_b64: encode_png(frame)?,
            prompt: prompt.into(),
            frame_index: Some(frame.frame.index),
        };
        let resp: wire::TextResponse = self.post(&self.cfg.endpoints.caption, &body)?;
        if resp.text.trim().is_empty() {
            return Err(AgentError::EmptyResponse);
        }
        Ok(FrameCaption {
            frame_index: frame.frame.index,
            text: resp.text,
        })
    }
}

impl ChatModel for HttpAgents {
    fn complete(&self, prompt: &str, params: &ChatParams) -> Result<String, AgentError> {
        require_text("prompt", prompt)?;
        let body = wire::ChatRequest {
            prompt: prompt.into(),
            temperature: params.temperature,
            repetition_penalty: params.repetition_penalty,
            max_tokens: params.max_tokens,
        };
        let resp: wire::TextResponse = self.post(&self.cfg.endpoints.chat, &body)?;
        accept_completion(resp.text, params)
    }
}
