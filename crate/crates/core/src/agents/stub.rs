//! Deterministic in-process agents.
//!
//! Every stub is a pure function of its seed, its planted fixtures and the
//! call input. Embedders map inputs to seeded pseudo-random unit vectors;
//! the detector, action recognizer, captioner and chat model answer from
//! planted fixtures first and fall back to seeded generated output.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::Deserialize;
use sha2::{Digest, Sha256};

use super::{
    accept_completion, accept_detections, check_embedding, require_text, ActionLabel,
    ActionRecognizer, AgentConfig, AgentError, Agents, Captioner, ChatModel, ChatParams,
    Detection, DetectorParams, EmbeddingVector, FrameCaption, ImageEmbedder, ObjectDetector,
    TextEmbedder,
};
use crate::ingest::{FrameImage, SampledClip};

/// Seeded stream of pseudo-random words derived from SHA-256 in counter mode.
struct HashStream {
    prefix: Sha256,
    counter: u64,
    buf: Vec<u8>,
}

impl HashStream {
    fn new(seed: u64, domain: &str, key: &[u8]) -> Self {
        let prefix = Sha256::new()
            .chain_update(seed.to_le_bytes())
            .chain_update((domain.len() as u64).to_le_bytes())
            .chain_update(domain.as_bytes())
            .chain_update(key);
        Self {
            prefix,
            counter: 0,
            buf: Vec::new(),
        }
    }

    fn next_u64(&mut self) -> u64 {
        if self.buf.len() < 8 {
            let block = self
                .prefix
                .clone()
                .chain_update(self.counter.to_le_bytes())
                .finalize();
            self.counter += 1;
            self.buf.extend_from_slice(&block);
        }
        let word: [u8; 8] = self.buf[..8].try_into().expect("8 bytes");
        self.buf.drain(..8);
        u64::from_le_bytes(word)
    }

    /// Uniform in `[0, 1)`.
    fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    fn pick<'a, T>(&mut self, items: &'a [T]) -> &'a T {
        &items[(self.next_u64() % items.len() as u64) as usize]
    }
}

/// Unit vector of length `dim` determined by `(seed, domain, key)`.
pub fn hash_to_unit_vector(seed: u64, domain: &str, key: &[u8], dim: usize) -> Vec<f64> {
    let mut stream = HashStream::new(seed, domain, key);
    let mut values: Vec<f64> = (0..dim).map(|_| stream.unit() * 2.0 - 1.0).collect();
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        values.iter_mut().for_each(|v| *v /= norm);
    }
    values
}

/// Hex SHA-256 of a prompt, the key used by [`ScriptedChat`].
pub fn prompt_key(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

#[derive(Debug, Clone)]
pub struct StubEmbedder {
    seed: u64,
    image_dim: usize,
    text_dim: usize,
}

impl StubEmbedder {
    pub fn new(seed: u64, image_dim: usize, text_dim: usize) -> Self {
        Self {
            seed,
            image_dim,
            text_dim,
        }
    }
}

impl ImageEmbedder for StubEmbedder {
    fn embed_image(&self, frame: &FrameImage) -> Result<EmbeddingVector, AgentError> {
        if frame.png.is_empty() {
            return Err(AgentError::InvalidInput("frame has no pixels".into()));
        }
        let values = hash_to_unit_vector(self.seed, "image", &frame.png, self.image_dim);
        check_embedding(values, self.image_dim)
    }
}

impl TextEmbedder for StubEmbedder {
    fn embed_text(&self, text: &str) -> Result<EmbeddingVector, AgentError> {
        require_text("text", text)?;
        let values = hash_to_unit_vector(self.seed, "text", text.as_bytes(), self.text_dim);
        check_embedding(values, self.text_dim)
    }
}

/// Detector answering from boxes planted per frame index.
#[derive(Debug, Clone, Default)]
pub struct StubDetector {
    seed: u64,
    planted: HashMap<u64, Vec<Detection>>,
}

impl StubDetector {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            planted: HashMap::new(),
        }
    }

    pub fn plant(&mut self, frame_index: u64, detections: Vec<Detection>) -> &mut Self {
        self.planted.insert(frame_index, detections);
        self
    }

    fn generate(&self, frame: &FrameImage, params: &DetectorParams) -> Vec<Detection> {
        let mut s = HashStream::new(self.seed, "detect", &frame.png);
        let labels: Vec<&str> = if params.categories.is_empty() {
            FALLBACK_OBJECTS.to_vec()
        } else {
            params.categories.iter().map(String::as_str).collect()
        };
        let count = s.next_u64() % 4;
        (0..count)
            .map(|_| {
                let label = s.pick(&labels).to_string();
                let w = 0.05 + s.unit() * 0.6;
                let h = 0.05 + s.unit() * 0.6;
                let x0 = s.unit() * (1.0 - w);
                let y0 = s.unit() * (1.0 - h);
                let score = 0.2 + s.unit() * 0.79;
                Detection {
                    label,
                    bbox: [x0, y0, x0 + w, y0 + h],
                    score,
                }
            })
            .collect()
    }
}

impl ObjectDetector for StubDetector {
    fn detect_objects(
        &self,
        frame: &FrameImage,
        params: &DetectorParams,
    ) -> Result<Vec<Detection>, AgentError> {
        let raw = match self.planted.get(&frame.frame.index) {
            Some(planted) => planted.clone(),
            None if frame.png.is_empty() => Vec::new(),
            None => self.generate(frame, params),
        };
        accept_detections(raw, params)
    }
}

#[derive(Debug, Clone, Default)]
pub struct StubActionRecognizer {
    seed: u64,
    planted: HashMap<usize, ActionLabel>,
}

impl StubActionRecognizer {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            planted: HashMap::new(),
        }
    }

    pub fn plant(&mut self, clip_index: usize, label: ActionLabel) -> &mut Self {
        self.planted.insert(clip_index, label);
        self
    }
}

impl ActionRecognizer for StubActionRecognizer {
    fn recognize_action(
        &self,
        clip: &SampledClip,
        frames: &[FrameImage],
    ) -> Result<ActionLabel, AgentError> {
        if frames.is_empty() {
            return Err(AgentError::InvalidInput("clip has no frames".into()));
        }
        if let Some(label) = self.planted.get(&clip.span.clip_index) {
            return Ok(label.clone());
        }
        let mut key = (clip.span.clip_index as u64).to_le_bytes().to_vec();
        key.extend_from_slice(&frames[0].png);
        let mut s = HashStream::new(self.seed, "action", &key);
        let label = s.pick(FALLBACK_ACTIONS).to_string();
        let score = 0.5 + s.unit() * 0.5;
        Ok(ActionLabel { label, score })
    }
}

#[derive(Debug, Clone, Default)]
pub struct StubCaptioner {
    seed: u64,
    planted: HashMap<u64, String>,
}

impl StubCaptioner {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            planted: HashMap::new(),
        }
    }

    pub fn plant(&mut self, frame_index: u64, text: impl Into<String>) -> &mut Self {
        self.planted.insert(frame_index, text.into());
        self
    }
}

impl Captioner for StubCaptioner {
    fn caption_frame(&self, frame: &FrameImage, prompt: &str) -> Result<FrameCaption, AgentError> {
        require_text("prompt", prompt)?;
        if frame.png.is_empty() {
            return Err(AgentError::InvalidInput("frame has no pixels".into()));
        }
        let text = match self.planted.get(&frame.frame.index) {
            Some(text) => text.clone(),
            None => {
                let mut s = HashStream::new(self.seed, "caption", &frame.png);
                format!(
                    "a {} {} {} {}, next to a {} and a {}",
                    s.pick(FALLBACK_COLORS),
                    s.pick(FALLBACK_OBJECTS),
                    s.pick(FALLBACK_POSES),
                    s.pick(FALLBACK_PLACES),
                    s.pick(FALLBACK_OBJECTS),
                    s.pick(FALLBACK_OBJECTS),
                )
            }
        };
        if text.trim().is_empty() {
            return Err(AgentError::EmptyResponse);
        }
        Ok(FrameCaption {
            frame_index: frame.frame.index,
            text,
        })
    }
}

/// Chat model replaying responses keyed by the SHA-256 of the prompt.
#[derive(Debug, Clone, Default)]
pub struct ScriptedChat {
    seed: u64,
    script: HashMap<String, String>,
    strict: bool,
}

#[derive(Debug, Deserialize)]
struct ScriptEntry {
    #[serde(default)]
    prompt: Option<String>,
    #[serde(default)]
    prompt_sha256: Option<String>,
    response: String,
}

impl ScriptedChat {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            script: HashMap::new(),
            strict: false,
        }
    }

    /// Unscripted prompts fail with a protocol error instead of falling back.
    pub fn strict(mut self) -> Self {
        self.strict = true;
        self
    }

    pub fn insert(&mut self, prompt: &str, response: impl Into<String>) -> &mut Self {
        self.script.insert(prompt_key(prompt), response.into());
        self
    }

    pub fn insert_key(&mut self, sha256_hex: &str, response: impl Into<String>) -> &mut Self {
        self.script
            .insert(sha256_hex.to_ascii_lowercase(), response.into());
        self
    }

    pub fn len(&self) -> usize {
        self.script.len()
    }

    pub fn is_empty(&self) -> bool {
        self.script.is_empty()
    }

    /// Loads a script file: a JSON list of `{"prompt" | "prompt_sha256", "response"}`.
    pub fn load_script(&mut self, path: &Path) -> Result<(), AgentError> {
        let text = fs::read_to_string(path)
            .map_err(|e| AgentError::Config(format!("{}: {e}", path.display())))?;
        let entries: Vec<ScriptEntry> = serde_json::from_str(&text)
            .map_err(|e| AgentError::Config(format!("{}: {e}", path.display())))?;
        for entry in entries {
            match (entry.prompt, entry.prompt_sha256) {
                (Some(prompt), _) => self.insert(&prompt, entry.response),
                (None, Some(key)) => self.insert_key(&key, entry.response),
                (None, None) => {
                    return Err(AgentError::Config(format!(
                        "{}: script entry needs prompt or prompt_sha256",
                        path.display()
                    )))
                }
            };
        }
        Ok(())
    }

    fn generate(&self, prompt: &str) -> String {
        let mut s = HashStream::new(self.seed, "chat", prompt.as_bytes());
        format!(
            "A {} {} is {} {}.",
            s.pick(FALLBACK_COLORS),
            s.pick(FALLBACK_SUBJECTS),
            s.pick(FALLBACK_ACTIONS),
            s.pick(FALLBACK_PLACES),
        )
    }
}

impl ChatModel for ScriptedChat {
    fn complete(&self, prompt: &str, params: &ChatParams) -> Result<String, AgentError> {
        require_text("prompt", prompt)?;
        let text = match self.script.get(&prompt_key(prompt)) {
            Some(text) => text.clone(),
            None if self.strict => {
                return Err(AgentError::Protocol(format!(
                    "no scripted response for prompt {}",
                    prompt_key(prompt)
                )))
            }
            None => self.generate(prompt),
        };
        accept_completion(text, params)
    }
}

/// Builder for a full stub agent set with planted fixtures.
#[derive(Debug, Clone)]
pub struct StubAgents {
    pub embedder: StubEmbedder,
    pub detector: StubDetector,
    pub action: StubActionRecognizer,
    pub captioner: StubCaptioner,
    pub chat: ScriptedChat,
}

impl StubAgents {
    pub fn new(seed: u64, cfg: &AgentConfig) -> Self {
        Self {
            embedder: StubEmbedder::new(seed, cfg.image_embedding_dim, cfg.text_embedding_dim),
            detector: StubDetector::new(seed),
            action: StubActionRecognizer::new(seed),
            captioner: StubCaptioner::new(seed),
            chat: ScriptedChat::new(seed),
        }
    }

    pub fn into_agents(self) -> Agents {
        let embedder = Arc::new(self.embedder);
        Agents {
            image_embedder: embedder.clone(),
            text_embedder: embedder,
            detector: Arc::new(self.detector),
            action: Arc::new(self.action),
            captioner: Arc::new(self.captioner),
            chat: Arc::new(self.chat),
        }
    }
}

const FALLBACK_COLORS: &[&str] = &[
    "red", "blue", "green", "white", "black", "yellow", "gray", "brown",
];

const FALLBACK_OBJECTS: &[&str] = &[
    "person", "dog", "car", "boat", "chair", "bicycle", "umbrella", "bench", "cup", "kite",
];

const FALLBACK_POSES: &[&str] = &[
    "standing",
    "sitting",
    "moving slowly",
    "lying down",
    "parked",
    "floating",
];

const FALLBACK_PLACES: &[&str] = &[
    "on a beach",
    "in a kitchen",
    "on a city street",
    "near a river",
    "in a park",
    "inside a gym",
    "on a stage",
    "in a forest",
];

const FALLBACK_SUBJECTS: &[&str] = &["man", "woman", "child", "dog", "team", "crowd"];

const FALLBACK_ACTIONS: &[&str] = &[
    "walking",
    "kayaking",
    "cooking",
    "playing soccer",
    "riding a bike",
    "dancing",
    "talking",
    "swimming",
];
