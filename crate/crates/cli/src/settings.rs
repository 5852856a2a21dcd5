//! Layered configuration: command-line flag, then `VIDSTORY_*` environment
//! variable (both handled by clap), then the TOML config file, then the
//! built-in default.
//!
//! Config file grammar (every key optional, unknown keys rejected):
//!
//! ```toml
//! [agents]
//! base_url = "http://127.0.0.1:8600"   # all six endpoints under /v1/<name>
//! embed_image_url = "..."              # per-endpoint overrides
//! embed_text_url = "..."
//! detect_url = "..."
//! action_url = "..."
//! caption_url = "..."
//! chat_url = "..."
//! timeout_ms = 60000
//! retries = 2
//! retry_backoff_ms = 250
//! bearer_token = "..."
//! image_embedding_dim = 512
//! text_embedding_dim = 768
//! box_threshold = 0.4
//! text_threshold = 0.25
//! categories_file = "categories.txt"   # one label per line, '#' comments
//! temperature = 0.7
//! repetition_penalty = 1.0
//! max_tokens = 100
//!
//! [pipeline]
//! frames_per_clip = 8
//! memory_window = 35
//! workers = 4
//! template_dir = "templates"
//!
//! [qa]
//! k = 5
//!
//! [retrieval]
//! exclude_story = false
//!
//! [stub]
//! enabled = false
//! seed = 0
//! chat_script = "script.json"
//! ```
//!
//! Relative paths in the file resolve against the file's directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};
use vidstory_core::agents::{parse_categories, AgentConfig, Endpoints};
use vidstory_core::EngineConfig;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub agents: AgentsSection,
    #[serde(default)]
    pub pipeline: PipelineSection,
    #[serde(default)]
    pub qa: QaSection,
    #[serde(default)]
    pub retrieval: RetrievalSection,
    #[serde(default)]
    pub stub: StubSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentsSection {
    pub base_url: Option<String>,
    pub embed_image_url: Option<String>,
    pub embed_text_url: Option<String>,
    pub detect_url: Option<String>,
    pub action_url: Option<String>,
    pub caption_url: Option<String>,
    pub chat_url: Option<String>,
    pub timeout_ms: Option<u64>,
    pub retries: Option<u32>,
    pub retry_backoff_ms: Option<u64>,
    pub bearer_token: Option<String>,
    pub image_embedding_dim: Option<usize>,
    pub text_embedding_dim: Option<usize>,
    pub box_threshold: Option<f64>,
    pub text_threshold: Option<f64>,
    pub categories_file: Option<PathBuf>,
    pub temperature: Option<f64>,
    pub repetition_penalty: Option<f64>,
    pub max_tokens: Option<u32>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineSection {
    pub frames_per_clip: Option<usize>,
    pub memory_window: Option<usize>,
    pub workers: Option<usize>,
    pub template_dir: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QaSection {
    pub k: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrievalSection {
    pub exclude_story: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StubSection {
    pub enabled: Option<bool>,
    pub seed: Option<u64>,
    pub chat_script: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: FileConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.agents.categories_file,
            &mut cfg.pipeline.template_dir,
            &mut cfg.stub.chat_script,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}

/// Flags shared by every subcommand. Each one can also be set through the
/// environment variable named next to it.
#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// TOML config file.
    #[arg(long, global = true, env = "VIDSTORY_CONFIG", value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Use deterministic in-process agents; no network access.
    #[arg(long, global = true, env = "VIDSTORY_STUB", num_args = 0..=1, require_equals = true,
          default_missing_value = "true", value_parser = clap::builder::BoolishValueParser::new())]
    pub stub: Option<bool>,
    /// Seed for stub agents.
    #[arg(long, global = true, env = "VIDSTORY_SEED")]
    pub seed: Option<u64>,
    #[arg(long, global = true, env = "VIDSTORY_FRAMES_PER_CLIP")]
    pub frames_per_clip: Option<usize>,
    /// Preceding chapters averaged when scoring chapter redundancy.
    #[arg(long, global = true, env = "VIDSTORY_MEMORY_WINDOW")]
    pub memory_window: Option<usize>,
    /// Chapters given to the chat model per question (0 = story only).
    #[arg(long, global = true, env = "VIDSTORY_QA_K")]
    pub qa_k: Option<usize>,
    /// Videos processed in parallel by batch commands.
    #[arg(long, global = true, env = "VIDSTORY_WORKERS")]
    pub workers: Option<usize>,
    /// Base URL of the agent services.
    #[arg(long, global = true, env = "VIDSTORY_AGENT_URL", value_name = "URL")]
    pub agent_url: Option<String>,
    /// Attempts after the first for retryable agent failures.
    #[arg(long, global = true, env = "VIDSTORY_RETRIES")]
    pub retries: Option<u32>,
    /// Per-request agent timeout in milliseconds.
    #[arg(long, global = true, env = "VIDSTORY_TIMEOUT_MS")]
    pub timeout_ms: Option<u64>,
    /// JSON list of {prompt | prompt_sha256, response} for the stub chat model.
    #[arg(long, global = true, env = "VIDSTORY_CHAT_SCRIPT", value_name = "PATH")]
    pub chat_script: Option<PathBuf>,
    #[arg(long, global = true, env = "VIDSTORY_TEMPLATE_DIR", value_name = "DIR")]
    pub template_dir: Option<PathBuf>,
}

/// Fully resolved settings for one invocation.
#[derive(Debug, Clone)]
pub struct Settings {
    pub engine: EngineConfig,
    pub chat_script: Option<PathBuf>,
}

/// Serializable view used by `show-config`.
#[derive(Debug, Serialize)]
pub struct SettingsView {
    pub stub: bool,
    pub seed: u64,
    pub frames_per_clip: usize,
    pub memory_window: usize,
    pub qa_k: usize,
    pub workers: usize,
    pub exclude_story: bool,
    pub chat_url: String,
    pub retries: u32,
    pub timeout_ms: u64,
    pub retry_backoff_ms: u64,
    pub image_embedding_dim: usize,
    pub text_embedding_dim: usize,
    pub box_threshold: f64,
    pub temperature: f64,
    pub max_tokens: u32,
    pub categories: usize,
    pub template_dir: Option<PathBuf>,
    pub chat_script: Option<PathBuf>,
}

impl Settings {
    pub fn resolve(args: &GlobalArgs) -> Result<Self> {
        let file = match &args.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        Self::layer(args, file)
    }

    pub fn layer(args: &GlobalArgs, file: FileConfig) -> Result<Self> {
        let defaults = EngineConfig::default();
        let a = &file.agents;

        let mut agents = AgentConfig::default();
        if let Some(base) = args.agent_url.as_ref().or(a.base_url.as_ref()) {
            agents.endpoints = Endpoints::with_base(base);
        }
        let e = &mut agents.endpoints;
        for (slot, value) in [
            (&mut e.embed_image, &a.embed_image_url),
            (&mut e.embed_text, &a.embed_text_url),
            (&mut e.detect, &a.detect_url),
            (&mut e.action, &a.action_url),
            (&mut e.caption, &a.caption_url),
            (&mut e.chat, &a.chat_url),
        ] {
            if let Some(v) = value {
                *slot = v.clone();
            }
        }
        if let Some(ms) = args.timeout_ms.or(a.timeout_ms) {
            agents.timeout = Duration::from_millis(ms);
        }
        agents.retries = args.retries.or(a.retries).unwrap_or(agents.retries);
        if let Some(ms) = a.retry_backoff_ms {
            agents.retry_backoff = Duration::from_millis(ms);
        }
        agents.bearer_token = a.bearer_token.clone();
        agents.image_embedding_dim = a.image_embedding_dim.unwrap_or(agents.image_embedding_dim);
        agents.text_embedding_dim = a.text_embedding_dim.unwrap_or(agents.text_embedding_dim);
        agents.detector.box_threshold = a.box_threshold.unwrap_or(agents.detector.box_threshold);
        agents.detector.text_threshold = a.text_threshold.unwrap_or(agents.detector.text_threshold);
        if let Some(path) = &a.categories_file {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading categories {}", path.display()))?;
            agents.detector.categories = parse_categories(&text);
        }
        agents.chat.temperature = a.temperature.unwrap_or(agents.chat.temperature);
        agents.chat.repetition_penalty =
            a.repetition_penalty.unwrap_or(agents.chat.repetition_penalty);
        agents.chat.max_tokens = a.max_tokens.unwrap_or(agents.chat.max_tokens);

        let engine = EngineConfig {
            agents,
            frames_per_clip: args
                .frames_per_clip
                .or(file.pipeline.frames_per_clip)
                .unwrap_or(defaults.frames_per_clip),
            memory_window: args
                .memory_window
                .or(file.pipeline.memory_window)
                .unwrap_or(defaults.memory_window),
            qa_k: args.qa_k.or(file.qa.k).unwrap_or(defaults.qa_k),
            template_dir: args
                .template_dir
                .clone()
                .or(file.pipeline.template_dir)
                .or(defaults.template_dir),
            stub_mode: args.stub.or(file.stub.enabled).unwrap_or(defaults.stub_mode),
            seed: args.seed.or(file.stub.seed).unwrap_or(defaults.seed),
            workers: args.workers.or(file.pipeline.workers).unwrap_or(defaults.workers),
            exclude_story: file.retrieval.exclude_story.unwrap_or(defaults.exclude_story),
        };
        if let Err(msg) = engine.validate() {
            bail!("invalid configuration: {msg}");
        }
        Ok(Self {
            engine,
            chat_script: args.chat_script.clone().or(file.stub.chat_script),
        })
    }

    pub fn view(&self) -> SettingsView {
        let e = &self.engine;
        SettingsView {
            stub: e.stub_mode,
            seed: e.seed,
            frames_per_clip: e.frames_per_clip,
            memory_window: e.memory_window,
            qa_k: e.qa_k,
            workers: e.workers,
            exclude_story: e.exclude_story,
            chat_url: e.agents.endpoints.chat.clone(),
            retries: e.agents.retries,
            timeout_ms: e.agents.timeout.as_millis() as u64,
            retry_backoff_ms: e.agents.retry_backoff.as_millis() as u64,
            image_embedding_dim: e.agents.image_embedding_dim,
            text_embedding_dim: e.agents.text_embedding_dim,
            box_threshold: e.agents.detector.box_threshold,
            temperature: e.agents.chat.temperature,
            max_tokens: e.agents.chat.max_tokens,
            categories: e.agents.detector.categories.len(),
            template_dir: e.template_dir.clone(),
            chat_script: self.chat_script.clone(),
        }
    }
}
