use std::path::PathBuf;

use crate::agents::AgentConfig;
use crate::ingest::DEFAULT_FRAMES_PER_CLIP;
use crate::redundancy::DEFAULT_MEMORY_WINDOW;
use crate::tasks::DEFAULT_QA_K;

/// Everything a pipeline or harness run needs besides its input files.
#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub agents: AgentConfig,
    pub frames_per_clip: usize,
    /// Preceding chapters averaged when scoring chapter redundancy.
    pub memory_window: usize,
    /// Chapters handed to the chat model when answering a question.
    pub qa_k: usize,
    /// Overrides the built-in prompt templates when set.
    pub template_dir: Option<PathBuf>,
    /// Use in-process stubs; no network access is made.
    pub stub_mode: bool,
    pub seed: u64,
    /// Parallel videos in batch runs.
    pub workers: usize,
    /// Exclude the story from retrieval scores (moment-level queries).
    pub exclude_story: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            agents: AgentConfig::default(),
            frames_per_clip: DEFAULT_FRAMES_PER_CLIP,
            memory_window: DEFAULT_MEMORY_WINDOW,
            qa_k: DEFAULT_QA_K,
            template_dir: None,
            stub_mode: false,
            seed: 0,
            workers: 4,
            exclude_story: false,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.agents.validate().map_err(|e| e.to_string())?;
        if self.frames_per_clip == 0 {
            return Err("frames_per_clip must be >= 1".into());
        }
        if self.memory_window == 0 {
            return Err("memory_window must be >= 1".into());
        }
        if self.workers == 0 {
            return Err("workers must be >= 1".into());
        }
        Ok(())
    }
}
