//! Hierarchical textual representations of long videos.
//!
//! A video is split into keyframe-delimited clips, each clip is uniformly
//! sampled and pruned of visually redundant frames, perception agents turn
//! the surviving frames into structured observations, and a chat model
//! writes one chapter per clip and a story for the whole video. Chapters
//! that repeat recent content are dropped before the story is written.
//!
//! The resulting [`HierarchicalRepresentation`] is persisted as JSON and
//! consumed by the retrieval and question-answering harnesses in [`tasks`].

pub mod agents;
pub mod config;
pub mod ingest;
pub mod pipeline;
pub mod prompting;
pub mod redundancy;
pub mod tasks;

mod jsonfmt;

#[cfg(feature = "loopback")]
pub mod loopback;

pub use agents::{
    ActionLabel, AgentConfig, AgentError, Agents, Detection, EmbeddingVector, FrameCaption,
};
pub use config::EngineConfig;
pub use ingest::{ClipSpan, FrameRef, KeyframeIndex, SampledClip, VideoMeta};
pub use pipeline::{Chapter, HierarchicalRepresentation, PerceptionBundle, Story};
pub use prompting::{PositionBucket, PromptTemplates, SizeBucket, TemporalBucket};
pub use redundancy::MemoryWindow;
