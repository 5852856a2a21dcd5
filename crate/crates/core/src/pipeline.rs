//! Bottom-up interpretation of one video: perceive each clip, write a
//! chapter per clip, drop redundant chapters, write the story, persist.

use std::collections::HashMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{ActionLabel, AgentError, Agents, Detection, EmbeddingVector, FrameCaption};
use crate::config::EngineConfig;
use crate::ingest::{
    segment, uniform_sample, ClipSpan, FrameImage, FrameSource, IngestError, KeyframeIndex,
    SampledClip, VideoMeta,
};
use crate::jsonfmt::{quantize, to_canonical_string};
use crate::prompting::{temporal_bucket_for, PromptError, PromptTemplates, TemporalBucket};
use crate::redundancy::{reduce_frames, retained_chapters, Embedded, RedundancyError};

pub const SCHEMA_VERSION: &str = "1";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Redundancy(#[from] RedundancyError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: malformed representation: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}: unsupported schema_version {found:?} (expected {SCHEMA_VERSION:?})")]
    SchemaVersion { path: PathBuf, found: String },
    #[error("nothing to summarize: {0}")]
    EmptyInput(&'static str),
    #[error("no clip of {video_id} could be described; clip {clip_index}: {}", errors.join("; "))]
    AllClipsFailed {
        video_id: String,
        clip_index: usize,
        errors: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameDetections {
    pub frame_index: u64,
    pub detections: Vec<Detection>,
}

/// What the perception agents saw in one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct PerceptionBundle {
    pub clip_index: usize,
    pub span: ClipSpan,
    pub sampled_frames: Vec<u64>,
    /// Frames surviving visual redundancy reduction, ascending.
    pub retained_frames: Vec<u64>,
    pub action: Option<ActionLabel>,
    pub detections: Vec<FrameDetections>,
    pub captions: Vec<FrameCaption>,
    /// Agent or frame failures; a bundle with errors is partial.
    pub errors: Vec<String>,
}

impl PerceptionBundle {
    pub fn is_partial(&self) -> bool {
        !self.errors.is_empty()
    }

    pub fn detections_for(&self, frame_index: u64) -> Option<&[Detection]> {
        self.detections
            .iter()
            .find(|d| d.frame_index == frame_index)
            .map(|d| d.detections.as_slice())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chapter {
    pub clip_index: usize,
    pub text: String,
    pub embedding: EmbeddingVector,
    pub temporal_bucket: TemporalBucket,
    pub retained: bool,
}

impl Embedded for Chapter {
    fn embedding(&self) -> &EmbeddingVector {
        &self.embedding
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Story {
    pub text: String,
    pub embedding: EmbeddingVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChapterRecord {
    pub text: String,
    pub embedding: EmbeddingVector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanRecord {
    pub start_frame: u64,
    pub end_frame: u64,
}

/// Persisted state of one clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipRecord {
    pub clip_index: usize,
    pub span: SpanRecord,
    pub sampled_frames: Vec<u64>,
    pub retained_frames: Vec<u64>,
    pub action: Option<ActionLabel>,
    pub detections: Vec<FrameDetections>,
    pub captions: Vec<FrameCaption>,
    pub chapter: Option<ChapterRecord>,
    /// The chapter survived textual redundancy reduction.
    pub retained: bool,
    pub temporal_bucket: TemporalBucket,
    pub errors: Vec<String>,
}

impl ClipRecord {
    pub fn retained_chapter(&self) -> Option<&ChapterRecord> {
        self.chapter.as_ref().filter(|_| self.retained)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StorageStats {
    /// UTF-8 bytes of retained chapter texts.
    pub chapters_bytes: u64,
    pub story_bytes: u64,
    pub total_bytes: u64,
}

impl StorageStats {
    pub fn compute(clips: &[ClipRecord], story: Option<&Story>) -> Self {
        let chapters_bytes = clips
            .iter()
            .filter_map(ClipRecord::retained_chapter)
            .map(|c| c.text.len() as u64)
            .sum();
        let story_bytes = story.map_or(0, |s| s.text.len() as u64);
        Self {
            chapters_bytes,
            story_bytes,
            total_bytes: chapters_bytes + story_bytes,
        }
    }
}

/// Chapters and story of one video plus the perception data behind them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchicalRepresentation {
    pub schema_version: String,
    pub video_id: String,
    pub fps: f64,
    pub total_frames: u64,
    pub clips: Vec<ClipRecord>,
    pub story: Option<Story>,
    pub stats: StorageStats,
}

impl HierarchicalRepresentation {
    pub fn is_partial(&self) -> bool {
        self.clips.iter().any(|c| !c.errors.is_empty())
    }

    /// Retained chapters in clip order.
    pub fn retained_chapters(&self) -> impl Iterator<Item = (usize, &ChapterRecord)> {
        self.clips
            .iter()
            .filter_map(|c| c.retained_chapter().map(|ch| (c.clip_index, ch)))
    }

    /// Bytes of every chapter, retained or not.
    pub fn all_chapters_bytes(&self) -> u64 {
        self.clips
            .iter()
            .filter_map(|c| c.chapter.as_ref())
            .map(|c| c.text.len() as u64)
            .sum()
    }

    pub fn to_json(&self) -> String {
        to_canonical_string(self).expect("representation serializes")
    }
}

/// Writes `contents` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, contents: &[u8]) -> io::Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "path has no file name"))?;
    let tmp = dir.join(format!(
        ".{}.tmp{}",
        name.to_string_lossy(),
        std::process::id()
    ));
    let result = (|| {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(contents)?;
        file.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

pub fn save_representation(rep: &HierarchicalRepresentation, path: &Path) -> Result<(), PipelineError> {
    write_atomic(path, rep.to_json().as_bytes()).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_representation(path: &Path) -> Result<HierarchicalRepresentation, PipelineError> {
    let text = fs::read_to_string(path).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let parse_err = |e: serde_json::Error| PipelineError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let value: serde_json::Value = serde_json::from_str(&text).map_err(parse_err)?;
    match value.get("schema_version").and_then(|v| v.as_str()) {
        Some(SCHEMA_VERSION) => {}
        Some(other) => {
            return Err(PipelineError::SchemaVersion {
                path: path.to_path_buf(),
                found: other.to_owned(),
            })
        }
        None => {
            return Err(PipelineError::Parse {
                path: path.to_path_buf(),
                message: "missing schema_version".into(),
            })
        }
    }
    serde_json::from_value(value).map_err(parse_err)
}

fn quantize_detection(d: Detection) -> Detection {
    Detection {
        bbox: d.bbox.map(quantize),
        score: quantize(d.score),
        label: d.label,
    }
}

fn quantize_embedding(e: EmbeddingVector) -> EmbeddingVector {
    e.map(quantize)
}

/// Runs agents over clips and chapters of one video.
pub struct Pipeline<'a> {
    agents: &'a Agents,
    templates: &'a PromptTemplates,
    cfg: &'a EngineConfig,
}

impl<'a> Pipeline<'a> {
    pub fn new(agents: &'a Agents, templates: &'a PromptTemplates, cfg: &'a EngineConfig) -> Self {
        Self {
            agents,
            templates,
            cfg,
        }
    }

    /// Visual reduction followed by detection and captioning of the
    /// retained frames. The action recognizer sees every sampled frame.
    /// Failures are recorded on the bundle rather than returned.
    pub fn perceive_clip(&self, clip: &SampledClip, source: &dyn FrameSource) -> PerceptionBundle {
        let mut errors = Vec::new();
        let mut images: Vec<FrameImage> = Vec::with_capacity(clip.frames.len());
        for &frame in &clip.frames {
            match source.frame(frame) {
                Ok(image) => images.push(image),
                Err(e) => errors.push(e.to_string()),
            }
        }
        let mut bundle = PerceptionBundle {
            clip_index: clip.span.clip_index,
            span: clip.span,
            sampled_frames: clip.indices().collect(),
            retained_frames: Vec::new(),
            action: None,
            detections: Vec::new(),
            captions: Vec::new(),
            errors: Vec::new(),
        };
        if images.is_empty() {
            bundle.errors = errors;
            return bundle;
        }

        let available = SampledClip {
            span: clip.span,
            frames: images.iter().map(|i| i.frame).collect(),
        };
        let embeddings: Result<HashMap<u64, EmbeddingVector>, AgentError> = images
            .iter()
            .map(|img| Ok((img.frame.index, self.agents.image_embedder.embed_image(img)?)))
            .collect();
        let retained = match embeddings {
            Ok(embs) => match reduce_frames(&available, &embs) {
                Ok(reduced) => reduced,
                Err(e) => {
                    errors.push(format!("frame reduction: {e}"));
                    available.clone()
                }
            },
            Err(e) => {
                errors.push(format!("embed_image: {e}"));
                available.clone()
            }
        };
        bundle.retained_frames = retained.indices().collect();

        match self.agents.action.recognize_action(clip, &images) {
            Ok(label) => {
                bundle.action = Some(ActionLabel {
                    score: quantize(label.score),
                    label: label.label,
                })
            }
            Err(e) => errors.push(format!("recognize_action: {e}")),
        }

        let prompt = self.templates.image_caption();
        for image in images
            .iter()
            .filter(|i| bundle.retained_frames.contains(&i.frame.index))
        {
            match self
                .agents
                .detector
                .detect_objects(image, &self.cfg.agents.detector)
            {
                Ok(dets) => bundle.detections.push(FrameDetections {
                    frame_index: image.frame.index,
                    detections: dets.into_iter().map(quantize_detection).collect(),
                }),
                Err(e) => errors.push(format!("detect_objects frame {}: {e}", image.frame.index)),
            }
            match self.agents.captioner.caption_frame(image, prompt) {
                Ok(caption) => bundle.captions.push(caption),
                Err(e) => errors.push(format!("caption_frame frame {}: {e}", image.frame.index)),
            }
        }
        bundle.errors = errors;
        bundle
    }

    /// Writes the chapter for one clip and embeds it.
    pub fn interpret_clip(
        &self,
        bundle: &PerceptionBundle,
        total_frames: u64,
    ) -> Result<Chapter, PipelineError> {
        let prompt = self.templates.render_clip_prompt(bundle)?;
        let text = self.agents.chat.complete(&prompt, &self.cfg.agents.chat)?;
        let embedding = quantize_embedding(self.agents.text_embedder.embed_text(&text)?);
        Ok(Chapter {
            clip_index: bundle.clip_index,
            text,
            embedding,
            temporal_bucket: temporal_bucket_for(bundle.span.start_frame, total_frames)?,
            retained: true,
        })
    }

    /// Marks redundant chapters as not retained and writes the story from
    /// the rest. Chapters must be in clip order.
    pub fn summarize_story(&self, chapters: &mut [Chapter]) -> Result<Story, PipelineError> {
        let usable: Vec<usize> = (0..chapters.len())
            .filter(|&i| !chapters[i].text.trim().is_empty())
            .collect();
        if usable.is_empty() {
            return Err(PipelineError::EmptyInput("no chapters"));
        }
        let embeddings: Vec<EmbeddingVector> = usable
            .iter()
            .map(|&i| chapters[i].embedding.clone())
            .collect();
        let keep = retained_chapters(&embeddings, self.cfg.memory_window)?;
        for chapter in chapters.iter_mut() {
            chapter.retained = false;
        }
        for (&i, k) in usable.iter().zip(keep) {
            chapters[i].retained = k;
        }
        let prompt = self.templates.render_story_prompt(chapters)?;
        let text = self.agents.chat.complete(&prompt, &self.cfg.agents.chat)?;
        let embedding = quantize_embedding(self.agents.text_embedder.embed_text(&text)?);
        Ok(Story { text, embedding })
    }

    /// The whole bottom-up pass for one video. Clips are processed in
    /// parallel and merged in clip order. Per-clip failures are recorded on
    /// the clip; if no clip yields a chapter the run fails with the first
    /// recorded error.
    pub fn build_representation(
        &self,
        meta: &VideoMeta,
        index: &KeyframeIndex,
        source: &dyn FrameSource,
    ) -> Result<HierarchicalRepresentation, PipelineError> {
        meta.validate()?;
        let spans = segment(meta, index);
        let results: Vec<(PerceptionBundle, Result<Chapter, PipelineError>)> = spans
            .par_iter()
            .map(|&span| {
                let clip = uniform_sample(meta, span, self.cfg.frames_per_clip);
                let bundle = self.perceive_clip(&clip, source);
                let chapter = self.interpret_clip(&bundle, meta.total_frames);
                (bundle, chapter)
            })
            .collect();

        let mut clips = Vec::with_capacity(results.len());
        let mut chapters = Vec::new();
        for (bundle, chapter) in results {
            let mut errors = bundle.errors;
            let chapter = match chapter {
                Ok(c) => Some(c),
                Err(e) => {
                    errors.push(format!("interpret_clip: {e}"));
                    None
                }
            };
            clips.push(ClipRecord {
                clip_index: bundle.clip_index,
                span: SpanRecord {
                    start_frame: bundle.span.start_frame,
                    end_frame: bundle.span.end_frame,
                },
                sampled_frames: bundle.sampled_frames,
                retained_frames: bundle.retained_frames,
                action: bundle.action,
                detections: bundle.detections,
                captions: bundle.captions,
                chapter: None,
                retained: false,
                temporal_bucket: temporal_bucket_for(bundle.span.start_frame, meta.total_frames)?,
                errors,
            });
            chapters.extend(chapter);
        }

        // A video where no clip could be described at all is a failure of
        // the run, not a partial result.
        if chapters.is_empty() {
            if let Some(first) = clips.iter().find(|c| !c.errors.is_empty()) {
                return Err(PipelineError::AllClipsFailed {
                    video_id: meta.video_id.clone(),
                    clip_index: first.clip_index,
                    errors: first.errors.clone(),
                });
            }
        }
        let story = if chapters.is_empty() {
            None
        } else {
            Some(self.summarize_story(&mut chapters)?)
        };
        for chapter in chapters {
            let clip = &mut clips[chapter.clip_index];
            clip.retained = chapter.retained;
            clip.chapter = Some(ChapterRecord {
                text: chapter.text,
                embedding: chapter.embedding,
            });
        }
        let stats = StorageStats::compute(&clips, story.as_ref());
        Ok(HierarchicalRepresentation {
            schema_version: SCHEMA_VERSION.to_owned(),
            video_id: meta.video_id.clone(),
            fps: quantize(meta.fps),
            total_frames: meta.total_frames,
            clips,
            story,
            stats,
        })
    }
}
