//! Video metadata, keyframe indices, keyframe segmentation and uniform
//! per-clip frame sampling.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Frames sampled per clip unless configured otherwise.
pub const DEFAULT_FRAMES_PER_CLIP: usize = 8;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("malformed {what}: {message}")]
    Parse { what: &'static str, message: String },
    #[error("keyframe {index} is out of range for a video of {total_frames} frames")]
    Range { index: u64, total_frames: u64 },
    #[error("video has no frames, keyframe index cannot be built")]
    EmptyIndex,
    #[error("keyframe sidecar disagrees with video metadata: {0}")]
    Mismatch(String),
    #[error("frame {index} unavailable: {message}")]
    Frame { index: u64, message: String },
}

/// Static description of one video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoMeta {
    pub video_id: String,
    pub total_frames: u64,
    pub fps: f64,
    /// Opaque locator for pixel access, typically a directory of extracted frames.
    #[serde(default)]
    pub frame_source: String,
}

impl VideoMeta {
    pub fn new(
        video_id: impl Into<String>,
        total_frames: u64,
        fps: f64,
        frame_source: impl Into<String>,
    ) -> Result<Self, IngestError> {
        let meta = Self {
            video_id: video_id.into(),
            total_frames,
            fps,
            frame_source: frame_source.into(),
        };
        meta.validate()?;
        Ok(meta)
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        if self.total_frames == 0 {
            return Err(IngestError::EmptyIndex);
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(IngestError::Parse {
                what: "video metadata",
                message: format!("fps must be positive, got {}", self.fps),
            });
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, IngestError> {
        let text = read(path)?;
        let meta: VideoMeta = serde_json::from_str(&text).map_err(|e| IngestError::Parse {
            what: "video metadata",
            message: e.to_string(),
        })?;
        meta.validate()?;
        Ok(meta)
    }

    pub fn timestamp(&self, frame_index: u64) -> f64 {
        frame_index as f64 / self.fps
    }
}

/// On-disk keyframe sidecar. Unknown keys are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyframeSidecar {
    pub video_id: String,
    pub total_frames: u64,
    pub fps: f64,
    pub keyframes: Vec<u64>,
}

impl KeyframeSidecar {
    pub fn load(path: &Path) -> Result<Self, IngestError> {
        let text = read(path)?;
        serde_json::from_str(&text).map_err(|e| IngestError::Parse {
            what: "keyframe sidecar",
            message: e.to_string(),
        })
    }

    /// Metadata implied by the sidecar alone, with no pixel source.
    pub fn meta(&self) -> Result<VideoMeta, IngestError> {
        VideoMeta::new(self.video_id.clone(), self.total_frames, self.fps, "")
    }
}

/// Strictly increasing keyframe positions, always starting at frame 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyframeIndex {
    keyframes: Vec<u64>,
}

impl KeyframeIndex {
    /// Normalizes raw decoder output: sorts, drops duplicates, prepends
    /// frame 0 when absent and rejects positions past the end of the video.
    pub fn normalize(raw: &[u64], total_frames: u64) -> Result<Self, IngestError> {
        if total_frames == 0 {
            return Err(IngestError::EmptyIndex);
        }
        if let Some(&index) = raw.iter().find(|&&k| k >= total_frames) {
            return Err(IngestError::Range {
                index,
                total_frames,
            });
        }
        let mut keyframes = Vec::with_capacity(raw.len() + 1);
        keyframes.push(0);
        keyframes.extend_from_slice(raw);
        keyframes.sort_unstable();
        keyframes.dedup();
        Ok(Self { keyframes })
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.keyframes
    }

    /// Number of keyframes, which equals the number of clips.
    pub fn len(&self) -> usize {
        self.keyframes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keyframes.is_empty()
    }
}

pub fn load_keyframe_index(path: &Path, meta: &VideoMeta) -> Result<KeyframeIndex, IngestError> {
    let sidecar = KeyframeSidecar::load(path)?;
    if sidecar.video_id != meta.video_id {
        return Err(IngestError::Mismatch(format!(
            "video_id {:?} != {:?}",
            sidecar.video_id, meta.video_id
        )));
    }
    if sidecar.total_frames != meta.total_frames {
        return Err(IngestError::Mismatch(format!(
            "total_frames {} != {}",
            sidecar.total_frames, meta.total_frames
        )));
    }
    KeyframeIndex::normalize(&sidecar.keyframes, meta.total_frames)
}

/// Half-open frame interval `[start_frame, end_frame)` of one clip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipSpan {
    pub clip_index: usize,
    pub start_frame: u64,
    pub end_frame: u64,
}

impl ClipSpan {
    pub fn len(&self) -> u64 {
        self.end_frame - self.start_frame
    }

    pub fn is_empty(&self) -> bool {
        self.end_frame <= self.start_frame
    }

    pub fn contains(&self, frame: u64) -> bool {
        (self.start_frame..self.end_frame).contains(&frame)
    }
}

/// Splits the video at every keyframe; the last clip runs to the final frame.
pub fn segment(meta: &VideoMeta, index: &KeyframeIndex) -> Vec<ClipSpan> {
    let keys = index.as_slice();
    keys.iter()
        .enumerate()
        .map(|(k, &start)| ClipSpan {
            clip_index: k,
            start_frame: start,
            end_frame: keys.get(k + 1).copied().unwrap_or(meta.total_frames),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameRef {
    pub index: u64,
    /// Seconds from the start of the video.
    pub timestamp: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledClip {
    pub span: ClipSpan,
    pub frames: Vec<FrameRef>,
}

impl SampledClip {
    pub fn keyframe(&self) -> FrameRef {
        self.frames[0]
    }

    pub fn indices(&self) -> impl Iterator<Item = u64> + '_ {
        self.frames.iter().map(|f| f.index)
    }
}

/// Picks `min(n, len)` evenly spaced frames, the first being the keyframe:
/// `index_j = start + floor(j * len / m)`.
pub fn uniform_sample(meta: &VideoMeta, span: ClipSpan, n: usize) -> SampledClip {
    let n = n.max(1) as u64;
    let len = span.len();
    let m = n.min(len);
    let frames = (0..m)
        .map(|j| {
            let index = span.start_frame + j * len / m;
            FrameRef {
                index,
                timestamp: meta.timestamp(index),
            }
        })
        .collect();
    SampledClip { span, frames }
}

/// Encoded pixels of one frame. `png` holds a PNG image.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameImage {
    pub frame: FrameRef,
    pub png: Vec<u8>,
}

/// Supplies pixels for frame indices of a single video.
pub trait FrameSource: Send + Sync {
    fn frame(&self, frame: FrameRef) -> Result<FrameImage, IngestError>;
}

/// Reads pre-extracted frames named `<index>.png` (zero-padded to six
/// digits) from a directory.
#[derive(Debug, Clone)]
pub struct DirectoryFrames {
    dir: PathBuf,
}

impl DirectoryFrames {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn path_for(&self, index: u64) -> PathBuf {
        self.dir.join(format!("{index:06}.png"))
    }
}

impl FrameSource for DirectoryFrames {
    fn frame(&self, frame: FrameRef) -> Result<FrameImage, IngestError> {
        let path = self.path_for(frame.index);
        let png = fs::read(&path).map_err(|e| IngestError::Frame {
            index: frame.index,
            message: format!("{}: {e}", path.display()),
        })?;
        Ok(FrameImage { frame, png })
    }
}

/// Deterministic 8x8 grayscale frames derived from the video id and frame
/// index. Used when running against stub agents without real footage.
#[derive(Debug, Clone)]
pub struct SyntheticFrames {
    video_id: String,
}

impl SyntheticFrames {
    pub const SIZE: u32 = 8;

    pub fn new(video_id: impl Into<String>) -> Self {
        Self {
            video_id: video_id.into(),
        }
    }

    fn pixels(&self, index: u64) -> Vec<u8> {
        let mut out = Vec::with_capacity((Self::SIZE * Self::SIZE) as usize);
        let mut block = 0u32;
        while out.len() < (Self::SIZE * Self::SIZE) as usize {
            let digest = Sha256::new()
                .chain_update(self.video_id.as_bytes())
                .chain_update(index.to_le_bytes())
                .chain_update(block.to_le_bytes())
                .finalize();
            out.extend_from_slice(&digest);
            block += 1;
        }
        out.truncate((Self::SIZE * Self::SIZE) as usize);
        out
    }
}

impl FrameSource for SyntheticFrames {
    fn frame(&self, frame: FrameRef) -> Result<FrameImage, IngestError> {
        let png = encode_gray_png(Self::SIZE, Self::SIZE, &self.pixels(frame.index)).map_err(
            |message| IngestError::Frame {
                index: frame.index,
                message,
            },
        )?;
        Ok(FrameImage { frame, png })
    }
}

pub(crate) fn encode_gray_png(width: u32, height: u32, pixels: &[u8]) -> Result<Vec<u8>, String> {
    let mut buf = Vec::new();
    let mut encoder = png::Encoder::new(&mut buf, width, height);
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder.write_header().map_err(|e| e.to_string())?;
    writer.write_image_data(pixels).map_err(|e| e.to_string())?;
    writer.finish().map_err(|e| e.to_string())?;
    Ok(buf)
}

/// Picks a frame source for `meta`: a directory of frames when the locator
/// names one, otherwise synthetic frames if `allow_synthetic` is set.
pub fn open_frame_source(
    meta: &VideoMeta,
    allow_synthetic: bool,
) -> Result<Box<dyn FrameSource>, IngestError> {
    let locator = Path::new(&meta.frame_source);
    if !meta.frame_source.is_empty() && locator.is_dir() {
        return Ok(Box::new(DirectoryFrames::new(locator)));
    }
    if allow_synthetic {
        return Ok(Box::new(SyntheticFrames::new(meta.video_id.clone())));
    }
    Err(IngestError::Frame {
        index: 0,
        message: format!(
            "frame source {:?} is not a directory of extracted frames",
            meta.frame_source
        ),
    })
}

fn read(path: &Path) -> Result<String, IngestError> {
    fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}
