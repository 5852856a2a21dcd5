//! Prompt construction.
//!
//! Templates are plain UTF-8 text files with `<slot>` placeholders. Slots
//! are filled in a single left-to-right pass, so text inserted into a slot
//! is never scanned for further placeholders. Angle-bracket tokens that are
//! not slots of the template (`<s>`, `<<SYS>>`) are literal text.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::{Chapter, PerceptionBundle};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PromptError {
    #[error("missing required field: {0}")]
    MissingField(&'static str),
    #[error("nothing to render: {0}")]
    EmptyInput(&'static str),
    #[error("{what} {value} is outside [0, 1]")]
    Range { what: &'static str, value: f64 },
    #[error("template {name}: {message}")]
    Template { name: &'static str, message: String },
}

const LOW: f64 = 0.33;
const HIGH: f64 = 0.66;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Band {
    Low,
    Mid,
    High,
}

fn band(v: f64) -> Band {
    if v < LOW {
        Band::Low
    } else if v < HIGH {
        Band::Mid
    } else {
        Band::High
    }
}

fn unit(what: &'static str, value: f64) -> Result<f64, PromptError> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(PromptError::Range { what, value })
    }
}

/// One of nine image regions, picked from an object's center point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PositionBucket {
    TopLeft,
    Top,
    TopRight,
    Left,
    Center,
    Right,
    BottomLeft,
    Bottom,
    BottomRight,
}

impl PositionBucket {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::TopLeft => "top-left",
            Self::Top => "top",
            Self::TopRight => "top-right",
            Self::Left => "left",
            Self::Center => "center",
            Self::Right => "right",
            Self::BottomLeft => "bottom-left",
            Self::Bottom => "bottom",
            Self::BottomRight => "bottom-right",
        }
    }
}

impl fmt::Display for PositionBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Region of a normalized center point. Bands are `[0, 0.33)`,
/// `[0.33, 0.66)` and `[0.66, 1]` on each axis; `y` grows downwards.
pub fn bucket_position(cx: f64, cy: f64) -> Result<PositionBucket, PromptError> {
    use PositionBucket::*;
    let (x, y) = (band(unit("x", cx)?), band(unit("y", cy)?));
    Ok(match (y, x) {
        (Band::Low, Band::Low) => TopLeft,
        (Band::Low, Band::Mid) => Top,
        (Band::Low, Band::High) => TopRight,
        (Band::Mid, Band::Low) => Left,
        (Band::Mid, Band::Mid) => Center,
        (Band::Mid, Band::High) => Right,
        (Band::High, Band::Low) => BottomLeft,
        (Band::High, Band::Mid) => Bottom,
        (Band::High, Band::High) => BottomRight,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SizeBucket {
    Small,
    Medium,
    Large,
}

impl SizeBucket {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Small => "small",
            Self::Medium => "medium",
            Self::Large => "large",
        }
    }
}

impl fmt::Display for SizeBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn bucket_size(area: f64) -> Result<SizeBucket, PromptError> {
    Ok(match band(unit("area", area)?) {
        Band::Low => SizeBucket::Small,
        Band::Mid => SizeBucket::Medium,
        Band::High => SizeBucket::Large,
    })
}

/// Quarter of the video in which a clip starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemporalBucket {
    Beginning,
    Early,
    Later,
    Final,
}

impl TemporalBucket {
    pub const ALL: [TemporalBucket; 4] = [Self::Beginning, Self::Early, Self::Later, Self::Final];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Beginning => "beginning",
            Self::Early => "early",
            Self::Later => "later",
            Self::Final => "final",
        }
    }

    fn slot(self) -> usize {
        self as usize
    }
}

pub fn bucket_temporal(start_fraction: f64) -> Result<TemporalBucket, PromptError> {
    if !(0.0..1.0).contains(&start_fraction) {
        return Err(PromptError::Range {
            what: "start fraction",
            value: start_fraction,
        });
    }
    Ok(match start_fraction {
        f if f < 0.25 => TemporalBucket::Beginning,
        f if f < 0.5 => TemporalBucket::Early,
        f if f < 0.75 => TemporalBucket::Later,
        _ => TemporalBucket::Final,
    })
}

/// Bucket of a clip starting at `start_frame` in a video of `total_frames`.
pub fn temporal_bucket_for(start_frame: u64, total_frames: u64) -> Result<TemporalBucket, PromptError> {
    if total_frames == 0 {
        return Err(PromptError::EmptyInput("video has no frames"));
    }
    bucket_temporal(start_frame as f64 / total_frames as f64)
}

/// Text used for a story slot when no retained chapter starts in that quarter.
pub const EMPTY_SLOT_SENTINEL: &str = "nothing notable.";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    ImageCaption,
    ClipDescription,
    VideoStory,
    VideoQa,
    ShortAnswer,
}

impl Kind {
    const ALL: [Kind; 5] = [
        Kind::ImageCaption,
        Kind::ClipDescription,
        Kind::VideoStory,
        Kind::VideoQa,
        Kind::ShortAnswer,
    ];

    fn name(self) -> &'static str {
        match self {
            Kind::ImageCaption => "image_caption",
            Kind::ClipDescription => "clip_description",
            Kind::VideoStory => "video_story",
            Kind::VideoQa => "video_qa",
            Kind::ShortAnswer => "short_answer",
        }
    }

    fn slots(self) -> &'static [&'static str] {
        match self {
            Kind::ImageCaption => &[],
            Kind::ClipDescription => &["<clip action>", "<object>", "<image caption>"],
            Kind::VideoStory => &[
                "<clip description1>",
                "<clip description2>",
                "<clip description3>",
                "<clip description4>",
            ],
            Kind::VideoQa => &["<video info>", "<question>"],
            Kind::ShortAnswer => &["<question>", "<long answer>"],
        }
    }

    fn builtin(self) -> &'static str {
        match self {
            Kind::ImageCaption => include_str!("../templates/image_caption.txt"),
            Kind::ClipDescription => include_str!("../templates/clip_description.txt"),
            Kind::VideoStory => include_str!("../templates/video_story.txt"),
            Kind::VideoQa => include_str!("../templates/video_qa.txt"),
            Kind::ShortAnswer => include_str!("../templates/short_answer.txt"),
        }
    }
}

/// Every slot name used by any template.
pub const ALL_SLOTS: &[&str] = &[
    "<clip action>",
    "<object>",
    "<image caption>",
    "<clip description1>",
    "<clip description2>",
    "<clip description3>",
    "<clip description4>",
    "<video info>",
    "<question>",
    "<long answer>",
];

/// The five prompt templates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplates {
    image_caption: String,
    clip_description: String,
    video_story: String,
    video_qa: String,
    short_answer: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self::from_sources(|kind| Ok(kind.builtin().to_owned()))
            .expect("built-in templates are valid")
    }
}

impl PromptTemplates {
    /// Reads `<name>.txt` for each template from `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, PromptError> {
        Self::from_sources(|kind| {
            let path = dir.join(format!("{}.txt", kind.name()));
            fs::read_to_string(&path).map_err(|e| PromptError::Template {
                name: kind.name(),
                message: format!("{}: {e}", path.display()),
            })
        })
    }

    fn from_sources(
        mut read: impl FnMut(Kind) -> Result<String, PromptError>,
    ) -> Result<Self, PromptError> {
        let mut texts = Vec::with_capacity(5);
        for kind in Kind::ALL {
            let raw = read(kind)?;
            if raw.contains('\r') {
                return Err(PromptError::Template {
                    name: kind.name(),
                    message: "CRLF line endings are not allowed".into(),
                });
            }
            // Files end with one newline that is not part of the prompt.
            let text = raw.strip_suffix('\n').unwrap_or(&raw).to_owned();
            for slot in kind.slots() {
                if !text.contains(slot) {
                    return Err(PromptError::Template {
                        name: kind.name(),
                        message: format!("missing slot {slot}"),
                    });
                }
            }
            texts.push(text);
        }
        let mut it = texts.into_iter();
        let mut next = || it.next().expect("five templates");
        Ok(Self {
            image_caption: next(),
            clip_description: next(),
            video_story: next(),
            video_qa: next(),
            short_answer: next(),
        })
    }

    /// Prompt sent to the captioner with each retained frame.
    pub fn image_caption(&self) -> &str {
        &self.image_caption
    }

    pub fn render_clip_prompt(&self, bundle: &PerceptionBundle) -> Result<String, PromptError> {
        let action = bundle
            .action
            .as_ref()
            .ok_or(PromptError::MissingField("action"))?;
        if action.label.trim().is_empty() {
            return Err(PromptError::MissingField("action"));
        }
        let mut frames = bundle.retained_frames.clone();
        frames.sort_unstable();

        let mut groups = Vec::new();
        for &frame in &frames {
            let Some(dets) = bundle.detections_for(frame) else {
                continue;
            };
            if dets.is_empty() {
                continue;
            }
            let objects = dets
                .iter()
                .map(|d| {
                    let (cx, cy) = d.center();
                    Ok(format!(
                        "{} ({}, {})",
                        d.label,
                        bucket_position(cx, cy)?,
                        bucket_size(d.area())?
                    ))
                })
                .collect::<Result<Vec<_>, PromptError>>()?;
            groups.push(format!("frame {frame}: {}", objects.join(", ")));
        }
        let objects = format!("{{{}}}", groups.join("; "));

        let mut captions: Vec<_> = bundle
            .captions
            .iter()
            .filter(|c| !c.text.trim().is_empty())
            .collect();
        if captions.is_empty() {
            return Err(PromptError::MissingField("captions"));
        }
        captions.sort_by_key(|c| c.frame_index);
        let captions = captions
            .iter()
            .map(|c| format!("frame {}: {}", c.frame_index, c.text.trim()))
            .collect::<Vec<_>>()
            .join("; ");

        render(
            Kind::ClipDescription,
            &self.clip_description,
            &[
                ("<clip action>", action.label.trim()),
                ("<object>", &objects),
                ("<image caption>", &captions),
            ],
        )
    }

    /// Story prompt from the retained chapters, in chronological order. Each
    /// quarter's chapters are joined with single spaces; the template supplies the
    /// sentence terminator, so one trailing period of the slot is dropped.
    pub fn render_story_prompt(&self, chapters: &[Chapter]) -> Result<String, PromptError> {
        let texts: Vec<(TemporalBucket, &str)> = chapters
            .iter()
            .filter(|c| c.retained)
            .map(|c| (c.temporal_bucket, c.text.trim()))
            .filter(|(_, t)| !t.is_empty())
            .collect();
        if texts.is_empty() {
            return Err(PromptError::EmptyInput("no chapters for the story"));
        }
        let mut slots: [Vec<&str>; 4] = Default::default();
        for (bucket, text) in texts {
            slots[bucket.slot()].push(text);
        }
        let filled: Vec<String> = slots
            .iter()
            .map(|texts| {
                let joined = if texts.is_empty() {
                    EMPTY_SLOT_SENTINEL.to_owned()
                } else {
                    texts.join(" ")
                };
                joined.strip_suffix('.').unwrap_or(&joined).to_owned()
            })
            .collect();
        render(
            Kind::VideoStory,
            &self.video_story,
            &[
                ("<clip description1>", &filled[0]),
                ("<clip description2>", &filled[1]),
                ("<clip description3>", &filled[2]),
                ("<clip description4>", &filled[3]),
            ],
        )
    }

    pub fn render_qa_prompt(&self, video_info: &str, question: &str) -> Result<String, PromptError> {
        let video_info = non_empty("video info", video_info)?;
        let question = non_empty("question", question)?;
        render(
            Kind::VideoQa,
            &self.video_qa,
            &[("<video info>", video_info), ("<question>", question)],
        )
    }

    pub fn render_short_answer_prompt(
        &self,
        question: &str,
        long_answer: &str,
    ) -> Result<String, PromptError> {
        let question = non_empty("question", question)?;
        let long_answer = non_empty("long answer", long_answer)?;
        render(
            Kind::ShortAnswer,
            &self.short_answer,
            &[("<question>", question), ("<long answer>", long_answer)],
        )
    }
}

/// Reference text for question answering: the selected chapters followed by
/// the story, separated by single spaces.
pub fn compose_video_info<'a>(chapters: impl IntoIterator<Item = &'a str>, story: &'a str) -> String {
    chapters
        .into_iter()
        .chain(std::iter::once(story))
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

fn non_empty<'v>(field: &'static str, value: &'v str) -> Result<&'v str, PromptError> {
    let value = value.trim();
    if value.is_empty() {
        return Err(PromptError::MissingField(field));
    }
    Ok(value)
}

/// Single-pass slot substitution.
fn render(kind: Kind, template: &str, values: &[(&str, &str)]) -> Result<String, PromptError> {
    let mut out = String::with_capacity(template.len() + values.iter().map(|v| v.1.len()).sum::<usize>());
    let mut rest = template;
    while let Some(pos) = rest.find('<') {
        out.push_str(&rest[..pos]);
        rest = &rest[pos..];
        match values.iter().find(|(slot, _)| rest.starts_with(slot)) {
            Some((slot, value)) => {
                out.push_str(value);
                rest = &rest[slot.len()..];
            }
            None => {
                out.push('<');
                rest = &rest[1..];
            }
        }
    }
    out.push_str(rest);
    debug_assert!(kind.slots().iter().all(|s| values.iter().any(|v| v.0 == *s)));
    Ok(out)
}

/// Slot names of `template_text` still present in `rendered`.
pub fn unfilled_slots(rendered: &str) -> Vec<&'static str> {
    ALL_SLOTS
        .iter()
        .copied()
        .filter(|s| rendered.contains(s))
        .collect()
}
