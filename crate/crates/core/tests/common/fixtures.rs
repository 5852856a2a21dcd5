use std::path::PathBuf;

use vidstory_core::agents::{ActionLabel, Detection, EmbeddingVector, FrameCaption};
use vidstory_core::ingest::ClipSpan;
use vidstory_core::pipeline::{
    Chapter, ChapterRecord, ClipRecord, FrameDetections, HierarchicalRepresentation,
    PerceptionBundle, SpanRecord, StorageStats, Story, SCHEMA_VERSION,
};
use vidstory_core::prompting::TemporalBucket;

pub fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("..")
        .join("core")
        .join("tests")
        .join("golden")
}

pub fn golden(name: &str) -> String {
    let path = golden_dir().join(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn det(label: &str, bbox: [f64; 4], score: f64) -> Detection {
    Detection::new(label, bbox, score).unwrap()
}

fn caption(frame_index: u64, text: &str) -> FrameCaption {
    FrameCaption {
        frame_index,
        text: text.into(),
    }
}

fn bundle(
    clip_index: usize,
    span: (u64, u64),
    retained: &[u64],
    action: Option<&str>,
    detections: Vec<(u64, Vec<Detection>)>,
    captions: Vec<FrameCaption>,
) -> PerceptionBundle {
    PerceptionBundle {
        clip_index,
        span: ClipSpan {
            clip_index,
            start_frame: span.0,
            end_frame: span.1,
        },
        sampled_frames: retained.to_vec(),
        retained_frames: retained.to_vec(),
        action: action.map(|label| ActionLabel {
            label: label.into(),
            score: 0.9,
        }),
        detections: detections
            .into_iter()
            .map(|(frame_index, detections)| FrameDetections {
                frame_index,
                detections,
            })
            .collect(),
        captions,
        errors: vec![],
    }
}

/// Kayaking clip: two objects on the keyframe, none on frame 30.
pub fn clip_bundle_a() -> PerceptionBundle {
    bundle(
        0,
        (0, 80),
        &[0, 30, 40],
        Some("kayaking"),
        vec![
            (
                0,
                vec![
                    det("person", [0.1, 0.1, 0.3, 0.3], 0.9),
                    det("boat", [0.2, 0.5, 0.8, 0.9], 0.8),
                ],
            ),
            (30, vec![]),
            (40, vec![det("person", [0.4, 0.35, 0.6, 0.65], 0.7)]),
        ],
        vec![
            caption(0, "a man in a red kayak on a river"),
            caption(30, "a river with trees on both banks"),
            caption(40, "a man paddling a kayak"),
        ],
    )
}

/// Single retained frame with no detections at all.
pub fn clip_bundle_b() -> PerceptionBundle {
    bundle(
        1,
        (100, 101),
        &[100],
        Some("cooking"),
        vec![(100, vec![])],
        vec![caption(100, "a kitchen counter with a pot on a stove")],
    )
}

/// Boundary center (x = 0.33), a large box, and captions given out of order.
pub fn clip_bundle_c() -> PerceptionBundle {
    bundle(
        2,
        (250, 400),
        &[260, 250],
        Some("playing soccer"),
        vec![
            (
                250,
                vec![
                    det("sports ball", [0.0, 0.0, 0.9, 0.9], 0.95),
                    det("person", [0.7, 0.7, 0.96, 0.98], 0.6),
                ],
            ),
            (260, vec![det("person", [0.0, 0.2, 0.66, 0.9], 0.85)]),
        ],
        vec![
            caption(260, "a person in white kicking a ball"),
            caption(250, "players on a sandy beach with a ball"),
        ],
    )
}

fn chapter(clip_index: usize, bucket: TemporalBucket, text: &str) -> Chapter {
    Chapter {
        clip_index,
        text: text.into(),
        embedding: EmbeddingVector::new(vec![1.0, 0.0]).unwrap(),
        temporal_bucket: bucket,
        retained: true,
    }
}

pub fn story_chapters_a() -> Vec<Chapter> {
    use TemporalBucket::*;
    vec![
        chapter(0, Beginning, "A man paddles a red kayak down a river."),
        chapter(1, Early, "He passes a wooden bridge."),
        chapter(2, Later, "The river widens near a lake."),
        chapter(3, Final, "He pulls the kayak onto the shore."),
    ]
}

pub fn story_chapters_b() -> Vec<Chapter> {
    use TemporalBucket::*;
    vec![
        chapter(0, Early, "A chef chops onions."),
        chapter(1, Early, "She stirs a pot."),
    ]
}

pub fn story_chapters_c() -> Vec<Chapter> {
    use TemporalBucket::*;
    vec![
        chapter(0, Beginning, "Players gather on the beach."),
        chapter(1, Beginning, "A whistle blows"),
        chapter(2, Final, "The team celebrates a goal!"),
    ]
}

/// (video info, question) pairs.
pub const QA_FIXTURES: [(&str, &str); 3] = [
    (
        "A man paddles a red kayak down a river. A man kayaks down a river and pulls the kayak ashore.",
        "what color is the kayak",
    ),
    ("Nothing happens.", "is anyone cooking?"),
    (
        "Players gather on the beach. The team celebrates a goal on the beach.",
        "where are the players",
    ),
];

/// (question, long answer) pairs.
pub const SHORT_ANSWER_FIXTURES: [(&str, &str); 3] = [
    ("what color is the kayak", "The kayak in the video is red."),
    ("is anyone cooking?", "Yes, a chef is cooking onions in a pot."),
    (
        "where are the players",
        "The players are on a sandy beach near the water.",
    ),
];

/// One chapter of a synthetic representation: text, embedding, retained.
pub type SyntheticChapter = (String, Vec<f64>, bool);

/// Representation built straight from embeddings, with one 100-frame clip
/// per chapter and no perception data.
pub fn synthetic_rep(
    video_id: &str,
    chapters: Vec<SyntheticChapter>,
    story: Option<(String, Vec<f64>)>,
) -> HierarchicalRepresentation {
    let total_frames = 100 * chapters.len().max(1) as u64;
    let clips: Vec<ClipRecord> = chapters
        .into_iter()
        .enumerate()
        .map(|(i, (text, emb, retained))| {
            let start = 100 * i as u64;
            ClipRecord {
                clip_index: i,
                span: SpanRecord {
                    start_frame: start,
                    end_frame: start + 100,
                },
                sampled_frames: vec![start],
                retained_frames: vec![start],
                action: None,
                detections: vec![],
                captions: vec![],
                chapter: Some(ChapterRecord {
                    text,
                    embedding: EmbeddingVector::new(emb).unwrap(),
                }),
                retained,
                temporal_bucket: vidstory_core::prompting::temporal_bucket_for(start, total_frames)
                    .unwrap(),
                errors: vec![],
            }
        })
        .collect();
    let story = story.map(|(text, emb)| Story {
        text,
        embedding: EmbeddingVector::new(emb).unwrap(),
    });
    let stats = StorageStats::compute(&clips, story.as_ref());
    HierarchicalRepresentation {
        schema_version: SCHEMA_VERSION.to_owned(),
        video_id: video_id.to_owned(),
        fps: 30.0,
        total_frames,
        clips,
        story,
        stats,
    }
}
