//! Semantic redundancy reduction at frame level (within a clip) and at
//! chapter level (across a video).

use std::collections::{HashMap, VecDeque};

use thiserror::Error;

use crate::agents::EmbeddingVector;
use crate::ingest::SampledClip;

/// Chapters of history averaged when scoring a new chapter.
pub const DEFAULT_MEMORY_WINDOW: usize = 35;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RedundancyError {
    #[error("embedding dimensions differ: {left} vs {right}")]
    Dimension { left: usize, right: usize },
    #[error("no embedding for sampled frame {0}")]
    MissingEmbedding(u64),
    #[error("memory window must hold at least one chapter")]
    EmptyWindow,
}

/// Cosine similarity clamped to `[-1, 1]`. A zero vector has similarity 0
/// with everything.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, RedundancyError> {
    cosine_slices(a.as_slice(), b.as_slice())
}

pub fn cosine_slices(a: &[f64], b: &[f64]) -> Result<f64, RedundancyError> {
    if a.len() != b.len() {
        return Err(RedundancyError::Dimension {
            left: a.len(),
            right: b.len(),
        });
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

/// Mean computed as an offset from the minimum, so a constant sequence has
/// exactly its own value as mean and ties at the mean stay ties.
fn tie_stable_mean(values: &[f64]) -> Option<f64> {
    let min = values.iter().copied().reduce(f64::min)?;
    let offset: f64 = values.iter().map(|v| v - min).sum();
    Some(min + offset / values.len() as f64)
}

/// Drops sampled frames that look too much like the clip's keyframe.
///
/// Every non-key frame is scored by cosine similarity to the keyframe; frames
/// scoring strictly above the mean score of the non-key frames are removed.
/// The keyframe is always kept and order is preserved.
pub fn reduce_frames(
    clip: &SampledClip,
    embeddings: &HashMap<u64, EmbeddingVector>,
) -> Result<SampledClip, RedundancyError> {
    let lookup = |index: u64| {
        embeddings
            .get(&index)
            .ok_or(RedundancyError::MissingEmbedding(index))
    };
    let Some((key, rest)) = clip.frames.split_first() else {
        return Ok(clip.clone());
    };
    let key_emb = lookup(key.index)?;
    let scores = rest
        .iter()
        .map(|f| cosine(key_emb, lookup(f.index)?))
        .collect::<Result<Vec<_>, _>>()?;
    let Some(threshold) = tie_stable_mean(&scores) else {
        return Ok(clip.clone());
    };
    let frames = std::iter::once(*key)
        .chain(
            rest.iter()
                .zip(&scores)
                .filter(|(_, &s)| s <= threshold)
                .map(|(f, _)| *f),
        )
        .collect();
    Ok(SampledClip {
        span: clip.span,
        frames,
    })
}

/// Rolling buffer of the most recent `capacity` chapter embeddings.
#[derive(Debug, Clone)]
pub struct MemoryWindow {
    capacity: usize,
    buffer: VecDeque<EmbeddingVector>,
}

impl MemoryWindow {
    pub fn new(capacity: usize) -> Result<Self, RedundancyError> {
        if capacity == 0 {
            return Err(RedundancyError::EmptyWindow);
        }
        Ok(Self {
            capacity,
            buffer: VecDeque::with_capacity(capacity),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    pub fn push(&mut self, embedding: EmbeddingVector) {
        if self.buffer.len() == self.capacity {
            self.buffer.pop_front();
        }
        self.buffer.push_back(embedding);
    }

    /// Element-wise mean of the buffered embeddings, `None` while empty.
    pub fn mean(&self) -> Result<Option<Vec<f64>>, RedundancyError> {
        let Some(first) = self.buffer.front() else {
            return Ok(None);
        };
        let mut sum = vec![0.0; first.dim()];
        for emb in &self.buffer {
            if emb.dim() != sum.len() {
                return Err(RedundancyError::Dimension {
                    left: sum.len(),
                    right: emb.dim(),
                });
            }
            for (s, v) in sum.iter_mut().zip(emb.as_slice()) {
                *s += v;
            }
        }
        let n = self.buffer.len() as f64;
        Ok(Some(sum.into_iter().map(|s| s / n).collect()))
    }
}

/// Similarity of each chapter to the mean of up to `window` preceding
/// chapters. The first chapter has no history and yields `None`.
pub fn chapter_similarities(
    embeddings: &[EmbeddingVector],
    window: usize,
) -> Result<Vec<Option<f64>>, RedundancyError> {
    let mut memory = MemoryWindow::new(window)?;
    let mut out = Vec::with_capacity(embeddings.len());
    for emb in embeddings {
        let score = match memory.mean()? {
            Some(mean) => Some(cosine_slices(emb.as_slice(), &mean)?),
            None => None,
        };
        out.push(score);
        memory.push(emb.clone());
    }
    Ok(out)
}

/// Which chapters survive textual reduction.
///
/// All similarities are computed over the original sequence first, so the
/// history of a chapter includes chapters that end up removed. A chapter is
/// dropped when its similarity strictly exceeds the mean of all defined
/// similarities.
pub fn retained_chapters(
    embeddings: &[EmbeddingVector],
    window: usize,
) -> Result<Vec<bool>, RedundancyError> {
    let scores = chapter_similarities(embeddings, window)?;
    let defined: Vec<f64> = scores.iter().flatten().copied().collect();
    let Some(threshold) = tie_stable_mean(&defined) else {
        return Ok(vec![true; embeddings.len()]);
    };
    Ok(scores
        .iter()
        .map(|s| s.map_or(true, |s| s <= threshold))
        .collect())
}

/// Anything carrying a chapter-level text embedding.
pub trait Embedded {
    fn embedding(&self) -> &EmbeddingVector;
}

impl Embedded for EmbeddingVector {
    fn embedding(&self) -> &EmbeddingVector {
        self
    }
}

pub fn reduce_chapters<T: Embedded + Clone>(
    chapters: &[T],
    window: usize,
) -> Result<Vec<T>, RedundancyError> {
    let embeddings: Vec<EmbeddingVector> =
        chapters.iter().map(|c| c.embedding().clone()).collect();
    let keep = retained_chapters(&embeddings, window)?;
    Ok(chapters
        .iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(c, _)| c.clone())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{ClipSpan, FrameRef};

    fn v(values: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(values.to_vec()).unwrap()
    }

    #[test]
    fn cosine_examples() {
        let a = v(&[0.3, -1.2, 2.0]);
        assert!((cosine(&a, &a).unwrap() - 1.0).abs() < 1e-9);
        assert_eq!(cosine(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(), 0.0);
        assert_eq!(cosine(&v(&[0.0, 0.0]), &v(&[1.0, 2.0])).unwrap(), 0.0);
        assert!(matches!(
            cosine(&v(&[1.0]), &v(&[1.0, 2.0])),
            Err(RedundancyError::Dimension { .. })
        ));
    }

    /// Embeddings on the unit circle with prescribed cosine to `[1, 0]`.
    fn clip_with_similarities(sims: &[f64]) -> (SampledClip, HashMap<u64, EmbeddingVector>) {
        let mut frames = vec![FrameRef {
            index: 0,
            timestamp: 0.0,
        }];
        let mut embs = HashMap::new();
        embs.insert(0, v(&[1.0, 0.0]));
        for (i, &s) in sims.iter().enumerate() {
            let index = (i as u64 + 1) * 10;
            frames.push(FrameRef {
                index,
                timestamp: 0.0,
            });
            embs.insert(index, v(&[s, (1.0 - s * s).sqrt()]));
        }
        let span = ClipSpan {
            clip_index: 0,
            start_frame: 0,
            end_frame: 100,
        };
        (SampledClip { span, frames }, embs)
    }

    #[test]
    fn frames_above_mean_similarity_are_removed() {
        let (clip, embs) = clip_with_similarities(&[0.9, 0.8, 0.5, 0.2]);
        let reduced = reduce_frames(&clip, &embs).unwrap();
        assert_eq!(reduced.indices().collect::<Vec<_>>(), vec![0, 30, 40]);
    }

    #[test]
    fn identical_frames_are_all_retained() {
        let (clip, embs) = clip_with_similarities(&[1.0, 1.0, 1.0]);
        let reduced = reduce_frames(&clip, &embs).unwrap();
        assert_eq!(reduced, clip);
        // Same direction with a non-representable similarity still ties.
        let (clip, mut embs) = clip_with_similarities(&[0.0, 0.0, 0.0]);
        for i in [10, 20, 30] {
            embs.insert(i, v(&[0.1, 0.7]));
        }
        assert_eq!(reduce_frames(&clip, &embs).unwrap(), clip);
    }

    #[test]
    fn keyframe_only_clip_is_unchanged() {
        let (clip, embs) = clip_with_similarities(&[]);
        assert_eq!(reduce_frames(&clip, &embs).unwrap(), clip);
    }

    #[test]
    fn missing_embedding_is_reported() {
        let (clip, mut embs) = clip_with_similarities(&[0.5, 0.4]);
        embs.remove(&20);
        assert_eq!(
            reduce_frames(&clip, &embs),
            Err(RedundancyError::MissingEmbedding(20))
        );
    }

    #[test]
    fn chapter_similarity_examples() {
        let same = chapter_similarities(&[v(&[1.0, 2.0]), v(&[1.0, 2.0])], 35).unwrap();
        assert_eq!(same[0], None);
        assert!((same[1].unwrap() - 1.0).abs() < 1e-12);
        let orth = chapter_similarities(&[v(&[1.0, 0.0]), v(&[0.0, 1.0])], 35).unwrap();
        assert_eq!(orth[1], Some(0.0));
    }

    #[test]
    fn window_truncates_history() {
        // With l=1 only the immediately preceding chapter counts.
        let embs = [v(&[1.0, 0.0]), v(&[0.0, 1.0]), v(&[1.0, 0.0])];
        let d = chapter_similarities(&embs, 1).unwrap();
        assert_eq!(d[2], Some(0.0));
        // With l=2 the mean of [1,0] and [0,1] is [0.5,0.5]: cos = 1/sqrt(2).
        let d = chapter_similarities(&embs, 2).unwrap();
        assert!((d[2].unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn chapter_reduction_ties_and_singletons() {
        let one = [v(&[1.0, 0.0])];
        assert_eq!(reduce_chapters(&one, 35).unwrap().len(), 1);
        let three = [v(&[0.2, 0.9]), v(&[0.2, 0.9]), v(&[0.2, 0.9])];
        assert_eq!(reduce_chapters(&three, 35).unwrap().len(), 3);
    }

    #[test]
    fn chapter_reduction_drops_repeats() {
        // d_2 = 0 (orthogonal), d_3 = 1 (repeat of chapter 2 with l=1): mean 0.5.
        let embs = [v(&[1.0, 0.0]), v(&[0.0, 1.0]), v(&[0.0, 1.0])];
        assert_eq!(retained_chapters(&embs, 1).unwrap(), vec![true, true, false]);
    }

    #[test]
    fn zero_window_is_rejected() {
        assert_eq!(
            MemoryWindow::new(0).unwrap_err(),
            RedundancyError::EmptyWindow
        );
    }

    #[test]
    fn memory_window_evicts_oldest() {
        let mut w = MemoryWindow::new(2).unwrap();
        w.push(v(&[1.0, 0.0]));
        w.push(v(&[0.0, 1.0]));
        w.push(v(&[0.0, 3.0]));
        assert_eq!(w.len(), 2);
        assert_eq!(w.mean().unwrap().unwrap(), vec![0.0, 2.0]);
    }
}
