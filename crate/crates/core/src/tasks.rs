//! Downstream harnesses over persisted representations: text-to-video
//! retrieval (paragraph and partially relevant), recall@k, and exact-match
//! question answering.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{AgentError, Agents, ChatParams, EmbeddingVector, TextEmbedder};
use crate::pipeline::{load_representation, ChapterRecord, HierarchicalRepresentation, PipelineError};
use crate::prompting::{compose_video_info, PromptError, PromptTemplates};
use crate::redundancy::{cosine, RedundancyError};

/// Chapters handed to the chat model per question.
pub const DEFAULT_QA_K: usize = 5;

#[derive(Debug, Error)]
pub enum TaskError {
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("embedding dimension mismatch: {0}")]
    Dimension(String),
    #[error("representation of {0} has neither story nor retained chapters")]
    EmptyRepresentation(String),
    #[error("video {0} appears more than once in the corpus")]
    DuplicateVideo(String),
    #[error("unknown video {0}")]
    UnknownVideo(String),
    #[error("{path}: {message}")]
    Input { path: String, message: String },
}

impl From<RedundancyError> for TaskError {
    fn from(e: RedundancyError) -> Self {
        TaskError::Dimension(e.to_string())
    }
}

/// Immutable set of representations keyed by video id.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    entries: BTreeMap<String, HierarchicalRepresentation>,
}

impl Corpus {
    /// Fails on duplicate ids or when embeddings disagree on dimension.
    pub fn new(reps: impl IntoIterator<Item = HierarchicalRepresentation>) -> Result<Self, TaskError> {
        let mut entries = BTreeMap::new();
        let mut dim: Option<usize> = None;
        for rep in reps {
            let dims = rep
                .story
                .iter()
                .map(|s| s.embedding.dim())
                .chain(rep.retained_chapters().map(|(_, c)| c.embedding.dim()));
            for d in dims {
                match dim {
                    None => dim = Some(d),
                    Some(expected) if expected != d => {
                        return Err(TaskError::Dimension(format!(
                            "{} has a {d}-dimensional embedding, corpus uses {expected}",
                            rep.video_id
                        )))
                    }
                    Some(_) => {}
                }
            }
            let id = rep.video_id.clone();
            if entries.insert(id.clone(), rep).is_some() {
                return Err(TaskError::DuplicateVideo(id));
            }
        }
        Ok(Self { entries })
    }

    /// Loads every `*.json` representation in `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, TaskError> {
        let read = fs::read_dir(dir).map_err(|e| TaskError::Input {
            path: dir.display().to_string(),
            message: e.to_string(),
        })?;
        let mut paths: Vec<_> = read
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        let reps = paths
            .iter()
            .map(|p| load_representation(p))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(reps)
    }

    pub fn get(&self, video_id: &str) -> Option<&HierarchicalRepresentation> {
        self.entries.get(video_id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &HierarchicalRepresentation> {
        self.entries.values()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Corpus with every stored embedding multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let entries = self
            .entries
            .iter()
            .map(|(id, rep)| {
                let mut rep = rep.clone();
                if let Some(story) = rep.story.as_mut() {
                    story.embedding = story.embedding.scaled(factor);
                }
                for clip in &mut rep.clips {
                    if let Some(ch) = clip.chapter.as_mut() {
                        ch.embedding = ch.embedding.scaled(factor);
                    }
                }
                (id.clone(), rep)
            })
            .collect();
        Self { entries }
    }
}

/// Best cosine similarity between the query and any retained chapter or,
/// when `include_story` is set, the story. A video with nothing to match
/// scores negative infinity.
pub fn score_video(
    query: &EmbeddingVector,
    rep: &HierarchicalRepresentation,
    include_story: bool,
) -> Result<f64, TaskError> {
    let story = rep.story.iter().filter(|_| include_story).map(|s| &s.embedding);
    let chapters = rep.retained_chapters().map(|(_, c)| &c.embedding);
    let mut best = f64::NEG_INFINITY;
    for emb in story.chain(chapters) {
        best = best.max(cosine(query, emb)?);
    }
    Ok(best)
}

/// Videos sorted by descending score, ties by ascending id.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList(Vec<(String, f64)>);

impl RankedList {
    pub fn new(mut scored: Vec<(String, f64)>) -> Self {
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Self(scored)
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.0
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(|(id, _)| id.as_str())
    }

    /// 1-based rank of `video_id`.
    pub fn rank_of(&self, video_id: &str) -> Option<usize> {
        self.ids().position(|id| id == video_id).map(|p| p + 1)
    }
}

pub fn rank_embedding(
    query: &EmbeddingVector,
    corpus: &Corpus,
    include_story: bool,
) -> Result<RankedList, TaskError> {
    let scored = corpus
        .iter()
        .map(|rep| Ok((rep.video_id.clone(), score_video(query, rep, include_story)?)))
        .collect::<Result<Vec<_>, TaskError>>()?;
    Ok(RankedList::new(scored))
}

pub fn rank(
    query: &str,
    corpus: &Corpus,
    embedder: &dyn TextEmbedder,
    include_story: bool,
) -> Result<RankedList, TaskError> {
    let emb = embedder.embed_text(query)?;
    rank_embedding(&emb, corpus, include_story)
}

/// Fraction of queries whose true video ranks within the top `k`.
pub fn recall_at_k<S: AsRef<str>>(ranked: &[RankedList], truth: &[S], k: usize) -> f64 {
    assert_eq!(ranked.len(), truth.len(), "one ground truth per ranked list");
    if ranked.is_empty() {
        return 0.0;
    }
    let hits = ranked
        .iter()
        .zip(truth)
        .filter(|(list, t)| list.rank_of(t.as_ref()).is_some_and(|r| r <= k))
        .count();
    hits as f64 / ranked.len() as f64
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalQuery {
    pub query: String,
    pub video_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaItem {
    pub question: String,
    pub video_id: String,
    pub answer: String,
}

fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, TaskError> {
    let input = |message: String| TaskError::Input {
        path: path.display().to_string(),
        message,
    };
    let text = fs::read_to_string(path).map_err(|e| input(e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| input(e.to_string()))
}

pub fn load_queries(path: &Path) -> Result<Vec<RetrievalQuery>, TaskError> {
    load_json(path)
}

pub fn load_qa_items(path: &Path) -> Result<Vec<QaItem>, TaskError> {
    load_json(path)
}

/// Ranks the corpus for every query and reports recall at each `k`.
///
/// Paragraph retrieval and partially relevant retrieval share this path;
/// they differ in the query set and, optionally, in `include_story`.
pub fn evaluate_retrieval(
    corpus: &Corpus,
    queries: &[RetrievalQuery],
    embedder: &dyn TextEmbedder,
    ks: &[usize],
    include_story: bool,
) -> Result<BTreeMap<String, f64>, TaskError> {
    if let Some(q) = queries.iter().find(|q| corpus.get(&q.video_id).is_none()) {
        return Err(TaskError::UnknownVideo(q.video_id.clone()));
    }
    let ranked = queries
        .par_iter()
        .map(|q| rank(&q.query, corpus, embedder, include_story))
        .collect::<Result<Vec<_>, _>>()?;
    let truth: Vec<&str> = queries.iter().map(|q| q.video_id.as_str()).collect();
    Ok(ks
        .iter()
        .map(|&k| (format!("r@{k}"), recall_at_k(&ranked, &truth, k)))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QaConfig {
    /// Chapters selected per question; 0 answers from the story alone.
    pub k: usize,
}

impl Default for QaConfig {
    fn default() -> Self {
        Self { k: DEFAULT_QA_K }
    }
}

/// The `k` retained chapters most similar to the question, best first,
/// ties broken by clip index.
pub fn select_relevant_clips<'a>(
    question: &str,
    rep: &'a HierarchicalRepresentation,
    k: usize,
    embedder: &dyn TextEmbedder,
) -> Result<Vec<(usize, &'a ChapterRecord)>, TaskError> {
    if k == 0 {
        return Ok(Vec::new());
    }
    let q = embedder.embed_text(question)?;
    let mut scored = rep
        .retained_chapters()
        .map(|(idx, ch)| Ok((cosine(&q, &ch.embedding)?, idx, ch)))
        .collect::<Result<Vec<_>, TaskError>>()?;
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    scored.truncate(k);
    Ok(scored.into_iter().map(|(_, idx, ch)| (idx, ch)).collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Answer {
    pub long_answer: String,
    pub short_answer: String,
}

/// Answers from the selected chapters (in clip order) plus the story, then
/// condenses the answer to one or two words.
pub fn answer(
    question: &str,
    rep: &HierarchicalRepresentation,
    cfg: QaConfig,
    agents: &Agents,
    templates: &PromptTemplates,
    chat: &ChatParams,
) -> Result<Answer, TaskError> {
    let mut selected = select_relevant_clips(question, rep, cfg.k, agents.text_embedder.as_ref())?;
    selected.sort_by_key(|(idx, _)| *idx);
    let story = rep.story.as_ref().map_or("", |s| s.text.as_str());
    let info = compose_video_info(selected.iter().map(|(_, c)| c.text.as_str()), story);
    if info.is_empty() {
        return Err(TaskError::EmptyRepresentation(rep.video_id.clone()));
    }
    let long_answer = agents
        .chat
        .complete(&templates.render_qa_prompt(&info, question)?, chat)?;
    let short_answer = agents.chat.complete(
        &templates.render_short_answer_prompt(question, &long_answer)?,
        chat,
    )?;
    Ok(Answer {
        long_answer,
        short_answer,
    })
}

/// Lowercase, trimmed, whitespace-collapsed, without terminal punctuation.
pub fn normalize_answer(s: &str) -> String {
    let collapsed = s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    collapsed
        .trim_end_matches(|c: char| c.is_whitespace() || matches!(c, '.' | ',' | '!' | '?' | ';' | ':'))
        .to_owned()
}

pub fn exact_match(pred: &str, truth: &str) -> bool {
    normalize_answer(pred) == normalize_answer(truth)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaPrediction {
    pub question: String,
    pub video_id: String,
    pub answer: String,
    pub long_answer: String,
    pub short_answer: String,
    pub correct: bool,
}

pub fn evaluate_qa(
    corpus: &Corpus,
    items: &[QaItem],
    cfg: QaConfig,
    agents: &Agents,
    templates: &PromptTemplates,
    chat: &ChatParams,
) -> Result<(f64, Vec<QaPrediction>), TaskError> {
    let predictions = items
        .par_iter()
        .map(|item| {
            let rep = corpus
                .get(&item.video_id)
                .ok_or_else(|| TaskError::UnknownVideo(item.video_id.clone()))?;
            let ans = answer(&item.question, rep, cfg, agents, templates, chat)?;
            Ok(QaPrediction {
                correct: exact_match(&ans.short_answer, &item.answer),
                question: item.question.clone(),
                video_id: item.video_id.clone(),
                answer: item.answer.clone(),
                long_answer: ans.long_answer,
                short_answer: ans.short_answer,
            })
        })
        .collect::<Result<Vec<_>, TaskError>>()?;
    let accuracy = if predictions.is_empty() {
        0.0
    } else {
        predictions.iter().filter(|p| p.correct).count() as f64 / predictions.len() as f64
    };
    Ok((accuracy, predictions))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_match_examples() {
        assert!(exact_match("Black", "black"));
        assert!(exact_match(" beach soccer ", "beach soccer"));
        assert!(exact_match("beach   Soccer.", "beach soccer"));
        assert!(!exact_match("no", "yes"));
    }

    #[test]
    fn ranked_list_orders_by_score_then_id() {
        let list = RankedList::new(vec![
            ("b".into(), 0.5),
            ("a".into(), 0.5),
            ("c".into(), 0.9),
        ]);
        assert_eq!(list.ids().collect::<Vec<_>>(), vec!["c", "a", "b"]);
        assert_eq!(list.rank_of("b"), Some(3));
        assert_eq!(list.rank_of("z"), None);
    }

    #[test]
    fn recall_examples() {
        let ids: Vec<(String, f64)> = (0..10).map(|i| (format!("v{i}"), 1.0 - i as f64 / 10.0)).collect();
        let list = RankedList::new(ids);
        assert_eq!(recall_at_k(&[list.clone()], &["v0"], 1), 1.0);
        assert_eq!(recall_at_k(&[list.clone()], &["v5"], 5), 0.0);
        assert_eq!(recall_at_k(&[list], &["v5"], 10), 1.0);
    }
}
