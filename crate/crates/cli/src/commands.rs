use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use vidstory_core::agents::stub::StubAgents;
use vidstory_core::agents::Agents;
use vidstory_core::ingest::{load_keyframe_index, open_frame_source, VideoMeta};
use vidstory_core::pipeline::{write_atomic, HierarchicalRepresentation, Pipeline};
use vidstory_core::prompting::PromptTemplates;
use vidstory_core::tasks::{evaluate_qa, evaluate_retrieval, load_qa_items, load_queries, Corpus, QaConfig};

use crate::settings::Settings;

/// Process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Complete,
    Partial,
}

impl Outcome {
    pub fn code(self) -> u8 {
        match self {
            Outcome::Complete => 0,
            Outcome::Partial => 2,
        }
    }

    fn worst(self, other: Outcome) -> Outcome {
        if self == Outcome::Partial || other == Outcome::Partial {
            Outcome::Partial
        } else {
            Outcome::Complete
        }
    }
}

pub fn build_agents(settings: &Settings) -> Result<Agents> {
    let cfg = &settings.engine;
    if !cfg.stub_mode {
        return Agents::http(&cfg.agents).context("configuring agent clients");
    }
    let mut stubs = StubAgents::new(cfg.seed, &cfg.agents);
    if let Some(script) = &settings.chat_script {
        stubs
            .chat
            .load_script(script)
            .with_context(|| format!("loading chat script {}", script.display()))?;
    }
    Ok(stubs.into_agents())
}

pub fn load_templates(settings: &Settings) -> Result<PromptTemplates> {
    match &settings.engine.template_dir {
        Some(dir) => PromptTemplates::load_dir(dir)
            .with_context(|| format!("loading templates from {}", dir.display())),
        None => Ok(PromptTemplates::default()),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))
}

fn refuse_overwrite(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        bail!("{} already exists; pass --force to overwrite", path.display());
    }
    Ok(())
}

/// One input pair of a batch run.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub meta: PathBuf,
    pub keyframes: PathBuf,
}

pub fn load_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut entries: Vec<ManifestEntry> =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    for e in &mut entries {
        for p in [&mut e.meta, &mut e.keyframes] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
    Ok(entries)
}

struct Interpreter<'a> {
    settings: &'a Settings,
    agents: Agents,
    templates: PromptTemplates,
}

impl Interpreter<'_> {
    fn run(&self, meta_path: &Path, keyframes: &Path) -> Result<HierarchicalRepresentation> {
        let mut meta = VideoMeta::load(meta_path)?;
        if !meta.frame_source.is_empty() && Path::new(&meta.frame_source).is_relative() {
            let base = meta_path.parent().unwrap_or(Path::new("."));
            meta.frame_source = base.join(&meta.frame_source).display().to_string();
        }
        let index = load_keyframe_index(keyframes, &meta)?;
        let source = open_frame_source(&meta, self.settings.engine.stub_mode)?;
        let pipeline = Pipeline::new(&self.agents, &self.templates, &self.settings.engine);
        Ok(pipeline.build_representation(&meta, &index, source.as_ref())?)
    }
}

fn report_partial(rep: &HierarchicalRepresentation) -> Outcome {
    if !rep.is_partial() {
        return Outcome::Complete;
    }
    for clip in rep.clips.iter().filter(|c| !c.errors.is_empty()) {
        for e in &clip.errors {
            eprintln!("warning: {} clip {}: {e}", rep.video_id, clip.clip_index);
        }
    }
    Outcome::Partial
}

pub fn interpret(settings: &Settings, meta: &Path, keyframes: &Path, out: &Path, force: bool) -> Result<Outcome> {
    refuse_overwrite(out, force)?;
    let interpreter = Interpreter {
        settings,
        agents: build_agents(settings)?,
        templates: load_templates(settings)?,
    };
    let rep = interpreter.run(meta, keyframes)?;
    write_atomic(out, rep.to_json().as_bytes())
        .with_context(|| format!("writing {}", out.display()))?;
    Ok(report_partial(&rep))
}

pub fn interpret_batch(settings: &Settings, manifest: &Path, out_dir: &Path, force: bool) -> Result<Outcome> {
    let entries = load_manifest(manifest)?;
    let metas = entries
        .iter()
        .map(|e| VideoMeta::load(&e.meta).map_err(anyhow::Error::from))
        .collect::<Result<Vec<_>>>()?;
    let mut seen = std::collections::BTreeSet::new();
    for m in &metas {
        if !seen.insert(m.video_id.as_str()) {
            bail!("video {} appears twice in {}", m.video_id, manifest.display());
        }
    }
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let outputs: Vec<PathBuf> = metas
        .iter()
        .map(|m| out_dir.join(format!("{}.json", m.video_id)))
        .collect();
    for out in &outputs {
        refuse_overwrite(out, force)?;
    }

    let interpreter = Interpreter {
        settings,
        agents: build_agents(settings)?,
        templates: load_templates(settings)?,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.engine.workers)
        .build()
        .context("starting worker pool")?;
    let results: Vec<Result<Outcome>> = pool.install(|| {
        entries
            .par_iter()
            .zip(&outputs)
            .map(|(entry, out)| {
                let rep = interpreter.run(&entry.meta, &entry.keyframes)?;
                write_atomic(out, rep.to_json().as_bytes())
                    .with_context(|| format!("writing {}", out.display()))?;
                Ok(report_partial(&rep))
            })
            .collect()
    });

    let mut outcome = Outcome::Complete;
    let mut failures = 0;
    for (entry, result) in entries.iter().zip(results) {
        match result {
            Ok(o) => outcome = outcome.worst(o),
            Err(e) => {
                failures += 1;
                eprintln!("error: {}: {e:#}", entry.meta.display());
            }
        }
    }
    if failures > 0 && failures == entries.len() {
        bail!("every video in the batch failed");
    }
    if failures > 0 {
        outcome = Outcome::Partial;
    }
    Ok(outcome)
}

pub fn parse_ks(text: &str) -> Result<Vec<usize>> {
    let ks = text
        .split(',')
        .map(|s| s.trim().parse::<usize>().with_context(|| format!("bad k {s:?}")))
        .collect::<Result<Vec<_>>>()?;
    if ks.iter().any(|&k| k == 0) {
        bail!("k must be >= 1");
    }
    Ok(ks)
}

pub fn retrieve(
    settings: &Settings,
    rep_dir: &Path,
    queries: &Path,
    ks: &[usize],
    exclude_story: bool,
    out: &Path,
    force: bool,
) -> Result<Outcome> {
    refuse_overwrite(out, force)?;
    let corpus = Corpus::load_dir(rep_dir)?;
    let queries = load_queries(queries)?;
    let agents = build_agents(settings)?;
    let metrics = evaluate_retrieval(&corpus, &queries, agents.text_embedder.as_ref(), ks, !exclude_story)?;
    write_json(out, &metrics)?;
    println!("{}", serde_json::to_string(&metrics)?);
    Ok(Outcome::Complete)
}

pub fn qa(
    settings: &Settings,
    rep_dir: &Path,
    questions: &Path,
    out: &Path,
    predictions: Option<&Path>,
    force: bool,
) -> Result<Outcome> {
    refuse_overwrite(out, force)?;
    if let Some(p) = predictions {
        refuse_overwrite(p, force)?;
    }
    let corpus = Corpus::load_dir(rep_dir)?;
    let items = load_qa_items(questions)?;
    let agents = build_agents(settings)?;
    let templates = load_templates(settings)?;
    let (accuracy, preds) = evaluate_qa(
        &corpus,
        &items,
        QaConfig { k: settings.engine.qa_k },
        &agents,
        &templates,
        &settings.engine.agents.chat,
    )?;
    let metrics = BTreeMap::from([("exact_match_accuracy", accuracy)]);
    write_json(out, &metrics)?;
    if let Some(p) = predictions {
        write_json(p, &preds)?;
    }
    println!("{}", serde_json::to_string(&metrics)?);
    Ok(Outcome::Complete)
}

#[derive(Debug, Serialize)]
pub struct StorageReport {
    pub videos: BTreeMap<String, u64>,
    pub mean_total_bytes: f64,
}

pub fn report_storage(rep_dir: &Path, out: Option<&Path>, force: bool) -> Result<Outcome> {
    if let Some(out) = out {
        refuse_overwrite(out, force)?;
    }
    let corpus = Corpus::load_dir(rep_dir)?;
    if corpus.is_empty() {
        bail!("no representations in {}", rep_dir.display());
    }
    let videos: BTreeMap<String, u64> = corpus
        .iter()
        .map(|r| (r.video_id.clone(), r.stats.total_bytes))
        .collect();
    let sum: u64 = videos.values().sum();
    let report = StorageReport {
        mean_total_bytes: sum as f64 / videos.len() as f64,
        videos,
    };
    for (id, bytes) in &report.videos {
        println!("{id}\t{bytes}");
    }
    println!("mean\t{:.6}", report.mean_total_bytes);
    if let Some(out) = out {
        write_json(out, &report)?;
    }
    Ok(Outcome::Complete)
}
