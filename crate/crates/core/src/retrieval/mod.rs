//! Query answering: expansion, per-category map, beam selection, reduce and final answer.

pub mod beam;
pub mod trace;

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clients::prompt::fields;
use crate::clients::{self, ClientError, Encoder, GenerationParams, Generator, Prompt, PromptRole};
use crate::community::{Community, CommunitySet};
use crate::dataset::INSTRUCTION;
use crate::index::{query_text, score_candidates, CommunityIndex, IndexError};
use crate::kg::{KgError, KnowledgeGraph, Subgraph};
use crate::taxonomy::Category;
pub use beam::{beam_search, BeamConfig, Selection};
pub use trace::{Recorder, Trace, TraceRecord, TraceStatus};

/// Appended to every final answer.
pub const DISCLAIMER: &str = "Important Note: The prescription recommendations provided are intended for reference purposes only and should not be used without professional supervision. Proper Traditional Chinese Medicine practice requires individualized syndrome differentiation and treatment. For optimal safety and efficacy, please consult a qualified TCM practitioner when using this software.";

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid retrieval configuration: {0}")]
    Config(String),
    #[error("no local answers to reduce")]
    NoLocalAnswers,
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Graph(#[from] KgError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Expand,
    Encode,
    Map,
    Beam,
    Reduce,
    Answer,
}

/// An unrecoverable failure with the stage it happened in and the trace so far.
#[derive(Debug, Error)]
#[error("{stage:?} stage failed: {source}")]
pub struct PipelineError {
    pub stage: Stage,
    #[source]
    pub source: RetrievalError,
    pub trace: Trace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub original: String,
    pub expanded: String,
    pub entity_mentions: BTreeSet<usize>,
    /// Set when expansion failed and `expanded` fell back to `original`.
    pub expansion_fallback: bool,
}

impl Query {
    pub fn text(&self) -> String {
        query_text(&self.original, &self.expanded)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalAnswer {
    pub community_id: usize,
    pub category: Category,
    pub text: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalAnswer {
    pub text: String,
    pub contributing: Vec<LocalAnswer>,
    pub subgraph_ref: Subgraph,
    pub joint_score: f64,
}

/// Read-only view of a built workspace plus the clients to query it with.
#[derive(Clone, Copy)]
pub struct Engine<'a> {
    pub graph: &'a KnowledgeGraph,
    pub communities: &'a CommunitySet,
    pub index: &'a CommunityIndex<f64>,
    pub generator: &'a dyn Generator,
    pub encoder: &'a dyn Encoder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalConfig {
    pub beam: BeamConfig,
    pub params: GenerationParams,
    /// Worker threads for the map phase.
    pub map_parallelism: usize,
    /// Record zero durations so traces are reproducible.
    pub deterministic_trace: bool,
    pub subgraph_hops: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            beam: BeamConfig::default(),
            params: GenerationParams::default(),
            map_parallelism: 4,
            deterministic_trace: true,
            subgraph_hops: 1,
        }
    }
}

const EXPAND_INSTRUCTIONS: &str = "Rewrite the symptom description with standard terminology and \
closely related clinical signs. Return only the rewritten description.";
const MAP_INSTRUCTIONS: &str = "Using only the community summary, write the part of an answer to the \
query that this community can support.";
const REDUCE_INSTRUCTIONS: &str = "Merge the local answers into one answer. Keep each under its \
category header, in the order given.";
const ANSWER_INSTRUCTIONS_TAIL: &str = "Answer with the sections [Disease], [Recommended Formulas], \
[Herbal Components], [Applicable Symptoms and Population], [Pulse and Tongue Diagnosis], \
[Contraindications] and [Preparation Methods], using the retrieved information.";

/// Expands `x`; a generator failure leaves `expanded = x` and sets the fallback flag.
pub fn expand_query(
    x: &str,
    engine: &Engine<'_>,
    params: &GenerationParams,
    rec: &mut Recorder,
) -> Result<Query, RetrievalError> {
    let original = x.trim();
    if original.is_empty() {
        return Err(RetrievalError::InvalidInput("symptom text is empty".into()));
    }
    let prompt = Prompt::new(PromptRole::Expand, EXPAND_INSTRUCTIONS, fields(&[("symptoms", original)])).render();
    let out = rec.call("expand/generate", None, || clients::generate(engine.generator, &prompt, params));
    let (expanded, fallback) = match out {
        Ok(t) if !t.trim().is_empty() => (t.trim().to_string(), false),
        Ok(_) => (original.to_string(), true),
        Err(e) => {
            tracing::warn!(error = %e, "query expansion failed; using the original text");
            (original.to_string(), true)
        }
    };
    if fallback {
        rec.note("expand", None, TraceStatus::Fallback, None);
    }
    let mentions = engine.graph.mentions(&query_text(original, &expanded)).into_iter().collect();
    Ok(Query { original: original.to_string(), expanded, entity_mentions: mentions, expansion_fallback: fallback })
}

/// Local answers for one category, best first. Candidates are the category's
/// leaf communities, or the category-level group when it has no leaves.
/// Communities whose calls fail are skipped and noted in the trace.
pub fn map_local(
    query: &Query,
    query_vector: &[f64],
    category: &Community,
    engine: &Engine<'_>,
    params: &GenerationParams,
    rec: &mut Recorder,
) -> Result<Vec<LocalAnswer>, RetrievalError> {
    let c = category.category;
    let mut candidates: Vec<&crate::index::IndexEntry<f64>> =
        engine.index.entries.iter().filter(|e| e.category == c && !e.category_level).collect();
    if candidates.is_empty() {
        candidates = engine.index.entries.iter().filter(|e| e.community_id == category.community_id).collect();
    }
    let qtext = query.text();
    let mut texts = Vec::new();
    let mut vectors = Vec::new();
    for entry in candidates {
        let id = entry.community_id;
        rec.note("map/consult", Some(id), TraceStatus::Ok, None);
        let payload = fields(&[
            ("query", qtext.as_str()),
            ("category", c.key()),
            ("community", &id.to_string()),
            ("summary", entry.summary.as_str()),
        ]);
        let prompt = Prompt::new(PromptRole::Map, MAP_INSTRUCTIONS, payload).render();
        let Ok(text) = rec.call("map/generate", Some(id), || clients::generate(engine.generator, &prompt, params)) else {
            rec.note("map/skip", Some(id), TraceStatus::Skipped, Some("generation failed".into()));
            continue;
        };
        let text = text.trim().to_string();
        let Ok(v) = rec.call("map/encode", Some(id), || clients::encode(engine.encoder, &text)) else {
            rec.note("map/skip", Some(id), TraceStatus::Skipped, Some("encoding failed".into()));
            continue;
        };
        texts.push((id, text));
        vectors.push(v);
    }
    if texts.is_empty() {
        rec.note("map/category_skipped", Some(category.community_id), TraceStatus::Skipped, None);
        return Ok(Vec::new());
    }
    let refs: Vec<&[f64]> = vectors.iter().map(|v| v.as_slice()).collect();
    let scores = score_candidates(query_vector, &refs)?;
    let mut out: Vec<LocalAnswer> = texts
        .into_iter()
        .zip(scores)
        .map(|((community_id, text), score)| LocalAnswer { community_id, category: c, text, score })
        .collect();
    out.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.community_id.cmp(&b.community_id)));
    Ok(out)
}

/// Runs [`map_local`] for all seven categories on up to `parallelism` threads.
/// Results and trace records come back in category order.
pub fn map_all(
    query: &Query,
    query_vector: &[f64],
    engine: &Engine<'_>,
    cfg: &RetrievalConfig,
    rec: &mut Recorder,
) -> Result<Vec<Vec<LocalAnswer>>, RetrievalError> {
    let cats = &engine.communities.categories;
    let slots: Mutex<Vec<Option<(Result<Vec<LocalAnswer>, RetrievalError>, Recorder)>>> =
        Mutex::new((0..cats.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let workers = cfg.map_parallelism.clamp(1, cats.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= cats.len() {
                    break;
                }
                let mut local = rec.child();
                let r = map_local(query, query_vector, &cats[i], engine, &cfg.params, &mut local);
                slots.lock().unwrap_or_else(|e| e.into_inner())[i] = Some((r, local));
            });
        }
    });
    let mut groups = Vec::with_capacity(cats.len());
    for slot in slots.into_inner().unwrap_or_else(|e| e.into_inner()) {
        let (r, local) = slot.expect("every category processed");
        rec.absorb(local);
        groups.push(r?);
    }
    Ok(groups)
}

/// Merges local answers into one global answer. Locals are first ordered by
/// community id (which is category order for category-level groups).
pub fn reduce_global(
    query: &Query,
    locals: &[LocalAnswer],
    engine: &Engine<'_>,
    cfg: &RetrievalConfig,
    rec: &mut Recorder,
) -> Result<GlobalAnswer, RetrievalError> {
    if locals.is_empty() {
        return Err(RetrievalError::NoLocalAnswers);
    }
    let mut contributing = locals.to_vec();
    contributing.sort_by(|a, b| (a.category, a.community_id).cmp(&(b.category, b.community_id)));
    let qtext = query.text();
    let mut items: Vec<(String, String)> = vec![("query".into(), qtext)];
    for l in &contributing {
        items.push(("local".into(), format!("category: {}\n{}", l.category.key(), l.text)));
    }
    let prompt = Prompt::new(PromptRole::Reduce, REDUCE_INSTRUCTIONS, fields(&items)).render();
    let text = rec.call("reduce/generate", None, || clients::generate(engine.generator, &prompt, &cfg.params))?;

    let mut seeds: BTreeSet<usize> = BTreeSet::new();
    for l in &contributing {
        if let Some(c) = engine.communities.get(l.community_id) {
            seeds.extend(c.entity_ids.iter().copied());
        }
    }
    let seeds: Vec<usize> = seeds.into_iter().collect();
    let subgraph_ref = engine.graph.subgraph_for_query(&seeds, cfg.subgraph_hops)?;
    Ok(GlobalAnswer { text: text.trim().to_string(), contributing, subgraph_ref, joint_score: 0.0 })
}

/// Beam selection over the map groups, then one reduce per selected combination.
pub fn beam_retrieve(
    query: &Query,
    groups: &[Vec<LocalAnswer>],
    engine: &Engine<'_>,
    cfg: &RetrievalConfig,
    rec: &mut Recorder,
) -> Result<Vec<GlobalAnswer>, RetrievalError> {
    let scores: Vec<Vec<f64>> = groups.iter().map(|g| g.iter().map(|l| l.score).collect()).collect();
    let selections = beam_search(&scores, &cfg.beam).map_err(RetrievalError::Config)?;
    if selections.is_empty() {
        return Err(RetrievalError::NoLocalAnswers);
    }
    let mut out = Vec::with_capacity(selections.len());
    for sel in selections {
        let locals: Vec<LocalAnswer> = sel.picks.iter().map(|&(g, i)| groups[g][i].clone()).collect();
        let mut global = reduce_global(query, &locals, engine, cfg, rec)?;
        global.joint_score = sel.joint_score;
        out.push(global);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerOutput {
    pub answer: String,
    pub query: Query,
    pub global_answers: Vec<GlobalAnswer>,
    pub local_groups: Vec<Vec<LocalAnswer>>,
    pub trace: Trace,
}

/// Appends the disclaimer unless the text already ends with it.
pub fn with_disclaimer(text: &str) -> String {
    let t = text.trim_end();
    if t.ends_with(DISCLAIMER) {
        t.to_string()
    } else {
        format!("{t}\n\n{DISCLAIMER}")
    }
}

/// Full pipeline for one symptom description.
pub fn answer(x: &str, engine: &Engine<'_>, cfg: &RetrievalConfig) -> Result<AnswerOutput, PipelineError> {
    let mut rec = Recorder::new(cfg.deterministic_trace);
    macro_rules! stage {
        ($stage:expr, $e:expr) => {
            match $e {
                Ok(v) => v,
                Err(e) => {
                    return Err(PipelineError { stage: $stage, source: e.into(), trace: rec.finish() });
                }
            }
        };
    }
    stage!(Stage::Beam, cfg.beam.validate().map_err(RetrievalError::Config));
    let query = stage!(Stage::Expand, expand_query(x, engine, &cfg.params, &mut rec));
    let qtext = query.text();
    let qvec = stage!(Stage::Encode, rec.call("query/encode", None, || clients::encode(engine.encoder, &qtext)));
    let groups = stage!(Stage::Map, map_all(&query, &qvec, engine, cfg, &mut rec));
    let globals = stage!(Stage::Beam, beam_retrieve(&query, &groups, engine, cfg, &mut rec));

    let mut items: Vec<(String, String)> =
        vec![("symptoms".into(), query.original.clone()), ("expanded".into(), query.expanded.clone())];
    for g in &globals {
        items.push(("retrieved".into(), g.text.clone()));
    }
    let prompt = Prompt::new(PromptRole::Answer, format!("{INSTRUCTION}\n{ANSWER_INSTRUCTIONS_TAIL}"), fields(&items)).render();
    let text = stage!(
        Stage::Answer,
        rec.call("answer/generate", None, || clients::generate(engine.generator, &prompt, &cfg.params))
    );
    Ok(AnswerOutput {
        answer: with_disclaimer(&text),
        query,
        global_answers: globals,
        local_groups: groups,
        trace: rec.finish(),
    })
}
