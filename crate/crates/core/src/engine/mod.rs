//! Commands tying the stages together over a persistent workspace.

pub mod config;
pub mod workspace;

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{Clients, Config, JudgeKind, Overrides};
pub use workspace::{build_workspace, BuildOutcome, EngineState, Manifest};

use crate::bounds::{self, BoundReport, BoundsConfig, BoundsError};
use crate::clients::ClientError;
use crate::corpus::{load_corpus, CorpusError};
use crate::dataset::{self, DatasetError, DatasetKind, Records};
use crate::metrics::judges::{Glossary, KgJudge, LlmJudge};
use crate::metrics::{evaluate_suite, ItemScores, MetricReport, MetricWeights, MetricsError, RuleTable};
use crate::metrics::{EvalContext, EMPTY_REFERENCE_ROLE_SCORE};
use crate::retrieval::trace::TraceRecord;
use crate::retrieval::{self, AnswerOutput, PipelineError, RetrievalError};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid arguments: {0}")]
    Usage(String),
    #[error("no workspace at {0} (run `zfdt build` first)")]
    MissingWorkspace(PathBuf),
    #[error("workspace is invalid: {0}")]
    InvalidWorkspace(String),
    #[error("workspace busy: {0}")]
    Busy(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("build stage {stage} failed: {message}")]
    Stage { stage: &'static str, message: String },
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

impl EngineError {
    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        EngineError::Io { path: path.to_path_buf(), message: e.to_string() }
    }

    /// 2 for problems with the invocation or its inputs, 1 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            EngineError::Config(_)
            | EngineError::Usage(_)
            | EngineError::MissingWorkspace(_)
            | EngineError::InvalidWorkspace(_)
            | EngineError::Corpus(_) => 2,
            EngineError::Metrics(MetricsError::InvalidInput(_)) => 2,
            EngineError::Pipeline(p) if matches!(p.source, RetrievalError::InvalidInput(_)) => 2,
            _ => 1,
        }
    }
}

/// Loads, validates and builds the corpus into `workspace`.
pub fn cmd_build(corpus_path: &Path, workspace: &Path, cfg: &Config, clients: &Clients) -> Result<BuildOutcome, EngineError> {
    cfg.validate()?;
    let corpus = load_corpus(corpus_path)?;
    build_workspace(&corpus, workspace, cfg, clients)
}

fn engine<'a>(state: &'a EngineState, clients: &'a Clients) -> Result<retrieval::Engine<'a>, EngineError> {
    if clients.encoder.name() != state.index.encoder_id {
        return Err(EngineError::InvalidWorkspace(format!(
            "index was built with encoder {} but {} is configured",
            state.index.encoder_id,
            clients.encoder.name()
        )));
    }
    Ok(retrieval::Engine {
        graph: &state.graph,
        communities: &state.communities,
        index: &state.index,
        generator: clients.generator.as_ref(),
        encoder: clients.encoder.as_ref(),
    })
}

/// Runs the full retrieval pipeline for one symptom description.
pub fn cmd_query(state: &EngineState, clients: &Clients, symptoms: &str, cfg: &Config) -> Result<AnswerOutput, EngineError> {
    cfg.validate()?;
    let eng = engine(state, clients)?;
    Ok(retrieval::answer(symptoms, &eng, &cfg.retrieval())?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalAnswerView {
    pub community_id: usize,
    pub category: String,
    pub text: String,
    pub score: f64,
}

/// Wire shape of a query answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResponse {
    pub answer: String,
    pub global_answer: String,
    pub local_answers: Vec<LocalAnswerView>,
    pub trace: Vec<TraceRecord>,
}

impl From<&AnswerOutput> for QueryResponse {
    fn from(a: &AnswerOutput) -> Self {
        let best = a.global_answers.first();
        let locals = best.map(|g| g.contributing.clone()).unwrap_or_default();
        QueryResponse {
            answer: a.answer.clone(),
            global_answer: best.map(|g| g.text.clone()).unwrap_or_default(),
            local_answers: locals
                .into_iter()
                .map(|l| LocalAnswerView {
                    community_id: l.community_id,
                    category: l.category.title().to_string(),
                    text: l.text,
                    score: l.score,
                })
                .collect(),
            trace: a.trace.records.clone(),
        }
    }
}

/// Retrieved context c for a dataset record: every global answer, best first.
pub fn retrieved_context(a: &AnswerOutput) -> String {
    a.global_answers.iter().map(|g| g.text.as_str()).collect::<Vec<_>>().join("\n\n")
}

/// Builds SFT or DPO records for the first `limit` corpus records and writes them to `out`.
pub fn cmd_dataset(
    state: &EngineState,
    clients: &Clients,
    cfg: &Config,
    kind: DatasetKind,
    out: &Path,
    limit: Option<usize>,
) -> Result<Records, EngineError> {
    cfg.validate()?;
    let eng = engine(state, clients)?;
    let rcfg = cfg.retrieval();
    let n = limit.unwrap_or(state.corpus.records.len()).min(state.corpus.records.len());
    if n == 0 {
        return Err(EngineError::Usage("limit must be positive".into()));
    }
    let mut sft = Vec::new();
    let mut dpo = Vec::new();
    for rec in &state.corpus.records[..n] {
        let x = rec.symptoms_population.as_str();
        let c = retrieved_context(&retrieval::answer(x, &eng, &rcfg)?);
        match kind {
            DatasetKind::Sft => sft.push(dataset::build_sft_record(x, &c, &dataset::ground_truth(rec))?),
            DatasetKind::Dpo => dpo.push(dataset::build_dpo_record(x, &c, clients.generator.as_ref(), &rcfg.params)?),
        }
    }
    let records = match kind {
        DatasetKind::Sft => Records::Sft(sft),
        DatasetKind::Dpo => Records::Dpo(dpo),
    };
    dataset::export(&records, out)?;
    Ok(records)
}

/// One text per JSONL line: a JSON string, or an object with an `output`,
/// `text`, `answer` or `chosen` field.
pub fn read_texts(path: &Path) -> Result<Vec<String>, EngineError> {
    let text = std::fs::read_to_string(path).map_err(|e| EngineError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |m: &str| EngineError::Usage(format!("{}:{}: {m}", path.display(), i + 1));
        let v: serde_json::Value = serde_json::from_str(line).map_err(|e| bad(&e.to_string()))?;
        let s = match &v {
            serde_json::Value::String(s) => s.clone(),
            serde_json::Value::Object(m) => ["output", "text", "answer", "chosen"]
                .iter()
                .find_map(|k| m.get(*k).and_then(|x| x.as_str()))
                .ok_or_else(|| bad("object has no output/text/answer/chosen string"))?
                .to_string(),
            _ => return Err(bad("expected a string or an object")),
        };
        out.push(s);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutput {
    pub report: MetricReport,
    pub items: Vec<ItemScores>,
    pub coverage: std::collections::BTreeMap<String, usize>,
}

/// Scores outputs against references and writes `report.json` and `report.tsv` into `out_dir`.
pub fn cmd_eval(
    state: &EngineState,
    clients: &Clients,
    cfg: &Config,
    outputs_path: &Path,
    refs_path: &Path,
    out_dir: &Path,
) -> Result<EvalOutput, EngineError> {
    let outputs = read_texts(outputs_path)?;
    let refs = read_texts(refs_path)?;
    if outputs.len() != refs.len() {
        return Err(EngineError::Usage(format!("{} outputs but {} references", outputs.len(), refs.len())));
    }
    let rules = RuleTable::bundled();
    let kg = KgJudge::new(state.graph.clone());
    let glossary = Glossary::bundled();
    let llm = LlmJudge { generator: clients.generator.as_ref(), params: cfg.generation() };
    let ctx = match cfg.judge {
        JudgeKind::Kg => EvalContext {
            rules: &rules,
            weights: MetricWeights::default(),
            empty_role_score: EMPTY_REFERENCE_ROLE_SCORE,
            hallucination: &kg,
            facts: &kg,
            professionalism: &glossary,
            coherence: &kg,
            avg_scope: cfg.avg_scope,
        },
        JudgeKind::Llm => EvalContext {
            rules: &rules,
            weights: MetricWeights::default(),
            empty_role_score: EMPTY_REFERENCE_ROLE_SCORE,
            hallucination: &llm,
            facts: &kg,
            professionalism: &llm,
            coherence: &llm,
            avg_scope: cfg.avg_scope,
        },
    };
    let (report, items) = evaluate_suite(&outputs, &refs, &ctx)?;
    let coverage = crate::metrics::coverage(&items).into_iter().map(|(k, v)| (k.to_string(), v)).collect();
    let out = EvalOutput { report, items, coverage };
    std::fs::create_dir_all(out_dir).map_err(|e| EngineError::io(out_dir, e))?;
    let json = out_dir.join("report.json");
    std::fs::write(&json, serde_json::to_vec_pretty(&out).expect("report serializes")).map_err(|e| EngineError::io(&json, e))?;
    let tsv = out_dir.join("report.tsv");
    std::fs::write(&tsv, report.to_tsv()).map_err(|e| EngineError::io(&tsv, e))?;
    Ok(out)
}

/// Runs one bound check on its seeded toy instance. Steps for the DPO
/// suppression check default to [`bounds::PROP4_STEPS`] unless `steps_given`.
pub fn cmd_bounds(proposition: u8, cfg: &BoundsConfig, steps_given: bool) -> Result<Vec<BoundReport>, EngineError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    match proposition {
        1 => {
            let w = bounds::random_informative_world(3, 3, 4, (0.1, 1.0), &mut rng)?;
            Ok(vec![bounds::verify_prop1(&w, cfg)?])
        }
        2 => {
            let (w, prefs) = bounds::prop2_fixture(cfg)?;
            Ok(vec![bounds::verify_prop2(&w, &prefs, cfg)?])
        }
        3 => {
            let w = bounds::ToyWorld::retrieval(2, 4, 2, 0.1, 0.05)?;
            Ok(vec![bounds::verify_prop3(&w, cfg, 10_000)?])
        }
        4 => {
            let prefs = bounds::prop4_fixture(&bounds::PROP4_DELTAS, bounds::PROP4_P_W)?;
            let c = if steps_given { cfg.clone() } else { BoundsConfig { steps: bounds::PROP4_STEPS, ..cfg.clone() } };
            Ok(vec![bounds::verify_prop4(&prefs, &c, true)?])
        }
        p => Err(EngineError::Usage(format!("proposition must be 1, 2, 3 or 4, got {p}"))),
    }
}

/// Fixed-width pass/fail table.
pub fn render_bound_table(reports: &[BoundReport]) -> String {
    let mut s = format!("{:<5} {:>14} {:>14} {:>10}  {}\n", "prop", "lhs", "rhs", "tol", "result");
    for r in reports {
        s.push_str(&format!(
            "{:<5} {:>14.6e} {:>14.6e} {:>10.2e}  {}\n",
            r.proposition,
            r.bound_lhs,
            r.bound_rhs,
            r.tolerance,
            if r.satisfied { "PASS" } else { "FAIL" }
        ));
        for (k, v) in &r.quantities {
            s.push_str(&format!("      {k} = {v:.6e}\n"));
        }
    }
    s
}
