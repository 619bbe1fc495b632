//! Workspace directory: one file per build stage plus a manifest of digests.
//!
//! A build is staged in a sibling directory and swapped in only after every
//! stage succeeded, so a failed build never touches the existing workspace.
//! A failed staging directory keeps a manifest marked invalid.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::config::{Clients, Config};
use super::EngineError;
use crate::community::categories::{detect_communities, CommunitySet};
use crate::community::summarize::summarize_all;
use crate::corpus::{chunk, sha256_hex, tokenizer::WhitespaceCjkTokenizer, Chunk, Corpus};
use crate::index::{build_index, CommunityIndex};
use crate::kg::export::export_graph;
use crate::kg::extract::{extract, Extraction};
use crate::kg::{build_graph, KnowledgeGraph};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const FORMAT_VERSION: u32 = 1;

/// Stage names in build order with their artifact files.
pub const STAGES: [(&str, &str); 6] = [
    ("corpus", "corpus.jsonl"),
    ("chunks", "chunks.jsonl"),
    ("extractions", "extractions.jsonl"),
    ("graph", "graph.json"),
    ("communities", "communities.json"),
    ("index", "index.zfix"),
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub stage: String,
    pub file: String,
    pub sha256: String,
}

/// Settings that change what a build produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildSettings {
    pub chunk_size: usize,
    pub leiden: crate::community::LeidenConfig<f64>,
    pub generator: String,
    pub encoder: String,
    pub embedding_dimension: usize,
    pub temperature: f64,
    pub max_output_tokens: usize,
}

impl BuildSettings {
    pub fn new(cfg: &Config, clients: &Clients) -> Self {
        Self {
            chunk_size: cfg.chunk_size,
            leiden: cfg.leiden_config(),
            generator: clients.generator.name().to_string(),
            encoder: clients.encoder.name().to_string(),
            embedding_dimension: cfg.embedding_dimension,
            temperature: cfg.temperature,
            max_output_tokens: cfg.max_output_tokens,
        }
    }

    pub fn digest(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("settings serialize").as_bytes())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub valid: bool,
    pub corpus_digest: String,
    pub settings_digest: String,
    pub settings: BuildSettings,
    pub artifacts: Vec<Artifact>,
    pub built_at_unix: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Manifest {
    pub fn read(workspace: &Path) -> Result<Manifest, EngineError> {
        let path = workspace.join(MANIFEST_FILE);
        if !path.exists() {
            return Err(EngineError::MissingWorkspace(workspace.to_path_buf()));
        }
        let bytes = fs::read(&path).map_err(|e| EngineError::io(&path, e))?;
        serde_json::from_slice(&bytes).map_err(|e| EngineError::InvalidWorkspace(format!("manifest: {e}")))
    }

    /// Checks the validity flag, the format version and every artifact digest.
    pub fn verify(&self, workspace: &Path) -> Result<(), EngineError> {
        if self.format_version != FORMAT_VERSION {
            return Err(EngineError::InvalidWorkspace(format!("unsupported format version {}", self.format_version)));
        }
        if !self.valid {
            return Err(EngineError::InvalidWorkspace(
                self.error.clone().unwrap_or_else(|| "manifest is marked invalid".into()),
            ));
        }
        for (stage, _) in STAGES {
            if !self.artifacts.iter().any(|a| a.stage == stage) {
                return Err(EngineError::InvalidWorkspace(format!("stage {stage} has no artifact")));
            }
        }
        for a in &self.artifacts {
            let path = workspace.join(&a.file);
            let bytes = fs::read(&path)
                .map_err(|_| EngineError::InvalidWorkspace(format!("missing artifact {}", a.file)))?;
            if sha256_hex(&bytes) != a.sha256 {
                return Err(EngineError::InvalidWorkspace(format!("artifact {} does not match the manifest", a.file)));
            }
        }
        Ok(())
    }
}

/// Digest of the manifest file, identifying one build of a workspace.
pub fn manifest_digest(workspace: &Path) -> Result<String, EngineError> {
    let path = workspace.join(MANIFEST_FILE);
    let bytes = fs::read(&path).map_err(|_| EngineError::MissingWorkspace(workspace.to_path_buf()))?;
    Ok(sha256_hex(&bytes))
}

/// A loaded, verified workspace. Immutable once loaded.
#[derive(Debug, Clone)]
pub struct EngineState {
    pub workspace: PathBuf,
    pub manifest: Manifest,
    pub manifest_digest: String,
    pub corpus: Corpus,
    pub graph: KnowledgeGraph,
    pub communities: CommunitySet,
    pub index: CommunityIndex<f64>,
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, EngineError> {
    let bytes = fs::read(path).map_err(|e| EngineError::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| EngineError::InvalidWorkspace(format!("{}: {e}", path.display())))
}

impl EngineState {
    pub fn load(workspace: &Path) -> Result<Self, EngineError> {
        let manifest = Manifest::read(workspace)?;
        manifest.verify(workspace)?;
        let digest = manifest_digest(workspace)?;
        let file = |stage: &str| workspace.join(STAGES.iter().find(|s| s.0 == stage).expect("known stage").1);
        let corpus_text = fs::read_to_string(file("corpus")).map_err(|e| EngineError::io(&file("corpus"), e))?;
        let corpus = Corpus::from_jsonl_str(&corpus_text)
            .map_err(|e| EngineError::InvalidWorkspace(format!("corpus artifact: {e}")))?;
        let graph: KnowledgeGraph = read_json(&file("graph"))?;
        let communities: CommunitySet = read_json(&file("communities"))?;
        let index_path = file("index");
        let mut f = fs::File::open(&index_path).map_err(|e| EngineError::io(&index_path, e))?;
        let index = CommunityIndex::<f64>::read_snapshot(&mut std::io::BufReader::new(&mut f))
            .map_err(|e| EngineError::InvalidWorkspace(format!("index artifact: {e}")))?;
        Ok(Self { workspace: workspace.to_path_buf(), manifest, manifest_digest: digest, corpus, graph, communities, index })
    }

    /// The manifest on disk still matches the loaded one.
    pub fn is_current(&self) -> bool {
        manifest_digest(&self.workspace).is_ok_and(|d| d == self.manifest_digest)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildOutcome {
    pub manifest: Manifest,
    /// False when an up-to-date workspace was left untouched.
    pub rebuilt: bool,
}

/// Exclusive build lock, released on drop.
struct BuildLock(PathBuf);

impl BuildLock {
    fn acquire(workspace: &Path) -> Result<Self, EngineError> {
        let path = sibling(workspace, "lock");
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self(path))
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(EngineError::Busy(format!("{} exists; another build is running", path.display())))
            }
            Err(e) => Err(EngineError::io(&path, e)),
        }
    }
}

impl Drop for BuildLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

fn sibling(workspace: &Path, suffix: &str) -> PathBuf {
    let name = workspace.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "workspace".into());
    workspace.with_file_name(format!("{name}.{suffix}"))
}

struct Stager {
    dir: PathBuf,
    artifacts: Vec<Artifact>,
}

impl Stager {
    fn write(&mut self, stage: &str, file: &str, bytes: &[u8]) -> Result<(), EngineError> {
        let path = self.dir.join(file);
        fs::write(&path, bytes).map_err(|e| EngineError::io(&path, e))?;
        self.artifacts.push(Artifact { stage: stage.into(), file: file.into(), sha256: sha256_hex(bytes) });
        Ok(())
    }

    fn record_existing(&mut self, stage: &str, file: &str) -> Result<(), EngineError> {
        let path = self.dir.join(file);
        let bytes = fs::read(&path).map_err(|e| EngineError::io(&path, e))?;
        self.artifacts.push(Artifact { stage: stage.into(), file: file.into(), sha256: sha256_hex(&bytes) });
        Ok(())
    }
}

fn jsonl<T: Serialize>(items: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    for it in items {
        serde_json::to_writer(&mut out, it).expect("artifact serializes");
        out.push(b'\n');
    }
    out
}

fn stage_err(stage: &'static str) -> impl Fn(String) -> EngineError {
    move |message| EngineError::Stage { stage, message }
}

fn run_stages(corpus: &Corpus, cfg: &Config, clients: &Clients, st: &mut Stager) -> Result<(), EngineError> {
    st.write("corpus", STAGES[0].1, corpus.to_jsonl().as_bytes())?;

    let chunks: Vec<Chunk> =
        chunk(corpus, cfg.chunk_size, &WhitespaceCjkTokenizer).map_err(|e| stage_err("chunks")(e.to_string()))?;
    st.write("chunks", STAGES[1].1, &jsonl(&chunks))?;

    let params = cfg.generation();
    let extractions: Vec<Extraction> = chunks
        .iter()
        .map(|c| extract(c, clients.generator.as_ref(), &params))
        .collect::<Result<_, _>>()
        .map_err(|e| stage_err("extractions")(e.to_string()))?;
    st.write("extractions", STAGES[2].1, &jsonl(&extractions))?;

    let mut graph = build_graph(&extractions).map_err(|e| stage_err("graph")(e.to_string()))?;
    let mut communities =
        detect_communities(&mut graph, &cfg.leiden_config()).map_err(|e| stage_err("communities")(e.to_string()))?;
    summarize_all(&mut communities, &graph, clients.generator.as_ref(), &params)
        .map_err(|e| stage_err("communities")(e.to_string()))?;
    // The graph is written after detection because unknown entities take their community's category.
    st.write("graph", STAGES[3].1, &serde_json::to_vec(&graph).expect("graph serializes"))?;
    export_graph(&graph, &st.dir, Some(&communities.leaf_of_entity())).map_err(|e| stage_err("graph")(e.to_string()))?;
    st.record_existing("graph_export", crate::kg::export::NODES_FILE)?;
    st.record_existing("graph_export", crate::kg::export::EDGES_FILE)?;
    st.write("communities", STAGES[4].1, &serde_json::to_vec(&communities).expect("communities serialize"))?;

    let index: CommunityIndex<f64> = build_index(&communities, clients.encoder.as_ref(), cfg.embedding_dimension)
        .map_err(|e| stage_err("index")(e.to_string()))?;
    let mut buf = Vec::new();
    index.write_snapshot(&mut buf).map_err(|e| stage_err("index")(e.to_string()))?;
    st.write("index", STAGES[5].1, &buf)?;
    Ok(())
}

fn write_manifest(dir: &Path, m: &Manifest) -> Result<(), EngineError> {
    let path = dir.join(MANIFEST_FILE);
    let mut bytes = serde_json::to_vec_pretty(m).expect("manifest serializes");
    bytes.push(b'\n');
    fs::write(&path, bytes).map_err(|e| EngineError::io(&path, e))
}

/// Runs every build stage for `corpus` into `workspace`. An existing valid
/// workspace built from the same corpus and settings is left as is.
pub fn build_workspace(
    corpus: &Corpus,
    workspace: &Path,
    cfg: &Config,
    clients: &Clients,
) -> Result<BuildOutcome, EngineError> {
    let settings = BuildSettings::new(cfg, clients);
    let corpus_digest = corpus.digest();
    let settings_digest = settings.digest();
    if let Ok(m) = Manifest::read(workspace) {
        if m.corpus_digest == corpus_digest && m.settings_digest == settings_digest && m.verify(workspace).is_ok() {
            return Ok(BuildOutcome { manifest: m, rebuilt: false });
        }
    }
    let _lock = BuildLock::acquire(workspace)?;
    let staging = sibling(workspace, "staging");
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(|e| EngineError::io(&staging, e))?;
    }
    fs::create_dir_all(&staging).map_err(|e| EngineError::io(&staging, e))?;
    let mut st = Stager { dir: staging.clone(), artifacts: Vec::new() };
    let result = run_stages(corpus, cfg, clients, &mut st);
    let mut manifest = Manifest {
        format_version: FORMAT_VERSION,
        valid: result.is_ok(),
        corpus_digest,
        settings_digest,
        settings,
        artifacts: st.artifacts,
        built_at_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        error: result.as_ref().err().map(|e| e.to_string()),
    };
    write_manifest(&staging, &manifest)?;
    result?;
    swap_in(&staging, workspace)?;
    manifest.error = None;
    Ok(BuildOutcome { manifest, rebuilt: true })
}

/// Replaces `workspace` with `staging`, keeping the old one until the rename succeeded.
fn swap_in(staging: &Path, workspace: &Path) -> Result<(), EngineError> {
    let backup = sibling(workspace, "previous");
    if backup.exists() {
        fs::remove_dir_all(&backup).map_err(|e| EngineError::io(&backup, e))?;
    }
    let had_old = workspace.exists();
    if had_old {
        fs::rename(workspace, &backup).map_err(|e| EngineError::io(workspace, e))?;
    }
    if let Err(e) = fs::rename(staging, workspace) {
        if had_old {
            let _ = fs::rename(&backup, workspace);
        }
        return Err(EngineError::io(workspace, e));
    }
    if had_old {
        fs::remove_dir_all(&backup).map_err(|e| EngineError::io(&backup, e))?;
    }
    Ok(())
}
