//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use zfdt::engine::{self, Clients, Config, EngineState};

pub fn fixture_corpus() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/fixture_corpus.jsonl")
}

pub fn stub_config() -> Config {
    let mut c = Config::default();
    c.client.stub = true;
    c
}

/// Builds the fixture corpus into `<dir>/ws` with stub clients.
pub fn build_fixture(dir: &Path) -> (EngineState, Clients, Config) {
    build_corpus(&fixture_corpus(), dir)
}

/// Builds `corpus` into `<dir>/ws` with stub clients.
pub fn build_corpus(corpus: &Path, dir: &Path) -> (EngineState, Clients, Config) {
    let cfg = stub_config();
    let clients = Clients::from_config(&cfg).unwrap();
    let ws = dir.join("ws");
    engine::cmd_build(corpus, &ws, &cfg, &clients).unwrap();
    (EngineState::load(&ws).unwrap(), clients, cfg)
}

/// A pseudo-word of `syllables` random consonant-vowel pairs, capitalised.
fn pseudo_word(rng: &mut ChaCha8Rng, syllables: usize) -> String {
    const C: &[u8] = b"bdfghjklmnprstvz";
    const V: &[u8] = b"aeiou";
    let mut w = String::new();
    for _ in 0..syllables {
        w.push(*C.choose(rng).unwrap() as char);
        w.push(*V.choose(rng).unwrap() as char);
    }
    let mut cs = w.chars();
    let first = cs.next().unwrap().to_ascii_uppercase();
    std::iter::once(first).chain(cs).collect()
}

/// Writes a corpus of `n` records whose entity names are distinct pseudo-words,
/// so no two entities share a name and lexical overlap between them is low.
pub fn synthetic_corpus(path: &Path, n: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = std::collections::HashSet::new();
    let mut word = |rng: &mut ChaCha8Rng| loop {
        let w = format!("{} {}", pseudo_word(rng, 3), pseudo_word(rng, 3));
        if seen.insert(w.clone()) {
            return w;
        }
    };
    let roles = ["sovereign", "minister", "assistant", "courier"];
    let mut lines = Vec::new();
    for _ in 0..n {
        let ingredients: Vec<_> = roles.iter().map(|r| serde_json::json!({"name": word(&mut rng), "role": r})).collect();
        let rec = serde_json::json!({
            "disease": word(&mut rng),
            "formula": word(&mut rng),
            "ingredients": ingredients,
            "symptoms": format!("{}, {}", word(&mut rng), word(&mut rng)),
            "pulse_tongue": format!("{}; {}", word(&mut rng), word(&mut rng)),
            "contraindications": word(&mut rng),
            "preparation": word(&mut rng),
        });
        lines.push(rec.to_string());
    }
    std::fs::write(path, lines.join("\n") + "\n").unwrap();
}

/// Entities named in exactly one leaf summary, paired with that leaf, restricted
/// to categories with at least two leaves.
pub fn plant_candidates(state: &EngineState) -> Vec<(String, usize)> {
    let leaves = &state.communities.leaves;
    let mut out = Vec::new();
    for e in state.graph.entities() {
        let holders: Vec<_> = leaves.iter().filter(|l| l.description.contains(&e.name)).collect();
        if holders.len() != 1 {
            continue;
        }
        let leaf = holders[0];
        if leaves.iter().filter(|l| l.category == leaf.category).count() < 2 {
            continue;
        }
        out.push((e.name.clone(), leaf.community_id));
    }
    out
}

/// Fraction of `plants` random plants whose leaf contributes to one of the
/// top-k global answers, for each k. The beam width is fixed at the largest k.
pub fn planted_recall(state: &EngineState, clients: &Clients, ks: &[usize], plants: usize, seed: u64) -> Vec<f64> {
    let cands = plant_candidates(state);
    assert!(!cands.is_empty(), "fixture has no plantable entities");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen: Vec<&(String, usize)> = (0..plants).map(|_| cands.choose(&mut rng).unwrap()).collect();
    let width = ks.iter().copied().max().unwrap();
    ks.iter()
        .map(|&k| {
            let mut cfg = stub_config();
            cfg.top_k = k;
            cfg.beam_width = width;
            let hits = chosen
                .iter()
                .filter(|(name, leaf)| {
                    let out = engine::cmd_query(state, clients, name, &cfg).unwrap();
                    out.global_answers.iter().any(|g| g.contributing.iter().any(|l| l.community_id == *leaf))
                })
                .count();
            hits as f64 / plants as f64
        })
        .collect()
}

/// Sends `n` identical queries to the service at once and returns the bodies.
pub fn concurrent_service_queries(state: EngineState, clients: Clients, cfg: Config, symptoms: &str, n: usize) -> Vec<Vec<u8>> {
    use std::sync::Arc;
    use tower::ServiceExt;
    let app = zfdt::service::router(zfdt::service::AppState {
        engine: Arc::new(state),
        clients: Arc::new(clients),
        config: Arc::new(cfg),
    });
    let body = serde_json::json!({ "symptoms": symptoms }).to_string();
    let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(8).enable_all().build().unwrap();
    rt.block_on(async {
        let tasks: Vec<_> = (0..n)
            .map(|_| {
                let app = app.clone();
                let req = axum::http::Request::post("/v1/query")
                    .header("content-type", "application/json")
                    .body(axum::body::Body::from(body.clone()))
                    .unwrap();
                tokio::spawn(async move {
                    let resp = app.oneshot(req).await.unwrap();
                    assert_eq!(resp.status(), 200);
                    axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap().to_vec()
                })
            })
            .collect();
        let mut out = Vec::new();
        for t in tasks {
            out.push(t.await.unwrap());
        }
        out
    })
}
