mod common;

#[test]
fn planted_recall_is_high_and_monotone() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("synthetic.jsonl");
    common::synthetic_corpus(&corpus, 40, 11);
    let (state, clients, _) = common::build_corpus(&corpus, dir.path());
    let r = common::planted_recall(&state, &clients, &[1, 2, 3], 100, 7);
    eprintln!("recall {r:?} over {} candidates, {} leaves", common::plant_candidates(&state).len(), state.communities.leaves.len());
    assert!(r[0] >= 0.95);
    assert!(r.windows(2).all(|w| w[1] >= w[0]));
}
