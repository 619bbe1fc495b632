//! Vector library over community summaries with softmax scoring.

pub mod snapshot;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clients::{self, ClientError, Encoder};
use crate::community::{Community, CommunitySet};
use crate::numeric::{dot, softmax, Scalar};
use crate::taxonomy::Category;

/// Text placed between the query and its expansion before encoding.
pub const QUERY_SEPARATOR: &str = "\n";

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },
    #[error("index has no entries")]
    EmptyIndex,
    #[error("no candidates to score")]
    NoCandidates,
    #[error("community {0} has no summary")]
    Unsummarized(usize),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error("snapshot: {0}")]
    Snapshot(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct IndexEntry<F> {
    pub community_id: usize,
    pub category: Category,
    /// True for the seven category-level groups.
    pub category_level: bool,
    pub summary: String,
    pub vector: Vec<F>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct CommunityIndex<F> {
    pub entries: Vec<IndexEntry<F>>,
    pub encoder_id: String,
    pub dimension: usize,
}

/// Concatenated query text `x ‖ x'`.
pub fn query_text(original: &str, expanded: &str) -> String {
    format!("{original}{QUERY_SEPARATOR}{expanded}")
}

/// Softmax over dot products with `query`, in candidate order.
pub fn score_candidates<F: Scalar>(query: &[F], candidates: &[&[F]]) -> Result<Vec<F>, IndexError> {
    if candidates.is_empty() {
        return Err(IndexError::NoCandidates);
    }
    for c in candidates {
        if c.len() != query.len() {
            return Err(IndexError::Dimension { expected: query.len(), actual: c.len() });
        }
    }
    let dots: Vec<F> = candidates.iter().map(|c| dot(query, c)).collect();
    Ok(softmax(&dots))
}

fn encode_summary<F: Scalar>(c: &Community, encoder: &dyn Encoder, category_level: bool) -> Result<IndexEntry<F>, IndexError> {
    if c.description.trim().is_empty() {
        return Err(IndexError::Unsummarized(c.community_id));
    }
    let v = clients::encode(encoder, &c.description)?;
    Ok(IndexEntry {
        community_id: c.community_id,
        category: c.category,
        category_level,
        summary: c.description.clone(),
        vector: v.into_iter().map(F::lit).collect(),
    })
}

/// One entry per category-level community and per leaf, in community id order.
pub fn build_index<F: Scalar>(
    communities: &CommunitySet,
    encoder: &dyn Encoder,
    expected_dimension: usize,
) -> Result<CommunityIndex<F>, IndexError> {
    if encoder.dimension() != expected_dimension {
        return Err(IndexError::Dimension { expected: expected_dimension, actual: encoder.dimension() });
    }
    let mut entries = Vec::with_capacity(communities.categories.len() + communities.leaves.len());
    for c in &communities.categories {
        entries.push(encode_summary(c, encoder, true)?);
    }
    for c in &communities.leaves {
        entries.push(encode_summary(c, encoder, false)?);
    }
    Ok(CommunityIndex { entries, encoder_id: encoder.name().to_string(), dimension: expected_dimension })
}

impl<F: Scalar> CommunityIndex<F> {
    pub fn entry(&self, community_id: usize) -> Option<&IndexEntry<F>> {
        self.entries.iter().find(|e| e.community_id == community_id)
    }

    /// Scores every entry against `query`.
    pub fn score_all(&self, query: &[F]) -> Result<Vec<F>, IndexError> {
        if self.entries.is_empty() {
            return Err(IndexError::EmptyIndex);
        }
        let vs: Vec<&[F]> = self.entries.iter().map(|e| e.vector.as_slice()).collect();
        score_candidates(query, &vs)
    }

    /// Highest-scoring entries, ties by ascending community id. `k` is clamped to the entry count.
    pub fn top_k(&self, query: &[F], k: usize) -> Result<Vec<(usize, F)>, IndexError> {
        let scores = self.score_all(query)?;
        let mut ranked: Vec<(usize, F)> = self.entries.iter().map(|e| e.community_id).zip(scores).collect();
        ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal).then(a.0.cmp(&b.0)));
        ranked.truncate(k.max(1));
        Ok(ranked)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clients::StubEncoder;
    use crate::community::Hierarchy;

    fn set() -> CommunitySet {
        let mk = |id: usize, c: Category, d: &str| Community {
            community_id: id,
            entity_ids: Default::default(),
            category: c,
            description: d.into(),
            level: 0,
        };
        CommunitySet {
            hierarchy: Hierarchy { nodes: vec![] },
            categories: Category::KNOWN.iter().map(|&c| mk(c.ordinal(), c, c.description())).collect(),
            leaves: vec![mk(7, Category::Disease, "cough with phlegm"), mk(8, Category::PulseTongue, "wiry pulse")],
        }
    }

    #[test]
    fn derived_softmax_case() {
        let q = [1.0f64, 0.0];
        let s = score_candidates(&q, &[&[1.0, 0.0], &[0.0, 1.0]]).unwrap();
        assert!((s[0] - 0.7311).abs() < 1e-4 && (s[1] - 0.2689).abs() < 1e-4);
        let same = score_candidates(&q, &[&[0.3, 0.3], &[0.3, 0.3]]).unwrap();
        assert_eq!(same, vec![0.5, 0.5]);
        assert_eq!(score_candidates(&q, &[&[5.0, 5.0]]).unwrap(), vec![1.0]);
        assert!(matches!(score_candidates(&q, &[&[1.0]]), Err(IndexError::Dimension { .. })));
    }

    #[test]
    fn build_and_query() {
        let enc = StubEncoder::new(64, 1);
        let idx: CommunityIndex<f64> = build_index(&set(), &enc, 64).unwrap();
        assert_eq!(idx.entries.len(), 9);
        let again: CommunityIndex<f64> = build_index(&set(), &enc, 64).unwrap();
        assert_eq!(idx, again);
        let q = clients::encode(&enc, "wiry pulse").unwrap();
        let top = idx.top_k(&q, 1).unwrap();
        assert_eq!(top[0].0, 8);
        assert_eq!(idx.top_k(&q, 100).unwrap().len(), 9);
        assert!(matches!(build_index::<f64>(&set(), &enc, 32), Err(IndexError::Dimension { expected: 32, actual: 64 })));
    }

    #[test]
    fn empty_index() {
        let idx = CommunityIndex::<f32> { entries: vec![], encoder_id: "x".into(), dimension: 2 };
        assert!(matches!(idx.top_k(&[0.0, 1.0], 1), Err(IndexError::EmptyIndex)));
    }
}
