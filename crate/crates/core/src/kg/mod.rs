//! Knowledge graph assembled from per-chunk extractions.

pub mod export;
pub mod extract;

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clients::ClientError;
use crate::corpus::sha256_hex;
use crate::taxonomy::Category;
use crate::text::normalize_name;
pub use extract::{extract, ExtractedEntity, ExtractedRelation, Extraction};

#[derive(Debug, Error)]
pub enum KgError {
    #[error("extraction for chunk {chunk_id} stayed malformed after repair attempts")]
    Extraction { chunk_id: usize },
    #[error("no entities were extracted from any chunk")]
    EmptyGraph,
    #[error("unknown entity {0}")]
    UnknownEntity(String),
    #[error("inconsistent graph: {0}")]
    Invalid(String),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub id: usize,
    pub name: String,
    pub category: Category,
    #[serde(default)]
    pub source_chunks: BTreeSet<usize>,
}

/// Whether a relation joins two entities of the same known category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationType {
    Intra,
    Inter,
}

impl RelationType {
    pub fn between(a: Category, b: Category) -> RelationType {
        if a == b && a.is_known() {
            RelationType::Intra
        } else {
            RelationType::Inter
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            RelationType::Intra => "intra",
            RelationType::Inter => "inter",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Relation {
    pub src: usize,
    pub dst: usize,
    pub relation_type: RelationType,
    pub label: String,
    pub weight: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GraphParts {
    entities: Vec<Entity>,
    relations: Vec<Relation>,
}

/// Entities are indexed `0..n` by id; relations are directed but adjacency is undirected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "GraphParts", into = "GraphParts")]
pub struct KnowledgeGraph {
    entities: Vec<Entity>,
    relations: Vec<Relation>,
    by_name: HashMap<String, usize>,
    adjacency: Vec<Vec<usize>>,
    digest: String,
}

impl PartialEq for KnowledgeGraph {
    fn eq(&self, other: &Self) -> bool {
        self.entities == other.entities && self.relations == other.relations
    }
}

impl TryFrom<GraphParts> for KnowledgeGraph {
    type Error = KgError;

    fn try_from(p: GraphParts) -> Result<Self, KgError> {
        KnowledgeGraph::from_parts(p.entities, p.relations)
    }
}

impl From<KnowledgeGraph> for GraphParts {
    fn from(g: KnowledgeGraph) -> Self {
        GraphParts { entities: g.entities, relations: g.relations }
    }
}

impl KnowledgeGraph {
    /// Validates ids, names and endpoints and recomputes relation types.
    pub fn from_parts(entities: Vec<Entity>, mut relations: Vec<Relation>) -> Result<Self, KgError> {
        let mut by_name = HashMap::with_capacity(entities.len());
        for (i, e) in entities.iter().enumerate() {
            if e.id != i {
                return Err(KgError::Invalid(format!("entity at position {i} has id {}", e.id)));
            }
            if e.name.is_empty() || normalize_name(&e.name) != e.name {
                return Err(KgError::Invalid(format!("entity {i} name {:?} is not normalised", e.name)));
            }
            if by_name.insert(e.name.clone(), i).is_some() {
                return Err(KgError::Invalid(format!("duplicate entity name {:?}", e.name)));
            }
        }
        let n = entities.len();
        let mut adjacency = vec![Vec::new(); n];
        for (ri, r) in relations.iter_mut().enumerate() {
            if r.src >= n || r.dst >= n {
                return Err(KgError::Invalid(format!("relation {ri} references a missing entity")));
            }
            if r.src == r.dst {
                return Err(KgError::Invalid(format!("relation {ri} is a self-relation")));
            }
            if !(r.weight.is_finite() && r.weight > 0.0) {
                return Err(KgError::Invalid(format!("relation {ri} has weight {}", r.weight)));
            }
            r.relation_type = RelationType::between(entities[r.src].category, entities[r.dst].category);
            adjacency[r.src].push(ri);
            adjacency[r.dst].push(ri);
        }
        let mut g = KnowledgeGraph { entities, relations, by_name, adjacency, digest: String::new() };
        g.digest = g.compute_digest();
        Ok(g)
    }

    fn compute_digest(&self) -> String {
        let parts = GraphParts { entities: self.entities.clone(), relations: self.relations.clone() };
        sha256_hex(serde_json::to_string(&parts).expect("graph serialises").as_bytes())
    }

    pub fn entities(&self) -> &[Entity] {
        &self.entities
    }

    pub fn relations(&self) -> &[Relation] {
        &self.relations
    }

    pub fn entity(&self, id: usize) -> Option<&Entity> {
        self.entities.get(id)
    }

    /// Looks up by name after normalisation.
    pub fn entity_by_name(&self, name: &str) -> Option<&Entity> {
        self.by_name.get(&normalize_name(name)).map(|&i| &self.entities[i])
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    /// Identity of this exact graph content.
    pub fn digest(&self) -> &str {
        &self.digest
    }

    /// Relation indices incident to `id`.
    pub fn incident(&self, id: usize) -> &[usize] {
        &self.adjacency[id]
    }

    /// Neighbouring entity ids with the connecting relation.
    pub fn neighbors(&self, id: usize) -> impl Iterator<Item = (usize, &Relation)> + '_ {
        self.adjacency[id].iter().map(move |&ri| {
            let r = &self.relations[ri];
            (if r.src == id { r.dst } else { r.src }, r)
        })
    }

    /// Sum of incident relation weights.
    pub fn weighted_degree(&self, id: usize) -> f64 {
        self.adjacency[id].iter().map(|&ri| self.relations[ri].weight).sum()
    }

    /// Twice the summed relation weight (the `2m` of modularity).
    pub fn total_edge_weight(&self) -> f64 {
        2.0 * self.relations.iter().map(|r| r.weight).sum::<f64>()
    }

    /// Overwrites categories and recomputes relation types and the digest.
    pub fn recategorize(&mut self, updates: &[(usize, Category)]) -> Result<(), KgError> {
        for &(id, c) in updates {
            let e = self
                .entities
                .get_mut(id)
                .ok_or_else(|| KgError::UnknownEntity(id.to_string()))?;
            e.category = c;
        }
        for r in &mut self.relations {
            r.relation_type = RelationType::between(self.entities[r.src].category, self.entities[r.dst].category);
        }
        self.digest = self.compute_digest();
        Ok(())
    }

    /// Entities within `hops` of any seed, with every relation among them.
    pub fn subgraph_for_query(&self, seeds: &[usize], hops: usize) -> Result<Subgraph, KgError> {
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::new();
        for &s in seeds {
            if s >= self.entities.len() {
                return Err(KgError::UnknownEntity(s.to_string()));
            }
            if seen.insert(s) {
                queue.push_back((s, 0usize));
            }
        }
        while let Some((v, d)) = queue.pop_front() {
            if d == hops {
                continue;
            }
            for (u, _) in self.neighbors(v) {
                if seen.insert(u) {
                    queue.push_back((u, d + 1));
                }
            }
        }
        let relation_ids = self
            .relations
            .iter()
            .enumerate()
            .filter(|(_, r)| seen.contains(&r.src) && seen.contains(&r.dst))
            .map(|(i, _)| i)
            .collect();
        Ok(Subgraph { parent_digest: self.digest.clone(), entity_ids: seen, relation_ids })
    }

    /// Entities whose name occurs in `text` as a whole-word match (case-insensitive).
    pub fn mentions(&self, text: &str) -> Vec<usize> {
        let hay = format!(" {} ", tokens_for_matching(text));
        let mut out: Vec<usize> = self
            .entities
            .iter()
            .filter(|e| {
                let needle = tokens_for_matching(&e.name);
                !needle.is_empty() && hay.contains(&format!(" {needle} "))
            })
            .map(|e| e.id)
            .collect();
        out.sort_unstable();
        out
    }
}

/// Lowercase words separated by single spaces, punctuation dropped.
fn tokens_for_matching(s: &str) -> String {
    s.to_lowercase()
        .split(|c: char| !c.is_alphanumeric() && c != '-' && c != '\'')
        .filter(|w| !w.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subgraph {
    pub parent_digest: String,
    pub entity_ids: BTreeSet<usize>,
    pub relation_ids: BTreeSet<usize>,
}

impl Subgraph {
    pub fn union(&mut self, other: &Subgraph) {
        debug_assert_eq!(self.parent_digest, other.parent_digest);
        self.entity_ids.extend(other.entity_ids.iter().copied());
        self.relation_ids.extend(other.relation_ids.iter().copied());
    }
}

/// Majority vote over known labels; ties go to the earlier category, `Unknown` only when nothing else was seen.
fn resolve_category(votes: &BTreeMap<Category, usize>) -> Category {
    let mut best = Category::Unknown;
    let mut best_n = 0;
    for c in Category::KNOWN {
        let n = votes.get(&c).copied().unwrap_or(0);
        if n > best_n {
            best = c;
            best_n = n;
        }
    }
    best
}

/// Merges extractions into one graph. Ids follow sorted names, so the result
/// does not depend on extraction order.
pub fn build_graph(extractions: &[Extraction]) -> Result<KnowledgeGraph, KgError> {
    let mut votes: BTreeMap<String, BTreeMap<Category, usize>> = BTreeMap::new();
    let mut chunks: BTreeMap<String, BTreeSet<usize>> = BTreeMap::new();
    let mut edge_counts: BTreeMap<(String, String, String), usize> = BTreeMap::new();
    for ex in extractions {
        for e in &ex.entities {
            *votes.entry(e.name.clone()).or_default().entry(e.category).or_default() += 1;
            chunks.entry(e.name.clone()).or_default().insert(ex.chunk_id);
        }
        for r in &ex.relations {
            for n in [&r.src, &r.dst] {
                votes.entry(n.clone()).or_default();
                chunks.entry(n.clone()).or_default().insert(ex.chunk_id);
            }
            if r.src != r.dst {
                *edge_counts.entry((r.src.clone(), r.dst.clone(), r.label.clone())).or_default() += 1;
            }
        }
    }
    if votes.is_empty() {
        return Err(KgError::EmptyGraph);
    }
    let ids: HashMap<&str, usize> = votes.keys().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let entities: Vec<Entity> = votes
        .iter()
        .enumerate()
        .map(|(i, (name, v))| Entity {
            id: i,
            name: name.clone(),
            category: resolve_category(v),
            source_chunks: chunks.remove(name).unwrap_or_default(),
        })
        .collect();
    let relations = edge_counts
        .into_iter()
        .map(|((s, d, label), n)| Relation {
            src: ids[s.as_str()],
            dst: ids[d.as_str()],
            relation_type: RelationType::Inter,
            label,
            weight: n as f64,
        })
        .collect();
    KnowledgeGraph::from_parts(entities, relations)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn ex(chunk_id: usize, ents: &[(&str, Category)], rels: &[(&str, &str, &str)]) -> Extraction {
        Extraction {
            chunk_id,
            entities: ents.iter().map(|(n, c)| ExtractedEntity { name: n.to_string(), category: *c }).collect(),
            relations: rels
                .iter()
                .map(|(s, l, d)| ExtractedRelation { src: s.to_string(), label: l.to_string(), dst: d.to_string() })
                .collect(),
        }
    }

    #[test]
    fn duplicate_relations_sum_weights() {
        let exs: Vec<Extraction> = (0..3)
            .map(|i| ex(i, &[("a", Category::Disease), ("b", Category::Disease)], &[("a", "co_occurs_with", "b")]))
            .collect();
        let g = build_graph(&exs).unwrap();
        assert_eq!(g.relations().len(), 1);
        assert_eq!(g.relations()[0].weight, 3.0);
        assert_eq!(g.relations()[0].relation_type, RelationType::Intra);
        assert_eq!(g.entity_by_name("A").unwrap().source_chunks.len(), 3);
    }

    #[test]
    fn category_majority_and_ties() {
        let exs = vec![
            ex(0, &[("x", Category::Contraindication)], &[]),
            ex(1, &[("x", Category::Disease)], &[]),
            ex(2, &[("y", Category::Unknown)], &[]),
            ex(3, &[("y", Category::PulseTongue)], &[]),
            ex(4, &[("z", Category::Unknown)], &[]),
        ];
        let g = build_graph(&exs).unwrap();
        assert_eq!(g.entity_by_name("x").unwrap().category, Category::Disease);
        assert_eq!(g.entity_by_name("y").unwrap().category, Category::PulseTongue);
        assert_eq!(g.entity_by_name("z").unwrap().category, Category::Unknown);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(build_graph(&[ex(0, &[], &[])]), Err(KgError::EmptyGraph)));
    }

    #[test]
    fn subgraph_hops() {
        let exs = vec![ex(
            0,
            &[("a", Category::Disease), ("b", Category::Disease), ("c", Category::Disease)],
            &[("a", "r", "b"), ("b", "r", "c")],
        )];
        let g = build_graph(&exs).unwrap();
        let s = g.subgraph_for_query(&[0], 1).unwrap();
        assert_eq!(s.entity_ids, BTreeSet::from([0, 1]));
        assert_eq!(s.relation_ids.len(), 1);
        assert_eq!(g.subgraph_for_query(&[0], 0).unwrap().entity_ids, BTreeSet::from([0]));
        assert!(matches!(g.subgraph_for_query(&[9], 1), Err(KgError::UnknownEntity(_))));
    }

    #[test]
    fn serde_round_trip_rebuilds_indexes() {
        let g = build_graph(&[ex(0, &[("a", Category::Disease)], &[("a", "r", "b")])]).unwrap();
        let back: KnowledgeGraph = serde_json::from_str(&serde_json::to_string(&g).unwrap()).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.digest(), g.digest());
        assert_eq!(back.entity_by_name("b").unwrap().id, 1);
    }

    #[test]
    fn mentions_are_whole_word() {
        let g = build_graph(&[ex(0, &[("coptis", Category::HerbalIngredient), ("tea", Category::Unknown)], &[])])
            .unwrap();
        assert_eq!(g.mentions("Add Coptis, then steep."), vec![0]);
        assert!(g.mentions("teapot").is_empty());
    }
}
