//! Mapping leaf communities onto the seven categories.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{hierarchical_leiden, Community, CommunityError, Hierarchy, LeidenConfig, WeightedGraph};
use crate::kg::KnowledgeGraph;
use crate::taxonomy::Category;

/// Category-level communities take ids `0..7` in taxonomy order; leaves follow from 7.
pub const FIRST_LEAF_ID: usize = 7;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommunitySet {
    pub hierarchy: Hierarchy,
    /// Exactly seven, one per category, possibly empty.
    pub categories: Vec<Community>,
    pub leaves: Vec<Community>,
}

impl CommunitySet {
    pub fn category(&self, c: Category) -> &Community {
        &self.categories[c.ordinal()]
    }

    pub fn leaves_of(&self, c: Category) -> impl Iterator<Item = &Community> {
        self.leaves.iter().filter(move |l| l.category == c)
    }

    pub fn get(&self, id: usize) -> Option<&Community> {
        if id < FIRST_LEAF_ID {
            self.categories.get(id)
        } else {
            self.leaves.get(id - FIRST_LEAF_ID)
        }
    }

    pub fn all(&self) -> impl Iterator<Item = &Community> {
        self.categories.iter().chain(&self.leaves)
    }

    pub fn all_mut(&mut self) -> impl Iterator<Item = &mut Community> {
        self.categories.iter_mut().chain(self.leaves.iter_mut())
    }

    /// Entity id to leaf community id.
    pub fn leaf_of_entity(&self) -> BTreeMap<usize, usize> {
        self.leaves
            .iter()
            .flat_map(|l| l.entity_ids.iter().map(move |&e| (e, l.community_id)))
            .collect()
    }
}

/// Majority over known member categories; ties and the all-unknown case go to
/// the earliest category in taxonomy order.
pub fn majority_category(members: &BTreeSet<usize>, graph: &KnowledgeGraph) -> Category {
    let mut counts = [0usize; 7];
    for &e in members {
        if let Some(ent) = graph.entity(e) {
            if ent.category.is_known() {
                counts[ent.category.ordinal()] += 1;
            }
        }
    }
    let mut best = 0;
    for i in 1..7 {
        if counts[i] > counts[best] {
            best = i;
        }
    }
    Category::KNOWN[best]
}

/// Labels and renumbers leaves, and builds the seven category-level groups.
/// Leaves are ordered by (category, smallest member id).
pub fn assign_categories(leaves: Vec<Community>, graph: &KnowledgeGraph) -> (Vec<Community>, Vec<Community>) {
    let mut labelled: Vec<Community> = leaves
        .into_iter()
        .map(|mut l| {
            l.category = majority_category(&l.entity_ids, graph);
            l
        })
        .collect();
    labelled.sort_by_key(|l| (l.category, l.entity_ids.iter().next().copied().unwrap_or(usize::MAX)));
    for (i, l) in labelled.iter_mut().enumerate() {
        l.community_id = FIRST_LEAF_ID + i;
    }
    let categories = Category::KNOWN
        .iter()
        .map(|&c| Community {
            community_id: c.ordinal(),
            entity_ids: labelled.iter().filter(|l| l.category == c).flat_map(|l| l.entity_ids.iter().copied()).collect(),
            category: c,
            description: String::new(),
            level: 0,
        })
        .collect();
    (labelled, categories)
}

/// Runs hierarchical Leiden on the graph, labels the leaves and gives every
/// `Unknown` entity its leaf's category. Descriptions are left empty.
pub fn detect_communities(
    graph: &mut KnowledgeGraph,
    cfg: &LeidenConfig<f64>,
) -> Result<CommunitySet, CommunityError> {
    let wg = WeightedGraph::<f64>::from_knowledge_graph(graph);
    let hierarchy = hierarchical_leiden(&wg, cfg)?;
    let leaves: Vec<Community> = hierarchy
        .leaves()
        .map(|n| Community {
            community_id: n.id,
            entity_ids: n.members.iter().copied().collect(),
            category: Category::Unknown,
            description: String::new(),
            level: n.level,
        })
        .collect();
    let (leaves, categories) = assign_categories(leaves, graph);
    let updates: Vec<(usize, Category)> = leaves
        .iter()
        .flat_map(|l| {
            l.entity_ids
                .iter()
                .filter(|&&e| graph.entity(e).is_some_and(|x| !x.category.is_known()))
                .map(move |&e| (e, l.category))
        })
        .collect();
    if !updates.is_empty() {
        graph.recategorize(&updates)?;
    }
    Ok(CommunitySet { hierarchy, categories, leaves })
}
