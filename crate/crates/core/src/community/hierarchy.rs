//! Recursive Leiden: split each community's induced subgraph until it no longer divides.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{leiden, CommunityError, LeidenConfig, WeightedGraph};
use crate::numeric::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierarchyNode {
    pub id: usize,
    pub level: usize,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    /// Node (entity) ids, ascending.
    pub members: Vec<usize>,
}

impl HierarchyNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

/// `nodes[0]` is the root covering the whole graph at level 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hierarchy {
    pub nodes: Vec<HierarchyNode>,
}

impl Hierarchy {
    pub fn leaves(&self) -> impl Iterator<Item = &HierarchyNode> {
        self.nodes.iter().filter(|n| n.is_leaf())
    }

    /// Number of levels below the root.
    pub fn depth(&self) -> usize {
        self.nodes.iter().map(|n| n.level).max().unwrap_or(0)
    }
}

/// Builds the hierarchy breadth-first so node ids are stable for a given seed.
pub fn hierarchical_leiden<F: Scalar>(
    g: &WeightedGraph<F>,
    cfg: &LeidenConfig<F>,
) -> Result<Hierarchy, CommunityError> {
    cfg.validate()?;
    if g.node_count() == 0 {
        return Err(CommunityError::EmptyGraph);
    }
    let mut nodes = vec![HierarchyNode {
        id: 0,
        level: 0,
        parent: None,
        children: Vec::new(),
        members: (0..g.node_count()).collect(),
    }];
    let mut queue = VecDeque::from([0usize]);
    while let Some(id) = queue.pop_front() {
        let members = nodes[id].members.clone();
        if members.len() <= 2 {
            continue;
        }
        let sub = g.induced(&members);
        let p = leiden(&sub, cfg)?;
        if p.community_count() <= 1 {
            continue;
        }
        let mut parts: Vec<Vec<usize>> =
            p.communities().into_iter().map(|c| c.into_iter().map(|i| members[i]).collect()).collect();
        parts.sort_by_key(|c: &Vec<usize>| c[0]);
        let level = nodes[id].level + 1;
        for part in parts {
            let child = nodes.len();
            nodes.push(HierarchyNode { id: child, level, parent: Some(id), children: Vec::new(), members: part });
            nodes[id].children.push(child);
            queue.push_back(child);
        }
    }
    Ok(Hierarchy { nodes })
}
