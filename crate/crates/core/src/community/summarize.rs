//! Community descriptions produced through the generator.

use std::collections::BTreeMap;

use super::{Community, CommunityError, CommunitySet};
use crate::clients::prompt::fields;
use crate::clients::{self, GenerationParams, Generator, Prompt, PromptRole};
use crate::kg::KnowledgeGraph;
use crate::taxonomy::{Category, Role};

/// Members listed in a summary prompt.
pub const MAX_SUMMARY_MEMBERS: usize = 30;
/// Members a description must name (or all, if the community is smaller).
pub const MIN_NAMED_MEMBERS: usize = 5;

const INSTRUCTIONS: &str = "Write a short description of this community of knowledge-graph entities. \
Start with the category header in square brackets, state what the category covers, and name the \
listed members. For herbal components, group herbs by their monarch, minister, assistant and courier roles.";

/// Highest weighted degree first, then name.
pub fn summary_members(community: &Community, graph: &KnowledgeGraph) -> Vec<usize> {
    let mut ids: Vec<usize> = community.entity_ids.iter().copied().collect();
    ids.sort_by(|&a, &b| {
        graph
            .weighted_degree(b)
            .total_cmp(&graph.weighted_degree(a))
            .then_with(|| graph.entities()[a].name.cmp(&graph.entities()[b].name))
    });
    ids.truncate(MAX_SUMMARY_MEMBERS);
    ids
}

/// Most frequent role on incoming `contains_<role>` relations.
pub fn herb_role(graph: &KnowledgeGraph, id: usize) -> Option<Role> {
    let mut counts: BTreeMap<Role, usize> = BTreeMap::new();
    for (_, r) in graph.neighbors(id) {
        if r.dst != id {
            continue;
        }
        if let Some(role) = r.label.strip_prefix("contains_").and_then(|s| s.parse::<Role>().ok()) {
            *counts.entry(role).or_default() += 1;
        }
    }
    counts.into_iter().filter(|(r, _)| *r != Role::Unassigned).max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0))).map(|(r, _)| r)
}

fn empty_description(c: Category) -> String {
    format!("[{}] {}. No entities were assigned to this category.", c.title(), c.description())
}

pub fn summarize(
    community: &Community,
    graph: &KnowledgeGraph,
    generator: &dyn Generator,
    params: &GenerationParams,
) -> Result<String, CommunityError> {
    if community.entity_ids.is_empty() {
        return Ok(empty_description(community.category));
    }
    let members = summary_members(community, graph);
    let lines: Vec<String> = members
        .iter()
        .map(|&id| {
            let name = &graph.entities()[id].name;
            match (community.category, herb_role(graph, id)) {
                (Category::HerbalIngredient, Some(r)) => format!("{name}|{}", r.key()),
                _ => name.clone(),
            }
        })
        .collect();
    let payload = fields(&[("category", community.category.key()), ("members", &lines.join("\n"))]);
    let prompt = Prompt::new(PromptRole::Summarize, INSTRUCTIONS, payload).render();
    let mut text = clients::generate(generator, &prompt, params)
        .map_err(|source| CommunityError::Summarize { community_id: community.community_id, source })?
        .trim()
        .to_string();

    let needed = MIN_NAMED_MEMBERS.min(community.entity_ids.len());
    let lower = text.to_lowercase();
    let named = members.iter().filter(|&&id| lower.contains(&graph.entities()[id].name)).count();
    if named < needed {
        let missing: Vec<&str> = members
            .iter()
            .map(|&id| graph.entities()[id].name.as_str())
            .filter(|n| !lower.contains(n))
            .take(needed - named)
            .collect();
        text.push_str(&format!(" Members include: {}.", missing.join(", ")));
    }
    Ok(text)
}

/// Fills every description in `set`, one community at a time in id order.
pub fn summarize_all(
    set: &mut CommunitySet,
    graph: &KnowledgeGraph,
    generator: &dyn Generator,
    params: &GenerationParams,
) -> Result<(), CommunityError> {
    for c in set.all_mut() {
        c.description = summarize(c, graph, generator, params)?;
    }
    Ok(())
}
