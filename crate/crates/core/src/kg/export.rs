//! CSV export and import of the graph (`nodes.csv`, `edges.csv`).

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Entity, KgError, KnowledgeGraph, Relation, RelationType};
use crate::taxonomy::Category;

pub const NODES_FILE: &str = "nodes.csv";
pub const EDGES_FILE: &str = "edges.csv";

#[derive(Debug, Serialize, Deserialize)]
struct NodeRow {
    id: usize,
    name: String,
    category: Category,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    community: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct EdgeRow {
    src: usize,
    dst: usize,
    #[serde(rename = "type")]
    relation_type: RelationType,
    label: String,
    weight: f64,
}

fn io(path: &Path, e: impl std::fmt::Display) -> KgError {
    KgError::Io(format!("{}: {e}", path.display()))
}

/// Writes both files into `dir`. With `communities`, nodes get a leaf-community column.
pub fn export_graph(
    graph: &KnowledgeGraph,
    dir: &Path,
    communities: Option<&BTreeMap<usize, usize>>,
) -> Result<(), KgError> {
    let nodes = dir.join(NODES_FILE);
    let mut w = csv::Writer::from_path(&nodes).map_err(|e| io(&nodes, e))?;
    if communities.is_some() {
        w.write_record(["id", "name", "category", "community"]).map_err(|e| io(&nodes, e))?;
    } else {
        w.write_record(["id", "name", "category"]).map_err(|e| io(&nodes, e))?;
    }
    for e in graph.entities() {
        let mut rec = vec![e.id.to_string(), e.name.clone(), e.category.key().to_string()];
        if let Some(map) = communities {
            rec.push(map.get(&e.id).map(|c| c.to_string()).unwrap_or_default());
        }
        w.write_record(&rec).map_err(|e| io(&nodes, e))?;
    }
    w.flush().map_err(|e| io(&nodes, e))?;

    let edges = dir.join(EDGES_FILE);
    let mut w = csv::Writer::from_path(&edges).map_err(|e| io(&edges, e))?;
    for r in graph.relations() {
        w.serialize(EdgeRow {
            src: r.src,
            dst: r.dst,
            relation_type: r.relation_type,
            label: r.label.clone(),
            weight: r.weight,
        })
        .map_err(|e| io(&edges, e))?;
    }
    w.flush().map_err(|e| io(&edges, e))?;
    Ok(())
}

/// Reads the files written by [`export_graph`]. Source-chunk provenance is not
/// part of the CSV format and comes back empty.
pub fn import_graph(dir: &Path) -> Result<(KnowledgeGraph, BTreeMap<usize, usize>), KgError> {
    let nodes = dir.join(NODES_FILE);
    let mut r = csv::Reader::from_path(&nodes).map_err(|e| io(&nodes, e))?;
    let mut entities = Vec::new();
    let mut communities = BTreeMap::new();
    for row in r.deserialize::<NodeRow>() {
        let row = row.map_err(|e| io(&nodes, e))?;
        if let Some(c) = row.community {
            communities.insert(row.id, c);
        }
        entities.push(Entity { id: row.id, name: row.name, category: row.category, source_chunks: Default::default() });
    }
    let edges = dir.join(EDGES_FILE);
    let mut r = csv::Reader::from_path(&edges).map_err(|e| io(&edges, e))?;
    let mut relations = Vec::new();
    for row in r.deserialize::<EdgeRow>() {
        let row = row.map_err(|e| io(&edges, e))?;
        relations.push(Relation {
            src: row.src,
            dst: row.dst,
            relation_type: row.relation_type,
            label: row.label,
            weight: row.weight,
        });
    }
    Ok((KnowledgeGraph::from_parts(entities, relations)?, communities))
}
