//! LLM-driven entity/relation extraction from a chunk.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::KgError;
use crate::clients::{self, GenerationParams, Generator, Prompt, PromptRole};
use crate::corpus::Chunk;
use crate::taxonomy::Category;
use crate::text::{normalize_label, normalize_name};

pub const MAX_REPAIR_ATTEMPTS: usize = 2;

const INSTRUCTIONS: &str = "Extract entities and relations from the record text. \
Categories: disease, recommended_formula, herbal_ingredient, symptoms_population, pulse_tongue, \
contraindication, preparation_method. Emit one item per line as `ENTITY|<name>|<category>` or \
`RELATION|<source>|<label>|<target>`. Emit `NONE` when nothing applies. No other text.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedEntity {
    /// Normalised name.
    pub name: String,
    pub category: Category,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedRelation {
    pub src: String,
    pub label: String,
    pub dst: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Extraction {
    pub chunk_id: usize,
    pub entities: Vec<ExtractedEntity>,
    pub relations: Vec<ExtractedRelation>,
}

/// Parses the line protocol. Relation endpoints missing from the entity list
/// are added as `Unknown`, and self-relations are dropped.
pub fn parse_extraction(chunk_id: usize, raw: &str) -> Result<Extraction, String> {
    let mut order: Vec<String> = Vec::new();
    let mut cats: BTreeMap<String, Category> = BTreeMap::new();
    let mut relations = Vec::new();
    let mut add = |name: String, c: Category, order: &mut Vec<String>| match cats.get_mut(&name) {
        Some(existing) => {
            if *existing == Category::Unknown {
                *existing = c;
            }
        }
        None => {
            order.push(name.clone());
            cats.insert(name, c);
        }
    };
    let mut pending: Vec<ExtractedRelation> = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        let t = line.trim().trim_start_matches(['-', '*']).trim();
        if t.is_empty() || t.eq_ignore_ascii_case("none") {
            continue;
        }
        let parts: Vec<&str> = t.split('|').map(str::trim).collect();
        match parts.first().map(|s| s.to_ascii_uppercase()).as_deref() {
            Some("ENTITY") if parts.len() == 3 => {
                let name = normalize_name(parts[1]);
                if name.is_empty() {
                    return Err(format!("line {}: empty entity name", i + 1));
                }
                let c = parts[2].parse().unwrap_or(Category::Unknown);
                add(name, c, &mut order);
            }
            Some("RELATION") if parts.len() == 4 => {
                let (src, dst) = (normalize_name(parts[1]), normalize_name(parts[3]));
                let label = normalize_label(parts[2]);
                if src.is_empty() || dst.is_empty() || label.is_empty() {
                    return Err(format!("line {}: relation with an empty field", i + 1));
                }
                pending.push(ExtractedRelation { src, label, dst });
            }
            _ => return Err(format!("line {}: unrecognised item {t:?}", i + 1)),
        }
    }
    for r in pending {
        add(r.src.clone(), Category::Unknown, &mut order);
        add(r.dst.clone(), Category::Unknown, &mut order);
        if r.src != r.dst {
            relations.push(r);
        }
    }
    let entities = order
        .into_iter()
        .map(|name| {
            let category = cats[&name];
            ExtractedEntity { name, category }
        })
        .collect();
    Ok(Extraction { chunk_id, entities, relations })
}

/// Runs extraction with up to [`MAX_REPAIR_ATTEMPTS`] repair prompts after a malformed response.
pub fn extract(chunk: &Chunk, generator: &dyn Generator, params: &GenerationParams) -> Result<Extraction, KgError> {
    if chunk.text.trim().is_empty() {
        return Err(KgError::Client(clients::ClientError::InvalidInput(format!(
            "chunk {} has no text",
            chunk.chunk_id
        ))));
    }
    let mut instructions = INSTRUCTIONS.to_string();
    for attempt in 0..=MAX_REPAIR_ATTEMPTS {
        let prompt = Prompt::new(PromptRole::Extract, instructions.as_str(), chunk.text.as_str()).render();
        let raw = clients::generate(generator, &prompt, params)?;
        match parse_extraction(chunk.chunk_id, &raw) {
            Ok(e) => return Ok(e),
            Err(why) => {
                tracing::debug!(chunk = chunk.chunk_id, attempt, %why, "malformed extraction");
                instructions = format!(
                    "{INSTRUCTIONS}\nYour previous answer was rejected ({why}). Follow the line format exactly."
                );
            }
        }
    }
    Err(KgError::Extraction { chunk_id: chunk.chunk_id })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clients::{ClientError, StubGenerator};
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn chunk(text: &str) -> Chunk {
        Chunk { chunk_id: 4, source_record_id: 0, token_span: (0, 1), text: text.into(), token_count: 1 }
    }

    #[test]
    fn fixture_sentence() {
        let e = extract(
            &chunk("Halloysite treats intestinal wind bleeding"),
            &StubGenerator::new(),
            &GenerationParams::default(),
        )
        .unwrap();
        assert_eq!(
            e.entities,
            vec![
                ExtractedEntity { name: "halloysite".into(), category: Category::HerbalIngredient },
                ExtractedEntity { name: "intestinal wind bleeding".into(), category: Category::Disease },
            ]
        );
        assert_eq!(
            e.relations,
            vec![ExtractedRelation {
                src: "halloysite".into(),
                label: "treats".into(),
                dst: "intestinal wind bleeding".into()
            }]
        );
    }

    #[test]
    fn dangling_endpoints_become_unknown() {
        let e = parse_extraction(0, "RELATION|A|links|B\nRELATION|C|self|c").unwrap();
        assert_eq!(e.entities.len(), 3);
        assert!(e.entities.iter().all(|x| x.category == Category::Unknown));
        assert_eq!(e.relations.len(), 1);
    }

    #[test]
    fn vacuous_output_is_empty() {
        let e = parse_extraction(0, "NONE").unwrap();
        assert!(e.entities.is_empty() && e.relations.is_empty());
    }

    struct Garbage(AtomicUsize);

    impl Generator for Garbage {
        fn name(&self) -> &str {
            "garbage"
        }
        fn generate(&self, _: &str, _: &GenerationParams) -> Result<String, ClientError> {
            self.0.fetch_add(1, Ordering::SeqCst);
            Ok("lorem ipsum".into())
        }
    }

    #[test]
    fn malformed_output_fails_after_repairs() {
        let g = Garbage(AtomicUsize::new(0));
        let r = extract(&chunk("x"), &g, &GenerationParams::default());
        assert!(matches!(r, Err(KgError::Extraction { chunk_id: 4 })));
        assert_eq!(g.0.load(Ordering::SeqCst), 1 + MAX_REPAIR_ATTEMPTS);
    }
}
