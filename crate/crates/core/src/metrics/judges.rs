//! Pluggable judges behind the hallucination, fact, professionalism and coherence metrics.

use std::collections::HashSet;

use super::overlap::metric_tokens;
use crate::clients::prompt::fields;
use crate::clients::stub::split_herb_item;
use crate::clients::{self, GenerationParams, Generator, Prompt, PromptRole};
use crate::kg::KnowledgeGraph;
use crate::taxonomy::Category;
use crate::text::{self, Triple, FORMULA_SUFFIXES};

pub trait HallucinationJudge: Send + Sync {
    fn hallucinated(&self, response: &str) -> bool;
}

pub trait ProfessionalismJudge: Send + Sync {
    fn professional(&self, sentence: &str) -> bool;
}

pub trait CoherenceJudge: Send + Sync {
    fn coherent(&self, first: &str, second: &str) -> bool;
}

/// Splits a response into atomic assertions and checks each one.
pub trait FactOracle: Send + Sync {
    fn assertions(&self, response: &str) -> Vec<Triple>;
    fn supported(&self, assertion: &Triple) -> bool;
}

/// Judge with a fixed verdict, for plumbing checks.
#[derive(Debug, Clone, Copy)]
pub struct Always(pub bool);

impl HallucinationJudge for Always {
    fn hallucinated(&self, _: &str) -> bool {
        self.0
    }
}

impl ProfessionalismJudge for Always {
    fn professional(&self, _: &str) -> bool {
        self.0
    }
}

impl CoherenceJudge for Always {
    fn coherent(&self, _: &str, _: &str) -> bool {
        self.0
    }
}

/// Judges grounded in a knowledge graph.
///
/// * A response hallucinates if it names a formula (a capitalised phrase ending
///   in a formula word such as `Decoction`) or a role-annotated herb
///   (`Name (role, ...)` in the herbal section) that is not a graph entity.
/// * Two sentences cohere if they mention a common entity.
/// * A sentence triple is supported if the graph has a relation from subject
///   to object whose label equals the triple's label or refines it
///   (`contains_sovereign` supports `contains`).
#[derive(Debug, Clone)]
pub struct KgJudge {
    graph: KnowledgeGraph,
    relations: HashSet<(usize, usize)>,
}

impl KgJudge {
    pub fn new(graph: KnowledgeGraph) -> Self {
        let relations = graph.relations().iter().map(|r| (r.src, r.dst)).collect();
        Self { graph, relations }
    }

    pub fn graph(&self) -> &KnowledgeGraph {
        &self.graph
    }

    fn known(&self, name: &str) -> bool {
        self.graph.entity_by_name(name).is_some()
    }

    /// Formula mentions as capitalised word runs, each with its candidate names
    /// (every suffix of the run that ends in the formula word).
    pub fn formula_mentions(text: &str) -> Vec<Vec<String>> {
        let mut out = Vec::new();
        for clause in text.split(|c: char| !(c.is_alphanumeric() || c == ' ' || c == '-' || c == '\'')) {
            let words: Vec<&str> = clause.split_whitespace().collect();
            for (i, w) in words.iter().enumerate() {
                let capital = w.chars().next().is_some_and(|c| c.is_uppercase());
                if !capital || !FORMULA_SUFFIXES.contains(&w.to_lowercase().as_str()) {
                    continue;
                }
                let mut start = i;
                while start > 0 && words[start - 1].chars().next().is_some_and(|c| c.is_uppercase()) {
                    start -= 1;
                }
                if start == i {
                    continue;
                }
                out.push((start..i).map(|j| words[j..=i].join(" ")).collect());
            }
        }
        out
    }

    /// Names in `Name (role, ...)` items of the herbal section.
    pub fn annotated_herbs(response: &str) -> Vec<String> {
        text::sections(response)
            .into_iter()
            .filter(|s| Category::from_title(&s.header) == Some(Category::HerbalIngredient))
            .flat_map(|s| {
                s.body
                    .split([';', '；'])
                    .map(split_herb_item)
                    .filter(|(n, r)| r.is_some() && !n.is_empty())
                    .map(|(n, _)| n)
                    .collect::<Vec<_>>()
            })
            .collect()
    }
}

impl HallucinationJudge for KgJudge {
    fn hallucinated(&self, response: &str) -> bool {
        let unknown_formula =
            Self::formula_mentions(response).iter().any(|cands| !cands.iter().any(|c| self.known(c)));
        unknown_formula || Self::annotated_herbs(response).iter().any(|h| !self.known(h))
    }
}

impl CoherenceJudge for KgJudge {
    fn coherent(&self, first: &str, second: &str) -> bool {
        let a: HashSet<usize> = self.graph.mentions(first).into_iter().collect();
        self.graph.mentions(second).iter().any(|e| a.contains(e))
    }
}

impl FactOracle for KgJudge {
    fn assertions(&self, response: &str) -> Vec<Triple> {
        text::parse_triples(response)
    }

    fn supported(&self, t: &Triple) -> bool {
        let (Some(s), Some(o)) = (self.graph.entity_by_name(&t.subject), self.graph.entity_by_name(&t.object)) else {
            return false;
        };
        if !self.relations.contains(&(s.id, o.id)) {
            return false;
        }
        let refined = format!("{}_", t.label);
        self.graph
            .incident(s.id)
            .iter()
            .map(|&ri| &self.graph.relations()[ri])
            .any(|r| r.src == s.id && r.dst == o.id && (r.label == t.label || r.label.starts_with(&refined)))
    }
}

/// Professional vocabulary; a sentence is professional if it contains a term
/// as a contiguous token sequence.
#[derive(Debug, Clone)]
pub struct Glossary {
    terms: Vec<Vec<String>>,
}

pub const BUNDLED_GLOSSARY: &str = include_str!("../../data/glossary.txt");

impl Glossary {
    /// One term per line; `#` starts a comment.
    pub fn parse(text: &str) -> Self {
        let terms = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty())
            .map(metric_tokens)
            .filter(|t| !t.is_empty())
            .collect();
        Self { terms }
    }

    pub fn bundled() -> Self {
        Self::parse(BUNDLED_GLOSSARY)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

impl ProfessionalismJudge for Glossary {
    fn professional(&self, sentence: &str) -> bool {
        let toks = metric_tokens(sentence);
        self.terms.iter().any(|t| toks.windows(t.len()).any(|w| w == t.as_slice()))
    }
}

/// Delegates each verdict to a generator with a yes/no JUDGE prompt. A failed
/// call counts as the unfavourable verdict.
pub struct LlmJudge<'a> {
    pub generator: &'a dyn Generator,
    pub params: GenerationParams,
}

impl LlmJudge<'_> {
    fn ask(&self, question: &str, items: &[(&str, &str)]) -> bool {
        let mut all = vec![("question", question)];
        all.extend_from_slice(items);
        let prompt = Prompt::new(PromptRole::Judge, "Answer YES or NO.", fields(&all)).render();
        match clients::generate(self.generator, &prompt, &self.params) {
            Ok(a) => a.trim_start().to_uppercase().starts_with("YES"),
            Err(e) => {
                tracing::warn!(error = %e, "judge call failed");
                false
            }
        }
    }
}

impl HallucinationJudge for LlmJudge<'_> {
    fn hallucinated(&self, response: &str) -> bool {
        !self.ask("Is every formula and herb named in the text a real, documented one?", &[("text", response)])
    }
}

impl ProfessionalismJudge for LlmJudge<'_> {
    fn professional(&self, sentence: &str) -> bool {
        self.ask("Does the sentence use professional TCM terminology correctly?", &[("text", sentence)])
    }
}

impl CoherenceJudge for LlmJudge<'_> {
    fn coherent(&self, first: &str, second: &str) -> bool {
        self.ask("Does the second sentence follow logically from the first?", &[("first", first), ("second", second)])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clients::StubGenerator;
    use crate::kg::build_graph;
    use crate::kg::tests::ex;

    fn judge() -> KgJudge {
        KgJudge::new(
            build_graph(&[ex(
                0,
                &[
                    ("halloysite decoction", Category::RecommendedFormula),
                    ("coptis", Category::HerbalIngredient),
                    ("bloody stools", Category::SymptomsPopulation),
                ],
                &[
                    ("halloysite decoction", "contains_minister", "coptis"),
                    ("halloysite decoction", "indicated_for", "bloody stools"),
                ],
            )])
            .unwrap(),
        )
    }

    #[test]
    fn formula_mentions_need_capitals() {
        let m = KgJudge::formula_mentions("Use Great Halloysite Decoction. A TCM formula helps.");
        let want = ["Use Great Halloysite Decoction", "Great Halloysite Decoction", "Halloysite Decoction"];
        assert_eq!(m, vec![want.map(String::from).to_vec()]);
    }

    #[test]
    fn hallucination() {
        let j = judge();
        assert!(!j.hallucinated("[Recommended Formulas] Halloysite Decoction\n[Herbal Components] Coptis (minister)"));
        assert!(j.hallucinated("Take Dragon Pearl Pill."));
        assert!(j.hallucinated("[Herbal Components] Unicorn Horn (sovereign)"));
        assert!(!j.hallucinated("No named remedies here."));
    }

    #[test]
    fn facts_and_coherence() {
        let j = judge();
        let ts = j.assertions("Halloysite Decoction contains Coptis. Coptis treats bloody stools.");
        assert_eq!(ts.len(), 2);
        assert!(j.supported(&ts[0]));
        assert!(!j.supported(&ts[1]));
        assert!(j.coherent("Coptis is bitter.", "Coptis clears heat."));
        assert!(!j.coherent("Coptis is bitter.", "Rest well."));
    }

    #[test]
    fn glossary_and_llm_plumbing() {
        let g = Glossary::bundled();
        assert!(g.professional("Wiry pulse with a thin coating."));
        assert!(!g.professional("Please rest well."));
        let gen = StubGenerator::new();
        let l = LlmJudge { generator: &gen, params: GenerationParams::default() };
        assert!(!l.hallucinated("anything"));
        assert!(l.coherent("a", "b"));
    }
}
