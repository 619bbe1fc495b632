//! Deterministic offline clients.
//!
//! The encoder hashes character trigrams into a fixed number of signed buckets.
//! The generator dispatches on the prompt role and fills fixed templates, so
//! every pipeline stage can run without a network and give byte-identical
//! output across runs.

use std::collections::BTreeSet;

use super::prompt::{field, parse_fields, Prompt, PromptRole};
use super::{ClientError, Encoder, GenerationParams, Generator};
use crate::taxonomy::{Category, Role};
use crate::text::{self, parse_header_line, split_sentences};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hashed character-trigram encoder. Output vectors are L2-normalised.
#[derive(Debug, Clone)]
pub struct StubEncoder {
    dimension: usize,
    seed: u64,
    id: String,
}

impl StubEncoder {
    pub fn new(dimension: usize, seed: u64) -> Self {
        assert!(dimension > 0, "encoder dimension must be positive");
        Self { dimension, seed, id: format!("stub-trigram-{dimension}-{seed}") }
    }
}

impl Encoder for StubEncoder {
    fn name(&self) -> &str {
        &self.id
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn encode(&self, text: &str) -> Result<Vec<f64>, ClientError> {
        let norm = text::normalize_name(text);
        if norm.is_empty() {
            return Err(ClientError::InvalidInput("cannot encode empty text".into()));
        }
        let mut chars: Vec<char> = Vec::with_capacity(norm.chars().count() + 2);
        chars.push('\u{2}');
        chars.extend(norm.chars());
        chars.push('\u{3}');
        let mut v = vec![0.0f64; self.dimension];
        let mut buf = [0u8; 12];
        for w in chars.windows(3) {
            let mut n = 0;
            for c in w {
                n += c.encode_utf8(&mut buf[n..]).len();
            }
            let h = splitmix(fnv1a(self.seed, &buf[..n]));
            let bucket = (h % self.dimension as u64) as usize;
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            v[bucket] += sign;
        }
        let norm2 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm2 > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm2);
        } else {
            // Every trigram cancelled out; fall back to a fixed unit vector.
            v[0] = 1.0;
        }
        Ok(v)
    }
}

/// Template generator keyed on the prompt role.
#[derive(Debug, Clone, Default)]
pub struct StubGenerator {
    /// Makes PAIR responses return two identical candidates.
    pub degenerate_pairs: bool,
}

impl StubGenerator {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Generator for StubGenerator {
    fn name(&self) -> &str {
        "stub-template"
    }

    fn generate(&self, prompt: &str, _params: &GenerationParams) -> Result<String, ClientError> {
        let p = Prompt::parse(prompt)
            .ok_or_else(|| ClientError::InvalidInput("prompt lacks a role header".into()))?;
        let out = match p.role {
            PromptRole::Extract => extract(&p.payload),
            PromptRole::Summarize => summarize(&p.payload),
            PromptRole::Map => map(&p.payload),
            PromptRole::Reduce => reduce(&p.payload),
            PromptRole::Expand => expand(&p.payload),
            PromptRole::Answer => answer(&p.payload),
            PromptRole::Pair => pair(&p.payload, self.degenerate_pairs),
            PromptRole::Judge => "YES".to_string(),
        };
        Ok(out)
    }
}

#[derive(Default)]
struct ExtractOut {
    lines: Vec<String>,
    seen: BTreeSet<String>,
}

impl ExtractOut {
    fn push(&mut self, line: String) {
        if self.seen.insert(line.clone()) {
            self.lines.push(line);
        }
    }
    fn entity(&mut self, name: &str, c: Category) {
        self.push(format!("ENTITY|{name}|{}", c.key()));
    }
    fn relation(&mut self, src: &str, label: &str, dst: &str) {
        self.push(format!("RELATION|{src}|{label}|{dst}"));
    }
}

/// Splits `Name (role, dose)` into the name and an optional role.
pub fn split_herb_item(item: &str) -> (String, Option<Role>) {
    let item = item.trim();
    if let Some(open) = item.find('(') {
        let name = item[..open].trim().to_string();
        let inner = item[open + 1..].trim_end_matches(')');
        let role = inner.split(',').next().and_then(|r| r.trim().parse::<Role>().ok());
        (name, role)
    } else {
        (item.to_string(), None)
    }
}

fn list_items(c: Category, body: &str) -> Vec<String> {
    let clean = |s: &str| s.trim().trim_end_matches('.').trim().to_string();
    match c {
        Category::Disease | Category::RecommendedFormula => {
            let b = clean(body);
            if b.is_empty() { vec![] } else { vec![b] }
        }
        Category::HerbalIngredient => {
            body.split(';').map(clean).filter(|s| !s.is_empty()).collect()
        }
        _ => body.split([';', ',', '；', '，']).map(clean).filter(|s| !s.is_empty()).collect(),
    }
}

fn anchor_label(c: Category, role: Option<Role>) -> Option<String> {
    Some(match c {
        Category::Disease => "treats".to_string(),
        Category::HerbalIngredient => match role {
            Some(r) if r != Role::Unassigned => format!("contains_{}", r.key()),
            _ => "contains".to_string(),
        },
        Category::SymptomsPopulation => "indicated_for".to_string(),
        Category::PulseTongue => "presents_with".to_string(),
        Category::Contraindication => "contraindicated_for".to_string(),
        Category::PreparationMethod => "prepared_by".to_string(),
        _ => return None,
    })
}

fn extract(payload: &str) -> String {
    let mut out = ExtractOut::default();
    let mut headed: Vec<(Category, Vec<(String, Option<Role>)>)> = Vec::new();
    let mut free = String::new();
    for line in payload.lines() {
        match parse_header_line(line).and_then(|s| Category::from_title(&s.header).map(|c| (c, s.body))) {
            Some((c, body)) => {
                let items: Vec<(String, Option<Role>)> = list_items(c, &body)
                    .into_iter()
                    .map(|it| if c == Category::HerbalIngredient { split_herb_item(&it) } else { (it, None) })
                    .filter(|(n, _)| !n.is_empty())
                    .collect();
                headed.push((c, items));
            }
            None => {
                free.push_str(line);
                free.push('\n');
            }
        }
    }

    let anchor = headed
        .iter()
        .find(|(c, items)| *c == Category::RecommendedFormula && !items.is_empty())
        .or_else(|| headed.iter().find(|(c, items)| *c == Category::Disease && !items.is_empty()))
        .map(|(c, items)| (*c, items[0].0.clone()));

    for (c, items) in &headed {
        for (name, _) in items {
            out.entity(name, *c);
        }
    }
    for (c, items) in &headed {
        if let Some((ac, aname)) = &anchor {
            if c != ac {
                for (name, role) in items {
                    let label = if *ac == Category::Disease {
                        // Without a formula, hang everything off the disease.
                        Some("associated_with".to_string())
                    } else {
                        anchor_label(*c, *role)
                    };
                    if let Some(l) = label {
                        out.relation(aname, &l, name);
                    }
                }
            }
        }
        for w in items.windows(2) {
            out.relation(&w[0].0, "co_occurs_with", &w[1].0);
        }
    }

    for sentence in split_sentences(&free) {
        if let Some(t) = text::parse_triple(&sentence) {
            out.entity(&t.subject, t.subject_category);
            out.entity(&t.object, t.object_category);
            out.relation(&t.subject, &t.label, &t.object);
        }
    }

    if out.lines.is_empty() {
        "NONE".to_string()
    } else {
        out.lines.join("\n")
    }
}

fn summarize(payload: &str) -> String {
    let f = parse_fields(payload);
    let cat: Category = field(&f, "category").and_then(|c| c.trim().parse().ok()).unwrap_or_default();
    let members: Vec<(String, Option<Role>)> = field(&f, "members")
        .unwrap_or("")
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| match l.split_once('|') {
            Some((n, r)) => (n.trim().to_string(), r.parse().ok()),
            None => (l.trim().to_string(), None),
        })
        .collect();
    let mut s = format!("[{}] {}.", cat.title(), cat.description());
    if cat == Category::HerbalIngredient {
        for role in Role::ASSIGNED {
            let names: Vec<&str> =
                members.iter().filter(|(_, r)| *r == Some(role)).map(|(n, _)| n.as_str()).collect();
            if !names.is_empty() {
                s.push_str(&format!(" {}: {}.", role.display_name(), names.join(", ")));
            }
        }
    }
    if members.is_empty() {
        s.push_str(" No member entities.");
    } else {
        let names: Vec<&str> = members.iter().map(|(n, _)| n.as_str()).collect();
        s.push_str(&format!(" Members: {}.", names.join(", ")));
    }
    s
}

/// Drops a leading `[Header]` so section headers are not duplicated downstream.
fn strip_header(s: &str) -> &str {
    let t = s.trim_start();
    if t.starts_with('[') {
        if let Some(i) = t.find(']') {
            return t[i + 1..].trim_start();
        }
    }
    t
}

fn map(payload: &str) -> String {
    let f = parse_fields(payload);
    let summary = field(&f, "summary").unwrap_or("").trim();
    let body = strip_header(summary);
    if body.is_empty() {
        "No relevant information in this community.".to_string()
    } else {
        body.to_string()
    }
}

fn reduce(payload: &str) -> String {
    let f = parse_fields(payload);
    let mut parts = Vec::new();
    for (k, v) in &f {
        if k != "local" {
            continue;
        }
        let (first, rest) = v.split_once('\n').unwrap_or((v.as_str(), ""));
        let cat: Category = first
            .trim()
            .strip_prefix("category:")
            .and_then(|c| c.trim().parse().ok())
            .unwrap_or_default();
        parts.push(format!("[{}] {}", cat.title(), rest.trim()));
    }
    parts.join("\n")
}

fn expand(payload: &str) -> String {
    let f = parse_fields(payload);
    field(&f, "symptoms").unwrap_or(payload).trim().to_string()
}

/// Seven-section answer built from retrieved text; sections absent from the
/// evidence get a placeholder.
fn compose_sections(retrieved: &[&str], limit: usize) -> (String, usize) {
    let mut lines = Vec::new();
    let mut found = 0;
    for c in Category::KNOWN.into_iter().take(limit) {
        let body = retrieved.iter().find_map(|r| {
            text::sections(r)
                .into_iter()
                .find(|s| Category::from_title(&s.header) == Some(c) && !s.body.trim().is_empty())
                .map(|s| s.body.replace('\n', " "))
        });
        match body {
            Some(b) => {
                found += 1;
                lines.push(format!("[{}] {}", c.title(), b));
            }
            None => lines.push(format!("[{}] No retrieved evidence for this element.", c.title())),
        }
    }
    (lines.join("\n"), found)
}

fn answer(payload: &str) -> String {
    let f = parse_fields(payload);
    let retrieved: Vec<&str> = f.iter().filter(|(k, _)| k == "retrieved").map(|(_, v)| v.as_str()).collect();
    compose_sections(&retrieved, Category::KNOWN.len()).0
}

fn pair(payload: &str, degenerate: bool) -> String {
    // Inputs built by the dataset module carry the evidence after a [RETRIEVED] line.
    let evidence = payload.split_once("[RETRIEVED]").map(|(_, r)| r).unwrap_or(payload);
    let (full, found_full) = compose_sections(&[evidence], Category::KNOWN.len());
    let (short, found_short) = compose_sections(&[evidence], 2);
    let total = Category::KNOWN.len() as f64;
    let score_full = (found_full as f64 + 1.0) / (total + 1.0);
    let score_short = found_short as f64 / (total + 1.0);
    if degenerate {
        return format!("[CANDIDATE 1]\nscore: {score_full:.4}\n{full}\n[CANDIDATE 2]\nscore: {score_short:.4}\n{full}");
    }
    format!("[CANDIDATE 1]\nscore: {score_short:.4}\n{short}\n[CANDIDATE 2]\nscore: {score_full:.4}\n{full}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clients::prompt::fields;
    use crate::clients::{encode, generate_scored_pair};

    fn call(role: PromptRole, payload: &str) -> String {
        StubGenerator::new()
            .generate(&Prompt::new(role, "do it", payload).render(), &GenerationParams::default())
            .unwrap()
    }

    #[test]
    fn encoder_is_deterministic_and_normalised() {
        let e = StubEncoder::new(64, 7);
        let a = encode(&e, "spleen deficiency with loose stools").unwrap();
        let b = encode(&e, "spleen deficiency with loose stools").unwrap();
        assert_eq!(a, b);
        let n: f64 = a.iter().map(|x| x * x).sum();
        assert!((n - 1.0).abs() < 1e-12);
        let c = encode(&e, "qxz").unwrap();
        let cos: f64 = a.iter().zip(&c).map(|(x, y)| x * y).sum();
        assert!(cos < 0.99);
    }

    #[test]
    fn free_sentence_extraction() {
        let out = call(PromptRole::Extract, "Halloysite treats intestinal wind bleeding.");
        let lines: Vec<&str> = out.lines().collect();
        assert!(lines.contains(&"ENTITY|Halloysite|herbal_ingredient"));
        assert!(lines.contains(&"ENTITY|intestinal wind bleeding|disease"));
        assert!(lines.contains(&"RELATION|Halloysite|treats|intestinal wind bleeding"));
    }

    #[test]
    fn headed_lines_extract_roles() {
        let text = "[Recommended Formulas] Halloysite Decoction\n[Herbal Components] Halloysite (sovereign, 2 liang); Coptis (minister)";
        let out = call(PromptRole::Extract, text);
        assert!(out.contains("RELATION|Halloysite Decoction|contains_sovereign|Halloysite"));
        assert!(out.contains("RELATION|Halloysite|co_occurs_with|Coptis"));
        assert_eq!(call(PromptRole::Extract, "nothing relational here"), "NONE");
    }

    #[test]
    fn summary_lists_members_and_roles() {
        let payload = fields(&[("category", "herbal_ingredient"), ("members", "Coptis|minister\nHalloysite|sovereign")]);
        let s = call(PromptRole::Summarize, &payload);
        assert!(s.starts_with("[Herbal Components]"));
        assert!(s.contains("Monarch: Halloysite."));
        assert!(s.contains("Members: Coptis, Halloysite."));
    }

    #[test]
    fn reduce_keeps_local_order_with_headers() {
        let payload = fields(&[
            ("query", "q"),
            ("local", "category: disease\nchronic bleeding"),
            ("local", "category: preparation_method\nwine-frying"),
        ]);
        let s = call(PromptRole::Reduce, &payload);
        let d = s.find("[Disease] chronic bleeding").unwrap();
        let p = s.find("[Preparation Methods] wine-frying").unwrap();
        assert!(d < p);
    }

    #[test]
    fn answer_has_all_sections() {
        let payload = fields(&[("symptoms", "x"), ("retrieved", "[Disease] cough\n[Contraindications] pregnancy")]);
        let s = call(PromptRole::Answer, &payload);
        for c in Category::KNOWN {
            assert!(s.contains(&format!("[{}]", c.title())));
        }
        assert!(s.contains("[Disease] cough"));
    }

    #[test]
    fn pairs_prefer_fuller_template() {
        let g = StubGenerator::new();
        let p = generate_scored_pair(&g, "[SYMPTOMS]\nx\n[RETRIEVED]\n[Disease] cough", &GenerationParams::default())
            .unwrap();
        assert!(p.score_w > p.score_l);
        assert!(p.text_w.contains("[Preparation Methods]"));
        let d = StubGenerator { degenerate_pairs: true };
        assert_eq!(
            generate_scored_pair(&d, "[RETRIEVED]\n[Disease] c", &GenerationParams::default()),
            Err(ClientError::DegeneratePair)
        );
    }

    #[test]
    fn expand_echoes_symptoms() {
        assert_eq!(call(PromptRole::Expand, &fields(&[("symptoms", "dry cough")])), "dry cough");
    }
}
