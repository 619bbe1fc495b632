//! Shared lexical helpers: name normalisation, sentence splitting, bracketed
//! sections and the small relation grammar used by extraction and by metrics.

use crate::taxonomy::Category;

/// Trim, case-fold and collapse internal whitespace.
pub fn normalize_name(s: &str) -> String {
    s.split_whitespace().map(|w| w.to_lowercase()).collect::<Vec<_>>().join(" ")
}

/// True for CJK ideographs, CJK punctuation and fullwidth forms.
pub fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3000..=0x303F
        | 0x3400..=0x4DBF
        | 0x4E00..=0x9FFF
        | 0xF900..=0xFAFF
        | 0xFF00..=0xFFEF
        | 0x20000..=0x2A6DF)
}

/// Splits on sentence-final punctuation (ASCII and CJK) and newlines.
/// Decimal points such as `2.5` do not end a sentence.
pub fn split_sentences(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut cur = String::new();
    for (i, &c) in chars.iter().enumerate() {
        let terminal = match c {
            '\n' | '。' | '！' | '？' | '!' | '?' => true,
            '.' => {
                let prev_digit = i > 0 && chars[i - 1].is_ascii_digit();
                let next_digit = chars.get(i + 1).is_some_and(|n| n.is_ascii_digit());
                !(prev_digit && next_digit)
            }
            _ => false,
        };
        if terminal {
            if c != '\n' {
                cur.push(c);
            }
            let t = cur.trim();
            if !t.is_empty() {
                out.push(t.to_string());
            }
            cur.clear();
        } else {
            cur.push(c);
        }
    }
    let t = cur.trim();
    if !t.is_empty() {
        out.push(t.to_string());
    }
    out
}

/// A `[Header] body` line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Section {
    pub header: String,
    pub body: String,
}

/// Parses a leading `[Header]` off a single line.
pub fn parse_header_line(line: &str) -> Option<Section> {
    let t = line.trim_start();
    let rest = t.strip_prefix('[')?;
    let close = rest.find(']')?;
    let header = rest[..close].trim();
    if header.is_empty() {
        return None;
    }
    Some(Section { header: header.to_string(), body: rest[close + 1..].trim().to_string() })
}

/// Groups text into bracketed sections. A header line opens a section and
/// following lines without a header are appended to its body. Text before the
/// first header is returned under an empty header.
pub fn sections(text: &str) -> Vec<Section> {
    let mut out: Vec<Section> = Vec::new();
    for line in text.lines() {
        if let Some(s) = parse_header_line(line) {
            out.push(s);
        } else if !line.trim().is_empty() {
            match out.last_mut() {
                Some(last) => {
                    if !last.body.is_empty() {
                        last.body.push('\n');
                    }
                    last.body.push_str(line.trim());
                }
                None => out.push(Section { header: String::new(), body: line.trim().to_string() }),
            }
        }
    }
    out
}

/// Name endings that mark a formula rather than a single herb.
pub const FORMULA_SUFFIXES: [&str; 8] =
    ["decoction", "pill", "pills", "powder", "tea", "soup", "formula", "granule"];

pub fn looks_like_formula(name: &str) -> bool {
    let n = normalize_name(name);
    n.rsplit(' ').next().is_some_and(|last| FORMULA_SUFFIXES.contains(&last))
}

/// A verb phrase the grammar recognises, with the categories it implies.
#[derive(Debug, Clone, Copy)]
pub struct RelationVerb {
    pub phrase: &'static str,
    pub label: &'static str,
    /// Category for the subject when it does not look like a formula.
    pub subject: Category,
    pub object: Category,
}

/// Longest phrases first so `is contraindicated in` wins over shorter overlaps.
pub const RELATION_LEXICON: [RelationVerb; 9] = [
    RelationVerb {
        phrase: "is contraindicated in",
        label: "contraindicated_for",
        subject: Category::HerbalIngredient,
        object: Category::Contraindication,
    },
    RelationVerb {
        phrase: "is indicated for",
        label: "indicated_for",
        subject: Category::HerbalIngredient,
        object: Category::SymptomsPopulation,
    },
    RelationVerb {
        phrase: "is prepared by",
        label: "prepared_by",
        subject: Category::HerbalIngredient,
        object: Category::PreparationMethod,
    },
    RelationVerb {
        phrase: "presents with",
        label: "presents_with",
        subject: Category::Disease,
        object: Category::PulseTongue,
    },
    RelationVerb {
        phrase: "indicated for",
        label: "indicated_for",
        subject: Category::HerbalIngredient,
        object: Category::SymptomsPopulation,
    },
    RelationVerb {
        phrase: "contains",
        label: "contains",
        subject: Category::RecommendedFormula,
        object: Category::HerbalIngredient,
    },
    RelationVerb {
        phrase: "relieves",
        label: "relieves",
        subject: Category::HerbalIngredient,
        object: Category::SymptomsPopulation,
    },
    RelationVerb {
        phrase: "treats",
        label: "treats",
        subject: Category::HerbalIngredient,
        object: Category::Disease,
    },
    RelationVerb {
        phrase: "treat",
        label: "treats",
        subject: Category::HerbalIngredient,
        object: Category::Disease,
    },
];

/// A `subject verb object` assertion found in free text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Triple {
    pub subject: String,
    pub subject_category: Category,
    pub label: String,
    pub object: String,
    pub object_category: Category,
}

/// Matches one sentence against the relation lexicon. Surface names are kept
/// as written, minus surrounding punctuation.
pub fn parse_triple(sentence: &str) -> Option<Triple> {
    let s = sentence.trim().trim_end_matches(['.', '。', '!', '?', ';', '；']).trim();
    let lower = s.to_lowercase();
    for verb in RELATION_LEXICON {
        let needle = format!(" {} ", verb.phrase);
        if let Some(pos) = lower.find(&needle) {
            // `to_lowercase` can change byte lengths for non-ASCII text; only
            // slice the original when the lengths line up.
            let (subj, obj) = if lower.len() == s.len() {
                (&s[..pos], &s[pos + needle.len()..])
            } else {
                (&lower[..pos], &lower[pos + needle.len()..])
            };
            let subj = subj.trim().trim_matches(|c: char| c == ',' || c == ':').trim();
            let obj = obj.trim().trim_matches(|c: char| c == ',' || c == ':').trim();
            if subj.is_empty() || obj.is_empty() {
                return None;
            }
            let subject_category = if verb.subject == Category::Disease {
                Category::Disease
            } else if looks_like_formula(subj) {
                Category::RecommendedFormula
            } else {
                verb.subject
            };
            return Some(Triple {
                subject: subj.to_string(),
                subject_category,
                label: verb.label.to_string(),
                object: obj.to_string(),
                object_category: verb.object,
            });
        }
    }
    None
}

/// All triples across the sentences of `text`.
pub fn parse_triples(text: &str) -> Vec<Triple> {
    split_sentences(text).iter().filter_map(|s| parse_triple(s)).collect()
}

/// Relation label normal form: lowercase, underscores for spaces.
pub fn normalize_label(label: &str) -> String {
    label.split_whitespace().map(|w| w.to_lowercase()).collect::<Vec<_>>().join("_")
}
