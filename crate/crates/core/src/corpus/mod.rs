//! Formula records: JSONL ingestion, validation, rendering and chunking.

pub mod tokenizer;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::taxonomy::{Category, ConflictTag, Role};
pub use tokenizer::{Tokenizer, WhitespaceCjkTokenizer};

pub const MIN_CHUNK_SIZE: usize = 16;
pub const DEFAULT_CHUNK_SIZE: usize = 512;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: invalid JSON: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: field `{field}`: {message}")]
    Schema { field: String, line: usize, message: String },
    #[error("corpus contains no records")]
    EmptyCorpus,
    #[error("chunk size {0} is below the minimum of {MIN_CHUNK_SIZE}")]
    InvalidChunkSize(usize),
    #[error("malformed rendered record: {0}")]
    Rendered(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ingredient {
    pub name: String,
    #[serde(default, skip_serializing_if = "is_unassigned")]
    pub role: Role,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dose: Option<String>,
}

fn is_unassigned(r: &Role) -> bool {
    *r == Role::Unassigned
}

/// One disease/formula entry with its seven elements.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormulaRecord {
    pub disease: String,
    #[serde(rename = "formula")]
    pub recommended_formula: String,
    #[serde(rename = "ingredients")]
    pub herbal_ingredients: Vec<Ingredient>,
    #[serde(rename = "symptoms")]
    pub symptoms_population: String,
    pub pulse_tongue: String,
    pub contraindications: String,
    pub preparation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conflict_tag: Option<ConflictTag>,
}

const STRING_FIELDS: [&str; 6] =
    ["disease", "formula", "symptoms", "pulse_tongue", "contraindications", "preparation"];

impl FormulaRecord {
    /// Checks the invariants that serde alone cannot express.
    pub fn validate(&self, line: usize) -> Result<(), CorpusError> {
        let schema = |field: &str, message: &str| CorpusError::Schema {
            field: field.to_string(),
            line,
            message: message.to_string(),
        };
        if self.disease.trim().is_empty() {
            return Err(schema("disease", "must be non-empty"));
        }
        if self.recommended_formula.trim().is_empty() {
            return Err(schema("formula", "must be non-empty"));
        }
        if self.herbal_ingredients.is_empty() {
            return Err(schema("ingredients", "must list at least one herb"));
        }
        if self.herbal_ingredients.iter().any(|i| i.name.trim().is_empty()) {
            return Err(schema("ingredients.name", "must be non-empty"));
        }
        let any_assigned = self.herbal_ingredients.iter().any(|i| i.role != Role::Unassigned);
        let has_sovereign = self.herbal_ingredients.iter().any(|i| i.role == Role::Sovereign);
        if any_assigned && !has_sovereign {
            return Err(schema("ingredients.role", "roles are assigned but no herb is sovereign"));
        }
        Ok(())
    }

    /// Parses and validates one JSON line (1-based `line` for messages).
    pub fn from_json_line(text: &str, line: usize) -> Result<FormulaRecord, CorpusError> {
        let v: Value = serde_json::from_str(text)
            .map_err(|e| CorpusError::Parse { line, message: e.to_string() })?;
        let obj = v.as_object().ok_or_else(|| CorpusError::Schema {
            field: "<root>".into(),
            line,
            message: "expected a JSON object".into(),
        })?;
        for f in STRING_FIELDS {
            match obj.get(f) {
                Some(Value::String(_)) => {}
                Some(_) => {
                    return Err(CorpusError::Schema { field: f.into(), line, message: "expected a string".into() })
                }
                None => return Err(CorpusError::Schema { field: f.into(), line, message: "missing".into() }),
            }
        }
        match obj.get("ingredients") {
            Some(Value::Array(items)) => {
                for it in items {
                    if !it.get("name").is_some_and(Value::is_string) {
                        return Err(CorpusError::Schema {
                            field: "ingredients.name".into(),
                            line,
                            message: "each ingredient needs a string name".into(),
                        });
                    }
                }
            }
            Some(_) => {
                return Err(CorpusError::Schema {
                    field: "ingredients".into(),
                    line,
                    message: "expected an array".into(),
                })
            }
            None => {
                return Err(CorpusError::Schema { field: "ingredients".into(), line, message: "missing".into() })
            }
        }
        let rec: FormulaRecord = serde_json::from_value(v).map_err(|e| {
            let msg = e.to_string();
            let field = if msg.contains("role") {
                "ingredients.role"
            } else if msg.contains("conflict") {
                "conflict_tag"
            } else {
                "<record>"
            };
            CorpusError::Schema { field: field.into(), line, message: msg }
        })?;
        rec.validate(line)?;
        Ok(rec)
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("record serialises")
    }

    fn herb_text(i: &Ingredient) -> String {
        match (i.role, &i.dose) {
            (Role::Unassigned, None) => i.name.clone(),
            (r, None) => format!("{} ({})", i.name, r.key()),
            (r, Some(d)) => format!("{} ({}, {})", i.name, r.key(), d),
        }
    }

    /// Plain-text document with one labelled line per element, in category order.
    pub fn render_document(&self) -> String {
        let herbs: Vec<String> = self.herbal_ingredients.iter().map(Self::herb_text).collect();
        let values = [
            self.disease.as_str(),
            self.recommended_formula.as_str(),
            &herbs.join("; "),
            self.symptoms_population.as_str(),
            self.pulse_tongue.as_str(),
            self.contraindications.as_str(),
            self.preparation.as_str(),
        ];
        Category::KNOWN
            .iter()
            .zip(values)
            .map(|(c, v)| format!("[{}] {}", c.title(), v))
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// Inverse of [`FormulaRecord::render_document`]. The conflict tag is not rendered.
    pub fn from_rendered(text: &str) -> Result<FormulaRecord, CorpusError> {
        let mut vals: [Option<String>; 7] = Default::default();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let s = crate::text::parse_header_line(line)
                .ok_or_else(|| CorpusError::Rendered(format!("line without header: {line:?}")))?;
            let c = Category::from_title(&s.header)
                .ok_or_else(|| CorpusError::Rendered(format!("unknown header {:?}", s.header)))?;
            let slot = &mut vals[c.ordinal()];
            if slot.is_some() {
                return Err(CorpusError::Rendered(format!("duplicate header {:?}", s.header)));
            }
            *slot = Some(s.body);
        }
        let mut take = |c: Category| {
            vals[c.ordinal()]
                .take()
                .ok_or_else(|| CorpusError::Rendered(format!("missing header {:?}", c.title())))
        };
        let disease = take(Category::Disease)?;
        let formula = take(Category::RecommendedFormula)?;
        let herbs = take(Category::HerbalIngredient)?;
        let rec = FormulaRecord {
            disease,
            recommended_formula: formula,
            herbal_ingredients: herbs
                .split("; ")
                .filter(|s| !s.trim().is_empty())
                .map(parse_herb)
                .collect::<Result<_, _>>()?,
            symptoms_population: take(Category::SymptomsPopulation)?,
            pulse_tongue: take(Category::PulseTongue)?,
            contraindications: take(Category::Contraindication)?,
            preparation: take(Category::PreparationMethod)?,
            conflict_tag: None,
        };
        rec.validate(0)?;
        Ok(rec)
    }

    /// Herb names with an assigned role, grouped by role.
    pub fn herbs_with_role(&self, role: Role) -> impl Iterator<Item = &str> {
        self.herbal_ingredients.iter().filter(move |i| i.role == role).map(|i| i.name.as_str())
    }
}

fn parse_herb(item: &str) -> Result<Ingredient, CorpusError> {
    let item = item.trim();
    let Some(open) = item.rfind(" (") else {
        return Ok(Ingredient { name: item.to_string(), role: Role::Unassigned, dose: None });
    };
    let inner = item[open + 2..]
        .strip_suffix(')')
        .ok_or_else(|| CorpusError::Rendered(format!("unbalanced herb annotation {item:?}")))?;
    let (role, dose) = match inner.split_once(", ") {
        Some((r, d)) => (r, Some(d.to_string())),
        None => (inner, None),
    };
    let role: Role = role.parse().map_err(|e| CorpusError::Rendered(format!("{e}")))?;
    Ok(Ingredient { name: item[..open].to_string(), role, dose })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub records: Vec<FormulaRecord>,
    pub provenance: Vec<SourceDigest>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Corpus {
    /// Parses JSONL text; blank lines are skipped.
    pub fn from_jsonl_str(text: &str) -> Result<Corpus, CorpusError> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            records.push(FormulaRecord::from_json_line(line, i + 1)?);
        }
        if records.is_empty() {
            return Err(CorpusError::EmptyCorpus);
        }
        Ok(Corpus { records, provenance: Vec::new() })
    }

    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for r in &self.records {
            s.push_str(&r.to_json_line());
            s.push('\n');
        }
        s
    }

    pub fn digest(&self) -> String {
        sha256_hex(self.to_jsonl().as_bytes())
    }
}

/// Reads and validates a JSONL corpus file.
pub fn load_corpus(path: &Path) -> Result<Corpus, CorpusError> {
    let bytes = fs::read(path).map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|e| CorpusError::Parse { line: 0, message: format!("not UTF-8: {e}") })?;
    let mut corpus = Corpus::from_jsonl_str(&text)?;
    corpus.provenance.push(SourceDigest { path: path.display().to_string(), sha256: sha256_hex(&bytes) });
    Ok(corpus)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: usize,
    pub source_record_id: usize,
    /// Token index range `[start, end)` within the rendered record.
    pub token_span: (usize, usize),
    pub text: String,
    pub token_count: usize,
}

/// Splits each rendered record into windows of at most `chunk_size` tokens.
/// A chunk's text runs from its first token up to the next chunk's first
/// token, so joining a record's chunks reproduces the rendered document.
pub fn chunk(corpus: &Corpus, chunk_size: usize, tokenizer: &dyn Tokenizer) -> Result<Vec<Chunk>, CorpusError> {
    if chunk_size < MIN_CHUNK_SIZE {
        return Err(CorpusError::InvalidChunkSize(chunk_size));
    }
    if corpus.records.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let mut out = Vec::new();
    for (rid, rec) in corpus.records.iter().enumerate() {
        let doc = rec.render_document();
        let spans = tokenizer.token_spans(&doc);
        let n = spans.len();
        let mut start = 0;
        while start < n {
            let end = (start + chunk_size).min(n);
            let byte_start = if start == 0 { 0 } else { spans[start].0 };
            let byte_end = if end == n { doc.len() } else { spans[end].0 };
            out.push(Chunk {
                chunk_id: out.len(),
                source_record_id: rid,
                token_span: (start, end),
                text: doc[byte_start..byte_end].to_string(),
                token_count: end - start,
            });
            start = end;
        }
    }
    Ok(out)
}
