//! Supervised and preference fine-tuning records, with JSONL export.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clients::{generate_scored_pair, ClientError, GenerationParams, Generator};
use crate::corpus::FormulaRecord;
use crate::taxonomy::ConflictTag;

/// Fixed instruction for every exported record.
pub const INSTRUCTION: &str = "Recommend a TCM formula and provide detailed explanations based on the symptoms";

pub const SYMPTOMS_MARKER: &str = "[SYMPTOMS]";
pub const RETRIEVED_MARKER: &str = "[RETRIEVED]";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Sft,
    Dpo,
}

impl std::str::FromStr for DatasetKind {
    type Err = DatasetError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sft" => Ok(DatasetKind::Sft),
            "dpo" => Ok(DatasetKind::Dpo),
            other => Err(DatasetError::InvalidInput(format!("unknown dataset kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SftRecord {
    pub instruction: String,
    pub input: String,
    pub output: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DpoRecord {
    pub instruction: String,
    pub input: String,
    pub chosen: String,
    pub rejected: String,
    pub score_w: f64,
    pub score_l: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConflictRecord {
    pub base: SftRecord,
    pub conflict_type: ConflictTag,
    pub warning_text: String,
}

/// `[SYMPTOMS]\n{x}\n[RETRIEVED]\n{c}`.
pub fn format_input(x: &str, c: &str) -> String {
    format!("{SYMPTOMS_MARKER}\n{x}\n{RETRIEVED_MARKER}\n{c}")
}

/// Recovers `(x, c)` from an input built by [`format_input`].
pub fn parse_input(input: &str) -> Option<(&str, &str)> {
    let rest = input.strip_prefix(SYMPTOMS_MARKER)?.strip_prefix('\n')?;
    // The first marker line after the symptoms; symptoms never contain it when built here.
    let sep = format!("\n{RETRIEVED_MARKER}\n");
    let at = rest.find(&sep)?;
    Some((&rest[..at], &rest[at + sep.len()..]))
}

fn require(name: &str, v: &str) -> Result<(), DatasetError> {
    if v.trim().is_empty() {
        return Err(DatasetError::InvalidInput(format!("{name} is empty")));
    }
    Ok(())
}

fn check_symptoms(x: &str) -> Result<(), DatasetError> {
    require("symptoms", x)?;
    if x.contains(&format!("\n{RETRIEVED_MARKER}\n")) {
        return Err(DatasetError::InvalidInput("symptoms contain the retrieved-context marker".into()));
    }
    Ok(())
}

pub fn build_sft_record(x: &str, c: &str, y: &str) -> Result<SftRecord, DatasetError> {
    check_symptoms(x)?;
    require("retrieved context", c)?;
    require("output", y)?;
    Ok(SftRecord { instruction: INSTRUCTION.to_string(), input: format_input(x, c), output: y.to_string() })
}

/// Asks the generator for two scored answers; the higher-scored one is `chosen`.
pub fn build_dpo_record(
    x: &str,
    c: &str,
    generator: &dyn Generator,
    params: &GenerationParams,
) -> Result<DpoRecord, DatasetError> {
    check_symptoms(x)?;
    require("retrieved context", c)?;
    let input = format_input(x, c);
    let pair = generate_scored_pair(generator, &input, params)?;
    Ok(DpoRecord {
        instruction: INSTRUCTION.to_string(),
        input,
        chosen: pair.text_w,
        rejected: pair.text_l,
        score_w: pair.score_w,
        score_l: pair.score_l,
    })
}

/// Caution appended to outputs of records that carry a conflict tag.
pub fn warning_text(tag: ConflictTag) -> &'static str {
    match tag {
        ConflictTag::TheoryDifference => {
            "Caution: schools of practice disagree about this presentation, so the recommendation \
             above reflects one line of reasoning. Compare it with a practitioner's own diagnosis."
        }
        ConflictTag::SourceConflict => {
            "Caution: the reference sources behind this answer disagree with each other. Check the \
             formula and doses against an authoritative text before use."
        }
        ConflictTag::PracticalProblem => {
            "Caution: availability, preparation or patient circumstances may make this formula hard \
             to apply as written. Adjust it under professional guidance."
        }
    }
}

pub fn build_conflict_record(x: &str, c: &str, y: &str, tag: ConflictTag) -> Result<ConflictRecord, DatasetError> {
    let warning = warning_text(tag);
    let output = if y.contains(warning) { y.to_string() } else { format!("{}\n\n{warning}", y.trim_end()) };
    Ok(ConflictRecord { base: build_sft_record(x, c, &output)?, conflict_type: tag, warning_text: warning.to_string() })
}

/// Ground-truth answer for a corpus record: its rendered seven elements,
/// plus the matching caution when the record is tagged as a conflict case.
pub fn ground_truth(rec: &FormulaRecord) -> String {
    let doc = rec.render_document();
    match rec.conflict_tag {
        Some(t) => format!("{doc}\n\n{}", warning_text(t)),
        None => doc,
    }
}

/// Homogeneous batch of records.
#[derive(Debug, Clone, PartialEq)]
pub enum Records {
    Sft(Vec<SftRecord>),
    Dpo(Vec<DpoRecord>),
}

impl Records {
    pub fn kind(&self) -> DatasetKind {
        match self {
            Records::Sft(_) => DatasetKind::Sft,
            Records::Dpo(_) => DatasetKind::Dpo,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Records::Sft(r) => r.len(),
            Records::Dpo(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_jsonl(&self) -> String {
        fn lines<T: Serialize>(rs: &[T]) -> String {
            rs.iter().map(|r| serde_json::to_string(r).expect("records serialize") + "\n").collect()
        }
        match self {
            Records::Sft(r) => lines(r),
            Records::Dpo(r) => lines(r),
        }
    }

    pub fn from_jsonl(text: &str, kind: DatasetKind) -> Result<Records, DatasetError> {
        fn parse<T: serde::de::DeserializeOwned>(text: &str) -> Result<Vec<T>, DatasetError> {
            text.lines()
                .enumerate()
                .filter(|(_, l)| !l.trim().is_empty())
                .map(|(i, l)| {
                    serde_json::from_str(l).map_err(|e| DatasetError::Parse { line: i + 1, message: e.to_string() })
                })
                .collect()
        }
        let recs = match kind {
            DatasetKind::Sft => Records::Sft(parse(text)?),
            DatasetKind::Dpo => Records::Dpo(parse(text)?),
        };
        recs.validate()?;
        Ok(recs)
    }

    /// Record invariants: the fixed instruction, non-empty fields, and for
    /// preference pairs distinct texts with `score_w ≥ score_l`.
    pub fn validate(&self) -> Result<(), DatasetError> {
        let bad = |i: usize, m: &str| DatasetError::Parse { line: i + 1, message: m.to_string() };
        match self {
            Records::Sft(rs) => {
                for (i, r) in rs.iter().enumerate() {
                    if r.instruction != INSTRUCTION {
                        return Err(bad(i, "instruction differs from the fixed text"));
                    }
                    if r.input.trim().is_empty() || r.output.trim().is_empty() {
                        return Err(bad(i, "empty input or output"));
                    }
                }
            }
            Records::Dpo(rs) => {
                for (i, r) in rs.iter().enumerate() {
                    if r.instruction != INSTRUCTION {
                        return Err(bad(i, "instruction differs from the fixed text"));
                    }
                    if r.chosen == r.rejected {
                        return Err(bad(i, "chosen equals rejected"));
                    }
                    if !(r.score_w >= r.score_l) {
                        return Err(bad(i, "score_w is below score_l"));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Writes `records` as JSONL. Empty batches are rejected.
pub fn export(records: &Records, path: &Path) -> Result<(), DatasetError> {
    if records.is_empty() {
        return Err(DatasetError::InvalidInput("no records to export".into()));
    }
    records.validate()?;
    let io = |source| DatasetError::Io { path: path.to_path_buf(), source };
    let mut f = std::fs::File::create(path).map_err(io)?;
    f.write_all(records.to_jsonl().as_bytes()).map_err(io)?;
    f.flush().map_err(io)
}

pub fn import(path: &Path, kind: DatasetKind) -> Result<Records, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io { path: path.to_path_buf(), source })?;
    Records::from_jsonl(&text, kind)
}
