//! Prompt envelope shared by every generator call.
//!
//! ```text
//! ### ROLE: MAP
//! <instructions>
//! ### INPUT
//! <<query>>
//! ...
//! <<summary>>
//! ...
//! ```
//! Remote models see the same text; the stub dispatches on the role line.

use std::fmt;
use std::str::FromStr;

pub const ROLE_PREFIX: &str = "### ROLE: ";
pub const INPUT_MARKER: &str = "### INPUT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PromptRole {
    Extract,
    Summarize,
    Map,
    Reduce,
    Expand,
    Answer,
    Pair,
    Judge,
}

impl PromptRole {
    pub fn tag(self) -> &'static str {
        match self {
            PromptRole::Extract => "EXTRACT",
            PromptRole::Summarize => "SUMMARIZE",
            PromptRole::Map => "MAP",
            PromptRole::Reduce => "REDUCE",
            PromptRole::Expand => "EXPAND",
            PromptRole::Answer => "ANSWER",
            PromptRole::Pair => "PAIR",
            PromptRole::Judge => "JUDGE",
        }
    }
}

impl fmt::Display for PromptRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for PromptRole {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Ok(match s.trim() {
            "EXTRACT" => PromptRole::Extract,
            "SUMMARIZE" => PromptRole::Summarize,
            "MAP" => PromptRole::Map,
            "REDUCE" => PromptRole::Reduce,
            "EXPAND" => PromptRole::Expand,
            "ANSWER" => PromptRole::Answer,
            "PAIR" => PromptRole::Pair,
            "JUDGE" => PromptRole::Judge,
            _ => return Err(()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    pub role: PromptRole,
    pub instructions: String,
    pub payload: String,
}

impl Prompt {
    pub fn new(role: PromptRole, instructions: impl Into<String>, payload: impl Into<String>) -> Self {
        Self { role, instructions: instructions.into(), payload: payload.into() }
    }

    pub fn render(&self) -> String {
        format!(
            "{ROLE_PREFIX}{}\n{}\n{INPUT_MARKER}\n{}",
            self.role,
            self.instructions.trim_end(),
            self.payload
        )
    }

    /// Inverse of [`Prompt::render`]. Returns `None` when the envelope is absent.
    pub fn parse(text: &str) -> Option<Prompt> {
        let rest = text.strip_prefix(ROLE_PREFIX)?;
        let (role_line, rest) = rest.split_once('\n')?;
        let role = role_line.parse().ok()?;
        let marker = format!("\n{INPUT_MARKER}\n");
        let (instructions, payload) = match rest.find(&marker) {
            Some(i) => (&rest[..i], &rest[i + marker.len()..]),
            None => {
                let m = format!("{INPUT_MARKER}\n");
                let p = rest.strip_prefix(&m)?;
                ("", p)
            }
        };
        Some(Prompt { role, instructions: instructions.to_string(), payload: payload.to_string() })
    }
}

/// Renders named payload fields. Keys may repeat.
pub fn fields<K: AsRef<str>, V: AsRef<str>>(items: &[(K, V)]) -> String {
    let mut out = String::new();
    for (k, v) in items {
        out.push_str("<<");
        out.push_str(k.as_ref());
        out.push_str(">>\n");
        out.push_str(v.as_ref().trim_end_matches('\n'));
        out.push('\n');
    }
    out
}

/// Parses output of [`fields`]. Text before the first marker is dropped.
pub fn parse_fields(payload: &str) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = Vec::new();
    for line in payload.lines() {
        let t = line.trim_end();
        if let Some(key) = t.strip_prefix("<<").and_then(|r| r.strip_suffix(">>")) {
            if !key.is_empty() && !key.contains(['<', '>']) {
                out.push((key.to_string(), String::new()));
                continue;
            }
        }
        if let Some((_, v)) = out.last_mut() {
            if !v.is_empty() {
                v.push('\n');
            }
            v.push_str(line);
        }
    }
    out
}

/// First value for `key`.
pub fn field<'a>(fields: &'a [(String, String)], key: &str) -> Option<&'a str> {
    fields.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
}
