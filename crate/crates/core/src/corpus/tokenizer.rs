//! Tokenizers used for chunking.

use crate::text::is_cjk;

pub trait Tokenizer: Send + Sync {
    /// Recorded in the workspace manifest so chunk spans can be reproduced.
    fn id(&self) -> &str;
    /// Byte ranges of tokens in `text`, in order and non-overlapping.
    fn token_spans(&self, text: &str) -> Vec<(usize, usize)>;
}

/// Whitespace-separated words; every CJK codepoint is its own token.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceCjkTokenizer;

impl Tokenizer for WhitespaceCjkTokenizer {
    fn id(&self) -> &str {
        "whitespace-cjk"
    }

    fn token_spans(&self, text: &str) -> Vec<(usize, usize)> {
        let mut spans = Vec::new();
        let mut start: Option<usize> = None;
        for (i, c) in text.char_indices() {
            if c.is_whitespace() {
                if let Some(s) = start.take() {
                    spans.push((s, i));
                }
            } else if is_cjk(c) {
                if let Some(s) = start.take() {
                    spans.push((s, i));
                }
                spans.push((i, i + c.len_utf8()));
            } else if start.is_none() {
                start = Some(i);
            }
        }
        if let Some(s) = start {
            spans.push((s, text.len()));
        }
        spans
    }
}
