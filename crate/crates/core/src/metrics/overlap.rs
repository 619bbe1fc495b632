//! BLEU-4 and averaged ROUGE-1/2/L over metric tokens.

use std::collections::HashMap;

use super::MetricsError;
use crate::text::is_cjk;

/// Lowercased alphanumeric runs; each CJK character is its own token. Punctuation is dropped.
pub fn metric_tokens(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in s.chars() {
        if is_cjk(c) && c.is_alphanumeric() {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            out.push(c.to_string());
        } else if c.is_alphanumeric() {
            cur.extend(c.to_lowercase());
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut m = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

/// Sentence BLEU-4 against one or more references: uniform weights, counts
/// clipped by the maximum reference count, the closest reference length for
/// the brevity penalty, and add-one smoothing for orders with no match.
pub fn bleu(candidate: &str, references: &[&str]) -> Result<f64, MetricsError> {
    let cand = metric_tokens(candidate);
    if cand.is_empty() {
        return Err(MetricsError::InvalidInput("BLEU candidate has no tokens".into()));
    }
    if references.is_empty() {
        return Err(MetricsError::InvalidInput("BLEU needs at least one reference".into()));
    }
    let refs: Vec<Vec<String>> = references.iter().map(|r| metric_tokens(r)).collect();
    let mut log_sum = 0.0;
    for n in 1..=4 {
        let cc = ngram_counts(&cand, n);
        let ref_counts: Vec<_> = refs.iter().map(|r| ngram_counts(r, n)).collect();
        let total: usize = cc.values().sum();
        let matched: usize = cc
            .iter()
            .map(|(g, &c)| c.min(ref_counts.iter().map(|rc| rc.get(g).copied().unwrap_or(0)).max().unwrap_or(0)))
            .sum();
        let p = if matched == 0 { 1.0 / (total as f64 + 1.0) } else { matched as f64 / total as f64 };
        log_sum += p.ln() / 4.0;
    }
    let c = cand.len();
    let r = refs
        .iter()
        .map(|t| t.len())
        .min_by_key(|&l| (l.abs_diff(c), l))
        .unwrap_or(0);
    let bp = if c > r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    Ok((bp * log_sum.exp()).clamp(0.0, 1.0))
}

fn f1(overlap: usize, cand: usize, reference: usize) -> f64 {
    if overlap == 0 {
        return 0.0;
    }
    let p = overlap as f64 / cand as f64;
    let r = overlap as f64 / reference as f64;
    2.0 * p * r / (p + r)
}

/// ROUGE-N F1. When neither side has an n-gram the score is 1 for identical
/// token sequences and 0 otherwise.
pub fn rouge_n(cand: &[String], reference: &[String], n: usize) -> f64 {
    let cc = ngram_counts(cand, n);
    let rc = ngram_counts(reference, n);
    let ct: usize = cc.values().sum();
    let rt: usize = rc.values().sum();
    if ct == 0 || rt == 0 {
        return if ct == 0 && rt == 0 && cand == reference { 1.0 } else { 0.0 };
    }
    let overlap: usize = cc.iter().map(|(g, &c)| c.min(rc.get(g).copied().unwrap_or(0))).sum();
    f1(overlap, ct, rt)
}

pub fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn rouge_l(cand: &[String], reference: &[String]) -> f64 {
    f1(lcs_len(cand, reference), cand.len(), reference.len())
}

/// Mean of ROUGE-1, ROUGE-2 and ROUGE-L F1.
pub fn rouge_s(candidate: &str, reference: &str) -> Result<f64, MetricsError> {
    let c = metric_tokens(candidate);
    let r = metric_tokens(reference);
    if c.is_empty() || r.is_empty() {
        return Err(MetricsError::InvalidInput("ROUGE needs non-empty candidate and reference".into()));
    }
    Ok((rouge_n(&c, &r, 1) + rouge_n(&c, &r, 2) + rouge_l(&c, &r)) / 3.0)
}
