//! Beam search over per-community candidate lists.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeamConfig {
    pub k: usize,
    pub beam_width: usize,
}

impl Default for BeamConfig {
    fn default() -> Self {
        Self { k: 2, beam_width: 4 }
    }
}

impl BeamConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.k == 0 {
            return Err("k must be at least 1".into());
        }
        if self.beam_width < self.k {
            return Err(format!("beam_width {} is smaller than k {}", self.beam_width, self.k));
        }
        Ok(())
    }
}

/// One candidate index per non-empty group, with the summed log score.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    /// `(group, candidate)` pairs in group order.
    pub picks: Vec<(usize, usize)>,
    pub joint_score: f64,
}

/// Higher score first; equal scores fall back to the lexicographically smaller picks.
pub fn selection_order(a: &Selection, b: &Selection) -> Ordering {
    b.joint_score.total_cmp(&a.joint_score).then_with(|| a.picks.cmp(&b.picks))
}

/// Top-`k` selections by joint log score. Each group keeps its best
/// `beam_width` candidates; after every group the beam is cut back to
/// `beam_width`. Because the joint score is additive this returns the same
/// selections as exhaustive enumeration whenever `beam_width ≥ k`.
///
/// `groups[g][i]` is the probability of candidate `i` in group `g`. Empty groups are skipped.
pub fn beam_search(groups: &[Vec<f64>], cfg: &BeamConfig) -> Result<Vec<Selection>, String> {
    cfg.validate()?;
    let mut beam = vec![Selection { picks: Vec::new(), joint_score: 0.0 }];
    for (g, scores) in groups.iter().enumerate() {
        if scores.is_empty() {
            continue;
        }
        let mut ranked: Vec<usize> = (0..scores.len()).collect();
        ranked.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        ranked.truncate(cfg.beam_width);
        let mut next = Vec::with_capacity(beam.len() * ranked.len());
        for s in &beam {
            for &i in &ranked {
                let mut picks = s.picks.clone();
                picks.push((g, i));
                next.push(Selection { picks, joint_score: s.joint_score + scores[i].ln() });
            }
        }
        next.sort_by(selection_order);
        next.truncate(cfg.beam_width);
        beam = next;
    }
    if beam.len() == 1 && beam[0].picks.is_empty() {
        return Ok(Vec::new());
    }
    beam.truncate(cfg.k);
    Ok(beam)
}
