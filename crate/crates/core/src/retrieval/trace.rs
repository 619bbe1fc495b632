//! Per-query record of consulted communities and client calls.

use std::time::Instant;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceStatus {
    Ok,
    Skipped,
    Fallback,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub stage: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub community_id: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub client_call_id: Option<u64>,
    pub duration_ms: f64,
    pub status: TraceStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
}

impl Trace {
    /// Community ids named anywhere in the trace, ascending and deduplicated.
    pub fn communities(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self.records.iter().filter_map(|r| r.community_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn client_calls(&self) -> usize {
        self.records.iter().filter(|r| r.client_call_id.is_some()).count()
    }
}

/// Collects records; call ids are assigned when the recorder is finished so
/// that records merged from parallel workers still get a stable numbering.
#[derive(Debug, Default)]
pub struct Recorder {
    deterministic: bool,
    records: Vec<(TraceRecord, bool)>,
}

impl Recorder {
    /// With `deterministic`, durations are recorded as zero so traces compare equal across runs.
    pub fn new(deterministic: bool) -> Self {
        Self { deterministic, records: Vec::new() }
    }

    pub fn child(&self) -> Recorder {
        Recorder::new(self.deterministic)
    }

    /// Times a client call and records its outcome.
    pub fn call<T, E: std::fmt::Display>(
        &mut self,
        stage: &str,
        community_id: Option<usize>,
        f: impl FnOnce() -> Result<T, E>,
    ) -> Result<T, E> {
        let start = Instant::now();
        let out = f();
        let duration_ms = if self.deterministic { 0.0 } else { start.elapsed().as_secs_f64() * 1e3 };
        let (status, detail) = match &out {
            Ok(_) => (TraceStatus::Ok, None),
            Err(e) => (TraceStatus::Failed, Some(e.to_string())),
        };
        self.records.push((
            TraceRecord { stage: stage.into(), community_id, client_call_id: None, duration_ms, status, detail },
            true,
        ));
        out
    }

    pub fn note(&mut self, stage: &str, community_id: Option<usize>, status: TraceStatus, detail: Option<String>) {
        self.records.push((
            TraceRecord { stage: stage.into(), community_id, client_call_id: None, duration_ms: 0.0, status, detail },
            false,
        ));
    }

    pub fn absorb(&mut self, other: Recorder) {
        self.records.extend(other.records);
    }

    pub fn finish(self) -> Trace {
        let mut next = 0u64;
        let records = self
            .records
            .into_iter()
            .map(|(mut r, is_call)| {
                if is_call {
                    r.client_call_id = Some(next);
                    next += 1;
                }
                r
            })
            .collect();
        Trace { records }
    }

    /// A snapshot of what has been recorded so far.
    pub fn snapshot(&self) -> Trace {
        Recorder { deterministic: self.deterministic, records: self.records.clone() }.finish()
    }
}
