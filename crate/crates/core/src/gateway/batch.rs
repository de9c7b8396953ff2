use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{ChatRequest, ChatResponse, Gateway};
use crate::parse::{parse_for, ParseError};
use crate::prompt::PromptJob;
use crate::record::{RecordError, ResponseRecord};

/// Destination for records; appends may come from several workers at once.
pub trait RecordSink: Send + Sync {
    fn append(&self, record: &ResponseRecord) -> io::Result<()>;
}

/// Append-only JSONL file, flushed after every line.
#[derive(Debug)]
pub struct JsonlSink {
    file: Mutex<File>,
}

impl JsonlSink {
    pub fn append_to(path: impl AsRef<Path>) -> io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(JsonlSink { file: Mutex::new(file) })
    }
}

impl RecordSink for JsonlSink {
    fn append(&self, record: &ResponseRecord) -> io::Result<()> {
        let mut line = serde_json::to_string(record).map_err(io::Error::other)?;
        line.push('\n');
        let mut f = self.file.lock().unwrap_or_else(|p| p.into_inner());
        f.write_all(line.as_bytes())?;
        f.flush()
    }
}

#[derive(Debug, Default)]
pub struct MemorySink {
    records: Mutex<Vec<ResponseRecord>>,
}

impl MemorySink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn into_records(self) -> Vec<ResponseRecord> {
        self.records.into_inner().unwrap_or_else(|p| p.into_inner())
    }

    pub fn len(&self) -> usize {
        self.records.lock().unwrap_or_else(|p| p.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl RecordSink for MemorySink {
    fn append(&self, record: &ResponseRecord) -> io::Result<()> {
        self.records.lock().unwrap_or_else(|p| p.into_inner()).push(record.clone());
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub succeeded: usize,
    pub failed: usize,
    pub skipped: usize,
}

fn fill_response(rec: &mut ResponseRecord, resp: &ChatResponse) {
    rec.raw_text = Some(resp.raw_text.clone());
    rec.attempt_count += resp.attempt_count;
    rec.backend_tag = resp.backend_tag.clone();
    rec.from_cache = resp.from_cache;
    rec.latency_ms += resp.latency_ms;
}

/// Runs one job to a record. Ambiguous replies get exactly one re-ask; every
/// other failure is recorded as-is.
pub fn execute_job(gateway: &Gateway, job: &PromptJob) -> ResponseRecord {
    let req = ChatRequest::for_job(gateway.spec(), job);
    let mut rec = ResponseRecord::for_job(job);
    rec.backend_tag = gateway.backend.tag().to_string();
    let first = match gateway.complete(job, &req) {
        Ok(resp) => resp,
        Err(e) => {
            rec.attempt_count = e.attempts();
            rec.error = Some(RecordError::RequestFailed);
            rec.error_detail = Some(e.to_string());
            return rec;
        }
    };
    fill_response(&mut rec, &first);
    let parsed = match parse_for(job.expected_answer_space, &first.raw_text) {
        Err(ParseError::Ambiguous) => {
            rec.reasked = true;
            rec.first_raw_text = Some(first.raw_text.clone());
            match gateway.reask(job, &req) {
                Ok(second) => {
                    fill_response(&mut rec, &second);
                    rec.from_cache = first.from_cache && second.from_cache;
                    parse_for(job.expected_answer_space, &second.raw_text)
                }
                Err(e) => {
                    rec.attempt_count += e.attempts();
                    rec.raw_text = None;
                    rec.error = Some(RecordError::RequestFailed);
                    rec.error_detail = Some(format!("re-ask after ambiguous reply: {e}"));
                    return rec;
                }
            }
        }
        other => other,
    };
    match parsed {
        Ok(p) => rec.set_parsed(&p),
        Err(e) => {
            rec.error = Some(e.into());
            rec.error_detail = Some(e.to_string());
        }
    }
    rec
}

/// Executes every job not in `completed`, with at most `concurrency` requests
/// in flight. A sink error stops the batch and is returned.
pub fn run_batch(
    gateway: &Gateway,
    jobs: &[PromptJob],
    sink: &dyn RecordSink,
    concurrency: usize,
    completed: &HashSet<String>,
) -> io::Result<BatchSummary> {
    let pending: Vec<&PromptJob> = jobs.iter().filter(|j| !completed.contains(&j.job_id)).collect();
    let skipped = jobs.len() - pending.len();
    let next = AtomicUsize::new(0);
    let succeeded = AtomicUsize::new(0);
    let failed = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let sink_error: Mutex<Option<io::Error>> = Mutex::new(None);
    let workers = concurrency.max(1).min(pending.len());

    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                if abort.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(job) = pending.get(i) else { break };
                let rec = execute_job(gateway, job);
                let ok = rec.is_success();
                if let Err(e) = sink.append(&rec) {
                    abort.store(true, Ordering::SeqCst);
                    sink_error.lock().unwrap_or_else(|p| p.into_inner()).get_or_insert(e);
                    break;
                }
                if ok {
                    succeeded.fetch_add(1, Ordering::SeqCst);
                } else {
                    log::warn!("job {} failed: {:?}", rec.job_id, rec.error);
                    failed.fetch_add(1, Ordering::SeqCst);
                }
            });
        }
    });

    if let Some(e) = sink_error.into_inner().unwrap_or_else(|p| p.into_inner()) {
        return Err(e);
    }
    Ok(BatchSummary { succeeded: succeeded.into_inner(), failed: failed.into_inner(), skipped })
}
