//! Line-delimited JSON pool files.
//!
//! The first line is a header `{"schema_version":1}`; every following line
//! is one [`ModelRecord`]. Files are only ever appended to.

use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::record::{ModelRecord, RecordKey};
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    schema_version: u32,
}

fn header_line() -> String {
    serde_json::to_string(&Header {
        schema_version: SCHEMA_VERSION,
    })
    .unwrap()
}

fn file_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::File {
        path: path.to_path_buf(),
        source,
    }
}

/// Canonical file contents for `records`.
pub fn to_jsonl(records: &[ModelRecord]) -> String {
    let mut out = header_line();
    out.push('\n');
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    out
}

/// Writes a fresh pool file, replacing any existing one.
pub fn write_pool(path: &Path, records: &[ModelRecord]) -> Result<()> {
    std::fs::write(path, to_jsonl(records)).map_err(file_err(path))
}

/// Reads a pool file, failing on the first malformed line.
pub fn read_pool(path: &Path) -> Result<Vec<ModelRecord>> {
    let file = File::open(path).map_err(file_err(path))?;
    let mut lines = BufReader::new(file).lines().enumerate();
    match lines.next() {
        Some((_, line)) => check_header(&line.map_err(file_err(path))?)?,
        None => return Err(Error::Parse(format!("{}: missing schema header", path.display()))),
    }
    let mut records = Vec::new();
    for (i, line) in lines {
        let line = line.map_err(file_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let r = serde_json::from_str(&line).map_err(|e| Error::Parse(format!("{}:{}: {e}", path.display(), i + 1)))?;
        records.push(r);
    }
    Ok(records)
}

fn check_header(line: &str) -> Result<()> {
    let h: Header = serde_json::from_str(line).map_err(|e| Error::Parse(format!("bad schema header: {e}")))?;
    if h.schema_version != SCHEMA_VERSION {
        return Err(Error::Parse(format!(
            "unsupported schema version {} (expected {SCHEMA_VERSION})",
            h.schema_version
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RejectReason {
    BadComplexity,
    Duplicate,
    OutOfRangeError,
    MalformedLine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    /// 1-based line number in the ingested stream.
    pub line: usize,
    pub reason: RejectReason,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_id: Option<String>,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub accepted: usize,
    pub rejected: Vec<Rejection>,
}

/// An open pool file with its records and duplicate index.
#[derive(Debug)]
pub struct Pool {
    path: PathBuf,
    records: Vec<ModelRecord>,
    keys: HashSet<RecordKey>,
}

impl Pool {
    /// Opens `path`, creating an empty pool file if it does not exist.
    pub fn open(path: &Path) -> Result<Self> {
        if !path.exists() {
            write_pool(path, &[])?;
        }
        let records = read_pool(path)?;
        let keys = records.iter().map(ModelRecord::key).collect();
        Ok(Pool {
            path: path.to_path_buf(),
            records,
            keys,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn records(&self) -> &[ModelRecord] {
        &self.records
    }

    fn check(&self, r: &ModelRecord) -> std::result::Result<(), (RejectReason, String)> {
        if let Some(e) = r.error {
            if !(0.0..=100.0).contains(&e) {
                return Err((RejectReason::OutOfRangeError, format!("error {e} outside [0, 100]")));
            }
        }
        r.verify_complexity()
            .map_err(|e| (RejectReason::BadComplexity, e.to_string()))?;
        if self.keys.contains(&r.key()) {
            return Err((RejectReason::Duplicate, "same space, architecture and seed".into()));
        }
        Ok(())
    }

    /// Validates and appends records read line by line from `reader`.
    ///
    /// Bad lines are reported and skipped. A schema header line, if present,
    /// is checked and skipped. Accepted records are flushed to disk before
    /// returning.
    pub fn ingest<R: BufRead>(&mut self, reader: R) -> Result<IngestReport> {
        let mut parsed = Vec::new();
        let mut report = IngestReport::default();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if trimmed.contains("\"schema_version\"") {
                if let Err(e) = check_header(trimmed) {
                    report.rejected.push(Rejection {
                        line: i + 1,
                        reason: RejectReason::MalformedLine,
                        run_id: None,
                        detail: e.to_string(),
                    });
                }
                continue;
            }
            match serde_json::from_str::<ModelRecord>(trimmed) {
                Ok(r) => parsed.push((i + 1, r)),
                Err(e) => report.rejected.push(Rejection {
                    line: i + 1,
                    reason: RejectReason::MalformedLine,
                    run_id: None,
                    detail: e.to_string(),
                }),
            }
        }
        let more = self.ingest_records(parsed)?;
        report.accepted = more.accepted;
        report.rejected.extend(more.rejected);
        report.rejected.sort_by_key(|r| r.line);
        Ok(report)
    }

    /// Validates and appends already-parsed records, numbered for reporting.
    pub fn ingest_records(&mut self, records: impl IntoIterator<Item = (usize, ModelRecord)>) -> Result<IngestReport> {
        let mut report = IngestReport::default();
        let mut out = String::new();
        for (line, r) in records {
            match self.check(&r) {
                Ok(()) => {
                    out.push_str(&serde_json::to_string(&r)?);
                    out.push('\n');
                    self.keys.insert(r.key());
                    self.records.push(r);
                    report.accepted += 1;
                }
                Err((reason, detail)) => report.rejected.push(Rejection {
                    line,
                    reason,
                    run_id: Some(r.run_id.clone()),
                    detail,
                }),
            }
        }
        if !out.is_empty() {
            let mut f = OpenOptions::new()
                .append(true)
                .open(&self.path)
                .map_err(file_err(&self.path))?;
            f.write_all(out.as_bytes()).map_err(file_err(&self.path))?;
            f.sync_all().map_err(file_err(&self.path))?;
        }
        Ok(report)
    }
}
