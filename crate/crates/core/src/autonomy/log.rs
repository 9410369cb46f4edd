//! Append-only session log: one JSON record per line, the session
//! configuration first and then every event that was applied.

use serde::{Deserialize, Serialize};

use super::{Event, Session, SessionConfig, SessionError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum LogRecord {
    Create { config: Box<SessionConfig> },
    Event { event: Event },
}

#[derive(Debug, thiserror::Error)]
pub enum SessionLogError {
    #[error("line {line}: {source}")]
    Malformed { line: usize, source: serde_json::Error },
    #[error("log does not start with a create record")]
    MissingCreate,
    #[error("line {line}: {source}")]
    Diverged { line: usize, source: SessionError },
}

pub fn write_log_line(record: &LogRecord) -> String {
    let mut line = serde_json::to_string(record).expect("log records serialize");
    line.push('\n');
    line
}

/// Parse a log. A truncated final line (a crash mid-write) is ignored.
pub fn read_log(text: &str) -> Result<Vec<LogRecord>, SessionLogError> {
    let lines: Vec<&str> = text.lines().collect();
    let mut out = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(r) => out.push(r),
            Err(_) if i + 1 == lines.len() && !text.ends_with('\n') => break,
            Err(source) => return Err(SessionLogError::Malformed { line: i + 1, source }),
        }
    }
    Ok(out)
}

/// Rebuild a session by reapplying its log.
pub fn replay(records: &[LogRecord]) -> Result<Session, SessionLogError> {
    let mut iter = records.iter().enumerate();
    let mut session = match iter.next() {
        Some((_, LogRecord::Create { config })) => {
            Session::new((**config).clone()).map_err(|source| SessionLogError::Diverged { line: 1, source })?
        }
        _ => return Err(SessionLogError::MissingCreate),
    };
    for (i, record) in iter {
        match record {
            LogRecord::Event { event } => {
                session
                    .apply(event.clone())
                    .map_err(|source| SessionLogError::Diverged { line: i + 1, source })?;
            }
            LogRecord::Create { .. } => return Err(SessionLogError::MissingCreate),
        }
    }
    Ok(session)
}
