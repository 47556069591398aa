use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use super::{Result, SearchError};
use crate::labels::FigureLabel;

/// Repeats of the same event inside this window are dropped.
pub const DEDUP_WINDOW_HOURS: i64 = 24;

/// A user's proposed label for a figure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationEvent {
    pub figure_id: String,
    pub proposed_label: FigureLabel,
    pub timestamp: DateTime<Utc>,
    pub client_token: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Submission {
    /// False when the event repeated a recent one and was not written.
    pub appended: bool,
}

/// Parses a label a user may propose: one of the five types or `multichart`.
pub fn parse_proposed_label(s: &str) -> Result<FigureLabel> {
    match s.trim().to_ascii_lowercase().parse::<FigureLabel>() {
        Ok(l) if l.is_verifiable() => Ok(l),
        _ => Err(SearchError::BadRequest(format!("invalid label `{s}`"))),
    }
}

type Key = (String, String, FigureLabel);

struct LogState {
    sink: Option<File>,
    last_seen: HashMap<Key, DateTime<Utc>>,
    rows: usize,
}

/// Append-only JSON-lines log of verification events. A single mutex
/// serializes writers.
pub struct VerificationLog {
    path: Option<PathBuf>,
    state: Mutex<LogState>,
}

impl VerificationLog {
    /// Opens (creating if needed) the log at `path`, replaying existing rows
    /// for de-duplication.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut last_seen = HashMap::new();
        let mut rows = 0;
        if path.exists() {
            for (i, line) in BufReader::new(File::open(&path)?).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let e: VerificationEvent = serde_json::from_str(&line)
                    .map_err(|err| SearchError::BadRequest(format!("{}:{}: {err}", path.display(), i + 1)))?;
                remember(&mut last_seen, &e);
                rows += 1;
            }
        }
        let sink = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(VerificationLog { path: Some(path), state: Mutex::new(LogState { sink: Some(sink), last_seen, rows }) })
    }

    /// A log that keeps rows in memory only.
    pub fn in_memory() -> Self {
        VerificationLog { path: None, state: Mutex::new(LogState { sink: None, last_seen: HashMap::new(), rows: 0 }) }
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.state.lock().expect("log lock").rows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn append(&self, event: &VerificationEvent) -> Result<Submission> {
        let mut st = self.state.lock().expect("log lock");
        let key = (event.figure_id.clone(), event.client_token.clone(), event.proposed_label);
        if let Some(prev) = st.last_seen.get(&key) {
            if (event.timestamp - *prev).abs() < Duration::hours(DEDUP_WINDOW_HOURS) {
                return Ok(Submission { appended: false });
            }
        }
        if let Some(sink) = st.sink.as_mut() {
            let mut line = serde_json::to_string(event)?;
            line.push('\n');
            sink.write_all(line.as_bytes())?;
            sink.flush()?;
        }
        remember(&mut st.last_seen, event);
        st.rows += 1;
        Ok(Submission { appended: true })
    }
}

fn remember(seen: &mut HashMap<Key, DateTime<Utc>>, e: &VerificationEvent) {
    let key = (e.figure_id.clone(), e.client_token.clone(), e.proposed_label);
    let t = seen.entry(key).or_insert(e.timestamp);
    *t = (*t).max(e.timestamp);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn event(fig: &str, label: FigureLabel, token: &str, t: DateTime<Utc>) -> VerificationEvent {
        VerificationEvent { figure_id: fig.into(), proposed_label: label, timestamp: t, client_token: token.into() }
    }

    #[test]
    fn labels() {
        assert_eq!(parse_proposed_label("Diagram").unwrap(), FigureLabel::Diagram);
        assert_eq!(parse_proposed_label("multichart").unwrap(), FigureLabel::Multichart);
        assert!(matches!(parse_proposed_label("banana"), Err(SearchError::BadRequest(_))));
        assert!(matches!(parse_proposed_label("unclassified"), Err(SearchError::BadRequest(_))));
    }

    #[test]
    fn dedup_within_window() {
        let log = VerificationLog::in_memory();
        let t0 = Utc::now();
        assert!(log.append(&event("f", FigureLabel::Plot, "c", t0)).unwrap().appended);
        assert!(!log.append(&event("f", FigureLabel::Plot, "c", t0 + Duration::minutes(1))).unwrap().appended);
        assert!(log.append(&event("f", FigureLabel::Table, "c", t0)).unwrap().appended);
        assert!(log.append(&event("f", FigureLabel::Plot, "d", t0)).unwrap().appended);
        assert!(log.append(&event("f", FigureLabel::Plot, "c", t0 + Duration::hours(25))).unwrap().appended);
        assert_eq!(log.len(), 4);
    }

    #[test]
    fn persists_and_replays() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("verifications.jsonl");
        let t0 = Utc::now();
        {
            let log = VerificationLog::open(&path).unwrap();
            log.append(&event("f", FigureLabel::Photo, "c", t0)).unwrap();
        }
        let log = VerificationLog::open(&path).unwrap();
        assert_eq!(log.len(), 1);
        assert!(!log.append(&event("f", FigureLabel::Photo, "c", t0 + Duration::hours(1))).unwrap().appended);
        log.append(&event("g", FigureLabel::Photo, "c", t0)).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 2);
        let first: VerificationEvent = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(first.figure_id, "f");
    }
}
