//! Append-only session logs, one JSON event per line.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use dreamspace_core::session::SessionEvent;

use crate::error::{Error, Result};

pub fn to_ndjson(events: &[SessionEvent]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&serde_json::to_string(e).expect("events serialize"));
        out.push('\n');
    }
    out
}

pub fn parse_ndjson(text: &str, path: &Path) -> Result<Vec<SessionEvent>> {
    let mut events = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let de = &mut serde_json::Deserializer::from_str(line);
        let event: SessionEvent = serde_path_to_error::deserialize(de).map_err(|e| Error::Malformed {
            path: path.to_path_buf(),
            field: format!("line {}: {}", n + 1, e.path()),
            message: e.inner().to_string(),
        })?;
        events.push(event);
    }
    Ok(events)
}

pub fn read_log(path: &Path) -> Result<Vec<SessionEvent>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut text = String::new();
    for line in BufReader::new(f).lines() {
        text.push_str(&line.map_err(|e| Error::io(path, e))?);
        text.push('\n');
    }
    parse_ndjson(&text, path)
}

pub fn write_log(path: &Path, events: &[SessionEvent]) -> Result<()> {
    fs::write(path, to_ndjson(events)).map_err(|e| Error::io(path, e))
}

/// Appends one event and flushes it to disk.
pub fn append_event(path: &Path, event: &SessionEvent) -> Result<()> {
    let mut f = fs::File::options()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut line = serde_json::to_vec(event).map_err(|e| Error::Internal(e.to_string()))?;
    line.push(b'\n');
    f.write_all(&line).map_err(|e| Error::io(path, e))?;
    f.sync_data().map_err(|e| Error::io(path, e))
}
