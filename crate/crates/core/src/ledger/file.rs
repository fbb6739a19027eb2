//! Newline-delimited ledger files: one JSON record per event with fields in
//! canonical order and digests as lowercase hex.

use std::fs;
use std::io::{self, BufRead, Write};
use std::path::Path;

use thiserror::Error;

use super::event::CustodyEvent;
use super::verify::{verify_chain, Verification};

#[derive(Debug, Error)]
pub enum LedgerFileError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub fn encode_line(event: &CustodyEvent) -> String {
    serde_json::to_string(event).expect("custody events always serialise")
}

pub fn write_events<W: Write, E: AsRef<CustodyEvent>>(mut out: W, events: &[E]) -> io::Result<()> {
    for e in events {
        out.write_all(encode_line(e.as_ref()).as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn to_string<E: AsRef<CustodyEvent>>(events: &[E]) -> String {
    let mut buf = Vec::new();
    write_events(&mut buf, events).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("JSON output is UTF-8")
}

pub fn save<E: AsRef<CustodyEvent>>(path: &Path, events: &[E]) -> io::Result<()> {
    let file = fs::File::create(path)?;
    write_events(io::BufWriter::new(file), events)
}

pub fn read_events<R: BufRead>(input: R) -> Result<Vec<CustodyEvent>, LedgerFileError> {
    let mut events = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event =
            serde_json::from_str(&line).map_err(|e| LedgerFileError::Parse { line: i + 1, message: e.to_string() })?;
        events.push(event);
    }
    Ok(events)
}

pub fn load(path: &Path) -> Result<Vec<CustodyEvent>, LedgerFileError> {
    let file = fs::File::open(path)?;
    read_events(io::BufReader::new(file))
}

/// Loads and verifies a ledger file.
pub fn verify_file(path: &Path) -> Result<Verification, LedgerFileError> {
    Ok(verify_chain(&load(path)?))
}
