//! Plain-text traces: one `<bubbles> <R|W> <hex-addr>` access per line.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::controller::ReqKind;
use crate::error::TraceError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceEntry {
    /// Non-memory instructions executed before this access.
    pub bubbles: u32,
    pub kind: ReqKind,
    pub addr: u64,
}

impl TraceEntry {
    pub fn read(bubbles: u32, addr: u64) -> Self {
        Self { bubbles, kind: ReqKind::Read, addr }
    }

    pub fn write(bubbles: u32, addr: u64) -> Self {
        Self { bubbles, kind: ReqKind::Write, addr }
    }

    pub fn parse(line: &str, line_no: u64) -> Result<Self, TraceError> {
        let err = |message: String| TraceError::Parse { line: line_no, message };
        let mut it = line.split_whitespace();
        let (Some(b), Some(k), Some(a), None) = (it.next(), it.next(), it.next(), it.next()) else {
            return Err(err(format!("expected `<bubbles> <R|W> <hex-addr>`, got `{line}`")));
        };
        let bubbles = b.parse().map_err(|_| err(format!("bad bubble count `{b}`")))?;
        let kind = match k {
            "R" | "r" => ReqKind::Read,
            "W" | "w" => ReqKind::Write,
            _ => return Err(err(format!("access kind must be R or W, got `{k}`"))),
        };
        let hex = a.strip_prefix("0x").or_else(|| a.strip_prefix("0X")).unwrap_or(a);
        let addr = u64::from_str_radix(hex, 16).map_err(|_| err(format!("bad address `{a}`")))?;
        Ok(Self { bubbles, kind, addr })
    }
}

impl std::fmt::Display for TraceEntry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let k = match self.kind {
            ReqKind::Read => 'R',
            ReqKind::Write => 'W',
        };
        write!(f, "{} {} {:#x}", self.bubbles, k, self.addr)
    }
}

/// Lazily parses a trace. Blank lines and `#` comments are skipped.
pub struct TraceReader<R: BufRead> {
    lines: std::io::Lines<R>,
    line_no: u64,
    path: String,
}

impl<R: BufRead> TraceReader<R> {
    pub fn new(reader: R) -> Self {
        Self { lines: reader.lines(), line_no: 0, path: "<trace>".into() }
    }
}

impl<R: BufRead> Iterator for TraceReader<R> {
    type Item = Result<TraceEntry, TraceError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = self.lines.next()?;
            self.line_no += 1;
            let line = match line {
                Ok(l) => l,
                Err(source) => return Some(Err(TraceError::Io { path: self.path.clone().into(), source })),
            };
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            return Some(TraceEntry::parse(t, self.line_no));
        }
    }
}

pub fn parse_trace(path: &Path) -> Result<TraceReader<BufReader<File>>, TraceError> {
    let f = File::open(path).map_err(|source| TraceError::Io { path: path.to_path_buf(), source })?;
    let mut r = TraceReader::new(BufReader::new(f));
    r.path = path.display().to_string();
    Ok(r)
}

pub fn load_trace(path: &Path) -> Result<Vec<TraceEntry>, TraceError> {
    parse_trace(path)?.collect()
}

pub fn write_trace<W: Write>(mut out: W, entries: &[TraceEntry]) -> std::io::Result<()> {
    for e in entries {
        writeln!(out, "{e}")?;
    }
    out.flush()
}

pub fn save_trace(path: &Path, entries: &[TraceEntry]) -> Result<(), TraceError> {
    let f = File::create(path).map_err(|source| TraceError::Io { path: path.to_path_buf(), source })?;
    write_trace(std::io::BufWriter::new(f), entries).map_err(|source| TraceError::Io { path: path.to_path_buf(), source })
}
