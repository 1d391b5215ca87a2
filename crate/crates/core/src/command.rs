//! DRAM commands as emitted by the controller, plus log sinks and the
//! `tick,cmd,rank,bank,row,latency_class` CSV format.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use crate::dram::timing::Tick;
use crate::error::LogError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmdKind {
    Act,
    Pre,
    Rd,
    Wr,
    Ref,
    Rfm,
    /// Victim-row refresh: an ACT/PRE pair restoring one row.
    Vrr,
}

impl CmdKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Act => "ACT",
            Self::Pre => "PRE",
            Self::Rd => "RD",
            Self::Wr => "WR",
            Self::Ref => "REF",
            Self::Rfm => "RFM",
            Self::Vrr => "VRR",
        }
    }
}

impl FromStr for CmdKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "ACT" => Self::Act,
            "PRE" => Self::Pre,
            "RD" => Self::Rd,
            "WR" => Self::Wr,
            "REF" => Self::Ref,
            "RFM" => Self::Rfm,
            "VRR" => Self::Vrr,
            other => return Err(format!("unknown command `{other}`")),
        })
    }
}

/// Charge-restoration latency of a refresh.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Restore {
    Full,
    Partial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Command {
    pub tick: Tick,
    pub kind: CmdKind,
    /// Rank index across all channels.
    pub rank: u16,
    /// Bank index inside the rank.
    pub bank: u16,
    /// Row for ACT/RD/WR/VRR, first refreshed row for REF, 0 otherwise.
    pub row: u32,
    /// Set for VRR and REF.
    pub restore: Option<Restore>,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let class = match self.restore {
            Some(Restore::Full) => "F",
            Some(Restore::Partial) => "P",
            None => "-",
        };
        write!(
            f,
            "{},{},{},{},{},{}",
            self.tick,
            self.kind.as_str(),
            self.rank,
            self.bank,
            self.row,
            class
        )
    }
}

pub const LOG_HEADER: &str = "tick,cmd,rank,bank,row,latency_class";

impl Command {
    pub fn parse_line(line: &str, line_no: u64) -> Result<Command, LogError> {
        let err = |message: String| LogError::Parse { line: line_no, message };
        let mut it = line.trim().split(',');
        let mut field = |name: &str| it.next().ok_or_else(|| err(format!("missing field `{name}`")));
        let tick = field("tick")?;
        let cmd = field("cmd")?;
        let rank = field("rank")?;
        let bank = field("bank")?;
        let row = field("row")?;
        let class = field("latency_class")?;
        if it.next().is_some() {
            return Err(err("too many fields".into()));
        }
        let num = |name: &str, s: &str| -> Result<u64, LogError> {
            s.parse::<u64>().map_err(|_| err(format!("{name}: `{s}` is not an integer")))
        };
        let restore = match class {
            "F" => Some(Restore::Full),
            "P" => Some(Restore::Partial),
            "-" => None,
            other => return Err(err(format!("latency_class: unknown `{other}`"))),
        };
        Ok(Command {
            tick: num("tick", tick)?,
            kind: cmd.parse().map_err(err)?,
            rank: u16::try_from(num("rank", rank)?).map_err(|_| err("rank out of range".into()))?,
            bank: u16::try_from(num("bank", bank)?).map_err(|_| err("bank out of range".into()))?,
            row: u32::try_from(num("row", row)?).map_err(|_| err("row out of range".into()))?,
            restore,
        })
    }
}

/// Receives every command the simulator issues, in issue order.
pub trait CommandSink {
    fn record(&mut self, cmd: &Command);

    fn finish(&mut self, _end: Tick) {}
}

impl CommandSink for Vec<Command> {
    fn record(&mut self, cmd: &Command) {
        self.push(*cmd);
    }
}

/// Discards commands.
pub struct NullSink;

impl CommandSink for NullSink {
    fn record(&mut self, _cmd: &Command) {}
}

/// Forwards every command to each inner sink.
pub struct Tee<'a> {
    pub sinks: Vec<&'a mut dyn CommandSink>,
}

impl CommandSink for Tee<'_> {
    fn record(&mut self, cmd: &Command) {
        for s in self.sinks.iter_mut() {
            s.record(cmd);
        }
    }

    fn finish(&mut self, end: Tick) {
        for s in self.sinks.iter_mut() {
            s.finish(end);
        }
    }
}

/// Streams commands to a CSV writer. IO errors are kept and reported by [`LogWriter::close`].
pub struct LogWriter<W: Write> {
    out: W,
    error: Option<std::io::Error>,
}

impl<W: Write> LogWriter<W> {
    pub fn new(mut out: W) -> Self {
        let error = writeln!(out, "{LOG_HEADER}").err();
        Self { out, error }
    }

    pub fn close(mut self) -> std::io::Result<W> {
        if let Some(e) = self.error.take() {
            return Err(e);
        }
        self.out.flush()?;
        Ok(self.out)
    }
}

impl LogWriter<BufWriter<File>> {
    pub fn create(path: &Path) -> Result<Self, LogError> {
        let f = File::create(path).map_err(|source| LogError::Io { path: path.to_path_buf(), source })?;
        Ok(Self::new(BufWriter::with_capacity(1 << 16, f)))
    }
}

impl<W: Write> CommandSink for LogWriter<W> {
    fn record(&mut self, cmd: &Command) {
        if self.error.is_none() {
            if let Err(e) = writeln!(self.out, "{cmd}") {
                self.error = Some(e);
            }
        }
    }
}

/// Lazily parses a command log.
pub struct LogReader<R: BufRead> {
    lines: std::io::Lines<R>,
    line_no: u64,
}

impl<R: BufRead> LogReader<R> {
    pub fn new(reader: R) -> Self {
        Self { lines: reader.lines(), line_no: 0 }
    }
}

impl LogReader<BufReader<File>> {
    pub fn open(path: &Path) -> Result<Self, LogError> {
        let f = File::open(path).map_err(|source| LogError::Io { path: path.to_path_buf(), source })?;
        Ok(Self::new(BufReader::with_capacity(1 << 16, f)))
    }
}

impl<R: BufRead> Iterator for LogReader<R> {
    type Item = Result<Command, LogError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = self.lines.next()?;
            self.line_no += 1;
            let line = match line {
                Ok(l) => l,
                Err(source) => {
                    return Some(Err(LogError::Io { path: "<command log>".into(), source }))
                }
            };
            let t = line.trim();
            if t.is_empty() || (self.line_no == 1 && t == LOG_HEADER) {
                continue;
            }
            return Some(Command::parse_line(t, self.line_no));
        }
    }
}

pub fn read_log<R: Read>(reader: R) -> Result<Vec<Command>, LogError> {
    LogReader::new(BufReader::new(reader)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let cmds = vec![
            Command { tick: 0, kind: CmdKind::Act, rank: 1, bank: 3, row: 99, restore: None },
            Command { tick: 44, kind: CmdKind::Vrr, rank: 0, bank: 15, row: 7, restore: Some(Restore::Partial) },
            Command { tick: 90, kind: CmdKind::Ref, rank: 0, bank: 0, row: 8, restore: Some(Restore::Full) },
        ];
        let mut w = LogWriter::new(Vec::new());
        for c in &cmds {
            w.record(c);
        }
        let bytes = w.close().unwrap();
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(text.starts_with("tick,cmd,rank,bank,row,latency_class\n0,ACT,1,3,99,-\n"));
        assert_eq!(read_log(&bytes[..]).unwrap(), cmds);
    }

    #[test]
    fn bad_line_reports_line_number() {
        let text = "tick,cmd,rank,bank,row,latency_class\n0,ACT,0,0,1,-\n5,XYZ,0,0,1,-\n";
        match read_log(text.as_bytes()) {
            Err(LogError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }
}
