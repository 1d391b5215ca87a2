//! Read-disturbance shadow state.
//!
//! Every demand activation disturbs each row within the blast radius by one,
//! regardless of distance. A restoration of a row (preventive or periodic)
//! clears its disturbance. Partial restorations are counted until the next
//! full one, and the time since the last full restoration is bounded.

use std::fmt;

use crate::command::{CmdKind, Command, Restore};
use crate::dram::timing::Tick;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DisturbanceParams {
    /// A row that accumulates this many disturbances has flipped.
    pub nrh: u32,
    pub blast_radius: u32,
    /// Most consecutive partial restorations allowed, when partial restoration is in use.
    pub n_pcr: Option<u32>,
    /// Longest allowed gap between two full restorations of one row.
    pub full_restore_bound: Option<Tick>,
    pub ranks: usize,
    pub banks_per_rank: usize,
    pub rows_per_bank: u32,
    pub rows_per_ref: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DisturbanceKind {
    Threshold { count: u32 },
    ConsecutivePartials { count: u32 },
    StaleFullRestore { last_full: Tick },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DisturbanceViolation {
    pub tick: Tick,
    pub rank: usize,
    pub bank: usize,
    pub row: u32,
    pub kind: DisturbanceKind,
}

impl fmt::Display for DisturbanceViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "tick {} rank {} bank {} row {}: ", self.tick, self.rank, self.bank, self.row)?;
        match self.kind {
            DisturbanceKind::Threshold { count } => write!(f, "{count} disturbing activations without a refresh"),
            DisturbanceKind::ConsecutivePartials { count } => write!(f, "{count} consecutive partial restorations"),
            DisturbanceKind::StaleFullRestore { last_full } => write!(f, "no full restoration since tick {last_full}"),
        }
    }
}

/// Stored violations are capped; [`DisturbanceChecker::total`] keeps counting.
pub const MAX_REPORTED: usize = 1000;

#[derive(Debug, Clone)]
pub struct DisturbanceChecker {
    p: DisturbanceParams,
    disturb: Vec<u32>,
    partials: Vec<u32>,
    last_full: Vec<Tick>,
    stale_reported: Vec<bool>,
    violations: Vec<DisturbanceViolation>,
    total: u64,
    max_disturbance: u32,
}

impl DisturbanceChecker {
    pub fn new(p: DisturbanceParams) -> Self {
        let rows = p.ranks * p.banks_per_rank * p.rows_per_bank as usize;
        Self {
            p,
            disturb: vec![0; rows],
            partials: vec![0; rows],
            last_full: vec![0; rows],
            stale_reported: vec![false; rows],
            violations: Vec::new(),
            total: 0,
            max_disturbance: 0,
        }
    }

    pub fn params(&self) -> &DisturbanceParams {
        &self.p
    }

    pub fn violations(&self) -> &[DisturbanceViolation] {
        &self.violations
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Highest disturbance any row reached.
    pub fn max_disturbance(&self) -> u32 {
        self.max_disturbance
    }

    fn report(&mut self, v: DisturbanceViolation) {
        self.total += 1;
        if self.violations.len() < MAX_REPORTED {
            self.violations.push(v);
        }
    }

    fn index(&self, rank: usize, bank: usize, row: u32) -> Option<usize> {
        (rank < self.p.ranks && bank < self.p.banks_per_rank && row < self.p.rows_per_bank)
            .then(|| (rank * self.p.banks_per_rank + bank) * self.p.rows_per_bank as usize + row as usize)
    }

    fn restore(&mut self, tick: Tick, rank: usize, bank: usize, row: u32, restore: Option<Restore>) {
        let Some(i) = self.index(rank, bank, row) else { return };
        self.disturb[i] = 0;
        if let Some(bound) = self.p.full_restore_bound {
            if tick - self.last_full[i].min(tick) > bound && !self.stale_reported[i] {
                self.stale_reported[i] = true;
                let last_full = self.last_full[i];
                self.report(DisturbanceViolation { tick, rank, bank, row, kind: DisturbanceKind::StaleFullRestore { last_full } });
            }
        }
        match restore {
            Some(Restore::Partial) => {
                self.partials[i] += 1;
                let count = self.partials[i];
                if self.p.n_pcr.is_some_and(|n| count > n) {
                    self.report(DisturbanceViolation { tick, rank, bank, row, kind: DisturbanceKind::ConsecutivePartials { count } });
                }
            }
            _ => {
                self.partials[i] = 0;
                self.last_full[i] = tick;
                self.stale_reported[i] = false;
            }
        }
    }

    pub fn observe(&mut self, c: &Command) {
        let rank = c.rank as usize;
        let bank = c.bank as usize;
        match c.kind {
            CmdKind::Act => {
                let br = self.p.blast_radius;
                let lo = c.row.saturating_sub(br);
                let hi = c.row.saturating_add(br).min(self.p.rows_per_bank.saturating_sub(1));
                for row in lo..=hi {
                    if row == c.row {
                        continue;
                    }
                    let Some(i) = self.index(rank, bank, row) else { continue };
                    self.disturb[i] += 1;
                    let count = self.disturb[i];
                    self.max_disturbance = self.max_disturbance.max(count);
                    if count == self.p.nrh {
                        self.report(DisturbanceViolation { tick: c.tick, rank, bank, row, kind: DisturbanceKind::Threshold { count } });
                    }
                }
            }
            CmdKind::Vrr => self.restore(c.tick, rank, bank, c.row, c.restore),
            CmdKind::Ref => {
                for b in 0..self.p.banks_per_rank {
                    for row in c.row..c.row.saturating_add(self.p.rows_per_ref) {
                        self.restore(c.tick, rank, b, row, c.restore);
                    }
                }
            }
            _ => {}
        }
    }

    /// Applies the full-restoration bound to every row at the end of the log.
    pub fn finish(&mut self, end: Tick) {
        let Some(bound) = self.p.full_restore_bound else { return };
        if end <= bound {
            return;
        }
        let rows = self.p.rows_per_bank as usize;
        for i in 0..self.last_full.len() {
            if end - self.last_full[i].min(end) > bound && !self.stale_reported[i] {
                self.stale_reported[i] = true;
                let b = i / rows;
                let v = DisturbanceViolation {
                    tick: end,
                    rank: b / self.p.banks_per_rank,
                    bank: b % self.p.banks_per_rank,
                    row: (i % rows) as u32,
                    kind: DisturbanceKind::StaleFullRestore { last_full: self.last_full[i] },
                };
                self.report(v);
            }
        }
    }
}

pub fn check_disturbance<'a, I>(log: I, params: DisturbanceParams, end: Tick) -> Vec<DisturbanceViolation>
where
    I: IntoIterator<Item = &'a Command>,
{
    let mut c = DisturbanceChecker::new(params);
    for x in log {
        c.observe(x);
    }
    c.finish(end);
    c.violations
}
