//! Command-level DRAM energy accounting.

use serde::{Deserialize, Serialize};

use crate::command::{CmdKind, Command, Restore};

/// Per-command energies in pJ and background power in pJ/ns (= mW).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnergyTable {
    /// Restoration energy of a nominal-length activation; scales with restoration time.
    pub act_pj: f64,
    pub pre_pj: f64,
    pub rd_pj: f64,
    pub wr_pj: f64,
    /// One all-bank REF at nominal tRFC.
    pub ref_pj: f64,
    pub background_pj_per_ns: f64,
}

impl Default for EnergyTable {
    fn default() -> Self {
        Self { act_pj: 1100.0, pre_pj: 450.0, rd_pj: 1300.0, wr_pj: 1400.0, ref_pj: 28_000.0, background_pj_per_ns: 160.0 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EnergyBreakdown {
    pub act: f64,
    pub pre: f64,
    pub rd: f64,
    pub wr: f64,
    pub refresh: f64,
    pub preventive: f64,
    pub background: f64,
}

impl EnergyBreakdown {
    pub fn total(&self) -> f64 {
        self.act + self.pre + self.rd + self.wr + self.refresh + self.preventive + self.background
    }
}

/// Accumulates energy from the command stream.
#[derive(Debug, Clone)]
pub struct EnergyModel {
    table: EnergyTable,
    /// Restoration fraction of a partial restore (reduced tRAS / nominal tRAS).
    partial_factor: f64,
    /// Fraction of nominal tRFC taken by a partial REF.
    partial_ref_factor: f64,
    acc: EnergyBreakdown,
}

impl EnergyModel {
    pub fn new(table: EnergyTable, partial_factor: f64, partial_ref_factor: f64) -> Self {
        Self { table, partial_factor, partial_ref_factor, acc: EnergyBreakdown::default() }
    }

    /// Energy of one command in pJ.
    pub fn account(&mut self, cmd: &Command) -> f64 {
        let t = &self.table;
        let restore = |r: Option<Restore>, f: f64| if r == Some(Restore::Partial) { f } else { 1.0 };
        let (slot, e) = match cmd.kind {
            CmdKind::Act => (&mut self.acc.act, t.act_pj),
            CmdKind::Pre => (&mut self.acc.pre, t.pre_pj),
            CmdKind::Rd => (&mut self.acc.rd, t.rd_pj),
            CmdKind::Wr => (&mut self.acc.wr, t.wr_pj),
            CmdKind::Ref => (&mut self.acc.refresh, t.ref_pj * restore(cmd.restore, self.partial_ref_factor)),
            CmdKind::Vrr => {
                (&mut self.acc.preventive, t.act_pj * restore(cmd.restore, self.partial_factor) + t.pre_pj)
            }
            CmdKind::Rfm => (&mut self.acc.preventive, 0.0),
        };
        *slot += e;
        e
    }

    /// Adds background energy for `ns` nanoseconds of elapsed time.
    pub fn finish(&mut self, ns: f64) {
        self.acc.background = self.table.background_pj_per_ns * ns;
    }

    pub fn breakdown(&self) -> EnergyBreakdown {
        self.acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cmd(kind: CmdKind, restore: Option<Restore>) -> Command {
        Command { tick: 0, kind, rank: 0, bank: 0, row: 0, restore }
    }

    #[test]
    fn idle_is_background_only() {
        let mut e = EnergyModel::new(EnergyTable::default(), 0.36, 0.36);
        e.finish(1000.0);
        assert_eq!(e.breakdown().total(), 160.0 * 1000.0);
    }

    #[test]
    fn partial_restore_scales_linearly() {
        let t = EnergyTable { pre_pj: 0.0, ..EnergyTable::default() };
        let mut e = EnergyModel::new(t, 0.36, 0.5);
        let full = e.account(&cmd(CmdKind::Vrr, Some(Restore::Full)));
        let part = e.account(&cmd(CmdKind::Vrr, Some(Restore::Partial)));
        assert!((part / full - 0.36).abs() < 1e-12);
        let rf = e.account(&cmd(CmdKind::Ref, Some(Restore::Full)));
        let rp = e.account(&cmd(CmdKind::Ref, Some(Restore::Partial)));
        assert_eq!(rp * 2.0, rf);
    }
}
